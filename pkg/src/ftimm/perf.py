"""Analytic time model: trace bytes + kernel cycles -> modeled seconds.

Ping-pong buffering lets a DMA transfer hide behind the compute of the
previous iteration, so overlappable traffic and compute combine as a
maximum; everything the algorithms cannot overlap (first-iteration
loads, C tiles outside ping-pong levels, the cross-core reduction)
adds serially.  DDR bandwidth is shared by the whole cluster, so DDR
bytes pool cluster-wide; GSM-internal transfers ride the crossbar and
are charged per core.

All outputs are modeled quantities for the abstract machine; nothing
here claims to predict silicon.
"""

from __future__ import annotations

from dataclasses import dataclass

from .blocking import ExecutionPlan, MatrixShape, Strategy
from .engine import SimReport, run_auto, run_tgemm
from .machine import MachineModel, default_ftm7032

__all__ = [
    "TimeEstimate",
    "SweepRow",
    "estimate_time",
    "roofline",
    "speedup_table",
    "SWEEP_PRESETS",
    "preset_shapes",
]

GIGA = 1e9


@dataclass(frozen=True)
class TimeEstimate:
    compute_cycles: dict[int, int]      # per core
    compute_time_s: float               # critical path over cores
    dma_time_s: dict[str, float]        # "ddr" pooled, "gsm" worst core
    overlapped_time_s: float
    gflops: float
    efficiency: float                   # vs active cores at peak


def _dma_seconds(nbytes: int, events: int, bw_gbps: float, model: MachineModel) -> float:
    startup = events * model.latency.dma_startup_cycles / (model.core.clock_ghz * GIGA)
    return nbytes / (bw_gbps * GIGA) + startup


def estimate_time(report: SimReport, plan: ExecutionPlan | None,
                  model: MachineModel) -> TimeEstimate:
    """Combine the report's transfers and kernel cycles into wall time.

    Per core: compute runs against its overlappable GSM traffic, then
    its serial GSM traffic adds.  Cluster-wide: the slowest core runs
    against pooled overlappable DDR traffic, then serial DDR adds.
    """
    clock_hz = model.core.clock_ghz * GIGA
    lat = model.latency

    core_times = []
    for core, cycles in report.compute_cycles_per_core.items():
        compute = cycles / clock_hz
        gsm_ov = _dma_seconds(
            report.gsm_internal_bytes(core=core, overlappable=True),
            report.gsm_internal_events(core=core, overlappable=True),
            lat.dma_gsm_bandwidth_gbps, model)
        gsm_ser = _dma_seconds(
            report.gsm_internal_bytes(core=core, overlappable=False),
            report.gsm_internal_events(core=core, overlappable=False),
            lat.dma_gsm_bandwidth_gbps, model)
        core_times.append(max(compute, gsm_ov) + gsm_ser)
    compute_s = report.critical_path_cycles / clock_hz

    ddr_ov = _dma_seconds(report.ddr_bytes(overlappable=True),
                          report.ddr_events(overlappable=True),
                          lat.dma_ddr_bandwidth_gbps, model)
    ddr_ser = _dma_seconds(report.ddr_bytes(overlappable=False),
                           report.ddr_events(overlappable=False),
                           lat.dma_ddr_bandwidth_gbps, model)

    total = max(max(core_times, default=0.0), ddr_ov) + ddr_ser
    total = max(total, 1e-12)

    flops = report.shape.flops
    gflops = flops / total / GIGA
    active = max(report.active_cores, 1)
    efficiency = gflops / (active * model.core.peak_flops_per_core)
    return TimeEstimate(
        compute_cycles=dict(report.compute_cycles_per_core),
        compute_time_s=compute_s,
        dma_time_s={"ddr": ddr_ov + ddr_ser,
                    "gsm": _dma_seconds(report.gsm_internal_bytes(), 0,
                                        lat.dma_gsm_bandwidth_gbps, model)},
        overlapped_time_s=total,
        gflops=gflops,
        efficiency=efficiency,
    )


def roofline(shape: MatrixShape, model: MachineModel, num_cores: int) -> float:
    """GFlops ceiling: min(compute peak, arithmetic intensity x DDR bandwidth).

    The minimum DDR traffic of C += A x B reads A and B once and moves C
    twice, so intensity = 2MNK / (4 (MK + KN + 2MN)) flops per byte.
    """
    M, N, K = shape.M, shape.N, shape.K
    intensity = (2 * M * N * K) / (4 * (M * K + K * N + 2 * M * N))
    return min(num_cores * model.core.peak_flops_per_core,
               intensity * model.latency.dma_ddr_bandwidth_gbps)


@dataclass(frozen=True)
class SweepRow:
    shape: MatrixShape
    strategy: Strategy
    tgemm_time_s: float
    ftimm_time_s: float
    tgemm_gflops: float
    ftimm_gflops: float
    speedup: float
    roofline_gflops: float
    roofline_fraction: float


def speedup_table(shapes: list[MatrixShape], model: MachineModel | None = None
                  ) -> list[SweepRow]:
    """Model both engines per shape (trace-only; no numerics needed)."""
    model = model or default_ftm7032()
    if not shapes:
        raise ValueError("shape list must be non-empty")
    rows = []
    for shape in shapes:
        _, rep_t = run_tgemm(None, None, None, shape, model)
        est_t = estimate_time(rep_t, None, model)
        _, rep_f = run_auto(None, None, None, shape, model)
        est_f = estimate_time(rep_f, rep_f.plan, model)
        ceil_gf = roofline(shape, model, model.num_cores)
        rows.append(SweepRow(
            shape=shape,
            strategy=rep_f.strategy,
            tgemm_time_s=est_t.overlapped_time_s,
            ftimm_time_s=est_f.overlapped_time_s,
            tgemm_gflops=est_t.gflops,
            ftimm_gflops=est_f.gflops,
            speedup=est_t.overlapped_time_s / est_f.overlapped_time_s,
            roofline_gflops=ceil_gf,
            roofline_fraction=est_f.gflops / ceil_gf,
        ))
    return rows


def _grid(ms, ns, ks):
    return [MatrixShape(m, n, k) for m in ms for n in ns for k in ks]


# Shape grids of the published sweeps: a tall-M panel, a deep-K panel, a
# large-square panel, and three growth curves at N (and K or M) = 32.
SWEEP_PRESETS: dict[str, list[MatrixShape]] = {
    "fig5a": _grid([2**16], range(16, 97, 16), [32, 512]),
    "fig5b": _grid([32, 512], range(16, 97, 16), [2**16]),
    "fig5c": _grid([20480], range(16, 97, 16), [20480]),
    "fig5d": _grid([2**14, 2**16, 2**18, 2**20, 2**22], [32], [32]),
    "fig5e": _grid([32], [32], [2**14, 2**16, 2**18, 2**20, 2**22]),
    "fig5f": [MatrixShape(s, 32, s) for s in (4096, 8192, 12288, 16384, 20480)],
}
# aliases for the growth-curve panels
SWEEP_PRESETS["fig5-4"] = SWEEP_PRESETS["fig5d"]
SWEEP_PRESETS["fig5-5"] = SWEEP_PRESETS["fig5e"]
SWEEP_PRESETS["fig5-6"] = SWEEP_PRESETS["fig5f"]


def preset_shapes(name: str) -> list[MatrixShape]:
    try:
        return SWEEP_PRESETS[name]
    except KeyError:
        raise ValueError(
            f"unknown preset {name!r}; choose from "
            f"{sorted(set(SWEEP_PRESETS) - {'fig5-4', 'fig5-5', 'fig5-6'})}"
        ) from None
