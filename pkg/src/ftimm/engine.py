"""Functional execution of the blocked algorithms over simulated cores.

Each run walks the exact loop nest of one algorithm (traditional
fixed-block, M-parallel, or K-parallel), records a DMA event for every
tile transfer between memory levels, counts micro-kernel invocations
per core, and (when matrices are supplied) computes the numerically
faithful result:

* the traditional path folds k-blocks into the preloaded C tile in
  ascending order, bit-identical to the naive triple loop;
* the M-parallel path calls the lane kernel per depth block, adding
  each block's reduced partial sums into the C tile;
* the K-parallel path gives every core a private zero-initialized
  partial tile and reduces them into the original C tile in ascending
  core order, so results are deterministic for a fixed core count.

Cores are simulated sequentially in core-id order; all cross-core
interactions happen at the loop boundaries of the algorithms, so the
result and the trace never depend on host scheduling.  Passing
``None`` matrices runs trace-only (events and invocation counts
without numerics), which keeps large modeled shapes cheap.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blocking import (
    FP32,
    BlockSizes,
    ExecutionPlan,
    MatrixShape,
    PlanParams,
    Strategy,
    TGEMM_BLOCKS,
    adjust,
    capacity_check,
    plan_for,
)
from .kernels import ShapeError, exec_ftimm_kernel, exec_tgemm_kernel
from .machine import MachineModel, default_ftm7032
from .microkernel import estimate_cycles, schedule_for, select_tiling

__all__ = [
    "DmaEvent",
    "SimReport",
    "naive_gemm",
    "run_tgemm",
    "run_ftimm_m",
    "run_ftimm_k",
    "run_auto",
]

SHARED = "shared"  # core_id of cluster-wide transfers


@dataclass(frozen=True)
class DmaEvent:
    src_level: str
    dst_level: str
    bytes: int
    core_id: int | str
    phase_tag: tuple
    overlappable: bool  # a ping-pong pairing can hide it behind compute


class _Trace:
    """Accumulates DMA events; the full list is optional to bound memory."""

    def __init__(self, keep_events: bool):
        self.keep_events = keep_events
        self.events: list[DmaEvent] = []
        self.event_count = 0
        self.bytes_per_level: dict[str, int] = {}
        self.by_route: dict[tuple, list[int]] = {}  # (src,dst,core,ov) -> [bytes, n]

    def add(self, src, dst, nbytes, core, tag, overlappable):
        self.event_count += 1
        self.bytes_per_level[dst] = self.bytes_per_level.get(dst, 0) + nbytes
        key = (src, dst, core, overlappable)
        slot = self.by_route.setdefault(key, [0, 0])
        slot[0] += nbytes
        slot[1] += 1
        if self.keep_events:
            self.events.append(DmaEvent(src, dst, nbytes, core, tag, overlappable))


@dataclass
class SimReport:
    """Result metadata plus the modeled transfer/compute activity."""

    shape: MatrixShape
    strategy: Strategy
    plan: ExecutionPlan | None
    num_cores: int
    active_cores: int
    result_checksum: float | None
    dma_events: list[DmaEvent] | None
    dma_event_count: int
    bytes_per_level: dict[str, int]
    kernel_invocations: dict[int, dict[tuple, int]]  # core -> (spec, k) -> count
    compute_cycles_per_core: dict[int, int]
    footprint_bytes: dict[str, int]
    _routes: dict[tuple, list[int]] = field(default_factory=dict, repr=False)

    @property
    def critical_path_cycles(self) -> int:
        return max(self.compute_cycles_per_core.values(), default=0)

    def bytes_between(self, src=None, dst=None, core=None, overlappable=None) -> int:
        total = 0
        for (s, d, c, ov), (b, _) in self._routes.items():
            if src is not None and s != src:
                continue
            if dst is not None and d != dst:
                continue
            if core is not None and c != core:
                continue
            if overlappable is not None and ov != overlappable:
                continue
            total += b
        return total

    def events_between(self, src=None, dst=None, core=None, overlappable=None) -> int:
        total = 0
        for (s, d, c, ov), (_, n) in self._routes.items():
            if src is not None and s != src:
                continue
            if dst is not None and d != dst:
                continue
            if core is not None and c != core:
                continue
            if overlappable is not None and ov != overlappable:
                continue
            total += n
        return total

    def ddr_bytes(self, overlappable=None) -> int:
        return (self.bytes_between(src="DDR", overlappable=overlappable)
                + self.bytes_between(dst="DDR", overlappable=overlappable))

    def gsm_internal_bytes(self, core=None, overlappable=None) -> int:
        total = 0
        for (s, d, c, ov), (b, _) in self._routes.items():
            if "DDR" in (s, d):
                continue
            if core is not None and c != core:
                continue
            if overlappable is not None and ov != overlappable:
                continue
            total += b
        return total

    def gsm_internal_events(self, core=None, overlappable=None) -> int:
        total = 0
        for (s, d, c, ov), (_, n) in self._routes.items():
            if "DDR" in (s, d):
                continue
            if core is not None and c != core:
                continue
            if overlappable is not None and ov != overlappable:
                continue
            total += n
        return total

    def ddr_events(self, overlappable=None) -> int:
        return (self.events_between(src="DDR", overlappable=overlappable)
                + self.events_between(dst="DDR", overlappable=overlappable))


def _shape_of(A, B, C, shape):
    if shape is None:
        if A is None or B is None or C is None:
            raise ShapeError("trace-only runs need an explicit shape")
        shape = MatrixShape(M=A.shape[0], N=B.shape[1], K=A.shape[1])
    if A is not None:
        if A.shape != (shape.M, shape.K):
            raise ShapeError(f"A shape {A.shape} != {(shape.M, shape.K)}")
        if B.shape != (shape.K, shape.N):
            raise ShapeError(f"B shape {B.shape} != {(shape.K, shape.N)}")
        if C.shape != (shape.M, shape.N):
            raise ShapeError(f"C shape {C.shape} != {(shape.M, shape.N)}")
        for name, arr in (("A", A), ("B", B), ("C", C)):
            if arr.dtype != np.float32:
                raise ShapeError(f"{name} must be float32")
    return shape


def naive_gemm(A, B, C, shape=None):
    """Oracle: C += A x B as a triple loop with k innermost, FP32.

    Vectorized as one rank-1 update per k step, which performs the very
    same single-accumulator, ascending-k fold per output element.
    """
    shape = _shape_of(A, B, C, shape)
    for kk in range(shape.K):
        C += A[:, kk : kk + 1] * B[kk]
    return C


def _invoke(invocations, core, spec, depth):
    per_core = invocations.setdefault(core, {})
    key = (spec, depth)
    per_core[key] = per_core.get(key, 0) + 1


def _compute_cycles(invocations, model):
    cycles = {}
    for core, calls in invocations.items():
        total = 0
        for (spec, depth), count in calls.items():
            est = estimate_cycles(schedule_for(spec, model), spec, depth)
            total += est.total_cycles * count
        cycles[core] = total
    return cycles


def _report(shape, strategy, plan, model, trace, checksum, invocations, footprint):
    return SimReport(
        shape=shape,
        strategy=strategy,
        plan=plan,
        num_cores=model.num_cores,
        active_cores=len(invocations),
        result_checksum=checksum,
        dma_events=trace.events if trace.keep_events else None,
        dma_event_count=trace.event_count,
        bytes_per_level=dict(trace.bytes_per_level),
        kernel_invocations=invocations,
        compute_cycles_per_core=_compute_cycles(invocations, model),
        footprint_bytes=footprint,
        _routes=trace.by_route,
    )


def _footprint(strategy, blocks, model):
    rep = capacity_check(strategy, blocks, model)
    return {u.level: u.used_bytes for u in rep.usage}


def run_tgemm(A, B, C, shape=None, model=None, *, plan=None, keep_events=False):
    """Traditional fixed-block path (N-dimension parallelization).

    B tiles are stored in AM with the fixed 96-column layout, so their
    DMA traffic is the same however narrow the true N is; C tiles move
    with their true width.  Column blocks go round-robin over cores.
    """
    model = model or default_ftm7032()
    shape = _shape_of(A, B, C, shape)
    M, N, K = shape.M, shape.N, shape.K
    b = TGEMM_BLOCKS
    pad = b.n_a
    m_g, k_g, m_s = min(b.m_g, M), min(b.k_g, K), min(b.m_s, M)
    nc = model.num_cores
    trace = _Trace(keep_events)
    invocations: dict[int, dict] = {}
    numeric = A is not None

    for i in range(0, M, m_g):
        mb = min(m_g, M - i)
        for j_idx, j in enumerate(range(0, K, k_g)):
            kb = min(k_g, K - j)
            trace.add("DDR", "GSM", mb * kb * FP32, SHARED, ("A_g", i, j), j_idx > 0)
            for t_idx, t in enumerate(range(0, N, pad)):
                nb = min(pad, N - t)
                core = t_idx % nc
                later = t_idx // nc > 0  # ping-pong hides the core's 2nd+ block
                trace.add("DDR", "AM", kb * pad * FP32, core, ("B_a", j, t), later)
                trace.add("DDR", "AM", mb * nb * FP32, core, ("C_in", i, t), later)
                for ii in range(0, mb, m_s):
                    msb = min(m_s, mb - ii)
                    trace.add("GSM", "SM", msb * kb * FP32, core,
                              ("A_s", i, j, t, ii), ii > 0)
                    _invoke(invocations, core, select_tiling(msb, pad, model), kb)
                if numeric:
                    exec_tgemm_kernel(
                        A[i : i + mb, j : j + kb],
                        B[j : j + kb, t : t + nb],
                        C[i : i + mb, t : t + nb],
                    )
                trace.add("AM", "DDR", mb * nb * FP32, core, ("C_out", i, t),
                          t_idx + nc < -(-N // pad))
    blocks = BlockSizes(m_g=m_g, k_g=k_g, n_g=pad, m_a=m_g, k_a=k_g, n_a=pad,
                        m_s=m_s)
    checksum = float(np.sum(C, dtype=np.float64)) if numeric else None
    return C, _report(shape, Strategy.TGEMM, plan, model, trace, checksum,
                      invocations, _footprint(Strategy.TGEMM, blocks, model))


def run_ftimm_m(A, B, C, shape=None, plan=None, model=None, *, keep_events=False):
    """M-dimension parallelization: row blocks round-robin over cores,
    the B block shared in GSM, per-core A/C streamed from DDR."""
    model = model or default_ftm7032()
    shape = _shape_of(A, B, C, shape)
    if plan is None:
        plan = plan_for(shape, model, Strategy.FTIMM_M)
    if plan.strategy is not Strategy.FTIMM_M:
        raise ValueError(f"plan strategy {plan.strategy} is not FTIMM_M")
    M, N, K = shape.M, shape.N, shape.K
    b = plan.blocks
    nc = model.num_cores
    trace = _Trace(keep_events)
    invocations: dict[int, dict] = {}
    numeric = A is not None

    for i in range(0, N, b.n_g):
        nbg = min(b.n_g, N - i)
        for j_idx, j in enumerate(range(0, K, b.k_g)):
            kbg = min(b.k_g, K - j)
            trace.add("DDR", "GSM", kbg * nbg * FP32, SHARED, ("B_g", i, j), j_idx > 0)
            for t_idx, t in enumerate(range(0, M, b.m_a)):
                mb = min(b.m_a, M - t)
                core = t_idx % nc
                for ii in range(0, nbg, b.n_a):
                    nab = min(b.n_a, nbg - ii)
                    trace.add("DDR", "AM", mb * nab * FP32, core,
                              ("C_in", t, i + ii), False)
                    for jj_idx, jj in enumerate(range(0, kbg, b.k_a)):
                        kab = min(b.k_a, kbg - jj)
                        trace.add("GSM", "AM", kab * nab * FP32, core,
                                  ("B_a", jj, i + ii), jj_idx > 0)
                        for tt in range(0, mb, b.m_s):
                            msb = min(b.m_s, mb - tt)
                            trace.add("DDR", "SM", msb * kab * FP32, core,
                                      ("A_s", t + tt, j + jj),
                                      not (jj_idx == 0 and tt == 0))
                            _invoke(invocations, core,
                                    select_tiling(msb, nab, model), kab)
                        if numeric:
                            exec_ftimm_kernel(
                                A[t : t + mb, j + jj : j + jj + kab],
                                B[j + jj : j + jj + kab, i + ii : i + ii + nab],
                                C[t : t + mb, i + ii : i + ii + nab],
                                plan.kernel,
                            )
                    trace.add("AM", "DDR", mb * nab * FP32, core,
                              ("C_out", t, i + ii), False)
    checksum = float(np.sum(C, dtype=np.float64)) if numeric else None
    return C, _report(shape, Strategy.FTIMM_M, plan, model, trace, checksum,
                      invocations, _footprint(Strategy.FTIMM_M, b, model))


def run_ftimm_k(A, B, C, shape=None, plan=None, model=None, *, keep_events=False):
    """K-dimension parallelization: depth blocks round-robin over cores,
    private partial C tiles reduced through GSM in ascending core order."""
    model = model or default_ftm7032()
    shape = _shape_of(A, B, C, shape)
    if plan is None:
        plan = plan_for(shape, model, Strategy.FTIMM_K)
    if plan.strategy is not Strategy.FTIMM_K:
        raise ValueError(f"plan strategy {plan.strategy} is not FTIMM_K")
    M, N, K = shape.M, shape.N, shape.K
    b = plan.blocks
    nc = model.num_cores
    trace = _Trace(keep_events)
    invocations: dict[int, dict] = {}
    numeric = A is not None

    for i in range(0, M, b.m_g):
        mbg = min(b.m_g, M - i)
        for j in range(0, N, b.n_g):
            nbg = min(b.n_g, N - j)
            trace.add("DDR", "GSM", mbg * nbg * FP32, SHARED, ("C_g", i, j), False)
            for ii in range(0, mbg, b.m_a):
                mab = min(b.m_a, mbg - ii)
                for jj in range(0, nbg, b.n_a):
                    nab = min(b.n_a, nbg - jj)
                    partials: dict[int, np.ndarray] = {}
                    seen: set[int] = set()
                    for t_idx, t in enumerate(range(0, K, b.k_a)):
                        kab = min(b.k_a, K - t)
                        core = t_idx % nc
                        first = core not in seen
                        seen.add(core)
                        trace.add("DDR", "AM", kab * nab * FP32, core,
                                  ("B_a", t, j + jj), not first)
                        for u in range(0, mab, b.m_s):
                            msb = min(b.m_s, mab - u)
                            trace.add("DDR", "SM", msb * kab * FP32, core,
                                      ("A_s", i + ii + u, t),
                                      not (first and u == 0))
                            _invoke(invocations, core,
                                    select_tiling(msb, nab, model), kab)
                        if numeric:
                            acc = partials.get(core)
                            if acc is None:
                                acc = partials[core] = np.zeros(
                                    (mab, nab), dtype=np.float32)
                            exec_ftimm_kernel(
                                A[i + ii : i + ii + mab, t : t + kab],
                                B[t : t + kab, j + jj : j + jj + nab],
                                acc,
                                plan.kernel,
                            )
                    actives = sorted(seen)
                    for core in actives[1:]:
                        trace.add("AM", "GSM", mab * nab * FP32, core,
                                  ("reduce", i + ii, j + jj), False)
                    if numeric:
                        view = C[i + ii : i + ii + mab, j + jj : j + jj + nab]
                        for core in actives:
                            view += partials[core]
                    trace.add("GSM", "DDR", mab * nab * FP32, SHARED,
                              ("C_out", i + ii, j + jj), False)
    checksum = float(np.sum(C, dtype=np.float64)) if numeric else None
    return C, _report(shape, Strategy.FTIMM_K, plan, model, trace, checksum,
                      invocations, _footprint(Strategy.FTIMM_K, b, model))


def run_auto(A, B, C, shape=None, model=None, params: PlanParams | None = None,
             *, keep_events=False):
    """Pick the strategy from the shape, then dispatch."""
    model = model or default_ftm7032()
    shape = _shape_of(A, B, C, shape)
    plan = adjust(shape, model, params)
    if plan.strategy is Strategy.FTIMM_M:
        return run_ftimm_m(A, B, C, shape, plan, model, keep_events=keep_events)
    if plan.strategy is Strategy.FTIMM_K:
        return run_ftimm_k(A, B, C, shape, plan, model, keep_events=keep_events)
    return run_tgemm(A, B, C, shape, model, plan=plan, keep_events=keep_events)
