"""Block-size tuning and strategy selection for irregular GEMM shapes.

Two computation-to-memory ratios (CMR, flops per transferred element)
govern each parallelization strategy: an outer ratio for the traffic
between DDR/GSM and the core, and an inner ratio for the per-core
working set in AM/SM.  The initial block search maximizes the smaller
of the two ratios over a discretized grid under the scratchpad
capacity limits, then keeps the K-dimension block as large as the
shared memory allows (bigger k blocks mean more reuse of the C tile
resident in AM).

At run time the strategy and blocks are adjusted to the actual shape:
tall M parallelizes over row blocks, deep K over depth blocks with a
cross-core reduction, and everything else falls back to the
traditional fixed-block implementation.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from math import ceil

import numpy as np

from .machine import MachineModel
from .microkernel import MicroKernelSpec, select_tiling

__all__ = [
    "MatrixShape",
    "BlockSizes",
    "Strategy",
    "ExecutionPlan",
    "PlanParams",
    "FeasibilityReport",
    "TGEMM_BLOCKS",
    "cmr_m_strategy",
    "cmr_k_strategy",
    "capacity_check",
    "initial_blocks",
    "adjust",
    "plan_for",
    "plan_flops",
]

FP32 = 4  # bytes per element

BLOCK_STEP = 32  # grid step for k/m blocks; n blocks step by the SIMD width


@dataclass(frozen=True)
class MatrixShape:
    M: int
    N: int
    K: int

    def __post_init__(self):
        if self.M < 1 or self.N < 1 or self.K < 1:
            raise ValueError(f"shape dimensions must be positive: {self}")

    @property
    def flops(self) -> int:
        return 2 * self.M * self.N * self.K


@dataclass(frozen=True)
class BlockSizes:
    """Blocking tuple; fields a strategy does not block on hold the loop extent."""

    m_g: int
    k_g: int
    n_g: int
    m_a: int
    k_a: int
    n_a: int
    m_s: int

    def __post_init__(self):
        for name in ("m_g", "k_g", "n_g", "m_a", "k_a", "n_a", "m_s"):
            if getattr(self, name) < 1:
                raise ValueError(f"block {name} must be positive")
        if self.n_a > 96:
            raise ValueError(f"n_a={self.n_a} exceeds 96")
        if self.m_s > self.m_a:
            raise ValueError(f"m_s={self.m_s} exceeds m_a={self.m_a}")
        if self.n_a > self.n_g:
            raise ValueError(f"n_a={self.n_a} exceeds n_g={self.n_g}")
        if self.k_a > self.k_g:
            raise ValueError(f"k_a={self.k_a} exceeds k_g={self.k_g}")


class Strategy(Enum):
    TGEMM = "tgemm"
    FTIMM_M = "ftimm-m"
    FTIMM_K = "ftimm-k"


# The traditional implementation's fixed single-precision blocks; B is
# always laid out 96 columns wide in AM regardless of the true N.
TGEMM_BLOCKS = BlockSizes(m_g=512, k_g=512, n_g=96, m_a=512, k_a=512, n_a=96, m_s=6)


@dataclass(frozen=True)
class ExecutionPlan:
    strategy: Strategy
    blocks: BlockSizes
    kernel: MicroKernelSpec
    num_cores: int


@dataclass(frozen=True)
class PlanParams:
    """Thresholds quantifying "large enough" for the irregular regimes.

    Defaults derive from the initial blocks: M must fill every core with
    a whole row block before M-parallelization pays, and K must span a
    few depth blocks before the reduction overhead of K-parallelization
    amortizes.
    """

    m_threshold: int | None = None
    k_threshold: int | None = None
    n_gate: int | None = None  # irregular guard: N <= n_gate


# --- CMR ---------------------------------------------------------------------


def cmr_m_strategy(blocks: BlockSizes, num_core: int) -> tuple[float, float]:
    """Outer/inner CMR of M-dimension parallelization.

    Outer: B block shared in GSM, per-core A streamed DDR->SM and C
    DDR->AM.  Inner: B/C tiles resident in AM, A streamed into SM.
    """
    m_a, k_g, n_g, k_a, n_a = blocks.m_a, blocks.k_g, blocks.n_g, blocks.k_a, blocks.n_a
    c = num_core
    f1 = (2 * m_a * k_g * n_g * c) / (c * m_a * (k_g + 2 * n_g) + k_g * n_g)
    f2 = (2 * m_a * k_a * n_a * c) / (c * m_a * (k_a + 2 * n_a) + k_a * n_a)
    return f1, f2


def cmr_k_strategy(blocks: BlockSizes, num_core: int) -> tuple[float, float]:
    """Outer/inner CMR of K-dimension parallelization (C cached in GSM)."""
    m_g, n_g, m_a, k_a, n_a = blocks.m_g, blocks.n_g, blocks.m_a, blocks.k_a, blocks.n_a
    c = num_core
    f3 = (2 * m_g * k_a * n_g * c) / (c * k_a * (m_g + n_g) + 2 * m_g * n_g)
    f4 = (2 * m_a * k_a * n_a * c) / (c * k_a * (m_a + n_a) + 2 * m_a * n_a)
    return f3, f4


# --- capacity ----------------------------------------------------------------


@dataclass(frozen=True)
class LevelUsage:
    level: str
    used_bytes: int
    capacity_bytes: int

    @property
    def ok(self) -> bool:
        return self.capacity_bytes == 0 or self.used_bytes <= self.capacity_bytes


@dataclass(frozen=True)
class FeasibilityReport:
    strategy: Strategy
    usage: tuple[LevelUsage, ...]

    @property
    def ok(self) -> bool:
        return all(u.ok for u in self.usage)

    def level(self, name: str) -> LevelUsage:
        for u in self.usage:
            if u.level == name:
                return u
        raise KeyError(name)


def capacity_check(
    strategy: Strategy, blocks: BlockSizes, model: MachineModel
) -> FeasibilityReport:
    """On-chip footprint of the buffers each strategy keeps resident.

    Double-buffered (ping-pong) tiles count twice: the B block in GSM
    and the per-core B tile in AM for M-parallelization, the A tile in
    SM everywhere, and the A block in GSM for the traditional path.
    """
    b = blocks
    if strategy is Strategy.FTIMM_M:
        gsm = 2 * b.k_g * b.n_g * FP32
        am = b.m_a * b.n_a * FP32 + 2 * b.k_a * b.n_a * FP32
        sm = 2 * b.m_s * b.k_a * FP32
    elif strategy is Strategy.FTIMM_K:
        gsm = b.m_g * b.n_g * FP32
        am = b.m_a * b.n_a * FP32 + 2 * b.k_a * b.n_a * FP32
        sm = 2 * b.m_s * b.k_a * FP32
    else:
        pad = TGEMM_BLOCKS.n_a  # fixed 96-wide layout regardless of true N
        gsm = 2 * b.m_g * b.k_g * FP32
        am = 2 * b.k_g * pad * FP32 + b.m_g * pad * FP32
        sm = 2 * b.m_s * b.k_g * FP32
    usage = (
        LevelUsage("GSM", gsm, model.capacity("GSM")),
        LevelUsage("AM", am, model.capacity("AM")),
        LevelUsage("SM", sm, model.capacity("SM")),
    )
    return FeasibilityReport(strategy=strategy, usage=usage)


# --- initial block search ------------------------------------------------------


def _floor_step(x: int, step: int = BLOCK_STEP) -> int:
    return (x // step) * step


def _round_up(x: int, step: int = BLOCK_STEP) -> int:
    return -(-x // step) * step


def _best_kernel_rows(n_a: int, model: MachineModel) -> int:
    """Largest m_s (capped at 16) the register file can unroll in one group."""
    for m_s in range(16, 5, -1):
        try:
            if select_tiling(m_s, n_a, model).m_u == m_s:
                return m_s
        except ValueError:
            continue
    return 6


def _elems(model: MachineModel, level: str) -> int:
    return model.capacity(level) // FP32


@lru_cache(maxsize=64)
def initial_blocks(strategy: Strategy, model: MachineModel) -> BlockSizes:
    """Grid search for the CMR-optimal initial blocks of one strategy.

    Candidates step by 32 (n blocks by the SIMD width), must fit GSM, AM
    and SM with double buffering, and must leave room for m_s >= 6.  The
    objective is lexicographic: first the smaller CMR of the pair, then
    the K-dimension block, then the outer CMR.  The inner ratio never
    exceeds the outer one (the outer tile dominates it elementwise), so
    maximizing the pair minimum means maximizing the inner ratio.
    """
    if strategy not in (Strategy.FTIMM_M, Strategy.FTIMM_K):
        raise ValueError("initial blocks exist for the irregular strategies only")

    gsm, am, sm = _elems(model, "GSM"), _elems(model, "AM"), _elems(model, "SM")
    V = model.core.simd_width_fp32
    nc = model.num_cores
    ka_sm_cap = sm // (2 * 6)  # leave room for at least m_s = 6

    best_key: tuple | None = None
    best: dict | None = None

    n_a_options = [n for n in range(V, 97, V)] or [min(96, V)]
    if strategy is Strategy.FTIMM_M:
        n_g_options = n_a_options
    else:
        n_g_max = _floor_step(int(gsm ** 0.5))
        n_g_options = list(range(V, max(n_g_max, V) + 1, V))

    for n_g in n_g_options:
        if strategy is Strategy.FTIMM_M:
            k_outer = _floor_step(gsm // (2 * n_g))
            if k_outer < BLOCK_STEP:
                continue
        else:
            m_outer = _floor_step(gsm // n_g)
            if m_outer < BLOCK_STEP:
                continue
        for n_a in n_a_options:
            if n_a > n_g:
                continue
            line = am // n_a  # m_a + 2 k_a must stay under this
            ka_max = min((line - BLOCK_STEP) // 2, ka_sm_cap)
            if strategy is Strategy.FTIMM_M:
                ka_max = min(ka_max, k_outer)
            ka_max = _floor_step(ka_max)
            ma_max = _floor_step(line - 2 * BLOCK_STEP)
            if strategy is Strategy.FTIMM_K:
                ma_max = min(ma_max, m_outer)
            if ka_max < BLOCK_STEP or ma_max < BLOCK_STEP:
                continue

            ma = np.arange(BLOCK_STEP, ma_max + 1, BLOCK_STEP, dtype=np.float64)
            ka = np.arange(BLOCK_STEP, ka_max + 1, BLOCK_STEP, dtype=np.float64)
            MA, KA = np.meshgrid(ma, ka, indexing="ij")
            feasible = (MA + 2 * KA) * n_a <= am
            if not feasible.any():
                continue

            if strategy is Strategy.FTIMM_M:
                f_in = (2 * MA * KA * n_a * nc) / (nc * MA * (KA + 2 * n_a) + KA * n_a)
                f_out = (2 * MA * k_outer * n_g * nc) / (
                    nc * MA * (k_outer + 2 * n_g) + k_outer * n_g)
                # tie-break priority: pair minimum, outer CMR, k_a, m_a
                sort_keys = (MA.ravel(), KA.ravel(), f_out.ravel())
            else:
                f_in = (2 * MA * KA * n_a * nc) / (nc * KA * (MA + n_a) + 2 * MA * n_a)
                f_out = (2 * m_outer * KA * n_g * nc) / (
                    nc * KA * (m_outer + n_g) + 2 * m_outer * n_g)
                # K blocks on k_a itself: prefer larger k_a before the outer CMR
                sort_keys = (MA.ravel(), f_out.ravel(), KA.ravel())

            f_min = np.minimum(f_in, f_out)
            f_min = np.where(feasible, f_min, -np.inf)
            order = np.lexsort(sort_keys + (f_min.ravel(),))
            pick = order[-1]
            i, j = np.unravel_index(pick, MA.shape)
            m_a, k_a = int(MA[i, j]), int(KA[i, j])
            key = (
                float(f_min[i, j]),
                float(k_a if strategy is Strategy.FTIMM_K else k_outer),
                float(f_out[i, j]),
                m_a, k_a, n_a, n_g,
            )
            if best_key is None or key > best_key:
                best_key = key
                best = {"m_a": m_a, "k_a": k_a, "n_a": n_a, "n_g": n_g}
                if strategy is Strategy.FTIMM_M:
                    best["k_g"] = k_outer
                else:
                    best["m_g"] = m_outer

    if best is None:
        raise ValueError("no feasible blocks under this machine model")

    m_s = min(
        best["m_a"],
        sm // (2 * best["k_a"]),
        _best_kernel_rows(best["n_a"], model),
    )
    m_s = max(m_s, 1)
    if strategy is Strategy.FTIMM_M:
        blocks = BlockSizes(
            m_g=best["m_a"], k_g=best["k_g"], n_g=best["n_g"],
            m_a=best["m_a"], k_a=best["k_a"], n_a=best["n_a"], m_s=m_s,
        )
    else:
        blocks = BlockSizes(
            m_g=best["m_g"], k_g=best["k_a"], n_g=best["n_g"],
            m_a=best["m_a"], k_a=best["k_a"], n_a=best["n_a"], m_s=m_s,
        )
    report = capacity_check(strategy, blocks, model)
    if not report.ok:
        raise AssertionError(f"search produced infeasible blocks: {report}")
    return blocks


# --- dynamic adjustment --------------------------------------------------------


def _resolve_params(model: MachineModel, params: PlanParams | None) -> tuple[int, int, int]:
    params = params or PlanParams()
    init_m = initial_blocks(Strategy.FTIMM_M, model)
    init_k = initial_blocks(Strategy.FTIMM_K, model)
    m_th = params.m_threshold or model.num_cores * init_m.m_a
    k_th = params.k_threshold or 4 * init_k.k_a
    n_gate = params.n_gate or max(init_m.n_a, init_k.n_a)
    return m_th, k_th, n_gate


def _blocks_ftimm_m(shape: MatrixShape, model: MachineModel) -> BlockSizes:
    init = initial_blocks(Strategy.FTIMM_M, model)
    M, N, K = shape.M, shape.N, shape.K
    gsm, am, sm = _elems(model, "GSM"), _elems(model, "AM"), _elems(model, "SM")
    nc = model.num_cores

    n_a = min(init.n_a, N)
    n_g = max(n_a, min(init.n_g, N))
    # k_g as large as the (now possibly narrower) GSM buffer allows.
    k_g = min(max(_floor_step(gsm // (2 * n_g)), 1), K)
    k_a = min(init.k_a, k_g)
    # Grow the parallelized dimension's block toward extent / cores.
    am_room = am // n_a - 2 * k_a
    m_a_cap = _floor_step(am_room) if am_room >= BLOCK_STEP else max(am_room, 1)
    m_a = min(max(BLOCK_STEP, _round_up(ceil(M / nc))), m_a_cap, M)
    m_a = max(m_a, 1)
    m_s = min(init.m_s, m_a)
    if M >= 6 * nc:
        m_s = max(m_s, 6)
    return BlockSizes(m_g=m_a, k_g=k_g, n_g=n_g, m_a=m_a, k_a=k_a, n_a=n_a, m_s=m_s)


def _blocks_ftimm_k(shape: MatrixShape, model: MachineModel) -> BlockSizes:
    init = initial_blocks(Strategy.FTIMM_K, model)
    M, N, K = shape.M, shape.N, shape.K
    am, sm = _elems(model, "AM"), _elems(model, "SM")
    nc = model.num_cores

    n_a = min(init.n_a, N)
    n_g = max(n_a, min(init.n_g, N))
    m_g = min(init.m_g, M)
    m_a = min(init.m_a, m_g)
    m_s = min(init.m_s, m_a)
    if M >= 6 * nc:
        m_s = max(m_s, 6)
    # Grow the depth block toward K / cores inside the AM and SM limits.
    am_room = (am // n_a - m_a) // 2
    sm_room = sm // (2 * m_s)
    k_a_cap = min(am_room, sm_room)
    k_a_cap = _floor_step(k_a_cap) if k_a_cap >= BLOCK_STEP else max(k_a_cap, 1)
    k_a = min(max(BLOCK_STEP, _round_up(ceil(K / nc))), k_a_cap, K)
    k_a = max(k_a, 1)
    return BlockSizes(m_g=m_g, k_g=K, n_g=n_g, m_a=m_a, k_a=k_a, n_a=n_a, m_s=m_s)


def _blocks_tgemm(shape: MatrixShape) -> BlockSizes:
    t = TGEMM_BLOCKS
    return BlockSizes(
        m_g=min(t.m_g, shape.M), k_g=min(t.k_g, shape.K), n_g=t.n_g,
        m_a=min(t.m_a, shape.M), k_a=min(t.k_a, shape.K), n_a=t.n_a,
        m_s=min(t.m_s, shape.M),
    )


def plan_for(
    shape: MatrixShape,
    model: MachineModel,
    strategy: Strategy,
    params: PlanParams | None = None,
) -> ExecutionPlan:
    """Build a capacity-checked plan for an explicitly chosen strategy."""
    if strategy is Strategy.FTIMM_M:
        blocks = _blocks_ftimm_m(shape, model)
    elif strategy is Strategy.FTIMM_K:
        blocks = _blocks_ftimm_k(shape, model)
    else:
        blocks = _blocks_tgemm(shape)
    report = capacity_check(strategy, blocks, model)
    if not report.ok:
        raise AssertionError(f"adjusted blocks do not fit on chip: {report}")
    kernel = select_tiling(blocks.m_s, blocks.n_a, model)
    return ExecutionPlan(strategy=strategy, blocks=blocks, kernel=kernel,
                         num_cores=model.num_cores)


def adjust(
    shape: MatrixShape,
    model: MachineModel,
    params: PlanParams | None = None,
) -> ExecutionPlan:
    """Pick strategy and blocks for a shape.

    Narrow N with tall M parallelizes over M; narrow N with modest M but
    deep K parallelizes over K (every core contributes a partial C tile);
    anything else is regular enough for the traditional path.
    """
    m_th, k_th, n_gate = _resolve_params(model, params)
    if shape.N <= n_gate and shape.M >= m_th:
        strategy = Strategy.FTIMM_M
    elif shape.N <= n_gate and shape.K >= k_th:
        strategy = Strategy.FTIMM_K
    else:
        strategy = Strategy.TGEMM
    return plan_for(shape, model, strategy, params)


def plan_flops(plan: ExecutionPlan, shape: MatrixShape) -> int:
    """Modeled multiply-add flops including padding-induced extra work."""
    if plan.strategy is Strategy.TGEMM:
        pad = TGEMM_BLOCKS.n_a
        n_padded = -(-shape.N // pad) * pad
        return 2 * shape.M * n_padded * shape.K
    return shape.flops
