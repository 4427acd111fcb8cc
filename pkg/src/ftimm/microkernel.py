"""Micro-kernel tiling selection and VLIW schedule generation/verification.

A micro-kernel multiplies an m_s x k_a tile of A (resident in SM) by a
k_a x n_a tile of B (resident in AM) into accumulator registers.  The
inner loop is tiled by (m_u, k_u): m_u rows are unrolled to hide FMAC
latency, and k_u > 1 splits the k stream into independent partial-sum
lanes that are reduced at the end.

The generator emits a software-pipelined steady-state loop body as a
cycle x unit grid in the style of a hand-written assembly pipeline:

* one k-block (k_u depth steps for all m_u rows) retires per body;
* the scalar chain that feeds the broadcasts for the NEXT k-block runs
  under the current block's FMACs (lead-1 pipelining);
* B vectors for the next block are loaded so they land exactly when the
  wrapped-around consumers need them;
* one loop branch per body sits on the control unit.

Broadcast bandwidth caps FMAC throughput: with two FP32 scalars
broadcast per cycle, n_a <= 32 (one vector group) can feed at most two
of the three FMAC units, which is where the 2/3 efficiency ceiling for
narrow kernels comes from.  The published pipeline for that regime
carries one FMAC-idle refill cycle per body, which the generator
reproduces.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from math import ceil

from .machine import MachineModel

__all__ = [
    "MicroKernelSpec",
    "Instr",
    "VliwSchedule",
    "CycleEstimate",
    "Issue",
    "SchedulingError",
    "InfeasibleSpecError",
    "UNITS",
    "SCALAR_UNITS",
    "VECTOR_UNITS",
    "FMAC_UNITS",
    "select_tiling",
    "generate_schedule",
    "verify_schedule",
    "estimate_cycles",
    "theoretical_upper_bound",
]

UNITS = (
    "ScalarLS1",
    "ScalarFMAC1",
    "ScalarFMAC2",
    "SIEU",
    "VectorLS1",
    "VectorLS2",
    "VectorFMAC1",
    "VectorFMAC2",
    "VectorFMAC3",
    "Control",
)

SCALAR_UNITS = frozenset({"ScalarLS1", "ScalarFMAC1", "ScalarFMAC2", "SIEU", "Control"})
VECTOR_UNITS = frozenset({"VectorLS1", "VectorLS2", "VectorFMAC1", "VectorFMAC2", "VectorFMAC3"})
FMAC_UNITS = ("VectorFMAC1", "VectorFMAC2", "VectorFMAC3")
VLS_UNITS = ("VectorLS1", "VectorLS2")

# Which unit(s) may issue each instruction kind.
_UNIT_FOR_TAG = {
    "SLDH": {"ScalarLS1"},
    "SLDW": {"ScalarLS1"},
    "SFEXTS32L": {"ScalarFMAC1"},
    "SBALE2H": {"SIEU"},
    "SVBCAST": {"ScalarFMAC2"},
    "SVBCAST2": {"ScalarFMAC2"},
    "VLDW": set(VLS_UNITS),
    "VLDDW": set(VLS_UNITS),
    "VFMULAS32": set(FMAC_UNITS),
    "SBR": {"Control"},
    "NOP": set(UNITS),
}

_BROADCAST_SCALARS = {"SVBCAST": 1, "SVBCAST2": 2}
_LOAD_REGISTERS = {"VLDW": 1, "VLDDW": 2}


class InfeasibleSpecError(ValueError):
    """No (m_u, k_u) tiling fits the register budget."""


class SchedulingError(RuntimeError):
    """The generator could not produce a hazard-free loop body."""


@dataclass(frozen=True)
class MicroKernelSpec:
    """Tiling parameters of one generated micro-kernel."""

    m_s: int  # rows of the A tile per call
    n_a: int  # columns of the B tile resident in AM (<= 96)
    k_a: int  # nominal depth per call
    m_u: int  # row-unroll tile
    k_u: int  # depth tile; > 1 adds partial-sum lanes reduced at the end
    v_n: int  # vector groups: ceil(n_a / V)

    def register_use(self) -> int:
        """Vector registers: accumulators + broadcast values + B vectors."""
        return self.k_u * self.m_u * self.v_n + self.m_u * self.k_u + self.k_u * self.v_n

    def check(self, model: MachineModel) -> None:
        core = model.core
        budget = core.vector_registers_per_vpe - core.reserved_vector_registers
        if not (1 <= self.n_a <= 96):
            raise ValueError(f"n_a={self.n_a} outside [1, 96]")
        if self.m_u < 1 or self.m_u > self.m_s:
            raise ValueError(f"m_u={self.m_u} outside [1, m_s={self.m_s}]")
        if self.k_u < 1 or self.k_u > max(self.k_a, 1):
            raise ValueError(f"k_u={self.k_u} outside [1, k_a={self.k_a}]")
        if self.v_n != -(-self.n_a // core.simd_width_fp32):
            raise ValueError(f"v_n={self.v_n} inconsistent with n_a={self.n_a}")
        if self.register_use() > budget:
            raise ValueError(
                f"register budget exceeded: {self.register_use()} > {budget}"
            )


def select_tiling(m_s: int, n_a: int, model: MachineModel) -> MicroKernelSpec:
    """Choose (m_u, k_u) for a given row count and B width.

    Wide kernels (n_a > 64) with enough rows to hide the FMAC latency
    run with k_u = 1 and the largest row unroll the register file
    allows.  Otherwise k_u grows past 1 so that m_u * k_u spans the
    FMAC latency, preferring the largest m_u that still admits k_u > 1.
    """
    if not (1 <= n_a <= 96):
        raise ValueError(f"n_a={n_a} outside [1, 96]")
    if m_s < 1:
        raise ValueError(f"m_s={m_s} must be positive")

    core = model.core
    V = core.simd_width_fp32
    v_n = -(-n_a // V)
    budget = core.vector_registers_per_vpe - core.reserved_vector_registers
    t_fma = model.latency.t_fma

    def fits(m_u: int, k_u: int) -> bool:
        return k_u * m_u * v_n + m_u * k_u + k_u * v_n <= budget

    def make(m_u: int, k_u: int) -> MicroKernelSpec:
        # k_a here is a nominal per-call depth; callers running other
        # depths pass the actual tile, the lanes/unroll stay valid.
        spec = MicroKernelSpec(m_s=m_s, n_a=n_a, k_a=max(k_u, 1), m_u=m_u, k_u=k_u, v_n=v_n)
        spec.check(model)
        return spec

    if m_s >= t_fma and n_a > 64:
        if fits(m_s, 1):
            return make(m_s, 1)
        for m_u in range(m_s - 1, 0, -1):
            if m_u >= t_fma and fits(m_u, 1):
                return make(m_u, 1)
        # register file too small for the wide regime; fall through to
        # the lane-split rule below

    # m_s below the FMAC latency, or a narrow B tile: split the k stream.
    for m_u in range(m_s, 0, -1):
        k_u = max(2, -(-t_fma // m_u))
        if m_u * k_u >= t_fma and fits(m_u, k_u):
            return make(m_u, k_u)
    for m_u in range(m_s, 0, -1):  # latency not fully hidden, but feasible
        if fits(m_u, 2):
            return make(m_u, 2)
    for m_u in range(m_s, 0, -1):
        if fits(m_u, 1):
            return make(m_u, 1)
    raise InfeasibleSpecError(
        f"no tiling fits {budget} registers for m_s={m_s}, n_a={n_a}"
    )


@dataclass(frozen=True)
class Instr:
    """One issued instruction in the steady-state body.

    ``lead`` counts how many loop bodies ahead the served k-block lies
    (software pipelining); register names are abstract ids, and
    ``serves`` carries the (mu, ku, nn) indices the instruction works for.
    """

    tag: str
    writes: tuple[str, ...] = ()
    reads: tuple[str, ...] = ()
    lead: int = 0
    serves: tuple[int, ...] = ()


@dataclass(frozen=True)
class VliwSchedule:
    """Steady-state loop body: cycles x units grid of instructions."""

    units: tuple[str, ...]
    steady_state: tuple[tuple[Instr | None, ...], ...]  # [cycle][unit]
    prologue_cycles: int
    epilogue_cycles: int
    iterations_covered: int  # (mu, ku) pairs retired per body

    @property
    def num_cycles(self) -> int:
        return len(self.steady_state)

    def instructions(self):
        """Yield (cycle, unit, instr) for every filled cell, 1-based cycles."""
        for c, row in enumerate(self.steady_state, start=1):
            for u, ins in enumerate(row):
                if ins is not None:
                    yield c, self.units[u], ins

    def unit_row(self, unit: str) -> tuple[Instr | None, ...]:
        idx = self.units.index(unit)
        return tuple(row[idx] for row in self.steady_state)

    def fmac_slots_filled(self) -> int:
        return sum(1 for _, _, ins in self.instructions() if ins.tag == "VFMULAS32")

    def to_rows(self) -> list[list[str]]:
        """Unit-major table of tags (empty string for idle cells)."""
        out = []
        for u, unit in enumerate(self.units):
            out.append([unit] + [
                (row[u].tag if row[u] is not None else "") for row in self.steady_state
            ])
        return out


@dataclass(frozen=True)
class Issue:
    kind: str
    message: str
    cycle: int | None = None
    unit: str | None = None


@dataclass(frozen=True)
class CycleEstimate:
    """Cycle model of one kernel call at a given depth."""

    cycles_per_k_iter: Fraction  # steady cycles to advance one k over all m_s rows
    fmac_efficiency: Fraction    # filled FMAC slots / (3 * body cycles)
    steady_cycles: int           # body cycles * bodies * row groups
    total_cycles: int            # prologue/epilogue/reduction/C-update included


def _chain_groups(m_u: int, k_u: int):
    """Scalar-load groups: pairs of adjacent k elements per row, plus an
    odd tail element when k_u is odd.  Each group feeds one broadcast."""
    groups = []
    for mu in range(m_u):
        ku = 0
        while ku < k_u:
            if ku + 1 < k_u:
                groups.append((mu, ku, ku + 1))
                ku += 2
            else:
                groups.append((mu, ku, None))
                ku += 1
    return groups


def _usable_fmac_units(k_u: int, v_n: int) -> int:
    # One broadcast instruction per cycle delivers 1 scalar (SVBCAST) or,
    # when adjacent k elements pair up (k_u >= 2), 2 scalars (SVBCAST2).
    # Each scalar feeds v_n FMACs, so that is the sustainable FMAC rate.
    scalars_per_cycle = 2 if k_u >= 2 else 1
    return max(1, min(3, scalars_per_cycle * v_n))


def _build_body(spec: MicroKernelSpec, model: MachineModel, length: int) -> VliwSchedule:
    m_u, k_u, v_n = spec.m_u, spec.k_u, spec.v_n
    lat = model.latency
    grid: list[list[Instr | None]] = [[None] * len(UNITS) for _ in range(length)]
    unit_index = {u: i for i, u in enumerate(UNITS)}

    def place(cycle: int, unit: str, ins: Instr) -> None:
        cell = grid[cycle - 1][unit_index[unit]]
        if cell is not None:
            raise SchedulingError(
                f"cannot place {ins.tag} at cycle {cycle} on {unit}: occupied by {cell.tag}"
            )
        grid[cycle - 1][unit_index[unit]] = ins

    # FMACs for the current k-block, (mu, ku, nn) in row-major group order,
    # packed onto as many FMAC units as the broadcast bandwidth can feed.
    usable = _usable_fmac_units(k_u, v_n)
    idx = 0
    for mu in range(m_u):
        for ku in range(k_u):
            for nn in range(v_n):
                cycle = idx // usable + 1
                unit = FMAC_UNITS[idx % usable]
                place(cycle, unit, Instr(
                    "VFMULAS32",
                    writes=(f"Vc[{mu},{ku},{nn}]",),
                    reads=(f"Va[{mu},{ku}]", f"Vb[{ku},{nn}]"),
                    lead=0,
                    serves=(mu, ku, nn),
                ))
                idx += 1

    # Scalar chain for the NEXT k-block (lead 1), one pipeline stage per
    # slot; slots past the body end wrap into the next body (lead drops).
    def slot_pos(slot: int) -> tuple[int, int]:
        if slot < length:
            return slot + 1, 1
        return slot - length + 1, 0

    for p, (mu, ku_lo, ku_hi) in enumerate(_chain_groups(m_u, k_u)):
        c_load, l_load = slot_pos(p)
        c_ext, l_ext = slot_pos(p + 1)
        c_bc, l_bc = slot_pos(p + 2)
        if ku_hi is not None:
            # 64-bit load brings two adjacent k elements of one A row.
            place(c_load, "ScalarLS1", Instr(
                "SLDW", writes=(f"R[{mu},{ku_lo}]",), lead=l_load, serves=(mu, ku_lo)))
            place(c_ext, "ScalarFMAC1", Instr(
                "SFEXTS32L", writes=(f"E[{mu},{ku_lo}]",),
                reads=(f"R[{mu},{ku_lo}]",), lead=l_ext, serves=(mu, ku_lo)))
            place(c_ext, "SIEU", Instr(
                "SBALE2H", writes=(f"E[{mu},{ku_hi}]",),
                reads=(f"R[{mu},{ku_lo}]",), lead=l_ext, serves=(mu, ku_hi)))
            place(c_bc, "ScalarFMAC2", Instr(
                "SVBCAST2",
                writes=(f"Va[{mu},{ku_lo}]", f"Va[{mu},{ku_hi}]"),
                reads=(f"E[{mu},{ku_lo}]", f"E[{mu},{ku_hi}]"),
                lead=l_bc, serves=(mu, ku_lo)))
        else:
            place(c_load, "ScalarLS1", Instr(
                "SLDH", writes=(f"R[{mu},{ku_lo}]",), lead=l_load, serves=(mu, ku_lo)))
            place(c_ext, "ScalarFMAC1", Instr(
                "SFEXTS32L", writes=(f"E[{mu},{ku_lo}]",),
                reads=(f"R[{mu},{ku_lo}]",), lead=l_ext, serves=(mu, ku_lo)))
            place(c_bc, "ScalarFMAC2", Instr(
                "SVBCAST", writes=(f"Va[{mu},{ku_lo}]",),
                reads=(f"E[{mu},{ku_lo}]",), lead=l_bc, serves=(mu, ku_lo)))

    # B vector loads: per k row, pair adjacent vector groups into VLDDW
    # (rows are contiguous in AM; groups from different rows are not).
    loads: list[Instr] = []
    for ku in range(k_u):
        nn = 0
        while nn < v_n:
            if nn + 1 < v_n:
                loads.append(Instr(
                    "VLDDW", writes=(f"Vb[{ku},{nn}]", f"Vb[{ku},{nn + 1}]"),
                    serves=(ku, nn)))
                nn += 2
            else:
                loads.append(Instr("VLDW", writes=(f"Vb[{ku},{nn}]",), serves=(ku, nn)))
                nn += 1
    n_load_cycles = -(-len(loads) // len(VLS_UNITS))
    deadline = length - lat.t_vldw + 1  # land exactly at the next body start
    if 1 <= deadline - n_load_cycles + 1:
        start, lead = deadline - n_load_cycles + 1, 1
    else:
        start, lead = 1, 2  # not enough room: double-buffer one body further out
        if n_load_cycles > length:
            raise SchedulingError("B-vector loads do not fit in the loop body")
    for i, ins in enumerate(loads):
        cycle = start + i // len(VLS_UNITS)
        unit = VLS_UNITS[i % len(VLS_UNITS)]
        place(cycle, unit, Instr(ins.tag, writes=ins.writes, lead=lead, serves=ins.serves))

    place(max(1, length - lat.t_sbr + 1), "Control", Instr("SBR"))

    return VliwSchedule(
        units=UNITS,
        steady_state=tuple(tuple(row) for row in grid),
        prologue_cycles=n_load_cycles + lat.t_vldw + 3,
        epilogue_cycles=lat.t_fma,
        iterations_covered=m_u * k_u,
    )


def generate_schedule(spec: MicroKernelSpec, model: MachineModel) -> VliwSchedule:
    """Build a verifier-clean steady-state body for the given tiling.

    The body length starts at the larger of the FMAC-slot demand (plus
    the refill bubble when broadcasts cannot feed all three units), the
    scalar-chain demand, and the latency floors, then grows until the
    structural verifier is satisfied.
    """
    spec.check(model)
    lat = model.latency
    m_u, k_u, v_n = spec.m_u, spec.k_u, spec.v_n
    usable = _usable_fmac_units(k_u, v_n)
    fmacs = m_u * k_u * v_n
    fmac_cycles = -(-fmacs // usable)
    bubble = 1 if usable < 3 else 0
    chain_cycles = len(_chain_groups(m_u, k_u))
    base = max(fmac_cycles + bubble, chain_cycles, lat.t_fma, lat.t_vldw, lat.t_sbr, 1)

    last_issues: list[Issue] = []
    for length in range(base, base + 16):
        body = _build_body(spec, model, length)
        last_issues = verify_schedule(body, spec, model)
        if not last_issues:
            return body
    raise SchedulingError(f"no clean body found: first issue: {last_issues[0]}")


_CHAIN_LATENCY = 1  # scalar load/extract/broadcast pipeline stages


def verify_schedule(
    sched: VliwSchedule, spec: MicroKernelSpec, model: MachineModel
) -> list[Issue]:
    """Structural checks; an empty list means the schedule is hazard-free.

    Dependencies are checked on an unrolled window of bodies so that
    software-pipelined wraparound (the ``lead`` annotations) is honored.
    """
    issues: list[Issue] = []
    core, lat = model.core, model.latency
    L = sched.num_cycles

    # Per-cycle structural limits.
    for c, row in enumerate(sched.steady_state, start=1):
        scalar = vector = bcast = load_bytes = 0
        for u, ins in enumerate(row):
            if ins is None:
                continue
            unit = sched.units[u]
            if unit not in _UNIT_FOR_TAG.get(ins.tag, set()):
                issues.append(Issue(
                    "unit", f"{ins.tag} cannot issue on {unit}", c, unit))
            if unit in SCALAR_UNITS:
                scalar += 1
            else:
                vector += 1
            bcast += _BROADCAST_SCALARS.get(ins.tag, 0)
            load_bytes += _LOAD_REGISTERS.get(ins.tag, 0) * core.simd_width_fp32 * 4
        if scalar > core.scalar_issue_width:
            issues.append(Issue(
                "issue-width", f"{scalar} scalar instructions exceed width "
                f"{core.scalar_issue_width}", c))
        if vector > core.vector_issue_width:
            issues.append(Issue(
                "issue-width", f"{vector} vector instructions exceed width "
                f"{core.vector_issue_width}", c))
        if bcast > core.broadcast_fp32_per_cycle:
            issues.append(Issue(
                "broadcast", f"broadcast throughput exceeded: {bcast} FP32 > "
                f"{core.broadcast_fp32_per_cycle}", c))
        if load_bytes > core.vector_load_bytes_per_cycle:
            issues.append(Issue(
                "load-bytes", f"vector load bytes {load_bytes} exceed "
                f"{core.vector_load_bytes_per_cycle}", c))

    # Loop control: exactly one branch, early enough before the body end.
    sbrs = [(c, ins) for c, unit, ins in sched.instructions()
            if ins.tag == "SBR" and unit == "Control"]
    if len(sbrs) != 1:
        issues.append(Issue("control", f"expected exactly 1 SBR, found {len(sbrs)}"))
    elif sbrs[0][0] > L - lat.t_sbr + 1:
        issues.append(Issue(
            "control", f"SBR at cycle {sbrs[0][0]} is closer than t_sbr={lat.t_sbr} "
            f"to the body end", sbrs[0][0]))

    # FMAC coverage: each (mu, ku, nn) exactly once per body.
    fmacs = [ins for _, _, ins in sched.instructions() if ins.tag == "VFMULAS32"]
    expected = {(mu, ku, nn) for mu in range(spec.m_u)
                for ku in range(spec.k_u) for nn in range(spec.v_n)}
    got = [ins.serves for ins in fmacs]
    if sorted(got) != sorted(expected):
        issues.append(Issue(
            "coverage", f"FMAC groups issued {len(got)} times, expected "
            f"{len(expected)} distinct (mu, ku, nn) slots"))

    # Unroll a window of bodies and time every register def/use.
    latency_of = {
        "SLDH": _CHAIN_LATENCY, "SLDW": _CHAIN_LATENCY,
        "SFEXTS32L": _CHAIN_LATENCY, "SBALE2H": _CHAIN_LATENCY,
        "SVBCAST": _CHAIN_LATENCY, "SVBCAST2": _CHAIN_LATENCY,
        "VLDW": lat.t_vldw, "VLDDW": lat.t_vldw,
    }
    window = 6
    ready: dict[tuple[str, int], int] = {}
    acc_writes: dict[str, list[int]] = {}
    consumers: list[tuple[int, Instr, int]] = []  # (abs cycle, instr, block)
    for body in range(window):
        for c, unit, ins in sched.instructions():
            abs_cycle = body * L + c
            block = body + ins.lead
            for reg in ins.writes:
                if ins.tag == "VFMULAS32":
                    acc_writes.setdefault(reg, []).append(abs_cycle)
                else:
                    ready[(reg, block)] = abs_cycle + latency_of.get(ins.tag, 1)
            if ins.reads:
                consumers.append((abs_cycle, ins, block))

    # Only interior bodies have all producers inside the window.
    lo, hi = 2 * L, (window - 1) * L
    for abs_cycle, ins, block in consumers:
        if not (lo < abs_cycle <= hi):
            continue
        for reg in ins.reads:
            when = ready.get((reg, block))
            if when is None:
                issues.append(Issue(
                    "dependency", f"{ins.tag} reads {reg} with no producer for "
                    f"its k-block", (abs_cycle - 1) % L + 1))
            elif abs_cycle < when:
                issues.append(Issue(
                    "dependency", f"{ins.tag} reads {reg} {when - abs_cycle} "
                    f"cycle(s) before it is ready", (abs_cycle - 1) % L + 1))

    for reg, times in acc_writes.items():
        times.sort()
        for a, b in zip(times, times[1:]):
            if lo < b <= hi and b - a < lat.t_fma:
                issues.append(Issue(
                    "accumulator", f"accumulator reuse hazard on {reg}: writes "
                    f"{b - a} < t_fma={lat.t_fma} cycles apart", (b - 1) % L + 1))
                break

    return issues


def estimate_cycles(sched: VliwSchedule, spec: MicroKernelSpec, k_a: int) -> CycleEstimate:
    """Cycle model for one kernel call of depth ``k_a``.

    The steady state retires one k-block (k_u depths x m_u rows) per
    body; a full call walks ceil(m_s / m_u) row groups, each paying the
    pipeline prologue/epilogue, the partial-sum reduction when k_u > 1,
    and the accumulator load/store against the C tile.
    """
    if k_a < 1:
        raise ValueError("k_a must be positive")
    L = sched.num_cycles
    m_u, k_u, v_n = spec.m_u, spec.k_u, spec.v_n

    filled = sched.fmac_slots_filled()
    eff = Fraction(filled, 3 * L)

    row_groups = -(-spec.m_s // m_u)
    bodies = -(-k_a // k_u)
    reduction = -(-(k_u - 1) * m_u * v_n // 3) if k_u > 1 else 0
    c_regs = m_u * v_n
    c_update = 2 * -(-c_regs // 4) + (-(-c_regs // 3) if k_u > 1 else 0)

    per_group = sched.prologue_cycles + bodies * L + sched.epilogue_cycles \
        + reduction + c_update
    return CycleEstimate(
        cycles_per_k_iter=Fraction(L * row_groups, k_u),
        fmac_efficiency=eff,
        steady_cycles=row_groups * bodies * L,
        total_cycles=row_groups * per_group,
    )


def theoretical_upper_bound(n_a: int) -> float:
    """FMAC-utilization ceiling by B-tile width.

    With one vector group (n_a <= 32) each broadcast feeds a single
    FMAC, and two broadcast scalars per cycle cap utilization at 2/3;
    wider tiles can keep all three units busy.
    """
    if not (1 <= n_a <= 96):
        raise ValueError(f"n_a={n_a} outside [1, 96]")
    return 1.0 if n_a > 32 else 2.0 / 3.0


@lru_cache(maxsize=4096)
def schedule_for(spec: MicroKernelSpec, model: MachineModel) -> VliwSchedule:
    """Cached generate_schedule; inputs are frozen dataclasses."""
    return generate_schedule(spec, model)
