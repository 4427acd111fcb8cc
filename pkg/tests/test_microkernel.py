import dataclasses
from fractions import Fraction
from math import ceil

import pytest

from ftimm.machine import default_ftm7032
from ftimm.microkernel import (
    FMAC_UNITS,
    UNITS,
    Instr,
    VliwSchedule,
    estimate_cycles,
    generate_schedule,
    select_tiling,
    theoretical_upper_bound,
    verify_schedule,
)

GRID_MS = range(1, 17)
GRID_NA = range(8, 97, 8)


# --- independent oracle for tiling selection ---------------------------------
# Enumerates every (m_u, k_u) pair under the register budget and applies
# the selection rules declaratively over that candidate set.

def oracle_tiling(m_s, n_a, model):
    core = model.core
    v_n = ceil(n_a / core.simd_width_fp32)
    budget = core.vector_registers_per_vpe - core.reserved_vector_registers
    t_fma = model.latency.t_fma
    feasible = {
        (mu, ku)
        for mu in range(1, m_s + 1)
        for ku in range(1, 65)
        if ku * mu * v_n + mu * ku + ku * v_n <= budget
    }
    if m_s >= t_fma and n_a > 64:
        wide = [mu for (mu, ku) in feasible if ku == 1 and mu >= t_fma]
        if wide:
            return max(wide), 1
    lane = [(mu, ku) for (mu, ku) in feasible if ku > 1 and mu * ku >= t_fma
            and ku == max(2, ceil(t_fma / mu))]
    if lane:
        mu = max(mu for mu, _ in lane)
        return mu, min(ku for m, ku in lane if m == mu)
    relaxed = [(mu, ku) for (mu, ku) in feasible if ku > 1]
    if relaxed:
        mu = max(mu for mu, _ in relaxed)
        return mu, min(ku for m, ku in relaxed if m == mu)
    mu = max(mu for mu, ku in feasible if ku == 1)
    return mu, 1


@pytest.mark.parametrize("m_s,n_a,want", [
    (6, 96, (6, 1)),   # rows span the FMAC latency, wide B: no lane split
    (6, 64, (6, 2)),   # narrow B: smallest k_u > 1 with m_u * k_u >= t_fma
    (1, 96, (1, 6)),   # single row: depth lanes hide the latency alone
])
def test_select_tiling_examples(model, m_s, n_a, want):
    spec = select_tiling(m_s, n_a, model)
    assert (spec.m_u, spec.k_u) == want
    assert want == oracle_tiling(m_s, n_a, model)


def test_select_tiling_example_register_use(model):
    spec = select_tiling(6, 64, model)
    assert spec.register_use() == 40  # 2*6*2 + 6*2 + 2*2


def test_select_tiling_matches_oracle_on_grid(model):
    for m_s in GRID_MS:
        for n_a in GRID_NA:
            spec = select_tiling(m_s, n_a, model)
            assert (spec.m_u, spec.k_u) == oracle_tiling(m_s, n_a, model), (m_s, n_a)


def test_select_tiling_respects_budget_on_grid(model):
    budget = (model.core.vector_registers_per_vpe
              - model.core.reserved_vector_registers)
    for m_s in GRID_MS:
        for n_a in GRID_NA:
            assert select_tiling(m_s, n_a, model).register_use() <= budget


def test_select_tiling_rejects_out_of_range(model):
    with pytest.raises(ValueError):
        select_tiling(6, 97, model)
    with pytest.raises(ValueError):
        select_tiling(0, 96, model)


# --- schedule generation -------------------------------------------------------


def fmac_cells_per_cycle(sched):
    rows = [sched.unit_row(u) for u in FMAC_UNITS]
    return [sum(1 for r in rows if r[c] is not None)
            for c in range(sched.num_cycles)]


def test_wide_regime_matches_published_pipeline(model):
    # m_s >= t_fma, 64 < n_a <= 96: body of m_u cycles, every unit row of
    # the scalar chain full, all three FMAC units busy every cycle, the
    # paired vector load one latency before the wrap, one branch.
    spec = select_tiling(6, 96, model)
    sched = generate_schedule(spec, model)
    L = sched.num_cycles
    assert L == spec.m_u == 6
    assert fmac_cells_per_cycle(sched) == [3] * L
    lat = model.latency
    vls1 = sched.unit_row("VectorLS1")
    vls2 = sched.unit_row("VectorLS2")
    assert vls1[L - lat.t_vldw].tag == "VLDDW"
    assert vls2[L - lat.t_vldw].tag == "VLDW"
    control = sched.unit_row("Control")
    assert control[L - lat.t_sbr].tag == "SBR"
    for unit, tag in [("ScalarLS1", "SLDH"), ("ScalarFMAC1", "SFEXTS32L"),
                      ("ScalarFMAC2", "SVBCAST")]:
        assert all(i is not None and i.tag == tag for i in sched.unit_row(unit))
    assert verify_schedule(sched, spec, model) == []


def test_mid_regime_matches_published_pipeline(model):
    # m_s = 6, 32 < n_a <= 64: 8-cycle body, 24/24 FMAC slots, paired
    # broadcasts in 6 of 8 cycles, both load units carry a VLDDW.
    spec = select_tiling(6, 64, model)
    sched = generate_schedule(spec, model)
    assert sched.num_cycles == 8
    assert fmac_cells_per_cycle(sched) == [3] * 8
    bcasts = [i for i in sched.unit_row("ScalarFMAC2") if i is not None]
    assert len(bcasts) == 6 and all(i.tag == "SVBCAST2" for i in bcasts)
    lddw = [i for _, u, i in sched.instructions() if i.tag == "VLDDW"]
    assert len(lddw) == 2
    assert estimate_cycles(sched, spec, 512).fmac_efficiency == Fraction(1)
    assert verify_schedule(sched, spec, model) == []


def test_narrow_regime_matches_published_pipeline(model):
    # m_s = 6, n_a <= 32: 7-cycle body, third FMAC unit never used,
    # 12 of 21 slots filled, single-register loads on both load units.
    spec = select_tiling(6, 32, model)
    sched = generate_schedule(spec, model)
    assert sched.num_cycles == 7
    assert all(i is None for i in sched.unit_row("VectorFMAC3"))
    assert sum(fmac_cells_per_cycle(sched)) == 12
    ldw = [i for _, u, i in sched.instructions() if i.tag == "VLDW"]
    assert len(ldw) == 2
    est = estimate_cycles(sched, spec, 512)
    assert est.fmac_efficiency == Fraction(12, 21)
    assert verify_schedule(sched, spec, model) == []


def test_schedule_grid_verifies_clean(model):
    for m_s in GRID_MS:
        for n_a in GRID_NA:
            spec = select_tiling(m_s, n_a, model)
            sched = generate_schedule(spec, model)
            assert verify_schedule(sched, spec, model) == [], (m_s, n_a)


def test_efficiency_never_exceeds_upper_bound(model):
    for m_s in GRID_MS:
        for n_a in GRID_NA:
            spec = select_tiling(m_s, n_a, model)
            sched = generate_schedule(spec, model)
            eff = estimate_cycles(sched, spec, 64).fmac_efficiency
            assert eff <= Fraction(theoretical_upper_bound(n_a)).limit_denominator(3)


def test_schedule_deterministic(model):
    spec = select_tiling(9, 48, model)
    assert generate_schedule(spec, model) == generate_schedule(spec, model)


@pytest.mark.parametrize("t_fma,t_vldw,t_sbr", [(4, 2, 1), (8, 6, 4), (10, 4, 3)])
def test_schedule_parameterizes_on_latencies(model, t_fma, t_vldw, t_sbr):
    # Latency values are configuration; generated bodies must stay
    # hazard-free and regime selection must follow the configured t_fma.
    lat = dataclasses.replace(model.latency, t_fma=t_fma, t_vldw=t_vldw,
                              t_sbr=t_sbr)
    custom = dataclasses.replace(model, latency=lat)
    for m_s, n_a in [(6, 96), (6, 64), (6, 32), (12, 96), (3, 24)]:
        spec = select_tiling(m_s, n_a, custom)
        if m_s >= t_fma and n_a > 64:
            assert spec.k_u == 1
        sched = generate_schedule(spec, custom)
        assert verify_schedule(sched, spec, custom) == [], (m_s, n_a)
        assert sched.num_cycles >= t_fma  # accumulator wraparound spacing


def test_iterations_covered(model):
    spec = select_tiling(6, 64, model)
    sched = generate_schedule(spec, model)
    assert sched.iterations_covered == spec.m_u * spec.k_u == 12


# --- verifier negative cases ---------------------------------------------------


def _schedule_from_cells(cells, cycles):
    grid = [[None] * len(UNITS) for _ in range(cycles)]
    for (cycle, unit), ins in cells.items():
        grid[cycle - 1][UNITS.index(unit)] = ins
    return VliwSchedule(
        units=UNITS,
        steady_state=tuple(tuple(row) for row in grid),
        prologue_cycles=0,
        epilogue_cycles=0,
        iterations_covered=1,
    )


def test_verifier_flags_excess_broadcast(model):
    spec = select_tiling(1, 32, model)
    # two paired broadcasts in one cycle = 4 FP32 > the 2/cycle limit
    cells = {
        (1, "ScalarFMAC2"): Instr("SVBCAST2", writes=("Va[0,0]", "Va[0,1]")),
        (1, "SIEU"): Instr("SVBCAST2", writes=("Va[0,2]", "Va[0,3]")),
    }
    issues = verify_schedule(_schedule_from_cells(cells, 4), spec, model)
    assert any(i.kind == "broadcast" for i in issues)


def test_verifier_flags_accumulator_reuse(model):
    spec = select_tiling(1, 32, model)
    cells = {
        (1, "VectorFMAC1"): Instr("VFMULAS32", writes=("Vc[0,0,0]",),
                                  serves=(0, 0, 0)),
        (2, "VectorFMAC2"): Instr("VFMULAS32", writes=("Vc[0,0,0]",),
                                  serves=(0, 1, 0)),
    }
    issues = verify_schedule(_schedule_from_cells(cells, 8), spec, model)
    assert any(i.kind == "accumulator" for i in issues)


def test_verifier_flags_load_bytes(model):
    spec = select_tiling(1, 32, model)
    cells = {
        (1, "VectorLS1"): Instr("VLDDW", writes=("Vb[0,0]", "Vb[0,1]")),
        (1, "VectorLS2"): Instr("VLDDW", writes=("Vb[1,0]", "Vb[1,1]")),
        (1, "VectorFMAC1"): Instr("VLDDW", writes=("Vb[2,0]", "Vb[2,1]")),
    }
    issues = verify_schedule(_schedule_from_cells(cells, 4), spec, model)
    assert any(i.kind == "load-bytes" for i in issues)
    assert any(i.kind == "unit" for i in issues)  # VLDDW off a load unit


def test_verifier_flags_missing_branch(model):
    spec = select_tiling(1, 32, model)
    issues = verify_schedule(_schedule_from_cells({}, 4), spec, model)
    assert any(i.kind == "control" for i in issues)


def test_verifier_flags_late_branch(model):
    spec = select_tiling(1, 32, model)
    cells = {(4, "Control"): Instr("SBR")}
    issues = verify_schedule(_schedule_from_cells(cells, 4), spec, model)
    assert any(i.kind == "control" for i in issues)


def test_verifier_flags_dependency_violation(model):
    spec = select_tiling(1, 32, model)
    # broadcast consumed in the same cycle it issues
    cells = {
        (1, "ScalarFMAC2"): Instr("SVBCAST", writes=("Va[0,0]",)),
        (1, "VectorFMAC1"): Instr("VFMULAS32", writes=("Vc[0,0,0]",),
                                  reads=("Va[0,0]",), serves=(0, 0, 0)),
        (2, "Control"): Instr("SBR"),
    }
    issues = verify_schedule(_schedule_from_cells(cells, 8), spec, model)
    assert any(i.kind == "dependency" for i in issues)


# --- cycle model and bounds ----------------------------------------------------


def test_wide_efficiency_is_exactly_one(model):
    spec = select_tiling(6, 96, model)
    sched = generate_schedule(spec, model)
    assert estimate_cycles(sched, spec, 512).fmac_efficiency == Fraction(1)


def test_total_cycles_scales_with_depth(model):
    spec = select_tiling(6, 96, model)
    sched = generate_schedule(spec, model)
    shallow = estimate_cycles(sched, spec, 32).total_cycles
    deep = estimate_cycles(sched, spec, 4096).total_cycles
    assert deep > shallow
    # one extra k step costs L / k_u steady cycles amortized
    assert estimate_cycles(sched, spec, 512).cycles_per_k_iter == Fraction(6, 1)


def test_row_groups_multiply_cost(model):
    spec = select_tiling(12, 96, model)
    sched = generate_schedule(spec, model)
    est = estimate_cycles(sched, spec, 512)
    assert est.cycles_per_k_iter == Fraction(sched.num_cycles * 1, 1)
    tall = select_tiling(16, 96, model)  # m_u capped at 14 -> 2 row groups
    sched_tall = generate_schedule(tall, model)
    assert estimate_cycles(sched_tall, tall, 512).cycles_per_k_iter == \
        Fraction(sched_tall.num_cycles * 2, 1)


@pytest.mark.parametrize("n_a,want", [
    (96, 1.0), (33, 1.0), (64, 1.0),
    (32, 2.0 / 3.0), (8, 2.0 / 3.0), (1, 2.0 / 3.0),
])
def test_upper_bound_values(n_a, want):
    assert theoretical_upper_bound(n_a) == want


def test_upper_bound_rejects_out_of_range():
    for bad in (0, 97, -3):
        with pytest.raises(ValueError):
            theoretical_upper_bound(bad)
