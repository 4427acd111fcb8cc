import dataclasses
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftimm.machine import (
    CoreDesc,
    LatencyDesc,
    MemoryLevelDesc,
    default_ftm7032,
    from_json_dict,
    load_machine,
    save_machine,
    to_json_dict,
    validate,
)


def test_default_peak_per_core(model):
    assert model.core.peak_flops_per_core == pytest.approx(345.6)


def test_default_capacities(model):
    assert model.capacity("GSM") == 6 * 2**20
    assert model.capacity("SM") == 64 * 2**10
    assert model.capacity("AM") == 786432
    assert model.capacity("DDR") == 0  # unbounded


def test_cluster_peak(model):
    assert model.num_cores == 8
    assert model.peak_flops_cluster == pytest.approx(8 * 345.6)


def test_default_issue_widths(model):
    assert model.core.scalar_issue_width == 5
    assert model.core.vector_issue_width == 6
    assert model.core.total_issue_width == 11


def test_default_is_deterministic():
    assert default_ftm7032() == default_ftm7032()


def test_validate_default_ok(model):
    result = validate(model)
    assert result.ok and result.issues == []


def test_validate_flags_zero_am_capacity(model):
    levels = tuple(
        dataclasses.replace(l, capacity_bytes=0) if l.name == "AM" else l
        for l in model.memory_levels
    )
    bad = dataclasses.replace(model, memory_levels=levels)
    result = validate(bad)
    assert not result.ok
    assert any("AM capacity must be positive" in msg for msg in result.issues)


def test_validate_flags_zero_issue_width(model):
    bad = dataclasses.replace(
        model, core=dataclasses.replace(model.core, scalar_issue_width=0))
    result = validate(bad)
    assert not result.ok and len(result.issues) >= 1


def test_validate_flags_missing_level(model):
    bad = dataclasses.replace(model, memory_levels=model.memory_levels[:2])
    result = validate(bad)
    assert any("missing memory level" in msg for msg in result.issues)


def test_json_round_trip_default(model, tmp_path):
    path = tmp_path / "machine.json"
    save_machine(model, str(path))
    assert load_machine(str(path)) == model


def test_json_missing_keys_take_defaults():
    m = from_json_dict({"num_cores": 4, "latency": {"t_fma": 8}})
    assert m.num_cores == 4
    assert m.latency.t_fma == 8
    assert m.latency.t_vldw == 4  # untouched default
    assert m.core == CoreDesc()


def test_json_unknown_key_rejected():
    with pytest.raises(ValueError, match="unknown key"):
        from_json_dict({"num_core": 4})
    with pytest.raises(ValueError, match="unknown key"):
        from_json_dict({"core": {"vpe_count": 16}})
    with pytest.raises(ValueError, match="unknown key"):
        from_json_dict({"memory_levels": [{"name": "GSM", "size": 1}]})


def test_json_partial_memory_level():
    m = from_json_dict({"memory_levels": [{"name": "AM", "capacity_bytes": 1024}]})
    assert m.capacity("AM") == 1024
    assert m.capacity("GSM") == 6 * 2**20


@settings(max_examples=30, deadline=None)
@given(
    num_cores=st.integers(1, 64),
    t_fma=st.integers(1, 12),
    clock=st.floats(0.1, 4.0, allow_nan=False),
    am=st.integers(1024, 2**21),
)
def test_json_round_trip_property(num_cores, t_fma, clock, am):
    base = default_ftm7032()
    model = dataclasses.replace(
        base,
        num_cores=num_cores,
        latency=dataclasses.replace(base.latency, t_fma=t_fma),
        core=dataclasses.replace(base.core, clock_ghz=clock),
        memory_levels=tuple(
            dataclasses.replace(l, capacity_bytes=am) if l.name == "AM" else l
            for l in base.memory_levels
        ),
    )
    assert from_json_dict(json.loads(json.dumps(to_json_dict(model)))) == model
