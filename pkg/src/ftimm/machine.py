"""Abstract machine description for a multi-core VLIW DSP cluster.

The defaults describe one GPDSP cluster of an FT-m7032: eight DSP cores
sharing a 6 MB on-chip Global Shared Memory (GSM), each core an 11-issue
VLIW (5 scalar + 6 vector slots) with 16 vector processing elements, a
64 KB Scalar Memory (SM) and a 768 KB Array Memory (AM), plus a DMA
engine that moves tiles between DDR, GSM and the per-core scratchpads.

Every parameter is configuration, not a constant: models are immutable
after construction and safe to share across workers.  A JSON file with
the same nesting as the dataclasses can override any subset of fields
(unknown keys are rejected, missing keys keep their defaults).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace

__all__ = [
    "MemoryLevelDesc",
    "CoreDesc",
    "LatencyDesc",
    "MachineModel",
    "ValidationResult",
    "MEMORY_LEVEL_NAMES",
    "default_ftm7032",
    "validate",
    "to_json_dict",
    "from_json_dict",
    "load_machine",
    "save_machine",
]

MEMORY_LEVEL_NAMES = ("DDR", "GSM", "SM", "AM")

CONFIG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class MemoryLevelDesc:
    """One level of the software-managed memory hierarchy."""

    name: str
    capacity_bytes: int  # 0 means unbounded (DDR only)
    is_shared: bool      # GSM/DDR are cluster-shared, SM/AM are per-core


@dataclass(frozen=True)
class CoreDesc:
    """Issue widths, SIMD geometry and register budget of one DSP core."""

    num_vpe: int = 16
    fmac_units_per_vpe: int = 3
    simd_width_fp32: int = 32           # V: FP32 lanes across all VPEs
    vector_registers_per_vpe: int = 64
    reserved_vector_registers: int = 4  # addressing / temporaries
    clock_ghz: float = 1.8
    scalar_issue_width: int = 5
    vector_issue_width: int = 6
    broadcast_fp32_per_cycle: int = 2   # SPU -> VPU scalar broadcast limit
    vector_load_bytes_per_cycle: int = 512

    @property
    def peak_flops_per_core(self) -> float:
        """Peak GFlops: each FMAC unit retires 2 FP32 madds/cycle (2 flops each)."""
        return self.num_vpe * self.fmac_units_per_vpe * 2 * 2 * self.clock_ghz

    @property
    def total_issue_width(self) -> int:
        return self.scalar_issue_width + self.vector_issue_width


@dataclass(frozen=True)
class LatencyDesc:
    """Instruction latencies (cycles) and DMA bandwidths (GB/s)."""

    t_fma: int = 6    # FMAC result latency; drives accumulator spacing
    t_vldw: int = 4   # vector load (VLDW / VLDDW) latency
    t_sbr: int = 3    # loop branch latency
    dma_ddr_bandwidth_gbps: float = 42.6
    dma_gsm_bandwidth_gbps: float = 128.0  # GSM <-> AM/SM transfers
    dma_startup_cycles: int = 0


@dataclass(frozen=True)
class MachineModel:
    """Complete cluster description: memory levels, core, latencies, core count."""

    memory_levels: tuple[MemoryLevelDesc, ...]
    core: CoreDesc
    latency: LatencyDesc
    num_cores: int = 8

    def level(self, name: str) -> MemoryLevelDesc:
        for lvl in self.memory_levels:
            if lvl.name == name:
                return lvl
        raise KeyError(f"no memory level named {name!r}")

    def capacity(self, name: str) -> int:
        return self.level(name).capacity_bytes

    @property
    def peak_flops_cluster(self) -> float:
        """Aggregate peak in GFlops across all cores."""
        return self.num_cores * self.core.peak_flops_per_core


def default_ftm7032() -> MachineModel:
    """The FT-m7032 GPDSP-cluster defaults; deterministic and pure."""
    return MachineModel(
        memory_levels=(
            MemoryLevelDesc("DDR", 0, True),
            MemoryLevelDesc("GSM", 6 * 2**20, True),
            MemoryLevelDesc("SM", 64 * 2**10, False),
            MemoryLevelDesc("AM", 768 * 2**10, False),
        ),
        core=CoreDesc(),
        latency=LatencyDesc(),
        num_cores=8,
    )


@dataclass
class ValidationResult:
    ok: bool
    issues: list[str] = field(default_factory=list)


def validate(model: MachineModel) -> ValidationResult:
    """Check structural invariants; violations come back as messages, not raises."""
    issues: list[str] = []

    seen: dict[str, int] = {}
    for lvl in model.memory_levels:
        seen[lvl.name] = seen.get(lvl.name, 0) + 1
        if lvl.name not in MEMORY_LEVEL_NAMES:
            issues.append(f"unknown memory level name {lvl.name!r}")
        if lvl.name != "DDR" and lvl.capacity_bytes <= 0:
            issues.append(f"{lvl.name} capacity must be positive")
        if lvl.capacity_bytes < 0:
            issues.append(f"{lvl.name} capacity must be non-negative")
    for name in MEMORY_LEVEL_NAMES:
        if name not in seen:
            issues.append(f"missing memory level {name}")
        elif seen[name] > 1:
            issues.append(f"duplicate memory level {name}")

    core = model.core
    for attr in (
        "num_vpe",
        "fmac_units_per_vpe",
        "simd_width_fp32",
        "vector_registers_per_vpe",
        "scalar_issue_width",
        "vector_issue_width",
        "broadcast_fp32_per_cycle",
        "vector_load_bytes_per_cycle",
    ):
        if getattr(core, attr) <= 0:
            issues.append(f"core.{attr} must be positive")
    if core.reserved_vector_registers < 0:
        issues.append("core.reserved_vector_registers must be non-negative")
    if core.reserved_vector_registers >= core.vector_registers_per_vpe:
        issues.append("reserved registers leave no vector registers usable")
    if core.clock_ghz <= 0:
        issues.append("core.clock_ghz must be positive")

    lat = model.latency
    for attr in ("t_fma", "t_vldw", "t_sbr"):
        if getattr(lat, attr) < 1:
            issues.append(f"latency.{attr} must be >= 1")
    for attr in ("dma_ddr_bandwidth_gbps", "dma_gsm_bandwidth_gbps"):
        if getattr(lat, attr) <= 0:
            issues.append(f"latency.{attr} must be positive")
    if lat.dma_startup_cycles < 0:
        issues.append("latency.dma_startup_cycles must be non-negative")

    if model.num_cores < 1:
        issues.append("num_cores must be positive")

    return ValidationResult(ok=not issues, issues=issues)


# --- JSON configuration ----------------------------------------------------
#
# Layout mirrors the dataclasses:
#   {"num_cores": 8,
#    "memory_levels": [{"name": "GSM", "capacity_bytes": ..., "is_shared": true}, ...],
#    "core": {"num_vpe": 16, ...},
#    "latency": {"t_fma": 6, ...}}
# Any subset may be given; everything else keeps the FT-m7032 default.


def _merge_dataclass(default, data: dict, path: str):
    allowed = {f.name for f in fields(default)}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) {sorted(unknown)} in {path}")
    return replace(default, **data)


def from_json_dict(data: dict) -> MachineModel:
    """Build a model from a (possibly partial) config dict; unknown keys reject."""
    if not isinstance(data, dict):
        raise ValueError("machine config must be a JSON object")
    allowed = {"memory_levels", "core", "latency", "num_cores"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown key(s) {sorted(unknown)} in machine config")

    base = default_ftm7032()
    levels = list(base.memory_levels)
    if "memory_levels" in data:
        for entry in data["memory_levels"]:
            if "name" not in entry:
                raise ValueError("memory level entry missing 'name'")
            name = entry["name"]
            for i, lvl in enumerate(levels):
                if lvl.name == name:
                    levels[i] = _merge_dataclass(lvl, entry, f"memory_levels[{name}]")
                    break
            else:
                raise ValueError(f"unknown memory level name {name!r}")
    core = _merge_dataclass(base.core, data.get("core", {}), "core")
    latency = _merge_dataclass(base.latency, data.get("latency", {}), "latency")
    return MachineModel(
        memory_levels=tuple(levels),
        core=core,
        latency=latency,
        num_cores=data.get("num_cores", base.num_cores),
    )


def to_json_dict(model: MachineModel) -> dict:
    return {
        "num_cores": model.num_cores,
        "memory_levels": [
            {"name": l.name, "capacity_bytes": l.capacity_bytes, "is_shared": l.is_shared}
            for l in model.memory_levels
        ],
        "core": {f.name: getattr(model.core, f.name) for f in fields(model.core)},
        "latency": {f.name: getattr(model.latency, f.name) for f in fields(model.latency)},
    }


def load_machine(path: str) -> MachineModel:
    with open(path, "r", encoding="utf-8") as fh:
        return from_json_dict(json.load(fh))


def save_machine(model: MachineModel, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json_dict(model), fh, indent=2, sort_keys=True)
        fh.write("\n")
