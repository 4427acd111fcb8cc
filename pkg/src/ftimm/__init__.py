"""Planning, code-scheduling and simulation toolkit for irregular-shaped
single-precision GEMM (C += A x B) on an abstract multi-core VLIW DSP."""

__version__ = "0.1.0"

from .blocking import (
    BlockSizes,
    ExecutionPlan,
    FeasibilityReport,
    MatrixShape,
    PlanParams,
    Strategy,
    adjust,
    capacity_check,
    cmr_k_strategy,
    cmr_m_strategy,
    initial_blocks,
    plan_for,
)
from .engine import (
    DmaEvent,
    SimReport,
    naive_gemm,
    run_auto,
    run_ftimm_k,
    run_ftimm_m,
    run_tgemm,
)
from .kernels import ShapeError, exec_ftimm_kernel, exec_tgemm_kernel
from .machine import (
    CoreDesc,
    LatencyDesc,
    MachineModel,
    MemoryLevelDesc,
    default_ftm7032,
    load_machine,
    save_machine,
    validate,
)
from .matrixio import read_matrix, write_matrix
from .microkernel import (
    CycleEstimate,
    Instr,
    MicroKernelSpec,
    VliwSchedule,
    estimate_cycles,
    generate_schedule,
    select_tiling,
    theoretical_upper_bound,
    verify_schedule,
)
from .perf import (
    SweepRow,
    TimeEstimate,
    estimate_time,
    preset_shapes,
    roofline,
    speedup_table,
)

__all__ = [name for name in dir() if not name.startswith("_")]
