"""Numerically exact execution of the two micro-kernel flavors.

Tiles are 2-D float32 numpy arrays (views with arbitrary strides are
fine, which is how a leading dimension larger than the column count is
expressed).  All accumulation happens in FP32 to mirror the FMAC units;
there are no FP64 accumulators anywhere on these paths.

The baseline kernel folds rank-1 updates into the preloaded C tile in
ascending-k order, one rounding per add, which is bit-identical to a
scalar triple loop with k innermost.  The lane kernel keeps k_u
independent partial sums per output element, reduces them in ascending
lane order and adds the total into C; with k_u = 1 it collapses to the
baseline path (single accumulator preloaded from C), bit for bit.
"""

from __future__ import annotations

import numpy as np

from .microkernel import MicroKernelSpec

__all__ = ["ShapeError", "exec_tgemm_kernel", "exec_ftimm_kernel"]


class ShapeError(ValueError):
    """Operand shapes or dtypes do not conform."""


def _check_operands(a_s, b_a, c_a):
    for name, arr in (("A_s", a_s), ("B_a", b_a), ("C_a", c_a)):
        if not isinstance(arr, np.ndarray) or arr.ndim != 2:
            raise ShapeError(f"{name} must be a 2-D ndarray")
        if arr.dtype != np.float32:
            raise ShapeError(f"{name} must be float32, got {arr.dtype}")
    m, k = a_s.shape
    k2, n = b_a.shape
    if k != k2:
        raise ShapeError(f"depth mismatch: A_s has k={k}, B_a has k={k2}")
    if c_a.shape != (m, n):
        raise ShapeError(f"C_a shape {c_a.shape} != ({m}, {n})")
    return m, k, n


def exec_tgemm_kernel(a_s: np.ndarray, b_a: np.ndarray, c_a: np.ndarray) -> np.ndarray:
    """C_a[m, n] += sum_k A_s[m, k] * B_a[k, n], k-major, single accumulator.

    Each k step is one in-place rank-1 update, so every output element
    sees the classic load-C / fold-k-ascending / store order.
    """
    _, k, _ = _check_operands(a_s, b_a, c_a)
    for kk in range(k):
        c_a += a_s[:, kk : kk + 1] * b_a[kk]
    return c_a


def exec_ftimm_kernel(
    a_s: np.ndarray,
    b_a: np.ndarray,
    c_a: np.ndarray,
    spec: MicroKernelSpec,
) -> np.ndarray:
    """Lane-split accumulation: k_u partial sums per element, then reduce.

    Lane ku accumulates the k indices congruent to ku mod k_u (a k_a
    tail short of a full k_u group simply leaves later lanes with fewer
    terms; nothing is zero-padded).  Lanes start at zero, are reduced in
    ascending ku order, and the total is added into C_a in one rounding.

    The m_u row grouping of the generated assembly cannot change any
    per-element summation order (rows are independent), so execution
    vectorizes over all rows at once.
    """
    m, k, n = _check_operands(a_s, b_a, c_a)
    k_u = spec.k_u
    if k_u < 1:
        raise ShapeError(f"invalid spec: k_u={k_u}")
    if k_u == 1:
        # Single accumulator preloaded from C: same path as the baseline.
        return exec_tgemm_kernel(a_s, b_a, c_a)

    lanes = np.zeros((k_u, m, n), dtype=np.float32)
    for kk in range(k):
        lanes[kk % k_u] += a_s[:, kk : kk + 1] * b_a[kk]
    total = lanes[0]
    for ku in range(1, k_u):
        total += lanes[ku]
    c_a += total
    return c_a
