import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ftimm.kernels import ShapeError, exec_ftimm_kernel, exec_tgemm_kernel
from ftimm.machine import default_ftm7032
from ftimm.microkernel import select_tiling

from conftest import max_rel_err


def scalar_oracle(A, B, C):
    """Second, independently coded oracle: per-element FP32 fold, k ascending."""
    m, k = A.shape
    n = B.shape[1]
    out = C.copy()
    for i in range(m):
        for j in range(n):
            acc = out[i, j]
            for kk in range(k):
                acc = np.float32(acc + np.float32(A[i, kk] * B[kk, j]))
            out[i, j] = acc
    return out


def rand(rng, *shape):
    return rng.uniform(-1.0, 1.0, shape).astype(np.float32)


def test_tgemm_kernel_scalar_case():
    A = np.array([[2.0]], dtype=np.float32)
    B = np.array([[3.0]], dtype=np.float32)
    C = np.array([[1.0]], dtype=np.float32)
    exec_tgemm_kernel(A, B, C)
    assert C[0, 0] == 7.0


def test_tgemm_kernel_identity():
    rng = np.random.default_rng(1)
    B = rand(rng, 4, 8)
    C = np.zeros((4, 8), dtype=np.float32)
    exec_tgemm_kernel(np.eye(4, dtype=np.float32), B, C)
    assert np.array_equal(C, B)


def test_tgemm_kernel_bit_exact_vs_scalar_oracle():
    rng = np.random.default_rng(2)
    A, B = rand(rng, 5, 37), rand(rng, 37, 9)
    C = rand(rng, 5, 9)
    expect = scalar_oracle(A, B, C)
    exec_tgemm_kernel(A, B, C)
    assert np.array_equal(C, expect)


def test_tgemm_kernel_deep_case_matches_oracle_exactly(model):
    rng = np.random.default_rng(3)
    A, B = rand(rng, 6, 512), rand(rng, 512, 96)
    C = rand(rng, 6, 96)
    expect = C.copy()
    for kk in range(512):  # same k-major fold, written independently
        expect += A[:, kk : kk + 1] * B[kk]
    exec_tgemm_kernel(A, B, C)
    assert np.array_equal(C, expect)


def test_tgemm_kernel_accepts_strided_views():
    rng = np.random.default_rng(4)
    backing = rand(rng, 8, 100)
    A = backing[:6, 3:40]  # leading dimension wider than the tile
    B = rand(rng, 37, 16)
    C = rand(rng, 6, 16)
    expect = scalar_oracle(np.ascontiguousarray(A), B, C)
    exec_tgemm_kernel(A, B, C)
    assert np.array_equal(C, expect)


def test_tgemm_kernel_shape_mismatch():
    a = np.zeros((2, 3), dtype=np.float32)
    b = np.zeros((4, 5), dtype=np.float32)
    c = np.zeros((2, 5), dtype=np.float32)
    with pytest.raises(ShapeError):
        exec_tgemm_kernel(a, b, c)
    with pytest.raises(ShapeError):
        exec_tgemm_kernel(a.astype(np.float64), np.zeros((3, 5), np.float32), c)


def test_ftimm_kernel_hand_example(model):
    # two lanes over k=4: partials (1+3) and (2+4), reduced to 10
    spec_k2 = select_tiling(6, 64, model)  # k_u = 2 exactly
    A = np.array([[1.0, 2.0, 3.0, 4.0]], dtype=np.float32)
    B = np.ones((4, 1), dtype=np.float32)
    C = np.zeros((1, 1), dtype=np.float32)
    exec_ftimm_kernel(A, B, C, spec_k2)
    assert C[0, 0] == 10.0


def test_ftimm_kernel_ku1_bit_identical_to_tgemm(model):
    rng = np.random.default_rng(5)
    spec = select_tiling(6, 96, model)
    assert spec.k_u == 1
    A, B = rand(rng, 6, 128), rand(rng, 128, 96)
    C1 = rand(rng, 6, 96)
    C2 = C1.copy()
    exec_ftimm_kernel(A, B, C1, spec)
    exec_tgemm_kernel(A, B, C2)
    assert np.array_equal(C1, C2)


def test_ftimm_kernel_tolerance_vs_oracle(model):
    rng = np.random.default_rng(6)
    spec = select_tiling(8, 96, model)
    spec_k2 = select_tiling(8, 64, model)
    A, B = rand(rng, 8, 864), rand(rng, 864, 96)
    C = rand(rng, 8, 96)
    ref = C.copy()
    for kk in range(864):
        ref += A[:, kk : kk + 1] * B[kk]
    out = C.copy()
    exec_ftimm_kernel(A, B, out, spec_k2)
    assert max_rel_err(out, ref) <= 1e-5


def test_ftimm_kernel_tail_depth_not_multiple_of_lanes(model):
    # trailing k indices land on lane (kk mod k_u); nothing is padded
    spec = select_tiling(6, 64, model)  # k_u = 2
    A = np.array([[1.0, 2.0, 3.0]], dtype=np.float32)
    B = np.ones((3, 1), dtype=np.float32)
    C = np.zeros((1, 1), dtype=np.float32)
    exec_ftimm_kernel(A, B, C, spec)
    assert C[0, 0] == (np.float32(1.0 + 3.0) + np.float32(2.0))


def test_ftimm_kernel_linearity_bitwise_for_lanes(model):
    # zero C then add C_in == run with C_in directly: the final add is a
    # single FP32 addition per element, commutative bit for bit
    rng = np.random.default_rng(7)
    spec = select_tiling(6, 64, model)
    A, B = rand(rng, 6, 200), rand(rng, 200, 64)
    C_in = rand(rng, 6, 64)
    via_zero = np.zeros((6, 64), dtype=np.float32)
    exec_ftimm_kernel(A, B, via_zero, spec)
    via_zero = via_zero + C_in
    direct = C_in.copy()
    exec_ftimm_kernel(A, B, direct, spec)
    assert np.array_equal(via_zero, direct)


def test_ftimm_kernel_linearity_close_for_single_lane(model):
    # The k_u = 1 path folds into the preloaded C (it must stay
    # bit-identical to the baseline kernel), so linearity holds only up
    # to FP32 reassociation there.
    rng = np.random.default_rng(8)
    spec = select_tiling(6, 96, model)
    A, B = rand(rng, 6, 200), rand(rng, 200, 96)
    C_in = rand(rng, 6, 96)
    via_zero = np.zeros((6, 96), dtype=np.float32)
    exec_ftimm_kernel(A, B, via_zero, spec)
    via_zero = via_zero + C_in
    direct = C_in.copy()
    exec_ftimm_kernel(A, B, direct, spec)
    assert max_rel_err(via_zero, direct) <= 1e-5


@settings(max_examples=40, deadline=None)
@given(
    m=st.integers(1, 10),
    n=st.integers(1, 96),
    k=st.integers(1, 256),
    seed=st.integers(0, 2**32 - 1),
)
def test_ftimm_kernel_property_matches_oracle(m, n, k, seed):
    model = default_ftm7032()
    spec = select_tiling(m, min(n, 96), model)
    rng = np.random.default_rng(seed)
    A, B = rand(rng, m, k), rand(rng, k, n)
    C = rand(rng, m, n)
    ref = C.copy()
    for kk in range(k):
        ref += A[:, kk : kk + 1] * B[kk]
    out = C.copy()
    exec_ftimm_kernel(A, B, out, spec)
    assert max_rel_err(out, ref) <= 1e-5
