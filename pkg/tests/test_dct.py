import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vheat.autograd import Tape, Tensor, grad_check, ops
from vheat.dct import build_plan, dct2d, dct2d_array, dct2d_naive, idct2d, idct2d_array
from vheat.verify import dct_checks

sizes = st.integers(1, 64)


def test_plan_1x1():
    p = build_plan(1, 1)
    np.testing.assert_array_equal(p.C, [[1.0]])
    np.testing.assert_array_equal(p.D, [[1.0]])


def test_plan_2x2_hand_values():
    r = 1 / math.sqrt(2)
    np.testing.assert_allclose(build_plan(2, 2).C, [[r, r], [r, -r]], atol=1e-15)


def test_plan_rejects_empty():
    with pytest.raises(ValueError):
        build_plan(0, 3)
    with pytest.raises(ValueError):
        build_plan(3, 0)


def test_plan_cached_and_read_only():
    p = build_plan(8, 8)
    assert p is build_plan(8, 8)
    with pytest.raises(ValueError):
        p.C[0, 0] = 2.0
    assert build_plan(8, 8, np.float32).C.dtype == np.float32


def test_all_ones_2x2():
    np.testing.assert_allclose(dct2d_array(build_plan(2, 2), np.ones((2, 2))), [[2, 0], [0, 0]], atol=1e-15)


def test_random_4x4_vs_naive(rng):
    A = rng.standard_normal((4, 4))
    assert np.abs(dct2d_array(build_plan(4, 4), A) - dct2d_naive(A)).max() < 1e-12


def test_cosine_basis_single_coefficient():
    m = np.arange(8)
    A = np.cos(np.pi * 2 * (2 * m + 1) / 16)[:, None] * np.cos(np.pi * 3 * (2 * m + 1) / 16)[None, :]
    B = dct2d_array(build_plan(8, 8), A)
    mask = np.abs(B) > 1e-12
    assert mask.sum() == 1 and mask[2, 3]


def test_dc_basis_4x4():
    B = np.zeros((4, 4))
    B[0, 0] = 1
    np.testing.assert_allclose(idct2d_array(build_plan(4, 4), B), 0.25, atol=1e-15)


def test_naive_1x1():
    assert dct2d_naive(np.array([[3.5]]))[0, 0] == 3.5


def test_dim_mismatch(rng):
    with pytest.raises(ValueError, match="4x5"):
        dct2d(build_plan(4, 5), Tensor(rng.standard_normal((1, 1, 5, 4))))
    with pytest.raises(ValueError):
        idct2d_array(build_plan(4, 5), rng.standard_normal((4, 4)))


@given(sizes)
def test_orthonormality(n):
    C = build_plan(n, n).C
    assert np.abs(C @ C.T - np.eye(n)).max() < 1e-12
    C32 = build_plan(n, n, np.float32).C.astype(np.float64)
    assert np.abs(C32 @ C32.T - np.eye(n)).max() < 1e-6


@given(sizes, sizes, st.integers(0, 2 ** 31 - 1))
def test_round_trip_parseval_linearity(M, N, seed):
    rng = np.random.default_rng(seed)
    p = build_plan(M, N)
    X, Y = rng.standard_normal((2, 2, 3, M, N))
    a, b = rng.standard_normal(2)
    B = dct2d_array(p, X)
    np.testing.assert_allclose(idct2d_array(p, B), X, atol=1e-12)
    assert abs(np.linalg.norm(B) - np.linalg.norm(X)) <= 1e-12 * np.linalg.norm(X)
    np.testing.assert_allclose(dct2d_array(p, a * X + b * Y), a * B + b * dct2d_array(p, Y), atol=1e-11)


@given(sizes, sizes, st.integers(0, 2 ** 31 - 1))
def test_round_trip_f32(M, N, seed):
    A = np.random.default_rng(seed).standard_normal((M, N)).astype(np.float32)
    p = build_plan(M, N, np.float32)
    out = idct2d_array(p, dct2d_array(p, A))
    assert np.linalg.norm(out - A) <= 1e-6 * np.linalg.norm(A)


@given(st.integers(1, 16), st.integers(1, 16), st.integers(0, 2 ** 31 - 1))
def test_matches_naive_up_to_16(M, N, seed):
    A = np.random.default_rng(seed).standard_normal((M, N))
    assert np.abs(dct2d_array(build_plan(M, N), A) - dct2d_naive(A)).max() < 1e-12


def test_tensor_path_matches_array_path(rng):
    p = build_plan(6, 5)
    A = rng.standard_normal((2, 3, 6, 5))
    np.testing.assert_allclose(dct2d(p, A).data, dct2d_array(p, A), atol=1e-14)
    np.testing.assert_allclose(idct2d(p, A).data, idct2d_array(p, A), atol=1e-14)


def test_dct_vjp_is_transpose(rng):
    p = build_plan(5, 4)
    A = Tensor(rng.standard_normal((1, 2, 5, 4)), requires_grad=True)
    w = rng.standard_normal((1, 2, 5, 4))
    with Tape() as tape:
        loss = ops.sum(ops.mul(dct2d(p, A), w))
    np.testing.assert_allclose(tape.backward(loss)[A], idct2d_array(p, w), atol=1e-14)
    assert grad_check(lambda x: ops.sum(ops.mul(idct2d(p, x), w)), [A]) < 1e-9


def test_verify_suite_passes():
    assert all(c.passed for c in dct_checks())


def test_verify_catches_perturbed_matrix():
    from vheat.dct import DctPlan

    def bad_plan(M, N, dtype=np.float64):
        good = build_plan(M, N, dtype)
        C = good.C.copy()
        C[0, 0] *= 1.001
        return DctPlan(M, N, C, C if M == N else good.D)

    checks = {c.name: c for c in dct_checks(plan_builder=bad_plan)}
    assert not checks["dct.orthonormality (1..64, f64)"].passed
