import math
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from isoquant import quat
from isoquant.errors import DegenerateInput, NonUnitRotor

from oracles import table_mul

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
quats = arrays(np.float64, 4, elements=finite)
unit_quats = quats.filter(lambda q: np.linalg.norm(q) > 1e-3).map(lambda q: q / np.linalg.norm(q))


def test_mul_basis_relations():
    i, j, k = np.eye(4)[1:]
    np.testing.assert_array_equal(quat.mul(i, j), k)
    np.testing.assert_array_equal(quat.mul(j, k), i)
    np.testing.assert_array_equal(quat.mul(j, i), -k)
    np.testing.assert_array_equal(quat.mul(quat.mul(i, j), k), [-1, 0, 0, 0])


def test_mul_identity_and_known_product():
    q = [0.5, 0.5, 0.5, 0.5]
    np.testing.assert_array_equal(quat.mul(quat.ONE, q), q)
    # value frozen from the multiplication-table oracle
    np.testing.assert_array_equal(table_mul([1, 2, 3, 4], [5, 6, 7, 8]), [-60, 12, 30, 24])
    np.testing.assert_array_equal(quat.mul([1, 2, 3, 4], [5, 6, 7, 8]), [-60, 12, 30, 24])


@given(quats, quats)
def test_mul_matches_table_oracle(a, b):
    np.testing.assert_allclose(quat.mul(a, b), table_mul(a, b), rtol=1e-12, atol=1e-9)


@given(quats, quats)
def test_norm_multiplicative(a, b):
    # hypot rescales, so tiny quaternions don't underflow when squared
    lhs = math.hypot(*quat.mul(a, b))
    rhs = math.hypot(*a) * math.hypot(*b)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-300)


@given(quats, quats, quats)
def test_associative(a, b, c):
    lhs = quat.mul(quat.mul(a, b), c)
    rhs = quat.mul(a, quat.mul(b, c))
    scale = np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(c)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * max(scale, 1.0))


def test_mul_broadcasts(rng):
    a = rng.standard_normal((5, 3, 4))
    b = rng.standard_normal((3, 4))
    out = quat.mul(a, b)
    assert out.shape == (5, 3, 4)
    np.testing.assert_array_equal(out[2, 1], quat.mul(a[2, 1], b[1]))


def test_conjugate():
    np.testing.assert_array_equal(quat.conjugate([1, 0, 0, 0]), [1, 0, 0, 0])
    np.testing.assert_array_equal(quat.conjugate([0, 1, 0, 0]), [0, -1, 0, 0])
    q = np.array([1.0, 2, 3, 4])
    np.testing.assert_array_equal(quat.conjugate(q), [1, -2, -3, -4])
    np.testing.assert_allclose(quat.mul(q, quat.conjugate(q)), [30, 0, 0, 0], atol=1e-12)


def test_normalize():
    np.testing.assert_array_equal(quat.normalize([2, 0, 0, 0]), [1, 0, 0, 0])
    np.testing.assert_array_equal(quat.normalize([1, 1, 1, 1]), [0.5] * 4)
    with pytest.raises(DegenerateInput):
        quat.normalize([0, 0, 0, 0])
    with pytest.raises(DegenerateInput):
        quat.normalize([1e-13, 0, 0, 0])


def test_sample_unit_deterministic():
    a = quat.sample_unit(np.random.default_rng(5))
    b = quat.sample_unit(np.random.default_rng(5))
    np.testing.assert_array_equal(a, b)
    assert abs(np.linalg.norm(a) - 1) < 1e-12


def test_sample_unit_haar_moments(rng):
    q = quat.sample_unit(rng, 100_000)
    assert np.max(np.abs(np.linalg.norm(q, axis=1) - 1)) < 1e-12
    assert np.all(np.abs(q.mean(axis=0)) < 0.01)
    assert np.all(np.abs((q**2).mean(axis=0) - 0.25) < 0.01)


def test_sandwich_examples(rng):
    v = np.array([1.0, 2, 3, 4])
    np.testing.assert_array_equal(quat.sandwich(quat.ONE, quat.ONE, v), v)
    np.testing.assert_array_equal(quat.sandwich([0, 1, 0, 0], quat.ONE, [1, 0, 0, 0]), [0, 1, 0, 0])
    qL, qR = quat.sample_unit(rng), quat.sample_unit(rng)
    np.testing.assert_allclose(quat.sandwich(qL, qR, v), quat.to_matrix(qL, qR) @ v, atol=1e-10)


def test_sandwich_inverse(rng):
    v = np.array([1.0, 2, 3, 4])
    np.testing.assert_array_equal(quat.sandwich_inverse(quat.ONE, quat.ONE, v), v)
    qL, qR = quat.sample_unit(rng), quat.sample_unit(rng)
    w = quat.sandwich(qL, qR, v)
    np.testing.assert_allclose(quat.sandwich_inverse(qL, qR, w), v, atol=1e-10)
    np.testing.assert_allclose(quat.sandwich_inverse(qL, qR, v), quat.to_matrix(qL, qR).T @ v, atol=1e-10)


@given(unit_quats, unit_quats, quats)
def test_sandwich_preserves_norm(qL, qR, v):
    out = quat.sandwich(qL, qR, v)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(v), rel=1e-10, abs=1e-12)
    np.testing.assert_allclose(quat.sandwich_inverse(qL, qR, out), v, atol=1e-10 * max(1.0, np.linalg.norm(v)))


def test_non_unit_rotor_rejected():
    with pytest.raises(NonUnitRotor):
        quat.sandwich([1.001, 0, 0, 0], quat.ONE, [1, 0, 0, 0])
    with pytest.raises(NonUnitRotor):
        quat.to_matrix(quat.ONE, [0, 0, 2, 0])
    # within tolerance: accepted and renormalized
    out = quat.sandwich([1 + 1e-8, 0, 0, 0], quat.ONE, [1, 0, 0, 0])
    np.testing.assert_allclose(out, [1, 0, 0, 0], atol=1e-15)


def test_to_matrix_columns_are_sandwiched_basis(rng):
    np.testing.assert_array_equal(quat.to_matrix(quat.ONE, quat.ONE), np.eye(4))
    qL, qR = quat.sample_unit(rng), quat.sample_unit(rng)
    m = quat.to_matrix(qL, qR)
    for j, e in enumerate(np.eye(4)):
        np.testing.assert_allclose(m[:, j], quat.sandwich(qL, qR, e), atol=1e-12)


@settings(max_examples=200)
@given(unit_quats, unit_quats)
def test_to_matrix_special_orthogonal_and_double_cover(qL, qR):
    m = quat.to_matrix(qL, qR)
    np.testing.assert_allclose(m.T @ m, np.eye(4), atol=1e-10)
    assert abs(np.linalg.det(m) - 1) < 1e-10
    np.testing.assert_allclose(quat.to_matrix(-qL, -qR), m, rtol=0, atol=1e-14)


@given(unit_quats, unit_quats, quats)
def test_left_and_right_factors_commute(qL, qR, v):
    one = quat.ONE
    a = quat.sandwich(qL, one, quat.sandwich(one, qR, v))
    b = quat.sandwich(one, qR, quat.sandwich(qL, one, v))
    c = quat.sandwich(qL, qR, v)
    tol = 1e-12 * max(1.0, np.linalg.norm(v))
    np.testing.assert_allclose(a, c, atol=tol)
    np.testing.assert_allclose(b, c, atol=tol)


def test_rotation3_is_so3(rng):
    q = quat.sample_unit(rng)
    r = quat.rotation3(q)
    np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(r) - 1) < 1e-12
    p = np.array([0.0, 1.0, 2.0, 3.0])
    np.testing.assert_allclose(r @ p[1:], quat.mul(quat.mul(q, p), quat.conjugate(q))[1:], atol=1e-12)
