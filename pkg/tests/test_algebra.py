from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from gridsync import algebra
from gridsync.errors import SingularMatrixError, ValidationError


def series_cos_sin(x: Fraction, terms: int = 30):
    """Taylor series evaluated in exact rational arithmetic."""
    c = sum(Fraction((-1) ** k) * x ** (2 * k) / factorial(2 * k) for k in range(terms))
    s = sum(Fraction((-1) ** k) * x ** (2 * k + 1) / factorial(2 * k + 1) for k in range(terms))
    return float(c), float(s)


def test_embed_examples():
    assert np.array_equal(algebra.embed([0.0]), [1.0, 0.0])
    np.testing.assert_allclose(algebra.embed([np.pi / 2, np.pi]), [0, 1, -1, 0], atol=1e-15)
    c, s = series_cos_sin(Fraction(7, 10))
    np.testing.assert_allclose(algebra.embed([0.7]), [c, s], rtol=0, atol=2e-16)


def test_embed_blocks_unit_norm(rng):
    phi = algebra.embed(rng.uniform(-50, 50, 10_000))
    norms = np.hypot(phi[0::2], phi[1::2])
    assert np.abs(norms - 1.0).max() < 1e-12


def test_embed_batches_over_leading_axes(rng):
    th = rng.normal(size=(4, 3))
    out = algebra.embed(th)
    assert out.shape == (4, 6)
    np.testing.assert_array_equal(out[2], algebra.embed(th[2]))


def test_rotation_stack_examples():
    np.testing.assert_array_equal(algebra.rotation_stack([0.0]), np.eye(2))
    np.testing.assert_allclose(algebra.rotation_stack([np.pi / 2]), algebra.J2, atol=1e-16)
    r = algebra.rotation_stack([0.3, -1.1])
    np.testing.assert_allclose(r[:2, :2], [[np.cos(0.3), -np.sin(0.3)], [np.sin(0.3), np.cos(0.3)]])
    np.testing.assert_array_equal(r[:2, 2:], 0.0)
    np.testing.assert_allclose(algebra.rotation(0.3) @ algebra.rotation(-1.1), algebra.rotation(-0.8), atol=1e-12)


def test_rotation_stack_orthogonal_and_composes(rng):
    a, b = rng.uniform(-4, 4, 5), rng.uniform(-4, 4, 5)
    ra = algebra.rotation_stack(a)
    np.testing.assert_allclose(ra.T @ ra, np.eye(10), atol=1e-12)
    dets = [np.linalg.det(ra[2 * k:2 * k + 2, 2 * k:2 * k + 2]) for k in range(5)]
    np.testing.assert_allclose(dets, 1.0, atol=1e-12)
    np.testing.assert_allclose(ra @ algebra.rotation_stack(b), algebra.rotation_stack(a + b), atol=1e-12)


def test_rotation_stack_derivative_is_j(rng):
    th = rng.uniform(-3, 3, 4)
    h = 1e-6
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        fd = (algebra.rotation_stack(th + e) - algebra.rotation_stack(th - e)) / (2 * h)
        mask = np.zeros((8, 8))
        mask[2 * k:2 * k + 2, 2 * k:2 * k + 2] = 1.0
        exact = mask * (algebra.jmat(4) @ algebra.rotation_stack(th))
        assert np.linalg.norm(fd - exact) <= 1e-6 * np.linalg.norm(exact)


def test_kron_expand_examples(rng):
    np.testing.assert_array_equal(algebra.kron_expand([[1.0]]), np.eye(2))
    np.testing.assert_array_equal(algebra.kron_expand([[1.0], [-1.0]]), np.vstack([np.eye(2), -np.eye(2)]))
    a, b = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    np.testing.assert_allclose(algebra.kron_expand(a) @ algebra.kron_expand(b), algebra.kron_expand(a @ b),
                               atol=1e-12)
    with pytest.raises(ValidationError):
        algebra.kron_expand(a, blockdim=3)


def test_j_operator_identities():
    j = algebra.jmat(5)
    assert np.array_equal(j.T, -j)
    np.testing.assert_allclose(j @ j, -np.eye(10), atol=1e-14)


def test_impedance_block_examples():
    w0 = 100 * np.pi
    np.testing.assert_array_equal(algebra.impedance_block([1.0], [0.0], w0), np.eye(2))
    np.testing.assert_allclose(algebra.impedance_block([1.0], [1.0 / w0], w0), [[1, -1], [1, 1]], atol=1e-15)
    z = algebra.impedance_block([0.165], [4.7e-3], w0)
    np.testing.assert_allclose(z[:, 0], [0.165, 4.7e-3 * w0])
    assert abs(4.7e-3 * w0 - 1.4765) < 1e-4
    zi = algebra.inv(z)
    ref = 1.0 / (0.165 + 1j * 4.7e-3 * w0)
    np.testing.assert_allclose(zi, [[ref.real, -ref.imag], [ref.imag, ref.real]], rtol=1e-12)


def test_impedance_block_validation():
    with pytest.raises(ValidationError):
        algebra.impedance_block([0.0], [1.0], 1.0)
    with pytest.raises(ValidationError):
        algebra.impedance_block([1.0], [-1.0], 1.0)


def test_complex_blocks_commute_with_j(rng):
    a = algebra.from_complex_matrix(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
    b = algebra.impedance_block(rng.uniform(0.1, 1, 3), rng.uniform(0, 1, 3), 314.0)
    j = algebra.jmat(3)
    np.testing.assert_allclose(a @ j, j @ a, atol=1e-14)
    np.testing.assert_allclose(b @ j, j @ b, atol=1e-12)
    np.testing.assert_allclose(b @ algebra.from_complex_matrix(np.eye(3) * (2 + 1j)),
                               algebra.from_complex_matrix(np.eye(3) * (2 + 1j)) @ b, atol=1e-12)
    assert algebra.is_complex_structured(a) and not algebra.is_complex_structured(rng.normal(size=(4, 4)))


def test_complex_round_trips(rng):
    z = rng.normal(size=4) + 1j * rng.normal(size=4)
    np.testing.assert_array_equal(algebra.to_complex_vector(algebra.from_complex_vector(z)), z)
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    np.testing.assert_array_equal(algebra.to_complex_matrix(algebra.from_complex_matrix(m)), m)


def test_block_matrix_products_match_complex_arithmetic(rng):
    m = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    z = rng.normal(size=3) + 1j * rng.normal(size=3)
    np.testing.assert_allclose(algebra.from_complex_matrix(m) @ algebra.from_complex_vector(z),
                               algebra.from_complex_vector(m @ z), atol=1e-12)


def test_lm_e_blocks():
    lm = np.array([0.5, 2.0])
    np.testing.assert_array_equal(algebra.lm_e1(lm), [[0.5, 0], [0, 0], [0, 2.0], [0, 0]])
    np.testing.assert_array_equal(algebra.lm_e2(lm), [[0, 0], [0.5, 0], [0, 0], [0, 2.0]])


def test_wrap_and_compare_angles():
    np.testing.assert_allclose(algebra.wrap_angle([np.pi, -np.pi, 3 * np.pi, 0.1 - 2 * np.pi]),
                               [np.pi, np.pi, np.pi, 0.1], atol=1e-12)
    assert algebra.angles_equal([0.1, 3.0], [0.1 + 2 * np.pi, 3.0 - 4 * np.pi])
    assert not algebra.angles_equal([0.1], [0.2])


def test_solve_refuses_singular():
    with pytest.raises(SingularMatrixError):
        algebra.solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))
    with pytest.raises(SingularMatrixError):
        algebra.inv(np.zeros((2, 2)))
