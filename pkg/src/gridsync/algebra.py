"""Angle-torus embeddings and the real 2x2 block algebra.

Complex quantities are never stored as complex scalars. A complex number
``a + ib`` is the 2x2 block ``a*I + b*j`` with ``j = [[0, -1], [1, 0]]``, and a
phasor ``x + iy`` is the pair ``[x, y]``. The same representation serves the
stacked 2n-dimensional vectors of the alpha-beta and dq frames.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import SingularMatrixError, ValidationError

J2 = np.array([[0.0, -1.0], [1.0, 0.0]])
E1 = np.array([1.0, 0.0])
E2 = J2 @ E1

# Reciprocal condition number below which an inverse is refused.
RCOND_MIN = 1e-12


def wrap_angle(theta):
    """Wrap angles to the canonical interval (-pi, pi]."""
    theta = np.asarray(theta, dtype=float)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped)


def angles_equal(a, b, atol: float = 1e-12) -> bool:
    """Compare two angle vectors on the torus."""
    return bool(np.all(np.abs(wrap_angle(np.asarray(a) - np.asarray(b))) <= atol))


def embed(theta) -> np.ndarray:
    """Euclidean embedding of angles: consecutive pairs (cos, sin).

    Args:
        theta: array of shape (..., n).

    Returns:
        Array of shape (..., 2n).
    """
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape[:-1] + (2 * theta.shape[-1],))
    out[..., 0::2] = np.cos(theta)
    out[..., 1::2] = np.sin(theta)
    return out


def rotation(angle: float) -> np.ndarray:
    """Single plane rotation [[c, -s], [s, c]]."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def rotation_stack(theta) -> np.ndarray:
    """Block-diagonal stack of plane rotations, one per angle."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    n = theta.size
    out = np.zeros((2 * n, 2 * n))
    c, s = np.cos(theta), np.sin(theta)
    idx = 2 * np.arange(n)
    out[idx, idx] = c
    out[idx, idx + 1] = -s
    out[idx + 1, idx] = s
    out[idx + 1, idx + 1] = c
    return out


def kron_expand(a, blockdim: int = 2) -> np.ndarray:
    """Kronecker product with the 2x2 identity."""
    if blockdim != 2:
        raise ValidationError("only 2x2 block expansion is supported")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    return np.kron(a, np.eye(2))


def jmat(n: int) -> np.ndarray:
    """The operator I_n (x) j, a quarter turn on every 2-block."""
    return np.kron(np.eye(n), J2)


def lm_e1(lm) -> np.ndarray:
    """Block column matrix diag(lm) (x) e1 of shape (2n, n)."""
    lm = np.asarray(lm, dtype=float)
    return np.kron(np.diag(lm), E1[:, None])


def lm_e2(lm) -> np.ndarray:
    """Block column matrix diag(lm) (x) e2 of shape (2n, n)."""
    lm = np.asarray(lm, dtype=float)
    return np.kron(np.diag(lm), E2[:, None])


def impedance_block(r, l, omega0: float) -> np.ndarray:
    """Block-diagonal impedance R (x) I2 + omega0 * j (x) L.

    Each 2-block represents the complex number ``r_k + i*omega0*l_k``. The same
    constructor builds shunt admittances (``r`` is then a conductance and ``l``
    a capacitance).

    Raises:
        ValidationError: if any resistance is not strictly positive or any
            inductance is negative.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    l = np.atleast_1d(np.asarray(l, dtype=float))
    if r.shape != l.shape:
        raise ValidationError("resistance and inductance lengths differ")
    if np.any(~np.isfinite(r)) or np.any(r <= 0):
        raise ValidationError("resistive part must be strictly positive")
    if np.any(~np.isfinite(l)) or np.any(l < 0):
        raise ValidationError("reactive part must be nonnegative")
    return np.kron(np.diag(r), np.eye(2)) + omega0 * np.kron(np.diag(l), J2)


def block_diag_pairs(v) -> np.ndarray:
    """Block column matrix with pair k of ``v`` in block (k, k); shape (2n, n)."""
    v = np.asarray(v, dtype=float)
    n = v.size // 2
    out = np.zeros((2 * n, n))
    out[0::2, :] = np.diag(v[0::2])
    out[1::2, :] = np.diag(v[1::2])
    return out


def solve(a, b) -> np.ndarray:
    """Solve ``a x = b`` with partial pivoting, refusing near-singular ``a``."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] == 0:
        return np.zeros((0,) + np.shape(b)[1:])
    with warnings.catch_warnings():
        # Singularity is reported through rcond below.
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(a, check_finite=True)
    anorm = np.linalg.norm(a, 1)
    rcond = _rcond_from_lu(lu, anorm)
    if not np.isfinite(rcond) or rcond < RCOND_MIN:
        raise SingularMatrixError(f"matrix is singular to working precision (rcond={rcond:.3e})")
    return scipy.linalg.lu_solve((lu, piv), b)


def inv(a) -> np.ndarray:
    """Inverse with the same singularity check as :func:`solve`."""
    a = np.asarray(a, dtype=float)
    return solve(a, np.eye(a.shape[0]))


def _rcond_from_lu(lu, anorm: float) -> float:
    if anorm == 0.0:
        return 0.0
    gecon = scipy.linalg.get_lapack_funcs("gecon", (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    return float(rcond) if info == 0 else 0.0


def to_complex_vector(x) -> np.ndarray:
    """Pairs [x, y] to complex numbers x + iy (last axis)."""
    x = np.asarray(x, dtype=float)
    return x[..., 0::2] + 1j * x[..., 1::2]


def from_complex_vector(z) -> np.ndarray:
    """Complex numbers to interleaved real pairs."""
    z = np.asarray(z)
    out = np.empty(z.shape[:-1] + (2 * z.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return out


def to_complex_matrix(a) -> np.ndarray:
    """Read a matrix of aI + bj blocks as a complex matrix.

    Only the first column of every block is used, so the caller is responsible
    for the block structure (see :func:`is_complex_structured`).
    """
    a = np.asarray(a, dtype=float)
    return a[0::2, 0::2] + 1j * a[1::2, 0::2]


def from_complex_matrix(z) -> np.ndarray:
    """Real 2x2-block embedding of a complex matrix."""
    z = np.asarray(z)
    return np.kron(z.real, np.eye(2)) + np.kron(z.imag, J2)


def is_complex_structured(a, atol: float = 1e-10) -> bool:
    """True if every 2x2 block has the form aI + bj (commutes with j)."""
    a = np.asarray(a, dtype=float)
    rows, cols = a.shape[0] // 2, a.shape[1] // 2
    lhs = np.kron(np.eye(rows), J2) @ a
    rhs = a @ np.kron(np.eye(cols), J2)
    scale = max(1.0, np.abs(a).max())
    return bool(np.abs(lhs - rhs).max() <= atol * scale)
