"""Loops in the electrical graph: winding classes, landscapes and equilibria.

On a ring of n identical nodes a stable circulating flow is a twisted state
with neighbouring differences 2 pi k / n. It is a strict local minimum of the
coupling energy when |2 pi k / n| < pi/2, and the loop count formula
N = 2 floor(n/4) + 1 bounds the number of such classes.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, List

import numpy as np
import scipy.ndimage

from . import algebra, network
from .control import energy_candidate, energy_candidate_gradient
from .errors import ValidationError

FIELDS = ("S_E", "S_B", "S_bar", "S_tilde", "S_hat")
ROTATION_INVARIANT = ("S_E", "S_B", "S_bar")
MAX_EQUILIBRIA_NODES = 6


@dataclass(frozen=True)
class LoopClass:
    """Winding class k of a loop: the angle differences around it sum to 2 pi k."""

    k: int
    angle_sum: float
    stable: bool


def count_loop_minima(n: int):
    """Number N = 2 floor(n/4) + 1 of loop classes and their enumeration.

    Returns:
        (N, classes) with ``stable`` set when |2 pi k / n| < pi/2.
    """
    if n < 3:
        raise ValidationError("count_loop_minima: a loop needs at least 3 generators")
    a = n // 4
    classes = [LoopClass(k, 2.0 * np.pi * k, bool(abs(2.0 * np.pi * k / n) < np.pi / 2))
               for k in range(-a, a + 1)]
    return 2 * a + 1, classes


def twisted_state(n: int, k: int) -> np.ndarray:
    """Ring angles with uniform neighbour difference 2 pi k / n, node 1 at 0."""
    return 2.0 * np.pi * k * np.arange(n) / n


def winding_number(theta, incidence=None) -> int:
    """Winding of ring angles: sum of wrapped neighbour differences over 2 pi."""
    theta = np.asarray(theta, dtype=float)
    d = algebra.wrap_angle(np.roll(theta, -1) - theta)
    return int(np.round(d.sum() / (2.0 * np.pi)))


# --- fields -------------------------------------------------------------------------

def field_functions(field_id: str, topology: network.Topology, params: network.GridParams,
                    theta_star=None):
    """Value and gradient callables (batched over leading axes) of an energy field.

    ``S_E`` uses the electrical incidence with unit weights; the others use
    the communication graph.
    """
    if field_id not in FIELDS:
        raise ValidationError(f"field must be one of {FIELDS}")
    theta_star = np.zeros(topology.n) if theta_star is None else np.asarray(theta_star, dtype=float)
    if field_id == "S_E":
        lap = topology.incidence @ topology.incidence.T
        which = "S_B"
    else:
        lap = topology.comm_laplacian()
        which = field_id
    return (lambda th: energy_candidate(th, theta_star, topology, params, which, lap),
            lambda th: energy_candidate_gradient(th, theta_star, topology, params, which, lap))


@dataclass
class LandscapeGrid:
    """Sampled energy field over the free angles.

    Attributes:
        field_id: sampled field.
        axes: free-angle node indices (zero-based); the others sit at 0.
        resolution: points per free angle over [0, 2 pi).
        values: normalized field values, one axis per free angle.
        raw_min, raw_max: range before normalization.
    """

    field_id: str
    axes: tuple
    resolution: int
    values: np.ndarray
    raw_min: float
    raw_max: float

    @property
    def axis(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.resolution) / self.resolution

    def points(self) -> np.ndarray:
        """Grid angles, one row per point in C order of ``values``."""
        mesh = np.meshgrid(*([self.axis] * len(self.axes)), indexing="ij")
        return np.stack([g.ravel() for g in mesh], axis=1)

    def rows(self) -> np.ndarray:
        """Table of (free angles..., value) rows."""
        return np.hstack([self.points(), self.values.reshape(-1, 1)])


def sample_landscape(field_id: str, topology: network.Topology, params: network.GridParams,
                     theta_star=None, resolution: int = 64) -> LandscapeGrid:
    """Evaluate an energy field on a uniform torus grid and normalize it.

    Rotation-invariant fields on three or more nodes are sampled with node 1
    fixed at 0; otherwise every angle is free. Values are divided by the grid
    maximum when nonnegative and min-max scaled otherwise (S_hat can be
    negative).
    """
    n = topology.n
    if n > 4:
        raise ValidationError("sample_landscape: at most 4 nodes")
    if resolution < 8:
        raise ValidationError("sample_landscape: resolution must be at least 8")
    value, _ = field_functions(field_id, topology, params, theta_star)
    fix = field_id in ROTATION_INVARIANT and n >= 3
    axes = tuple(range(1, n)) if fix else tuple(range(n))
    grid = LandscapeGrid(field_id, axes, resolution, np.empty(0), 0.0, 0.0)
    pts = grid.points()
    theta = np.zeros((pts.shape[0], n))
    theta[:, list(axes)] = pts
    vals = value(theta)
    lo, hi = float(vals.min()), float(vals.max())
    if lo >= 0.0:
        norm = vals / hi if hi > 0 else vals
    else:
        norm = (vals - lo) / (hi - lo)
    grid.values = norm.reshape((resolution,) * len(axes))
    grid.raw_min, grid.raw_max = lo, hi
    return grid


def periodic_components(mask: np.ndarray) -> int:
    """Connected components of a boolean grid on the torus (face connectivity, wrap-around)."""
    labels, count = scipy.ndimage.label(mask)
    if count == 0:
        return 0
    parent = list(range(count + 1))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for ax in range(mask.ndim):
        first = np.take(labels, 0, axis=ax)
        last = np.take(labels, -1, axis=ax)
        for a, b in zip(first.ravel(), last.ravel()):
            if a and b:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
    return len({find(k) for k in range(1, count + 1)})


def sublevel_components(grid: LandscapeGrid, level: float = 0.01) -> int:
    """Number of connected components of {normalized value <= level}."""
    return periodic_components(grid.values <= level)


# --- equilibria --------------------------------------------------------------------

@dataclass(frozen=True)
class Equilibrium:
    """Critical point of an energy field.

    Attributes:
        theta: canonical angles (node 1 at 0 for rotation-invariant fields).
        kind: "minimum", "maximum", "saddle" or "degenerate".
        eigenvalues: Hessian eigenvalues (the rotation direction removed for
            invariant fields).
        grad_norm: gradient norm at ``theta``.
        value: field value.
    """

    theta: np.ndarray
    kind: str
    eigenvalues: np.ndarray
    grad_norm: float
    value: float


def _fd_hessian(grad: Callable, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    n = theta.size
    pts = np.repeat(theta[None, :], 2 * n, axis=0)
    idx = np.arange(n)
    pts[idx, idx] += h
    pts[n + idx, idx] -= h
    g = grad(pts)
    hess = (g[:n] - g[n:]) / (2.0 * h)
    return 0.5 * (hess + hess.T)


def _complement_basis(n: int) -> np.ndarray:
    """Orthonormal basis of the complement of the all-ones direction."""
    q, _ = np.linalg.qr(np.hstack([np.ones((n, 1)), np.eye(n)[:, :n - 1]]))
    return q[:, 1:]


def classify(grad: Callable, theta: np.ndarray, invariant: bool, rtol: float = 1e-6):
    """Hessian eigenvalues and the critical-point kind at ``theta``."""
    hess = _fd_hessian(grad, theta)
    if invariant and theta.size > 1:
        basis = _complement_basis(theta.size)
        hess = basis.T @ hess @ basis
    ev = np.linalg.eigvalsh(hess)
    tol = rtol * max(np.abs(ev).max(initial=0.0), 1e-300)
    if np.any(np.abs(ev) <= tol):
        kind = "degenerate"
    elif np.all(ev > 0):
        kind = "minimum"
    elif np.all(ev < 0):
        kind = "maximum"
    else:
        kind = "saddle"
    return ev, kind


def _start_grid(n_free: int, multistarts: int) -> np.ndarray:
    per = max(2, int(np.ceil(multistarts ** (1.0 / max(n_free, 1)))))
    axis = 2.0 * np.pi * np.arange(per) / per
    mesh = np.stack(np.meshgrid(*([axis] * n_free), indexing="ij"), axis=-1).reshape(-1, n_free)
    # Irrational offsets keep starts off symmetric critical points.
    offset = 2.0 * np.pi * np.modf(np.sqrt(np.arange(2, 2 + n_free)) * 0.6180339887)[0] / per
    return mesh + offset


def find_equilibria(field_id: str, topology: network.Topology, params: network.GridParams,
                    theta_star=None, multistarts: int = 256, max_iter: int = 5000,
                    newton_threshold: float = 1e-4, grad_tol: float = 1e-8,
                    dedup_tol: float = 1e-4, scaled_threshold: bool = True) -> List[Equilibrium]:
    """Multistart descent on the torus, Newton refinement, deduplication and classification.

    Descent is a gradient flow with Armijo backtracking, run on all starts at
    once. Once the gradient falls below ``newton_threshold`` (relative to the
    field scale when ``scaled_threshold``), Newton steps with a
    finite-difference Hessian refine the point. Converged points are
    canonicalized (node 1 at 0 for rotation-invariant fields, angles wrapped)
    and merged within ``dedup_tol``.

    Returns:
        Distinct equilibria sorted by field value.
    """
    n = topology.n
    if n > MAX_EQUILIBRIA_NODES:
        raise ValidationError(f"find_equilibria: at most {MAX_EQUILIBRIA_NODES} nodes")
    value, grad = field_functions(field_id, topology, params, theta_star)
    invariant = field_id in ROTATION_INVARIANT
    n_free = n - 1 if invariant else n
    starts = _start_grid(n_free, multistarts)
    x = np.zeros((starts.shape[0], n))
    if invariant:
        x[:, 1:] = starts
    else:
        x[:] = starts
    scale = float(np.max(params.a) ** 2) if scaled_threshold else 1.0
    thresh = newton_threshold * scale

    step = np.full(x.shape[0], 1.0 / scale)
    active = np.ones(x.shape[0], dtype=bool)
    for _ in range(max_iter):
        if not active.any():
            break
        xa = x[active]
        g = grad(xa)
        gn = np.linalg.norm(g, axis=1)
        done = gn < thresh
        ids = np.flatnonzero(active)
        active[ids[done]] = False
        keep = ~done
        if not keep.any():
            break
        xa, g, ids = xa[keep], g[keep], ids[keep]
        f0 = value(xa)
        t = step[ids] * 2.0
        gg = np.einsum("ij,ij->i", g, g)
        for _ in range(60):
            trial = xa - t[:, None] * g
            bad = value(trial) > f0 - 1e-4 * t * gg
            if not bad.any():
                break
            t = np.where(bad, 0.5 * t, t)
        step[ids] = t
        x[ids] = xa - t[:, None] * g

    found: List[Equilibrium] = []
    for xi in x:
        th = xi.copy()
        for _ in range(50):
            g = grad(th)
            if np.linalg.norm(g) < grad_tol:
                break
            hess = _fd_hessian(grad, th)
            if invariant:
                hess = hess + np.ones((n, n)) * np.abs(np.diag(hess)).max(initial=1.0) / n
            try:
                th = th - np.linalg.solve(hess, g)
            except np.linalg.LinAlgError:
                break
        g = grad(th)
        gnorm = float(np.linalg.norm(g))
        if gnorm >= grad_tol:
            continue
        canon = algebra.wrap_angle(th - th[0] if invariant else th)
        if any(np.max(np.abs(algebra.wrap_angle(canon - e.theta))) < dedup_tol for e in found):
            continue
        ev, kind = classify(grad, canon, invariant)
        found.append(Equilibrium(canon, kind, ev, gnorm, float(value(canon))))
    found.sort(key=lambda e: e.value)
    return found


def minima(equilibria: List[Equilibrium]) -> List[Equilibrium]:
    return [e for e in equilibria if e.kind == "minimum"]


def check_ring_minima(n: int, equilibria: List[Equilibrium]) -> int:
    """Compare found minima with the stable loop classes of an n-ring.

    Finding more minima than predicted is an error; fewer raises a coverage
    warning.

    Returns:
        Number of minima found.
    """
    _, classes = count_loop_minima(n)
    expected = sum(c.stable for c in classes)
    got = len(minima(equilibria))
    if got > expected:
        raise AssertionError(f"{n}-ring: found {got} minima, at most {expected} predicted")
    if got < expected:
        warnings.warn(f"{n}-ring: found {got} of {expected} predicted minima; multistart coverage may be too low")
    return got
