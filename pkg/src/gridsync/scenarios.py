"""Reference parameter sets and random network generators."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .network import GridParams, Topology

OMEGA0 = 100.0 * np.pi


def triangle_topology() -> Topology:
    """Three nodes, three lines (1->2, 2->3, 1->3) and a path communication graph."""
    inc = np.array([[1, 0, 1], [-1, 1, 0], [0, -1, -1]], dtype=float)
    comm = np.array([[1, 0], [-1, 1], [0, -1]], dtype=float)
    return Topology(inc, comm)


def triangle_params(uniform_lines: bool = False, kp_factor: float = 5.0) -> GridParams:
    """The three-machine triangle parameter set (SI units).

    Args:
        uniform_lines: replace the line resistances so every line shares the
            first line's L_t/R_t ratio (needed by the line-current laws).
        kp_factor: proportional damping as a multiple of D.
    """
    d = np.array([4e3, 1.5e3, 8.5e3])
    l_t = np.array([4.7e-3, 3.8e-3, 2.4e-3])
    r_t = np.array([0.165, 0.166, 0.07])
    if uniform_lines:
        r_t = l_t * (r_t[0] / l_t[0])
    return GridParams(
        M=np.array([22e3, 10e3, 45e3]), D=d, K_p=kp_factor * d,
        L_m=np.array([0.04, 0.08, 0.02]), i_r_star=np.array([1950.0, 975.0, 3900.0]),
        R_s=np.array([0.166, 0.07, 0.5]), L_s=np.array([0.18e-3, 0.10e-3, 0.66e-3]),
        G=np.array([0.8, 0.4, 1.0]), C=np.array([0.01e-3, 0.2e-3, 4e-3]),
        R_t=r_t, L_t=l_t, omega0=OMEGA0)


TRIANGLE_THETA_STAR = np.deg2rad([0.0, -10.0, 5.0])
TRIANGLE_THETA_OFFSET = np.array([0.0, 0.3, -0.2])
TRIANGLE_OMEGA0 = np.array([0.5, -0.3, 0.2])
# RK4 step that keeps the stiffest electrical mode of the triangle stable.
TRIANGLE_DT = 2.5e-5


def random_connected_topology(n: int, rng: np.random.Generator, extra_edge_prob: float = 0.4,
                              with_comm: bool = True) -> Topology:
    """Random spanning tree plus random extra edges; random edge orientations."""
    if n < 1:
        raise ValueError("n must be positive")
    order = rng.permutation(n)
    edges = []
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.append((a, b) if rng.random() < 0.5 else (b, a))
    present = {frozenset(e) for e in edges}
    for a in range(n):
        for b in range(a + 1, n):
            if frozenset((a, b)) not in present and rng.random() < extra_edge_prob:
                edges.append((a, b) if rng.random() < 0.5 else (b, a))
    comm = [(k, k + 1) for k in range(n - 1)] if with_comm and n > 1 else None
    if n == 1:
        return Topology(np.zeros((1, 0)))
    return Topology.from_edges(n, edges, comm)


def random_params(n: int, m: int, rng: np.random.Generator, uniform_ratio: Optional[float] = None,
                  kp_factor: float = 1.0) -> GridParams:
    """Positive parameters of roughly the magnitudes of the triangle set."""
    def u(lo, hi, size):
        return rng.uniform(lo, hi, size)

    d = u(1e3, 1e4, n)
    l_t = u(1e-3, 5e-3, m)
    r_t = l_t / uniform_ratio if uniform_ratio is not None else u(0.05, 0.3, m)
    l_m = u(0.02, 0.08, n)
    return GridParams(
        M=u(1e4, 5e4, n), D=d, K_p=kp_factor * d, L_m=l_m, i_r_star=u(60.0, 100.0, n) / l_m,
        R_s=u(0.05, 0.5, n), L_s=u(0.1e-3, 0.7e-3, n), G=u(0.3, 1.0, n), C=u(0.01e-3, 4e-3, n),
        R_t=r_t, L_t=l_t, omega0=OMEGA0)


def uniform_ring_params(n: int, d: float = 1e4, uniform_amplitude: float = 78.0) -> GridParams:
    """Identical nodes and lines around a ring."""
    l_m = 0.04
    return GridParams(
        M=np.full(n, 2e4), D=np.full(n, d), K_p=np.full(n, d), L_m=np.full(n, l_m),
        i_r_star=np.full(n, uniform_amplitude / l_m), R_s=np.full(n, 0.1), L_s=np.full(n, 0.2e-3),
        G=np.full(n, 0.5), C=np.full(n, 0.1e-3), R_t=np.full(n if n > 2 else 1, 0.1),
        L_t=np.full(n if n > 2 else 1, 3e-3), omega0=OMEGA0)
