"""Grid topology, parameters and the steady-state map.

The steady-state map takes the stacked machine EMF fundamentals ``xi`` (one
2-block per node, dq frame) to the stator currents, bus voltages and line
currents of the forced steady state:

    Y_net = [Z_s + (Y_c + L_t)^-1]^-1,     L_t = E Z_t^-1 E^T
    pi1 = -Y_net
    pi2 = (Y_c + L_t)^-1 Y_net
    pi3 = Z_t^-1 E^T pi2

``pi1`` carries a minus sign so that ``-pi1 xi`` is the current leaving the
stator into the bus. Stator currents elsewhere in the package are always the
generator-direction currents ``i_s = Y_net xi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np

from . import algebra
from .algebra import J2
from .errors import ValidationError


@dataclass(frozen=True)
class Topology:
    """Electrical graph and optional communication graph.

    Attributes:
        incidence: n x m node-edge matrix; column e has +1 at the sending
            (tail) node and -1 at the receiving node.
        comm_incidence: optional n x (n-1) incidence of an acyclic spanning
            communication graph.
        comm_weights: positive weights of the communication edges.
    """

    incidence: np.ndarray
    comm_incidence: Optional[np.ndarray] = None
    comm_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        inc = np.atleast_2d(np.asarray(self.incidence, dtype=float))
        if inc.size == 0:
            inc = inc.reshape(max(inc.shape[0], 1) if inc.ndim == 2 else 1, 0)
        object.__setattr__(self, "incidence", inc)
        _check_incidence(inc, "incidence")
        if self.comm_incidence is not None:
            b = np.atleast_2d(np.asarray(self.comm_incidence, dtype=float))
            _check_incidence(b, "comm_incidence")
            n = inc.shape[0]
            if b.shape[0] != n:
                raise ValidationError("comm_incidence: row count must equal node count")
            if b.shape[1] != n - 1 or np.linalg.matrix_rank(b) != n - 1:
                raise ValidationError("comm_incidence: must be an acyclic spanning graph (n-1 edges, rank n-1)")
            w = np.ones(b.shape[1]) if self.comm_weights is None else np.asarray(self.comm_weights, dtype=float)
            if w.shape != (b.shape[1],) or np.any(w <= 0):
                raise ValidationError("comm_weights: one positive weight per communication edge")
            object.__setattr__(self, "comm_incidence", b)
            object.__setattr__(self, "comm_weights", w)

    @property
    def n(self) -> int:
        return self.incidence.shape[0]

    @property
    def m(self) -> int:
        return self.incidence.shape[1]

    @property
    def e_big(self) -> np.ndarray:
        """Expanded incidence E (x) I2."""
        return algebra.kron_expand(self.incidence)

    def comm_laplacian(self) -> np.ndarray:
        """Weighted Laplacian B K B^T of the communication graph."""
        if self.comm_incidence is None:
            raise ValidationError("a communication graph is required")
        b = self.comm_incidence
        return b @ np.diag(self.comm_weights) @ b.T

    @classmethod
    def from_edges(cls, n: int, edges, comm_edges=None, comm_weights=None) -> "Topology":
        """Build from (tail, head) pairs with zero-based node indices."""
        return cls(_incidence(n, edges),
                   None if comm_edges is None else _incidence(n, comm_edges),
                   comm_weights)

    @classmethod
    def ring(cls, n: int, with_comm_path: bool = False) -> "Topology":
        """Cycle 0->1->...->n-1->0, optionally with a path communication graph."""
        edges = [(k, (k + 1) % n) for k in range(n)] if n > 2 else [(0, 1)]
        comm = [(k, k + 1) for k in range(n - 1)] if with_comm_path else None
        return cls.from_edges(n, edges, comm)


def _incidence(n: int, edges) -> np.ndarray:
    edges = list(edges)
    inc = np.zeros((n, len(edges)))
    for e, (a, b) in enumerate(edges):
        if a == b:
            raise ValidationError(f"edge {e}: self loop at node {a}")
        inc[a, e] = 1.0
        inc[b, e] = -1.0
    return inc


def _check_incidence(inc: np.ndarray, name: str) -> None:
    if not np.all(np.isin(inc, (-1.0, 0.0, 1.0))):
        raise ValidationError(f"{name}: entries must be -1, 0 or +1")
    if inc.shape[1] and (np.any((inc == 1).sum(axis=0) != 1) or np.any((inc == -1).sum(axis=0) != 1)):
        raise ValidationError(f"{name}: every column needs exactly one +1 and one -1")


_NODE_FIELDS = ("M", "D", "K_p", "L_m", "i_r_star", "R_s", "L_s", "G", "C")
_EDGE_FIELDS = ("R_t", "L_t")


@dataclass(frozen=True)
class GridParams:
    """Per-node machine/stator/shunt and per-edge line parameters (SI units)."""

    M: np.ndarray
    D: np.ndarray
    K_p: np.ndarray
    L_m: np.ndarray
    i_r_star: np.ndarray
    R_s: np.ndarray
    L_s: np.ndarray
    G: np.ndarray
    C: np.ndarray
    R_t: np.ndarray
    L_t: np.ndarray
    omega0: float = 100.0 * np.pi

    def __post_init__(self):
        for f in fields(self):
            if f.name == "omega0":
                continue
            arr = np.atleast_1d(np.asarray(getattr(self, f.name), dtype=float)).copy()
            arr.setflags(write=False)
            object.__setattr__(self, f.name, arr)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{f.name}: entries must be finite")
        n = self.M.size
        for name in _NODE_FIELDS:
            if getattr(self, name).shape != (n,):
                raise ValidationError(f"{name}: expected {n} per-node entries")
        if self.L_t.shape != self.R_t.shape:
            raise ValidationError("L_t: expected one entry per edge like R_t")
        for name in ("M", "R_s", "G", "R_t"):
            if np.any(getattr(self, name) <= 0):
                raise ValidationError(f"{name}: entries must be strictly positive")
        for name in ("D", "K_p", "L_m", "i_r_star", "L_s", "C", "L_t"):
            if np.any(getattr(self, name) < 0):
                raise ValidationError(f"{name}: entries must be nonnegative")
        if not (np.isfinite(self.omega0) and self.omega0 > 0):
            raise ValidationError("omega0: must be positive")

    @property
    def n(self) -> int:
        return self.M.size

    @property
    def m(self) -> int:
        return self.R_t.size

    @property
    def a(self) -> np.ndarray:
        """Excitation amplitudes L_m * I_r."""
        return self.L_m * self.i_r_star

    @property
    def z_s(self) -> np.ndarray:
        return algebra.impedance_block(self.R_s, self.L_s, self.omega0)

    @property
    def y_c(self) -> np.ndarray:
        return algebra.impedance_block(self.G, self.C, self.omega0)

    @property
    def z_t(self) -> np.ndarray:
        if self.m == 0:
            return np.zeros((0, 0))
        return algebra.impedance_block(self.R_t, self.L_t, self.omega0)

    def line_ratio(self) -> np.ndarray:
        """Per-line time constants L_t / R_t."""
        return self.L_t / self.R_t

    def uniform_line_ratio(self, rtol: float = 1e-9) -> bool:
        """True if every line has the same L_t / R_t."""
        r = self.line_ratio()
        return bool(r.size == 0 or np.all(np.abs(r - r[0]) <= rtol * max(abs(r[0]), 1e-300)))

    def check_topology(self, topology: Topology) -> None:
        if topology.n != self.n or topology.m != self.m:
            raise ValidationError(
                f"parameters sized for {self.n} nodes/{self.m} edges, topology has {topology.n}/{topology.m}")

    def with_updates(self, **changes) -> "GridParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return {f.name: (getattr(self, f.name) if f.name == "omega0" else np.array(getattr(self, f.name)))
                for f in fields(self)}


@dataclass(frozen=True)
class SteadyStateMaps:
    """Steady-state map blocks and the static-stator reduction quantities.

    Attributes:
        pi1, pi2, pi3: the map blocks (pi1 with the outgoing-current sign).
        y_net: effective admittance seen from the EMFs.
        cal_lt: line Laplacian E Z_t^-1 E^T.
        d_prime: per-node damping of the static-stator model.
        z_t_prime: effective line impedance of the static-stator model.
        stator_split: (I + Y_c Z_s)^-1, share of a node injection carried
            by the stator.
        emf_to_bus: (I + Z_s Y_c)^-1, open-line EMF-to-bus-voltage map.
        line_to_bus: (Z_s^-1 + Y_c)^-1, node impedance seen by the lines.
        node_admittance: (Z_s + Y_c^-1)^-1, admittance seen by each EMF with
            the lines open.
    """

    pi1: np.ndarray
    pi2: np.ndarray
    pi3: np.ndarray
    y_net: np.ndarray
    cal_lt: np.ndarray
    d_prime: np.ndarray
    z_t_prime: np.ndarray
    stator_split: np.ndarray
    emf_to_bus: np.ndarray
    line_to_bus: np.ndarray
    node_admittance: np.ndarray
    z_s: np.ndarray = field(repr=False)
    y_c: np.ndarray = field(repr=False)
    z_t: np.ndarray = field(repr=False)
    e_big: np.ndarray = field(repr=False)

    @property
    def pi(self) -> np.ndarray:
        """Stacked map [pi1; pi2; pi3]."""
        return np.vstack([self.pi1, self.pi2, self.pi3])

    def steady_state(self, xi):
        """Generator-direction stator currents, bus voltages, line currents for ``xi``.

        ``xi`` may carry leading batch dimensions.
        """
        xi = np.asarray(xi, dtype=float)
        return xi @ self.y_net.T, xi @ self.pi2.T, xi @ self.pi3.T


def build_pi(topology: Topology, params: GridParams) -> SteadyStateMaps:
    """Assemble the steady-state map and the static-stator quantities.

    Raises:
        SingularMatrixError: if an inner inverse is numerically singular.
    """
    params.check_topology(topology)
    n = params.n
    z_s, y_c, z_t = params.z_s, params.y_c, params.z_t
    e_big = topology.e_big
    eye = np.eye(2 * n)
    cal_lt = e_big @ algebra.solve(z_t, e_big.T) if params.m else np.zeros((2 * n, 2 * n))
    shunt = y_c + cal_lt
    y_net = algebra.inv(z_s + algebra.inv(shunt))
    pi2 = algebra.solve(shunt, y_net)
    pi3 = algebra.solve(z_t, e_big.T @ pi2) if params.m else np.zeros((0, 2 * n))

    stator_split = algebra.inv(eye + y_c @ z_s)
    emf_to_bus = algebra.inv(eye + z_s @ y_c)
    line_to_bus = emf_to_bus @ z_s
    node_admittance = y_c @ emf_to_bus
    re_y = algebra.to_complex_matrix(node_admittance).diagonal().real
    d_prime = params.D + params.a ** 2 * re_y
    z_t_prime = z_t + e_big.T @ line_to_bus @ e_big
    return SteadyStateMaps(pi1=-y_net, pi2=pi2, pi3=pi3, y_net=y_net, cal_lt=cal_lt,
                           d_prime=d_prime, z_t_prime=z_t_prime, stator_split=stator_split,
                           emf_to_bus=emf_to_bus, line_to_bus=line_to_bus,
                           node_admittance=node_admittance, z_s=z_s, y_c=y_c, z_t=z_t,
                           e_big=e_big)


def d_prime_closed_form(params: GridParams) -> np.ndarray:
    """Static-stator damping from the scalar per-node formula.

    D' = D + (L_m I_r)^2 (G + |Y_c|^2 R_s) |Y_c|^2 / |A|^2 with
    |Y_c|^2 = G^2 + w0^2 C^2 and
    |A|^2 = (G + R_s |Y_c|^2)^2 + w0^2 (C - |Y_c|^2 L_s)^2.
    """
    w0 = params.omega0
    yc2 = params.G ** 2 + w0 ** 2 * params.C ** 2
    a2 = (params.G + params.R_s * yc2) ** 2 + w0 ** 2 * (params.C - yc2 * params.L_s) ** 2
    return params.D + params.a ** 2 * (params.G + yc2 * params.R_s) * yc2 / a2


# --- EMF and flux embeddings -------------------------------------------------

def w_matrix(theta, params: GridParams) -> np.ndarray:
    """Torque/EMF coupling R_theta (L_m (x) e2) I_r, shape (2n, n).

    Column k is a_k * (-sin theta_k, cos theta_k) in block k. The electrical
    torque of current ``x`` is ``W^T x`` and the EMF is ``W (w~ + w0)``.
    """
    theta = np.asarray(theta, dtype=float)
    n = theta.size
    out = np.zeros((2 * n, n))
    k = np.arange(n)
    out[2 * k, k] = -params.a * np.sin(theta)
    out[2 * k + 1, k] = params.a * np.cos(theta)
    return out


def emf(theta, params: GridParams, omega_tilde=None) -> np.ndarray:
    """EMF fundamentals xi = W(theta) (w~ + w0); batch over leading axes.

    With ``omega_tilde`` omitted this is the steady-state EMF ``w0 W 1``.
    """
    theta = np.asarray(theta, dtype=float)
    speed = params.omega0 if omega_tilde is None else np.asarray(omega_tilde) + params.omega0
    out = np.empty(theta.shape[:-1] + (2 * theta.shape[-1],))
    out[..., 0::2] = -params.a * np.sin(theta) * speed
    out[..., 1::2] = params.a * np.cos(theta) * speed
    return out


def psi(theta, params: GridParams) -> np.ndarray:
    """Rotor flux embedding R_theta (L_m (x) e1) I_r 1; batch over leading axes."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape[:-1] + (2 * theta.shape[-1],))
    out[..., 0::2] = params.a * np.cos(theta)
    out[..., 1::2] = params.a * np.sin(theta)
    return out


# --- steady-state derived quantities -----------------------------------------

def y_net_symmetric(maps: SteadyStateMaps, params: GridParams, rtol: float = 1e-9) -> np.ndarray:
    """Symmetric part of Y_net, after checking its factorized form.

    The factorization is Y_net = (Y_c + L_t)(Z_s^-1 + Y_c + L_t)^-1 Z_s^-1.

    Raises:
        ArithmeticError: if the factorized identity fails at ``rtol``.
    """
    shunt = maps.y_c + maps.cal_lt
    z_s_inv = algebra.inv(maps.z_s)
    factored = shunt @ algebra.solve(z_s_inv + shunt, z_s_inv)
    err = np.abs(factored - maps.y_net).max()
    if err > rtol * max(1.0, np.abs(maps.y_net).max()):
        raise ArithmeticError(f"Y_net factorization mismatch {err:.3e}")
    return 0.5 * (maps.y_net + maps.y_net.T)


def steady_state_power_balance(maps: SteadyStateMaps, params: GridParams, theta_star) -> float:
    """Total steady mechanical power w0 * 1^T tau_e* from the Y_net quadratic form."""
    xi = emf(theta_star, params)
    return float(xi @ maps.y_net @ xi)


def steady_state_dissipation(maps: SteadyStateMaps, params: GridParams, theta_star) -> float:
    """Sum of resistive losses in stator, shunts and lines at the steady state."""
    i_s, v, i_t = maps.steady_state(emf(theta_star, params))
    r_s = np.repeat(params.R_s, 2)
    g = np.repeat(params.G, 2)
    r_t = np.repeat(params.R_t, 2)
    return float(i_s @ (r_s * i_s) + v @ (g * v) + i_t @ (r_t * i_t))


def effective_voltage_decomposition(maps: SteadyStateMaps, params: GridParams, theta_star,
                                    rtol: float = 1e-12):
    """Angles and rotor currents reproducing the steady bus voltages.

    Solves pi2 xi* = R_bar (L_m (x) e2) I_bar w0 1 per node, i.e. reads each
    voltage block in polar form with the quarter-turn offset of e2.

    Returns:
        (theta_bar, i_r_bar)

    Raises:
        ValidationError: if a voltage block vanishes or L_m is zero there.
    """
    v = maps.pi2 @ emf(theta_star, params)
    return polar_readout(v, params.L_m, params.omega0, rtol=rtol, what="bus voltage")


def polar_readout(xi, l_m, omega0: float, rtol: float = 1e-12, what: str = "EMF"):
    """Invert xi_k = w0 L_m,k I_k (-sin th_k, cos th_k) for (th, I)."""
    z = algebra.to_complex_vector(xi)
    mag = np.abs(z)
    scale = max(mag.max(initial=0.0), 1e-300)
    bad = np.flatnonzero((mag <= rtol * scale) | (np.asarray(l_m) <= 0))
    if mag.max(initial=0.0) == 0.0 or bad.size:
        k = int(bad[0]) if bad.size else 0
        raise ValidationError(f"{what} block at node {k + 1} is zero; amplitude and angle are undefined")
    theta = algebra.wrap_angle(np.angle(z) - np.pi / 2)
    return theta, mag / (omega0 * np.asarray(l_m))


def time_scale_ratio(params: GridParams) -> float:
    """Slowest-line over slowest-stator time constant, L_t/R_t vs L_s/R_s."""
    tau_line = np.max(params.L_t / params.R_t) if params.m else 0.0
    tau_stator = np.max(params.L_s / params.R_s)
    return float(tau_line / tau_stator) if tau_stator > 0 else float("inf")


def jstack(n: int) -> np.ndarray:
    """Convenience alias for I_n (x) j."""
    return np.kron(np.eye(n), J2)
