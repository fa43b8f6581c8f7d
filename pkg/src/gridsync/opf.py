"""Translation between network power-flow set-points and local machine references.

Network side: per node active/reactive injection (p*, q*) into the lines and
a voltage magnitude |v*|. Local side: rotor current set-points I_r* and angle
references theta*.

Under a uniform line ratio the line Laplacian E Z_t^-1 E^T becomes real after
rotation by the line angle rho = atan(w0 L_t / R_t), and the set of voltage
profiles producing the requested injections is the kernel of K - L with

    K_k = R(rho) [[p_k, q_k], [-q_k, p_k]] / |v*_k|^2,
    L   = (I (x) R(rho)) E Z_t^-1 E^T.

Injections follow the instantaneous-power pair p = v^T i, q = v^T j i.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import algebra, network
from .dynamics import Plant
from .errors import SingularMatrixError, ValidationError

KERNEL_RTOL = 1e-8
MAGNITUDE_RTOL = 0.01


@dataclass(frozen=True)
class OpfSetpoint:
    """Per-node injection and voltage set-points plus the explicit-field gains.

    Attributes:
        p_star: active injections into the lines (W).
        q_star: reactive injections into the lines (var).
        v_mag_star: voltage magnitudes (V).
        rho: per-edge line angle atan(w0 L_t / R_t) (rad).
        eta: gain of the power-flow term of the explicit field.
        alpha: gain of the magnitude term of the explicit field.
    """

    p_star: np.ndarray
    q_star: np.ndarray
    v_mag_star: np.ndarray
    rho: np.ndarray
    eta: float = 1.0
    alpha: float = 10.0

    def __post_init__(self):
        for name in ("p_star", "q_star", "v_mag_star", "rho"):
            arr = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"{name}: entries must be finite")
            object.__setattr__(self, name, arr)
        n = self.p_star.size
        if self.q_star.size != n or self.v_mag_star.size != n:
            raise ValidationError("p_star, q_star, v_mag_star: one entry per node required")
        if np.any(self.v_mag_star <= 0):
            raise ValidationError("v_mag_star: entries must be positive")
        if np.any(self.rho <= 0) or np.any(self.rho > np.pi / 2):
            raise ValidationError("rho: entries must lie in (0, pi/2]")

    @classmethod
    def from_params(cls, p_star, q_star, v_mag_star, params: network.GridParams,
                    eta: float = 1.0, alpha: float = 10.0) -> "OpfSetpoint":
        """Set-points with the line angles taken from the line parameters."""
        return cls(p_star, q_star, v_mag_star, line_angles(params), eta, alpha)


@dataclass(frozen=True)
class LocalReferences:
    """Local references and the steady quantities they induce.

    Attributes:
        i_r_star: rotor current set-points (A).
        theta_star: angle references (rad).
        xi_star, v_star, i_t_star, i_s_star: steady EMF, bus voltage, line
            and stator current vectors.
        model: model variant the references were derived for.
    """

    i_r_star: np.ndarray
    theta_star: np.ndarray
    xi_star: np.ndarray
    v_star: np.ndarray
    i_t_star: np.ndarray
    i_s_star: np.ndarray
    model: str


@dataclass(frozen=True)
class NetworkFlows:
    """Sending-end line powers, node injections and voltage magnitudes."""

    p_edge: np.ndarray
    q_edge: np.ndarray
    p_node: np.ndarray
    q_node: np.ndarray
    v_mag: np.ndarray


def line_angles(params: network.GridParams) -> np.ndarray:
    return np.arctan2(params.omega0 * params.L_t, params.R_t)


def _uniform_rho(rho: np.ndarray) -> float:
    if rho.size and np.any(np.abs(rho - rho[0]) > 1e-9 * abs(rho[0])):
        raise ValidationError("line angles differ; the explicit OPF field needs uniform R/L lines")
    return float(rho[0]) if rho.size else np.pi / 2


def power_gains(setpoint: OpfSetpoint) -> np.ndarray:
    """Block-diagonal K with blocks R(rho) [[p, q], [-q, p]] / |v*|^2."""
    rho = _uniform_rho(setpoint.rho)
    rot = algebra.rotation(rho)
    n = setpoint.p_star.size
    out = np.zeros((2 * n, 2 * n))
    for k in range(n):
        p, q = setpoint.p_star[k], setpoint.q_star[k]
        out[2 * k:2 * k + 2, 2 * k:2 * k + 2] = rot @ np.array([[p, q], [-q, p]]) / setpoint.v_mag_star[k] ** 2
    return out


def rotated_laplacian(topology: network.Topology, params: network.GridParams,
                      rho: Optional[np.ndarray] = None) -> np.ndarray:
    """(I (x) R(rho)) E Z_t^-1 E^T, real-weighted under a uniform line ratio."""
    rho = _uniform_rho(line_angles(params) if rho is None else np.asarray(rho, dtype=float))
    e_big = topology.e_big
    lap = e_big @ algebra.solve(params.z_t, e_big.T) if params.m else np.zeros((2 * params.n,) * 2)
    return np.kron(np.eye(params.n), algebra.rotation(rho)) @ lap


def explicit_opf_field(v, setpoint: OpfSetpoint, topology: network.Topology,
                       params: network.GridParams) -> np.ndarray:
    """Voltage-only vector field v' = w0 j v + eta (K - L) v + alpha Phi(v) v.

    Phi_k = (|v*_k| - |v_k|) / |v*_k|.

    Raises:
        ValidationError: if the line ratios are not uniform.
    """
    v = np.asarray(v, dtype=float)
    if not params.uniform_line_ratio():
        raise ValidationError("the explicit OPF field needs uniform R/L lines")
    k_mat = power_gains(setpoint)
    lap = rotated_laplacian(topology, params, setpoint.rho)
    mag = np.hypot(v[0::2], v[1::2])
    phi = np.repeat((setpoint.v_mag_star - mag) / setpoint.v_mag_star, 2)
    return (params.omega0 * algebra.jmat(params.n) @ v + setpoint.eta * (k_mat - lap) @ v
            + setpoint.alpha * phi * v)


def kernel_setpoint(setpoint: OpfSetpoint, topology: network.Topology,
                    params: network.GridParams) -> np.ndarray:
    """Voltage profile in ker(K - L) with node 1 at angle 0 and magnitude |v*_1|.

    Raises:
        ValidationError: kernel dimension other than 2 (inconsistent set-points)
            or a magnitude mismatch above 1% (infeasible magnitude profile).
    """
    params.check_topology(topology)
    if not params.uniform_line_ratio():
        raise ValidationError("kernel_setpoint needs uniform R/L lines")
    mat = power_gains(setpoint) - rotated_laplacian(topology, params, setpoint.rho)
    _, s, vt = np.linalg.svd(mat)
    null = s <= KERNEL_RTOL * s[0]
    dim = int(null.sum())
    if dim != 2:
        raise ValidationError(f"kernel of K - L has dimension {dim}, expected 2 (inconsistent set-points)")
    z = algebra.to_complex_vector(vt[-1])
    if abs(z[0]) == 0.0:
        raise ValidationError("reference node has zero voltage in the kernel")
    z = z * (setpoint.v_mag_star[0] / z[0])
    mismatch = np.abs(np.abs(z) - setpoint.v_mag_star) / setpoint.v_mag_star
    if np.any(mismatch > MAGNITUDE_RTOL):
        k = int(np.argmax(mismatch))
        raise ValidationError(f"kernel magnitude at node {k + 1} differs from |v*| by {100 * mismatch[k]:.2f}%")
    return algebra.from_complex_vector(z)


def _steady_from_xi(xi: np.ndarray, plant: Plant):
    maps = plant.maps
    if plant.model == "reduced":
        i_t = algebra.solve(maps.z_t, maps.e_big.T @ xi) if plant.m else np.zeros(0)
        return maps.e_big @ i_t, xi.copy(), i_t
    return maps.steady_state(xi)


def to_local(v_star, plant: Plant) -> LocalReferences:
    """Local references reproducing the bus voltages ``v_star``.

    The reduced model has xi* = v*; the others invert the bus-voltage map pi2.

    Raises:
        SingularMatrixError: pi2 not invertible.
        ValidationError: an EMF block vanishes.
    """
    v_star = np.asarray(v_star, dtype=float)
    if v_star.size != 2 * plant.n:
        raise ValidationError("v_star: expected 2n entries")
    if plant.model == "reduced":
        xi = v_star.copy()
    else:
        try:
            xi = algebra.solve(plant.maps.pi2, v_star)
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"bus-voltage map is singular: {exc}") from exc
    theta, i_r = network.polar_readout(xi, plant.params.L_m, plant.params.omega0)
    i_s, v, i_t = _steady_from_xi(xi, plant)
    return LocalReferences(i_r, theta, xi, v, i_t, i_s, plant.model)


def references_from_angles(theta_star, i_r_star, plant: Plant) -> LocalReferences:
    """Steady quantities for given local references."""
    params = plant.params.with_updates(i_r_star=np.asarray(i_r_star, dtype=float))
    theta_star = np.asarray(theta_star, dtype=float)
    xi = network.emf(theta_star, params)
    i_s, v, i_t = _steady_from_xi(xi, plant)
    return LocalReferences(params.i_r_star.copy(), theta_star, xi, v, i_t, i_s, plant.model)


def to_network(refs: LocalReferences, plant: Plant) -> NetworkFlows:
    """Sending-end line powers and node injections at the steady state of ``refs``.

    Each line's sending end is its tail (the +1 incidence entry); the current
    on line e flows from tail to head.
    """
    p = plant.params
    ref_params = p.with_updates(i_r_star=refs.i_r_star)
    xi = network.emf(refs.theta_star, ref_params)
    _, v, i_t = _steady_from_xi(xi, plant)
    inc = plant.topology.incidence
    tails = np.argmax(inc == 1, axis=0)
    vt = np.stack([v[2 * tails], v[2 * tails + 1]], axis=1)
    it = i_t.reshape(-1, 2)
    p_edge = np.einsum("ei,ei->e", vt, it)
    q_edge = vt[:, 1] * it[:, 0] - vt[:, 0] * it[:, 1]
    inj = (plant.maps.e_big @ i_t).reshape(-1, 2)
    vv = v.reshape(-1, 2)
    p_node = np.einsum("ki,ki->k", vv, inj)
    q_node = vv[:, 1] * inj[:, 0] - vv[:, 0] * inj[:, 1]
    return NetworkFlows(p_edge, q_edge, p_node, q_node, np.hypot(vv[:, 0], vv[:, 1]))


def setpoint_from_voltages(v, topology: network.Topology, params: network.GridParams,
                           eta: float = 1.0, alpha: float = 10.0) -> OpfSetpoint:
    """Consistent set-points produced by a given voltage profile through the lines."""
    v = np.asarray(v, dtype=float)
    lap = topology.e_big @ algebra.solve(params.z_t, topology.e_big.T)
    inj = (lap @ v).reshape(-1, 2)
    vv = v.reshape(-1, 2)
    p = np.einsum("ki,ki->k", vv, inj)
    q = vv[:, 1] * inj[:, 0] - vv[:, 0] * inj[:, 1]
    return OpfSetpoint.from_params(p, q, np.hypot(vv[:, 0], vv[:, 1]), params, eta, alpha)


def translate(setpoint: OpfSetpoint, plant: Plant) -> LocalReferences:
    """Set-points to local references: kernel voltage profile, then the local readout."""
    return to_local(kernel_setpoint(setpoint, plant.topology, plant.params), plant)


def loss_balance(setpoint: OpfSetpoint, v, topology: network.Topology,
                 params: network.GridParams) -> float:
    """Total requested active injection minus the resistive line losses at ``v``.

    Zero for consistent set-points; checked after the kernel is found.
    """
    v = np.asarray(v, dtype=float)
    i_t = algebra.solve(params.z_t, topology.e_big.T @ v)
    losses = float(np.sum(np.repeat(params.R_t, 2) * i_t ** 2))
    return float(setpoint.p_star.sum() - losses)
