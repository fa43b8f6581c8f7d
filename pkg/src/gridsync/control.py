"""Controller catalog and the energy functions the laws realize.

Every law returns the torque deviation tau~ (mechanical input minus the
steady loss term). The proportional damping K_p is applied on top of every
law as ``tau~ <- tau~ - K_p w~``.

Potentials are written in the rotor-flux embedding Psi(theta), so each one is

    S(theta) = 1/2 (A Psi(theta - s) - c)^T P (A Psi(theta - s) - c)

with gradient W(theta - s)^T A^T P (A Psi(theta - s) - c). A steady-state
quantity A_xi xi_hat is covered by A = w0 A_xi j, since xi_hat = w0 j Psi.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import algebra, network
from .dynamics import Plant, SimState, static_stator_algebraic, steady_electrical
from .errors import ValidationError

LAWS = (
    "open_loop",
    "comm_feedback_linearization",
    "incremental_full",
    "reduced_decentralized",
    "simplified_full_decentralized",
    "full_decentralized_exact",
    "full_decentralized_approx",
    "decoupled_reference",
)
CANDIDATES = ("S_bar", "S_tilde", "S_hat")

COMPATIBLE_MODELS = {
    "open_loop": ("reduced", "static_stator", "full"),
    "comm_feedback_linearization": ("reduced", "static_stator", "full"),
    "decoupled_reference": ("reduced", "static_stator", "full"),
    "incremental_full": ("full",),
    "reduced_decentralized": ("reduced",),
    "simplified_full_decentralized": ("static_stator",),
    "full_decentralized_exact": ("full",),
    "full_decentralized_approx": ("full",),
}


@dataclass(frozen=True)
class ControllerSpec:
    """Selected law with its angle references and options.

    Attributes:
        law: one of :data:`LAWS`.
        theta_star: angle references (rad).
        candidate: energy candidate for the communication-based law.
        approximate: use the local voltage approximation of the simplified
            static-stator law.
        tau_open: constant torque for the open-loop law; the steady
            electrical torque at ``theta_star`` when None.
    """

    law: str
    theta_star: np.ndarray
    candidate: str = "S_bar"
    approximate: bool = False
    tau_open: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.law not in LAWS:
            raise ValidationError(f"controller.law: expected one of {LAWS}, got {self.law!r}")
        if self.candidate not in CANDIDATES:
            raise ValidationError(f"controller.candidate: expected one of {CANDIDATES}")
        th = np.atleast_1d(np.asarray(self.theta_star, dtype=float))
        if not np.all(np.isfinite(th)):
            raise ValidationError("controller.theta_star: entries must be finite")
        object.__setattr__(self, "theta_star", th)
        if self.tau_open is not None:
            object.__setattr__(self, "tau_open", np.asarray(self.tau_open, dtype=float))

    @property
    def is_approximate(self) -> bool:
        return self.law == "full_decentralized_approx" or (
            self.law == "simplified_full_decentralized" and self.approximate)


@dataclass(frozen=True)
class Setpoints:
    """Steady references implied by theta* and the rotor current set-points."""

    theta_star: np.ndarray
    i_r_star: np.ndarray
    xi_star: np.ndarray
    i_s_star: np.ndarray
    v_star: np.ndarray
    i_t_star: np.ndarray
    tau_open: np.ndarray


def check_compatible(spec: ControllerSpec, plant: Plant) -> None:
    """Enforce the law/model table and the law preconditions."""
    if plant.model not in COMPATIBLE_MODELS[spec.law]:
        raise ValidationError(
            f"controller {spec.law!r} is not defined for the {plant.model!r} model "
            f"(allowed: {COMPATIBLE_MODELS[spec.law]})")
    if spec.theta_star.size != plant.n:
        raise ValidationError("controller.theta_star: one angle per node required")
    if spec.law == "comm_feedback_linearization":
        if plant.topology.comm_incidence is None:
            raise ValidationError("comm_feedback_linearization needs a communication graph")
        if spec.candidate == "S_hat":
            raise ValidationError("the S_hat candidate is discontinuous on the torus and is not offered as a law")
    if spec.law in ("reduced_decentralized", "simplified_full_decentralized"):
        require_uniform_ratio(plant.params)
    if spec.law == "decoupled_reference" and np.any(plant.params.L_m <= 0):
        raise ValidationError("decoupled_reference needs positive L_m at every node")
    if spec.tau_open is not None and spec.tau_open.shape != (plant.n,):
        raise ValidationError("controller.tau_open: one torque per node required")


def require_uniform_ratio(params: network.GridParams) -> float:
    """Return the common L_t/R_t ratio or raise."""
    if not params.uniform_line_ratio():
        raise ValidationError(
            "line L_t/R_t ratios are not uniform; this law needs a uniform ratio "
            f"(got {np.array2string(params.line_ratio(), precision=4)})")
    return float(params.line_ratio()[0]) if params.m else 0.0


def derive_setpoints(plant: Plant, spec: ControllerSpec) -> Setpoints:
    """Steady references for ``spec.theta_star`` on the plant's model variant."""
    th = spec.theta_star
    xi = network.emf(th, plant.params)
    i_s, v, i_t = steady_electrical(th, plant)
    if spec.tau_open is not None:
        tau = spec.tau_open
    else:
        st = SimState(th, np.zeros(plant.n), i_t, i_s if plant.full else None, v if plant.full else None)
        from .dynamics import electrical_torque
        tau = electrical_torque(st, plant)
    return Setpoints(th.copy(), plant.params.i_r_star.copy(), xi, i_s, v, i_t, np.asarray(tau, dtype=float))


# --- potentials ------------------------------------------------------------------

@dataclass(frozen=True)
class Potential:
    """Quadratic potential 1/2 (A Psi(theta - shift) - c)^T P (A Psi(theta - shift) - c)."""

    a_map: np.ndarray
    c: np.ndarray
    p: np.ndarray
    shift: np.ndarray
    amp: np.ndarray

    def _residual(self, theta):
        phi = np.asarray(theta, dtype=float) - self.shift
        psi = np.empty(phi.shape[:-1] + (2 * phi.shape[-1],))
        psi[..., 0::2] = self.amp * np.cos(phi)
        psi[..., 1::2] = self.amp * np.sin(phi)
        return phi, psi @ self.a_map.T - self.c

    def value(self, theta):
        _, y = self._residual(theta)
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.p, y)

    def gradient(self, theta):
        phi, y = self._residual(theta)
        q = (y @ self.p.T) @ self.a_map
        return -self.amp * np.sin(phi) * q[..., 0::2] + self.amp * np.cos(phi) * q[..., 1::2]


def _steady_potential(plant: Plant, a_xi: np.ndarray, c: np.ndarray, p: np.ndarray) -> Potential:
    w0 = plant.params.omega0
    a_map = w0 * a_xi @ algebra.jmat(plant.n)
    return Potential(a_map, np.asarray(c, dtype=float), p, np.zeros(plant.n), plant.params.a)


def candidate_potential(plant: Plant, theta_star, which: str) -> Potential:
    """Potential form of the communication-graph candidates S_bar and S_tilde."""
    lap2 = algebra.kron_expand(plant.topology.comm_laplacian())
    n = plant.n
    eye = np.eye(2 * n)
    theta_star = np.asarray(theta_star, dtype=float)
    if which == "S_bar":
        return Potential(eye, np.zeros(2 * n), lap2, theta_star.copy(), plant.params.a)
    if which == "S_tilde":
        return Potential(eye, network.psi(theta_star, plant.params), lap2, np.zeros(n), plant.params.a)
    raise ValidationError(f"no potential form for candidate {which!r}")


def decoupled_potential(plant: Plant, theta_star) -> Potential:
    """1/2 (Psi - Psi*)^T (L_m (x) I2)^-1 (Psi - Psi*)."""
    p = np.kron(np.diag(1.0 / plant.params.L_m), np.eye(2))
    return Potential(np.eye(2 * plant.n), network.psi(theta_star, plant.params), p,
                     np.zeros(plant.n), plant.params.a)


def law_potential(plant: Plant, spec: ControllerSpec, sp: Setpoints) -> Optional[Potential]:
    """Potential realized by the law's closed loop (None for the open loop).

    Approximate laws report the potential of their exact counterpart.
    """
    maps, p = plant.maps, plant.params
    law = spec.law
    if law == "open_loop":
        return None
    if law == "comm_feedback_linearization":
        return candidate_potential(plant, sp.theta_star, spec.candidate)
    if law == "decoupled_reference":
        return decoupled_potential(plant, sp.theta_star)
    if law == "reduced_decentralized":
        a_xi = algebra.solve(maps.z_t, maps.e_big.T)
        return _steady_potential(plant, a_xi, sp.i_t_star, np.kron(np.diag(p.L_t), np.eye(2)))
    if law == "simplified_full_decentralized":
        return _steady_potential(plant, maps.pi3, sp.i_t_star, np.kron(np.diag(p.L_t), np.eye(2)))
    if law in ("full_decentralized_exact", "full_decentralized_approx"):
        return _steady_potential(plant, maps.pi2, sp.v_star, np.kron(np.diag(p.C), np.eye(2)))
    if law == "incremental_full":
        return _steady_potential(plant, np.eye(2 * plant.n), sp.xi_star, incremental_storage(plant))
    raise ValidationError(law)


def incremental_storage(plant: Plant) -> np.ndarray:
    """Pi^T diag(L_s, -C, L_t) Pi, the quadratic form of the incremental potential."""
    maps, p = plant.maps, plant.params
    pi = np.vstack([maps.y_net, maps.pi2, maps.pi3])
    weights = np.concatenate([np.repeat(p.L_s, 2), -np.repeat(p.C, 2), np.repeat(p.L_t, 2)])
    return pi.T @ (weights[:, None] * pi)


# --- energy candidates over the communication graph ------------------------------------

def _sb(theta, lap: np.ndarray, amp: np.ndarray):
    c, s = amp * np.cos(theta), amp * np.sin(theta)
    return 0.5 * (np.einsum("...i,ij,...j->...", c, lap, c) + np.einsum("...i,ij,...j->...", s, lap, s))


def _sb_grad(theta, lap: np.ndarray, amp: np.ndarray):
    c, s = amp * np.cos(theta), amp * np.sin(theta)
    return -s * (c @ lap.T) + c * (s @ lap.T)


def energy_candidate(theta, theta_star, topology: network.Topology, params: network.GridParams,
                     which: str = "S_bar", laplacian: Optional[np.ndarray] = None):
    """Evaluate S_bar, S_tilde or S_hat built on S_B = 1/2 Psi^T (B K B^T (x) I2) Psi.

    S_hat is evaluated on the covering space (no angle wrapping), so it jumps
    by -2 pi dS_B(theta*)_k across a full turn of angle k.

    Args:
        theta: angles, shape (..., n).
        laplacian: overrides B K B^T (e.g. the electrical Laplacian for S_E).
    """
    lap = topology.comm_laplacian() if laplacian is None else laplacian
    amp = params.a
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if which == "S_B":
        return _sb(theta, lap, amp)
    if which == "S_bar":
        return _sb(theta - theta_star, lap, amp)
    if which == "S_tilde":
        d = network.psi(theta, params) - network.psi(theta_star, params)
        lap2 = algebra.kron_expand(lap)
        return 0.5 * np.einsum("...i,ij,...j->...", d, lap2, d)
    if which == "S_hat":
        g = _sb_grad(theta_star, lap, amp)
        return _sb(theta, lap, amp) - _sb(theta_star, lap, amp) - (theta - theta_star) @ g
    raise ValidationError(f"unknown energy candidate {which!r}")


def energy_candidate_gradient(theta, theta_star, topology: network.Topology, params: network.GridParams,
                              which: str = "S_bar", laplacian: Optional[np.ndarray] = None):
    """Angle gradient of :func:`energy_candidate`."""
    lap = topology.comm_laplacian() if laplacian is None else laplacian
    amp = params.a
    theta = np.asarray(theta, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    if which == "S_B":
        return _sb_grad(theta, lap, amp)
    if which == "S_bar":
        return _sb_grad(theta - theta_star, lap, amp)
    if which == "S_tilde":
        d = network.psi(theta, params) - network.psi(theta_star, params)
        q = d @ algebra.kron_expand(lap).T
        return -amp * np.sin(theta) * q[..., 0::2] + amp * np.cos(theta) * q[..., 1::2]
    if which == "S_hat":
        return _sb_grad(theta, lap, amp) - _sb_grad(theta_star, lap, amp)
    raise ValidationError(f"unknown energy candidate {which!r}")


# --- laws ----------------------------------------------------------------------------

def _coupling_torque(state: SimState, plant: Plant) -> np.ndarray:
    from .dynamics import electrical_torque
    return electrical_torque(state, plant)


def open_loop(state: SimState, plant: Plant, sp: Setpoints) -> np.ndarray:
    """Constant torque, by default the steady electrical torque at theta*."""
    return sp.tau_open.copy()


def comm_feedback_linearization(state: SimState, plant: Plant, sp: Setpoints,
                                candidate: str = "S_bar") -> np.ndarray:
    """Cancel the measured electrical torque and inject -grad S over the communication graph."""
    grad = energy_candidate_gradient(state.theta, sp.theta_star, plant.topology, plant.params, candidate)
    return _coupling_torque(state, plant) - grad


def decoupled_reference(state: SimState, plant: Plant, sp: Setpoints) -> np.ndarray:
    """Per-node pull toward theta*: gradient_k = L_m,k I_r,k^2 sin(theta_k - theta*_k)."""
    p = plant.params
    grad = p.L_m * p.i_r_star ** 2 * np.sin(state.theta - sp.theta_star)
    return _coupling_torque(state, plant) - grad


def incremental_gain(plant: Plant):
    """K = Re(Y) Y^-1 and the shift operator Im(Y), with Y = Y_net.

    Y_net is complex symmetric, so in the real embedding its real part is the
    symmetric part and its imaginary part the skew part.
    """
    y = plant.maps.y_net
    re_y = 0.5 * (y + y.T)
    im_y = 0.5 * (y - y.T)
    return algebra.solve(y.T, re_y.T).T, im_y


def incremental_full(state: SimState, plant: Plant, sp: Setpoints) -> np.ndarray:
    """tau~ = W^T (K i_s + Im(Y) xi*); K is dense, so this law is not local."""
    k, im_y = incremental_gain(plant)
    w = network.w_matrix(state.theta, plant.params)
    return w.T @ (k @ state.i_s + im_y @ sp.xi_star)


def line_gains(plant: Plant):
    """E Z_t^-T R_t and E Z_t^-T w0 j L_t for the line-current laws."""
    p, maps = plant.params, plant.maps
    if p.m == 0:
        z = np.zeros((2 * p.n, 0))
        return z, z
    zt_inv_t = algebra.inv(maps.z_t).T
    r_t = np.kron(np.diag(p.R_t), np.eye(2))
    jl_t = p.omega0 * algebra.jmat(p.m) @ np.kron(np.diag(p.L_t), np.eye(2))
    return maps.e_big @ zt_inv_t @ r_t, maps.e_big @ zt_inv_t @ jl_t


def reduced_decentralized(state: SimState, plant: Plant, sp: Setpoints) -> np.ndarray:
    """tau~ = W^T E Z_t^-T R_t i_t - W^T E Z_t^-T w0 j L_t i_t*.

    With a uniform line ratio alpha = L_t/R_t both gains commute with E, so
    node k only needs its own injection (E i_t)_k; see
    :func:`reduced_decentralized_local`.
    """
    require_uniform_ratio(plant.params)
    g_r, g_l = line_gains(plant)
    w = network.w_matrix(state.theta, plant.params)
    return w.T @ (g_r @ state.i_t - g_l @ sp.i_t_star)


def reduced_decentralized_local(injection, injection_star, theta, plant: Plant) -> np.ndarray:
    """Same law from local injections: scalar complex gains per node.

    The gains are 1/(1 - i w0 alpha) on (E i_t)_k and
    i w0 alpha/(1 - i w0 alpha) on (E i_t*)_k.
    """
    alpha = require_uniform_ratio(plant.params)
    w0 = plant.params.omega0
    c1 = 1.0 / (1.0 - 1j * w0 * alpha)
    c2 = 1j * w0 * alpha / (1.0 - 1j * w0 * alpha)
    z = c1 * algebra.to_complex_vector(injection) - c2 * algebra.to_complex_vector(injection_star)
    w = network.w_matrix(theta, plant.params)
    return w.T @ algebra.from_complex_vector(z)


def simplified_full_decentralized(state: SimState, plant: Plant, sp: Setpoints,
                                  approximate: bool = False) -> np.ndarray:
    """Static-stator law: cancel the coupling torque, add the shifted line-energy gradient.

    exact:  W^T (I + Y_c Z_s)^-1 E i_t + W^T pi2^T E Z_t^-T w0 j L_t (i_t - i_t*)
    approx: the second term's W^T pi2^T is replaced by diag(v/w0)^T built
            from the measured bus voltages.
    """
    require_uniform_ratio(plant.params)
    maps = plant.maps
    _, g_l = line_gains(plant)
    w = network.w_matrix(state.theta, plant.params)
    cancel = w.T @ (maps.stator_split @ (maps.e_big @ state.i_t))
    err = g_l @ (state.i_t - sp.i_t_star)
    if approximate:
        v = static_stator_algebraic(state, plant.params, maps)[1]
        return cancel + algebra.block_diag_pairs(v / plant.params.omega0).T @ err
    return cancel + w.T @ (maps.pi2.T @ err)


def full_decentralized(state: SimState, plant: Plant, sp: Setpoints, approximate: bool = False) -> np.ndarray:
    """Voltage-based law for the full model.

    exact:  W^T i_s + W^T pi2^T w0 j C (v - v*)
    approx: W^T i_s + diag(v/w0)^T w0 j C (v - v*), i.e. per node
            C_k v_k^T j (v_k - v*_k).
    """
    p = plant.params
    w = network.w_matrix(state.theta, p)
    jc = p.omega0 * algebra.jmat(p.n) @ np.kron(np.diag(p.C), np.eye(2))
    err = jc @ (state.v - sp.v_star)
    if approximate:
        return w.T @ state.i_s + algebra.block_diag_pairs(state.v / p.omega0).T @ err
    return w.T @ state.i_s + w.T @ (plant.maps.pi2.T @ err)


def law_torque(state: SimState, plant: Plant, spec: ControllerSpec, sp: Setpoints) -> np.ndarray:
    """Torque of the selected law without the K_p damping term."""
    law = spec.law
    if law == "open_loop":
        return open_loop(state, plant, sp)
    if law == "comm_feedback_linearization":
        return comm_feedback_linearization(state, plant, sp, spec.candidate)
    if law == "decoupled_reference":
        return decoupled_reference(state, plant, sp)
    if law == "incremental_full":
        return incremental_full(state, plant, sp)
    if law == "reduced_decentralized":
        return reduced_decentralized(state, plant, sp)
    if law == "simplified_full_decentralized":
        return simplified_full_decentralized(state, plant, sp, spec.approximate)
    if law == "full_decentralized_exact":
        return full_decentralized(state, plant, sp, False)
    if law == "full_decentralized_approx":
        return full_decentralized(state, plant, sp, True)
    raise ValidationError(law)


def controller_torque(state: SimState, plant: Plant, spec: ControllerSpec, sp: Setpoints) -> np.ndarray:
    """Law torque plus the proportional damping -K_p w~."""
    return law_torque(state, plant, spec, sp) - plant.params.K_p * state.omega_tilde


def closed_loop_rhs(state: SimState, plant: Plant, spec: ControllerSpec, sp: Setpoints) -> SimState:
    """Reference composition of the model right-hand side and the controller."""
    from .dynamics import model_rhs
    return model_rhs(state, controller_torque(state, plant, spec, sp), plant)


def realized_gradient(theta, plant: Plant, spec: ControllerSpec, sp: Setpoints) -> np.ndarray:
    """-(tau~ - tau_e) at the frozen-angle electrical steady state with w~ = 0.

    For a law that realizes the potential S this equals grad S(theta).
    """
    from .dynamics import electrical_torque, equilibrium_state
    st = equilibrium_state(plant, theta)
    return -(law_torque(st, plant, spec, sp) - electrical_torque(st, plant))


def k_offdiagonal_fraction(plant: Plant) -> float:
    """Share of the incremental gain K outside its 2x2 diagonal blocks (Frobenius)."""
    k, _ = incremental_gain(plant)
    mask = np.kron(np.eye(plant.n), np.ones((2, 2))).astype(bool)
    return float(np.linalg.norm(k[~mask]) / np.linalg.norm(k))


def dominance_violation(plant: Plant, spec: ControllerSpec, sp: Setpoints, state: SimState) -> float:
    """Relative gap between the exact and approximate forms of a voltage-approximated law."""
    if spec.law in ("full_decentralized_exact", "full_decentralized_approx"):
        ex = full_decentralized(state, plant, sp, False)
        ap = full_decentralized(state, plant, sp, True)
    elif spec.law == "simplified_full_decentralized":
        ex = simplified_full_decentralized(state, plant, sp, False)
        ap = simplified_full_decentralized(state, plant, sp, True)
    else:
        raise ValidationError("no approximate form for this law")
    return float(np.linalg.norm(ex - ap) / max(np.linalg.norm(ex), 1e-300))


# --- structured form for the compiled integrator ------------------------------------------

def electrical_system(plant: Plant):
    """Electrical rows as z' = A z + B xi, with xi the EMF vector."""
    p, maps = plant.params, plant.maps
    n, m = p.n, p.m
    e_big = maps.e_big
    l_t = np.repeat(p.L_t, 2)
    if plant.model == "full":
        l_s, c = np.repeat(p.L_s, 2), np.repeat(p.C, 2)
        nz = 4 * n + 2 * m
        a = np.zeros((nz, nz))
        s, v, t = slice(0, 2 * n), slice(2 * n, 4 * n), slice(4 * n, nz)
        a[s, s] = -maps.z_s / l_s[:, None]
        a[s, v] = -np.diag(1.0 / l_s)
        a[v, s] = np.diag(1.0 / c)
        a[v, v] = -maps.y_c / c[:, None]
        a[v, t] = -e_big / c[:, None]
        a[t, v] = e_big.T / l_t[:, None] if m else a[t, v]
        a[t, t] = -maps.z_t / l_t[:, None] if m else a[t, t]
        b = np.zeros((nz, 2 * n))
        b[s, :] = np.diag(1.0 / l_s)
        return a, b
    if m == 0:
        return np.zeros((0, 0)), np.zeros((0, 2 * n))
    if plant.model == "reduced":
        return -maps.z_t / l_t[:, None], e_big.T / l_t[:, None]
    return -maps.z_t_prime / l_t[:, None], (e_big.T @ maps.stator_split) / l_t[:, None]


def coupling_matrix(plant: Plant) -> np.ndarray:
    """Matrix C_e with electrical torque W^T C_e z."""
    maps = plant.maps
    n, m = plant.n, plant.m
    if plant.model == "full":
        out = np.zeros((2 * n, 4 * n + 2 * m))
        out[:, :2 * n] = np.eye(2 * n)
        return out
    if plant.model == "reduced":
        return maps.e_big.copy()
    return maps.stator_split @ maps.e_big


def voltage_maps(plant: Plant):
    """Bus voltage as v = H_z z + H_xi xi for every model variant."""
    n, m = plant.n, plant.m
    maps = plant.maps
    if plant.model == "full":
        hz = np.zeros((2 * n, 4 * n + 2 * m))
        hz[:, 2 * n:4 * n] = np.eye(2 * n)
        return hz, np.zeros((2 * n, 2 * n))
    if plant.model == "reduced":
        return np.zeros((2 * n, 2 * m)), np.eye(2 * n)
    return -maps.line_to_bus @ maps.e_big, maps.emf_to_bus.copy()


def kernel_arguments(plant: Plant, spec: ControllerSpec, sp: Setpoints) -> tuple:
    """Pack the closed loop into the structured form used by the compiled kernels.

    tau~ = W^T (F z + f0) + sum_k v_k^T (G z + g0)_k / w0 - grad_pot + tau0 - K_p w~
    """
    check_compatible(spec, plant)
    p, maps = plant.params, plant.maps
    n = p.n
    a_el, b_el = electrical_system(plant)
    nz = a_el.shape[0]
    ce = coupling_matrix(plant)
    hz, hxi = voltage_maps(plant)
    f = np.zeros((2 * n, nz))
    f0 = np.zeros(2 * n)
    g = np.zeros((2 * n, nz))
    g0 = np.zeros(2 * n)
    tau0 = np.zeros(n)
    use_g = 0
    pot = None
    law = spec.law
    if law == "open_loop":
        tau0 = sp.tau_open.copy()
    elif law == "comm_feedback_linearization":
        f = ce.copy()
        pot = candidate_potential(plant, sp.theta_star, spec.candidate)
    elif law == "decoupled_reference":
        f = ce.copy()
        pot = decoupled_potential(plant, sp.theta_star)
    elif law == "incremental_full":
        k, im_y = incremental_gain(plant)
        f[:, :2 * n] = k
        f0 = im_y @ sp.xi_star
    elif law == "reduced_decentralized":
        g_r, g_l = line_gains(plant)
        f = g_r
        f0 = -g_l @ sp.i_t_star
    elif law == "simplified_full_decentralized":
        _, g_l = line_gains(plant)
        f = ce.copy()
        if spec.approximate:
            g, g0, use_g = g_l.copy(), -g_l @ sp.i_t_star, 1
        else:
            f = f + maps.pi2.T @ g_l
            f0 = -maps.pi2.T @ g_l @ sp.i_t_star
    elif law in ("full_decentralized_exact", "full_decentralized_approx"):
        jc = p.omega0 * algebra.jmat(n) @ np.kron(np.diag(p.C), np.eye(2))
        f[:, :2 * n] = np.eye(2 * n)
        if law == "full_decentralized_approx":
            g[:, 2 * n:4 * n] = jc
            g0, use_g = -jc @ sp.v_star, 1
        else:
            f[:, 2 * n:4 * n] = maps.pi2.T @ jc
            f0 = -maps.pi2.T @ jc @ sp.v_star
    if pot is None:
        pot = Potential(np.zeros((0, 2 * n)), np.zeros(0), np.zeros((0, 0)), np.zeros(n), p.a)
        use_pot = 0
    else:
        use_pot = 1
    flags = np.array([use_g, use_pot], dtype=np.int64)
    c = np.ascontiguousarray
    return (c(p.a), np.array([p.omega0]), c(p.M), c(plant.damping), c(p.K_p), c(tau0),
            c(a_el), c(b_el), c(ce), c(f), c(f0), c(g), c(g0), c(hz), c(hxi), flags,
            c(pot.a_map), c(pot.c), c(pot.p), c(pot.shift))
