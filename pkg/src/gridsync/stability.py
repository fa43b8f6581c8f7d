"""Total energy, dissipation matrices and damping certificates.

Error coordinates are taken about the frozen-angle steady state: with
``xi_hat = w0 W(theta) 1`` the electrical errors are ``z - P_z xi_hat``, where
``P_z`` stacks the steady maps of the model variant. Along the closed loop of
each supported law

    dH~/dt = -x~^T Q(theta) x~,    x~ = [w~, electrical errors],

so a damping certificate asks for 1/2 (Q + Q^T) > 0 over the angle torus.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import algebra, network
from .control import ControllerSpec, Potential, Setpoints, law_potential
from .dynamics import Plant, SimState
from .errors import ValidationError

Q_LAWS = ("reduced_decentralized", "simplified_full_decentralized",
          "full_decentralized_exact", "incremental_full")
_Q_MODEL = {"reduced_decentralized": "reduced", "simplified_full_decentralized": "static_stator",
            "full_decentralized_exact": "full", "incremental_full": "full"}

# Default points per free angle, indexed by node count.
_DEFAULT_GRID = {1: 32, 2: 32, 3: 32, 4: 12, 5: 6, 6: 4}
MAX_SWEEP_NODES = 6


@dataclass(frozen=True)
class EnergyReport:
    """Components of the total energy H~ (J)."""

    kinetic: float
    stator: float
    capacitor: float
    line: float
    potential: float

    @property
    def h_tilde(self) -> float:
        return self.kinetic + self.stator + self.capacitor + self.line + self.potential


def storage_maps(plant: Plant):
    """Electrical inertias (per state entry) and the steady map P_z of the model."""
    p, maps = plant.params, plant.maps
    l_t = np.repeat(p.L_t, 2)
    if plant.model == "full":
        mz = np.concatenate([np.repeat(p.L_s, 2), np.repeat(p.C, 2), l_t])
        return mz, np.vstack([maps.y_net, maps.pi2, maps.pi3])
    if plant.model == "reduced":
        pz = algebra.solve(maps.z_t, maps.e_big.T) if p.m else np.zeros((0, 2 * p.n))
        return l_t, pz
    return l_t, maps.pi3.copy()


def _energy_parts(plant: Plant, spec: ControllerSpec, sp: Setpoints):
    mz, pz = storage_maps(plant)
    if spec.law in ("comm_feedback_linearization", "decoupled_reference"):
        mz = np.zeros_like(mz)
    pot = law_potential(plant, spec, sp)
    return mz, pz, pot


def kernel_energy_arguments(plant: Plant, spec: ControllerSpec, sp: Setpoints) -> tuple:
    """Energy description consumed by the compiled integrator."""
    mz, pz, pot = _energy_parts(plant, spec, sp)
    n = plant.n
    c = np.ascontiguousarray
    if pot is None:
        pot = Potential(np.zeros((0, 2 * n)), np.zeros(0), np.zeros((0, 0)), np.zeros(n), plant.params.a)
        flag = 0
    else:
        flag = 1
    return (c(mz), c(pz), c(pot.a_map), c(pot.c), c(pot.p), c(pot.shift), np.array([flag], dtype=np.int64))


def electrical_errors(state: SimState, plant: Plant) -> np.ndarray:
    """Electrical states minus their frozen-angle steady values."""
    _, pz = storage_maps(plant)
    z = state.to_vector()[2 * plant.n:]
    return z - pz @ network.emf(state.theta, plant.params)


def total_energy(state: SimState, plant: Plant, spec: ControllerSpec, sp: Setpoints) -> EnergyReport:
    """Kinetic, electrical-error and potential parts of H~ for a dq state."""
    if state.frame != "dq":
        raise ValidationError("total energy is defined on dq states")
    mz, _, pot = _energy_parts(plant, spec, sp)
    n = plant.n
    err = electrical_errors(state, plant)
    quad = 0.5 * mz * err ** 2
    kinetic = float(0.5 * np.sum(plant.params.M * state.omega_tilde ** 2))
    if plant.full:
        stator, cap, line = quad[:2 * n].sum(), quad[2 * n:4 * n].sum(), quad[4 * n:].sum()
    else:
        stator, cap, line = 0.0, 0.0, quad.sum()
    s = 0.0 if pot is None else float(pot.value(state.theta))
    return EnergyReport(kinetic, float(stator), float(cap), float(line), s)


def error_coordinates(state: SimState, plant: Plant) -> np.ndarray:
    """x~ = [w~, electrical errors] used by the dissipation quadratic form."""
    return np.concatenate([state.omega_tilde, electrical_errors(state, plant)])


# --- dissipation matrices ------------------------------------------------------------

def _w_batch(theta, amp):
    """W(theta) for a batch of angle vectors, shape (B, 2n, n)."""
    theta = np.atleast_2d(theta)
    b, n = theta.shape
    w = np.zeros((b, 2 * n, n))
    k = np.arange(n)
    w[:, 2 * k, k] = -amp * np.sin(theta)
    w[:, 2 * k + 1, k] = amp * np.cos(theta)
    return w


def assemble_q(law: str, theta, plant: Plant) -> np.ndarray:
    """Dissipation matrix Q(theta) with dH~/dt = -x~^T Q x~.

    ``theta`` may be a single angle vector or a batch (B, n). The damping
    block uses D + K_p (D' + K_p on the static-stator model). Blocks, with
    jw = w0 j and S = (I + Y_c Z_s)^-1:

    * reduced: [[D, -W^T E Z_t^-T jw L_t], [-R_t Z_t^-1 E^T W, R_t]]
    * static stator: [[D', -2 W^T pi2^T E Z_t^-T jw L_t], [-E^T S W, Z_t']]
    * full, voltage law: first column [D; (jw L_s Y - I) W; 2 jw C pi2 W;
      jw L_t pi3 W], diagonal D, R_s, G, R_t
    * full, incremental law: first column [D; (jw L_s Y - K^T) W;
      jw C pi2 W; jw L_t pi3 W], same diagonal

    Raises:
        ValidationError: unsupported law or law/model mismatch.
    """
    if law not in Q_LAWS:
        raise ValidationError(f"assemble_q: law must be one of {Q_LAWS}")
    if plant.model != _Q_MODEL[law]:
        raise ValidationError(f"assemble_q: {law!r} is stated for the {_Q_MODEL[law]!r} model")
    theta = np.asarray(theta, dtype=float)
    single = theta.ndim == 1
    p, maps = plant.params, plant.maps
    n, m = p.n, p.m
    w = _w_batch(theta, p.a)
    nb = w.shape[0]
    jw = p.omega0 * algebra.jmat(n)
    damp = plant.damping + p.K_p
    if law in ("reduced_decentralized", "simplified_full_decentralized"):
        jl_t = p.omega0 * algebra.jmat(m) @ np.kron(np.diag(p.L_t), np.eye(2))
        zt_inv = algebra.inv(maps.z_t) if m else np.zeros((0, 0))
        q = np.zeros((nb, n + 2 * m, n + 2 * m))
        q[:, :n, :n] = np.diag(damp)
        if law == "reduced_decentralized":
            top = maps.e_big @ zt_inv.T @ jl_t
            r_t = np.kron(np.diag(p.R_t), np.eye(2))
            q[:, :n, n:] = -np.einsum("bki,kj->bij", w, top)
            q[:, n:, :n] = -(r_t @ zt_inv @ maps.e_big.T) @ w
            q[:, n:, n:] = r_t
        else:
            top = maps.pi2.T @ maps.e_big @ zt_inv.T @ jl_t
            q[:, :n, n:] = -2.0 * np.einsum("bki,kj->bij", w, top)
            q[:, n:, :n] = -(maps.e_big.T @ maps.stator_split) @ w
            q[:, n:, n:] = maps.z_t_prime
        return q[0] if single else q

    size = 5 * n + 2 * m
    q = np.zeros((nb, size, size))
    s, v, t = slice(n, 3 * n), slice(3 * n, 5 * n), slice(5 * n, size)
    q[:, :n, :n] = np.diag(damp)
    q[:, s, s] = np.kron(np.diag(p.R_s), np.eye(2))
    q[:, v, v] = np.kron(np.diag(p.G), np.eye(2))
    q[:, t, t] = np.kron(np.diag(p.R_t), np.eye(2))
    l_s = np.kron(np.diag(p.L_s), np.eye(2))
    cap = np.kron(np.diag(p.C), np.eye(2))
    l_t = np.kron(np.diag(p.L_t), np.eye(2))
    if law == "full_decentralized_exact":
        stator_gain = jw @ l_s @ maps.y_net - np.eye(2 * n)
        cap_factor = 2.0
    else:
        from .control import incremental_gain
        k, _ = incremental_gain(plant)
        stator_gain = jw @ l_s @ maps.y_net - k.T
        cap_factor = 1.0
    q[:, s, :n] = stator_gain @ w
    q[:, v, :n] = cap_factor * (jw @ cap @ maps.pi2) @ w
    q[:, t, :n] = (jw @ l_t @ maps.pi3) @ w if m else 0.0
    return q[0] if single else q


def min_sym_eigenvalue(q: np.ndarray):
    """Smallest eigenvalue of 1/2 (Q + Q^T), batched over leading axes."""
    sym = 0.5 * (q + np.swapaxes(q, -1, -2))
    return np.linalg.eigvalsh(sym)[..., 0]


# --- certificates -------------------------------------------------------------------

@dataclass(frozen=True)
class DampingCertificate:
    """Verdicts of the angle-grid sweep and, where printed, the explicit D-inequality.

    Attributes:
        law: law id.
        points_per_angle: grid resolution per free angle (node 1 fixed at 0).
        lambda_min: min over the grid of lambda_min(1/2 (Q + Q^T)).
        holds: sweep verdict, ``lambda_min > 0``.
        argmin: angles attaining ``lambda_min``.
        inequality_min: min over the grid of the smallest eigenvalue of the
            explicit inequality's left minus right side (None if not stated).
        inequality_holds: verdict of the explicit inequality.
        inequality_argmin: angles attaining ``inequality_min``.
    """

    law: str
    points_per_angle: int
    lambda_min: float
    holds: bool
    argmin: np.ndarray
    inequality_min: Optional[float] = None
    inequality_holds: Optional[bool] = None
    inequality_argmin: Optional[np.ndarray] = None

    def report(self) -> str:
        lines = [f"law: {self.law}",
                 f"grid: {self.points_per_angle} points per free angle",
                 f"sweep lambda_min: {self.lambda_min:.10g}",
                 f"sweep verdict: {'holds' if self.holds else 'fails'}",
                 "sweep argmin (rad): " + " ".join(f"{x:.6f}" for x in self.argmin)]
        if self.inequality_min is not None:
            lines += [f"inequality margin: {self.inequality_min:.10g}",
                      f"inequality verdict: {'holds' if self.inequality_holds else 'fails'}",
                      "inequality argmin (rad): " + " ".join(f"{x:.6f}" for x in self.inequality_argmin)]
        else:
            lines.append("inequality: not stated for this law")
        return "\n".join(lines)


def default_grid(n: int) -> int:
    if n > MAX_SWEEP_NODES:
        raise ValidationError(f"angle sweeps are limited to {MAX_SWEEP_NODES} nodes (got {n})")
    return _DEFAULT_GRID[n]


def angle_grid(n: int, points: int) -> np.ndarray:
    """All angle vectors with node 1 at 0 and the others on a uniform grid over [0, 2 pi)."""
    axis = 2.0 * np.pi * np.arange(points) / points
    if n == 1:
        return np.zeros((1, 1))
    mesh = np.stack(np.meshgrid(*([axis] * (n - 1)), indexing="ij"), axis=-1).reshape(-1, n - 1)
    return np.hstack([np.zeros((mesh.shape[0], 1)), mesh])


def inequality_matrix(law: str, theta, plant: Plant) -> Optional[np.ndarray]:
    """Left minus right side of the explicit damping inequality, batched; None if not stated.

    * reduced: D - 1/4 W^T E R_t^-1 E^T W
    * static stator: D' - sym(W^T X Z_t'^-1 X^T W) with
      X = pi2^T E Z_t^-T jw L_t + 1/2 S^T E
    """
    p, maps = plant.params, plant.maps
    w = _w_batch(np.asarray(theta, dtype=float), p.a)
    damp = np.diag(plant.damping + p.K_p)
    if law == "reduced_decentralized":
        r_inv = np.kron(np.diag(1.0 / p.R_t), np.eye(2))
        core = maps.e_big @ r_inv @ maps.e_big.T
        return damp - 0.25 * np.einsum("bki,kl,blj->bij", w, core, w)
    if law == "simplified_full_decentralized":
        jl_t = p.omega0 * algebra.jmat(p.m) @ np.kron(np.diag(p.L_t), np.eye(2))
        x = maps.pi2.T @ maps.e_big @ algebra.inv(maps.z_t).T @ jl_t + 0.5 * maps.stator_split.T @ maps.e_big
        core = x @ algebra.inv(maps.z_t_prime) @ x.T
        rhs = np.einsum("bki,kl,blj->bij", w, core, w)
        return damp - 0.5 * (rhs + np.swapaxes(rhs, 1, 2))
    return None


def damping_condition(law: str, plant: Plant, points: Optional[int] = None,
                      batch: int = 4096) -> DampingCertificate:
    """Sweep lambda_min(1/2 (Q + Q^T)) over the angle grid and evaluate the explicit inequality.

    Args:
        law: one of :data:`Q_LAWS`.
        plant: plant on the law's model variant.
        points: points per free angle (default by node count, at least 4).
        batch: grid points per eigenvalue batch.
    """
    n = plant.n
    points = default_grid(n) if points is None else int(points)
    if n > MAX_SWEEP_NODES:
        raise ValidationError(f"angle sweeps are limited to {MAX_SWEEP_NODES} nodes (got {n})")
    if points < 4:
        raise ValidationError("damping_condition: at least 4 points per angle required")
    grid = angle_grid(n, points)
    lam = np.empty(grid.shape[0])
    ineq = None if inequality_matrix(law, grid[:1], plant) is None else np.empty(grid.shape[0])
    for lo in range(0, grid.shape[0], batch):
        chunk = grid[lo:lo + batch]
        lam[lo:lo + batch] = min_sym_eigenvalue(assemble_q(law, chunk, plant))
        if ineq is not None:
            ineq[lo:lo + batch] = np.linalg.eigvalsh(inequality_matrix(law, chunk, plant))[:, 0]
    k = int(np.argmin(lam))
    cert = dict(law=law, points_per_angle=points, lambda_min=float(lam[k]), holds=bool(lam[k] > 0),
                argmin=grid[k].copy())
    if ineq is not None:
        j = int(np.argmin(ineq))
        cert.update(inequality_min=float(ineq[j]), inequality_holds=bool(ineq[j] > 0),
                    inequality_argmin=grid[j].copy())
    return DampingCertificate(**cert)


def energy_derivative_fd(state: SimState, plant: Plant, spec: ControllerSpec, sp: Setpoints,
                         h: float = 1e-6) -> float:
    """dH~/dt by a central difference of H~ along the closed-loop vector field."""
    from .control import closed_loop_rhs
    x = state.to_vector()
    f = closed_loop_rhs(state, plant, spec, sp).to_vector()
    scale = h / max(np.linalg.norm(f), 1e-300) * max(np.linalg.norm(x), 1.0)

    def energy_at(y):
        st = SimState.from_vector(y, plant.n, plant.m, plant.full)
        return total_energy(st, plant, spec, sp).h_tilde

    return (energy_at(x + scale * f) - energy_at(x - scale * f)) / (2.0 * scale)
