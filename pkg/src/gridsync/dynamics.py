"""Model right-hand sides, frame conversion and fixed-step integration.

Three model variants share the mechanical rows

    theta' = w~
    M w~'  = -D w~ + tau~ - tau_e

and differ in the electrical part:

* ``reduced``: only line currents, driven directly by the EMFs.
* ``static_stator``: line currents with the stator and bus shunt eliminated
  algebraically (damping D', line impedance Z_t').
* ``full``: stator currents, bus voltages and line currents.

All rows are written in the dq frame rotating at w0. The reduced and full
models also have an alpha-beta form (absolute angles, no w0*j terms).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import algebra, network
from .errors import NumericalError, ValidationError
from .network import GridParams, SteadyStateMaps, Topology

MODELS = ("reduced", "static_stator", "full")
FRAMES = ("dq", "ab")

# Default fixed step (s). Stiff parameter sets need a smaller step, see
# ``stable_step``.
DEFAULT_DT = 1e-4


@dataclass(frozen=True)
class SimState:
    """State of one model variant at time ``t``.

    ``i_s`` and ``v`` are None for the reduced and static-stator variants.
    """

    theta: np.ndarray
    omega_tilde: np.ndarray
    i_t: np.ndarray
    i_s: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    frame: str = "dq"
    t: float = 0.0

    def __post_init__(self):
        for name in ("theta", "omega_tilde", "i_t", "i_s", "v"):
            val = getattr(self, name)
            if val is not None:
                arr = np.atleast_1d(np.asarray(val, dtype=float))
                if not np.all(np.isfinite(arr)):
                    raise ValidationError(f"state.{name}: entries must be finite")
                object.__setattr__(self, name, arr)
        if self.frame not in FRAMES:
            raise ValidationError(f"state.frame: expected one of {FRAMES}")
        n = self.theta.size
        if self.omega_tilde.size != n:
            raise ValidationError("state.omega_tilde: length differs from theta")
        if (self.i_s is None) != (self.v is None):
            raise ValidationError("state: i_s and v must be given together")
        for name in ("i_s", "v"):
            val = getattr(self, name)
            if val is not None and val.size != 2 * n:
                raise ValidationError(f"state.{name}: expected {2 * n} entries")

    @property
    def has_stator(self) -> bool:
        return self.i_s is not None

    def to_vector(self) -> np.ndarray:
        parts = [self.theta, self.omega_tilde]
        if self.has_stator:
            parts += [self.i_s, self.v]
        parts.append(self.i_t)
        return np.concatenate(parts)

    @classmethod
    def from_vector(cls, x, n: int, m: int, full: bool, frame: str = "dq", t: float = 0.0) -> "SimState":
        x = np.asarray(x, dtype=float)
        if x.size != state_size(n, m, full):
            raise ValidationError("state vector length does not match the model variant")
        if full:
            return cls(x[:n], x[n:2 * n], x[6 * n:], x[2 * n:4 * n], x[4 * n:6 * n], frame, t)
        return cls(x[:n], x[n:2 * n], x[2 * n:], frame=frame, t=t)


def state_size(n: int, m: int, full: bool) -> int:
    return 2 * n + (4 * n if full else 0) + 2 * m


@dataclass(frozen=True)
class Plant:
    """A network, its parameters, a model variant and the derived steady maps."""

    topology: Topology
    params: GridParams
    model: str = "full"
    maps: SteadyStateMaps = field(init=False, repr=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValidationError(f"model: expected one of {MODELS}, got {self.model!r}")
        self.params.check_topology(self.topology)
        p = self.params
        if p.m and np.any(p.L_t <= 0):
            raise ValidationError("L_t: line inductances must be positive for line dynamics")
        if self.model == "full" and (np.any(p.L_s <= 0) or np.any(p.C <= 0)):
            raise ValidationError("L_s, C: must be positive for the full model")
        object.__setattr__(self, "maps", network.build_pi(self.topology, self.params))

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def m(self) -> int:
        return self.params.m

    @property
    def full(self) -> bool:
        return self.model == "full"

    @property
    def damping(self) -> np.ndarray:
        """Open-loop damping of the model (D' for the static-stator variant)."""
        return self.maps.d_prime if self.model == "static_stator" else self.params.D

    def with_params(self, params: GridParams, model: Optional[str] = None) -> "Plant":
        return Plant(self.topology, params, model or self.model)

    def with_model(self, model: str) -> "Plant":
        return Plant(self.topology, self.params, model)


# --- electrical quantities ----------------------------------------------------

def steady_electrical(theta, plant: Plant):
    """Forced steady state (i_s, v, i_t) for frozen angles and w~ = 0.

    The reduced model has no stator: its stator current is the node
    injection E i_t and its bus voltage is the EMF. The static-stator model
    recovers both algebraically.
    """
    xi = network.emf(theta, plant.params)
    maps = plant.maps
    if plant.model == "full":
        return maps.steady_state(xi)
    if plant.model == "reduced":
        i_t = algebra.solve(maps.z_t, maps.e_big.T @ xi) if plant.m else np.zeros(0)
        return maps.e_big @ i_t, xi, i_t
    i_t = maps.pi3 @ xi
    i_s, v = _static_algebraic(xi, i_t, maps)
    return i_s, v, i_t


def _static_algebraic(xi, i_t, maps: SteadyStateMaps):
    inj = maps.e_big @ i_t
    i_s = maps.node_admittance @ xi + maps.stator_split @ inj
    v = maps.emf_to_bus @ xi - maps.line_to_bus @ inj
    return i_s, v


def static_stator_algebraic(state: SimState, params: GridParams, maps: SteadyStateMaps):
    """Stator currents and bus voltages implied by the static-stator state."""
    xi = network.emf(state.theta, params, state.omega_tilde)
    return _static_algebraic(xi, state.i_t, maps)


def bus_voltage(state: SimState, plant: Plant) -> np.ndarray:
    """Bus voltages of any variant (state, algebraic or EMF)."""
    if state.has_stator:
        return state.v
    if plant.model == "static_stator":
        return static_stator_algebraic(state, plant.params, plant.maps)[1]
    return network.emf(state.theta, plant.params, state.omega_tilde)


def electrical_torque(state: SimState, plant: Plant) -> np.ndarray:
    """Electrical torque W^T x of the coupling current of the model variant."""
    w = network.w_matrix(state.theta, plant.params)
    maps = plant.maps
    if plant.model == "full":
        return w.T @ state.i_s
    if plant.model == "reduced":
        return w.T @ (maps.e_big @ state.i_t)
    return w.T @ (maps.stator_split @ (maps.e_big @ state.i_t))


def equilibrium_state(plant: Plant, theta, omega_tilde=None) -> SimState:
    """State with electrical variables at their steady state for ``theta``."""
    theta = np.asarray(theta, dtype=float)
    om = np.zeros(plant.n) if omega_tilde is None else np.asarray(omega_tilde, dtype=float)
    i_s, v, i_t = steady_electrical(theta, plant)
    if plant.full:
        return SimState(theta, om, i_t, i_s, v)
    return SimState(theta, om, i_t)


# --- right-hand sides ----------------------------------------------------------

def reduced_rhs(state: SimState, tau_tilde, topology: Topology, params: GridParams) -> SimState:
    """Reduced model: machines coupled through line inductances only.

    dq:  M w~' = -D w~ + tau~ - W^T E i_t,   L_t i_t' = -Z_t i_t + E^T W (w~ + w0)
    ab:  same rows with Z_t replaced by R_t and absolute angles.
    """
    _check_dims(state, topology, params, full=False)
    e_big = topology.e_big
    w = network.w_matrix(state.theta, params)
    speed = state.omega_tilde + params.omega0
    z_t = params.z_t if state.frame == "dq" else np.kron(np.diag(params.R_t), np.eye(2))
    l_t = np.repeat(params.L_t, 2)
    omega_dot = (-params.D * state.omega_tilde + tau_tilde - w.T @ (e_big @ state.i_t)) / params.M
    i_t_dot = (-z_t @ state.i_t + e_big.T @ (w @ speed)) / l_t if params.m else np.zeros(0)
    return SimState(_theta_rate(state, params), omega_dot, i_t_dot, frame=state.frame, t=state.t)


def static_stator_rhs(state: SimState, tau_tilde, topology: Topology, params: GridParams,
                      maps: SteadyStateMaps) -> SimState:
    """Static-stator reduced model (dq only).

    M w~'  = -D' w~ + tau~ - W^T (I + Y_c Z_s)^-1 E i_t
    L_t i_t' = -Z_t' i_t + E^T (I + Y_c Z_s)^-1 W (w~ + w0)

    with mechanical input tau_m = D' w0 + tau~.
    """
    _check_dims(state, topology, params, full=False)
    if state.frame != "dq":
        raise ValidationError("the static-stator model is defined in the dq frame only")
    e_big = topology.e_big
    w = network.w_matrix(state.theta, params)
    xi = w @ (state.omega_tilde + params.omega0)
    split = maps.stator_split
    omega_dot = (-maps.d_prime * state.omega_tilde + tau_tilde
                 - w.T @ (split @ (e_big @ state.i_t))) / params.M
    if params.m:
        i_t_dot = (-maps.z_t_prime @ state.i_t + e_big.T @ (split @ xi)) / np.repeat(params.L_t, 2)
    else:
        i_t_dot = np.zeros(0)
    return SimState(state.omega_tilde.copy(), omega_dot, i_t_dot, t=state.t)


def full_rhs(state: SimState, tau_tilde, topology: Topology, params: GridParams) -> SimState:
    """Full model with stator, bus shunt and line dynamics.

    dq rows:
        M w~'    = -D w~ + tau~ - W^T i_s
        L_s i_s' = -Z_s i_s + W (w~ + w0) - v
        C v'     = i_s - E i_t - Y_c v
        L_t i_t' = -Z_t i_t + E^T v
    """
    _check_dims(state, topology, params, full=True)
    e_big = topology.e_big
    w = network.w_matrix(state.theta, params)
    if state.frame == "dq":
        z_s, y_c, z_t = params.z_s, params.y_c, params.z_t
    else:
        z_s = np.kron(np.diag(params.R_s), np.eye(2))
        y_c = np.kron(np.diag(params.G), np.eye(2))
        z_t = np.kron(np.diag(params.R_t), np.eye(2))
    speed = state.omega_tilde + params.omega0
    omega_dot = (-params.D * state.omega_tilde + tau_tilde - w.T @ state.i_s) / params.M
    i_s_dot = (-z_s @ state.i_s + w @ speed - state.v) / np.repeat(params.L_s, 2)
    v_dot = (state.i_s - e_big @ state.i_t - y_c @ state.v) / np.repeat(params.C, 2)
    if params.m:
        i_t_dot = (-z_t @ state.i_t + e_big.T @ state.v) / np.repeat(params.L_t, 2)
    else:
        i_t_dot = np.zeros(0)
    return SimState(_theta_rate(state, params), omega_dot, i_t_dot, i_s_dot, v_dot,
                    frame=state.frame, t=state.t)


def model_rhs(state: SimState, tau_tilde, plant: Plant) -> SimState:
    """Dispatch to the right-hand side of the plant's model variant."""
    if plant.model == "reduced":
        return reduced_rhs(state, tau_tilde, plant.topology, plant.params)
    if plant.model == "static_stator":
        return static_stator_rhs(state, tau_tilde, plant.topology, plant.params, plant.maps)
    return full_rhs(state, tau_tilde, plant.topology, plant.params)


def _theta_rate(state: SimState, params: GridParams) -> np.ndarray:
    if state.frame == "dq":
        return state.omega_tilde.copy()
    return state.omega_tilde + params.omega0


def _check_dims(state: SimState, topology: Topology, params: GridParams, full: bool) -> None:
    params.check_topology(topology)
    if state.theta.size != params.n or state.i_t.size != 2 * params.m:
        raise ValidationError("state dimensions do not match the network")
    if state.has_stator != full:
        raise ValidationError("state variant does not match the model (stator states %s)"
                              % ("required" if full else "not allowed"))


# --- frames ------------------------------------------------------------------------

def frame_convert(state: SimState, direction: str, omega0: float) -> SimState:
    """Rotate a state between the dq and alpha-beta frames at its time ``t``.

    ``direction`` is ``"to_ab"`` or ``"to_dq"``. Electrical pairs are rotated
    by +w0 t (to_ab) or -w0 t (to_dq) and angles shift by the same amount.
    """
    if direction == "to_ab":
        if state.frame == "ab":
            return state
        ang = omega0 * state.t
        frame = "ab"
    elif direction == "to_dq":
        if state.frame == "dq":
            return state
        ang = -omega0 * state.t
        frame = "dq"
    else:
        raise ValidationError("direction must be 'to_ab' or 'to_dq'")
    c, s = np.cos(ang), np.sin(ang)

    def rot(x):
        if x is None:
            return None
        out = np.empty_like(x)
        out[0::2] = c * x[0::2] - s * x[1::2]
        out[1::2] = s * x[0::2] + c * x[1::2]
        return out

    return SimState(state.theta + ang, state.omega_tilde.copy(), rot(state.i_t),
                    rot(state.i_s), rot(state.v), frame=frame, t=state.t)


# --- integration ---------------------------------------------------------------------

def rk4_fixed(f: Callable[[float, np.ndarray], np.ndarray], x0, t0: float, dt: float,
              nsteps: int, every: int = 1):
    """Classical fourth-order Runge-Kutta with a fixed step.

    Returns:
        (times, states) sampled every ``every`` steps plus the final step.

    Raises:
        NumericalError: on the first non-finite state.
    """
    x = np.array(x0, dtype=float)
    idx = sample_indices(nsteps, every)
    out = np.empty((idx.size, x.size))
    out[0] = x
    j = 1
    for i in range(nsteps):
        t = t0 + i * dt
        k1 = f(t, x)
        k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1)
        k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2)
        k4 = f(t + dt, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            raise NumericalError(f"state became non-finite at t = {t + dt:.6g} s")
        if j < idx.size and idx[j] == i + 1:
            out[j] = x
            j += 1
    return t0 + idx * dt, out


def sample_indices(nsteps: int, every: int) -> np.ndarray:
    """Step indices that are stored: 0, every, 2*every, ... and the last step."""
    if every < 1:
        raise ValidationError("every: must be a positive integer")
    idx = np.arange(0, nsteps + 1, every)
    if idx[-1] != nsteps:
        idx = np.append(idx, nsteps)
    return idx


def stable_step(plant: Plant, fraction: float = 0.9) -> float:
    """Largest RK4 step keeping the frozen-angle electrical modes stable.

    Uses the real-axis stability limit 2.785/|lambda| of classical RK4 on the
    fastest eigenvalue, scaled by ``fraction``.
    """
    from .control import electrical_system
    a_el, _ = electrical_system(plant)
    if a_el.size == 0:
        return np.inf
    lam = np.abs(np.linalg.eigvals(a_el)).max()
    return fraction * 2.785 / lam


@dataclass
class Trajectory:
    """Sampled closed-loop trajectory and per-sample diagnostics.

    Attributes:
        times: sample instants (uniform, strictly increasing).
        states: sample matrix, one packed state vector per row.
        model: model variant.
        n, m: node and edge counts.
        frame: frame of the stored states.
        tau: controller torques tau~ per sample (n columns).
        h_tilde: total energy per sample.
        grad_norm: norm of the law's potential gradient per sample.
        v: bus voltages per sample.
        h_steps: total energy at every integration step (dq closed loops).
        dt: integration step.
    """

    times: np.ndarray
    states: np.ndarray
    model: str
    n: int
    m: int
    frame: str = "dq"
    tau: Optional[np.ndarray] = None
    h_tilde: Optional[np.ndarray] = None
    grad_norm: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    h_steps: Optional[np.ndarray] = None
    dt: float = 0.0

    @property
    def full(self) -> bool:
        return self.model == "full"

    def state(self, k: int) -> SimState:
        return SimState.from_vector(self.states[k], self.n, self.m, self.full, self.frame, float(self.times[k]))

    @property
    def theta(self) -> np.ndarray:
        return self.states[:, :self.n]

    @property
    def omega_tilde(self) -> np.ndarray:
        return self.states[:, self.n:2 * self.n]

    @property
    def i_t(self) -> np.ndarray:
        return self.states[:, self.states.shape[1] - 2 * self.m:]

    @property
    def i_s(self) -> Optional[np.ndarray]:
        return self.states[:, 2 * self.n:4 * self.n] if self.full else None


def integrate(plant: Plant, controller, initial: SimState, t_end: float, dt: float = DEFAULT_DT,
              every: int = 1, setpoints=None) -> Trajectory:
    """Integrate a closed loop with fixed-step RK4.

    dq-frame closed loops run in a compiled kernel that also records the
    total energy at every step. Alpha-beta runs (open loop only) use the
    reference right-hand sides.

    Args:
        plant: network, parameters and model variant.
        controller: a :class:`gridsync.control.ControllerSpec`.
        initial: initial state; its frame selects the equation set.
        t_end: final time (s).
        dt: step (s).
        every: store one sample per ``every`` steps (plus the final step).
        setpoints: precomputed set-points (derived from the controller if None).

    Raises:
        ValidationError: incompatible controller/model/state or bad step.
        NumericalError: non-finite state, with the time of blow-up.
    """
    from . import control, stability
    from . import _kernels

    if not (dt > 0 and np.isfinite(dt)):
        raise ValidationError("dt: must be positive")
    if not t_end >= dt:
        raise ValidationError("t_end: must be at least dt")
    control.check_compatible(controller, plant)
    if initial.has_stator != plant.full or initial.theta.size != plant.n or initial.i_t.size != 2 * plant.m:
        raise ValidationError("initial state does not match the model variant")
    sp = setpoints if setpoints is not None else control.derive_setpoints(plant, controller)
    nsteps = int(round(t_end / dt))
    x0 = initial.to_vector()
    t0 = float(initial.t)

    if initial.frame == "ab":
        if controller.law != "open_loop":
            raise ValidationError("alpha-beta integration supports the open-loop law only")
        tau0 = sp.tau_open

        def f(t, x):
            st = SimState.from_vector(x, plant.n, plant.m, plant.full, "ab", t)
            tau = tau0 - plant.params.K_p * st.omega_tilde
            return model_rhs(st, tau, plant).to_vector()

        times, states = rk4_fixed(f, x0, t0, dt, nsteps, every)
        traj = Trajectory(times, states, plant.model, plant.n, plant.m, "ab", dt=dt)
        dq = np.array([frame_convert(traj.state(k), "to_dq", plant.params.omega0).to_vector()
                       for k in range(times.size)])
        _attach_diagnostics(traj, dq, plant, controller, sp)
        return traj

    kernel_args = control.kernel_arguments(plant, controller, sp)
    energy_args = stability.kernel_energy_arguments(plant, controller, sp)
    states, h_steps, fail = _kernels.integrate_rk4(x0, dt, nsteps, every, kernel_args, energy_args)
    if fail >= 0:
        raise NumericalError(f"state became non-finite at t = {t0 + fail * dt:.6g} s")
    times = t0 + sample_indices(nsteps, every) * dt
    traj = Trajectory(times, states, plant.model, plant.n, plant.m, "dq", h_steps=h_steps, dt=dt)
    _attach_diagnostics(traj, states, plant, controller, sp)
    return traj


def _attach_diagnostics(traj: Trajectory, dq_states: np.ndarray, plant: Plant, controller, sp) -> None:
    from . import control, stability
    from . import _kernels
    args = control.kernel_arguments(plant, controller, sp)
    eargs = stability.kernel_energy_arguments(plant, controller, sp)
    tau, h, g = _kernels.diagnostics(dq_states, args, eargs)
    traj.tau, traj.h_tilde, traj.grad_norm = tau, h, g
    if plant.full:
        traj.v = dq_states[:, 4 * plant.n:6 * plant.n].copy()
    else:
        traj.v = _kernels.algebraic_voltage(dq_states, args)


def perturbed_state(plant: Plant, theta_star, seed: int, magnitude: float) -> SimState:
    """Equilibrium perturbed by uniform noise of the given magnitude.

    Angles and frequency deviations are offset by ``magnitude * U(-1, 1)``;
    electrical states start at their steady state for the perturbed angles.
    """
    rng = np.random.default_rng(seed)
    theta = np.asarray(theta_star, dtype=float) + magnitude * rng.uniform(-1, 1, plant.n)
    omega = magnitude * rng.uniform(-1, 1, plant.n)
    return equilibrium_state(plant, theta, omega)


def with_time(state: SimState, t: float) -> SimState:
    return replace(state, t=t)
