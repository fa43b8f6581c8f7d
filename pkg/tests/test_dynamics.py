import numpy as np
import pytest

from conftest import rel_err, triangle_plant, weighted_residual
from oracles import rk4_scalar_error
from gridsync import algebra, control, dynamics, network, scenarios
from gridsync.errors import NumericalError, ValidationError


def lone_machine(model="reduced", **kw):
    base = dict(M=[2.0], D=[3.0], K_p=[0.0], L_m=[0.05], i_r_star=[100.0], R_s=[0.1], L_s=[1e-3],
                G=[1.0], C=[1e-4], R_t=[], L_t=[])
    base.update(kw)
    return dynamics.Plant(network.Topology(np.zeros((1, 0))), network.GridParams(**base), model)


def open_loop(plant, tau=None):
    return control.ControllerSpec("open_loop", np.zeros(plant.n),
                                  tau_open=np.zeros(plant.n) if tau is None else tau)


def test_reduced_consensus_is_fixed_point():
    top = network.Topology.ring(4)
    params = scenarios.uniform_ring_params(4)
    st = dynamics.SimState(np.full(4, 0.4), np.zeros(4), np.zeros(8))
    d = dynamics.reduced_rhs(st, np.zeros(4), top, params)
    assert np.abs(d.to_vector()).max() < 1e-9
    plant = dynamics.Plant(top, params, "reduced")
    _, _, i_t = dynamics.steady_electrical(np.full(4, 0.4), plant)
    assert np.abs(i_t).max() < 1e-9


def test_single_machine_decay_closed_form():
    plant = lone_machine()
    init = dynamics.SimState([0.0], [1.0], np.zeros(0))
    traj = dynamics.integrate(plant, open_loop(plant), init, 1.0, 1e-3)
    assert abs(traj.omega_tilde[-1, 0] - np.exp(-1.5)) < 1e-6
    np.testing.assert_allclose(traj.times[-1], 1.0)


def test_rk4_convergence_order_through_integrate():
    plant = lone_machine()
    init = dynamics.SimState([0.0], [1.0], np.zeros(0))
    errs = []
    for dt in (0.1, 0.05):
        traj = dynamics.integrate(plant, open_loop(plant), init, 1.0, dt)
        errs.append(abs(traj.omega_tilde[-1, 0] - np.exp(-1.5)))
    assert 3.7 <= np.log2(errs[0] / errs[1]) <= 4.3
    assert 3.7 <= np.log2(rk4_scalar_error(0.1) / rk4_scalar_error(0.05)) <= 4.3


def test_reduced_torque_is_gradient_of_coupling_coenergy(rng):
    top = network.Topology.from_edges(2, [(0, 1)])
    params = scenarios.uniform_ring_params(2)
    th, i_t = rng.uniform(-3, 3, 2), rng.normal(size=2) * 50
    plant = dynamics.Plant(top, params, "reduced")
    tau = dynamics.electrical_torque(dynamics.SimState(th, np.zeros(2), i_t), plant)

    def coenergy(x):
        return network.psi(x, params) @ (top.e_big @ i_t)

    h = 1e-6
    fd = np.array([(coenergy(th + h * e) - coenergy(th - h * e)) / (2 * h) for e in np.eye(2)])
    assert rel_err(tau, fd) < 1e-6


def test_static_stator_reduces_to_reduced_model(rng):
    # Vanishing stator impedance and shunt: the bus voltage is the EMF.
    plant = triangle_plant("static_stator", uniform_lines=True)
    p = plant.params.with_updates(R_s=np.full(3, 1e-10), L_s=np.zeros(3), G=np.full(3, 1e-10),
                                  C=np.zeros(3))
    static = dynamics.Plant(plant.topology, p, "static_stator")
    np.testing.assert_allclose(static.maps.z_t_prime, static.maps.z_t, atol=1e-9)
    st = dynamics.SimState(rng.normal(size=3), rng.normal(size=3), rng.normal(size=6) * 100)
    tau = rng.normal(size=3) * 1e3
    a = dynamics.static_stator_rhs(st, tau, static.topology, p, static.maps).to_vector()
    b = dynamics.reduced_rhs(st, tau, static.topology, p).to_vector()
    assert rel_err(a, b) < 1e-6


def test_static_stator_ideal_stator_line_impedance():
    # With Z_s = 0 the node impedance seen by the lines vanishes, so Z_t' = Z_t.
    plant = triangle_plant("static_stator", uniform_lines=True)
    p = plant.params.with_updates(R_s=np.full(3, 1e-12), L_s=np.zeros(3))
    maps = network.build_pi(plant.topology, p)
    assert np.abs(maps.z_t_prime - maps.z_t).max() < 1e-9


def test_static_stator_equilibrium():
    plant = triangle_plant("static_stator", uniform_lines=True)
    th = scenarios.TRIANGLE_THETA_STAR
    st = dynamics.equilibrium_state(plant, th)
    # Steady line currents solve Z_t' i_t = E^T S xi.
    xi = network.emf(th, plant.params)
    ref = algebra.solve(plant.maps.z_t_prime, plant.topology.e_big.T @ plant.maps.stator_split @ xi)
    assert rel_err(st.i_t, ref) < 1e-12
    tau = dynamics.electrical_torque(st, plant)
    d = dynamics.static_stator_rhs(st, tau, plant.topology, plant.params, plant.maps)
    assert weighted_residual(d, plant) < 1e-9
    i_s, v = dynamics.static_stator_algebraic(st, plant.params, plant.maps)
    full_is, full_v, _ = plant.maps.steady_state(xi)
    assert rel_err(i_s, full_is) < 1e-10 and rel_err(v, full_v) < 1e-10


def test_time_scale_ratio_on_triangle():
    ratio = network.time_scale_ratio(triangle_plant().params)
    assert np.isclose(ratio, max(4.7e-3 / 0.165, 3.8e-3 / 0.166, 2.4e-3 / 0.07) / max(
        0.18e-3 / 0.166, 0.10e-3 / 0.07, 0.66e-3 / 0.5))


def test_full_model_steady_state_is_fixed_point():
    plant = triangle_plant()
    st = dynamics.equilibrium_state(plant, scenarios.TRIANGLE_THETA_STAR)
    d = dynamics.full_rhs(st, dynamics.electrical_torque(st, plant), plant.topology, plant.params)
    assert weighted_residual(d, plant) < 1e-9


def test_frame_equivalence_two_nodes():
    top = network.Topology.from_edges(2, [(0, 1)])
    params = scenarios.uniform_ring_params(2).with_updates(i_r_star=np.array([1900.0, 2000.0]))
    plant = dynamics.Plant(top, params, "full")
    th = np.array([0.0, -0.2])
    spec = open_loop(plant, tau=np.array([1e3, -2e3]))
    init = dynamics.equilibrium_state(plant, th, np.array([0.3, -0.1]))
    dt = 2e-5
    dq = dynamics.integrate(plant, spec, init, 0.1, dt, every=500)
    ab_init = dynamics.frame_convert(init, "to_ab", params.omega0)
    ab = dynamics.integrate(plant, spec, ab_init, 0.1, dt, every=500)
    back = dynamics.frame_convert(ab.state(len(ab.times) - 1), "to_dq", params.omega0).to_vector()
    ref = dq.states[-1]
    n = plant.n
    assert np.abs(algebra.wrap_angle(back[:n] - ref[:n])).max() < 1e-6
    assert rel_err(back[n:], ref[n:]) < 1e-6


def test_zero_excitation_decouples():
    plant = triangle_plant(i_r_star=np.zeros(3), K_p=np.zeros(3))
    rng = np.random.default_rng(3)
    init = dynamics.SimState(np.zeros(3), np.array([1.0, -0.5, 0.2]), rng.normal(size=6),
                             rng.normal(size=6), rng.normal(size=6))
    traj = dynamics.integrate(plant, open_loop(plant), init, 0.5, 2e-5, every=1000)
    expect = init.omega_tilde * np.exp(-plant.params.D / plant.params.M * 0.5)
    assert rel_err(traj.omega_tilde[-1], expect) < 1e-9


def test_equilibrium_stays_constant():
    plant = triangle_plant()
    spec = control.ControllerSpec("full_decentralized_exact", scenarios.TRIANGLE_THETA_STAR)
    init = dynamics.equilibrium_state(plant, scenarios.TRIANGLE_THETA_STAR)
    traj = dynamics.integrate(plant, spec, init, 1.0, scenarios.TRIANGLE_DT, every=4000)
    x0 = traj.states[0]
    drift = np.abs(traj.states - x0) / np.maximum(np.abs(x0), 1.0)
    assert drift.max() < 1e-9


def test_open_loop_electrical_modes_are_stable():
    a_el, _ = control.electrical_system(triangle_plant())
    assert np.linalg.eigvals(a_el).real.max() < 0


def test_frame_convert_round_trip_and_identity(rng):
    st = dynamics.SimState(rng.normal(size=3), rng.normal(size=3), rng.normal(size=6),
                           rng.normal(size=6), rng.normal(size=6), t=0.0)
    same = dynamics.frame_convert(st, "to_ab", 100 * np.pi)
    np.testing.assert_allclose(same.to_vector(), st.to_vector(), atol=0)
    st = dynamics.with_time(st, 0.37)
    back = dynamics.frame_convert(dynamics.frame_convert(st, "to_ab", 100 * np.pi), "to_dq", 100 * np.pi)
    np.testing.assert_allclose(back.to_vector(), st.to_vector(), atol=1e-12)
    with pytest.raises(ValidationError):
        dynamics.frame_convert(st, "sideways", 1.0)


def test_constant_dq_is_sinusoid_in_ab():
    w0 = 100 * np.pi
    st = dynamics.SimState([0.0], [0.0], [3.0, -1.0])
    samples = 64
    times = np.arange(samples) / samples * (2 * np.pi / w0)
    x = np.array([dynamics.frame_convert(dynamics.with_time(st, t), "to_ab", w0).i_t[0] for t in times])
    spec = np.abs(np.fft.rfft(x))
    assert np.argmax(spec) == 1
    assert spec[2:].max() < 1e-10 * spec[1] and spec[0] < 1e-10 * spec[1]


def test_non_finite_state_aborts():
    plant = triangle_plant()
    spec = control.ControllerSpec("full_decentralized_exact", scenarios.TRIANGLE_THETA_STAR)
    init = dynamics.equilibrium_state(plant, scenarios.TRIANGLE_THETA_STAR, np.ones(3))
    with pytest.raises(NumericalError, match="t = "):
        dynamics.integrate(plant, spec, init, 1.0, 1e-3)


def test_integrate_validation():
    plant = triangle_plant()
    init = dynamics.equilibrium_state(plant, np.zeros(3))
    spec = control.ControllerSpec("reduced_decentralized", np.zeros(3))
    with pytest.raises(ValidationError):
        dynamics.integrate(plant, spec, init, 1.0, 1e-4)
    with pytest.raises(ValidationError):
        dynamics.integrate(plant, open_loop(plant), init, 1.0, -1.0)
    with pytest.raises(ValidationError):
        dynamics.integrate(plant, open_loop(plant), init, 1e-6, 1e-4)
    reduced_state = dynamics.SimState(np.zeros(3), np.zeros(3), np.zeros(6))
    with pytest.raises(ValidationError):
        dynamics.integrate(plant, open_loop(plant), reduced_state, 1.0, 1e-4)


def test_trajectory_sampling():
    plant = lone_machine()
    init = dynamics.SimState([0.0], [1.0], np.zeros(0))
    traj = dynamics.integrate(plant, open_loop(plant), init, 1.0, 0.03, every=10)
    steps = int(round(1.0 / 0.03))
    np.testing.assert_array_equal(dynamics.sample_indices(steps, 10), [0, 10, 20, 30, 33])
    assert np.all(np.diff(traj.times) > 0)
    assert traj.h_steps.size == steps + 1
    assert traj.tau.shape == (5, 1) and traj.h_tilde.shape == (5,)


def test_state_validation():
    with pytest.raises(ValidationError):
        dynamics.SimState([0.0, 1.0], [0.0], np.zeros(0))
    with pytest.raises(ValidationError):
        dynamics.SimState([np.inf], [0.0], np.zeros(0))
    with pytest.raises(ValidationError):
        dynamics.SimState([0.0], [0.0], np.zeros(0), i_s=np.zeros(2))
    with pytest.raises(ValidationError):
        dynamics.Plant(scenarios.triangle_topology(), scenarios.triangle_params(), "medium")
