import numpy as np
import pytest

from gridsync import control, dynamics, scenarios

# Filled by test_acceptance.py; printed once at the end of the session.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def triangle_plant(model="full", uniform_lines=False, **updates):
    params = scenarios.triangle_params(uniform_lines=uniform_lines)
    if updates:
        params = params.with_updates(**updates)
    return dynamics.Plant(scenarios.triangle_topology(), params, model)


def law_plant(law, **updates):
    """Triangle plant on the first model the law supports (uniform lines where needed)."""
    model = control.COMPATIBLE_MODELS[law][-1 if law in ("open_loop", "comm_feedback_linearization",
                                                          "decoupled_reference") else 0]
    uniform = law in ("reduced_decentralized", "simplified_full_decentralized")
    return triangle_plant(model, uniform, **updates)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def weighted_residual(deriv: dynamics.SimState, plant: dynamics.Plant) -> float:
    """Max entry of the storage-weighted derivative (M w~', L_s i_s', C v', L_t i_t')."""
    p = plant.params
    parts = [deriv.theta, p.M * deriv.omega_tilde, np.repeat(p.L_t, 2) * deriv.i_t]
    if deriv.has_stator:
        parts += [np.repeat(p.L_s, 2) * deriv.i_s, np.repeat(p.C, 2) * deriv.v]
    return float(max(np.abs(x).max(initial=0.0) for x in parts))
