import warnings

import numpy as np
import pytest

from gridsync import algebra, cycles, network, scenarios
from gridsync.errors import ValidationError


def ring(n):
    return network.Topology.ring(n), scenarios.uniform_ring_params(n)


def test_count_loop_minima_examples():
    assert [cycles.count_loop_minima(n)[0] for n in (3, 4, 5, 7, 8, 12)] == [1, 3, 3, 3, 5, 7]
    _, classes = cycles.count_loop_minima(8)
    assert [c.k for c in classes] == [-2, -1, 0, 1, 2]
    assert [c.stable for c in classes] == [False, True, True, True, False]
    assert classes[3].angle_sum == pytest.approx(2 * np.pi)
    with pytest.raises(ValidationError):
        cycles.count_loop_minima(2)


def test_twisted_states_and_winding():
    for n, k in ((5, 1), (6, -1), (8, 2)):
        assert cycles.winding_number(cycles.twisted_state(n, k)) == k
    assert cycles.winding_number(np.zeros(4)) == 0


def test_twisted_states_are_critical():
    top, params = ring(6)
    _, grad = cycles.field_functions("S_E", top, params)
    for k in (-1, 0, 1):
        g = grad(cycles.twisted_state(6, k))
        assert np.abs(g).max() < 1e-9 * params.a.max() ** 2


@pytest.mark.parametrize("n,expected,starts", [(3, 1, 200), (4, 1, 200), (5, 3, 300), (6, 3, 600)])
def test_ring_minima(n, expected, starts):
    top, params = ring(n)
    eq = cycles.find_equilibria("S_E", top, params, multistarts=starts)
    assert cycles.check_ring_minima(n, eq) == expected
    found = sorted(cycles.winding_number(e.theta) for e in cycles.minima(eq))
    assert found == [k for k in range(-(n // 4), n // 4 + 1) if abs(2 * np.pi * k / n) < np.pi / 2]
    for e in eq:
        assert e.grad_norm < 1e-8


def test_check_ring_minima_flags_coverage():
    top, params = ring(5)
    eq = cycles.find_equilibria("S_E", top, params, multistarts=300)
    with pytest.warns(UserWarning, match="coverage"):
        assert cycles.check_ring_minima(5, cycles.minima(eq)[:1]) == 1
    fake = cycles.minima(eq) * 2
    with pytest.raises(AssertionError):
        cycles.check_ring_minima(5, fake)


def test_tree_has_single_minimum_class():
    top = network.Topology.from_edges(4, [(0, 1), (1, 2), (1, 3)], comm_edges=[(0, 1), (1, 2), (1, 3)])
    params = scenarios.uniform_ring_params(4)
    eq = cycles.find_equilibria("S_B", top, params, multistarts=300)
    mins = cycles.minima(eq)
    assert len(mins) == 1
    assert algebra.angles_equal(mins[0].theta, np.zeros(4), atol=1e-6)


def test_electrical_field_equals_comm_field_on_same_graph(rng):
    edges = [(0, 1), (1, 2), (2, 3)]
    top = network.Topology.from_edges(4, edges, comm_edges=edges)
    params = scenarios.uniform_ring_params(4)
    th = rng.uniform(-3, 3, (5, 4))
    se, ge = cycles.field_functions("S_E", top, params)
    sb, gb = cycles.field_functions("S_B", top, params)
    np.testing.assert_allclose(se(th), sb(th), rtol=1e-12)
    np.testing.assert_allclose(ge(th), gb(th), rtol=1e-12, atol=1e-9)


def test_two_node_argmins():
    top = network.Topology.ring(2, with_comm_path=True)
    params = scenarios.uniform_ring_params(2)
    grid = cycles.sample_landscape("S_B", top, params, None, 36)
    pts = grid.points()[np.flatnonzero(grid.values.ravel() <= 1e-12)]
    assert len(pts) == 36
    assert all(algebra.angles_equal(p[0], p[1], atol=1e-12) for p in pts)
    star = np.deg2rad([0.0, 90.0])
    bar = cycles.sample_landscape("S_bar", top, params, star, 36)
    cell = 2 * np.pi / 36
    for p in bar.points()[np.flatnonzero(bar.values.ravel() <= 1e-12)]:
        assert abs(algebra.wrap_angle(p[1] - p[0] - star[1])) <= cell


def test_landscape_validation_and_rows():
    top, params = ring(5)
    with pytest.raises(ValidationError, match="4 nodes"):
        cycles.sample_landscape("S_E", top, params)
    top, params = ring(3)
    with pytest.raises(ValidationError, match="resolution"):
        cycles.sample_landscape("S_E", top, params, resolution=4)
    with pytest.raises(ValidationError):
        cycles.sample_landscape("S_X", top, params)
    grid = cycles.sample_landscape("S_E", top, params, resolution=8)
    assert grid.axes == (1, 2)
    assert grid.rows().shape == (64, 3)
    assert grid.values.max() == pytest.approx(1.0)
    assert grid.values.min() >= 0.0


def test_periodic_components_wrap():
    mask = np.zeros((8, 8), dtype=bool)
    mask[0, 3] = mask[7, 3] = True
    assert cycles.periodic_components(mask) == 1
    mask[4, 0] = mask[4, 7] = True
    assert cycles.periodic_components(mask) == 2
    mask[2, 5] = True
    assert cycles.periodic_components(mask) == 3
    assert cycles.periodic_components(np.zeros((4, 4), dtype=bool)) == 0


def test_equilibria_node_limit():
    top, params = ring(7)
    with pytest.raises(ValidationError):
        cycles.find_equilibria("S_E", top, params)


def test_classify_kinds():
    top, params = ring(3)
    _, grad = cycles.field_functions("S_E", top, params)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        assert cycles.classify(grad, np.zeros(3), True)[1] == "minimum"
        assert cycles.classify(grad, np.array([0.0, np.pi, 0.0]), True)[1] == "saddle"
        assert cycles.classify(grad, cycles.twisted_state(3, 1), True)[1] == "maximum"
