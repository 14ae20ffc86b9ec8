import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parabolic_cme.exceptions import DimensionError, OutOfWindowError, ParameterError, ResolutionError
from parabolic_cme.graphs import flat_graph, graph_from_spec, graph_to_spec, sine_graph
from parabolic_cme.pargeo import (ParaBall, ParaGrid, ParaPoint, SampledGraph, adr_check, dist_to_graph,
                                  fine_graph_distance, para_dist, surface_measure)

coord = st.floats(-10, 10, allow_nan=False)
point = st.tuples(coord, coord, coord)


@pytest.mark.parametrize("p, q, expected", [
    ((0, 0, 0), (0, 3, 4), 5.0),
    ((0, 0, 0), (4, 0, 0), 2.0),
    ((1, 1, 0), (2, 0, 0), 2.0),
])
def test_para_dist_examples(p, q, expected):
    assert para_dist(ParaPoint(p[0], p[1:]), ParaPoint(q[0], q[1:])) == pytest.approx(expected)


@given(point, point, point)
def test_para_dist_is_a_metric(a, b, c):
    a, b, c = map(np.array, (a, b, c))
    assert para_dist(a, b) == pytest.approx(para_dist(b, a))
    assert para_dist(a, a) == 0.0
    assert para_dist(a, c) <= para_dist(a, b) + para_dist(b, c) + 1e-9


@given(point, point, st.floats(0.01, 100))
def test_para_dist_parabolic_scaling(a, b, lam):
    a, b = np.array(a), np.array(b)
    scale = np.array([lam * lam, lam, lam])
    assert para_dist(a * scale, b * scale) == pytest.approx(lam * para_dist(a, b), rel=1e-9, abs=1e-9)


def test_dimension_mismatch_raises():
    with pytest.raises(DimensionError):
        para_dist(np.zeros(3), np.zeros(4))
    with pytest.raises(DimensionError):
        ParaPoint(0.0, (0, 0, 0, 0))
    with pytest.raises(ParameterError):
        ParaPoint(np.nan, (0,))


def test_grid_rejects_fractional_box():
    with pytest.raises(ParameterError):
        ParaGrid(1, 0.1, ((0, 0.0105), (0, 1)))
    g = ParaGrid(1, 1 / 8, ((0, 1 / 8), (0, 1)))
    assert g.shape == (8, 8)
    assert g.steps == (1 / 64, 1 / 8)


def test_dist_to_flat_graph_is_vertical():
    g = flat_graph(n=2, delta=1 / 16, box=((-1, 1), (-2, 2)))
    assert dist_to_graph(np.array([0.0, 0.0, 1.0]), g) == pytest.approx(1.0, abs=1e-9)


def test_dist_zero_on_graph():
    g = sine_graph(n=2, delta=1 / 16, box=((-1, 1), (-2, 2)), amplitude=0.3, frequency=2.0)
    base = np.array([[0.25, 0.3], [-0.5, -1.1]])
    assert np.allclose(dist_to_graph(g.lift(base), g), 0.0, atol=1e-9)


def test_dist_to_sine_graph_matches_brute_force():
    # oracle: 1-D minimisation of sqrt(y^2 + (1 - 0.4 sin y)^2) on 4e6 nodes
    g = sine_graph(n=2, delta=1 / 32, box=((-1, 1), (-2, 2)), amplitude=0.4, frequency=1.0)
    d = dist_to_graph(np.array([0.0, 0.0, 1.0]), g)
    assert 0.5 <= d <= 1.0
    assert d == pytest.approx(0.9308414904454229, rel=1e-6)


def test_dist_outside_window_raises():
    g = flat_graph(n=2, delta=1 / 8, box=((0, 1), (0, 1)))
    with pytest.raises(OutOfWindowError):
        dist_to_graph(np.array([0.0, 5.0, 0.0]), g)
    assert dist_to_graph(np.array([0.0, 5.0, 0.0]), g, window=10.0) > 0


def test_fine_distance_agrees_with_branch_and_bound():
    g = sine_graph(n=1, delta=1 / 32, box=((-1, 1),), time_amplitude=0.1, time_frequency=3.0)
    rng = np.random.default_rng(3)
    pts = np.column_stack([rng.uniform(-0.5, 0.5, 20), rng.uniform(-0.4, 0.4, 20)])
    fine = fine_graph_distance(g, pts, nodes=2049)
    coarse = dist_to_graph(pts, g, refine=True)
    assert np.all(fine <= coarse + 1e-9)
    assert np.allclose(fine, coarse, rtol=0.02, atol=1e-3)


def test_surface_measure_unit_ball_flat():
    # oracle: 2-D quadrature of {|x1| + |t|^(1/2) < 1} gives 4/3
    g = flat_graph(n=2, delta=1 / 128, box=((-2, 2), (-2, 2)))
    m = surface_measure(g, ParaBall(ParaPoint(0.0, (0.0, 0.0)), 1.0))
    assert m == pytest.approx(4 / 3, rel=0.02)


def test_surface_measure_doubling_and_disjoint():
    g = flat_graph(n=2, delta=1 / 64, box=((-2, 2), (-2, 2)))
    c = ParaPoint(0.0, (0.0, 0.0))
    m1 = surface_measure(g, ParaBall(c, 0.25))
    m2 = surface_measure(g, ParaBall(c, 0.5))
    assert m2 / m1 == pytest.approx(2 ** 3, rel=0.05)
    assert surface_measure(g, ParaBall(ParaPoint(0.0, (0.0, 5.0)), 1.0)) == 0.0


def test_adr_flat_and_sine():
    g = flat_graph(n=2, delta=1 / 64, box=((-1, 1), (-2, 2)))
    rep = adr_check(g, [np.array([0.0, 0.0, 0.0]), np.array([0.2, 0.5, 0.0])], [0.125, 0.25, 0.5])
    assert rep["max"] / rep["min"] <= 1.05
    ratios = []
    for delta in (1 / 32, 1 / 64):
        s = sine_graph(n=2, delta=delta, box=((-1, 1), (-2, 2)), amplitude=0.3, frequency=1.0)
        centers = [s.lift(np.array([[0.0, x]]))[0] for x in (0.0, 0.7)]
        ratios.append(adr_check(s, centers, [0.25, 0.5]))
    assert abs(ratios[1]["max"] / ratios[0]["max"] - 1) < 0.1
    with pytest.raises(ResolutionError):
        adr_check(g, [np.zeros(3)], [g.delta])


def test_graph_spec_round_trip():
    g = sine_graph(n=2, delta=1 / 8, box=((0, 1), (0, 1)), amplitude=0.1, frequency=2.0)
    h = graph_from_spec(graph_to_spec(g))
    assert np.array_equal(g.values, h.values)
    t = SampledGraph(g.grid, g.values, g.b1)
    u = graph_from_spec(graph_to_spec(t))
    assert np.array_equal(u.values, g.values) and u.name == "table"


def test_measured_lip_of_sine():
    g = sine_graph(n=2, delta=1 / 64, box=((0, 1), (0, 2)), amplitude=0.2, frequency=3.0)
    assert g.measured_lip() <= g.b1 * (1 + 1e-9)
    assert g.measured_lip() == pytest.approx(0.6, rel=0.01)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-1, 1), st.floats(-0.3, 0.3))
def test_vertical_distance_bounds_true_distance(t, x, y):
    g = sine_graph(n=2, delta=1 / 16, box=((-1, 1), (-2, 2)), amplitude=0.2, frequency=1.0)
    p = np.array([t, x, y])
    d = dist_to_graph(p, g)
    assert d <= abs(g.vertical_offset(p)) + 1e-9
    # Lipschitz graph: vertical offset <= (1 + b1) distance
    assert abs(g.vertical_offset(p)) <= (1 + g.b1) * d + 2 * g.delta
