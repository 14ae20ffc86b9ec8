import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from parabolic_cme.dyadic import CubeId, build_cubes_on_graph, dilate, verify_cube_axioms
from parabolic_cme.exceptions import AxiomError, ParameterError, ResolutionError
from parabolic_cme.graphs import flat_graph, sine_graph
from parabolic_cme.pargeo import adr_check, para_dist


@pytest.fixture(scope="module")
def flat_tree():
    g = flat_graph(n=2, delta=1 / 64, box=((0, 1), (0, 1)))
    return build_cubes_on_graph(g, 0, 3)


@pytest.fixture(scope="module")
def sine_tree():
    g = sine_graph(n=2, delta=1 / 64, box=((0, 1), (0, 1)), amplitude=0.1, frequency=3.0,
                   time_amplitude=0.05, time_frequency=2.0)
    return build_cubes_on_graph(g, 0, 3)


@given(st.integers(0, 6), st.integers(-50, 50), st.integers(-50, 50))
def test_cube_id_family(k, t, x):
    q = CubeId(k + 1, (t, x))
    assert q in q.parent().children()
    assert len(q.children()) == 8
    assert q.ancestor(k + 1) == q
    assert q.ancestor(k) == q.parent()
    assert CubeId.parse(q.label()) == q
    lo, hi = q.base_box()
    assert hi[0] - lo[0] == pytest.approx(q.side() ** 2)


def test_children_and_measure_partition(flat_tree):
    for q, info in flat_tree.cubes.items():
        if q.k < flat_tree.k_max:
            assert len(info.children) == 8
            assert sum(flat_tree[c].measure for c in info.children) == pytest.approx(info.measure, rel=1e-12)


def test_flat_diameters(flat_tree):
    for q, info in flat_tree.cubes.items():
        assert 1.0 <= info.diam / q.side() <= np.sqrt(2) + 1


def test_axioms_flat_and_sine(flat_tree, sine_tree):
    rep = verify_cube_axioms(flat_tree, fit_generation=2)
    assert rep["c_star"] == pytest.approx(2.0)
    # boundary layers of width varrho * side hold a fraction ~ varrho of the cube
    assert rep["gamma"] == pytest.approx(1.0, rel=0.2)
    rep = verify_cube_axioms(sine_tree)
    assert rep["c_star"] >= 2.0


def test_nesting_fault_is_an_error(flat_tree):
    q = flat_tree.generation(2)[5]
    info = flat_tree.cubes[q]
    saved = info.index_hi.copy()
    info.index_hi = info.index_hi + 1
    try:
        with pytest.raises(AxiomError):
            verify_cube_axioms(flat_tree)
    finally:
        info.index_hi = saved


def test_resolution_floor():
    g = flat_graph(n=2, delta=1 / 64, box=((0, 1), (0, 1)))
    with pytest.raises(ResolutionError):
        build_cubes_on_graph(g, 0, 5)
    with pytest.raises(ParameterError):
        build_cubes_on_graph(g, 3, 2)


def test_every_sample_in_one_cube_per_generation(sine_tree):
    shape = sine_tree.graph.grid.shape
    for k in range(sine_tree.k_min, sine_tree.k_max + 1):
        count = sum(sine_tree.sample_mask(q).astype(int) for q in sine_tree.generation(k))
        assert count.shape == shape and np.all(count == 1)


def test_cube_of_matches_samples(sine_tree):
    q = sine_tree.generation(2)[7]
    pts = sine_tree.sample_points(q)
    assert set(sine_tree.cube_of(pts, 2)) == {q}


def test_dilate_two_is_diam_neighbourhood(flat_tree):
    q = CubeId(3, (21, 3))
    info = flat_tree[q]
    got = dilate(q, 2.0, flat_tree)
    allp = flat_tree.graph.sample_points()
    own = flat_tree.sample_points(q)
    # base-box prefilter is a superset: parabolic distance dominates each coordinate gap
    lo, hi = q.base_box()
    r = info.diam
    keep = np.all((allp[:, :-1] > lo - [r * r, r]) & (allp[:, :-1] < hi + [r * r, r]), axis=1)
    allp = allp[keep]
    d = np.concatenate([para_dist(allp[i:i + 256, None, :], own[None]).min(axis=1)
                        for i in range(0, len(allp), 256)])
    expected = allp[d < info.diam]
    assert {tuple(p) for p in got} == {tuple(p) for p in expected}


def test_dilate_near_one_is_the_cube(flat_tree):
    q = CubeId(3, (20, 3))
    got = dilate(q, 1.0 + 1e-6, flat_tree)
    own = flat_tree.sample_points(q)
    assert {tuple(p) for p in got} == {tuple(p) for p in own}
    with pytest.raises(ParameterError):
        dilate(q, 1.0, flat_tree)


def test_dilate_measure_growth(flat_tree):
    g = flat_tree.graph
    q = CubeId(3, (30, 4))
    info = flat_tree[q]
    c = info.center
    # KQ lies in the ball of radius K diam(Q) about the center of Q
    adr = adr_check(g, [c], [0.125, 0.25])
    C = adr["max"] * (info.diam / q.side()) ** 3
    base = len(flat_tree.sample_points(q))
    for K in (2.0, 3.0):
        m = len(dilate(q, K, flat_tree))
        assert base < m <= C * K ** 3 * base
