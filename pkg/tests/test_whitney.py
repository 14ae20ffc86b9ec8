import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from parabolic_cme.dyadic import CubeId, build_cubes_on_graph
from parabolic_cme.exceptions import ParameterError, SeparationError
from parabolic_cme.graphs import flat_graph, sine_graph
from parabolic_cme.whitney import (WhitneyDecomposition, box_diam, overlap_count, split_region_by_graph,
                                   whitney_cube_at, whitney_decompose, whitney_region)

ETA, K = 1 / 16, 16.0


def _flat(delta):
    return flat_graph(n=1, delta=delta, box=((-8, 8),))


@pytest.fixture(scope="module")
def setup():
    out = {}
    for delta in (1 / 16, 1 / 32):
        g = _flat(delta)
        tree = build_cubes_on_graph(g, 0, 2)
        est = WhitneyDecomposition(max_depth=6, top_side=1.0, min_dist=0.5).fit(g, ((-4, 5), (-2, 2)))
        out[delta] = (g, tree, est)
    return out


def _time_gap(t0, t1, dt):
    """Distance from [t0, t1] to the nearest sample time k * dt."""
    k = np.ceil(t0 / dt - 1e-12)
    if k * dt <= t1 + 1e-15:
        return 0.0
    return min(t0 - (k - 1) * dt, k * dt - t1)


def _oracle(t, x, dt, top=1.0):
    """Top-down acceptance above the sampled flat graph x = 0, in closed form.

    A box of side s with lower edge a > 0 lies at distance a + sqrt(gap) from
    the samples, gap being its time distance to the sample times; its 4-fold
    dilate reaches down to a - 1.5 s.  diam = 2 s.
    """
    s = top
    while s > 1e-9:
        a = np.floor(x / s) * s
        t0 = np.floor(t / s ** 2) * s ** 2
        d_I = a + np.sqrt(_time_gap(t0, t0 + s * s, dt))
        d_4I = max(a - 1.5 * s, 0.0) + np.sqrt(_time_gap(t0 - 7.5 * s * s, t0 + 8.5 * s * s, dt))
        if d_4I >= 8 * s and d_I <= 200 * s:
            return s, d_I
        s /= 2
    return np.nan, np.nan


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(0.05, 1.5))
def test_whitney_cube_matches_closed_form(t, x):
    g = _flat(1 / 16)
    lo, side, dist = whitney_cube_at(g, np.array([[t, x]]), 1.0)
    s, d = _oracle(t, x, g.grid.time_step)
    assert side[0] == s
    assert dist[0] == pytest.approx(d, rel=1e-9)


def test_point_at_height_one():
    g = _flat(1 / 16)
    _, side, _ = whitney_cube_at(g, np.array([[0.3, 1.0]]), 1.0)
    diam = box_diam(side[0], 1)
    assert 1 / 100 <= diam <= 1 / 4
    assert diam == 0.125


def test_acceptance_constants(setup):
    _, _, est = setup[1 / 16]
    rep = est.report()
    assert 4 <= rep["dist_over_diam_min"] and rep["dist_over_diam_max"] <= 100
    # accepted and discarded boxes partition the box
    assert rep["accepted_volume"] + rep["discarded_volume"] == pytest.approx(rep["box_volume"])


def test_accepted_boxes_disjoint(setup):
    _, _, est = setup[1 / 16]
    c = est.cubes_
    idx = c.locate(c.centers)
    assert np.array_equal(idx, np.arange(len(c)))


def test_sine_graph_acceptance():
    g = sine_graph(n=2, delta=1 / 16, box=((-2, 2), (-2, 2)), amplitude=0.1, frequency=2.0)
    c = whitney_decompose(g, ((0, 1 / 16), (0, 1 / 4), (0.5, 0.75)), max_depth=4)
    r = c.dist_E / c.diam
    assert r.min() >= 4 and r.max() <= 100


def test_top_level_too_small():
    g = _flat(1 / 16)
    with pytest.raises(ParameterError):
        WhitneyDecomposition(max_depth=1, top_side=1 / 64).fit(g, ((0, 1 / 4096), (5, 5 + 1 / 64)))


def test_region_members_respect_bounds(setup):
    g, tree, est = setup[1 / 16]
    Q = CubeId(0, (0,))
    assert tree[Q].diam == 1.0
    W = whitney_region(Q, ETA, K, False, est.cubes_, tree)
    assert len(W) > 0
    assert est.cubes_.dist_E[W.members].min() >= ETA ** 0.25
    Ws = whitney_region(Q, ETA, K, True, est.cubes_, tree)
    assert set(W.members.tolist()) <= set(Ws.members.tolist())
    with pytest.raises(ParameterError):
        whitney_region(Q, ETA, 8.0, False, est.cubes_, tree)


def test_region_count_stable_under_refinement(setup):
    counts = []
    for delta in (1 / 16, 1 / 32):
        _, tree, est = setup[delta]
        counts.append(len(whitney_region(CubeId(0, (0,)), ETA, K, False, est.cubes_, tree)))
    assert abs(counts[1] / counts[0] - 1) < 0.1


def test_overlap_counts(setup):
    g, tree, est = setup[1 / 16]
    W = whitney_region(CubeId(0, (0,)), ETA, K, False, est.cubes_, tree)
    assert overlap_count([W]) == 1
    assert overlap_count([]) == 0
    both = [whitney_region(q, ETA, K, False, est.cubes_, tree) for q in tree.generation(1)
            if -4 <= q.base_box()[0][0] < 5]
    N = overlap_count(both)
    assert 1 <= N <= len(both)


def test_distant_regions_disjoint():
    g = flat_graph(n=1, delta=1 / 16, box=((-16, 24),))
    tree = build_cubes_on_graph(g, 0, 1)
    est = WhitneyDecomposition(max_depth=6, top_side=1.0, min_dist=0.5).fit(g, ((-4, 20), (-2, 2)))
    a, b = CubeId(0, (0,)), CubeId(0, (15,))
    # time gap 14 gives parabolic distance sqrt(14) > 2 K^(1/4) diam
    Ua = whitney_region(a, ETA, K, False, est.cubes_, tree)
    Ub = whitney_region(b, ETA, K, False, est.cubes_, tree)
    assert overlap_count([Ua, Ub]) == 1


def test_split_above_flat_graph(setup):
    g, tree, est = setup[1 / 16]
    W = whitney_region(CubeId(0, (0,)), ETA, K, False, est.cubes_, tree)
    up, down, margin = split_region_by_graph(W, g, diam_Q=1.0)
    assert len(up) + len(down) == len(W)
    assert margin >= ETA ** 0.5
    assert margin == pytest.approx(0.5)
    c = est.cubes_
    assert np.all(c.lo[up.members, 1] >= 0) and np.all(c.hi[down.members, 1] <= 0)
    above = W.__class__(W.Q, W.eta, W.K, W.star, W.members[c.lo[W.members, 1] > 0], c)
    u2, d2, _ = split_region_by_graph(above, g, diam_Q=1.0)
    assert len(d2) == 0 and len(u2) == len(above)


def test_split_rejects_straddling_members(setup):
    g, tree, est = setup[1 / 16]
    W = whitney_region(CubeId(0, (0,)), ETA, K, False, est.cubes_, tree)
    lifted = g.with_values(g.values + 0.6)
    with pytest.raises(SeparationError):
        split_region_by_graph(W, lifted, diam_Q=1.0)
