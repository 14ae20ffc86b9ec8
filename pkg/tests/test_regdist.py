import numpy as np
import pytest

from parabolic_cme import regdist as R
from parabolic_cme.exceptions import ParameterError, ResolutionError

CONST_BOX = ((0, 1 / 64), (0, 1))
ORIGIN_BOX = ((0, 1 / 256), (0, 1 / 16))


def one(p):
    return np.ones(len(p))


def to_origin(p):
    return np.abs(p[:, 1]) + np.sqrt(np.abs(p[:, 0]))


@pytest.fixture(scope="module")
def const_field():
    return R.build_H(one, CONST_BOX)


@pytest.fixture(scope="module")
def origin_field():
    return R.build_H(to_origin, ORIGIN_BOX, k_max=12)


def _interior(field, pts, cells=5):
    lo, hi = np.array([a for a, _ in field.cubes.box]), np.array([b for _, b in field.cubes.box])
    s = field.cubes.side.max()
    pad = cells * np.array([s * s, s])
    return pts[np.all((pts - lo > pad) & (hi - pts > pad), axis=1)]


def test_constant_h_single_generation(const_field):
    c = const_field.cubes
    assert len(np.unique(c.k)) == 1 and len(c.unresolved) == 0
    d = c.diam[0]
    assert d <= 1 / 20 < 2 * d


def test_constant_h_gives_periodic_H(const_field):
    c = const_field.cubes
    centers = _interior(const_field, c.centers)
    d = const_field.evaluate(centers, derivs=True)
    assert np.ptp(d["H"]) < 1e-12
    # each center sees a symmetric lattice of bumps, so first derivatives vanish
    assert np.abs(d["Ht"]).max() < 1e-9 and np.abs(d["grad"]).max() < 1e-9
    rep = R.check_whitney_h(c, one)
    N = rep["overlap_N"]
    pts = _interior(const_field, R.sample_points(const_field, 64))
    H = const_field.evaluate(pts)
    assert H.min() >= 1 / 60 and H.max() <= 0.6 * N
    cell = np.array([c.side[0] ** 2, 0.0])
    assert np.allclose(const_field.evaluate(pts[:100] + cell), H[:100], atol=1e-12)


def test_distance_to_origin_cubes(origin_field):
    c = origin_field.cubes
    rep = R.check_whitney_h(c, to_origin)
    assert rep["violations"] == []
    assert 1 / 6 <= rep["max_neighbor_ratio"] <= 6
    assert rep["overlap_N"] <= rep["overlap_bound"]
    # diam grows linearly with the distance to the origin
    dist = to_origin(c.centers)
    ratio = dist / c.diam
    assert ratio.min() >= R.LOW * 0.5 and ratio.max() <= R.HIGH * 1.5


def test_zero_set_avoids_triple_dilates(origin_field):
    c = origin_field.cubes
    s = c.side
    far_t = np.abs(c.centers[:, 0]) >= 4.5 * s ** 2
    far_x = np.abs(c.centers[:, 1]) >= 1.5 * s
    assert np.all(far_t | far_x)
    assert origin_field.evaluate(np.zeros((1, 2)))[0] == 0.0


def test_verify_props_on_origin_field(origin_field):
    rep = R.verify_regdist_props(origin_field, per_axis=32)
    assert rep["passes"] and rep["lower_ok"] and rep["upper_ok"] and rep["lip_ok"]
    assert rep["constants"]["c1"] >= 1 / 60
    assert rep["constants"]["c3"] <= rep["lip_chain_bound"]


def test_derivatives_match_finite_differences(origin_field):
    rng = np.random.default_rng(2)
    pts = np.column_stack([rng.uniform(1 / 1024, 3 / 1024, 30), rng.uniform(0.02, 0.05, 30)])
    d = origin_field.evaluate(pts, derivs=True)
    errs = []
    for e in (2e-3, 1e-3):
        et = e * origin_field.cubes.side.min() ** 2
        ex = e * origin_field.cubes.side.min()
        ft = (origin_field.evaluate(pts + [et, 0]) - origin_field.evaluate(pts - [et, 0])) / (2 * et)
        fx = (origin_field.evaluate(pts + [0, ex]) - origin_field.evaluate(pts - [0, ex])) / (2 * ex)
        errs.append(max(np.abs(ft - d["Ht"]).max() / np.abs(d["Ht"]).max(),
                        np.abs(fx - d["grad"][:, 0]).max() / np.abs(d["grad"]).max()))
    assert errs[0] < 1e-3
    # second order: halving the step cuts the error by about four
    assert errs[1] < errs[0] / 3


def test_eval_H_derivs_orders(origin_field):
    p = np.array([[2 / 1024, 0.03]])
    for m in (1, 2):
        t, x = R.eval_H_derivs(origin_field, p, m)
        assert np.isfinite(t).all() and np.isfinite(x).all()
    with pytest.raises(ParameterError):
        R.eval_H_derivs(origin_field, p, 3)
    with pytest.raises(ParameterError):
        R.eval_H_derivs(origin_field, np.zeros((1, 2)), 1)


def test_bump_profile():
    u = np.linspace(-5, 5, 2001)
    v, _, _ = R.bump1d(u, 1.0, 1.5)
    assert np.all(v[np.abs(u) <= 1.0] == 1.0) and np.all(v[np.abs(u) >= 1.5] == 0.0)
    assert np.all((v >= 0) & (v <= 1))
    assert R.bump_lip_constant() > 0


def test_selection_errors():
    with pytest.raises(ParameterError):
        R.whitney_wrt_h(lambda p: 5 * to_origin(p), ORIGIN_BOX)
    with pytest.raises(ResolutionError):
        R.whitney_wrt_h(lambda p: np.full(len(p), 1e-9), CONST_BOX, k_max=6, check_lip=False)


def test_estimator(origin_field):
    est = R.RegularizedDistance(k_max=12).fit(to_origin, ORIGIN_BOX)
    pts = R.sample_points(origin_field, 8)
    assert np.array_equal(est.transform(pts), origin_field.evaluate(pts))
    with pytest.raises(ParameterError):
        est.transform(np.zeros((2, 3)))
