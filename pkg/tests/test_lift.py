import numpy as np
import pytest

from parabolic_cme import lift
from parabolic_cme.corona import regime_all_descendants
from parabolic_cme.dyadic import build_cubes_on_graph
from parabolic_cme.exceptions import ParameterError
from parabolic_cme.graphs import flat_graph, sine_graph

ETA = 1 / 16


@pytest.fixture(scope="module")
def setup():
    E = sine_graph(n=1, delta=1 / 32, box=((-16.0, 17.0),), time_amplitude=0.002,
                   time_frequency=float(2 * np.pi))
    tree = build_cubes_on_graph(E, 0, 0)
    Q = min(tree.generation(0), key=lambda q: abs(tree[q].center[0] - 0.5))
    S = regime_all_descendants(tree, Q, depth=0)
    return E, tree, S, lift.d_on_graph(E, S, tree)


@pytest.fixture(scope="module")
def psi(setup):
    E, tree, S, dF = setup
    return lift.build_psi(E, S, tree, ETA, dF=dF)


def test_d_is_diam_on_the_cube(setup):
    E, tree, S, dF = setup
    assert dF.shape == E.grid.shape
    assert dF.min() == pytest.approx(tree[S.maximal].diam)


@pytest.mark.parametrize("alpha", [7 / 8, 29 / 32, 31 / 32])
def test_lift_values_and_bounds(setup, alpha):
    E, tree, S, dF = setup
    lg = lift.lift_graph(E, S, tree, ETA, alpha, 1, dF)
    e = ETA ** alpha
    assert np.allclose(lg.values - E.values, e * dF)
    assert lg.report["lip_ok"] and lg.report["lip"] <= 3 * e
    # d is 1-Lipschitz and each point moves vertically by e d
    assert 1 - e - 1e-9 <= lg.report["dG_over_dF_min"] <= lg.report["dG_over_dF_max"] <= 1 + e + 1e-9
    down = lift.lift_graph(E, S, tree, ETA, alpha, -1, dF, check=False)
    assert np.allclose(down.values + lg.values, 2 * E.values)


def test_lift_argument_errors(setup):
    E, tree, S, dF = setup
    with pytest.raises(ParameterError):
        lift.lift_graph(E, S, tree, 0.5, 7 / 8)
    with pytest.raises(ParameterError):
        lift.lift_graph(E, S, tree, ETA, 0.8, dF=dF)
    with pytest.raises(ParameterError):
        lift.lift_graph(E, S, tree, ETA, 7 / 8, sign=0, dF=dF)
    other = flat_graph(n=1, delta=1 / 16, box=((-16.0, 17.0),))
    with pytest.raises(ParameterError):
        lift.d_on_graph(other, S, tree)


def test_e_below_margins_on_e_itself(setup):
    E, tree, S, dF = setup
    rep = lift.check_E_below(lift.lift_graph(E, S, tree, ETA, 7 / 8, 1, dF, check=False), tree)
    # the regime graph is E: the lift sits exactly e d above each sample
    assert rep["a_ratio_min"] == pytest.approx(1.0) and rep["a_ratio_max"] == pytest.approx(1.0)
    assert rep["b_margin_min"] == pytest.approx(0.75)
    assert rep["a_ok"] and rep["b_ok"] and rep["approx_constant"] == 0.0


def test_psi_pair(setup, psi):
    E, tree, S, dF = setup
    rep = psi.report
    c = ETA ** lift.PSI_EXPONENT
    base = E.grid.points().reshape(-1, E.grid.n_space + 1)
    Hv = psi.H.evaluate(base).reshape(E.grid.shape)
    assert np.allclose(psi.plus.values - E.values, c * Hv)
    assert np.allclose(psi.plus.values + psi.minus.values, 2 * E.values)
    # H is comparable to h = d / 2 with the regularized-distance constants
    assert rep["H_over_dF_min"] >= 1 / 120 and rep["H_over_dF_max"] <= 0.3 * 64
    assert max(rep["pbmo_plus"], rep["pbmo_minus"]) <= rep["pbmo_bound"]


def test_sandwich_threshold_is_consistent(psi):
    rep = psi.report
    need = min(rep["H_over_dF_min"] ** 32, (1 / rep["H_over_dF_max"]) ** 16)
    assert rep["eta_needed"] == pytest.approx(need)
    # at eta = 1/16 the measured ratio is far from the sandwich range
    assert rep["eta_needed"] < ETA and not rep["sandwich_ok"]
    assert len(rep["sandwich_lower_witness"]) == 1  # a base point (t) of the n = 1 graph


def test_ball_inclusion():
    rng = np.random.default_rng(0)
    c = np.zeros(2)
    assert lift._ball_inclusion(c, 1.0, c, 2.0, rng)[0]
    ok, wit = lift._ball_inclusion(c, 2.0, c, 1.0, rng)
    assert not ok and lift.para_dist(np.array(wit), c) >= 1.0
    # offset in time by 1/4 costs 1/2 of parabolic radius
    assert lift._ball_inclusion(np.array([0.25, 0.0]), 0.5, c, 1.0, rng)[0]
    assert not lift._ball_inclusion(np.array([0.25, 0.0]), 0.6, c, 1.0, rng)[0]


@pytest.mark.slow
def test_corona_domain_report(setup, psi):
    E, tree, S, dF = setup
    rep = lift.corona_domain_report(E, S, tree, ETA, psi, points=500)
    for k in ("1", "2", "3", "4", "separation", "split_margin"):
        assert rep[k]["ok"], k
    # M0 K^(3/4) diam = 32 diam cannot fit in a ball of radius K^(7/8) diam ~ 11.3 diam
    assert not rep["5"]["ok"] and rep["5"]["plus"]["outer_witness"] is not None
    assert not rep["all_ok"]
