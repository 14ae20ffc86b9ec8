import csv

import numpy as np
import pytest

from parabolic_cme.caloric import (HeatData, HeatSolver, beta_table, caccioppoli_ratio, cme_functional,
                                   dirichlet_total, packing_sum, region_cells, solve_heat, write_beta_csv,
                                   write_cme_csv)
from parabolic_cme.corona import single_regime_corona
from parabolic_cme.dyadic import build_cubes_on_graph
from parabolic_cme.exceptions import CFLError, ParameterError, ResolutionError
from parabolic_cme.graphs import flat_graph, sine_graph

BOX = ((-1, 1), (-1, 1))
H = 1 / 32


def _graph(height=0.0):
    return flat_graph(n=2, delta=1 / 64, box=((0, 1), (-1, 1)), height=height)


@pytest.fixture(scope="module")
def step_field():
    return solve_heat(_graph(), BOX, H, 0.25, HeatData("step_x1", {"width": 0.125}), stride=4)


@pytest.fixture(scope="module")
def linear_field():
    # graph far below: the whole box is the domain, u = x1 everywhere
    return solve_heat(_graph(-2.0), BOX, H, 0.5, HeatData("linear_x1"), stride=4)


@pytest.mark.parametrize("kind", ["constant", "linear_x1", "quadratic"])
def test_scheme_exactness(kind):
    g = sine_graph(n=2, delta=1 / 64, box=((0, 1), (-1, 1)), amplitude=0.1, frequency=3.0)
    data = HeatData(kind)
    f = solve_heat(g, BOX, H, 1 / 16, data)
    mesh = np.meshgrid(*f.axes, indexing="ij")
    err = max(np.abs(f.u[k] - data(t, mesh)).max() for k, t in enumerate(f.times))
    assert err < 1e-12
    assert f.report["max_principle_ok"]


def test_maximum_principle_on_step(step_field):
    assert step_field.report["max_principle_worst_excursion"] <= 1e-12
    assert step_field.u.min() >= 0.0 and step_field.u.max() <= 1.0
    assert step_field.report["stored"] == len(step_field.times) == 65


def test_argument_errors():
    g = _graph()
    with pytest.raises(CFLError):
        solve_heat(g, BOX, H, 1 / 16, substeps=3)
    with pytest.raises(ParameterError):
        solve_heat(g, BOX, H, 0.01)
    with pytest.raises(ParameterError):
        solve_heat(g, BOX, H, 1 / 16, stride=3)
    with pytest.raises(ParameterError):
        solve_heat(g, ((-1, 1),), H, 1 / 16)
    with pytest.raises(ParameterError):
        HeatData("gaussian")


def test_caccioppoli_constant_is_zero():
    f = solve_heat(_graph(-2.0), BOX, H, 0.5, HeatData("constant"), stride=4)
    assert caccioppoli_ratio(f, np.array([0.25, 0.0, 0.0]), 0.25) == 0.0


def test_caccioppoli_linear_matches_quadrature(linear_field):
    # |B_r| = (pi/3) r^4 and iint_{B_R} x1^2 = (pi/30) R^6 in (t, x1, x2): ratio 10 / (1 + alpha)^6
    c = np.array([0.25, 0.0, 0.0])
    for alpha in (0.5, 1.0):
        got = caccioppoli_ratio(linear_field, c, 0.25, alpha=alpha)
        assert got == pytest.approx(10 / (1 + alpha) ** 6, rel=0.08)
    r1 = caccioppoli_ratio(linear_field, c, 0.25)
    r2 = caccioppoli_ratio(linear_field, c, 0.125)
    assert 0.5 <= r1 / r2 <= 2.0


def test_caccioppoli_window_errors(linear_field):
    with pytest.raises(ParameterError):
        caccioppoli_ratio(linear_field, np.array([0.25, 0.0, 0.0]), 0.45)
    with pytest.raises(ParameterError):
        caccioppoli_ratio(linear_field, np.array([0.25, 0.0, 0.0]), 0.1, subtract="mean")


def test_cme_constant_is_zero():
    f = solve_heat(_graph(), BOX, H, 0.25, HeatData("constant"), stride=4)
    rows, sup, sup_t = cme_functional(f, [[0.125, 0.0]], [0.25])
    assert sup == 0.0 and sup_t == 0.0 and rows[0]["cells"] > 0


def test_cme_step_is_finite(step_field):
    rows, sup, sup_t = cme_functional(step_field, [[0.125, 0.0], [0.125, 0.25]], [0.25, 0.3])
    assert len(rows) == 4
    assert 0 < sup <= sup_t < np.inf
    with pytest.raises(ResolutionError):
        cme_functional(step_field, [[0.125, 0.0]], [0.1])
    with pytest.raises(ParameterError):
        cme_functional(step_field, [[0.125, 0.9]], [0.3])
    assert dirichlet_total(step_field) > 0


def test_csv_round_trip(step_field, tmp_path):
    rows, _, _ = cme_functional(step_field, [[0.125, 0.0]], [0.25])
    write_cme_csv(rows, tmp_path / "cme.csv", 2)
    with open(tmp_path / "cme.csv") as fh:
        got = list(csv.reader(fh))
    assert got[0] == ["center_t", "center_x1", "center_x2", "r", "value", "value_with_time_term"]
    assert float(got[1][4]) == rows[0]["value"]


@pytest.fixture(scope="module")
def pack_tree():
    g = flat_graph(n=2, delta=1 / 256, box=((1 / 8, 1 / 8 + 1 / 256), (0, 1 / 16)))
    return build_cubes_on_graph(g, 4, 6)


def test_beta_zero_for_constant(pack_tree):
    f = solve_heat(_graph(), BOX, H, 0.25, HeatData("constant"), stride=4)
    betas = beta_table(f, pack_tree, list(pack_tree.cubes), 1 / 16)
    assert all(b == 0.0 for b in betas.values())


def test_packing_on_step(step_field, pack_tree, tmp_path):
    betas = beta_table(step_field, pack_tree, list(pack_tree.cubes), 1 / 16)
    assert all(b >= 0 for b in betas.values())
    top = pack_tree.generation(4)[0]
    c = single_regime_corona(pack_tree)
    rep = packing_sum(betas, pack_tree, top, c)
    assert np.isfinite(rep["ratio"]) and rep["parts_consistent"]
    assert rep["parts"]["bad"] == 0.0 and rep["parts"]["home"] == pytest.approx(rep["ratio"])
    with pytest.raises(ParameterError):
        packing_sum({}, pack_tree, top)
    write_beta_csv(betas, pack_tree, tmp_path / "beta.csv")
    assert sum(1 for _ in open(tmp_path / "beta.csv")) == len(betas) + 1


def test_region_cells_respect_bounds(step_field, pack_tree):
    q = pack_tree.generation(5)[3]
    diam = pack_tree[q].diam
    for k, sl, mask in region_cells(step_field, pack_tree, q, 1 / 16):
        assert np.all(step_field.delta(k)[sl][mask] >= 0.5 * diam)
    far = flat_graph(n=2, delta=1 / 256, box=((1 / 8, 1 / 8 + 1 / 256), (15 / 16, 1.0)))
    tree = build_cubes_on_graph(far, 4, 4)
    with pytest.raises(ParameterError):
        list(region_cells(step_field, tree, tree.generation(4)[0], 1 / 16))


def test_estimator_matches_function(step_field):
    est = HeatSolver(space_box=BOX, h=H, T=0.25, data={"kind": "step_x1", "params": {"width": 0.125}},
                     stride=4).fit(_graph())
    assert np.array_equal(est.field_.u, step_field.u)
    assert est.report_["max_principle_ok"]
