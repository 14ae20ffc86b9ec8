"""Lifted graphs ``f +/- eta^alpha d(F)`` and their smoothed versions ``f +/- eta^{15/16} H``.

The regime graph ``f`` lives over the t-independent plane ``{x_n = 0}``; E
is the graph carried by the cube tree.  Both share one base grid.  All
checks are pointwise at samples and return reports with witnesses.
"""

from dataclasses import dataclass, field

import numpy as np

from .corona import stopping_distance
from .exceptions import ParameterError, SeparationError
from .pargeo import fine_graph_distance, para_dist
from .regdist import GridField, build_H
from .whitney import (WhitneyDecomposition, box_extent, region_bounds, split_region_by_graph,
                      whitney_cube_at, whitney_region)

ALPHA_RANGE = (7 / 8, 31 / 32)
PSI_EXPONENT = 15 / 16


@dataclass
class LiftedGraph:
    base: object
    regime: object
    alpha: float
    sign: int
    graph: object
    dF: np.ndarray
    eta: float
    H: object = None
    report: dict = field(default_factory=dict)

    @property
    def values(self):
        return self.graph.values


def _check_eta(eta):
    if not 0 < eta < 1:
        raise ParameterError("eta must lie in (0, 1)")
    if eta ** (7 / 8) > 0.5:
        raise ParameterError(f"eta^(7/8) = {eta ** (7 / 8):.4g} exceeds 1/2")


def _same_grid(f, tree):
    E = tree.graph
    if f.grid.shape != E.grid.shape or f.grid.box != E.grid.box:
        raise ParameterError("regime graph and E must share one base grid")


def d_on_graph(f, S, tree):
    """``d[F(t, x')]`` at every base sample of ``f``, shaped like the grid."""
    _same_grid(f, tree)
    return stopping_distance(f.sample_points(), S, tree).reshape(f.grid.shape)


def lift_graph(f, S, tree, eta, alpha, sign=1, dF=None, check=True):
    """``g = f + sign eta^alpha d(F)`` with the Lip and distance-comparison checks."""
    _check_eta(eta)
    if not (ALPHA_RANGE[0] - 1e-12 <= alpha <= ALPHA_RANGE[1] + 1e-12):
        raise ParameterError(f"alpha {alpha} outside [7/8, 31/32]")
    if sign not in (1, -1):
        raise ParameterError("sign must be +1 or -1")
    dF = d_on_graph(f, S, tree) if dF is None else dF
    vals = f.values + sign * eta ** alpha * dF
    g = f.with_values(vals, b1=3 * eta ** alpha, name=f"{f.name}-lift")
    lg = LiftedGraph(f, S, alpha, sign, g, dF, eta)
    if check:
        lip = g.measured_lip()
        dG = stopping_distance(g.sample_points(), S, tree).reshape(f.grid.shape)
        ratio = dG / dF
        lg.report = {"lip": lip, "lip_bound": 3 * eta ** alpha, "lip_ok": lip <= 3 * eta ** alpha,
                     "dG_over_dF_min": float(ratio.min()), "dG_over_dF_max": float(ratio.max()),
                     "dG_ok": bool(ratio.min() >= 0.5 and ratio.max() <= 2.0)}
    return lg


@dataclass
class PsiPair:
    plus: LiftedGraph
    minus: LiftedGraph
    H: object
    report: dict


def build_psi(f, S, tree, eta, dF=None, h_box=None, k_max=None, m=4, bmo=True):
    """``psi^+- = f +- eta^{15/16} H`` with H built from ``h = d(F) / 2``.

    The sandwich between the 7/8 and 31/32 lifts is reported with its worst
    witnesses (not raised), together with the eta below which the measured
    ratio ``H / d(F)`` would make it hold.
    """
    _check_eta(eta)
    dF = d_on_graph(f, S, tree) if dF is None else dF
    h = GridField(tuple(f.grid.axes), 0.5 * dF)
    box = h_box or f.grid.box
    Hf = build_H(h, box, k_max=k_max, m=m)
    base = f.grid.points().reshape(-1, f.grid.n_space + 1)
    Hv = Hf.evaluate(base).reshape(f.grid.shape)
    c = eta ** PSI_EXPONENT
    out = []
    for sign in (1, -1):
        g = f.with_values(f.values + sign * c * Hv, name=f"{f.name}-psi{'+' if sign > 0 else '-'}")
        out.append(LiftedGraph(f, S, PSI_EXPONENT, sign, g, dF, eta, H=Hf))
    inside = np.ones(dF.shape, bool)
    for a, (lo_, hi_) in enumerate(box):
        inside &= (base[:, a] >= lo_).reshape(dF.shape) & (base[:, a] <= hi_).reshape(dF.shape)
    if not inside.any():
        raise ParameterError("H window misses the graph grid")
    r = np.where(inside, Hv / dF, np.nan)
    lo, hi = eta ** (7 / 8), eta ** (31 / 32)
    # psi+ - g_{31/32} = c H - hi d >= 0 and g_{7/8} - psi+ = lo d - c H >= 0 (mirror for psi-)
    lower_gap = np.where(inside, c * Hv - hi * dF, np.inf)
    upper_gap = np.where(inside, lo * dF - c * Hv, np.inf)
    iw_low = np.unravel_index(int(np.argmin(lower_gap)), dF.shape)
    iw_up = np.unravel_index(int(np.argmin(upper_gap)), dF.shape)
    rep = {"H_over_dF_min": float(np.nanmin(r)), "H_over_dF_max": float(np.nanmax(r)),
           "sandwich_lower_ok": bool(lower_gap.min() >= 0), "sandwich_upper_ok": bool(upper_gap.min() >= 0),
           "sandwich_lower_witness": base[np.ravel_multi_index(iw_low, dF.shape)].tolist(),
           "sandwich_upper_witness": base[np.ravel_multi_index(iw_up, dF.shape)].tolist(),
           "eta_needed": float(min(np.nanmin(r) ** 32, (1 / np.nanmax(r)) ** 16)),
           "window_fraction": float(inside.mean()),
           "lip_plus": out[0].graph.measured_lip(), "lip_minus": out[1].graph.measured_lip(),
           "H_cubes": len(Hf.cubes)}
    rep["sandwich_ok"] = rep["sandwich_lower_ok"] and rep["sandwich_upper_ok"]
    if bmo:
        from .halfderiv import half_time_derivative, pbmo_norm

        b2 = tree.graph.b2
        for name, lg in (("plus", out[0]), ("minus", out[1])):
            D = half_time_derivative(lg.graph.values, f.grid.time_step)
            rep[f"pbmo_{name}"] = pbmo_norm(D, f.grid.steps)
        rep["pbmo_bound"] = 1 + b2
    for lg in out:
        lg.report = rep
    return PsiPair(out[0], out[1], Hf, rep)


# ---------------------------------------------------------------- E below the lifted graph

def _window_points(E, center, radius):
    pts = E.sample_points()
    return pts[para_dist(pts, center) < radius]


def check_E_below(gplus, tree, radius=None):
    """E lies below the lifted graph with margins proportional to ``eta^alpha d``."""
    S = gplus.regime
    eta, alpha = gplus.eta, gplus.alpha
    info = tree[S.maximal]
    radius = 0.25 / eta * info.diam if radius is None else radius
    pts = _window_points(tree.graph, info.center, radius)
    d = stopping_distance(pts, S, tree)
    g = gplus.graph
    e = eta ** alpha
    dist_plus = fine_graph_distance(g, pts)
    below = g.evaluate(pts[:, :-1]) - pts[:, -1]
    a_lo = dist_plus / (e * d)
    b_margin = (below - 0.25 * e * d) / (e * d)
    dist_f = fine_graph_distance(gplus.base, pts)
    i_a = int(np.argmin(a_lo))
    i_b = int(np.argmin(b_margin))
    return {"points": len(pts),
            "a_ratio_min": float(a_lo.min()), "a_ratio_max": float(a_lo.max()),
            "a_ok": bool(a_lo.min() >= 1 / 8 and a_lo.max() <= 3),
            "a_witness": pts[i_a].tolist(),
            "b_margin_min": float(b_margin.min()), "b_ok": bool(b_margin.min() >= -1e-12),
            "b_witness": pts[i_b].tolist(),
            "approx_constant": float((dist_f / (eta * d)).max())}


# ---------------------------------------------------------------- corona domains

def _box_max_graph(g, lo, hi, per_axis=5, lip=None):
    """Max of the graph over the base footprint of each box (grid + interpolation)."""
    nb = g.grid.n_space + 1
    u = np.linspace(0, 1, per_axis)
    pat = np.stack(np.meshgrid(*[u] * nb, indexing="ij"), axis=-1).reshape(-1, nb)
    base = lo[:, None, :nb] + pat[None] * (hi[:, None, :nb] - lo[:, None, :nb])
    vals = g.evaluate(base.reshape(-1, nb)).reshape(base.shape[:2])
    step = (hi[:, :nb] - lo[:, :nb]) / (per_axis - 1)
    lip = g.measured_lip() if lip is None else lip
    slack = lip * (np.sqrt(step[:, 0] / 2) + np.linalg.norm(step[:, 1:] / 2, axis=1))
    return vals.max(axis=1) + slack, vals.min(axis=1) - slack


def _ball_inclusion(c1, r1, c2, r2, rng, samples=4000):
    """Is ``B(c1, r1) ⊂ B(c2, r2)``?  Returns (bool, witness or None)."""
    gap = float(para_dist(c1, c2))
    if gap + r1 <= r2:
        return True, None
    n1 = len(c1)
    cand = []
    for a in range(n1):
        for s in (-1, 1):
            v = np.zeros(n1)
            v[a] = s * ((r1 * (1 - 1e-9)) ** 2 if a == 0 else r1 * (1 - 1e-9))
            cand.append(c1 + v)
    # random points of B(c1, r1): split the radius between time and space
    w = rng.random(samples)
    dirs = rng.normal(size=(samples, n1 - 1))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    rad = r1 * (1 - 1e-9) * rng.random(samples) ** (1 / (n1 + 1))
    tt = np.sign(rng.random(samples) - 0.5) * (w * rad) ** 2
    xx = dirs * ((1 - w) * rad)[:, None]
    cand.extend(np.column_stack([c1[0] + tt, c1[1:] + xx]))
    cand = np.array(cand)
    out = para_dist(cand, c2) >= r2
    if out.any():
        return False, cand[int(np.argmax(para_dist(cand, c2)))].tolist()
    return True, None


def _aligned_box(center, R, s):
    out = [(np.floor((center[0] - R * R) / s ** 2) * s ** 2, np.ceil((center[0] + R * R) / s ** 2) * s ** 2)]
    out += [(np.floor((v - R) / s) * s, np.ceil((v + R) / s) * s) for v in center[1:]]
    return [(float(a), float(b)) for a, b in out]


def _top_side(diam):
    # any accepted ancestor larger than this would be farther than K^{1/4} diam from E
    return float(2.0 ** np.ceil(np.log2(diam)))


def regime_regions(E, tree, S, eta, max_depth=10):
    """Whitney regions ``W_Q`` for every Q of the regime, each from a local decomposition.

    Boxes nest on one dyadic grid, so the local decomposition around Q has
    the same cubes as a global one in the part that can meet ``W_Q``.
    """
    K = 1 / eta
    out = {}
    for Q in sorted(S.cubes):
        info = tree[Q]
        low, high = region_bounds(info.diam, eta, K, False)
        s0 = _top_side(info.diam)
        box = _aligned_box(info.center, high + info.diam, s0)
        for (a, b), (ga, gb) in zip(box, E.grid.box):
            if a < ga or b > gb:
                raise ParameterError(f"Whitney window of {Q.label()} leaves the graph window")
        blo, bhi = Q.base_box()
        flo = np.append(blo, info.center[-1] - info.diam)
        fhi = np.append(bhi, info.center[-1] + info.diam)
        wd = WhitneyDecomposition(max_depth=max_depth, top_side=s0, min_dist=low,
                                  focus=(flo, fhi, high)).fit(E, box)
        out[Q] = whitney_region(Q, eta, K, False, wd.cubes_, tree)
    return out


def _corners(lo, hi):
    n1 = lo.shape[1]
    pat = np.stack(np.meshgrid(*[[0.0, 1.0]] * n1, indexing="ij"), axis=-1).reshape(-1, n1)
    return (lo[:, None, :] + pat[None] * (hi - lo)[:, None, :]).reshape(-1, n1)


def _ball_sample(center, R, count, rng):
    n1 = len(center)
    w = rng.random(count)
    rad = R * rng.random(count) ** (1 / (n1 + 1))
    dirs = rng.normal(size=(count, n1 - 1))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    tt = np.sign(rng.random(count) - 0.5) * (w * rad) ** 2
    return np.column_stack([center[0] + tt, center[1:] + dirs * ((1 - w) * rad)[:, None]])


def corona_domain_report(f, S, tree, eta, psi, M0=4.0, points=3000, seed=0, regions=None, max_depth=10):
    """Clauses (1)-(5) of the two-graph corona-domain construction for one regime.

    Returns a JSON-able dict keyed by clause with ``ok`` flags, measured
    constants and worst witnesses.
    """
    rng = np.random.default_rng(seed)
    K = 1 / eta
    E = tree.graph
    top = tree[S.maximal]
    cQ, dQ = top.center, top.diam
    n1 = E.n + 1
    tol = 2 * E.delta * (1 + max(E.b1, f.b1, 1.0))
    regions = regime_regions(E, tree, S, eta, max_depth) if regions is None else regions
    clauses = {}
    # (1), the separation of each region from the regime graph and the split margins
    R1 = K ** 0.75 * dQ
    fails, sep = [], np.inf
    ok1, wit1, margin_ratio = True, None, np.inf
    pieces = {1: [], -1: []}
    lips = {1: psi.plus.graph.measured_lip(), -1: psi.minus.graph.measured_lip()}
    for Q, U in regions.items():
        try:
            Up, Um, m, (dp, dm) = split_region_by_graph(U, f, tree[Q].diam, return_dist=True)
        except SeparationError as exc:
            fails.append({"cube": Q.label(), "message": str(exc)})
            continue
        sep = min(sep, m)
        for part, dgam, lg, sgn in ((Up, dp, psi.plus, 1), (Um, dm, psi.minus, -1)):
            if len(part) == 0:
                continue
            c = part.cubes
            lo, hi = c.lo[part.members], c.hi[part.members]
            pieces[sgn].append((lo, hi))
            far = para_dist(_corners(lo, hi), cQ).reshape(len(lo), -1).max(axis=1)
            gmax, gmin = _box_max_graph(lg.graph, lo, hi, lip=lips[sgn])
            vert = lo[:, -1] - gmax if sgn > 0 else gmin - hi[:, -1]
            margin_ratio = min(margin_ratio, float((vert / dgam).min()))
            bad = (far >= R1) | (vert <= 0)
            if bad.any():
                ok1 = False
                j = int(np.argmax(bad))
                wit1 = {"cube": Q.label(), "box": [lo[j].tolist(), hi[j].tolist()],
                        "far": float(far[j]), "vertical_margin": float(vert[j])}
    clauses["1"] = {"ok": ok1 and not fails, "witness": wit1, "radius": R1,
                    "plus_cubes": int(sum(len(a) for a, _ in pieces[1])),
                    "minus_cubes": int(sum(len(a) for a, _ in pieces[-1]))}
    clauses["separation"] = {"ok": not fails, "min_margin_over_diam": sep, "required": eta ** 0.5,
                             "failures": fails}
    clauses["split_margin"] = {"ok": margin_ratio >= 0.5, "min_vertical_over_dist": margin_ratio}
    # (2) comparability of the distances to E and to the lifted graph on the regions
    ratios = []
    for sgn, lg in ((1, psi.plus), (-1, psi.minus)):
        for lo, hi in pieces[sgn]:
            pts = np.concatenate([(lo + hi) / 2, _corners(lo, hi)])
            if len(pts) > points:
                pts = pts[rng.choice(len(pts), points, replace=False)]
            ratios.append(fine_graph_distance(E, pts) / fine_graph_distance(lg.graph, pts))
    r = np.concatenate(ratios) if ratios else np.array([1.0])
    clauses["2"] = {"ok": bool(np.all(np.isfinite(r)) and r.min() > 0), "ratio_min": float(r.min()),
                    "ratio_max": float(r.max())}
    # (3) and (4) on random points of the small ball beyond psi+- (sign-wise)
    R3 = K / 32 * dQ
    s0 = _top_side(dQ)
    dmin = min(tree[q].diam for q in S.cubes)
    ok3, ok4, wit3, wit4, worst3, excluded, tested = True, True, None, None, np.inf, 0, 0
    for lg, sgn in ((psi.plus, 1), (psi.minus, -1)):
        pts = _ball_sample(cQ, R3, points, rng)
        pts = pts[sgn * lg.graph.vertical_offset(pts) > 0]
        if not len(pts):
            continue
        tested += len(pts)
        slack = fine_graph_distance(E, pts) - fine_graph_distance(lg.graph, pts)
        worst3 = min(worst3, float(slack.min()))
        if np.any(slack < -tol):
            ok3 = False
            wit3 = pts[int(np.argmin(slack))].tolist()
        lo, side, dist = whitney_cube_at(E, pts, s0)
        sliver = ~np.isfinite(side) | (dist < eta ** 4 * dmin)
        excluded += int(sliver.sum())
        keep = np.flatnonzero(~sliver)
        if keep.size:
            hi = lo[keep] + box_extent(side[keep], n1)
            covered = np.zeros(keep.size, bool)
            for q in S.cubes:
                dq = tree[q].diam
                cap = K * dq
                inr = (dist[keep] >= eta ** 4 * dq) & (dist[keep] <= cap) & ~covered
                if inr.any():
                    dd = tree.box_dist_to_cube(lo[keep][inr], hi[inr], q, cap=cap * 1.01)
                    covered[np.flatnonzero(inr)[dd <= cap]] = True
            if not covered.all():
                ok4 = False
                wit4 = pts[keep[int(np.argmin(covered))]].tolist()
    clauses["3"] = {"ok": ok3, "witness": wit3, "min_dE_minus_dGamma": worst3, "tolerance": tol,
                    "points": tested}
    clauses["4"] = {"ok": ok4, "witness": wit4, "excluded_near_E": excluded, "points": tested}
    # (5) ball inclusions around the lift of the regime-graph point nearest the cube center
    base = f.grid.points().reshape(-1, n1 - 1)
    j = int(np.argmin(para_dist(f.sample_points(), cQ)))
    res5, ok5 = {}, True
    for name, lg in (("plus", psi.plus), ("minus", psi.minus)):
        cS = np.append(base[j], lg.graph.values.reshape(-1)[j])
        a, wa = _ball_inclusion(cQ, M0 * K ** 0.75 * dQ, cS, K ** (7 / 8) * dQ, rng)
        b, wb = _ball_inclusion(cS, K ** (7 / 8) * dQ, cQ, K / 32 * dQ, rng)
        res5[name] = {"center": cS.tolist(), "outer_ok": a, "outer_witness": wa,
                      "inner_ok": b, "inner_witness": wb}
        ok5 = ok5 and a and b
    clauses["5"] = {"ok": ok5, "M0": M0, **res5,
                    "radii_over_diam": {"M0 K^3/4": M0 * K ** 0.75, "K^7/8": K ** (7 / 8), "K/32": K / 32}}
    clauses["all_ok"] = all(v["ok"] for v in clauses.values() if isinstance(v, dict))
    return clauses
