"""Stopping-time regimes, the stopping distance and packing checks.

Corona decompositions are inputs here: a partition of the cube tree into
coherent regimes (each with an approximating graph) and bad cubes.
"""

from dataclasses import dataclass, field

import numpy as np

from ._distance import box_gap
from .dyadic import CubeId
from .exceptions import ParameterError
from .pargeo import graph_box_distance, para_dist


def is_descendant(q, q0):
    """True when ``q`` is contained in ``q0`` (including ``q == q0``)."""
    return q.k >= q0.k and q.ancestor(q0.k) == q0


@dataclass(frozen=True, eq=False)
class Regime:
    cubes: frozenset
    maximal: CubeId
    graph: object

    def __len__(self):
        return len(self.cubes)

    def __contains__(self, q):
        return q in self.cubes


@dataclass
class CoronaInput:
    tree: object
    good: list
    bad: set
    eta: float
    K: float
    b2: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0 < self.eta < 1) or abs(self.eta * self.K - 1) > 1e-9:
            raise ParameterError(f"corona requires K = 1/eta, got eta={self.eta}, K={self.K}")
        seen = {}
        for i, S in enumerate(self.good):
            for q in S.cubes:
                if q in seen:
                    raise ParameterError(f"cube {q.label()} lies in two regimes")
                seen[q] = i
        for q in self.bad:
            if q in seen:
                raise ParameterError(f"cube {q.label()} is both bad and good")
        missing = [q for q in self.tree.cubes if q not in seen and q not in self.bad]
        if missing:
            raise ParameterError(f"cube {missing[0].label()} is neither good nor bad")
        self._owner = seen

    def regime_of(self, q):
        i = self._owner.get(q)
        return None if i is None else self.good[i]


# ---------------------------------------------------------------- coherency

def validate_coherent(S, require_c=False, tree=None):
    """Report violations of coherency (a), (b) and optionally (c)."""
    violations = []
    cubes = set(S.cubes)
    top = S.maximal
    if top not in cubes:
        violations.append(("a", f"maximal cube {top.label()} not in the regime"))
    for q in sorted(cubes):
        if not is_descendant(q, top):
            violations.append(("a", f"cube {q.label()} is not contained in {top.label()}"))
            continue
        for k in range(top.k, q.k):
            a = q.ancestor(k)
            if a not in cubes:
                violations.append(("b", f"cube {q.label()} present but its ancestor {a.label()} is missing"))
                break
    if require_c:
        for q in sorted(cubes):
            kids = tree[q].children if tree is not None else q.children()
            inside = [c in cubes for c in kids]
            if any(inside) and not all(inside):
                violations.append(("c", f"cube {q.label()} has {sum(inside)} of {len(inside)} children in the regime"))
    return {"coherent": not violations, "violations": violations}


# ---------------------------------------------------------------- stopping distance

def _cube_bbox(tree, qs):
    g = tree.graph
    lo, hi = [], []
    for q in qs:
        info = tree[q]
        blo, bhi = q.base_box()
        block = g.values[tuple(slice(a, b) for a, b in zip(info.index_lo, info.index_hi))]
        # half-open boxes: the last sample sits one step inside the upper face
        bhi = bhi - np.array(g.grid.steps)
        lo.append(np.append(blo, block.min()))
        hi.append(np.append(bhi, block.max()))
    return np.array(lo), np.array(hi)


def stopping_distance(pts, S, tree, return_argmin=False, chunk=2048):
    """``d(p) = min_{Q in S} dist(p, Q) + diam(Q)`` for each point.

    The infimum is truncated at the tree's finest generation.  Distances to
    cubes are exact with respect to the graph samples, so ``d`` is exactly
    1-Lipschitz for the parabolic metric.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    single = pts.shape[0] == 1
    qs = sorted(S.cubes, key=lambda q: (q.k, q.idx))
    if not qs:
        raise ParameterError("regime is empty")
    diam = np.array([tree[q].diam for q in qs])
    blo, bhi = _cube_bbox(tree, qs)
    reps = np.array([tree.sample_points(q)[0] for q in qs])
    index = tree.graph.index()
    out = np.empty(len(pts))
    arg = np.empty(len(pts), dtype=np.int64)
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        lb = box_gap(p[:, None, :], p[:, None, :], blo[None], bhi[None]) + diam[None]
        ub = para_dist(p[:, None, :], reps[None]) + diam[None]
        best = ub.min(axis=1)
        best_arg = ub.argmin(axis=1)
        cand_p, cand_q = np.nonzero(lb < best[:, None] - 1e-15)
        for j in np.unique(cand_q):
            sel = cand_p[cand_q == j]
            sel = sel[lb[sel, j] < best[sel]]
            if sel.size == 0:
                continue
            info = tree[qs[j]]
            M = sel.size
            d = index.box_distance(p[sel], p[sel], np.tile(info.index_lo, (M, 1)), np.tile(info.index_hi, (M, 1)),
                                   cap=float(np.max(best[sel] - diam[j])))
            val = d + diam[j]
            better = val < best[sel]
            best[sel[better]] = val[better]
            best_arg[sel[better]] = j
        out[s:s + chunk] = best
        arg[s:s + chunk] = best_arg
    if return_argmin:
        return out, [qs[i] for i in arg]
    return float(out[0]) if single else out


def select_cube(p, A, S, tree, eps=None):
    """Smallest ancestor ``Q*`` of a minimising cube with ``A diam(Q*) >= 2 d(p)``.

    Returns ``(Q*, info)`` where ``info`` holds ``d``, ``dist(p, Q*)`` and the
    measured ratios.  With ``d(p) == 0`` the caller must pass ``eps``.
    """
    if not A > 1:
        raise ParameterError("A must exceed 1")
    p = np.asarray(p, float)
    d, (q,) = stopping_distance(p[None, :], S, tree, return_argmin=True)
    d = float(d[0])
    dmax = tree[S.maximal].diam
    if d == 0.0:
        if eps is None or not (0 < eps < A * dmax):
            raise ParameterError("d(p) = 0: pass eps in (0, A diam(Q(S)))")
        target = eps
    else:
        target = 2 * d
        if target > A * dmax * (1 + 1e-12):
            raise ParameterError(f"2 d(p) = {target:.4g} exceeds A diam(Q(S)) = {A * dmax:.4g}")
    chain = [q.ancestor(k) for k in range(q.k, S.maximal.k - 1, -1)]
    chain = [c for c in chain if c in S.cubes]
    q_star = next(c for c in chain if A * tree[c].diam >= target * (1 - 1e-12))
    dist_q = float(tree.dist_to_cube(p[None, :], q_star)[0])
    info = {"d": d, "target": target, "dist": dist_q, "A_diam": A * tree[q_star].diam,
            "C": A * tree[q_star].diam / d if d > 0 else np.inf,
            "diam_over_d": tree[q_star].diam / d if d > 0 else np.inf}
    tol = 1e-9 * (1 + target)
    if not (dist_q <= target + tol and target <= info["A_diam"] + tol):
        raise AssertionError(f"select_cube inequalities failed at {p}: {info}")
    return q_star, info


# ---------------------------------------------------------------- approximation and packing

def bilateral_approx_check(S, eta, K, tree, max_points=3000):
    """Worst ratio of the two-sided approximation sum to ``eta diam(Q)`` over ``Q in S``."""
    from .dyadic import dilate, window_samples

    E = tree.graph
    G = S.graph
    rng = np.random.default_rng(0)
    rows = []
    for q in sorted(S.cubes):
        info = tree[q]
        R = (K - 1) * info.diam + info.diam
        blo, bhi = q.base_box()
        cand = window_samples(E, blo - np.array([R * R] + [R] * (E.n - 1)),
                              bhi + np.array([R * R] + [R] * (E.n - 1)))
        if len(cand) > 4 * max_points:
            cand = cand[rng.choice(len(cand), 4 * max_points, replace=False)]
        KQ = dilate(q, K, tree, points=cand)
        if len(KQ) > max_points:
            KQ = KQ[rng.choice(len(KQ), max_points, replace=False)]
        a = float(graph_box_distance(G, KQ, KQ).max()) if len(KQ) else 0.0
        R = K * info.diam
        c = info.center
        pad = np.array([R * R] + [R] * (G.n - 1))
        gpts = window_samples(G, c[:-1] - pad, c[:-1] + pad)
        gpts = gpts[para_dist(gpts, c) < R]
        if len(gpts) > max_points:
            gpts = gpts[rng.choice(len(gpts), max_points, replace=False)]
        b = float(graph_box_distance(E, gpts, gpts).max()) if len(gpts) else 0.0
        rows.append((q, a, b, (a + b) / (eta * info.diam)))
    worst = max(rows, key=lambda r: r[3])
    return {"worst_ratio": worst[3], "worst_cube": worst[0].label(), "passes": worst[3] < 1.0,
            "rows": [(q.label(), a, b, r) for q, a, b, r in rows]}


def packing_check(c, Q0, weights):
    """Packing ratio of bad cubes and maximal cubes below ``Q0`` against ``w(Q0)``."""
    w0 = weights[Q0]
    if w0 == 0:
        raise ParameterError(f"w({Q0.label()}) = 0")
    total = sum(weights.get(q, 0.0) for q in c.bad if is_descendant(q, Q0))
    total += sum(weights.get(S.maximal, 0.0) for S in c.good if is_descendant(S.maximal, Q0))
    return total / w0


def subregime_decompose(Q0, c):
    """Partition ``D_{Q0}`` into bad cubes, whole regimes below Q0 and ``S* ∩ D_{Q0}``."""
    tree = c.tree
    if Q0 not in tree:
        raise ParameterError(f"cube {Q0.label()} not in the tree")
    bad = sorted(q for q in c.bad if is_descendant(q, Q0))
    home = c.regime_of(Q0)
    whole = [S for S in c.good if S is not home and is_descendant(S.maximal, Q0)]
    if home is None:
        S = Regime(frozenset(), Q0, None)
    else:
        S = Regime(frozenset(q for q in home.cubes if is_descendant(q, Q0)), Q0, home.graph)
        rep = validate_coherent(S)
        if not rep["coherent"]:
            raise ParameterError(f"inconsistent corona input: {rep['violations'][0]}")
    # every cube of D_{Q0} in exactly one part
    parts = {}
    for q in bad:
        parts[q] = parts.get(q, 0) + 1
    for R in whole:
        for q in R.cubes:
            if not is_descendant(q, Q0):
                raise ParameterError(f"regime below {Q0.label()} leaves it at {q.label()}")
            parts[q] = parts.get(q, 0) + 1
    for q in S.cubes:
        parts[q] = parts.get(q, 0) + 1
    everything = tree.descendants(Q0)
    if any(parts.get(q, 0) != 1 for q in everything) or len(parts) != len(everything):
        raise ParameterError(f"inconsistent corona input below {Q0.label()}")
    return bad, whole, S


# ---------------------------------------------------------------- generators

def regime_all_descendants(tree, maximal, graph=None, depth=None):
    cubes = frozenset(tree.descendants(maximal, depth=depth))
    return Regime(cubes, maximal, graph if graph is not None else tree.graph)


def single_regime_corona(tree, eta=1 / 16, graph=None, b2=None):
    """One full regime per top-level cube, all approximated by ``graph`` (default E itself)."""
    good = [regime_all_descendants(tree, q, graph) for q in sorted(tree.generation(tree.k_min))]
    b2 = tree.graph.b2 if b2 is None else b2
    return CoronaInput(tree, good, set(), eta, 1 / eta, b2, meta={"kind": "single-regime"})


def all_bad_corona(tree, eta=1 / 16):
    return CoronaInput(tree, [], set(tree.cubes), eta, 1 / eta, meta={"kind": "all-bad"})


def stopping_regime(tree, maximal, keep, graph=None):
    """Coherent regime below ``maximal`` that refines a cube only when ``keep(q)`` is true.

    Children of a kept cube all enter the regime (property (c)); the
    descendants of a non-kept cube stay out.
    """
    cubes = {maximal}
    frontier = [maximal]
    while frontier:
        nxt = []
        for q in frontier:
            if keep(q):
                kids = tree[q].children
                cubes.update(kids)
                nxt.extend(kids)
        frontier = nxt
    return Regime(frozenset(cubes), maximal, graph if graph is not None else tree.graph)


def two_regime_corona(tree, maximal, keep, eta=1 / 16, graph=None):
    """A stopping regime at ``maximal``; every cube it leaves out starts its own full regime."""
    S = stopping_regime(tree, maximal, keep, graph)
    good = [S]
    for q in sorted(S.cubes):
        for child in tree[q].children:
            if child not in S.cubes:
                good.append(regime_all_descendants(tree, child, graph))
    covered = set().union(*(R.cubes for R in good))
    for top in sorted(tree.generation(tree.k_min)):
        if top not in covered:
            good.append(regime_all_descendants(tree, top, graph))
    return CoronaInput(tree, good, set(), eta, 1 / eta, tree.graph.b2, meta={"kind": "two-regime"})


# ---------------------------------------------------------------- JSON

def corona_to_json(c):
    regs = []
    for S in c.good:
        full = set(c.tree.descendants(S.maximal)) == set(S.cubes)
        regs.append({"maximal": S.maximal.label(),
                     "cubes": "all-descendants" if full else sorted(q.label() for q in S.cubes),
                     "graph": "E" if S.graph is c.tree.graph else "regime"})
    return {"regimes": regs, "bad": sorted(q.label() for q in c.bad), "eta": c.eta}


def corona_from_json(obj, tree, graphs=None):
    """Parse a corona input file; ``graphs`` maps graph references to SampledGraphs."""
    from .exceptions import ConfigError

    graphs = dict(graphs or {})
    graphs.setdefault("E", tree.graph)
    if "eta" not in obj:
        raise ConfigError("corona.eta", "missing")
    eta = float(obj["eta"])
    good = []
    for i, r in enumerate(obj.get("regimes", [])):
        try:
            top = CubeId.parse(r["maximal"])
        except (KeyError, ValueError):
            raise ConfigError(f"corona.regimes[{i}].maximal", "missing or malformed cube id") from None
        if top not in tree:
            raise ConfigError(f"corona.regimes[{i}].maximal", f"cube {r['maximal']} not in tree")
        ref = r.get("graph", "E")
        if ref not in graphs:
            raise ConfigError(f"corona.regimes[{i}].graph", f"unknown graph reference {ref!r}")
        spec = r.get("cubes", "all-descendants")
        if spec == "all-descendants":
            good.append(regime_all_descendants(tree, top, graphs[ref]))
        else:
            good.append(Regime(frozenset(CubeId.parse(s) for s in spec), top, graphs[ref]))
    bad = {CubeId.parse(s) for s in obj.get("bad", [])}
    return CoronaInput(tree, good, bad, eta, 1 / eta, meta={"kind": "file"})
