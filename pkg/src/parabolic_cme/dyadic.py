"""Parabolic dyadic cubes on graph sets.

Cubes on ``E = graph(f)`` are images ``F(R)`` of half-open parabolic dyadic
boxes ``R`` of the base ``R^n`` (time side ``4**-k``, spatial sides ``2**-k``).
All bookkeeping is done in integer sample indices, so partition and nesting
are exact.
"""

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .exceptions import AxiomError, ParameterError, ResolutionError
from .pargeo import para_dist


class CubeId(NamedTuple):
    k: int
    idx: tuple

    def parent(self):
        t, *x = self.idx
        return CubeId(self.k - 1, (t // 4,) + tuple(v // 2 for v in x))

    def children(self):
        t, *x = self.idx
        return [CubeId(self.k + 1, (4 * t + a,) + tuple(2 * v + b for v, b in zip(x, bs)))
                for a in range(4) for bs in itertools.product((0, 1), repeat=len(x))]

    def ancestor(self, k):
        t, *x = self.idx
        s = self.k - k
        if s < 0:
            raise ParameterError("ancestor generation below cube generation")
        return CubeId(k, (t >> (2 * s),) + tuple(v >> s for v in x))

    def side(self):
        return 2.0 ** -self.k

    def base_box(self):
        """Half-open base box ``(lo, hi)`` in base coordinates."""
        ell = self.side()
        t, *x = self.idx
        lo = np.array([t * ell * ell] + [v * ell for v in x])
        hi = lo + np.array([ell * ell] + [ell] * len(x))
        return lo, hi

    def label(self):
        return f"{self.k}:" + ",".join(str(i) for i in self.idx)

    @classmethod
    def parse(cls, s):
        k, rest = str(s).split(":")
        return cls(int(k), tuple(int(v) for v in rest.split(",")))


@dataclass
class CubeInfo:
    center: np.ndarray
    diam: float
    measure: float
    index_lo: np.ndarray
    index_hi: np.ndarray
    children: list = field(default_factory=list)


def _log2_step(delta):
    m = -np.log2(delta)
    if abs(m - round(m)) > 1e-9:
        raise ParameterError(f"grid step {delta} is not a power of two")
    return int(round(m))


class CubeTree:
    """Dyadic cubes of generations ``k_min..k_max`` on a sampled graph."""

    def __init__(self, graph, k_min, k_max, cubes, a0):
        self.graph = graph
        self.k_min = k_min
        self.k_max = k_max
        self.cubes = cubes
        self.a0 = a0

    def __contains__(self, q):
        return q in self.cubes

    def __getitem__(self, q):
        return self.cubes[q]

    def generation(self, k):
        return [q for q in self.cubes if q.k == k]

    def descendants(self, q, include_self=True, depth=None):
        out = [q] if include_self else []
        frontier = [q]
        level = 0
        while frontier and (depth is None or level < depth):
            frontier = [c for p in frontier for c in self.cubes[p].children]
            out.extend(frontier)
            level += 1
        return out

    def diam(self, q):
        return self.cubes[q].diam

    def center(self, q):
        return self.cubes[q].center

    def sample_mask(self, q):
        """Boolean mask over graph samples lying in ``q``."""
        info = self.cubes[q]
        mask = np.zeros(self.graph.grid.shape, dtype=bool)
        mask[tuple(slice(a, b) for a, b in zip(info.index_lo, info.index_hi))] = True
        return mask

    def sample_points(self, q):
        info = self.cubes[q]
        sl = tuple(slice(a, b) for a, b in zip(info.index_lo, info.index_hi))
        axes = [ax[s] for ax, s in zip(self.graph.grid.axes, sl)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return np.concatenate([mesh, self.graph.values[sl][..., None]], axis=-1).reshape(-1, self.graph.n + 1)

    def dist_to_cube(self, pts, q, cap=None):
        """Parabolic distance from points (or degenerate boxes) to the samples of ``q``."""
        pts = np.atleast_2d(pts)
        info = self.cubes[q]
        M = len(pts)
        return self.graph.index().box_distance(pts, pts, np.tile(info.index_lo, (M, 1)),
                                               np.tile(info.index_hi, (M, 1)), cap=cap)

    def box_dist_to_cube(self, lo, hi, q, cap=None):
        lo = np.atleast_2d(lo)
        info = self.cubes[q]
        M = len(lo)
        return self.graph.index().box_distance(lo, hi, np.tile(info.index_lo, (M, 1)),
                                               np.tile(info.index_hi, (M, 1)), cap=cap)

    def cube_of(self, pts, k):
        """CubeId of generation ``k`` containing the base projection of each point."""
        pts = np.atleast_2d(pts)
        ell = 2.0 ** -k
        t = np.floor(pts[:, 0] / (ell * ell) + 1e-12).astype(np.int64)
        xs = [np.floor(pts[:, d] / ell + 1e-12).astype(np.int64) for d in range(1, self.graph.n)]
        return [CubeId(k, (int(a),) + tuple(int(v[i]) for v in xs)) for i, a in enumerate(t)]

    def to_json(self):
        out = []
        for q, info in sorted(self.cubes.items()):
            parent = q.parent()
            out.append({"id": q.label(), "center": info.center.tolist(), "diam": info.diam,
                        "measure": info.measure, "parent": parent.label() if parent in self.cubes else None})
        return out


def build_cubes_on_graph(g, k_min, k_max):
    """Build the cube tree of generations ``k_min..k_max`` on the graph ``g``."""
    if k_max < k_min:
        raise ParameterError("k_max < k_min")
    if 2.0 ** -k_max < 4 * g.delta * (1 - 1e-12):
        raise ResolutionError(f"2^-{k_max} is below the resolution floor 4*delta = {4 * g.delta}")
    m = _log2_step(g.delta)
    grid = g.grid
    n = g.n
    g0 = np.array([int(round(lo / s)) for (lo, _), s in zip(grid.box, grid.steps)], dtype=np.int64)
    g1 = g0 + np.array(grid.shape, dtype=np.int64)
    per = lambda k: np.array([4 ** (m - k)] + [2 ** (m - k)] * (n - 1), dtype=np.int64)
    p0 = per(k_min)
    if np.any(g0 % p0) or np.any(g1 % p0):
        raise ParameterError(f"graph box is not aligned with generation {k_min} cubes")
    cubes = {}
    vals = g.values
    for k in range(k_min, k_max + 1):
        P = per(k)
        ranges = [range(a // p, b // p) for a, b, p in zip(g0, g1, P)]
        ell = 2.0 ** -k
        for idx in itertools.product(*ranges):
            lo = np.array(idx, dtype=np.int64) * P - g0
            hi = lo + P
            block = vals[tuple(slice(a, b) for a, b in zip(lo, hi))]
            osc = float(block.max() - block.min())
            diam = float(np.sqrt((n - 1) * ell * ell + osc * osc) + ell)
            q = CubeId(k, tuple(int(i) for i in idx))
            blo, bhi = q.base_box()
            center = g.lift(((blo + bhi) / 2)[None, :])[0]
            cubes[q] = CubeInfo(center, diam, float(block.size) * grid.cell_volume, lo, hi)
    for q, info in cubes.items():
        if q.k < k_max:
            info.children = [c for c in q.children() if c in cubes]
    return CubeTree(g, k_min, k_max, cubes, a0=0.5)


def window_samples(g, lo, hi):
    """Graph samples whose base point lies in the box ``[lo, hi]``."""
    ilo = np.clip(g.grid.index_of(lo), 0, g.grid.shape)
    ihi = np.clip(g.grid.index_of(hi) + 2, 0, g.grid.shape)
    sl = tuple(slice(a, b) for a, b in zip(ilo, ihi))
    axes = [ax[s] for ax, s in zip(g.grid.axes, sl)]
    if any(len(a) == 0 for a in axes):
        return np.empty((0, g.n + 1))
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return np.concatenate([mesh, g.values[sl][..., None]], axis=-1).reshape(-1, g.n + 1)


def dilate(q, K, tree, points=None):
    """Samples ``p`` of E (or of ``points``) with ``dist(p, Q) < (K - 1) diam(Q)``.

    Returns the selected points as an ``(m, n+1)`` array.
    """
    if not K > 1:
        raise ParameterError("dilation factor must exceed 1")
    g = tree.graph
    info = tree.cubes[q]
    R = (K - 1) * info.diam
    if points is None:
        blo, bhi = q.base_box()
        pad = np.array([(R + info.diam) ** 2] + [R + info.diam] * (g.n - 1))
        points = window_samples(g, blo - pad, bhi + pad)
    points = np.atleast_2d(points)
    d = tree.dist_to_cube(points, q, cap=R)
    return points[d < R]


def verify_cube_axioms(tree, varrho_samples=(1 / 16, 1 / 8, 1 / 4), fit_generation=None, max_cubes=64):
    """Check properties (i)-(v) exactly on samples and fit the thin-boundary exponent.

    Raises AxiomError naming the cube on any exact failure.  Returns a report
    with the measured ``c_star``, ``a0`` and fitted ``gamma``.
    """
    g = tree.graph
    grid = g.grid
    total = np.prod(grid.shape)
    # (i) partition: index blocks of one generation tile the grid exactly
    for k in range(tree.k_min, tree.k_max + 1):
        count = np.zeros(grid.shape, dtype=np.int32)
        for q in tree.generation(k):
            info = tree.cubes[q]
            count[tuple(slice(a, b) for a, b in zip(info.index_lo, info.index_hi))] += 1
        if not np.all(count == 1):
            bad = np.argwhere(count != 1)[0]
            raise AxiomError(f"(i) generation {k}: sample {tuple(bad)} covered {count[tuple(bad)]} times")
        if sum(tree.cubes[q].measure for q in tree.generation(k)) <= 0 or count.size != total:
            raise AxiomError(f"(i) generation {k}: empty partition")
    # (ii)/(iii) nesting and unique ancestors
    for q, info in tree.cubes.items():
        if q.k == tree.k_min:
            continue
        p = q.parent()
        if p not in tree.cubes:
            raise AxiomError(f"(iii) cube {q.label()} has no parent in the tree")
        pinfo = tree.cubes[p]
        if np.any(info.index_lo < pinfo.index_lo) or np.any(info.index_hi > pinfo.index_hi):
            raise AxiomError(f"(ii) cube {q.label()} is not nested in its parent {p.label()}")
        if q not in pinfo.children:
            raise AxiomError(f"(iii) cube {q.label()} missing from the children of {p.label()}")
    # (iv)
    c_star = max(info.diam / q.side() for q, info in tree.cubes.items())
    # (v) E near the center lies in the cube
    rng = np.random.default_rng(0)
    qs = sorted(tree.cubes)
    pick = qs if len(qs) <= max_cubes else [qs[i] for i in rng.choice(len(qs), max_cubes, replace=False)]
    for q in pick:
        r = tree.a0 * q.side()
        c = tree.cubes[q].center
        pad = np.array([r * r] + [r] * (g.n - 1))
        near = window_samples(g, c[:-1] - pad, c[:-1] + pad)
        inball = near[para_dist(near, c) < r]
        blo, bhi = q.base_box()
        base = inball[:, :-1]
        inside = np.all((base >= blo - 1e-12) & (base < bhi - 1e-12), axis=1)
        if not np.all(inside):
            raise AxiomError(f"(v) cube {q.label()} misses E-point {tuple(inball[~inside][0])} within a0*2^-k")
    gamma, fractions = _fit_thin_boundary(tree, varrho_samples, fit_generation)
    return {"c_star": c_star, "a0": tree.a0, "gamma": gamma, "varrho": list(varrho_samples),
            "boundary_fraction": fractions, "cubes_checked_v": len(pick)}


def _fit_thin_boundary(tree, varrho_samples, k):
    g = tree.graph
    shape = np.array(g.grid.shape)
    k = tree.k_min if k is None else k
    interior = [q for q in tree.generation(k)
                if np.all(tree.cubes[q].index_lo > 0) and np.all(tree.cubes[q].index_hi < shape)]
    if not interior:
        interior = tree.generation(k)
    q = interior[len(interior) // 2]
    info = tree.cubes[q]
    pts = tree.sample_points(q)
    M = len(pts)
    dists = np.full(M, np.inf)
    # E \ Q is the union of the 2n half-slabs of indices outside the cube's block
    for ax in range(g.n):
        for side in (0, 1):
            lo = np.zeros(g.n, dtype=np.int64)
            hi = shape.copy()
            if side == 0:
                hi[ax] = info.index_lo[ax]
            else:
                lo[ax] = info.index_hi[ax]
            if hi[ax] <= lo[ax]:
                continue
            d = g.index().box_distance(pts, pts, np.tile(lo, (M, 1)), np.tile(hi, (M, 1)),
                                       cap=max(varrho_samples) * q.side())
            dists = np.minimum(dists, d)
    fr = [float(np.mean(dists <= v * q.side())) for v in varrho_samples]
    ok = [(v, f) for v, f in zip(varrho_samples, fr) if f > 0]
    if len(ok) < 2:
        return float("nan"), fr
    x = np.log([v for v, _ in ok])
    y = np.log([f for _, f in ok])
    gamma = float(np.polyfit(x, y, 1)[0])
    return gamma, fr
