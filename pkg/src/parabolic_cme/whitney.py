"""Whitney decomposition of the complement of a graph and Whitney regions.

Boxes are parabolic dyadic: spatial side ``s``, time side ``s**2``.  The
decomposition is top-down with the acceptance test

    4 diam(I) <= dist(4I, E)   and   dist(I, E) <= 100 diam(I),

where ``4I`` is the concentric parabolic dilate.  Distances are exact with
respect to the graph samples (see ``_distance``).
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._distance import box_gap
from .exceptions import ParameterError, SeparationError
from .pargeo import graph_box_distance

ACCEPT_LOW = 4.0
ACCEPT_HIGH = 100.0


def box_diam(side, n):
    """Parabolic diameter of a box with spatial side ``side`` in ``R^{n+1}``."""
    return (np.sqrt(n) + 1.0) * np.asarray(side, float)


def dilate_box(lo, side, factor):
    """Concentric parabolic dilate of boxes ``[lo, lo + (s^2, s, ..., s)]``."""
    lo = np.atleast_2d(lo)
    side = np.asarray(side, float).reshape(-1, 1)
    n1 = lo.shape[1]
    ext = np.hstack([side ** 2, np.repeat(side, n1 - 1, axis=1)])
    c = lo + ext / 2
    ext2 = np.hstack([(factor * side) ** 2, np.repeat(factor * side, n1 - 1, axis=1)])
    return c - ext2 / 2, c + ext2 / 2


def box_extent(side, n1):
    side = np.asarray(side, float).reshape(-1, 1)
    return np.hstack([side ** 2, np.repeat(side, n1 - 1, axis=1)])


@dataclass(frozen=True)
class WhitneyCube:
    lo: tuple
    hi: tuple
    side: float
    diam: float
    dist_E: float


class WhitneyCubes:
    """Array-backed list of accepted Whitney boxes."""

    def __init__(self, lo, side, dist_E, n):
        self.lo = np.asarray(lo, float).reshape(-1, n + 1)
        self.side = np.asarray(side, float)
        self.dist_E = np.asarray(dist_E, float)
        self.n = n
        self.hi = self.lo + box_extent(self.side, n + 1)
        self.diam = box_diam(self.side, n)
        self._lookup = None

    def __len__(self):
        return len(self.side)

    def __getitem__(self, i):
        return WhitneyCube(tuple(self.lo[i]), tuple(self.hi[i]), float(self.side[i]),
                           float(self.diam[i]), float(self.dist_E[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def centers(self):
        return (self.lo + self.hi) / 2

    @property
    def volumes(self):
        return np.prod(self.hi - self.lo, axis=1)

    def locate(self, pts):
        """Index of the box containing each point (half-open boxes), ``-1`` if none."""
        pts = np.atleast_2d(pts)
        if self._lookup is None:
            self._lookup = {}
            for s in np.unique(self.side):
                sel = np.flatnonzero(self.side == s)
                ext = box_extent(np.array([s]), self.n + 1)[0]
                keys = np.round(self.lo[sel] / ext).astype(np.int64)
                self._lookup[float(s)] = {tuple(k): int(i) for k, i in zip(keys, sel)}
        out = np.full(len(pts), -1, dtype=np.int64)
        for s, table in self._lookup.items():
            todo = np.flatnonzero(out < 0)
            if todo.size == 0:
                break
            ext = box_extent(np.array([s]), self.n + 1)[0]
            keys = np.floor(pts[todo] / ext + 1e-12).astype(np.int64)
            hits = np.array([table.get(tuple(k), -1) for k in keys], dtype=np.int64)
            out[todo] = hits
        return out

    def to_json(self):
        return [{"box": [self.lo[i].tolist(), self.hi[i].tolist()], "diam": float(self.diam[i]),
                 "dist_E": float(self.dist_E[i])} for i in range(len(self))]


class WhitneyDecomposition(BaseEstimator):
    """Top-down parabolic Whitney decomposition of ``box \\ E`` for a sampled graph.

    Parameters
    ----------
    max_depth : int
        Number of subdivisions below the top level.
    top_side : float or None
        Spatial side of the top-level boxes; defaults to the largest power of
        two tiling ``box``.
    min_dist : float
        Boxes lying entirely within ``min_dist`` of E are discarded without
        further refinement (they cannot host Whitney cubes farther than
        ``min_dist`` from E).

    focus : tuple or None
        ``(lo, hi, radius)``: boxes farther than ``radius`` from the box
        ``[lo, hi]`` are dropped (neither accepted nor refined).
    """

    def __init__(self, max_depth=8, top_side=None, min_dist=0.0, focus=None):
        self.max_depth = max_depth
        self.top_side = top_side
        self.min_dist = min_dist
        self.focus = focus

    def fit(self, graph, box):
        n = graph.n
        box = np.asarray(box, float).reshape(n + 1, 2)
        s0 = self.top_side or _top_side(box)
        ext = box_extent(np.array([s0]), n + 1)[0]
        counts = (box[:, 1] - box[:, 0]) / ext
        if np.any(np.abs(counts - np.round(counts)) > 1e-9):
            raise ParameterError(f"box is not tiled by top-level boxes of side {s0}")
        grids = np.meshgrid(*[np.arange(int(round(c))) for c in counts], indexing="ij")
        lo = box[:, 0] + np.stack([g.reshape(-1) for g in grids], axis=1) * ext
        side = s0
        acc_lo, acc_side, acc_dist = [], [], []
        disc_lo, disc_side = [], []
        for depth in range(self.max_depth + 1):
            if len(lo) == 0:
                break
            sides = np.full(len(lo), side)
            hi = lo + box_extent(sides, n + 1)
            if self.focus is not None:
                flo, fhi, rad = self.focus
                near_f = box_gap(lo, hi, np.asarray(flo)[None, :], np.asarray(fhi)[None, :]) <= rad
                lo, hi, sides = lo[near_f], hi[near_f], sides[near_f]
            diam = box_diam(side, n)
            d_I = graph_box_distance(graph, lo, hi, cap=ACCEPT_HIGH * diam * 1.01)
            lo4, hi4 = dilate_box(lo, sides, 4.0)
            d_4I = graph_box_distance(graph, lo4, hi4, cap=ACCEPT_LOW * diam * 1.01)
            ok = (d_4I >= ACCEPT_LOW * diam) & (d_I <= ACCEPT_HIGH * diam)
            if depth == 0 and np.any((d_4I >= ACCEPT_LOW * diam) & (d_I > ACCEPT_HIGH * diam)):
                raise ParameterError("top-level boxes too small: dist(I, E) > 100 diam(I)")
            acc_lo.append(lo[ok])
            acc_side.append(sides[ok])
            acc_dist.append(d_I[ok])
            rest = ~ok
            near = rest & (d_I + diam < self.min_dist)
            if depth == self.max_depth:
                near = rest
            disc_lo.append(lo[near])
            disc_side.append(sides[near])
            split = rest & ~near
            lo = _subdivide(lo[split], side, n)
            side = side / 2
        self.n_ = n
        self.box_ = box
        self.cubes_ = WhitneyCubes(np.vstack(acc_lo), np.concatenate(acc_side), np.concatenate(acc_dist), n)
        self.discarded_ = WhitneyCubes(np.vstack(disc_lo) if disc_lo else np.empty((0, n + 1)),
                                       np.concatenate(disc_side) if disc_side else np.empty(0),
                                       np.zeros(sum(len(s) for s in disc_side)), n)
        return self

    def report(self):
        check_is_fitted(self, "cubes_")
        vol = float(np.prod(self.box_[:, 1] - self.box_[:, 0]))
        c = self.cubes_
        ratio = c.dist_E / c.diam
        return {"accepted": len(c), "discarded": len(self.discarded_),
                "accepted_volume": float(c.volumes.sum()), "discarded_volume": float(self.discarded_.volumes.sum()),
                "box_volume": vol, "dist_over_diam_min": float(ratio.min()) if len(c) else None,
                "dist_over_diam_max": float(ratio.max()) if len(c) else None}


def _top_side(box):
    spatial = box[1:, 1] - box[1:, 0]
    t_ext = box[0, 1] - box[0, 0]
    s = 2.0 ** np.floor(np.log2(min(spatial.min(), np.sqrt(t_ext))))
    while s > 1e-12:
        ok_sp = np.all(np.abs(spatial / s - np.round(spatial / s)) < 1e-9)
        ok_t = abs(t_ext / s ** 2 - round(t_ext / s ** 2)) < 1e-9
        if ok_sp and ok_t:
            return float(s)
        s /= 2
    raise ParameterError("cannot tile the box with parabolic dyadic boxes")


def _subdivide(lo, side, n):
    if len(lo) == 0:
        return lo
    h = side / 2
    offs = [np.array([a * h * h] + list(b * h for b in bs))
            for a in range(4) for bs in np.ndindex(*(2,) * n)]
    offs = np.array(offs)
    return (lo[:, None, :] + offs[None, :, :]).reshape(-1, n + 1)


def whitney_decompose(g, box, max_depth=8, top_side=None, min_dist=0.0):
    """Accepted Whitney boxes of ``box \\ E`` as a WhitneyCubes list."""
    est = WhitneyDecomposition(max_depth=max_depth, top_side=top_side, min_dist=min_dist).fit(g, box)
    if len(est.cubes_) == 0:
        raise ParameterError("box too small to contain any accepted Whitney cube")
    return est.cubes_


def whitney_cube_at(graph, pts, top_side, max_depth=16):
    """Whitney box containing each point, found by one top-down descent per point.

    Boxes nest on the dyadic grid anchored at the origin, so the result agrees
    with ``WhitneyDecomposition`` whenever no box larger than ``top_side`` is
    accepted along the way.  Returns ``(lo, side, dist_E)``; points closer to
    E than the finest box considered get ``side = nan``.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    n1 = pts.shape[1]
    lo_out = np.full(pts.shape, np.nan)
    side_out = np.full(len(pts), np.nan)
    dist_out = np.full(len(pts), np.nan)
    todo = np.arange(len(pts))
    side = float(top_side)
    for _ in range(max_depth + 1):
        if todo.size == 0:
            break
        ext = box_extent(np.array([side]), n1)[0]
        lo = np.floor(pts[todo] / ext + 1e-12) * ext
        sides = np.full(len(todo), side)
        diam = box_diam(side, n1 - 1)
        d_I = graph_box_distance(graph, lo, lo + ext, cap=ACCEPT_HIGH * diam * 1.01)
        lo4, hi4 = dilate_box(lo, sides, 4.0)
        d_4I = graph_box_distance(graph, lo4, hi4, cap=ACCEPT_LOW * diam * 1.01)
        ok = (d_4I >= ACCEPT_LOW * diam) & (d_I <= ACCEPT_HIGH * diam)
        hit = todo[ok]
        lo_out[hit], side_out[hit], dist_out[hit] = lo[ok], side, d_I[ok]
        todo = todo[~ok]
        side /= 2
    return lo_out, side_out, dist_out


@dataclass
class WhitneyRegion:
    Q: object
    eta: float
    K: float
    star: bool
    members: np.ndarray
    cubes: WhitneyCubes

    def __len__(self):
        return len(self.members)

    def contains_points(self, pts):
        idx = self.cubes.locate(pts)
        return np.isin(idx, self.members)


def _check_eta_K(eta, K):
    if not (0 < eta < 1) or abs(eta * K - 1) > 1e-9:
        raise ParameterError(f"expected 0 < eta < 1 and eta*K = 1, got eta={eta}, K={K}")


def region_bounds(diam_Q, eta, K, star):
    if star:
        return eta ** 4 * diam_Q, K * diam_Q
    return eta ** 0.25 * diam_Q, K ** 0.25 * diam_Q


def whitney_region(Q, eta, K, star, cubes, tree):
    """Members I with ``eta^a diam(Q) <= dist(I,E) <= dist(I,Q) <= K^b diam(Q)``."""
    _check_eta_K(eta, K)
    info = tree[Q]
    low, high = region_bounds(info.diam, eta, K, star)
    cand = np.flatnonzero((cubes.dist_E >= low) & (cubes.dist_E <= high))
    if cand.size:
        blo, bhi = Q.base_box()
        qlo = np.append(blo, info.center[-1] - info.diam)
        qhi = np.append(bhi, info.center[-1] + info.diam)
        pre = box_gap(cubes.lo[cand], cubes.hi[cand], qlo[None, :], qhi[None, :])
        cand = cand[pre <= high]
    if cand.size:
        dQ = tree.box_dist_to_cube(cubes.lo[cand], cubes.hi[cand], Q, cap=high)
        cand = cand[dQ <= high]
    return WhitneyRegion(Q, eta, K, bool(star), cand, cubes)


def overlap_count(regions):
    """Largest number of regions sharing one Whitney cube."""
    if not regions:
        return 0
    counts = {}
    for r in regions:
        for i in r.members.tolist():
            counts[i] = counts.get(i, 0) + 1
    return max(counts.values()) if counts else 0


def split_region_by_graph(U, gamma, diam_Q=None, return_dist=False):
    """Split the members of ``U`` into those above and below the graph ``gamma``.

    Every member must satisfy ``dist(I, Gamma) >= eta^{1/2} diam(Q)``;
    otherwise SeparationError is raised.  Returns ``(U_plus, U_minus, margin)``
    where ``margin`` is the smallest ``dist(I, Gamma) / diam(Q)``; with
    ``return_dist`` the member distances ``(d_plus, d_minus)`` follow.
    """
    c = U.cubes
    m = U.members
    if diam_Q is None:
        raise ParameterError("diam_Q is required")
    if m.size == 0:
        empty = WhitneyRegion(U.Q, U.eta, U.K, U.star, m, c)
        out = (empty, WhitneyRegion(U.Q, U.eta, U.K, U.star, m, c), float("inf"))
        return out + ((np.empty(0), np.empty(0)),) if return_dist else out
    d = graph_box_distance(gamma, c.lo[m], c.hi[m])
    need = U.eta ** 0.5 * diam_Q
    if np.any(d < need):
        i = int(m[np.argmin(d)])
        raise SeparationError(f"Whitney cube {c[i]} is within {d.min():.4g} < {need:.4g} of the regime graph")
    sign = gamma.vertical_offset(c.centers[m])
    up = m[sign > 0]
    down = m[sign < 0]
    out = (WhitneyRegion(U.Q, U.eta, U.K, U.star, up, c),
           WhitneyRegion(U.Q, U.eta, U.K, U.star, down, c), float(d.min() / diam_Q))
    return out + ((d[sign > 0], d[sign < 0]),) if return_dist else out
