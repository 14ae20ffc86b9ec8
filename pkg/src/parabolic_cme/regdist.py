"""Whitney decomposition with respect to a nonnegative function and the smooth substitute H.

Base coordinates are ``(t, x')`` with ``x'`` in ``R^{n-1}``.  A level-``k``
box has spatial side ``l = 2^-k`` and time side ``l^2``; its parabolic
diameter is ``(sqrt(n-1) + 1) l``.  ``kappa I`` is the box with the same
center, spatial half-width ``kappa l / 2`` and time half-width
``kappa^2 l^2 / 2``.

The bump attached to a box equals 1 on ``2I`` and vanishes off ``3I``.  It
is a tensor product of one-dimensional profiles built from
``S(x) = e(x) / (e(x) + e(1 - x))`` with ``e(x) = exp(-1/x)``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ParameterError, ResolutionError

SELECT = 20.0
LOW, HIGH = 10.0, 60.0

# bump plateau / support half-widths in units of l (space) and l^2 (time)
_SPACE = (1.0, 1.5)
_TIME = (2.0, 4.5)


# ---------------------------------------------------------------- profile

def _e(x):
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        v = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
    return v


def smoothstep(x, order=2):
    """``S`` and its first ``order`` derivatives; ``S = 0`` for ``x <= 0`` and 1 for ``x >= 1``."""
    x = np.asarray(x, float)
    xc = np.clip(x, 1e-3, 1 - 1e-3)
    A, B = _e(xc), _e(1 - xc)
    A1, B1 = A / xc ** 2, -B / (1 - xc) ** 2
    A2 = A * (1 / xc ** 4 - 2 / xc ** 3)
    B2 = B * (1 / (1 - xc) ** 4 - 2 / (1 - xc) ** 3)
    D = A + B
    S = A / D
    N = A1 * B - A * B1
    S1 = N / D ** 2
    S2 = ((A2 * B - A * B2) * D - 2 * N * (A1 + B1)) / D ** 3
    lo, hi = x <= 1e-3, x >= 1 - 1e-3
    S = np.where(lo, 0.0, np.where(hi, 1.0, S))
    S1 = np.where(lo | hi, 0.0, S1)
    S2 = np.where(lo | hi, 0.0, S2)
    return (S, S1, S2)[: order + 1]


def bump1d(u, plateau, support):
    """Even profile: 1 for ``|u| <= plateau``, 0 for ``|u| >= support``; returns value, d/du, d2/du2."""
    w = support - plateau
    a = np.abs(u)
    S, S1, S2 = smoothstep((support - a) / w)
    sgn = np.sign(u)
    return S, -S1 * sgn / w, S2 / w ** 2


def bump_lip_constant(samples=20001):
    """Lip(1/2,1) constant of the unit bump w.r.t. ``|dt|^{1/2} + |dx|``."""
    u = np.linspace(-_TIME[1], _TIME[1], samples)
    _, dt, _ = bump1d(u, *_TIME)
    y = np.linspace(-_SPACE[1], _SPACE[1], samples)
    _, dy, _ = bump1d(y, *_SPACE)
    return max(float(np.sqrt(np.abs(dt).max())), float(np.abs(dy).max()))


# ---------------------------------------------------------------- h as a field

@dataclass(frozen=True, eq=False)
class GridField:
    """Scalar field sampled on a grid; evaluated by multilinear interpolation."""

    axes: tuple
    values: np.ndarray

    def __call__(self, pts):
        if not hasattr(self, "_interp"):
            object.__setattr__(self, "_interp", RegularGridInterpolator(self.axes, self.values, bounds_error=False,
                                                                        fill_value=None))
        return self._interp(np.asarray(pts, float))

    @classmethod
    def from_grid(cls, grid, values):
        return cls(tuple(grid.axes), np.asarray(values, float))


def _as_callable(h):
    if callable(h):
        return h
    if isinstance(h, tuple) and len(h) == 2:
        return GridField.from_grid(*h)
    raise ParameterError("h must be a callable or a (ParaGrid, values) pair")


def box_diam(side, nb):
    return (np.sqrt(nb - 1) + 1.0) * side


def _cell(k, nb):
    ell = 2.0 ** -k
    return np.array([ell * ell] + [ell] * (nb - 1))


def _aligned(box, k):
    nb = len(box)
    c = _cell(k, nb)
    for (a, b), s in zip(box, c):
        if b - a < s * (1 - 1e-9):
            return False
        for v in (a / s, b / s):
            if abs(v - round(v)) > 1e-9:
                return False
    return True


def _top_level(box):
    for k in range(-12, 40):
        if _aligned(box, k):
            return k
    raise ParameterError("window is not aligned with any dyadic level")


def sampled_lip(h, box, samples=4000, seed=0):
    """Sampled Lip(1/2,1) constant of ``h`` over random pairs at several scales."""
    rng = np.random.default_rng(seed)
    lo = np.array([a for a, _ in box])
    hi = np.array([b for _, b in box])
    nb = len(box)
    p = lo + rng.random((samples, nb)) * (hi - lo)
    best = 0.0
    for scale in (1e-3, 1e-2, 1e-1, 1.0):
        step = np.concatenate([rng.normal(size=(samples, 1)) * scale ** 2,
                               rng.normal(size=(samples, nb - 1)) * scale], axis=1)
        q = np.clip(p + step, lo, hi - 1e-12)
        dist = np.sqrt(np.abs(p[:, 0] - q[:, 0])) + np.linalg.norm(p[:, 1:] - q[:, 1:], axis=1)
        ok = dist > 0
        hp, hq = h(p), h(q)
        if np.any(hp < 0) or np.any(hq < 0):
            raise ParameterError("h takes negative values")
        best = max(best, float(np.max(np.abs(hp - hq)[ok] / dist[ok], initial=0.0)))
    return best


# ---------------------------------------------------------------- decomposition

@dataclass
class HWhitney:
    box: tuple
    nb: int
    k: np.ndarray
    idx: np.ndarray
    top: np.ndarray
    unresolved_k: int
    unresolved: np.ndarray
    lip: float
    m: int
    k0: int = 0

    @property
    def side(self):
        return 2.0 ** -self.k.astype(float)

    @property
    def diam(self):
        return box_diam(self.side, self.nb)

    @property
    def lo(self):
        s = self.side
        return self.idx * np.concatenate([s[:, None] ** 2, np.repeat(s[:, None], self.nb - 1, axis=1)], axis=1)

    @property
    def centers(self):
        s = self.side
        cell = np.concatenate([s[:, None] ** 2, np.repeat(s[:, None], self.nb - 1, axis=1)], axis=1)
        return (self.idx + 0.5) * cell

    def __len__(self):
        return len(self.k)

    def cover_radius(self, side):
        return self.lip * side * (1 / (self.m * np.sqrt(2)) + np.sqrt(self.nb - 1) / (2 * self.m))


def _subgrid(m, nb):
    t = (np.arange(m * m) + 0.5) / (m * m)
    xs = [(np.arange(m) + 0.5) / m] * (nb - 1)
    mesh = np.stack(np.meshgrid(t, *xs, indexing="ij"), axis=-1)
    return mesh.reshape(-1, nb)


def _box_min(h, lo, cell, pattern, chunk=20000):
    out = np.empty(len(lo))
    for s in range(0, len(lo), chunk):
        pts = lo[s:s + chunk, None, :] + pattern[None] * cell
        out[s:s + chunk] = h(pts.reshape(-1, pts.shape[-1])).reshape(pts.shape[:2]).min(axis=1)
    return out


def whitney_wrt_h(h, box, lip=1.0, k_top=None, k_max=None, m=4, check_lip=True):
    """Maximal dyadic boxes with ``diam(I) <= (1/20) inf_I h``.

    The infimum is replaced by the minimum over an ``m``-point midpoint
    subgrid per spatial axis (``m^2`` in time) minus ``lip`` times the
    subgrid covering radius, so accepted boxes satisfy the criterion exactly.
    Boxes still failing at ``k_max`` are reported as unresolved; they
    contain or approach the zero set of ``h``.
    """
    h = _as_callable(h)
    box = tuple(tuple(float(v) for v in ax) for ax in box)
    nb = len(box)
    if check_lip:
        L = sampled_lip(h, box)
        if L > lip * (1 + 1e-6):
            raise ParameterError(f"h has sampled Lip(1/2,1) constant {L:.4g} > {lip}")
    k0 = _top_level(box) if k_top is None else int(k_top)
    if not _aligned(box, k0):
        raise ParameterError(f"window not aligned with level {k0}")
    k_max = k0 + 12 if k_max is None else int(k_max)
    c0 = _cell(k0, nb)
    ranges = [np.arange(int(round(a / s)), int(round(b / s))) for (a, b), s in zip(box, c0)]
    active = np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, nb)
    pattern = _subgrid(m, nb)
    offs = np.stack(np.meshgrid(np.arange(4), *[np.arange(2)] * (nb - 1), indexing="ij"), axis=-1).reshape(-1, nb)
    mult = np.array([4] + [2] * (nb - 1))
    ks, idxs, tops = [], [], []
    unresolved = np.zeros((0, nb), dtype=np.int64)
    k = k0
    while len(active):
        cell = _cell(k, nb)
        side = 2.0 ** -k
        lo = active * cell
        inf_est = _box_min(h, lo, cell, pattern) - lip * side * (1 / (m * np.sqrt(2)) + np.sqrt(nb - 1) / (2 * m))
        acc = box_diam(side, nb) <= inf_est / SELECT
        if acc.any():
            idxs.append(active[acc])
            ks.append(np.full(int(acc.sum()), k))
            tops.append(np.full(int(acc.sum()), k == k0))
        rest = active[~acc]
        if k == k_max:
            unresolved = rest
            break
        active = (rest[:, None, :] * mult + offs[None]).reshape(-1, nb)
        k += 1
    if not ks:
        raise ResolutionError("no box satisfies the selection criterion up to k_max")
    return HWhitney(box, nb, np.concatenate(ks), np.concatenate(idxs).astype(np.int64), np.concatenate(tops),
                    k_max, unresolved.astype(np.int64), float(lip), int(m), k0)


# ---------------------------------------------------------------- H

@dataclass
class HField:
    """``H = sum_i diam(I_i) phi_i`` with lookup tables for point evaluation."""

    h: object
    cubes: HWhitney
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        c = self.cubes
        self._levels = {}
        for k in np.unique(c.k):
            sel = np.nonzero(c.k == k)[0]
            idx = c.idx[sel]
            lo_i = idx.min(axis=0) - np.array([5] + [2] * (c.nb - 1))
            shape = idx.max(axis=0) - lo_i + np.array([6] + [3] * (c.nb - 1))
            keys = np.ravel_multi_index(tuple((idx - lo_i).T), tuple(shape))
            order = np.argsort(keys)
            self._levels[int(k)] = (lo_i, shape, keys[order], sel[order])

    @property
    def nb(self):
        return self.cubes.nb

    def _terms(self, pts, dilation_t, dilation_x):
        """Yield (point rows, cube rows) for cubes whose dilate may contain each point."""
        nb = self.nb
        for k, (lo_i, shape, keys, sel) in self._levels.items():
            cell = _cell(k, nb)
            base = np.floor(pts / cell).astype(np.int64)
            rngs = [np.arange(-dilation_t, dilation_t + 1)] + [np.arange(-dilation_x, dilation_x + 1)] * (nb - 1)
            offs = np.stack(np.meshgrid(*rngs, indexing="ij"), axis=-1).reshape(-1, nb)
            for o in offs:
                rel = base + o - lo_i
                ok = np.all((rel >= 0) & (rel < shape), axis=1)
                if not ok.any():
                    continue
                rows = np.nonzero(ok)[0]
                kk = np.ravel_multi_index(tuple(rel[rows].T), tuple(shape))
                pos = np.searchsorted(keys, kk)
                pos = np.minimum(pos, len(keys) - 1)
                hit = keys[pos] == kk
                if hit.any():
                    yield rows[hit], sel[pos[hit]]

    def evaluate(self, pts, derivs=False):
        """H at base points; with ``derivs`` also dt, dtt, grad and Hessian in ``x'``."""
        pts = np.atleast_2d(np.asarray(pts, float))
        M, nb = pts.shape
        H = np.zeros(M)
        if derivs:
            Ht, Htt = np.zeros(M), np.zeros(M)
            G = np.zeros((M, nb - 1))
            Hx = np.zeros((M, nb - 1, nb - 1))
        c = self.cubes
        side, diam, cen = c.side, c.diam, c.centers
        for rows, cubes in self._terms(pts, 4, 1):
            ell = side[cubes]
            tau = (pts[rows, 0] - cen[cubes, 0]) / ell ** 2
            bt, bt1, bt2 = bump1d(tau, *_TIME)
            if nb > 1:
                y = (pts[rows, 1:] - cen[cubes, 1:]) / ell[:, None]
                bs, bs1, bs2 = bump1d(y, *_SPACE)
                prod = bs.prod(axis=1)
            else:
                prod = np.ones(len(rows))
            w = diam[cubes]
            np.add.at(H, rows, w * bt * prod)
            if derivs:
                np.add.at(Ht, rows, w * bt1 * prod / ell ** 2)
                np.add.at(Htt, rows, w * bt2 * prod / ell ** 4)
                for a in range(nb - 1):
                    others = np.prod(np.delete(bs, a, axis=1), axis=1)
                    np.add.at(G[:, a], rows, w * bt * bs1[:, a] * others / ell)
                    for b in range(nb - 1):
                        if a == b:
                            val = bs2[:, a] * others
                        else:
                            rest = np.prod(np.delete(bs, [a, b], axis=1), axis=1)
                            val = bs1[:, a] * bs1[:, b] * rest
                        np.add.at(Hx[:, a, b], rows, w * bt * val / ell ** 2)
        if derivs:
            return {"H": H, "Ht": Ht, "Htt": Htt, "grad": G, "hess": Hx}
        return H

    __call__ = evaluate

    def resolved(self, pts):
        """True for points lying in an accepted cube."""
        pts = np.atleast_2d(np.asarray(pts, float))
        out = np.zeros(len(pts), dtype=bool)
        for rows, _ in self._terms(pts, 0, 0):
            out[rows] = True
        return out

    def to_json(self):
        c = self.cubes
        return {"box": [list(b) for b in c.box], "n": c.nb, "lip": c.lip, "subgrid": c.m,
                "cubes": [{"k": int(k), "idx": [int(v) for v in i], "diam": float(d)}
                          for k, i, d in zip(c.k, c.idx, c.diam)],
                "unresolved": len(c.unresolved), "constants": self.constants}


def build_H(h, box=None, **kwargs):
    """Whitney-wrt-h decomposition (unless given) followed by the bump sum."""
    if isinstance(h, HWhitney):
        raise ParameterError("pass h and box; the decomposition is built here")
    hh = _as_callable(h)
    cubes = whitney_wrt_h(hh, box, **kwargs)
    return HField(hh, cubes)


def eval_H_derivs(field, p, m):
    """``(|d_t^m H|, |grad^m H|)`` at base points; the spatial part is the Frobenius norm."""
    if m not in (1, 2):
        raise ParameterError("m must be 1 or 2")
    p = np.atleast_2d(np.asarray(p, float))
    if np.any(field.h(p) <= 0):
        raise ParameterError("derivatives are undefined on the zero set of h")
    d = field.evaluate(p, derivs=True)
    if m == 1:
        return np.abs(d["Ht"]), np.linalg.norm(d["grad"], axis=1)
    return np.abs(d["Htt"]), np.linalg.norm(d["hess"].reshape(len(p), -1), axis=1)


# ---------------------------------------------------------------- verification

def _window(box):
    return np.array([a for a, _ in box]), np.array([b for _, b in box])


def dilate_samples(cubes, kappa, per_axis=2):
    """Points spread over ``kappa I`` for each cube (clipped to the window)."""
    nb = cubes.nb
    s = cubes.side
    half = np.concatenate([(kappa * s)[:, None] ** 2 / 2, np.repeat((kappa * s)[:, None] / 2, nb - 1, axis=1)], axis=1)
    u = np.linspace(-0.999, 0.999, per_axis)
    pat = np.stack(np.meshgrid(*[u] * nb, indexing="ij"), axis=-1).reshape(-1, nb)
    pts = cubes.centers[:, None, :] + pat[None] * half[:, None, :]
    lo, hi = _window(cubes.box)
    pts = pts.reshape(-1, nb)
    keep = np.all((pts >= lo) & (pts < hi), axis=1)
    return pts[keep]


class _LevelCounts:
    """Summed-area table of cube centers of one level, for open-box counting queries."""

    def __init__(self, idx, cell, pad):
        self.cell = cell
        self.origin = idx.min(axis=0) - pad
        shape = tuple(idx.max(axis=0) - self.origin + pad + 1)
        occ = np.zeros(shape, dtype=np.int32)
        np.add.at(occ, tuple((idx - self.origin).T), 1)
        sat = occ
        for ax in range(occ.ndim):
            sat = np.cumsum(sat, axis=ax, dtype=np.int64)
        self.sat = np.pad(sat, [(1, 0)] * occ.ndim)
        self.shape = np.array(shape)

    def count(self, lo, hi):
        """Number of centers ``(j + 1/2) cell`` strictly inside ``(lo, hi)`` per row."""
        jmin = np.floor(lo / self.cell - 0.5).astype(np.int64) + 1 - self.origin
        jmax = np.ceil(hi / self.cell - 0.5).astype(np.int64) - 1 - self.origin
        jmin = np.clip(jmin, 0, self.shape)
        jmax = np.clip(jmax + 1, 0, self.shape)
        empty = np.any(jmax <= jmin, axis=1)
        nb = lo.shape[1]
        total = np.zeros(len(lo), dtype=np.int64)
        for corner in range(2 ** nb):
            sel = [(corner >> a) & 1 for a in range(nb)]
            ind = tuple(np.where(sel[a], jmax[:, a], jmin[:, a]) for a in range(nb))
            sign = (-1) ** (nb - sum(sel))
            total += sign * self.sat[ind]
        total[empty] = 0
        return total


def _level_tables(cubes, pad):
    out = {}
    for k in np.unique(cubes.k):
        sel = cubes.k == k
        out[int(k)] = _LevelCounts(cubes.idx[sel], _cell(int(k), cubes.nb), pad)
    return out


def _half_widths(kappa, ell, nb):
    return np.array([kappa ** 2 * ell ** 2 / 2] + [kappa * ell / 2] * (nb - 1))


def cover_levels(cubes, pts, kappa, tables=None):
    """Per point: count of cubes whose ``kappa I`` contains it, and the min/max level hit."""
    tables = tables or _level_tables(cubes, 0)
    count = np.zeros(len(pts), dtype=np.int64)
    kmin = np.full(len(pts), np.iinfo(np.int64).max)
    kmax = np.full(len(pts), np.iinfo(np.int64).min)
    for k, tab in tables.items():
        w = _half_widths(kappa, 2.0 ** -k, cubes.nb)
        c = tab.count(pts - w, pts + w)
        hit = c > 0
        count += c
        kmin[hit] = np.minimum(kmin[hit], k)
        kmax[hit] = np.maximum(kmax[hit], k)
    return count, kmin, kmax


def neighbor_level_gap(cubes, kappa=10.0, tables=None):
    """Largest level gap between two cubes whose ``kappa``-dilates intersect."""
    tables = tables or _level_tables(cubes, 0)
    levels = sorted(tables)
    cen = cubes.centers
    worst = 0
    for b in levels:
        pts = cen[cubes.k == b]
        for a in levels:
            if a >= b or b - a <= worst:
                continue
            w = _half_widths(kappa, 2.0 ** -a, cubes.nb) + _half_widths(kappa, 2.0 ** -b, cubes.nb)
            if np.any(tables[a].count(pts - w, pts + w) > 0):
                worst = b - a
    return worst


def overlap_volume_bound(nb):
    """Volume-comparison bound on the overlap of the tenfold dilates."""
    return 101 * 11 ** (nb - 1) * 4 ** (nb + 1)


def check_whitney_h(cubes, h, extra_points=None):
    """Exact checks of selection, (10, 60) comparability on ``10I``, neighbour ratios and overlap."""
    h = _as_callable(h)
    nb = cubes.nb
    viol = []
    # selection on a denser subgrid than the one used for acceptance
    dense = _subgrid(2 * cubes.m, nb)
    lo = cubes.lo
    cell = np.concatenate([cubes.side[:, None] ** 2, np.repeat(cubes.side[:, None], nb - 1, axis=1)], axis=1)
    mins = np.empty(len(cubes))
    for s in range(0, len(cubes), 20000):
        pts = lo[s:s + 20000, None, :] + dense[None] * cell[s:s + 20000, None, :]
        mins[s:s + 20000] = h(pts.reshape(-1, nb)).reshape(pts.shape[:2]).min(axis=1)
    bad = cubes.diam > mins / SELECT * (1 + 1e-12)
    if bad.any():
        viol.append(("selection", int(np.argmax(bad))))
    pts = np.concatenate([dilate_samples(cubes, 10.0), cubes.centers])
    if extra_points is not None:
        pts = np.concatenate([pts, extra_points])
    hv = h(pts)
    tables = _level_tables(cubes, 0)
    count, kmin, kmax = cover_levels(cubes, pts, 10.0, tables)
    hit = count > 0
    dmax = box_diam(2.0 ** -kmin[hit].astype(float), nb)
    dmin = box_diam(2.0 ** -kmax[hit].astype(float), nb)
    low_ratio = hv[hit] / dmax
    # upper bound: the parent of each cube failed the conservative test
    slack = cubes.cover_radius(2 * 2.0 ** -kmax[hit].astype(float))
    high_ratio = (hv[hit] - slack) / dmin
    not_top = kmax[hit] > cubes.k0
    if np.any(low_ratio < LOW * (1 - 1e-12)):
        viol.append(("comparable-low", int(np.argmin(low_ratio))))
    if np.any(high_ratio[not_top] > HIGH * (1 + 1e-12)):
        viol.append(("comparable-high", int(np.argmax(np.where(not_top, high_ratio, -np.inf)))))
    gap = neighbor_level_gap(cubes, 10.0, tables)
    ratio = 2.0 ** gap
    if ratio > 6:
        viol.append(("neighbor-ratio", gap))
    N = int(count.max()) if len(count) else 0
    if N > overlap_volume_bound(nb):
        viol.append(("overlap", N))
    plain = hv[hit] / dmin
    return {"violations": viol, "min_h_over_diam": float(low_ratio.min()) if hit.any() else float("nan"),
            "max_h_over_diam": float(plain[not_top].max()) if not_top.any() else float("nan"),
            "max_neighbor_ratio": ratio, "overlap_N": N, "overlap_bound": overlap_volume_bound(nb),
            "points_checked": int(hit.sum()), "cubes": len(cubes), "unresolved": len(cubes.unresolved),
            "top_level_cubes": int(cubes.top.sum())}


def sample_points(field, per_axis=64, seed=0):
    """Jittered grid over the window, so samples do not sit on bump plateau edges."""
    lo, hi = _window(field.cubes.box)
    rng = np.random.default_rng(seed)
    axes = [lo[a] + (np.arange(per_axis) + 0.5) * (hi[a] - lo[a]) / per_axis for a in range(field.nb)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, field.nb)
    pts = pts + (rng.random(pts.shape) - 0.5) * (hi - lo) / per_axis
    return np.clip(pts, lo, hi - 1e-12)


def measured_constants(field, pts, steps=16):
    """c1, c2 (as ratios H/h), derivative constants for m = 1, 2, and the Lip constant of H."""
    pts = pts[field.resolved(pts)]
    hv = field.h(pts)
    pts, hv = pts[hv > 0], hv[hv > 0]
    d = field.evaluate(pts, derivs=True)
    H = d["H"]
    out = {"c1": float((H / hv).min()), "c2": float((H / hv).max())}
    g1 = np.linalg.norm(d["grad"], axis=1)
    g2 = np.linalg.norm(d["hess"].reshape(len(pts), -1), axis=1)
    out["c_n1"] = float((hv * np.abs(d["Ht"]) + g1).max())
    out["c_n2"] = float((hv ** 3 * np.abs(d["Htt"]) + hv * g2).max())
    out["sup_h_grad"] = float((hv * g1).max()) if field.nb > 1 else 0.0
    # (|a| + |b|) / (sqrt(tau) + |y|) <= max(|a| / sqrt(tau), |b| / |y|): the Lip(1/2,1) constant is
    # the larger of sup |grad H| and the sup of time chords |H(t + tau) - H(t)| / sqrt(tau)
    lo, hi = _window(field.cubes.box)
    chord = 0.0
    for frac in np.geomspace(0.01, 10.0, steps):
        tau = (frac * hv / SELECT) ** 2
        for sgn in (1, -1):
            q = pts.copy()
            q[:, 0] = np.clip(pts[:, 0] + sgn * tau, lo[0], hi[0] - 1e-12)
            ok = field.resolved(q) & (q[:, 0] != pts[:, 0])
            if ok.any():
                dq = np.abs(field.evaluate(q[ok]) - H[ok]) / np.sqrt(np.abs(q[ok, 0] - pts[ok, 0]))
                chord = max(chord, float(dq.max()))
    out["lip_time"] = chord
    out["lip_space"] = float(g1.max()) if field.nb > 1 else 0.0
    out["c3"] = max(chord, out["lip_space"])
    return out


def dt_half_pbmo(field, window=None, samples=64):
    """P-BMO norm of ``D_t^{1/2} H`` from a ``samples``-per-axis midpoint grid on ``window``.

    H oscillates in time on the scale ``side^2`` of its cubes, so the window
    must be short enough in time for the grid to resolve that scale.
    """
    from .halfderiv import half_time_derivative, pbmo_norm

    lo, hi = _window(field.cubes.box if window is None else window)
    axes = [lo[a] + (np.arange(samples) + 0.5) * (hi[a] - lo[a]) / samples for a in range(field.nb)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = field.evaluate(grid.reshape(-1, field.nb)).reshape(grid.shape[:-1])
    D = half_time_derivative(vals, axes[0][1] - axes[0][0], method="spectral")
    return pbmo_norm(D, [ax[1] - ax[0] for ax in axes])


def verify_regdist_props(field, per_axis=64, bmo=False, bmo_samples=64, bmo_window=None):
    """Report on comparability, derivative bounds, Lip constant and (optionally) P-BMO."""
    cube_rep = check_whitney_h(field.cubes, field.h)
    pts = sample_points(field, per_axis)
    const = measured_constants(field, pts)
    N = max(cube_rep["overlap_N"], 1)
    cprime = bump_lip_constant() * (np.sqrt(field.nb - 1) + 1)
    rep = {"whitney": cube_rep, "constants": const, "N": N,
           "lower_ok": const["c1"] >= 1 / 60 * (1 - 1e-12),
           "upper_ok": const["c2"] <= 0.6 * N * (1 + 1e-12),
           "lip_chain_bound": 2 * cprime * N,
           "lip_ok": const["c3"] <= 2 * cprime * N}
    if bmo:
        rep["pbmo_DtH"] = dt_half_pbmo(field, bmo_window, bmo_samples)
    rep["passes"] = not cube_rep["violations"] and rep["lower_ok"]
    field.constants.update({"c1": const["c1"], "c2": const["c2"], "c3": const["c3"], "N": N,
                            "c_n1": const["c_n1"], "c_n2": const["c_n2"]})
    if "pbmo_DtH" in rep:
        field.constants["c4"] = rep["pbmo_DtH"]
    return rep


class RegularizedDistance(BaseEstimator, TransformerMixin):
    """Estimator wrapper: ``fit(h, box)`` builds H, ``transform(points)`` evaluates it."""

    def __init__(self, lip=1.0, k_top=None, k_max=None, m=4):
        self.lip = lip
        self.k_top = k_top
        self.k_max = k_max
        self.m = m

    def fit(self, h, box):
        self.field_ = build_H(h, box, lip=self.lip, k_top=self.k_top, k_max=self.k_max, m=self.m)
        self.n_cubes_ = len(self.field_.cubes)
        return self

    def transform(self, X):
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "field_")
        X = np.asarray(X, float)
        if X.ndim != 2 or X.shape[1] != self.field_.nb:
            raise ParameterError(f"expected points of shape (M, {self.field_.nb})")
        return self.field_.evaluate(X)
