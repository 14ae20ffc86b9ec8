"""Explicit finite-difference heat solver above or below a graph, with the
Caccioppoli, Carleson-measure and beta_Q diagnostics.

Space is a node grid of step ``h`` over ``X = (x_1, ..., x_n)``; time levels
are ``h^2`` apart and each level is reached in ``substeps`` forward-Euler
steps of size ``h^2 / substeps`` (``substeps >= 2n`` is the CFL condition;
``2n`` makes every update the average of the 2n neighbours).  Cells outside
``{side * (x_n - f(t, x')) > 0}`` and the faces of the box are held at the
data.  Every ``stride``-th level is stored.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .corona import subregime_decompose
from .exceptions import CFLError, MaximumPrincipleError, ParameterError, ResolutionError

MP_TOL = 1e-12


# ---------------------------------------------------------------- data

@dataclass(frozen=True)
class HeatData:
    """Boundary/initial datum ``u(t, X)`` defined on the whole box.

    kinds: ``constant`` (value), ``linear_x1`` (a, b: a + b x_1),
    ``quadratic`` (``|X|^2 / (2n) + t``), ``step_x1`` (width: smoothed
    Heaviside in x_1), ``step_t`` (t0, width: smoothed Heaviside in t).
    """

    kind: str = "step_x1"
    params: dict = field(default_factory=dict)

    KINDS = ("constant", "linear_x1", "quadratic", "step_x1", "step_t")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ParameterError(f"unknown data kind {self.kind!r}")

    def __call__(self, t, X):
        p = self.params
        if self.kind == "constant":
            return np.full(X[0].shape, float(p.get("value", 1.0)))
        if self.kind == "linear_x1":
            return float(p.get("a", 0.0)) + float(p.get("b", 1.0)) * X[0]
        if self.kind == "quadratic":
            return sum(x * x for x in X) / (2 * len(X)) + t
        if self.kind == "step_x1":
            return 0.5 * (1 + np.tanh(X[0] / float(p.get("width", 0.125))))
        t0 = float(p.get("t0", 0.0))
        return np.full(X[0].shape, 0.5 * (1 + np.tanh((t - t0) / float(p.get("width", 0.125)))))

    def to_json(self):
        return {"kind": self.kind, "params": dict(self.params)}


# ---------------------------------------------------------------- field

@dataclass
class HeatField:
    n: int
    h: float
    space_box: tuple
    times: np.ndarray
    u: np.ndarray
    graph: object
    side: int
    data: HeatData
    substeps: int
    stride: int
    report: dict = field(default_factory=dict)

    @property
    def axes(self):
        return [a + self.h * np.arange(int(round((b - a) / self.h))) for a, b in self.space_box]

    @property
    def shape(self):
        return self.u.shape[1:]

    @property
    def dt_stored(self):
        return self.stride * self.h * self.h

    @property
    def cell_volume(self):
        return self.h ** self.n * self.dt_stored

    @property
    def norm_inf(self):
        return float(np.abs(self.u).max())

    def _mesh(self):
        m = self.__dict__.get("_mesh_cache")
        if m is None:
            m = np.meshgrid(*self.axes, indexing="ij")
            self.__dict__["_mesh_cache"] = m
        return m

    def graph_height(self, k):
        """``f(t_k, x')`` broadcast over the spatial grid."""
        return _graph_on(self.graph, self.times[k], self._mesh())

    def offset(self, k):
        return self.side * (self._mesh()[-1] - self.graph_height(k))

    def active(self, k):
        return (self.offset(k) > 0) & ~_faces(self.shape)

    def _memo(self, name, k, make):
        store = self.__dict__.setdefault("_slab_cache", {})
        key = (name, int(k))
        if key not in store:
            store[key] = make(k)
        return store[key]

    def interior(self, k):
        """Active cells whose 2n neighbours are active too."""
        return self._memo("interior", k, self._interior)

    def _interior(self, k):
        a = self.active(k)
        out = a.copy()
        for ax in range(self.n):
            out &= np.roll(a, 1, axis=ax) & np.roll(a, -1, axis=ax)
        return out & ~_faces(self.shape)

    def delta(self, k):
        """Distance to the graph via the vertical-distance fast path."""
        return self._memo("delta", k, lambda j: np.abs(self._mesh()[-1] - self.graph_height(j)))

    def grad(self, k):
        """Centred differences; face values are zero (faces never enter the sums)."""
        u = self.u[k]
        out = []
        for ax in range(self.n):
            g = np.zeros_like(u)
            sl_c = [slice(None)] * self.n
            sl_p = [slice(None)] * self.n
            sl_m = [slice(None)] * self.n
            sl_c[ax], sl_p[ax], sl_m[ax] = slice(1, -1), slice(2, None), slice(0, -2)
            g[tuple(sl_c)] = (u[tuple(sl_p)] - u[tuple(sl_m)]) / (2 * self.h)
            out.append(g)
        return out

    def dtu(self, k):
        """``d_t u`` through the scheme identity ``d_t u = discrete Laplacian``."""
        return _laplacian(self.u[k], self.h)

    def ball_cells(self, center, r):
        """Yield ``(k, sl, mask)`` for stored slabs meeting ``B(center, r)``.

        ``sl`` is a tuple of spatial slices and ``mask`` selects the cells of
        that window lying in the ball.
        """
        center = np.asarray(center, float)
        tc, Xc = center[0], center[1:]
        ks = np.flatnonzero(np.abs(self.times - tc) < r * r)
        axes = self.axes
        sl = tuple(slice(int(np.searchsorted(a, x - r)), int(np.searchsorted(a, x + r, side="right")))
                   for a, x in zip(axes, Xc))
        sub = np.meshgrid(*[a[s] for a, s in zip(axes, sl)], indexing="ij")
        dX = np.sqrt(sum((x - c) ** 2 for x, c in zip(sub, Xc)))
        for k in ks:
            yield k, sl, dX + np.sqrt(abs(self.times[k] - tc)) < r

    def ball_inside(self, center, r):
        """Does ``B(center, r)`` lie in the solved window (time and box, off the faces)?"""
        center = np.asarray(center, float)
        if center[0] - r * r < self.times[0] or center[0] + r * r > self.times[-1]:
            return False
        return all(a + self.h <= x - r and x + r <= b - 2 * self.h
                   for (a, b), x in zip(self.space_box, center[1:]))


def _faces(shape):
    m = np.zeros(shape, bool)
    for ax in range(len(shape)):
        idx = [slice(None)] * len(shape)
        idx[ax] = 0
        m[tuple(idx)] = True
        idx[ax] = -1
        m[tuple(idx)] = True
    return m


def _laplacian(u, h):
    out = np.zeros_like(u)
    c = tuple(slice(1, -1) for _ in range(u.ndim))
    for ax in range(u.ndim):
        p = list(c)
        m = list(c)
        p[ax], m[ax] = slice(2, None), slice(0, -2)
        out[c] += u[tuple(p)] + u[tuple(m)] - 2 * u[c]
    return out / (h * h)


def _graph_on(graph, t, mesh):
    n = len(mesh)
    if n == 1:
        base = np.full(mesh[0].shape + (1,), t)
        return graph.evaluate(base)
    xp = [m[..., 0] for m in mesh[:-1]]
    base = np.stack([np.full(xp[0].shape, t)] + xp, axis=-1)
    return graph.evaluate(base)[..., None]


# ---------------------------------------------------------------- solver

def solve_heat(graph, space_box, h, T, data=None, side=1, substeps=None, stride=1, t0=0.0):
    """Solve on ``{side (x_n - f) > 0}`` within ``space_box`` from ``t0`` to ``t0 + T``."""
    n = graph.n
    data = data or HeatData()
    space_box = tuple((float(a), float(b)) for a, b in space_box)
    if len(space_box) != n:
        raise ParameterError(f"space_box needs {n} axes")
    for a, b in space_box:
        N = (b - a) / h
        if b <= a or abs(N - round(N)) > 1e-9 or round(N) < 3:
            raise ParameterError(f"axis [{a}, {b}) is not a whole number (>= 3) of steps {h}")
    substeps = 2 * n if substeps is None else int(substeps)
    if substeps < 2 * n:
        raise CFLError(f"dt = h^2/{substeps} exceeds the stability limit h^2/{2 * n}")
    if side not in (1, -1):
        raise ParameterError("side must be +1 or -1")
    levels = T / (h * h)
    if abs(levels - round(levels)) > 1e-6 or round(levels) < 1:
        raise ParameterError("T must be a positive whole number of h^2 levels")
    levels = int(round(levels))
    if levels % stride:
        raise ParameterError("stride must divide the number of levels")
    axes = [a + h * np.arange(int(round((b - a) / h))) for a, b in space_box]
    mesh = np.meshgrid(*axes, indexing="ij")
    faces = _faces(mesh[0].shape)
    lam = 1.0 / substeps
    dt = h * h / substeps

    def held(t):
        act = (side * (mesh[-1] - _graph_on(graph, t, mesh)) > 0) & ~faces
        return act, data(t, mesh)

    act, u = held(t0)
    if not act.any():
        raise ParameterError("empty domain")
    u = np.array(u, float)
    stored, times = [u.copy()], [t0]
    c = tuple(slice(1, -1) for _ in range(n))
    worst, steps = 0.0, 0
    for lvl in range(levels):
        for s in range(substeps):
            t = t0 + lvl * h * h + (s + 1) * dt
            new = u.copy()
            acc = np.zeros_like(u[c])
            for ax in range(n):
                p, m = list(c), list(c)
                p[ax], m[ax] = slice(2, None), slice(0, -2)
                acc += u[tuple(p)] + u[tuple(m)] - 2 * u[c]
            new[c] = u[c] + lam * acc
            act, d = held(t)
            new[~act] = d[~act]
            lo, hi = u.min(), u.max()
            tol = MP_TOL * max(1.0, abs(lo), abs(hi))
            vals = new[act]
            over = max(lo - vals.min(), vals.max() - hi, 0.0)
            worst = max(worst, over)
            steps += 1
            if over > tol:
                raise MaximumPrincipleError(f"step {steps} at t={t:.6g}: excursion {over:.3g}")
            u = new
        if (lvl + 1) % stride == 0:
            stored.append(u.copy())
            times.append(t0 + (lvl + 1) * h * h)
    rep = {"steps": steps, "max_principle_worst_excursion": worst, "max_principle_ok": True,
           "cfl_factor": lam, "levels": levels, "stored": len(stored)}
    return HeatField(n, h, space_box, np.array(times), np.array(stored), graph, side, data,
                     substeps, stride, rep)


class HeatSolver(BaseEstimator):
    """Estimator wrapper: ``HeatSolver(...).fit(graph).field_``."""

    def __init__(self, space_box=((-1.0, 1.0),), h=1 / 64, T=1 / 16, data=None, side=1, substeps=None,
                 stride=1, t0=0.0):
        self.space_box = space_box
        self.h = h
        self.T = T
        self.data = data
        self.side = side
        self.substeps = substeps
        self.stride = stride
        self.t0 = t0

    def fit(self, graph, y=None):
        data = self.data if isinstance(self.data, HeatData) or self.data is None else HeatData(**self.data)
        self.field_ = solve_heat(graph, self.space_box, self.h, self.T, data, self.side, self.substeps,
                                 self.stride, self.t0)
        self.report_ = self.field_.report
        return self


# ---------------------------------------------------------------- diagnostics

def _ball_sum(field, center, r, integrand, require_interior=False):
    total, cells = 0.0, 0
    for k, sl, mask in field.ball_cells(center, r):
        inner = field.interior(k)[sl]
        if require_interior and np.any(mask & ~inner):
            raise ParameterError("ball leaves the interior of the domain")
        sel = mask & inner
        if sel.any():
            total += float(integrand(k, sl)[sel].sum())
            cells += int(sel.sum())
    return total * field.cell_volume, cells


def caccioppoli_ratio(field, center, r, alpha=1.0, subtract=None):
    """``iint_B |grad u|^2`` over ``r^{-2} iint_{(1+alpha)B} u^2``.

    ``subtract="center"`` applies the same quotient to the solution
    ``u - u(center)`` (nearest stored node), which removes the trivial
    ``r^2`` decay that a nonzero level produces.
    """
    R = (1 + alpha) * r
    if not field.ball_inside(center, R):
        raise ParameterError("enlarged ball exits the solved window")
    c = 0.0
    if subtract == "center":
        k = int(np.argmin(np.abs(field.times - center[0])))
        idx = tuple(int(np.argmin(np.abs(ax - x))) for ax, x in zip(field.axes, center[1:]))
        c = float(field.u[k][idx])
    elif subtract is not None:
        raise ParameterError(f"unknown subtract mode {subtract!r}")

    def g2(k, sl):
        return sum(g[sl] ** 2 for g in field.grad(k))

    num, _ = _ball_sum(field, center, r, g2)
    den, _ = _ball_sum(field, center, R, lambda k, sl: (field.u[k][sl] - c) ** 2, require_interior=True)
    den /= r * r
    return num / den if den > 0 else 0.0


def cme_functional(field, centers, radii, with_time_term=True):
    """Normalised Carleson sums ``r^{-n-1} iint_B (|grad u|^2 [+ delta^2 |d_t u|^2]) delta / |u|_inf^2``.

    ``centers`` are base points ``(t, x')``; each is lifted to the graph.
    Returns ``(rows, sup, sup_with_time)``.
    """
    h = field.h
    norm2 = field.norm_inf ** 2
    rows = []
    centers = np.atleast_2d(np.asarray(centers, float))
    for b in centers:
        ctr = np.append(b, field.graph.evaluate(b[None, :])[0])
        for r in np.atleast_1d(radii):
            r = float(r)
            if r < 8 * h * (1 - 1e-12):
                raise ResolutionError(f"radius {r} below the floor 8h = {8 * h}")
            if not field.ball_inside(ctr, r):
                raise ParameterError(f"ball ({ctr.tolist()}, {r}) exits the solved window")
            cache = {}

            def parts(k, sl):
                if k not in cache:
                    d = field.delta(k)
                    g2 = sum(g ** 2 for g in field.grad(k))
                    cache[k] = (g2 * d, d ** 3 * field.dtu(k) ** 2)
                return cache[k][0][sl], cache[k][1][sl]

            a, cells = _ball_sum(field, ctr, r, lambda k, sl: parts(k, sl)[0])
            row = {"center": ctr.tolist(), "r": r, "cells": cells,
                   "value": a / r ** (field.n + 1) / norm2 if norm2 else 0.0}
            if with_time_term:
                tt, _ = _ball_sum(field, ctr, r, lambda k, sl: parts(k, sl)[1])
                row["value_with_time_term"] = (a + tt) / r ** (field.n + 1) / norm2 if norm2 else 0.0
            rows.append(row)
    sup = max(r["value"] for r in rows) if rows else 0.0
    sup_t = max(r.get("value_with_time_term", 0.0) for r in rows) if rows else 0.0
    return rows, sup, sup_t


def dirichlet_total(field):
    """``iint |grad v|^2 delta`` over all interior cells (v = u / |u|_inf)."""
    norm2 = field.norm_inf ** 2 or 1.0
    tot = 0.0
    for k in range(len(field.times)):
        inner = field.interior(k)
        g2 = sum(g ** 2 for g in field.grad(k))
        tot += float((g2 * field.delta(k))[inner].sum())
    return tot * field.cell_volume / norm2


# ---------------------------------------------------------------- beta_Q and packing

def _cube_bbox(tree, q):
    info = tree[q]
    blo, bhi = q.base_box()
    blk = tree.graph.values[tuple(slice(a, b) for a, b in zip(info.index_lo, info.index_hi))]
    return np.append(blo, blk.min()), np.append(bhi, blk.max())


def region_cells(field, tree, q, eta, k=None):
    """Cells of the pointwise Whitney region of ``q``.

    A cell ``p`` belongs when ``eta^{1/4} diam(q) <= delta(p)`` and its
    parabolic gap to the bounding box of ``q`` is at most
    ``eta^{-1/4} diam(q)``.  Yields ``(slab, spatial slices, mask)``.
    """
    diam = tree[q].diam
    low, high = eta ** 0.25 * diam, eta ** -0.25 * diam
    lo, hi = _cube_bbox(tree, q)
    tlo, thi = lo[0] - high * high, hi[0] + high * high
    if tlo < field.times[0] or thi > field.times[-1]:
        raise ParameterError(f"region of {q.label()} leaves the solved time window")
    for (a, b), l_, h_ in zip(field.space_box, lo[1:], hi[1:]):
        if l_ - high < a or h_ + high > b:
            raise ParameterError(f"region of {q.label()} leaves the solved box")
    axes = field.axes
    sl = tuple(slice(int(np.searchsorted(ax, l_ - high)), int(np.searchsorted(ax, h_ + high, side="right")))
               for ax, l_, h_ in zip(axes, lo[1:], hi[1:]))
    sub = np.meshgrid(*[ax[s] for ax, s in zip(axes, sl)], indexing="ij")
    gx = np.sqrt(sum(np.maximum(0, np.maximum(l_ - x, x - h_)) ** 2 for x, l_, h_ in zip(sub, lo[1:], hi[1:])))
    for kk in np.flatnonzero((field.times >= tlo) & (field.times <= thi)):
        gt = np.sqrt(max(0.0, lo[0] - field.times[kk], field.times[kk] - hi[0]))
        mask = (gx + gt <= high) & (field.delta(kk)[sl] >= low) & field.interior(kk)[sl]
        yield kk, sl, mask


def beta_table(field, tree, cubes, eta):
    """``beta_Q = iint_{U_Q} |grad v|^2 delta`` for each cube, ``v = u / |u|_inf``."""
    norm2 = field.norm_inf ** 2 or 1.0
    cache = {}

    def w(k):
        if k not in cache:
            cache[k] = sum(g ** 2 for g in field.grad(k)) * field.delta(k)
        return cache[k]

    out = {}
    for q in cubes:
        tot = 0.0
        for k, sl, mask in region_cells(field, tree, q, eta):
            tot += float(w(k)[sl][mask].sum())
        out[q] = tot * field.cell_volume / norm2
    return out


def packing_sum(betas, tree, Q0, corona=None):
    """``sum_{Q in D_Q0} beta_Q / sigma(Q0)``, split along the corona parts when given."""
    sigma = tree[Q0].measure
    below = list(tree.descendants(Q0))
    missing = [q for q in below if q not in betas]
    if missing:
        raise ParameterError(f"no beta for {missing[0].label()}")
    total = sum(betas[q] for q in below)
    rep = {"Q0": Q0.label(), "ratio": total / sigma, "sigma": sigma, "cubes": len(below)}
    if corona is not None:
        bad, whole, S = subregime_decompose(Q0, corona)
        parts = {"bad": sum(betas[q] for q in bad),
                 "regimes": sum(betas[q] for R in whole for q in R.cubes),
                 "home": sum(betas[q] for q in S.cubes)}
        rep["parts"] = {k: v / sigma for k, v in parts.items()}
        rep["parts_consistent"] = bool(abs(sum(parts.values()) - total) <= 1e-9 * max(1.0, total))
    return rep


def beta_uniform_bound(betas, tree):
    """Measured ``A = max beta_Q / sigma(Q)`` with its cube."""
    q = max(betas, key=lambda c: betas[c] / tree[c].measure)
    return betas[q] / tree[q].measure, q


# ---------------------------------------------------------------- CSV

def write_cme_csv(rows, path, n):
    """Columns: center_t, center_x1..center_xn, r, value, value_with_time_term."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["center_t"] + [f"center_x{i}" for i in range(1, n + 1)] + ["r", "value", "value_with_time_term"])
        for row in rows:
            w.writerow([repr(float(v)) for v in row["center"]] + [repr(row["r"]), repr(float(row["value"])),
                                                                   repr(float(row.get("value_with_time_term", "nan")))])


def write_beta_csv(betas, tree, path):
    """Columns: cube, k, diam, sigma, beta."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cube", "k", "diam", "sigma", "beta"])
        for q in sorted(betas):
            info = tree[q]
            w.writerow([q.label(), q.k, repr(float(info.diam)), repr(float(info.measure)), repr(float(betas[q]))])
