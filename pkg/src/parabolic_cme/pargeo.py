"""Parabolic metric primitives: points, balls, grids, sampled graphs.

Coordinates in ``R^{n+1}`` are stored time-first, ``(t, x_1, ..., x_n)``.  A
graph is ``x_n = f(t, x')`` over the base ``R^n = {(t, x')}``; base points are
``(t, x_1, ..., x_{n-1})``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize
from scipy.interpolate import RegularGridInterpolator

from ._distance import SampleIndex
from .exceptions import DimensionError, OutOfWindowError, ParameterError, ResolutionError


@dataclass(frozen=True)
class ParaPoint:
    t: float
    X: tuple

    def __post_init__(self):
        X = tuple(float(x) for x in np.atleast_1d(self.X))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "t", float(self.t))
        if not (1 <= len(X) <= 3):
            raise DimensionError(f"spatial dimension {len(X)} not supported")
        if not np.all(np.isfinite((self.t,) + X)):
            raise ParameterError("coordinates must be finite")

    @property
    def n(self):
        return len(self.X)

    def as_array(self):
        return np.array((self.t,) + self.X)

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=float)
        return cls(a[0], tuple(a[1:]))


def _as_coords(p):
    if isinstance(p, ParaPoint):
        return p.as_array()
    return np.asarray(p, dtype=float)


def para_dist(p, q):
    """``|X - Y| + |t - s|^{1/2}``; accepts ParaPoints or broadcastable arrays."""
    a, b = _as_coords(p), _as_coords(q)
    if a.shape[-1] != b.shape[-1]:
        raise DimensionError(f"dimension mismatch: {a.shape[-1] - 1} vs {b.shape[-1] - 1}")
    d = np.sqrt(np.sum((a[..., 1:] - b[..., 1:]) ** 2, axis=-1)) + np.sqrt(np.abs(a[..., 0] - b[..., 0]))
    return float(d) if np.ndim(d) == 0 else d


def base_dist(a, b):
    """Parabolic distance in the base ``R^n`` (time-first coordinates)."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    return np.sqrt(np.sum((a[..., 1:] - b[..., 1:]) ** 2, axis=-1)) + np.sqrt(np.abs(a[..., 0] - b[..., 0]))


@dataclass(frozen=True)
class ParaBall:
    center: ParaPoint
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ParameterError("ball radius must be positive")

    def contains(self, pts):
        return para_dist(np.asarray(pts, float), self.center.as_array()) < self.radius


@dataclass(frozen=True)
class ParaGrid:
    """Regular parabolic grid: spatial step ``delta``, time step ``delta**2``.

    ``box`` is ``((t0, t1), (a1, b1), ...)``; nodes sit at ``lo + i*step`` for
    the half-open ranges ``[lo, hi)``.
    """

    n_space: int
    delta: float
    box: tuple

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        object.__setattr__(self, "box", box)
        if len(box) != self.n_space + 1:
            raise DimensionError(f"box has {len(box)} axes, expected {self.n_space + 1}")
        for (lo, hi), step in zip(box, self.steps):
            k = (hi - lo) / step
            if hi <= lo or abs(k - round(k)) > 1e-6:
                raise ParameterError(f"axis [{lo}, {hi}) is not a whole number of steps {step}")

    @property
    def time_step(self):
        return self.delta ** 2

    @property
    def steps(self):
        return (self.delta ** 2,) + (self.delta,) * self.n_space

    @property
    def shape(self):
        return tuple(int(round((hi - lo) / s)) for (lo, hi), s in zip(self.box, self.steps))

    @property
    def axes(self):
        return [lo + s * np.arange(m) for (lo, _), s, m in zip(self.box, self.steps, self.shape)]

    @property
    def cell_volume(self):
        return self.delta ** (self.n_space + 2)

    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    def index_of(self, coords):
        """Integer node index (floor) of coordinates, time-first."""
        coords = np.asarray(coords, float)
        lo = np.array([b[0] for b in self.box])
        return np.floor((coords - lo) / np.array(self.steps) + 1e-9).astype(np.int64)

    def diameter(self):
        (t0, t1), *sp = self.box
        return float(np.sqrt(sum((b - a) ** 2 for a, b in sp)) + np.sqrt(t1 - t0))


@dataclass(frozen=True, eq=False)
class SampledGraph:
    """Graph ``x_n = f(t, x')`` sampled on a ParaGrid over the base ``R^n``.

    ``b1`` is the Lip(1/2,1) constant and ``b2`` a bound for the parabolic BMO
    norm of the half time derivative.  ``closed_form(base_pts)`` evaluates f
    off-grid when available; otherwise multilinear interpolation is used.
    """

    grid: ParaGrid
    values: np.ndarray
    b1: float
    b2: float = 0.0
    closed_form: Optional[Callable] = None
    name: str = "table"
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise DimensionError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise ParameterError("graph values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n(self):
        """Spatial dimension of the ambient space."""
        return self.grid.n_space + 1

    @property
    def delta(self):
        return self.grid.delta

    @classmethod
    def from_function(cls, func, n, delta, box, b1, b2=0.0, name="function", spec=None):
        grid = ParaGrid(n - 1, delta, box)
        vals = np.asarray(func(grid.points()), dtype=float)
        return cls(grid, vals, b1, b2, closed_form=func, name=name, spec=spec or {})

    def index(self):
        idx = self.__dict__.get("_index")
        if idx is None:
            idx = SampleIndex(self.grid.axes, self.values)
            object.__setattr__(self, "_index", idx)
        return idx

    def evaluate(self, base_pts):
        base_pts = np.asarray(base_pts, float)
        if self.closed_form is not None:
            return np.asarray(self.closed_form(base_pts), float)
        interp = self.__dict__.get("_interp")
        if interp is None:
            interp = RegularGridInterpolator(self.grid.axes, self.values, bounds_error=False, fill_value=None)
            object.__setattr__(self, "_interp", interp)
        flat = base_pts.reshape(-1, self.grid.n_space + 1)
        return interp(flat).reshape(base_pts.shape[:-1])

    def lift(self, base_pts):
        """``F(t, x') = (t, x', f(t, x'))``."""
        base_pts = np.asarray(base_pts, float)
        return np.concatenate([base_pts, self.evaluate(base_pts)[..., None]], axis=-1)

    def sample_points(self):
        """All graph samples as points of ``R^{n+1}``, shape ``(N, n+1)``."""
        base = self.grid.points().reshape(-1, self.grid.n_space + 1)
        return np.column_stack([base, self.values.reshape(-1)])

    def vertical_offset(self, pts):
        """``x_n - f(t, x')`` for ambient points."""
        pts = np.asarray(pts, float)
        return pts[..., -1] - self.evaluate(pts[..., :-1])

    def measured_lip(self, max_lag=8):
        """Largest Lip(1/2,1) quotient over sampled pairs with index lags up to ``max_lag``."""
        v = self.values
        steps = self.grid.steps
        best = 0.0
        for ax in range(v.ndim):
            for lag in range(1, min(max_lag, v.shape[ax] - 1) + 1):
                a = np.take(v, np.arange(lag, v.shape[ax]), axis=ax)
                b = np.take(v, np.arange(0, v.shape[ax] - lag), axis=ax)
                h = lag * steps[ax]
                denom = np.sqrt(h) if ax == 0 else h
                best = max(best, float(np.max(np.abs(a - b))) / denom)
        return best

    def with_values(self, values, b1=None, name=None):
        return SampledGraph(self.grid, values, self.b1 if b1 is None else b1, self.b2,
                            closed_form=None, name=name or self.name, spec={})


# ---------------------------------------------------------------- distances

def _check_window(g, pts, window):
    pts = np.atleast_2d(pts)
    (t0, t1), *sp = g.grid.box
    t_out = np.maximum(0, np.maximum(t0 - pts[:, 0], pts[:, 0] - t1))
    s_out = np.zeros(len(pts))
    for d, (a, b) in enumerate(sp, start=1):
        s_out = np.maximum(s_out, np.maximum(0, np.maximum(a - pts[:, d], pts[:, d] - b)))
    off = np.sqrt(t_out) + s_out
    if np.any(off > window):
        bad = pts[np.argmax(off)]
        raise OutOfWindowError(f"point {tuple(bad)} lies {off.max():.3g} outside the graph box (window {window})")


def dist_to_graph(p, g, window=0.0, refine=True):
    """Parabolic distance from ``p`` (or an array of points) to the graph of ``g``.

    Samples are searched exactly by branch and bound; with ``refine`` the best
    sample is polished by a continuous local minimisation over the graph.
    Points farther than ``window`` outside the graph's base box raise
    OutOfWindowError.
    """
    pts = _as_coords(p)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != g.n + 1:
        raise DimensionError(f"point dimension {pts.shape[1] - 1} != graph dimension {g.n}")
    _check_window(g, pts, window)
    d = g.index().box_distance(pts, pts)
    if refine:
        d = np.array([_refine(g, q, dq) for q, dq in zip(pts, d)])
    return float(d[0]) if single else d


def _refine(g, p, d0):
    if d0 == 0.0:
        return 0.0
    # start from the vertical projection and the best sample neighbourhood
    lo = np.array([a for a, _ in g.grid.box])
    hi = lo + np.array(g.grid.steps) * (np.array(g.grid.shape) - 1)
    base = np.clip(p[:-1], lo, hi)

    def obj(y):
        q = g.lift(np.clip(y, lo, hi)[None, :])[0]
        return para_dist(p, q)

    best = min(d0, obj(base))
    scale = np.array([max(best, g.delta) ** 2] + [max(best, g.delta)] * (g.n - 1))
    starts = [base]
    for s in (-0.5, 0.5):
        starts.append(base + s * scale * np.r_[1.0, np.zeros(g.n - 1)])
    for y0 in starts:
        res = optimize.minimize(lambda z: obj(base + z * scale), (y0 - base) / scale,
                                method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000})
        best = min(best, float(res.fun))
    return best


def fine_graph_distance(g, pts, nodes=257):
    """Accurate point-to-graph distance below the sample spacing.

    For curves over time (``n == 1``) the candidates ``s = t +/- u^2`` with
    ``u`` on a uniform grid in ``[0, |x - f(t)|]`` are scanned and the best
    node is rescanned locally.  Higher dimensions use ``dist_to_graph`` with
    continuous refinement.
    """
    pts = np.atleast_2d(np.asarray(pts, float))
    if g.n != 1:
        return dist_to_graph(pts, g, window=np.inf, refine=True)
    t, x = pts[:, 0], pts[:, 1]
    D = np.abs(x - g.evaluate(t[:, None]))
    best = D.copy()
    u = np.linspace(0.0, 1.0, nodes)[None, :] * D[:, None]
    width = D / (nodes - 1)
    for sign in (-1.0, 1.0):
        s = t[:, None] + sign * u ** 2
        val = np.abs(x[:, None] - g.evaluate(s[..., None])) + u
        j = np.argmin(val, axis=1)
        best = np.minimum(best, val[np.arange(len(t)), j])
        uc = u[np.arange(len(t)), j]
        u2 = np.clip(uc[:, None] + np.linspace(-1, 1, 33)[None, :] * width[:, None], 0, None)
        s2 = t[:, None] + sign * u2 ** 2
        val2 = np.abs(x[:, None] - g.evaluate(s2[..., None])) + u2
        best = np.minimum(best, val2.min(axis=1))
    return best


def graph_box_distance(g, lo, hi, index_lo=None, index_hi=None, cap=None):
    """Distance from boxes ``[lo, hi]`` of ``R^{n+1}`` to the graph samples."""
    return g.index().box_distance(lo, hi, index_lo, index_hi, cap)


# ---------------------------------------------------------------- measure

def surface_measure(g, ball):
    """Projected measure of ``{(t, x'): F(t, x') in ball}``.

    Counts graph samples inside the ball, each carrying the base cell measure
    ``delta**(n+1)``.
    """
    c = ball.center.as_array()
    r = ball.radius
    if c.shape[0] != g.n + 1:
        raise DimensionError("ball and graph dimensions differ")
    grid = g.grid
    lo = c[:-1] - np.array([r * r] + [r] * (g.n - 1))
    hi = c[:-1] + np.array([r * r] + [r] * (g.n - 1))
    ilo = np.clip(grid.index_of(lo), 0, grid.shape)
    ihi = np.clip(grid.index_of(hi) + 2, 0, grid.shape)
    sl = tuple(slice(a, b) for a, b in zip(ilo, ihi))
    axes = [ax[s] for ax, s in zip(grid.axes, sl)]
    if any(len(a) == 0 for a in axes):
        return 0.0
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    pts = np.concatenate([mesh, g.values[sl][..., None]], axis=-1)
    inside = para_dist(pts, c) < r
    return float(np.count_nonzero(inside)) * grid.cell_volume


def adr_check(g, centers, radii):
    """Min and max of ``sigma(B(c, r)) / r**(n+1)`` over all center/radius pairs."""
    radii = np.asarray(radii, float)
    lo_r = 4 * g.delta
    hi_r = g.grid.diameter() / 4
    if np.any(radii < lo_r * (1 - 1e-12)):
        raise ResolutionError(f"radius {radii.min()} below resolution floor {lo_r}")
    if np.any(radii > hi_r * (1 + 1e-12)):
        raise ParameterError(f"radius {radii.max()} above diam(box)/4 = {hi_r}")
    ratios = []
    for c in centers:
        c = c if isinstance(c, ParaPoint) else ParaPoint.from_array(c)
        off = abs(c.X[-1] - float(g.evaluate(np.array([(c.t,) + c.X[:-1]]))[0]))
        if off > 2 * g.delta:
            raise ParameterError(f"center {c} is not on the graph (offset {off:.3g})")
        for r in radii:
            ratios.append(surface_measure(g, ParaBall(c, float(r))) / r ** (g.n + 1))
    ratios = np.array(ratios)
    return {"min": float(ratios.min()), "max": float(ratios.max()), "ratios": ratios.tolist()}
