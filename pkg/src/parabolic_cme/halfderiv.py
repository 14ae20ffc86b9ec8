"""Half-order time derivative, dyadic parabolic BMO and the gamma-hat Carleson functional.

Fields are arrays with time on axis 0 and the spatial axes ``x'`` after it.
The spectral method applies the multiplier ``|tau|^{1/2}``; the
principal-value method sums the kernel ``|s - t|^{-3/2}`` on the grid and
its constant is calibrated against the spectral method on a cosine.
Finite windows are extended by even reflection in time unless the input is
declared periodic.
"""

from functools import lru_cache

import numpy as np
from scipy.special import gamma, zeta
from sklearn.base import BaseEstimator, TransformerMixin

from .exceptions import ParameterError, ResolutionError

# int_R (1 - cos u) |u|^{-3/2} du
KERNEL_MASS = 2.0 * np.sqrt(2.0 * np.pi)


def _extend(g, periodic):
    return g if periodic else np.concatenate([g, g[::-1]], axis=0)


def _spectral(g, dt, periodic):
    N = g.shape[0]
    ge = _extend(g, periodic)
    tau = 2 * np.pi * np.fft.fftfreq(ge.shape[0], d=dt)
    mult = np.sqrt(np.abs(tau)).reshape((-1,) + (1,) * (g.ndim - 1))
    out = np.fft.ifft(np.fft.fft(ge, axis=0) * mult, axis=0).real
    return out[:N]


def _periodic_kernel(M, dt):
    """Kernel weights ``dt |j dt|^{-3/2}`` summed over all periodic images, lags 1..M-1."""
    j = np.arange(1, M) / M
    return dt ** -0.5 * M ** -1.5 * (zeta(1.5, j) + zeta(1.5, 1 - j))


def _pv_raw(g, dt, periodic):
    N = g.shape[0]
    ge = _extend(g, periodic)
    M = ge.shape[0]
    w = np.zeros(M)
    w[1:] = _periodic_kernel(M, dt)
    shape = (-1,) + (1,) * (g.ndim - 1)
    conv = np.fft.ifft(np.fft.fft(ge, axis=0) * np.fft.fft(w).reshape(shape), axis=0).real
    return (conv - ge * w.sum())[:N]


@lru_cache(maxsize=64)
def pv_constant(dt, samples=512):
    """Constant c with ``c * pv_sum = spectral`` on a reference cosine of period ``samples dt``.

    The continuum value is ``-1 / (2 sqrt(2 pi))``; the calibrated value
    absorbs the grid error of the singular cell.
    """
    t = np.arange(samples) * dt
    g = np.cos(2 * np.pi * t / (samples * dt))
    s = _spectral(g, dt, True)
    p = _pv_raw(g, dt, True)
    return float(np.dot(s, p) / np.dot(p, p))


def half_time_derivative(g, dt, method="spectral", periodic=False, t=None):
    """``D_t^{1/2} g`` along axis 0 with time step ``dt``."""
    g = np.asarray(g, float)
    if t is not None:
        dts = np.diff(np.asarray(t, float))
        if dts.size and np.ptp(dts) > 1e-9 * abs(dts.mean()):
            raise ParameterError("time grid is not uniform")
        dt = float(dts.mean())
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if method == "spectral":
        return _spectral(g, dt, periodic)
    if method == "pv":
        return pv_constant(float(dt)) * _pv_raw(g, dt, periodic)
    raise ParameterError(f"unknown method {method!r}")


# ---------------------------------------------------------------- P-BMO

def pbmo_norm(g, steps, min_side=1, return_cube=False):
    """Max mean absolute deviation over parabolic dyadic cubes of the sample grid.

    ``steps`` are the grid spacings ``(dt, dx_1, ...)``.  A cube with ``L``
    samples per spatial axis spans ``round((L dx)^2 / dt)`` time samples;
    in the time-only case cubes are dyadic runs of samples.
    """
    g = np.asarray(g, float)
    steps = list(steps)
    if len(steps) != g.ndim:
        raise ParameterError("one step per axis expected")
    dt = steps[0]
    best, where = 0.0, None
    L = min_side
    while True:
        if g.ndim == 1:
            Lt, Ls = L, []
        else:
            Ls = [L] * (g.ndim - 1)
            Lt = int(round((L * steps[1]) ** 2 / dt))
        sides = [Lt] + Ls
        if Lt < 1 or any(s > n for s, n in zip(sides, g.shape)):
            if Lt < 1:
                L *= 2
                continue
            break
        counts = [n // s for s, n in zip(sides, g.shape)]
        trimmed = g[tuple(slice(0, c * s) for c, s in zip(counts, sides))]
        shape = [v for c, s in zip(counts, sides) for v in (c, s)]
        blocks = trimmed.reshape(shape)
        inner = tuple(range(1, 2 * g.ndim, 2))
        mean = blocks.mean(axis=inner, keepdims=True)
        mad = np.abs(blocks - mean).mean(axis=inner)
        i = np.unravel_index(int(np.argmax(mad)), mad.shape)
        if mad[i] > best:
            best, where = float(mad[i]), (tuple(sides), tuple(int(v) for v in i))
        L *= 2
    return (best, where) if return_cube else best


# ---------------------------------------------------------------- gamma-hat and nu-tilde

def _as_eval(H):
    if callable(H):
        return H
    raise ParameterError("H must be callable on base points; wrap grids with regdist.GridField")


def _ball_samples(nb, samples):
    """Unit-ball quadrature nodes (parabolic ball in (t, x')) with equal cell weights."""
    ts = (np.arange(2 * samples) + 0.5) / samples - 1.0
    xs = (np.arange(samples) + 0.5) / samples * 2 - 1.0
    mesh = np.stack(np.meshgrid(ts, *[xs] * (nb - 1), indexing="ij"), axis=-1).reshape(-1, nb)
    inside = np.sqrt(np.abs(mesh[:, 0])) + np.linalg.norm(mesh[:, 1:], axis=1) < 1
    # equal weights normalised to the exact volume 4 V_m / ((m + 1)(m + 2)), m = nb - 1,
    # so the cusp of the ball at t = +-1 does not bias coarse rules
    m = nb - 1
    vm = np.pi ** (m / 2) / gamma(m / 2 + 1)
    return mesh[inside], 4 * vm / ((m + 1) * (m + 2)) / int(inside.sum())


def gamma_hat(H, center, r, window=None, samples=16, affine_in_t=False):
    """Least-squares flatness of ``H`` on ``B(center, r)`` against functions affine in ``x'``."""
    H = _as_eval(H)
    center = np.asarray(center, float)
    nb = center.size
    if window is not None:
        lo = np.array([a for a, _ in window])
        hi = np.array([b for _, b in window])
        ext = np.array([r * r] + [r] * (nb - 1))
        if np.any(center - ext < lo - 1e-12) or np.any(center + ext > hi + 1e-12):
            raise ParameterError("ball escapes the window")
    nodes, w = _ball_samples(nb, samples)
    scale = np.array([r * r] + [r] * (nb - 1))
    pts = center + nodes * scale
    vals = H(pts)
    cols = [np.ones(len(pts))] + [pts[:, a] - center[a] for a in range(1, nb)]
    if affine_in_t:
        cols.append(pts[:, 0] - center[0])
    A = np.stack(cols, axis=1)
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = vals - A @ coef
    cell = w * np.prod(scale)
    integral = np.sum((resid / r) ** 2) * cell
    return float(np.sqrt(integral / r ** (nb + 1)))


def carleson_nu(H, center, rho, r_min, per_octave=8, samples=8, ball_samples=12, window=None):
    """Discrete ``nu(center, rho)`` and the ratio ``nu / rho^{n+1}``.

    The r-integral uses ``per_octave`` log-spaced levels between ``r_min``
    and ``rho`` (weights ``ln 2 / per_octave``); the outer integral uses
    ``samples`` nodes per unit axis of the ball.
    """
    H = _as_eval(H)
    center = np.asarray(center, float)
    nb = center.size
    J = int(np.floor(per_octave * np.log2(rho / r_min)))
    if J < 3:
        raise ResolutionError(f"only {J} r-levels between r_min and rho")
    radii = rho * 2.0 ** (-(np.arange(J) + 0.5) / per_octave)
    nodes, w = _ball_samples(nb, samples)
    scale = np.array([rho * rho] + [rho] * (nb - 1))
    outer = center + nodes * scale
    cell = w * np.prod(scale)
    dr = np.log(2) / per_octave
    total = 0.0
    for p in outer:
        for r in radii:
            total += gamma_hat(H, p, r, samples=ball_samples) ** 2 * cell * dr
    return total, total / rho ** (nb + 1)


class HalfTimeDerivative(BaseEstimator, TransformerMixin):
    """Transformer applying ``D_t^{1/2}`` along axis 0 of each sample."""

    def __init__(self, dt=1.0, method="spectral", periodic=False):
        self.dt = dt
        self.method = method
        self.periodic = periodic

    def fit(self, X=None, y=None):
        if self.method not in ("spectral", "pv"):
            raise ParameterError(f"unknown method {self.method!r}")
        self.constant_ = pv_constant(float(self.dt)) if self.method == "pv" else 1.0
        return self

    def transform(self, X):
        from sklearn.utils.validation import check_is_fitted

        check_is_fitted(self, "constant_")
        return half_time_derivative(X, self.dt, self.method, self.periodic)
