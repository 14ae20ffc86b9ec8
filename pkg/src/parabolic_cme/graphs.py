"""Graph generators and the JSON graph specification format.

Graph spec (JSON object)::

    {"n": 2, "delta": 0.03125, "box": [[t0, t1], [a1, b1]],
     "kind": "flat" | "sine" | "multiscale" | "table",
     "params": {...}, "values": [...]}

``box`` lists the base axes time first.  For ``kind == "table"``, ``values``
is the flat row-major list of heights over the base grid with index order
``(t, x_1, ..., x_{n-1})``, the last index varying fastest.
"""

import numpy as np

from .exceptions import ConfigError
from .pargeo import ParaGrid, SampledGraph


def _x1(base):
    return base[..., 1] if base.shape[-1] > 1 else np.zeros(base.shape[:-1])


def flat_graph(n=1, delta=1 / 64, box=None, height=0.0):
    box = box or default_box(n)
    return SampledGraph.from_function(lambda b: np.full(b.shape[:-1], float(height)), n, delta, box,
                                      b1=0.0, b2=0.0, name="flat",
                                      spec={"kind": "flat", "params": {"height": height}})


def sine_graph(n=1, delta=1 / 64, box=None, amplitude=0.0, frequency=1.0,
               time_amplitude=0.0, time_frequency=1.0):
    """``f = A sin(w x_1) + B sin(w_t t)``; the x_1 term needs ``n >= 2``."""
    box = box or default_box(n)
    if n == 1 and amplitude:
        raise ConfigError("params.amplitude", "spatial oscillation needs n >= 2")
    A, w, B, wt = float(amplitude), float(frequency), float(time_amplitude), float(time_frequency)

    def f(b):
        return A * np.sin(w * _x1(b)) + B * np.sin(wt * b[..., 0])

    # |sin a - sin b| <= sqrt(2|a-b|); D_t^{1/2} sin(wt) = sqrt(w) sin(wt + pi/4)
    b1 = A * w + B * np.sqrt(2 * wt)
    b2 = 2 * B * np.sqrt(wt)
    params = dict(amplitude=A, frequency=w, time_amplitude=B, time_frequency=wt)
    return SampledGraph.from_function(f, n, delta, box, b1=b1, b2=b2, name="sine",
                                      spec={"kind": "sine", "params": params})


def multiscale_graph(n=1, delta=1 / 64, box=None, amplitude=0.0, frequency=1.0,
                     time_amplitude=0.05, time_frequency=1.0, levels=3):
    """Lacunary sum ``sum_j 2^-j [A sin(2^j w x_1) + B sin(4^j w_t t)]``."""
    box = box or default_box(n)
    if n == 1 and amplitude:
        raise ConfigError("params.amplitude", "spatial oscillation needs n >= 2")
    A, w, B, wt, J = float(amplitude), float(frequency), float(time_amplitude), float(time_frequency), int(levels)

    def f(b):
        out = np.zeros(b.shape[:-1])
        for j in range(J):
            out += 2.0 ** -j * (A * np.sin(2 ** j * w * _x1(b)) + B * np.sin(4 ** j * wt * b[..., 0]))
        return out

    b1 = J * (A * w + B * np.sqrt(2 * wt))
    b2 = 2 * J * B * np.sqrt(wt)
    params = dict(amplitude=A, frequency=w, time_amplitude=B, time_frequency=wt, levels=J)
    return SampledGraph.from_function(f, n, delta, box, b1=b1, b2=b2, name="multiscale",
                                      spec={"kind": "multiscale", "params": params})


def default_box(n):
    return ((-1.0, 1.0),) + ((-2.0, 2.0),) * (n - 1)


_KINDS = {"flat": flat_graph, "sine": sine_graph, "multiscale": multiscale_graph}


def graph_from_spec(spec):
    """Build a SampledGraph from a parsed JSON graph spec."""
    if not isinstance(spec, dict):
        raise ConfigError("graph", "must be an object")
    for key in ("n", "delta", "box", "kind"):
        if key not in spec:
            raise ConfigError(f"graph.{key}", "missing")
    n = spec["n"]
    if n not in (1, 2, 3):
        raise ConfigError("graph.n", f"unsupported dimension {n}")
    try:
        box = tuple(tuple(float(v) for v in ax) for ax in spec["box"])
    except (TypeError, ValueError):
        raise ConfigError("graph.box", "must be a list of [lo, hi] pairs") from None
    if len(box) != n:
        raise ConfigError("graph.box", f"expected {n} axes, got {len(box)}")
    delta = float(spec["delta"])
    kind = spec["kind"]
    params = spec.get("params", {}) or {}
    if kind == "table":
        grid = ParaGrid(n - 1, delta, box)
        vals = np.asarray(spec.get("values", []), dtype=float)
        if vals.size != int(np.prod(grid.shape)):
            raise ConfigError("graph.values", f"expected {int(np.prod(grid.shape))} values, got {vals.size}")
        b1 = float(params.get("b1", np.nan))
        g = SampledGraph(grid, vals.reshape(grid.shape), b1, float(params.get("b2", 0.0)), name="table",
                         spec=dict(spec))
        if not np.isfinite(b1):
            g = SampledGraph(grid, g.values, g.measured_lip(), g.b2, name="table", spec=dict(spec))
        return g
    if kind not in _KINDS:
        raise ConfigError("graph.kind", f"unknown kind {kind!r}")
    try:
        g = _KINDS[kind](n=n, delta=delta, box=box, **params)
    except TypeError as exc:
        raise ConfigError("graph.params", str(exc)) from None
    g.spec.update({"n": n, "delta": delta, "box": [list(b) for b in box]})
    return g


def graph_to_spec(g):
    spec = {"n": g.n, "delta": g.delta, "box": [list(b) for b in g.grid.box]}
    if g.spec.get("kind") in _KINDS:
        spec.update(kind=g.spec["kind"], params=g.spec.get("params", {}))
    else:
        spec.update(kind="table", params={"b1": g.b1, "b2": g.b2}, values=g.values.reshape(-1).tolist())
    return spec
