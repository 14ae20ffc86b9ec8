"""Command-line experiment driver.

    parabolic-cme run --stage NAME [--config FILE] [--graph KIND] [--data KIND] [--out DIR]
    parabolic-cme NAME [same flags]             (NAME is any stage)
    parabolic-cme compare A.json B.json

Stages write ``<out>/<stage>.json`` (and CSV tables where relevant).  Exit
status: 0 when every hard assertion holds, 1 when one fails, 2 on usage or
configuration errors.
"""

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exceptions import ConfigError, ParabolicError

STAGES = ("cubes", "whitney", "corona", "regdist", "lift", "bmo", "solve", "cme", "pack")

DEFAULTS = {
    "graph": {"n": 2, "delta": 1 / 64, "box": [[0.0, 0.25], [-1.0, 1.0]], "kind": "flat", "params": {}},
    "eta": 1 / 16,
    "alpha": [7 / 8, 31 / 32],
    "tree": {"k_min": 2, "k_max": 4},
    "corona": "single-regime",
    "whitney": {"box": [[0.0, 0.015625], [-0.125, 0.125], [0.25, 0.5]], "max_depth": 4},
    "regdist": {"h": "distance_to_origin", "box": [[-0.0625, 0.0625], [-0.25, 0.25]], "k_max": 8},
    "lift": {"delta": 1 / 32, "time_box": [-16.0, 17.0], "depth": 1, "amplitude": 0.002, "M0": 4.0,
             "points": 2000},
    "bmo": {"samples": 256},
    "solve": {"h": 1 / 64, "T": 0.25, "stride": 4, "space_box": [[-1.0, 1.0], [-1.0, 1.0]], "side": 1,
              "data": {"kind": "step_x1", "params": {"width": 0.125}}},
    "cme": {"centers": [[t, x] for t in (0.08, 0.125, 0.17) for x in (-0.25, 0.0, 0.25)],
            "radii": [0.125, 0.1875, 0.25]},
    "pack": {"k0": 4, "depth": 4, "t0": 0.125, "x0": 0.0, "delta": 1 / 1024},
    "seed": 0,
}

GRAPH_PRESETS = {
    "flat": {"kind": "flat", "params": {}},
    "sine": {"kind": "sine", "params": {"amplitude": 0.1, "frequency": float(np.pi), "time_amplitude": 0.05,
                                        "time_frequency": float(2 * np.pi)}},
    "multiscale": {"kind": "multiscale", "params": {"amplitude": 0.05, "frequency": float(np.pi),
                                                    "time_amplitude": 0.02, "time_frequency": float(2 * np.pi)}},
}


# ---------------------------------------------------------------- config

def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(where, "unknown field")
        if isinstance(base[k], dict) and isinstance(v, dict) and k != "params":
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = v
    return out


def load_config(path=None, graph=None, data=None, seed=None):
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        text = Path(path).read_text()
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}", exc.msg) from None
        if not isinstance(user, dict):
            raise ConfigError("config", "top level must be an object")
        cfg = _merge(cfg, user)
    if graph:
        if graph not in GRAPH_PRESETS:
            raise ConfigError("graph", f"unknown preset {graph!r}")
        cfg["graph"].update(copy.deepcopy(GRAPH_PRESETS[graph]))
    if data:
        cfg["solve"]["data"] = {"kind": data, "params": {}}
    if seed is not None:
        cfg["seed"] = int(seed)
    _validate(cfg)
    return cfg


def _validate(cfg):
    eta = cfg["eta"]
    if not isinstance(eta, (int, float)) or not 0 < eta < 1:
        raise ConfigError("eta", "must lie in (0, 1)")
    for i, a in enumerate(cfg["alpha"]):
        if not 7 / 8 - 1e-12 <= a <= 31 / 32 + 1e-12:
            raise ConfigError(f"alpha[{i}]", "must lie in [7/8, 31/32]")
    from .caloric import HeatData

    if cfg["solve"]["data"].get("kind") not in HeatData.KINDS:
        raise ConfigError("solve.data.kind", f"must be one of {HeatData.KINDS}")
    if cfg["solve"]["side"] not in (1, -1):
        raise ConfigError("solve.side", "must be 1 or -1")


# ---------------------------------------------------------------- stage helpers

def _graph(cfg):
    from .graphs import graph_from_spec

    return graph_from_spec(cfg["graph"])


def _tree(cfg, g):
    from .dyadic import build_cubes_on_graph

    return build_cubes_on_graph(g, cfg["tree"]["k_min"], cfg["tree"]["k_max"])


def _corona(cfg, tree):
    from .corona import corona_from_json, single_regime_corona

    c = cfg["corona"]
    if c == "single-regime":
        return single_regime_corona(tree, cfg["eta"])
    if not isinstance(c, dict):
        raise ConfigError("corona", "must be \"single-regime\" or an object")
    return corona_from_json(c, tree)


def _solve(cfg, g):
    from .caloric import HeatData, solve_heat

    s = cfg["solve"]
    return solve_heat(g, s["space_box"], s["h"], s["T"], HeatData(**s["data"]), s["side"], stride=s["stride"])


def stage_cubes(cfg, out):
    from .dyadic import verify_cube_axioms

    tree = _tree(cfg, _graph(cfg))
    rep = verify_cube_axioms(tree)
    rep["cubes"] = len(tree.cubes)
    return rep, {"axioms": True}


def stage_whitney(cfg, out):
    from .whitney import ACCEPT_HIGH, ACCEPT_LOW, WhitneyDecomposition

    g = _graph(cfg)
    w = cfg["whitney"]
    est = WhitneyDecomposition(max_depth=w["max_depth"]).fit(g, w["box"])
    c = est.cubes_
    from .pargeo import graph_box_distance
    from .whitney import dilate_box

    lo4, hi4 = dilate_box(c.lo, c.side, 4.0)
    d4 = graph_box_distance(g, lo4, hi4)
    rep = est.report()
    ok = bool(np.all(d4 >= ACCEPT_LOW * c.diam * (1 - 1e-12)) and np.all(c.dist_E <= ACCEPT_HIGH * c.diam))
    return rep, {"acceptance_inequalities": ok}


def stage_corona(cfg, out):
    from .corona import bilateral_approx_check, corona_to_json, packing_check, validate_coherent

    tree = _tree(cfg, _graph(cfg))
    c = _corona(cfg, tree)
    coh = [validate_coherent(S) for S in c.good]
    w = {q: tree[q].measure for q in tree.cubes}
    packs = {q.label(): packing_check(c, q, w) for q in tree.generation(tree.k_min)}
    bil = [bilateral_approx_check(S, c.eta, c.K, tree, max_points=500) for S in c.good[:1]]
    rep = {"corona": corona_to_json(c), "coherent": [r["coherent"] for r in coh],
           "packing": packs, "bilateral_worst": [b["worst_ratio"] for b in bil]}
    return rep, {"coherent": all(rep["coherent"]), "bilateral": all(b["passes"] for b in bil)}


def stage_regdist(cfg, out):
    from .regdist import build_H, verify_regdist_props

    r = cfg["regdist"]
    kind = r["h"]
    if kind == "constant":
        def h(p):
            return np.ones(len(p))
    elif kind == "distance_to_origin":
        def h(p):
            return np.sqrt(np.abs(p[:, 0])) + np.linalg.norm(p[:, 1:], axis=1)
    else:
        raise ConfigError("regdist.h", "must be \"constant\" or \"distance_to_origin\"")
    box = [tuple(b) for b in r["box"]]
    field = build_H(h, box, k_max=r["k_max"])
    rep = verify_regdist_props(field, per_axis=32)
    asserts = {"whitney_h": not rep["whitney"]["violations"], "lower": bool(rep["lower_ok"]),
               "upper": bool(rep["upper_ok"]), "lip": bool(rep["lip_ok"])}
    rep["whitney"]["violations"] = rep["whitney"]["violations"][:20]
    return rep, asserts


def stage_lift(cfg, out):
    from .corona import regime_all_descendants
    from .dyadic import build_cubes_on_graph
    from .graphs import sine_graph
    from . import lift

    L = cfg["lift"]
    eta = cfg["eta"]
    E = sine_graph(n=1, delta=L["delta"], box=(tuple(L["time_box"]),), time_amplitude=L["amplitude"],
                   time_frequency=float(2 * np.pi))
    tree = build_cubes_on_graph(E, 0, L["depth"])
    Q = min(tree.generation(0), key=lambda q: abs(tree[q].center[0] - 0.5))
    S = regime_all_descendants(tree, Q, depth=L["depth"])
    dF = lift.d_on_graph(E, S, tree)
    rep, asserts = {"lifts": {}}, {}
    for a in cfg["alpha"]:
        lg = lift.lift_graph(E, S, tree, eta, a, 1, dF)
        rep["lifts"][repr(a)] = lg.report
        asserts[f"lift_lip_{a:.5f}"] = bool(lg.report["lip_ok"])
        asserts[f"lift_dist_ratio_{a:.5f}"] = bool(lg.report["dG_ok"])
    psi = lift.build_psi(E, S, tree, eta, dF=dF)
    rep["psi"] = psi.report
    asserts["sandwich"] = bool(psi.report["sandwich_ok"])
    asserts["psi_pbmo"] = bool(max(psi.report["pbmo_plus"], psi.report["pbmo_minus"]) <= psi.report["pbmo_bound"])
    below = lift.check_E_below(lift.lift_graph(E, S, tree, eta, 7 / 8, 1, dF, check=False), tree)
    rep["e_below"] = below
    asserts["e_below_a"], asserts["e_below_b"] = below["a_ok"], below["b_ok"]
    clauses = lift.corona_domain_report(E, S, tree, eta, psi, M0=L["M0"], points=L["points"], seed=cfg["seed"])
    rep["clauses"] = clauses
    for k, v in clauses.items():
        if isinstance(v, dict):
            asserts[f"clause_{k}"] = bool(v["ok"])
    return rep, asserts


def stage_bmo(cfg, out):
    from .halfderiv import half_time_derivative, pbmo_norm

    g = _graph(cfg)
    D = half_time_derivative(g.values, g.grid.time_step)
    norm = pbmo_norm(D, g.grid.steps)
    M = cfg["bmo"]["samples"]
    t = np.arange(M) / M
    c = np.cos(2 * np.pi * t)
    s = half_time_derivative(c, 1 / M, "spectral", periodic=True)
    p = half_time_derivative(c, 1 / M, "pv", periodic=True)
    rep = {"pbmo_Dt_half_f": norm, "b2": g.b2, "pv_vs_spectral": float(np.abs(s - p).max())}
    return rep, {"finite": bool(np.isfinite(norm))}


def stage_solve(cfg, out):
    field = _solve(cfg, _graph(cfg))
    return dict(field.report), {"max_principle": field.report["max_principle_ok"]}


def stage_cme(cfg, out):
    from .caloric import cme_functional, write_cme_csv

    g = _graph(cfg)
    field = _solve(cfg, g)
    rows, sup, sup_t = cme_functional(field, cfg["cme"]["centers"], cfg["cme"]["radii"])
    if out is not None:
        write_cme_csv(rows, out / "cme.csv", g.n)
    rep = {"rows": rows, "sup": sup, "sup_with_time_term": sup_t, "solve": field.report}
    return rep, {"max_principle": field.report["max_principle_ok"], "finite": bool(np.isfinite(sup_t))}


def stage_pack(cfg, out):
    from .caloric import beta_table, beta_uniform_bound, packing_sum, write_beta_csv
    from .corona import all_bad_corona, packing_check, single_regime_corona
    from .dyadic import build_cubes_on_graph
    from .graphs import graph_from_spec

    p = cfg["pack"]
    g = _graph(cfg)
    field = _solve(cfg, g)
    k0, d = p["k0"], p["depth"]
    ell = 2.0 ** -k0
    spec = copy.deepcopy(cfg["graph"])
    spec.update({"delta": p["delta"], "box": [[p["t0"], p["t0"] + ell * ell]] + [[p["x0"], p["x0"] + ell]] * (g.n - 1)})
    tree = build_cubes_on_graph(graph_from_spec(spec), k0, k0 + d)
    betas = beta_table(field, tree, list(tree.cubes), cfg["eta"])
    c = single_regime_corona(tree, cfg["eta"])
    ratios = {q.label(): packing_sum(betas, tree, q)["ratio"] for q in tree.cubes}
    parts = packing_sum(betas, tree, sorted(tree.generation(k0))[0], c)
    A, qa = beta_uniform_bound(betas, tree)
    bad = all_bad_corona(tree, cfg["eta"])
    w = {q: tree[q].measure for q in tree.cubes}
    top = sorted(tree.generation(k0))[0]
    chain = [top]
    while chain[-1].k < k0 + d:
        chain.append(sorted(tree[chain[-1]].children)[0])
    fault = [packing_check(bad, q, w) for q in chain]
    if out is not None:
        write_beta_csv(betas, tree, out / "beta.csv")
    rep = {"max_packing_ratio": max(ratios.values()), "A": A, "A_cube": qa.label(),
           "fault_injection_ratios": fault, "cubes": len(tree.cubes), "top_decomposition": parts}
    linear = bool(np.allclose(np.diff(fault[::-1]), 1.0))
    return rep, {"finite": bool(np.isfinite(rep["max_packing_ratio"])), "fault_flagged": linear}


STAGE_FUNCS = {name: globals()[f"stage_{name}"] for name in STAGES}


# ---------------------------------------------------------------- output

def _plain(o):
    if isinstance(o, dict):
        return {str(k): _plain(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_plain(v) for v in o]
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, (np.floating, float)):
        v = float(o)
        return v if np.isfinite(v) else repr(v)
    if isinstance(o, np.ndarray):
        return _plain(o.tolist())
    if hasattr(o, "label"):
        return o.label()
    return o


def dump(obj, path):
    Path(path).write_text(json.dumps(_plain(obj), indent=1, sort_keys=True) + "\n")


def run_stage(name, cfg, out):
    rep, asserts = STAGE_FUNCS[name](cfg, out)
    doc = {"stage": name, "version": __version__, "config": cfg, "report": rep,
           "assertions": {k: bool(v) for k, v in asserts.items()}, "passed": all(asserts.values())}
    if out is not None:
        dump(doc, out / f"{name}.json")
    return doc


# ---------------------------------------------------------------- compare

def _numeric_leaves(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _numeric_leaves(v, f"{prefix}.{k}" if prefix else k)
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _numeric_leaves(v, f"{prefix}[{i}]")
    elif isinstance(obj, (int, float)) and not isinstance(obj, bool):
        yield prefix, float(obj)


def compare(a, b):
    """Relative drift of every numeric report entry shared by two reports of one experiment."""
    if a.get("stage") != b.get("stage"):
        raise ConfigError("compare", "reports come from different stages")
    ga, gb = dict(a["config"]["graph"]), dict(b["config"]["graph"])
    for key in ("delta",):
        ga.pop(key, None)
        gb.pop(key, None)
    if ga != gb:
        raise ConfigError("compare", "reports use different graph specs")
    la = dict(_numeric_leaves(a["report"]))
    lb = dict(_numeric_leaves(b["report"]))
    rows = {}
    for k in sorted(set(la) & set(lb)):
        x, y = la[k], lb[k]
        scale = max(abs(x), abs(y))
        rows[k] = 0.0 if scale == 0 else abs(x - y) / scale
    return {"drift": rows, "max_drift": max(rows.values()) if rows else 0.0}


# ---------------------------------------------------------------- entry point

def _parser():
    ap = argparse.ArgumentParser(prog="parabolic-cme", description="Parabolic CME experiment driver")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker cap (stages run single-process)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--graph", choices=sorted(GRAPH_PRESETS), help="graph preset")
        p.add_argument("--data", help="heat datum kind")
        p.add_argument("--print-config", action="store_true", help="print the merged configuration and exit")

    run = sub.add_parser("run", help="run one stage or all")
    run.add_argument("--stage", required=True, choices=STAGES + ("all",))
    common(run)
    for name in STAGES + ("all",):
        common(sub.add_parser(name, help=f"run the {name} stage"))
    cmp_ = sub.add_parser("compare", help="drift between two reports")
    cmp_.add_argument("a")
    cmp_.add_argument("b")
    cmp_.add_argument("--out", default=None)
    cmp_.add_argument("--threshold", type=float, default=None, help="exit 1 when max drift exceeds it")
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        if args.command == "compare":
            a = json.loads(Path(args.a).read_text())
            b = json.loads(Path(args.b).read_text())
            res = compare(a, b)
            text = json.dumps(_plain(res), indent=1, sort_keys=True)
            if args.out:
                Path(args.out).write_text(text + "\n")
            print(text)
            return 1 if args.threshold is not None and res["max_drift"] > args.threshold else 0
        stage = args.stage if args.command == "run" else args.command
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be positive")
        cfg = load_config(args.config, args.graph, args.data, args.seed)
        if args.print_config:
            print(json.dumps(_plain(cfg), indent=1, sort_keys=True))
            return 0
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        names = STAGES if stage == "all" else (stage,)
        ok = True
        for name in names:
            doc = run_stage(name, cfg, out)
            failed = [k for k, v in doc["assertions"].items() if not v]
            print(f"{name}: {'PASS' if not failed else 'FAIL ' + ', '.join(failed)}")
            ok = ok and not failed
        return 0 if ok else 1
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ParabolicError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
