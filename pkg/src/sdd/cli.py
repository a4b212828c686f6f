"""Command line entry point: ``sdd learn``, ``sdd clo`` and ``sdd instance``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from math import comb
from pathlib import Path

import numpy as np

from . import experiments as ex
from .cumulative import certificate, empirical_risk, run_cumulative
from .errors import SDDError
from .instances import (
    instance_bundle,
    load_bundle,
    make_example1,
    make_grid_clo,
    make_hypercube,
    path_profiles,
    pispp_brute_check,
    random_3sat,
    read_dimacs,
    sat_to_pispp,
)
from .oracles import dimension_dir, reachable_optima
from .priors import Ellipsoid


class CliError(Exception):
    pass


# ---------------------------------------------------------------- output helpers


def write_csv(path: Path, rows: list[dict], fields: list[str]) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    path.write_text(buf.getvalue())


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"]


def svg_line_chart(series: dict, title: str, xlabel: str, ylabel: str, width: int = 480, height: int = 320) -> str:
    """Minimal SVG line chart; ``series`` maps a name to ``(xs, ys)``."""
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys)]
    x0, x1 = min(p[0] for p in pts), max(p[0] for p in pts)
    y0, y1 = min(0.0, min(p[1] for p in pts)), max(p[1] for p in pts)
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    ml, mr, mt, mb = 60, 20, 30, 45

    def sx(x):
        return ml + (x - x0) / (x1 - x0) * (width - ml - mr)

    def sy(y):
        return height - mb - (y - y0) / (y1 - y0) * (height - mt - mb)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{title}</text>',
        f'<line x1="{ml}" y1="{sy(y0):.1f}" x2="{width - mr}" y2="{sy(y0):.1f}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{height - mb}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 8}" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" transform="rotate(-90 14 {height / 2:.1f})">{ylabel}</text>',
    ]
    for v in np.linspace(y0, y1, 5):
        out.append(f'<text x="{ml - 5}" y="{sy(v) + 4:.1f}" text-anchor="end">{v:.3g}</text>')
    for v in sorted({p[0] for p in pts}):
        out.append(f'<text x="{sx(v):.1f}" y="{height - mb + 15}" text-anchor="middle">{v:g}</text>')
    for k, (name, (xs, ys)) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        path = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{path}"/>')
        out.append(f'<text x="{width - mr - 5}" y="{mt + 14 * (k + 1)}" text-anchor="end" fill="{color}">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _outdir(path: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# ---------------------------------------------------------------- learn


def _uniform_ellipsoid(prior: Ellipsoid, rng: np.random.Generator, n: int) -> np.ndarray:
    R = prior.sqrt_shape
    z = rng.standard_normal((n, prior.d))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    z *= rng.uniform(size=(n, 1)) ** (1.0 / prior.d)
    return prior.center + z @ R.T


def _learn_bundle_trial(seed: int, lp, prior, n: int, n_fresh: int, delta: float) -> dict:
    rng = np.random.default_rng(seed)
    costs = _uniform_ellipsoid(prior, rng, n)
    res = run_cumulative(lp, prior, costs)
    risk = empirical_risk(lp, prior, res.final_dataset, _uniform_ellipsoid(prior, rng, n_fresh))
    cert = certificate(max(n, 1), res.t_size, delta)
    return {"seed": seed, "n": n, "t_size": res.t_size, "d_size": len(res.final_dataset), "bound": cert.bound_T, "measured_risk": risk}


def cmd_learn(args) -> int:
    seeds = [args.seed + k for k in range(args.trials)]
    summary: dict = {}
    if args.instance:
        try:
            lp, prior, meta = load_bundle(Path(args.instance).read_text())
        except (OSError, ValueError, TypeError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read instance {args.instance}: {exc}") from exc
        if not isinstance(prior, Ellipsoid):
            raise CliError("sampling from an instance file needs an ellipsoid prior")
        rows = [_learn_bundle_trial(s, lp, prior, args.n, args.nfresh, args.delta) for s in seeds]
        summary["family"] = meta.get("family", "bundle")
    else:
        d = args.d if args.d is not None else args.dstar
        n = ex.lower_bound_n(args.dstar, args.eps) if args.lower_bound else args.n
        rows = ex.run_trials(ex.hypercube_trial, seeds, args.dstar, d, args.eps, n, args.nfresh, args.delta)
        summary.update(family="hypercube", d_star=args.dstar, d=d, epsilon=args.eps)
        if args.lower_bound:
            frac = float(np.mean([r["measured_risk"] > args.eps for r in rows]))
            summary["fraction_risk_above_eps"] = frac
            print(f"n={n} trials={len(rows)} fraction with risk > {args.eps}: {frac:.3f}")
        first = make_hypercube(args.dstar, d, args.eps)
        res = run_cumulative(first.lp, first.prior, first.sample_costs(np.random.default_rng(seeds[0]), n))
        summary["first_trial"] = {
            "compression": res.to_dict(),
            "certificate": certificate(max(n, 1), res.t_size, args.delta, args.dstar).to_dict(),
        }
    exceed = float(np.mean([r["measured_risk"] > r["bound"] for r in rows])) if rows else 0.0
    summary.update(trials=len(rows), seed=args.seed, fraction_risk_above_bound=exceed)
    summary["mean_t_size"], _ = ex.mean_ci90([r["t_size"] for r in rows])
    summary["mean_risk"], summary["ci90_risk"] = ex.mean_ci90([r["measured_risk"] for r in rows])
    out = _outdir(args.out)
    if out is not None:
        write_csv(out / "learn_trials.csv", rows, ["seed", "n", "t_size", "d_size", "bound", "measured_risk"])
        write_json(out / "learn_summary.json", summary)
    if not args.lower_bound:
        print(f"trials={len(rows)} mean|T|={summary['mean_t_size']:.3f} mean risk={summary['mean_risk']:.4f} risk>bound fraction={exceed:.3f}")
    return 0


# ---------------------------------------------------------------- clo


def cmd_clo(args) -> int:
    methods = ("full", "compressed") if args.method == "both" else (args.method,)
    n_train = tuple(sorted(set(args.ntrain)))
    settings = ex.CloSettings(
        g=args.grid, p=args.p, n_stage1=args.nstage1, n_train=n_train, n_test=args.ntest,
        eta0=args.eta0, epochs=args.epochs, methods=methods,
    )
    seeds = [args.seed + k for k in range(args.trials)]
    trials = ex.run_trials(ex.clo_trial, seeds, settings)
    rows = [r for t in trials for r in t["rows"]]
    d_star = trials[0]["d_star"] if trials else None
    summary = {"seed": args.seed, "trials": len(trials), "d_star_oracle": d_star, "methods": []}
    series = {}
    for m in methods:
        xs, ys = [], []
        for n in n_train:
            vals = [r["test_spo_risk"] for r in rows if r["method"] == m and r["n_train"] == n]
            mean, half = ex.mean_ci90(vals)
            summary["methods"].append({"method": m, "n_train": n, "mean_test_spo_risk": mean, "ci90": half})
            xs.append(n)
            ys.append(mean)
        series[m] = (xs, ys)
    dims = [t["t_learned"] for t in trials]
    summary["t_learned_mean"], summary["t_learned_ci90"] = ex.mean_ci90(dims)
    summary["t_learned_matches_oracle"] = int(sum(t == d_star for t in dims))
    if args.verify:
        inst, V, _, _ = ex.grid_setup(args.grid, args.p)
        checks = {
            "vertex_count": len(V) == comb(2 * (args.grid - 1), args.grid - 1),
            "oracle_dstar_consistent": d_star == dimension_dir(reachable_optima(inst.lp, inst.prior, V)),
            "learned_dim_bounded": all(t <= d_star for t in dims),
        }
        summary["verify"] = checks
        if not all(checks.values()):
            raise CliError(f"verification failed: {checks}")
    out = _outdir(args.out)
    if out is not None:
        write_csv(out / "clo_trials.csv", rows, ["seed", "n_train", "method", "t_learned", "test_spo_risk"])
        trace = [{"seed": t["seed"], "n_disc": j + 1, "t_learned": v} for t in trials for j, v in enumerate(t["dims"])]
        write_csv(out / "clo_learned_dim.csv", trace, ["seed", "n_disc", "t_learned"])
        write_json(out / "clo_summary.json", summary)
        if len(n_train) > 1:
            (out / "clo_risk.svg").write_text(svg_line_chart(series, "Test SPO risk", "n_train", "risk"))
        if trials and trials[0]["dims"]:
            nd = len(trials[0]["dims"])
            mean_dims = np.mean([t["dims"] for t in trials], axis=0)
            (out / "clo_learned_dim.svg").write_text(
                svg_line_chart({"t": (list(range(1, nd + 1)), list(mean_dims))}, "Learned dimension", "n_disc", "dim")
            )
    for s in summary["methods"]:
        print(f"{s['method']:>10} n_train={s['n_train']:<5} risk={s['mean_test_spo_risk']:.4f} +/- {s['ci90']:.4f}")
    print(f"oracle d*={d_star} learned t mean={summary['t_learned_mean']:.2f}")
    return 0


# ---------------------------------------------------------------- instance


def cmd_instance(args) -> int:
    kind = args.kind
    bundle = None
    if kind == "hypercube":
        h = make_hypercube(args.dstar, args.d if args.d is not None else args.dstar, args.eps)
        bundle = instance_bundle(h.lp, h.prior, "hypercube", {"d_star": h.d_star, "d": h.d, "epsilon": h.epsilon}, h.d_star)
        if args.oracle_dstar:
            print(f"oracle d*={dimension_dir(reachable_optima(h.lp, h.prior, h.vertices()))}")
    elif kind == "grid":
        g = make_grid_clo(args.g, args.p)
        V = g.vertices()
        d_star = dimension_dir(reachable_optima(g.lp, g.prior, V)) if args.oracle_dstar else None
        bundle = instance_bundle(g.lp, g.prior, "grid", {"g": g.g, "p": g.p, "corridor": sorted(g.corridor)}, d_star)
        print(f"grid g={g.g} d={g.d} vertices={len(V)}" + (f" oracle d*={d_star}" if d_star is not None else ""))
    elif kind == "example1":
        e = make_example1(args.eps)
        bundle = instance_bundle(e.lp, e.prior, "example1", {"epsilon": e.epsilon}, None)
    elif kind == "pispp":
        if args.cnf:
            try:
                formula = read_dimacs(Path(args.cnf).read_text())
            except (OSError, ValueError) as exc:
                raise CliError(f"cannot read {args.cnf}: {exc}") from exc
        else:
            formula = random_3sat(args.nvars, args.nclauses, np.random.default_rng(args.seed))
        inst = sat_to_pispp(formula, args.eta)
        prof = path_profiles(inst)
        print(f"pispp n={inst.n_vars} m={inst.n_clauses} nodes={len(inst.nodes)} arcs={len(inst.arcs)} paths={sum(prof.values())} budget={inst.budget:g}")
        if args.check:
            ok = pispp_brute_check(inst, formula)
            print(f"satisfiable={formula.is_satisfiable()} equivalence={'holds' if ok else 'FAILS'}")
            if not ok:
                return 1
        if args.out:
            write_json(Path(args.out), {
                "nodes": list(inst.nodes),
                "arcs": [list(a) for a in inst.arcs],
                "length": inst.length.tolist(),
                "kappa": inst.kappa.tolist(),
                "budget": inst.budget,
                "required_arc": inst.required_arc,
                "metadata": {"family": "pispp", "n_vars": inst.n_vars, "n_clauses": inst.n_clauses, "nondegenerate": False},
            })
        return 0
    if args.out and bundle is not None:
        write_json(Path(args.out), bundle)
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdd", description="Decision-sufficient dataset discovery for LPs.")
    sub = ap.add_subparsers(dest="command", required=True)

    lp = sub.add_parser("learn", help="cumulative learning with certificate")
    lp.add_argument("--family", choices=["hypercube"], default="hypercube")
    lp.add_argument("--instance", help="instance bundle JSON (ellipsoid prior, uniform costs)")
    lp.add_argument("--dstar", type=int, default=6)
    lp.add_argument("--d", type=int, default=None)
    lp.add_argument("--eps", type=float, default=0.1)
    lp.add_argument("--n", type=int, default=500)
    lp.add_argument("--nfresh", type=int, default=2000)
    lp.add_argument("--delta", type=float, default=0.05)
    lp.add_argument("--trials", type=int, default=1)
    lp.add_argument("--seed", type=int, default=0)
    lp.add_argument("--lower-bound", action="store_true", help="use n = floor((d*-1)/(8 eps))")
    lp.add_argument("--out")
    lp.set_defaults(func=cmd_learn)

    cp = sub.add_parser("clo", help="two-stage contextual pipeline on the grid")
    cp.add_argument("--grid", type=int, default=5)
    cp.add_argument("--p", type=int, default=5)
    cp.add_argument("--ntrain", type=int, nargs="+", default=[300])
    cp.add_argument("--ntest", type=int, default=2000)
    cp.add_argument("--nstage1", type=int, default=300)
    cp.add_argument("--trials", type=int, default=10)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--eta0", type=float, default=0.01)
    cp.add_argument("--epochs", type=int, default=20)
    cp.add_argument("--method", choices=["full", "compressed", "both"], default="both")
    cp.add_argument("--verify", action="store_true")
    cp.add_argument("--out")
    cp.set_defaults(func=cmd_clo)

    ip = sub.add_parser("instance", help="generate or check instances")
    ip.add_argument("kind", choices=["hypercube", "grid", "example1", "pispp"])
    ip.add_argument("--dstar", type=int, default=4)
    ip.add_argument("--d", type=int, default=None)
    ip.add_argument("--eps", type=float, default=0.1)
    ip.add_argument("--g", type=int, default=5)
    ip.add_argument("--p", type=int, default=5)
    ip.add_argument("--cnf")
    ip.add_argument("--nvars", type=int, default=3)
    ip.add_argument("--nclauses", type=int, default=4)
    ip.add_argument("--eta", type=float, default=0.5)
    ip.add_argument("--seed", type=int, default=0)
    ip.add_argument("--check", action="store_true")
    ip.add_argument("--oracle-dstar", action="store_true")
    ip.add_argument("--out")
    ip.set_defaults(func=cmd_instance)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CliError, SDDError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
