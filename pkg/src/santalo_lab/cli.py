"""Batch front end: every check as a subcommand with machine-readable output.

Exit codes: 0 all-pass, 1 an inequality violated outside error bars (for the
counterexample search the convention flips: a found violation is success),
2 validation or usage errors.  Identical config and seed give byte-identical
JSON output except for the timestamp field.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:          # Python 3.10
    import tomli as tomllib

from . import __version__
from . import bodies, brascamp, functionals, maximizer, numgrid, symmetrize
from .functionals import BSParams, bs_general, bs_pv, classical_params
from .numgrid import BoxGrid, build_grid_fn, save_grid_fn, unit_density
from .potentials import Hyperplane, PowerNormPotential, canonical


def _config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()[:16]


def _emit(args, name: str, payload: dict, rows=None, header=None) -> None:
    doc = {
        "command": name,
        "config_hash": _config_hash({k: v for k, v in vars(args).items()
                                     if k not in ("func", "out") and not callable(v)}),
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "payload": payload,
    }
    text = json.dumps(doc, sort_keys=True, indent=1, default=float)
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{name}.json").write_text(text + "\n")
        if rows is not None and args.format == "csv":
            with open(outdir / f"{name}.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                if header:
                    w.writerow(header)
                w.writerows(rows)
    print(text)


def _potential(args) -> PowerNormPotential:
    c = args.c if args.c is not None else 1.0 / args.p
    return PowerNormPotential(c, args.p, args.q, args.n)


def _phi_member(args, n: int):
    kind = args.phi
    if kind == "gaussian":
        expr = lambda pts: 0.5 * np.sum(np.atleast_2d(pts) ** 2, axis=-1)
    elif kind == "power":
        V = _potential(args)
        expr = lambda pts: V(pts)
    elif kind == "random":
        rng = np.random.default_rng(args.seed)
        expr = functionals.random_even_convex(rng, n)
    else:
        raise ValueError(f"unknown phi kind {kind!r}")
    N = args.resolution or (512 if n == 1 else 160)
    return functionals.build_member(expr, n, N=N)


# ---------------------------------------------------------------------------
# subcommand handlers (each returns an exit code)
# ---------------------------------------------------------------------------

def cmd_cm(args) -> int:
    value, branch = brascamp.cm(args.q, args.n)
    print(f"{value:.6g}  ({branch} branch)")
    _emit(args, "cm", {"q": args.q, "n": args.n, "cm": value, "branch": branch},
          rows=[[args.q, args.n, value, branch]], header=["q", "n", "C_m", "branch"])
    return 0


def cmd_spectral(args) -> int:
    res = brascamp.eigen_residual_check(args.q, args.n)
    payload = {"eigen_residuals": res}
    bad = max(res.values()) > (1e-6 if args.n == 2 else 1e-3)
    if args.n == 2:
        search = brascamp.poincare_rayleigh_search(args.q, trials=args.trials,
                                                   seed=args.seed)
        payload["rayleigh"] = search
        bad = bad or search["exceeds"] or search["attained_gap"] > 1e-4
    gap = brascamp.radial_moment_check(args.p, args.q, args.n)
    payload["radial_moment_gap"] = gap
    bad = bad or gap > 0.005 * args.n
    _emit(args, "spectral", payload)
    return 1 if bad else 0


def cmd_bl_check(args) -> int:
    V = _potential(args)
    lam = args.lam if args.lam is not None else brascamp.lambda_bound(args.p, args.q, args.n)
    rng = np.random.default_rng(args.seed)
    rows, bad = [], False
    for k in range(args.trials):
        trial = brascamp.random_even_polynomial(rng, args.n)
        out = brascamp.strong_bl_check(trial, V, lam=lam, budget=args.budget,
                                       seed=args.seed + 1 + k)
        rows.append([k, out["var"], out["dirichlet"], out["margin"], out["err"]])
        bad = bad or (out["margin"] < -out["err"])
    witness = brascamp.sharpness_witness(V, budget=args.budget, seed=args.seed)
    _emit(args, "bl-check", {"lambda": lam, "trials": args.trials,
                             "violation": bad, "sharpness": witness},
          rows=rows, header=["trial", "var", "dirichlet", "margin", "err"])
    return 1 if bad else 0


def cmd_counterexample(args) -> int:
    try:
        out = brascamp.counterexample_search(args.p, args.q, args.n)
    except brascamp.SearchFailed as e:
        _emit(args, "counterexample", {"error": str(e), "violation_found": False})
        return 1
    payload = {k: v for k, v in out.items() if k != "trial"}
    _emit(args, "counterexample", payload)
    return 0 if out["violation_found"] else 1


def cmd_bs_eval(args) -> int:
    n = args.n
    phi = _phi_member(args, n)
    if args.classical:
        rep = bs_general(phi, classical_params(n))
        rhs = (2 * np.pi) ** n
        margin = rhs - rep.value
        cls = "equality" if abs(margin) <= 3 * rep.value_err else (
            "holds" if margin > 0 else "violated")
        payload = {"mode": "classical", "report": rep.to_dict(), "rhs": rhs,
                   "margin": margin, "classification": cls}
        print(f"BS = {rep.value:.5g} +- {rep.value_err:.2g}  ((2pi)^n = {rhs:.5g})")
    else:
        V = _potential(args)
        mr = functionals.main_inequality_check(phi, args.p, V)
        payload = {"mode": "power", "potential": V.spec(), **mr.to_dict()}
        cls = mr.classification
        print(f"BS = {mr.lhs:.5g}  rhs = {mr.rhs:.5g}  margin = {mr.margin:.3g} ({cls})")
    _emit(args, "bs-eval", payload)
    return 1 if cls == "violated" else 0


def cmd_conjugate(args) -> int:
    phi = _phi_member(args, args.n)
    pair = functionals.mass_sized_pair(phi, 1.0)
    inv = __import__("santalo_lab.legendre", fromlist=["involution_error"]).involution_error(phi)
    payload = {"dual_box": list(pair.dual_grid.half_widths),
               "fenchel_young_violation": pair.fy_violation,
               "involution_error": inv,
               "dual_even": pair.dual.even,
               "dual_convex": pair.dual.convex_certified}
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        save_grid_fn(phi, outdir / "primal.bin")
        save_grid_fn(pair.dual, outdir / "dual.bin")
    _emit(args, "conjugate", payload)
    return 0


def cmd_symmetrize(args) -> int:
    phi = _phi_member(args, args.n)
    params = classical_params(args.n)
    rows, bad = [], False
    cur = phi
    for token in args.plan.split(","):
        token = token.strip()
        H = (Hyperplane.coordinate(int(token)) if token.isdigit()
             else Hyperplane.from_angle(float(token)))
        out = symmetrize.bs_monotonicity_check(cur, H, params, seed=args.seed)
        rows.append([token, out["before"], out["after"], out["margin"], out["err"],
                     out["assumption_set"]])
        bad = bad or out["margin"] < -3 * out["err"]
        cur = symmetrize.steiner(cur, H)
    _emit(args, "symmetrize", {"plan": args.plan, "steps": len(rows), "violation": bad},
          rows=rows, header=["hyperplane", "bs_before", "bs_after", "margin", "err", "assumptions"])
    return 1 if bad else 0


def _body_from_name(name: str, rng) -> bodies.Polytope:
    if name == "square":
        return bodies.Polytope.box(2)
    if name == "ball":
        return bodies.Polytope.regular_ngon(720)
    if name == "cross":
        return bodies.Polytope.cross_polytope(2)
    if name == "random":
        return bodies.Polytope.random_symmetric_polygon(rng, int(rng.integers(3, 8)))
    raise ValueError(f"unknown body {name!r}")


def cmd_kko(args) -> int:
    V = _potential(args)
    rng = np.random.default_rng(args.seed)
    rows, bad = [], False
    for k in range(args.count):
        K = _body_from_name(args.body, rng)
        out = bodies.kko_check(K, V, args.p)
        rows.append([k, out["lhs"], out["rhs"], out["margin"], out["classification"]])
        bad = bad or out["classification"] == "violated"
    _emit(args, "kko", {"potential": V.spec(), "count": args.count, "violation": bad},
          rows=rows, header=["body", "lhs", "rhs", "margin", "classification"])
    return 1 if bad else 0


def cmd_needle(args) -> int:
    Rs = [float(t) for t in args.R.split(",")]
    rows = bodies.needle_blowup(Rs)
    if len(Rs) == 1 and Rs[0] == 0.0:
        print(f"{rows[0]['lhs']:.6g}")
    for row in rows:
        print(f"R={row['R']:g}: |K_R|={row['volume_K']:.6g} "
              f"sup-prod={row['sup_product']:.6g} LHS={row['lhs']:.6g}")
    table = [[r["R"], r["volume_K"], r["sup_product"], r["lhs"]] for r in rows]
    _emit(args, "needle", {"rows": rows}, rows=table,
          header=["R", "volume_K", "sup_product", "lhs"])
    if args.out:  # plot data: two columns per figure
        with open(Path(args.out) / "needle_plot.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["R", "lhs"])
            w.writerows([[r["R"], r["lhs"]] for r in rows])
    return 0


def cmd_maximize(args) -> int:
    cfg = maximizer.ELConfig(
        params=classical_params(1) if args.classical else (args.p, _potential(args)),
        damping=args.damping, max_iterations=args.max_iterations,
        tolerance=args.tolerance, n=args.n, r_max=args.r_max,
        resolution=args.resolution or 4096)
    try:
        prof, trace = maximizer.fixed_point_radial(cfg)
    except maximizer.Diverged as e:
        _emit(args, "maximize", {"converged": False, "error": str(e)})
        return 1
    params = cfg.params
    diag = {
        "converged": True,
        "iterations": len(trace),
        "quadratic_fit_residual": maximizer.quadratic_fit_residual(prof),
        "pushforward_gap": maximizer.pushforward_gap_radial(prof, params),
    }
    if args.out:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        with open(outdir / "maximize_trace.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "step"])
            w.writerows(list(enumerate(trace)))
    _emit(args, "maximize", diag)
    return 0


def cmd_report(args) -> int:
    """Curated verification sweep; one row per check."""
    rng = np.random.default_rng(args.seed)
    rows = []

    def record(name, ok, detail):
        rows.append([name, "pass" if ok else "FAIL", detail])

    g = BoxGrid.cube(1, 6.0, 512)
    phi = build_grid_fn(lambda p: 0.5 * np.sum(p ** 2, axis=-1), g)
    rep = bs_general(phi, classical_params(1))
    record("ball-equality-1d", abs(rep.value - 2 * np.pi) < 2e-3 * 2 * np.pi,
           f"value={rep.value:.6g}")
    for q in (1.5, 2.0, 3.0):
        res = brascamp.eigen_residual_check(q, 2)
        record(f"eigen-q{q}", max(res.values()) < 1e-6, f"residuals={res}")
        c, branch = brascamp.cm(q, 2)
        best = max(brascamp.rayleigh_coordinate_analytic(q),
                   brascamp.rayleigh_mixed_analytic(q))
        record(f"cm-attained-q{q}", abs(best - c) < 1e-4, f"cm={c:.6g}")
    K = bodies.Polytope.box(2)
    out = bodies.kko_check(K, canonical(2, 2, 2), 2.0)
    record("kko-square", out["classification"] == "holds", f"margin={out['margin']:.4g}")
    nrows = bodies.needle_blowup([10.0, 100.0])
    record("needle-divergence", nrows[1]["lhs"] / nrows[0]["lhs"] >= 5.0,
           f"ratio={nrows[1]['lhs'] / nrows[0]['lhs']:.3g}")
    ce = brascamp.counterexample_search(1.5, 1.5, 2)
    record("counterexample-p1.5", ce["violation_found"],
           f"ratio={ce['best_ratio']:.4g} threshold={ce['threshold']:.4g}")
    ok = all(r[1] == "pass" for r in rows)
    _emit(args, "report", {"all_pass": ok, "checks": len(rows)},
          rows=rows, header=["check", "status", "detail"])
    for r in rows:
        print(f"[{r[1]:4s}] {r[0]}: {r[2]}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def _add_common(sp, potential=True):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=1,
                    help="worker parallelism (reductions stay deterministic)")
    sp.add_argument("--out", type=str, default=None, help="output directory")
    sp.add_argument("--format", choices=("json", "csv"), default="json")
    sp.add_argument("--resolution", type=int, default=None)
    if potential:
        sp.add_argument("--p", type=float, default=2.0)
        sp.add_argument("--q", type=float, default=2.0)
        sp.add_argument("--n", type=int, default=2)
        sp.add_argument("--c", type=float, default=None,
                        help="potential scale (default 1/p)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="santalo",
        description="Numerical workbench for generalized Blaschke-Santalo "
                    "functionals and strong Brascamp-Lieb inequalities")
    ap.add_argument("--config", type=str, default=None, help="TOML defaults file")
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("cm", help="even-function Poincare constant of the sphere weight")
    _add_common(sp)
    sp.set_defaults(func=cmd_cm)

    sp = sub.add_parser("spectral", help="eigen residuals and the Rayleigh search")
    _add_common(sp)
    sp.add_argument("--trials", type=int, default=64)
    sp.set_defaults(func=cmd_spectral)

    sp = sub.add_parser("bl-check", help="strong Brascamp-Lieb margins on random even functions")
    _add_common(sp)
    sp.add_argument("--lam", type=float, default=None)
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--budget", type=int, default=10 ** 6)
    sp.set_defaults(func=cmd_bl_check)

    sp = sub.add_parser("counterexample", help="search for strong-BL violations")
    _add_common(sp)
    sp.set_defaults(func=cmd_counterexample)

    sp = sub.add_parser("bs-eval", help="evaluate a Blaschke-Santalo functional")
    _add_common(sp)
    sp.add_argument("--phi", choices=("gaussian", "power", "random"), default="gaussian")
    sp.add_argument("--classical", action="store_true",
                    help="alpha = beta = 1 with unit weights")
    sp.set_defaults(func=cmd_bs_eval)

    sp = sub.add_parser("conjugate", help="discrete Legendre transform diagnostics")
    _add_common(sp)
    sp.add_argument("--phi", choices=("gaussian", "power", "random"), default="gaussian")
    sp.set_defaults(func=cmd_conjugate)

    sp = sub.add_parser("symmetrize", help="Steiner symmetrization monotonicity")
    _add_common(sp)
    sp.add_argument("--phi", choices=("gaussian", "power", "random"), default="random")
    sp.add_argument("--plan", type=str, default="0,1",
                    help="comma list of coordinate axes or angles")
    sp.set_defaults(func=cmd_symmetrize)

    sp = sub.add_parser("kko", help="set-version margins |K||grad V*(K0)|^{p-1} <= rhs")
    _add_common(sp)
    sp.add_argument("--body", choices=("square", "ball", "cross", "random"), default="random")
    sp.add_argument("--count", type=int, default=5)
    sp.set_defaults(func=cmd_kko)

    sp = sub.add_parser("needle", help="needle counterexample blow-up table")
    _add_common(sp, potential=False)
    sp.add_argument("--R", type=str, default="0,10,100")
    sp.set_defaults(func=cmd_needle)

    sp = sub.add_parser("maximize", help="radial fixed point plus diagnostics")
    _add_common(sp)
    sp.add_argument("--classical", action="store_true")
    sp.add_argument("--damping", type=float, default=0.5)
    sp.add_argument("--max-iterations", type=int, default=400)
    sp.add_argument("--tolerance", type=float, default=1e-8)
    sp.add_argument("--r-max", type=float, default=7.0)
    sp.set_defaults(func=cmd_maximize)

    sp = sub.add_parser("report", help="curated verification sweep")
    _add_common(sp)
    sp.set_defaults(func=cmd_report)
    return ap


def _apply_config_defaults(ap: argparse.ArgumentParser, argv):
    """TOML values become parser defaults; command-line flags still win."""
    if "--config" not in argv:
        return ap, argv
    i = argv.index("--config")
    path = argv[i + 1]
    with open(path, "rb") as fh:
        cfg = tomllib.load(fh)
    flat = {}
    for k, v in cfg.items():
        if isinstance(v, dict):
            for kk, vv in v.items():
                flat[kk.replace("-", "_")] = vv
        else:
            flat[k.replace("-", "_")] = v
    for action in ap._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        action.set_defaults(**{k: v for k, v in flat.items()
                               if any(a.dest == k for a in action._actions)})
    return ap, argv


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        ap, argv = _apply_config_defaults(ap, argv)
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code not in (0, None) else 0
    except (OSError, tomllib.TOMLDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ValueError, functionals.ValidationError, numgrid.NotCoercive,
            numgrid.TailUnbounded, numgrid.SingularWeight) as e:
        print(f"validation error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
