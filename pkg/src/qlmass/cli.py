"""Command-line front end.

Exit codes: 0 every asserted margin passed, 1 a theorem-backed inequality
failed, 2 bad input or configuration, 3 a solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import EXIT_CODES, ConfigError, QLMError, exit_code
from .flow import (ParallelFoliation, eq11_convergence, flow_solve, mass_aspect,
                   monotonicity_check, write_flow_csv)
from .pipeline import Scenario, report_json, run_pipeline, scenario_from_json
from .qlm import lemma6_margins, sample_lemma6, schwarzschild_mass
from .surface import (ellipsoid_metric, gauss_bonnet_integral, metric_from_json, minkowski_margin,
                      round_metric, weyl_embed)

log = logging.getLogger("qlmass")

DEFAULT_SEED = 20240611
PASS, VIOLATION = 0, EXIT_CODES["violation"]


def _load_json(path):
    if path is None:
        return None
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


def _line(ok: bool, name: str, detail: str) -> None:
    print(f"{'PASS' if ok else 'FAIL'}  {name:<28} {detail}")


# --------------------------------------------------------------------------- schwarzschild

def cmd_schwarzschild(args) -> int:
    M = args.M
    G = 1.0 if args.G is None else args.G
    radii = sorted(args.a)
    rows = []
    for a in radii:
        if M > 0:
            s_in = min(2.0 * M * 1.05, 0.5 * (2.0 * M + a))
            if a <= 2.0 * M:
                raise ConfigError(f"a = {a} is not outside the horizon 2M = {2.0 * M}")
            data = {"grid": {"s_min": s_in, "s_max": a, "n": args.grid_n},
                    "preset": {"name": "schwarzschild", "M": M}, "G": G}
        else:
            data = {"grid": {"s_min": 0.0, "s_max": a, "n": args.grid_n}, "preset": {"name": "flat"}, "G": G}
        rep = run_pipeline(Scenario(data=data, mode="riemannian", r_max=args.rmax or 100.0 * a))
        if rep.failure:
            print(f"a = {a}: {rep.failure['stage']} failed: {rep.failure['message']}", file=sys.stderr)
            return EXIT_CODES[rep.failure["kind"]]
        closed = schwarzschild_mass(M, a, G)
        rel = abs(rep.E - closed) / abs(closed) if closed else abs(rep.E)
        rows.append((a, rep.E, closed, rel))
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("a", "E_pipeline", "m_closed_form", "rel_diff"))
    for row in rows:
        w.writerow([f"{x:.12g}" for x in row])
    out = _out_dir(args)
    if out:
        with open(out / "schwarzschild.csv", "w", newline="") as fh:
            cw = csv.writer(fh, lineterminator="\n")
            cw.writerow(("a", "E_pipeline", "m_closed_form", "rel_diff"))
            cw.writerows([[repr(float(x)) for x in row] for row in rows])
    E = np.array([r[1] for r in rows])
    monotone = bool(np.all(np.diff(E) < 0)) if M > 0 else bool(np.all(np.abs(E) <= 1e-9))
    close = all(r[3] <= 1e-6 for r in rows)
    if not (monotone and close):
        print("E(a) is not monotone decreasing or misses the closed form", file=sys.stderr)
        return VIOLATION
    return PASS


# --------------------------------------------------------------------------- pipeline

def cmd_pipeline(args) -> int:
    doc = _load_json(args.config)
    if doc is None:
        raise ConfigError("pipeline needs --config SCENARIO.json")
    data = doc.setdefault("data", {})
    if args.grid_n is not None:
        data.setdefault("grid", {})["n"] = args.grid_n
    if args.G is not None:
        data["G"] = args.G
    if args.rmax is not None:
        doc.setdefault("flow", {})["r_max"] = args.rmax
    if args.seed is not None:
        doc["seed"] = args.seed
        if data.get("preset", {}).get("name") == "perturbed":
            data["preset"]["seed"] = args.seed
    sc = scenario_from_json(doc)
    rep = run_pipeline(sc)
    text = report_json(rep)
    out = _out_dir(args)
    if out:
        (out / "report.json").write_text(text)
        if "flow_csv" in getattr(rep, "artifacts", {}):
            (out / "flow.csv").write_text(rep.artifacts["flow_csv"])
    else:
        sys.stdout.write(text)
    if rep.failure:
        print(f"failed in stage {rep.failure['stage']}: {rep.failure['message']}", file=sys.stderr)
        return EXIT_CODES[rep.failure["kind"]]
    return PASS


# --------------------------------------------------------------------------- flow

def _initial_lapse(spec, fol):
    if spec is None:
        return 1.0
    if isinstance(spec, (int, float, list)):
        return np.asarray(spec, dtype=float)
    if isinstance(spec, dict) and "schwarzschild_M" in spec:
        a = fol.mean_radius
        M = float(spec["schwarzschild_M"])
        if not 2.0 * M < a:
            raise ConfigError("schwarzschild_M must be below half the base radius")
        return (1.0 - 2.0 * M / a) ** -0.5
    if isinstance(spec, dict) and "gaussian" in spec:
        amp = float(spec["gaussian"])
        return 1.0 + amp * np.exp(-fol.base.theta**2)
    raise ConfigError(f"unrecognized initial lapse {spec!r}")


def cmd_flow(args) -> int:
    doc = _load_json(args.config) or {}
    base = metric_from_json(doc.get("base", {"preset": "round", "a": 1.0, "n": 128}))
    fol = ParallelFoliation(weyl_embed(base))
    G = args.G if args.G is not None else float(doc.get("G", 1.0))
    r_max = args.rmax if args.rmax is not None else float(doc.get("r_max", 100.0 * fol.mean_radius))
    h0 = _initial_lapse(doc.get("h0"), fol)
    flow = flow_solve(fol, h0, r_max, n_r=int(doc.get("n_r", 400)))
    ma = mass_aspect(fol, flow, G)
    mono = monotonicity_check(fol, flow, G, ma)
    text = write_flow_csv(flow, ma, mono)
    out = _out_dir(args)
    if out:
        (out / "flow.csv").write_text(text)
    else:
        sys.stdout.write(text)
    print(f"m(0) = {ma.m0:.10g}  m_inf = {ma.m_inf:.10g}  m_o = {ma.m_o:.10g}  "
          f"max increase = {mono.max_increase:.3e}", file=sys.stderr)
    return PASS if mono.passed else VIOLATION


# --------------------------------------------------------------------------- checks

def _check_lemma6(args, seed) -> bool:
    t0 = time.perf_counter()
    H, P, c3, c4, _ = sample_lemma6(seed, args.n_samples)
    worst = float(lemma6_margins(H, P, c3, c4).min())
    ok = worst >= -1e-12
    _line(ok, "lemma6", f"{args.n_samples} samples, min margin {worst:.3e}, {time.perf_counter() - t0:.2f} s")
    return ok


def _check_minkowski(args, seed) -> bool:
    ok_all = True
    for m, expect_zero in ((round_metric(3.0), True), (ellipsoid_metric(1, 1, 2), False),
                           (ellipsoid_metric(2, 2, 1), False)):
        margin = minkowski_margin(weyl_embed(m))
        ok = abs(margin) <= 1e-9 if expect_zero else margin > 0
        ok_all &= ok
        _line(ok, f"minkowski {m.label}", f"margin {margin:.6e}")
    return ok_all


def _check_gaussbonnet(args, seed) -> bool:
    ok_all = True
    for m in (round_metric(1.0), ellipsoid_metric(1, 1, 2), ellipsoid_metric(2, 2, 1)):
        err = gauss_bonnet_integral(m) - 4.0 * math.pi
        ok = abs(err) <= 1e-4
        ok_all &= ok
        _line(ok, f"gauss-bonnet {m.label}", f"error {err:.3e}")
    return ok_all


def random_lapse(rng, fol, degree: int = 4, scale: float = 0.3):
    """Smooth positive axisymmetric profile: exponential of a short Legendre series in cos(theta)."""
    coef = rng.uniform(-1.0, 1.0, degree) * scale / (1.0 + np.arange(degree))
    return np.exp(np.polynomial.legendre.legval(np.cos(fol.base.theta), coef))


def _check_eq11(args, seed) -> bool:
    rng = np.random.default_rng(seed)
    bases = [ParallelFoliation(weyl_embed(m)) for m in
             (round_metric(1.0, 64), ellipsoid_metric(1, 1, 2, 64), ellipsoid_metric(2, 2, 1, 64))]
    ok_all = True
    for k in range(args.count):
        fol = bases[k % len(bases)]
        h0 = random_lapse(rng, fol)
        study = eq11_convergence(fol, h0, 20.0 * fol.mean_radius, 200)
        flow = flow_solve(fol, h0, 20.0 * fol.mean_radius, n_r=200, reduce_symmetric=False)
        mono = monotonicity_check(fol, flow)
        ok = study.order >= 1.9 and mono.max_increase <= 1e-9
        ok_all &= ok
        _line(ok, f"eq11 profile {k} ({fol.base.metric.label})",
              f"order {study.order:.3f}, max increase {mono.max_increase:.2e}")
    return ok_all


SUITES = {"lemma6": _check_lemma6, "minkowski": _check_minkowski, "eq11": _check_eq11,
          "gaussbonnet": _check_gaussbonnet}


def cmd_check(args) -> int:
    seed = DEFAULT_SEED if args.seed is None else args.seed
    print(f"seed {seed}")
    return PASS if SUITES[args.suite](args, seed) else VIOLATION


# --------------------------------------------------------------------------- embed

def cmd_embed(args) -> int:
    doc = _load_json(args.config)
    if doc is None:
        raise ConfigError("embed needs --config METRIC.json")
    if args.grid_n is not None and "preset" in doc:
        doc["n"] = args.grid_n
    e = weyl_embed(metric_from_json(doc))
    margin = minkowski_margin(e)
    out = _out_dir(args)
    if out:
        (out / "embedding.json").write_text(json.dumps(e.to_json(), sort_keys=True) + "\n")
    print(json.dumps({"area": e.area, "H0_integral": e.H0_integral, "minkowski_margin": margin},
                     sort_keys=True))
    return PASS if margin >= -1e-9 else VIOLATION


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--seed", type=int)
    common.add_argument("--grid-n", type=int)
    common.add_argument("--rmax", type=float)
    common.add_argument("--G", type=float)
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="qlmass", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("schwarzschild", parents=[common], help="E(S_a) against the closed form")
    s.add_argument("--M", type=float, default=1.0)
    s.add_argument("--a", type=float, nargs="+", default=[2.5, 5.0, 10.0, 100.0])
    s.set_defaults(func=cmd_schwarzschild)

    s = sub.add_parser("pipeline", parents=[common], help="run a scenario and write report.json + flow.csv")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("flow", parents=[common], help="flow on a base surface and write flow.csv")
    s.set_defaults(func=cmd_flow)

    s = sub.add_parser("check", parents=[common], help="run a verification suite")
    s.add_argument("suite", choices=sorted(SUITES))
    s.add_argument("--n-samples", type=int, default=100_000)
    s.add_argument("--count", type=int, default=20)
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("embed", parents=[common], help="embed a 2-metric and report the Minkowski margin")
    s.set_defaults(func=cmd_embed)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.grid_n is not None and args.grid_n < 16:
        parser.error("--grid-n must be at least 16")
    if args.command == "schwarzschild" and args.grid_n is None:
        args.grid_n = 2000
    if args.G is not None and not args.G > 0:
        parser.error("--G must be positive")
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except QLMError as exc:
        print(f"error ({exc.kind}): {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
