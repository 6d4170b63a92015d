"""Command-line front end: ``katoklab <command> [options]``.

Tables are written as CSV and verdicts as JSON, each headed by the run's
parameters. Exit codes: 0 success, 1 a check failed, 2 bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .params import KatokParams, ParameterError

EXIT_FAIL = 1
EXIT_CONFIG = 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage", message)
        raise SystemExit(EXIT_CONFIG)


def _emit_error(kind, message):
    sys.stderr.write(json.dumps({"error": kind, "message": str(message)}) + "\n")


# ------------------------------------------------------------------ output

def _provenance(args, params):
    d = {"tool": "katoklab", "version": __version__, "command": args.command}
    d.update(params.to_dict())
    for k, v in sorted(vars(args).items()):
        if k in ("command", "config", "out", "threads", "seed", "alpha", "r0", "ode_tol") or v is None:
            continue
        d[k] = list(v) if isinstance(v, (list, tuple)) else v
    return d


def _write(args, params, text, summary):
    if args.out in (None, "-"):
        sys.stdout.write(text)
        sys.stderr.write(summary + "\n")
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(text)
        print(summary)


def _csv(args, params, header, rows):
    buf = io.StringIO()
    prov = _provenance(args, params)
    buf.write("# " + " ".join(f"{k}={json.dumps(v, separators=(',', ':'))}" for k, v in prov.items()) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _json(args, params, result):
    from .suite import jsonable
    doc = {"provenance": _provenance(args, params), "result": jsonable(result)}
    return json.dumps(doc, indent=1) + "\n"


# ------------------------------------------------------------------ commands

def cmd_orbit(args, params):
    from .katok import apply_G, apply_GT2
    from .params import A, reduce_torus
    p = np.array(args.point if args.point else params.rng(1).random(2), dtype=float)
    rows = [(0, p[0], p[1])]
    for j in range(1, args.n + 1):
        if args.map == "G":
            p = apply_G(p, params, jacobian=False).image
        elif args.map == "GT2":
            p = apply_GT2(p, params).image
        else:
            p = reduce_torus(A @ p)
        rows.append((j, p[0], p[1]))
    return _csv(args, params, ["j", "x1", "x2"], rows), f"orbit: {args.n} iterates of {args.map}"


def cmd_flow(args, params):
    from .slowdown import trace
    out = trace(args.s, args.t, args.dt, params)
    return _csv(args, params, ["t", "s1", "s2"], out.tolist()), f"flow: {len(out)} samples to t={args.t}"


def cmd_cones(args, params):
    from .cones import cone_scan, mu0_analytic
    from .suite import _disk_points
    rng = params.rng(103)
    n = args.points
    pts = np.vstack([rng.random((n - n // 2, 2)), _disk_points(params, n // 2, rng)])
    rows = [cone_scan(pts, mu, params) for mu in args.mu]
    fails = sum(r["forward_failures"] + r["backward_failures"] for r in rows)
    res = {"mu0": mu0_analytic(params.alpha), "scans": rows, "pass": fails == 0}
    return _json(args, params, res), f"cones: {fails} failures over {n} points", res["pass"]


def cmd_verify_lemmas(args, params):
    from . import suite
    cfg = dict(suite.FULL, points=args.samples, passages=args.samples, pairs=args.samples,
               product=args.samples, transit=args.samples)
    recs = suite._passages(params, args.samples)
    res = {
        "hessian": suite.ac4_hessian(params, cfg),
        "passage": suite.ac5_passage(params, cfg, recs),
        "pairs": suite.ac6_pairs(params, cfg, recs),
        "product_and_transit": suite.ac7_product_transit(params, cfg),
    }
    ok = all(r["pass"] for r in res.values())
    bad = [k for k, r in res.items() if not r["pass"]]
    return _json(args, params, res), f"verify-lemmas: failed {bad}" if bad else "verify-lemmas: all hold", ok


def cmd_partition(args, params):
    from .symbolic import build_partition, perron
    part = build_partition(delta=args.delta, params=params)
    res = {"elements": part.size, "max_diameter": float(part.diameters().max()),
           "P_index": part.P_index, "P_area": float(part.areas()[part.P_index]),
           "verified_Q": part.verified_Q, "perron_root": perron(part.transition)[0]}
    if args.dump:
        rows = []
        for k in range(part.size):
            for i, (a, b) in enumerate(part.polygon(k)):
                rows.append((k, i, a, b))
        with open(args.dump, "w", newline="") as fh:
            fh.write(_csv(args, params, ["element", "vertex", "x1", "x2"], rows))
    return _json(args, params, res), f"partition: {part.size} elements, P={part.P_index}, Q={part.verified_Q}"


def cmd_sn_count(args, params):
    from .symbolic import build_partition, count_first_return_words, estimate_h
    part = build_partition(params=params)
    S = count_first_return_words(part, args.nmax)
    fit = estimate_h(S)
    rows = [(n + 1, int(s)) for n, s in enumerate(S)]
    return (_csv(args, params, ["n", "S_n"], rows),
            f"sn-count: h={fit['h']:.6f} margin={fit['margin']:.3g}")


def cmd_return_times(args, params):
    from .tower import default_base, return_times
    base = default_base(params)
    tau, _ = return_times(args.samples, params, base, args.cap, params.rng(40))
    vals, counts = np.unique(tau, return_counts=True)
    kept = tau[tau > 0]
    rows = list(zip(vals.tolist(), counts.tolist()))
    return (_csv(args, params, ["tau", "count"], rows),
            f"return-times: mean {kept.mean():.1f} vs 1/m(P) {1 / base.area:.1f}, "
            f"{int((tau < 0).sum())} past cap")


def cmd_check_tower(args, params):
    from . import tower as TW
    base = TW.default_base(params)
    tau, _ = TW.return_times(args.samples, params, base, args.cap, params.rng(40))
    hist = TW.return_histogram(tau, base.area, min_records=min(1000, args.samples))
    a, fa = TW.tower_pairs(args.pairs, params, base, rng=params.rng(110))
    b, fb = TW.tower_pairs(2 * args.pairs, params, base, rng=params.rng(111))
    y = TW.check_Y3_Y4(a)
    K = TW.check_expansion_condition(a, b)
    res = {
        "Y2_discarded_fraction": hist["discarded_fraction"],
        "Y3": {k: y[k] for k in ("log_a_stable", "log_a_unstable", "Y3_ok")},
        "Y4": {k: y[k] for k in ("distortion_max_sum", "distortion_by_return", "kappa", "Y4_ok")},
        "Y5": {"mean_tau": hist["mean"], "inverse_area": 1 / base.area,
               "kac_relative_error": hist["kac_relative_error"],
               "tail_exponent": hist["tail_exponent"]},
        "expansion": K, "pair_failures": [fa, fb],
    }
    ok = bool(y["Y3_ok"] and y["Y4_ok"] and K["stable"])
    return _json(args, params, res), f"check-tower: Y3 {y['Y3_ok']} Y4 {y['Y4_ok']} K={K['K']:.4g}", ok


def cmd_lyapunov(args, params):
    from .params import LOG_LAMBDA
    from .thermo import lyapunov_exponent
    p0 = np.array(args.point if args.point else params.rng(111).random(2))
    chi, se = lyapunov_exponent(p0, args.iters, params)
    res = {"chi": chi, "se": se, "log_lambda": LOG_LAMBDA, "iters": args.iters}
    return _json(args, params, res), f"lyapunov: chi={chi:.5f} ± {se:.1g}"


def cmd_pressure(args, params):
    from .thermo import curve_shape, pressure_curve
    t = np.linspace(args.tmin, args.tmax, args.steps)
    curve = pressure_curve(t, args.nmax, params)
    shape = curve_shape(curve)
    header = ["t"] + [f"P_{n}" for n in curve.levels] + ["P_extrap"]
    rows = [[t[k]] + curve.per_level[:, k].tolist() + [curve.extrapolated[k]] for k in range(len(t))]
    return (_csv(args, params, header, rows),
            f"pressure: monotone={shape['monotone']} convex={shape['convex']}")


def cmd_correlations(args, params):
    from .thermo import autocorrelations, decorrelation_lag
    lags, res = autocorrelations(args.observables, args.lags, args.samples, params, rng=params.rng(114))
    header = ["lag"] + [f"{k}_{s}" for k in res for s in ("C", "err")]
    rows = [[int(n)] + [x for k in res for x in (res[k][0][n], res[k][1][n])] for n in lags]
    dl = {k: decorrelation_lag(*v) for k, v in res.items()}
    return _csv(args, params, header, rows), f"correlations: decorrelation lags {dl}"


def cmd_clt(args, params):
    from .thermo import clt_diagnostic
    res = clt_diagnostic(list(args.observables), sorted(args.n), args.samples, params, rng=params.rng(115))
    rows = [(k, r["n"], r["distance"], r["sigma"], r["sigma_rms"], r["mean"])
            for k, v in res.items() for r in v]
    last = {k: round(v[-1]["distance"], 4) for k, v in res.items()}
    return (_csv(args, params, ["observable", "n", "distance", "sigma", "sigma_rms", "mean"], rows),
            f"clt: distance at n={max(args.n)} {last}")


def cmd_report(args, params):
    from .suite import run_suite

    def log(key, sec):
        sys.stderr.write(json.dumps({"timing": key, "seconds": round(sec, 3)}) + "\n")
        sys.stderr.flush()

    res = run_suite(params, quick=args.quick, only=args.only, log=log)
    passed = [k for k, v in res.items() if v["pass"]]
    failed = [k for k, v in res.items() if not v["pass"]]
    doc = {"criteria": res, "passed": passed, "failed": failed}
    return _json(args, params, doc), f"report: {len(passed)} passed, failed {failed}", not failed


COMMANDS = {
    "orbit": cmd_orbit, "flow": cmd_flow, "cones": cmd_cones, "verify-lemmas": cmd_verify_lemmas,
    "partition": cmd_partition, "sn-count": cmd_sn_count, "return-times": cmd_return_times,
    "check-tower": cmd_check_tower, "lyapunov": cmd_lyapunov, "pressure": cmd_pressure,
    "correlations": cmd_correlations, "clt": cmd_clt, "report": cmd_report,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("run")
    g.add_argument("--config", help="JSON file with alpha, r0, ode_tol, rng_seed")
    g.add_argument("--seed", type=int, help="overrides rng_seed")
    g.add_argument("--threads", type=int, help="worker threads (env KATOKLAB_THREADS)")
    g.add_argument("--out", help="output path (default stdout)")
    g.add_argument("--alpha", type=float)
    g.add_argument("--r0", type=float)
    g.add_argument("--ode-tol", type=float, dest="ode_tol")

    ap = _Parser(prog="katoklab", description="Numerical laboratory for the Katok map.")
    ap.add_argument("--version", action="version", version=f"katoklab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_)

    s = add("orbit", "iterate G, GT2 or A")
    s.add_argument("--point", type=float, nargs=2)
    s.add_argument("--n", type=int, default=100)
    s.add_argument("--map", choices=("G", "GT2", "A"), default="GT2")
    s = add("flow", "sample the slowed flow")
    s.add_argument("--s", type=float, nargs=2, default=(0.01, 0.2))
    s.add_argument("--t", type=float, default=10.0)
    s.add_argument("--dt", type=float, default=0.1)
    s = add("cones", "cone invariance scan")
    s.add_argument("--mu", type=float, nargs="+", default=(0.5, 0.7, 0.9))
    s.add_argument("--points", type=int, default=100_000)
    s = add("verify-lemmas", "flow estimates near the fixed point")
    s.add_argument("--samples", type=int, default=1000)
    s = add("partition", "Markov partition and base element")
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--dump", help="write element polygons as CSV")
    s = add("sn-count", "first-return word counts S_n")
    s.add_argument("--nmax", type=int, default=40)
    s = add("return-times", "first returns to P")
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--cap", type=int, default=100_000)
    s = add("check-tower", "tower condition proxies")
    s.add_argument("--samples", type=int, default=2000)
    s.add_argument("--pairs", type=int, default=100)
    s.add_argument("--cap", type=int, default=100_000)
    s = add("lyapunov", "Lyapunov exponent of G")
    s.add_argument("--iters", type=int, default=1_000_000)
    s.add_argument("--point", type=float, nargs=2)
    s = add("pressure", "pressure of the geometric potential")
    s.add_argument("--tmin", type=float, default=-1.0)
    s.add_argument("--tmax", type=float, default=2.0)
    s.add_argument("--steps", type=int, default=13)
    s.add_argument("--nmax", type=int, default=12)
    from .thermo import OBSERVABLES
    s = add("correlations", "autocorrelations for the area")
    s.add_argument("--lags", type=int, default=100)
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--observables", nargs="+", default=list(OBSERVABLES))
    s = add("clt", "normalized Birkhoff sums against a Gaussian")
    s.add_argument("--n", type=int, nargs="+", default=(100, 1000, 10_000))
    s.add_argument("--samples", type=int, default=10_000)
    s.add_argument("--observables", nargs="+", default=list(OBSERVABLES))
    s = add("report", "run the acceptance suite")
    s.add_argument("--quick", action="store_true", help="reduced sample sizes")
    s.add_argument("--only", nargs="+", metavar="ACk")
    return ap


def _params(args):
    try:
        p = KatokParams.from_json(args.config) if args.config else KatokParams()
        kw = {k: getattr(args, k) for k in ("alpha", "r0", "ode_tol") if getattr(args, k) is not None}
        if args.seed is not None:
            kw["rng_seed"] = args.seed
        return p.with_(**kw) if kw else p
    except (OSError, ValueError, TypeError, ParameterError) as e:
        raise ConfigError(e) from e


def _threads(args):
    n = args.threads
    if n is None and os.environ.get("KATOKLAB_THREADS"):
        try:
            n = int(os.environ["KATOKLAB_THREADS"])
        except ValueError as e:
            raise ConfigError(f"KATOKLAB_THREADS: {e}") from e
    if n is None:
        return
    if n < 1:
        raise ConfigError("--threads must be >= 1")
    # kernels are serial so results never depend on n


def main(argv=None):
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        params = _params(args)
        _threads(args)
        if args.command == "report" and args.only:
            from .suite import CRITERIA
            bad = sorted(set(args.only) - set(CRITERIA))
            if bad:
                raise ConfigError(f"unknown criteria {bad}")
        out = COMMANDS[args.command](args, params)
    except ConfigError as e:
        _emit_error("config", e)
        return EXIT_CONFIG
    except Exception as e:  # noqa: BLE001 - every failure maps to exit 1 with a JSON record
        _emit_error(type(e).__name__, e)
        return EXIT_FAIL
    text, summary = out[0], out[1]
    ok = out[2] if len(out) > 2 else True
    _write(args, params, text, summary)
    return 0 if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
