"""The acceptance suite behind ``katoklab report``.

Each criterion returns a JSON-able dict with its measured values and a
``pass`` flag. Results depend only on the parameters and the seed.
"""
from __future__ import annotations

import math
import time

import numpy as np

from . import bounds as B
from . import cones as C
from . import katok as KT
from . import symbolic as S
from . import thermo as TH
from . import tower as TW
from .params import LOG_LAMBDA, KatokParams, from_eigen

R0_SCAN = (0.1, 0.05, 0.01)
STATS_TOL = 1e-9   # ODE tolerance for long statistical runs

FULL = {
    "points": 10_000, "cone_points": 100_000, "passages": 1000, "pairs": 1000,
    "product": 1000, "transit": 1000, "sn_max": 12, "sn_fit": 40, "kac": 10_000,
    "tower_pairs": 100, "summability": 20, "lyap_iters": 1_000_000, "n_max": 12,
    "t0_records": 200, "corr_samples": 100_000, "corr_lags": 100,
    "clt_n": (100, 1000, 10_000), "clt_samples": 10_000,
}
QUICK = dict(FULL, points=500, cone_points=2000, passages=40, pairs=40, product=40,
             transit=40, kac=300, tower_pairs=6, summability=3, lyap_iters=20_000,
             n_max=7, t0_records=10, corr_samples=2000, corr_lags=60,
             clt_n=(100, 1000), clt_samples=300)


def _f(x):
    return float(x)


def jsonable(obj):
    """Plain Python types for json; non-finite floats become strings."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def _disk_points(params, n, rng, frac=1.0):
    """Uniform points of D_{frac·r0} as torus points."""
    r = math.sqrt(frac * params.r0)
    rad = r * np.sqrt(rng.random(n))
    ang = 2 * math.pi * rng.random(n)
    s = np.column_stack([rad * np.cos(ang), rad * np.sin(ang)])
    return np.mod(from_eigen(s), 1.0)


def ac1_area(params, cfg):
    pts = params.rng(101).random((cfg["points"], 2))
    d = KT.det_defect(pts, params)
    return {"points": len(pts), "max_det_defect": d, "tolerance": 1e-7, "pass": d < 1e-7}


def ac2_nu(params, cfg):
    pts = params.rng(102).random((cfg["points"], 2))
    r = KT.check_nu_invariance(pts, params)
    return {"points": len(pts), "max_residual": r, "tolerance": 1e-6, "pass": r < 1e-6}


def ac3_cones(params, cfg):
    rng = params.rng(103)
    n = cfg["cone_points"]
    # half uniform on the torus, half inside the slow-down disk
    pts = np.vstack([rng.random((n - n // 2, 2)), _disk_points(params, n // 2, rng)])
    rows = [C.cone_scan(pts, mu, params) for mu in (0.5, 0.7, 0.9)]
    fails = sum(r["forward_failures"] + r["backward_failures"] for r in rows)
    return {"mu0": C.mu0_analytic(params.alpha), "scans": rows, "failures": fails,
            "pass": fails == 0}


def ac4_hessian(params, cfg):
    pts = _disk_points(params, cfg["points"], params.rng(104), 0.5)
    s = pts - np.round(pts)
    from .params import to_eigen
    r = B.check_hessian_bound(to_eigen(s), params)
    ratio = r["observed_value"] if isinstance(r, dict) else float(r)
    return {"points": len(pts), "worst_ratio": ratio, "pass": ratio <= 1.0}


def _passages(params, n):
    th = B.passage_sample(params, n)
    return [B.make_passage(t, params) for t in th]


def ac5_passage(params, cfg, recs=None):
    recs = _passages(params, cfg["passages"]) if recs is None else recs
    skipped = 0
    worst = {}
    for rec in recs:
        try:
            rep = B.check_passage_bounds(rec, params)
        except B.HypothesisViolation:
            skipped += 1
            continue
        for k, v in rep["checks"].items():
            worst[k] = min(worst.get(k, np.inf), v)
    slack = 1e-6
    lemma_ok = all(v + slack >= 0 for k, v in worst.items() if k != "T_estimate")
    t_ok = worst["T_estimate"] + slack >= 0
    slope = B.passage_scaling(recs)
    slope_ok = abs(slope + 2 * params.alpha) <= 0.2
    return {"passages": len(recs), "skipped": skipped,
            "worst_relative_margin": {k: _f(v) for k, v in worst.items()},
            "lemma_inequalities_hold": lemma_ok, "T_estimate_holds": t_ok,
            "slope": slope, "slope_target": -2 * params.alpha,
            "pass": lemma_ok and t_ok and slope_ok}


def ac6_pairs(params, cfg, recs=None):
    recs = _passages(params, cfg["pairs"]) if recs is None else recs
    rng = params.rng(106)
    met, worst, worst_stated = 0, np.inf, np.inf
    for rec in recs:
        pair = B.make_pair(rec, rng.uniform(0.1, 0.9), 0.5, params)
        rep = B.check_pair_contraction(pair, params)
        if not rep["hypotheses_met"]:
            continue
        met += 1
        worst = min(worst, rep["checks"]["final"])
        worst_stated = min(worst_stated, rep["checks"]["second_stated"])
    return {"pairs": len(recs), "hypotheses_met": met, "worst_final_margin": _f(worst),
            "worst_stated_exponent_margin": _f(worst_stated),
            "pass": met > 0 and worst >= 0}


def ac7_product_transit(params, cfg):
    rows = C.product_bound_samples(params, 0.5, cfg["product"], params.rng(107))
    viol = int(np.count_nonzero(rows[:, 3] > rows[:, 4] + 1e-9))
    rng = params.rng(108)
    th = rng.uniform(math.pi / 4, math.pi / 2, cfg["transit"])
    tr = B.check_transit_bound(th, params)
    return {"product_samples": len(rows), "product_violations": viol,
            "transit_samples": len(th), "transit_max": tr["observed_value"], "T0_star": tr["bound_value"],
            "pass": viol == 0 and tr["margin"] >= 0}


def ac8_symbolic(params, cfg, part=None):
    part = S.build_partition(params=params) if part is None else part
    rho = S.perron(part.transition)[0]
    dp = S.count_first_return_words(part, cfg["sn_max"])
    bf = S.count_brute_force(part, cfg["sn_max"])
    counts = S.count_first_return_words(part, cfg["sn_fit"])
    fit = S.estimate_h(counts)
    err = abs(rho - (3 + math.sqrt(5)) / 2)
    same = [int(a) for a in dp] == [int(b) for b in bf]
    return {"perron_error": err, "S_n": [int(a) for a in dp], "dp_equals_brute_force": same,
            "h": fit["h"], "h_margin": fit["margin"], "exact_h": S.exact_h(part),
            "P_index": part.P_index, "verified_Q": part.verified_Q,
            "pass": err < 1e-9 and same and fit["margin"] > 0}


def ac9_kac(params, cfg, base):
    p = params.with_(ode_tol=STATS_TOL)
    tau, _ = TW.return_times(cfg["kac"], p, base, rng=p.rng(109))
    kept = tau[tau > 0]
    target = 1.0 / base.area
    rel = abs(kept.mean() - target) / target
    hist = TW.return_histogram(tau, base.area, min_records=min(1000, len(tau)))
    return {"samples": int(len(tau)), "discarded": int(len(tau) - len(kept)),
            "mean_tau": _f(kept.mean()), "stderr": _f(kept.std(ddof=1) / math.sqrt(len(kept))),
            "inverse_area": target, "relative_error": _f(rel),
            "tail_exponent": hist["tail_exponent"], "pass": rel < 0.02}


def ac10_tower(params, cfg, base):
    n = cfg["tower_pairs"]
    a, fa = TW.tower_pairs(n, params, base, rng=params.rng(110))
    b, fb = TW.tower_pairs(2 * n, params, base, rng=params.rng(111))
    y = TW.check_Y3_Y4(a)
    K = TW.check_expansion_condition(a, b)
    summ = []
    for pt in base.sample(cfg["summability"], params.rng(112)):
        try:
            summ.append(B.check_summability(pt, params, base))
        except TW.ReturnCapExceeded:
            pass
    out = {
        "pairs": len(a), "failed": fa, "pairs_doubled": len(b), "failed_doubled": fb,
        "log_a_stable": y["log_a_stable"], "log_a_unstable": y["log_a_unstable"],
        "Y3_ok": y["Y3_ok"], "distortion_max_sum": y["distortion_max_sum"],
        "distortion_by_return": [float(x) for x in y["distortion_by_return"]],
        "kappa": y["kappa"], "Y4_ok": y["Y4_ok"],
        "K": K["K"], "K_doubled": K["K_doubled"], "K_relative_change": K["relative_change"],
        "K_stable": K["stable"],
        "summability_max_sum_delta": max(r["sum_delta"] for r in summ),
        "summability_max_sum_prod_gamma": max(r["sum_prod_gamma"] for r in summ),
        "summability_max_log_prod_gamma": max(r["log_prod_gamma"] for r in summ),
    }
    out["pass"] = bool(y["Y3_ok"] and y["Y4_ok"] and K["stable"])
    return out


def ac11_lyapunov(params, cfg):
    rows = {}
    for r0 in R0_SCAN:
        p = params.with_(r0=r0)
        p0 = p.rng(111).random(2)
        chi, se = TH.lyapunov_exponent(p0, cfg["lyap_iters"], p)
        rows[str(r0)] = {"chi": chi, "se": se}
    chis = [rows[str(r)]["chi"] for r in R0_SCAN]
    mono = all(a < b for a, b in zip(chis, chis[1:]))
    close = abs(chis[-1] - LOG_LAMBDA) < 0.05
    return {"by_r0": rows, "log_lambda": LOG_LAMBDA, "monotone": mono,
            "gap_at_smallest": abs(chis[-1] - LOG_LAMBDA), "pass": mono and close}


def ac12_pressure(params, cfg):
    n_max = cfg["n_max"]
    cache, counts = {}, {}
    for n in range(1, n_max + 1):
        cache[n] = TH.periodic_orbits(n, params)
        counts[n] = (TH.dedup_count(cache[n]), S.fixed_point_count(n))
    t = np.array([-1.0, -0.5, 0.0, 0.5, 1.0, 1.5, 2.0])
    curve = TH.pressure_curve(t, n_max, params, orbit_cache=cache)
    shape = TH.curve_shape(curve)
    P = dict(zip(t.tolist(), curve.extrapolated.tolist()))
    exact = all(a == b for n, (a, b) in counts.items() if n <= 10)
    ok = (abs(P[0.0] - LOG_LAMBDA) < 0.05 and abs(P[1.0]) < 0.05 and abs(P[2.0]) < 0.05
          and shape["monotone"] and shape["convex"] and exact)
    return {"t": t.tolist(), "extrapolated": curve.extrapolated.tolist(),
            "last_level": curve.per_level[-1].tolist(), "drift": curve.drift.tolist(),
            "levels": curve.levels, "shape": shape,
            "counts": {str(n): list(c) for n, c in counts.items()},
            "counts_exact_through_10": exact, "pass": bool(ok)}


def ac13_t0(params, cfg, lyap, parts):
    rows = {}
    for r0 in R0_SCAN:
        p = params.with_(r0=r0)
        part = parts[r0]
        fit = S.estimate_h(S.count_first_return_words(part, cfg["sn_fit"]))
        base = TW.base_from_partition(part)
        recs, lost = TW.return_records(cfg["t0_records"], p.with_(ode_tol=STATS_TOL), base,
                                       rng=p.rng(113))
        h_mu1 = lyap["by_r0"][str(r0)]["chi"]
        est = TH.t0_estimate(fit["h"], h_mu1, recs)
        rows[str(r0)] = {"h": est.h, "exact_h": S.exact_h(part), "P_index": part.P_index,
                         "verified_Q": part.verified_Q, "h_mu1": est.h_mu1, "log_lambda1": est.log_lambda1,
                         "t0": est.t0, "records": len(recs), "discarded": lost}
    t0 = [rows[str(r)]["t0"] for r in R0_SCAN]
    neg = all(x < 0 for x in t0)
    dec = all(b < a for a, b in zip(t0, t0[1:]))
    return {"by_r0": rows, "all_negative": neg, "decreasing": dec, "pass": neg and dec}


def ac14_statistics(params, cfg):
    p = params.with_(r0=0.01, ode_tol=STATS_TOL)
    lags, res = TH.autocorrelations(TH.OBSERVABLES, cfg["corr_lags"], cfg["corr_samples"], p,
                                    rng=p.rng(114))
    corr = {}
    for name, (Cn, err) in res.items():
        tail = slice(50, None)
        worst = float(np.max(np.abs(Cn[tail]) / err[tail]))
        corr[name] = {"C": Cn.tolist(), "err": err.tolist(),
                      "decorrelation_lag": TH.decorrelation_lag(Cn, err),
                      "max_ratio_from_50": worst, "ok": worst < 3.0}
    clt = TH.clt_diagnostic(list(TH.OBSERVABLES), list(cfg["clt_n"]), cfg["clt_samples"], p,
                            rng=p.rng(115))
    clt_ok = {k: rows[-1]["distance"] < 0.03 for k, rows in clt.items()}
    ok = all(c["ok"] for c in corr.values()) and all(clt_ok.values())
    return {"correlations": corr, "clt": clt, "clt_ok": clt_ok, "pass": ok}


CRITERIA = [f"AC{k}" for k in range(1, 15)]


def run_suite(params=KatokParams(), quick=False, only=None, log=None):
    """Run criteria 1-14 in order; returns {id: result}. ``log(id, seconds)``
    receives wall times, which are kept out of the results."""
    cfg = QUICK if quick else FULL
    want = set(CRITERIA if only is None else only)
    out = {}

    def run(key, fn, *a):
        if key not in want:
            return None
        t = time.perf_counter()
        res = fn(*a)
        if log is not None:
            log(key, time.perf_counter() - t)
        out[key] = jsonable(res)
        return res

    run("AC1", ac1_area, params, cfg)
    run("AC2", ac2_nu, params, cfg)
    run("AC3", ac3_cones, params, cfg)
    run("AC4", ac4_hessian, params, cfg)
    recs = None
    if want & {"AC5", "AC6"}:
        recs = _passages(params, max(cfg["passages"], cfg["pairs"]))
    run("AC5", ac5_passage, params, cfg, recs[:cfg["passages"]] if recs else None)
    run("AC6", ac6_pairs, params, cfg, recs[:cfg["pairs"]] if recs else None)
    run("AC7", ac7_product_transit, params, cfg)
    parts = {}
    if want & {"AC8", "AC9", "AC10", "AC13"}:
        for r0 in R0_SCAN:
            parts[r0] = S.build_partition(params=params.with_(r0=r0))
    small = params.with_(r0=0.01)
    base = TW.base_from_partition(parts[0.01]) if parts else None
    run("AC8", ac8_symbolic, small, cfg, parts.get(0.01))
    run("AC9", ac9_kac, small, cfg, base)
    run("AC10", ac10_tower, small, cfg, base)
    lyap = run("AC11", ac11_lyapunov, params, cfg)
    run("AC12", ac12_pressure, params, cfg)
    if "AC13" in want:
        if lyap is None:
            lyap = ac11_lyapunov(params, cfg)
        run("AC13", ac13_t0, params, cfg, lyap, parts)
    run("AC14", ac14_statistics, params, cfg)
    return out
