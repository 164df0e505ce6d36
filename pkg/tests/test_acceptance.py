"""Acceptance suite: one test per criterion, each timed, each printing a verdict line.

Run ``pytest tests/test_acceptance.py -s`` (or ``python3 tests/test_acceptance.py``)
to see the ``PASS criterion k`` / ``FAIL criterion k`` lines.
"""
import itertools
import json
import sys
import time

import numpy as np
import pytest

from subgeom.chains import digit_chain, digit_enumerate
from subgeom.harness import (
    ExperimentConfig,
    burn_in_index,
    log_r2,
    nonincreasing_after,
    run_convergence_experiment,
)
from subgeom.lyapunov import check_cumulative_drift, check_drift_discrete, estimate_dsmall
from subgeom.rate_kernel import PsiFunction, RateBoundParams, RateFunction, h_inverse, h_transform, petrov_bound_check, rate_bound
from subgeom.reports import dumps
from subgeom.transport import BoundedMetric, EmpiricalMeasure, tv_distance, wasserstein_1d, wasserstein_exact, wasserstein_to_uniform

SEED = 20240601
ARTIFACTS: dict[int, bytes] = {}
_WRITE = [print]


@pytest.fixture(autouse=True)
def _verdict_writer(request):
    # write around output capture so the verdict lines always reach the terminal
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    _WRITE[0] = (lambda s: tr.write_line(s)) if tr is not None else print


def _report(k, ok, elapsed, detail=""):
    _WRITE[0](f"{'PASS' if ok else 'FAIL'} criterion {k} ({elapsed:.2f}s){': ' + detail if detail else ''}")


def _run(k, fn, limit):
    """Run criterion ``k``; returns its artifact bytes. Fails on error or timeout."""
    t0 = time.perf_counter()
    try:
        artifact, detail = fn()
    except AssertionError as e:
        _report(k, False, time.perf_counter() - t0, str(e).splitlines()[0] if str(e) else "assertion failed")
        raise
    elapsed = time.perf_counter() - t0
    ok = elapsed < limit
    _report(k, ok, elapsed, detail if ok else f"runtime {elapsed:.1f}s over the {limit}s limit")
    assert ok, f"criterion {k} took {elapsed:.2f}s (limit {limit}s)"
    return artifact


# -- criteria ------------------------------------------------------------------------------------


def crit1():
    cfg = ExperimentConfig(model={"kind": "digit"}, schedule=list(range(1, 9)), seed=SEED, mode="two_start",
                           x0=0.3, y0=0.8)
    curve = run_convergence_experiment(cfg)
    for r in curve.rows:
        want = 0.5 * 10.0**-r.t
        assert abs(r.distance - want) <= 1e-12 * want, f"n={r.t}: {r.distance} != {want}"
    return curve.to_csv().encode(), "distance(n) = 0.5e-n for n=1..8"


def crit2():
    rows = []
    for x0 in ("0.3", "0.8", "0", "0.123"):
        for n in range(0, 7):
            w = wasserstein_to_uniform(digit_enumerate(x0, n).measure())
            h = 10.0**-n
            assert w <= h + h / 2, f"x0={x0} n={n}: W={w}"
            rows.append({"x0": x0, "n": n, "W": w})
    return dumps(rows).encode(), f"max W*10^n = {max(r['W'] * 10**r['n'] for r in rows):.3f}"


def crit3():
    rows = []
    for n in range(1, 6):
        a = digit_enumerate("0.3", n, scale_digits=1).int_measure()
        b = digit_enumerate("0.8", n, scale_digits=1).int_measure()
        assert np.intersect1d(a.points, b.points).size == 0, f"supports overlap at n={n}"
        tv = tv_distance(a, b)
        assert tv == 2.0, f"n={n}: tv={tv!r}"
        rows.append({"n": n, "tv": tv})
    return dumps(rows).encode(), "disjoint supports, tv = 2 for n=1..5"


def crit4():
    reps = []
    for name in ("linear", "square", "clip2"):
        for a0 in (1.0, 0.7, 0.3):
            rep = petrov_bound_check(PsiFunction.builtin(name), a0, 10_000)
            assert rep.verdict == "pass", f"psi={name} a0={a0}: {rep.summary}"
            reps.append(rep.to_dict())
    return dumps(reps).encode(), "9 (psi, a0) pairs up to n=1e4"


def _rel(a, b):
    return np.max(np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(np.asarray(b)), 1e-300))


def crit5():
    rng = np.random.default_rng(SEED)
    worst = {}
    for fam in ("linear", "power"):
        par = rng.uniform(0.1, 3.0, 100) if fam == "linear" else rng.uniform(0.05, 0.95, 100)
        x = np.exp(rng.uniform(0.0, np.log(1e4), 100))
        y = rng.uniform(0.0, 20.0, 100)
        t = rng.uniform(0.0, 50.0, 100)
        errs = []
        for p, xi, yi, ti in zip(par, x, y, t):
            phi = RateFunction.linear(p) if fam == "linear" else RateFunction.power(p)
            errs.append(_rel(h_transform(phi, xi), h_transform(phi, xi, method="quad")))
            errs.append(_rel(h_inverse(phi, yi), h_inverse(phi, yi, method="quad")))
            params = RateBoundParams(1.3, 0.7, 0.2, 0.5)
            errs.append(_rel(rate_bound(phi, params, ti), rate_bound(phi, params, ti, method="quad")))
        worst[fam] = float(max(errs))
        assert worst[fam] <= 1e-8, f"{fam}: relative error {worst[fam]:.2e}"
    return dumps(worst).encode(), f"worst relative error {max(worst.values()):.1e}"


def crit6():
    rng = np.random.default_rng(SEED)
    metric = BoundedMetric.euclidean()
    worst = 0.0
    for _ in range(200):
        a, b = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        cost = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)
        brute = min(cost[[0, 1, 2], list(p)].sum() / 3 for p in itertools.permutations(range(3)))
        w, _ = wasserstein_exact(EmpiricalMeasure.normalized(a, np.ones(3)), EmpiricalMeasure.normalized(b, np.ones(3)), metric)
        worst = max(worst, abs(w - brute))
        assert abs(w - brute) <= 1e-9, f"3x3: {w} vs {brute}"
    for _ in range(200):
        n, m = rng.integers(1, 25, size=2)
        mu = EmpiricalMeasure.normalized(rng.normal(size=n), rng.uniform(0.05, 1.0, n))
        nu = EmpiricalMeasure.normalized(rng.normal(1.0, 2.0, size=m), rng.uniform(0.05, 1.0, m))
        w1, (wx, _) = wasserstein_1d(mu, nu), wasserstein_exact(mu, nu, metric)
        worst = max(worst, abs(w1 - wx))
        assert abs(w1 - wx) <= 1e-9, f"1-D: {w1} vs {wx}"
    return dumps({"worst_abs_error": worst}).encode(), f"worst abs error {worst:.1e}"


def crit7():
    model, phi, K = digit_chain(), RateFunction.linear(0.9), 0.45
    states = [0.0, 0.1, 0.3, 0.5, 0.8, 0.99]
    exact = check_drift_discrete(model, phi, K, states, method="exact")
    assert exact.verdict == "pass" and all(r["margin_exact"] == "0" for r in exact.rows), "exact margin is not 0"
    mc = check_drift_discrete(model, phi, K, states, n_mc=10_000, seed=SEED)
    assert mc.verdict != "fail", "MC verdict fail"
    for r in mc.rows:
        assert abs(r["margin"]) <= 3 * r["ci95"], f"x={r['x']}: |{r['margin']}| > 3*{r['ci95']}"
    cum = [check_cumulative_drift(model, phi, K, 0.3, n, 10_000, SEED) for n in (1, 10, 50)]
    assert all(c.verdict == "pass" for c in cum), "cumulative drift failed"
    reps = [exact.to_dict(), mc.to_dict()] + [c.to_dict() for c in cum]
    return dumps(reps).encode(), f"exact margin 0, MC verdict {mc.verdict}, cumulative pass at n=1,10,50"


def crit8():
    m = digit_chain()
    pairs = [(0.1, 0.5), (0.3, 0.8), (0.0, 0.99), (0.42, 0.43), (0.25, 0.75)]
    est = estimate_dsmall(m, BoundedMetric.euclidean(), m.V, 2.0, pairs, 512, seed=SEED)
    assert abs(est.rho_hat - 0.9) <= 3 * est.ci95, f"rho={est.rho_hat} ci={est.ci95}"
    assert not est.upper_bound_only
    return est.report().to_json().encode(), f"rho_hat = {est.rho_hat:.12g} (ci {est.ci95:.1e})"


def _vk_curve(alpha, fit):
    cfg = ExperimentConfig(
        model={"kind": "vk", "alpha": alpha, "kappa": 1.0, "M": 1.0, "r": 1.0, "m": 10},
        schedule=list(range(0, 21)), seed=SEED, mode="two_start", x0=2.0, y0=-2.0, metric=1.0,
        n_samples=2000, replicates=4, dt=0.01, fit=fit, rate={"phi": "linear:1", "epsilon": 0.1})
    return run_convergence_experiment(cfg)


def crit9():
    geo = _vk_curve(1.0, "auto")
    k = burn_in_index(geo)
    mono, excess = nonincreasing_after(geo, k)
    assert mono, f"alpha=1 curve rises after burn-in by {excess:.3g} beyond 3 ci"
    for r in geo.rows:
        assert r.bound >= r.distance - 3 * r.ci95, f"t={r.t}: bound {r.bound} < {r.distance} - 3ci"
    sub = _vk_curve(0.5, None)
    ks = burn_in_index(sub)
    r_sub, r_lin = log_r2(sub, 1.0 / 3.0, ks), log_r2(sub, 1.0, ks)
    assert r_sub > r_lin, f"R2 on t^(1/3) {r_sub:.4f} <= R2 on t {r_lin:.4f}"
    art = geo.to_csv() + sub.to_csv()
    return art.encode(), f"burn-in t={geo.t[k]:g}, max excess {excess:.3g}; R2 {r_sub:.4f} vs {r_lin:.4f}"


CRITERIA = {1: (crit1, 1), 2: (crit2, 10), 3: (crit3, 10), 4: (crit4, 5), 5: (crit5, 5),
            6: (crit6, 30), 7: (crit7, 30), 8: (crit8, 60), 9: (crit9, 600)}


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    fn, limit = CRITERIA[k]
    ARTIFACTS[k] = _run(k, fn, limit)


def test_criterion_10_determinism():
    t0 = time.perf_counter()
    bad = []
    for k, (fn, _) in sorted(CRITERIA.items()):
        first = ARTIFACTS.get(k) or fn()[0]
        if fn()[0] != first:
            bad.append(k)
    _report(10, not bad, time.perf_counter() - t0,
            "all artifacts byte-identical on rerun" if not bad else f"differ for criteria {bad}")
    assert not bad


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
