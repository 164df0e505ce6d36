"""Statistical verification of drift, d-smallness and one-step contraction.

Every Monte Carlo check compares an estimate against its bound with a
three-sigma rule: ``fail`` if the margin is below ``-3 ci95``,
``inconclusive`` if ``|margin| <= 3 ci95``, ``pass`` otherwise.  Exact
(enumeration) variants exist for models that expose their one-step
outcomes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from .chains import MarkovModel, SegmentState, simulate_sdde
from .errors import DomainError, ParameterError
from .rate_kernel import RateFunction
from .reports import CheckReport, combine_verdicts, three_sigma_verdict
from .rng import stream
from .transport import BoundedMetric, EmpiricalMeasure, wasserstein_1d, wasserstein_exact

DriftReport = CheckReport
EXACT_OT_MAX = 512
# ci95 never drops below this: exact-ratio estimators still carry float roundoff
ROUNDOFF_CI = 1e-12


def _ci(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), 1.96 * float(v.std(ddof=1)) / math.sqrt(v.size)


def _exact_phi(phi):
    """Rate usable on Fractions (linear rates and plain callables only)."""
    if isinstance(phi, RateFunction):
        if phi.kind != "linear":
            raise ParameterError("exact drift checks support linear rates or plain callables")
        lam = Fraction(str(phi.params[0]))
        return lambda v: lam * v
    return phi


def _exact_setup(model, outcomes, V_exact):
    if model.name == "digit":
        outcomes = outcomes or digit_outcomes
        V_exact = V_exact or (lambda x: x)
    if outcomes is None or V_exact is None:
        raise DomainError("exact checks need outcomes() and V_exact() in exact arithmetic")
    return outcomes, V_exact


def digit_outcomes(x):
    """One-step law of the digit chain in exact arithmetic."""
    x = Fraction(str(x)) if not isinstance(x, Fraction) else x
    return [((x + k) / 10, Fraction(1, 10)) for k in range(10)]


# ---------------------------------------------------------------------------
# drift conditions


def check_drift_discrete(model: MarkovModel, phi, K, test_states, n_mc: int = 10_000, seed: int = 0,
                         method: str = "mc", outcomes: Callable | None = None,
                         V_exact: Callable | None = None) -> DriftReport:
    """Check ``PV(x) <= V(x) - phi(V(x)) + K`` at each test state.

    ``method="mc"`` estimates ``PV`` from ``n_mc`` one-step samples;
    ``method="exact"`` sums over ``outcomes(x)`` (pairs of state and
    probability) with ``V_exact`` in exact arithmetic.  Both default to the
    digit chain's law and ``V(x) = x``.
    """
    if model.V is None:
        raise DomainError("model has no Lyapunov function")
    states = list(test_states)
    if not states:
        raise DomainError("need at least one test state")
    rows, verdicts = [], []
    if method == "exact":
        outcomes, V_exact = _exact_setup(model, outcomes, V_exact)
        ph = _exact_phi(phi)
        Kx = Fraction(str(K))
        for x in states:
            xf = Fraction(str(x))
            v = V_exact(xf)
            pv = sum(p * V_exact(s) for s, p in outcomes(xf))
            bound = v - ph(v) + Kx
            margin = bound - pv
            verdict = "pass" if margin >= 0 else "fail"
            verdicts.append(verdict)
            rows.append({"x": float(xf), "V": float(v), "PV": float(pv), "bound": float(bound),
                         "margin": float(margin), "margin_exact": str(margin), "ci95": 0.0, "verdict": verdict})
        return DriftReport("drift-discrete", combine_verdicts(verdicts), rows,
                           {"method": "exact", "K": float(K)})
    if n_mc < 100:
        raise DomainError("n_mc must be >= 100")
    for i, x in enumerate(states):
        x_arr = np.atleast_1d(np.asarray(x, dtype=float))
        v0 = float(model.V(x_arr[None, :])[0])
        nxt = model.run(x_arr, 1, n_mc, seed, key=("drift", i))
        pv, ci = _ci(model.V(nxt))
        bound = v0 - float(phi(v0)) + K
        margin = bound - pv
        verdict = three_sigma_verdict(margin, ci)
        verdicts.append(verdict)
        rows.append({"x": x_arr.tolist() if x_arr.size > 1 else float(x_arr[0]), "V": v0, "PV": pv,
                     "bound": bound, "margin": margin, "ci95": ci, "verdict": verdict})
    return DriftReport("drift-discrete", combine_verdicts(verdicts), rows,
                       {"method": "mc", "n_mc": n_mc, "K": float(K), "seed": seed})


def _trapezoid(y, dt):
    return dt * (0.5 * y[:, 0] + y[:, 1:-1].sum(axis=1) + 0.5 * y[:, -1])


def _continuous_margin(model, phi, K, x0, horizon, n_mc, dt, seed, key):
    paths = simulate_sdde(model.sdde, x0, horizon, dt, n_mc, seed, key=key)
    k0 = paths.n_hist - 1
    pts = paths.path[:, k0:, :]
    B, T, n = pts.shape
    v = np.asarray(model.V(pts.reshape(B * T, n)), dtype=float).reshape(B, T)
    integral = _trapezoid(np.asarray(phi(v), dtype=float), dt) if T > 1 else np.zeros(B)
    z = v[:, -1] + integral
    zbar, ci = _ci(z)
    v0 = float(v[0, 0])
    bound = v0 + K * horizon
    return {"V": v0, "EV_t": float(v[:, -1].mean()), "E_int_phi": float(integral.mean()),
            "bound": bound, "margin": bound - zbar, "ci95": ci}


def check_drift_continuous(model: MarkovModel, phi, K, test_states, horizon: float, n_mc: int, dt: float,
                           seed: int = 0, check_dt: bool = True) -> DriftReport:
    """Check ``E V(X_t) + E int_0^t phi(V(X_u)) du <= V(x) + K t``.

    The time integral uses the trapezoidal rule on the integration grid.
    With ``check_dt`` the check is repeated at ``dt/2``; a note is attached
    when the margin moves by more than one ci95.
    """
    if not model.continuous:
        raise DomainError("check_drift_continuous needs a delay-equation model")
    if model.V is None:
        raise DomainError("model has no Lyapunov function")
    rows, verdicts, notes = [], [], []
    for i, x0 in enumerate(test_states):
        if not isinstance(x0, SegmentState):
            raise DomainError("test states must be SegmentState objects")
        row = _continuous_margin(model, phi, K, x0, horizon, n_mc, dt, seed, ("drift-ct", i))
        if check_dt:
            half = _continuous_margin(model, phi, K, x0, horizon, n_mc, dt / 2, seed, ("drift-ct-half", i))
            row["margin_half_dt"] = half["margin"]
            if abs(half["margin"] - row["margin"]) > max(row["ci95"], half["ci95"]):
                notes.append(f"state {i}: margin moved by more than one ci95 when halving dt (discretization)")
        row["x0"] = float(x0.head[0]) if x0.dim == 1 else x0.head.tolist()
        row["verdict"] = three_sigma_verdict(row["margin"], row["ci95"])
        verdicts.append(row["verdict"])
        rows.append(row)
    return DriftReport("drift-continuous", combine_verdicts(verdicts), rows,
                       {"horizon": horizon, "dt": dt, "n_mc": n_mc, "K": float(K), "seed": seed}, notes)


def check_cumulative_drift(model: MarkovModel, phi, K, x, n: int, n_mc: int = 10_000, seed: int = 0,
                           method: str = "mc", outcomes: Callable | None = None,
                           V_exact: Callable | None = None) -> CheckReport:
    """Check ``sum_{i<n} E_x phi(V(X_i)) <= n K + V(x)``."""
    if model.V is None:
        raise DomainError("model has no Lyapunov function")
    if n < 1:
        raise DomainError("n must be >= 1")
    if method == "exact":
        outcomes, V_exact = _exact_setup(model, outcomes, V_exact)
        ph = _exact_phi(phi)
        x0 = Fraction(str(x))
        law = {x0: Fraction(1)}
        total = Fraction(0)
        for i in range(n):
            total += sum(p * ph(V_exact(s)) for s, p in law.items())
            if i == n - 1:
                break
            nxt: dict = {}
            for s, p in law.items():
                for s2, q in outcomes(s):
                    nxt[s2] = nxt.get(s2, Fraction(0)) + p * q
            law = nxt
        bound = n * Fraction(str(K)) + V_exact(x0)
        margin = bound - total
        return CheckReport("cumulative-drift", "pass" if margin >= 0 else "fail",
                           [{"n": n, "sum": float(total), "bound": float(bound), "margin": float(margin), "ci95": 0.0}],
                           {"method": "exact"})
    x_arr = np.atleast_1d(np.asarray(x, dtype=float))
    paths = model.run_paths(x_arr, n - 1, n_mc, seed, key=("cumdrift",))
    B, T, D = paths.shape
    v = np.asarray(model.V(paths.reshape(B * T, D)), dtype=float).reshape(B, T)
    sums = np.asarray(phi(v), dtype=float).sum(axis=1)
    mean, ci = _ci(sums)
    bound = n * K + float(model.V(x_arr[None, :])[0])
    margin = bound - mean
    verdict = three_sigma_verdict(margin, ci)
    return CheckReport("cumulative-drift", verdict,
                       [{"n": n, "sum": mean, "bound": bound, "margin": margin, "ci95": ci}],
                       {"method": "mc", "n_mc": n_mc, "seed": seed})


# ---------------------------------------------------------------------------
# d-smallness


def level_set_admissible(phi: RateFunction, K: float, R: float, K_ci: float = 0.0) -> tuple[bool, str | None]:
    """``R > phi^{-1}(2K)``; flags R within the uncertainty of an estimated K."""
    thr = float(phi.inverse(2.0 * K))
    if R <= thr:
        return False, f"R={R} does not exceed phi^-1(2K)={thr:.6g}"
    if K_ci > 0:
        hi = float(phi.inverse(2.0 * (K + 3.0 * K_ci)))
        if R <= hi:
            return True, f"R={R} lies within 3 ci of the threshold phi^-1(2K)={thr:.6g}"
    return True, None


def sample_level_set_pairs(V, R: float, low, high, n_pairs: int, seed: int, max_tries: int = 1000):
    """Rejection-sample pairs from the box ``[low, high]`` with ``V(x)+V(y) <= R``."""
    low = np.atleast_1d(np.asarray(low, dtype=float))
    high = np.atleast_1d(np.asarray(high, dtype=float))
    rng = stream(seed, "level-pairs")
    out = []
    for _ in range(max_tries):
        x = rng.uniform(low, high, size=(n_pairs, low.size))
        y = rng.uniform(low, high, size=(n_pairs, low.size))
        keep = (np.asarray(V(x)) + np.asarray(V(y)) <= R) & np.any(x != y, axis=1)
        out.extend(zip(x[keep], y[keep]))
        if len(out) >= n_pairs:
            return out[:n_pairs]
    raise DomainError("could not sample enough pairs from the level set")


def _one_step_pair(model, x, y, n_mc, seed, key, horizon=None, dt=None):
    """CRN samples of ``P(x, .)`` and ``P(y, .)`` as row arrays."""
    if model.continuous:
        px = simulate_sdde(model.sdde, x, horizon, dt, n_mc, seed, key=key).segment(horizon)
        py = simulate_sdde(model.sdde, y, horizon, dt, n_mc, seed, key=key).segment(horizon)
        return px.reshape(n_mc, -1), py.reshape(n_mc, -1)
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    ya = np.atleast_1d(np.asarray(y, dtype=float))
    return model.run(xa, 1, n_mc, seed, key), model.run(ya, 1, n_mc, seed, key)


def _pair_ratios(u, v, denom, cost, paired, kind, n_boot, rng):
    """Point estimate and bootstrap replicates of ``W(P(x), P(y)) / denom``."""
    n = u.shape[0]

    def est(idx):
        uu, vv = u[idx], v[idx]
        if kind == "euclidean" and u.shape[1] == 1:
            return wasserstein_1d(EmpiricalMeasure.uniform(uu), EmpiricalMeasure.uniform(vv)), True
        if n <= EXACT_OT_MAX:
            return wasserstein_exact(EmpiricalMeasure.uniform(uu), EmpiricalMeasure.uniform(vv), cost,
                                     certify=False)[0], True
        return float(np.mean(paired(uu, vv))), False

    w, exact = est(np.arange(n))
    boots = np.array([est(rng.integers(0, n, size=n))[0] for _ in range(n_boot)]) / denom
    return w / denom, boots, exact


@dataclass
class DsmallEstimate:
    rho_hat: float
    ci95: float
    rows: list
    upper_bound_only: bool
    notes: list

    def __iter__(self):
        yield self.rho_hat
        yield self.ci95

    def report(self) -> CheckReport:
        return CheckReport("dsmall", "pass" if self.rho_hat > 3 * self.ci95 else "inconclusive", self.rows,
                           {"rho_hat": self.rho_hat, "ci95": self.ci95, "upper_bound_only": self.upper_bound_only},
                           self.notes)


def estimate_dsmall(model: MarkovModel, metric: BoundedMetric, V, R: float, pair_states, n_mc: int = 512,
                    seed: int = 0, n_boot: int = 50, horizon: float | None = None, dt: float | None = None,
                    phi: RateFunction | None = None, K: float | None = None) -> DsmallEstimate:
    """Estimate ``rho`` in ``W_d(P(x,.), P(y,.)) <= (1 - rho) d(x, y)`` over level-set pairs.

    Both marginals of a pair are sampled with common random numbers, so each
    empirical measure is a faithful sample of its own law while sampling
    noise largely cancels in the distance.  ``W_d`` is exact (quantile sweep
    in 1-D Euclidean, otherwise optimal transport up to 512 samples); larger
    samples fall back to the synchronous-coupling upper bound, and
    ``upper_bound_only`` is set.  ``ci95`` comes from a paired bootstrap of
    the worst-pair ratio.
    """
    notes = []
    if phi is not None and K is not None:
        ok, msg = level_set_admissible(phi, K, R)
        if msg:
            notes.append(msg)
    rng = stream(seed, "dsmall-boot")
    rows, points, boots, all_exact = [], [], [], True
    for i, (x, y) in enumerate(pair_states):
        if model.continuous:
            vx, vy = float(V(x.values[None, :, :])[0]), float(V(y.values[None, :, :])[0])
            dxy = float(metric.paired(x.values.reshape(1, -1), y.values.reshape(1, -1))[0])
        else:
            xa, ya = np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float))
            vx, vy = float(V(xa[None, :])[0]), float(V(ya[None, :])[0])
            dxy = float(metric.paired(xa[None, :], ya[None, :])[0])
        if vx + vy > R:
            raise DomainError(f"pair {i} lies outside the level set V(x)+V(y) <= R")
        if dxy <= 0:
            raise DomainError(f"pair {i} is degenerate: d(x, y) = 0")
        u, v = _one_step_pair(model, x, y, n_mc, seed, ("dsmall", i), horizon, dt)
        ratio, b, exact = _pair_ratios(u, v, dxy, metric.pairwise, metric.paired, metric.kind, n_boot, rng)
        all_exact &= exact
        points.append(ratio)
        boots.append(b)
        rows.append({"pair": i, "d": dxy, "V_sum": vx + vy, "ratio": ratio,
                     "ci95": 1.96 * float(np.std(b, ddof=1)) if n_boot > 1 else 0.0, "exact": exact})
    if not rows:
        raise DomainError("need at least one pair")
    worst = np.max(np.stack(boots), axis=0) if n_boot > 0 else np.array([max(points)])
    rho = 1.0 - max(points)
    ci = max(1.96 * float(np.std(worst, ddof=1)) if n_boot > 1 else 0.0, ROUNDOFF_CI)
    if not all_exact:
        notes.append("upper bound only: some pairs used the synchronous coupling")
    return DsmallEstimate(rho, ci, rows, not all_exact, notes)


# ---------------------------------------------------------------------------
# the auxiliary semimetric l


@dataclass(frozen=True)
class SemimetricL:
    """``l(x,y) = d(x,y)^(1/p) (1 + beta phi(V(x) + V(y)))^(1/q)``, ``1/p + 1/q = 1``.

    ``p = 1`` is allowed as the limit ``q = inf`` where ``l = d``.
    """

    d: BoundedMetric
    V: Callable
    phi: RateFunction
    p: float
    beta: float

    def __post_init__(self):
        if self.p < 1:
            raise ParameterError("need p >= 1")
        if self.beta < 0:
            raise ParameterError("need beta >= 0")
        if not self.d.bounded_by_one:
            raise ParameterError("l needs a metric bounded by 1")

    @property
    def q(self) -> float:
        return math.inf if self.p == 1 else self.p / (self.p - 1.0)

    def _combine(self, dist, vsum):
        inv_q = 0.0 if self.p == 1 else 1.0 / self.q
        return dist ** (1.0 / self.p) * (1.0 + self.beta * np.asarray(self.phi(vsum), dtype=float)) ** inv_q

    def __call__(self, x, y) -> float:
        x = np.atleast_2d(np.asarray(x, dtype=float)).reshape(1, -1)
        y = np.atleast_2d(np.asarray(y, dtype=float)).reshape(1, -1)
        return float(self.paired(x, y)[0])

    def paired(self, x, y) -> np.ndarray:
        vs = np.asarray(self.V(x), dtype=float) + np.asarray(self.V(y), dtype=float)
        return self._combine(self.d.paired(x, y), vs)

    def pairwise(self, x, y) -> np.ndarray:
        vs = np.asarray(self.V(x), dtype=float)[:, None] + np.asarray(self.V(y), dtype=float)[None, :]
        return self._combine(self.d.pairwise(x, y), vs)


def semimetric_l_eval(l: SemimetricL, x, y) -> float:
    return l(x, y)


def contraction_beta(rho: float, q: float, K: float, R: float, phi: RateFunction) -> float:
    """``beta = ((1 + rho/(2 - 2 rho))^(q-1) - 1) / phi(2K + R)``.

    With this weight, pairs in ``V(x)+V(y) <= R`` contract in ``l`` by at
    least ``1 - rho/(2p)`` in one step.
    """
    if not 0 < rho < 1:
        raise DomainError("rho must lie in (0, 1)")
    if not q > 1:
        raise DomainError("q must exceed 1")
    den = float(phi(2.0 * K + R))
    if not den > 0:
        raise DomainError("phi(2K + R) must be positive")
    return ((1.0 + rho / (2.0 - 2.0 * rho)) ** (q - 1.0) - 1.0) / den


def estimate_onestep_l_contraction(model: MarkovModel, l: SemimetricL, pairs, n_mc: int = 512, seed: int = 0,
                                   rho: float | None = None, R: float | None = None, n_boot: int = 50) -> CheckReport:
    """Empirical ``W_l(P(x,.), P(y,.)) / l(x, y)`` per pair (discrete time).

    Pass if every ratio is at most 1.  With ``rho`` and ``R`` given, pairs in
    the level set are also compared against ``1 - rho/(2p)``.
    """
    rng = stream(seed, "l-boot")
    rows, verdicts, notes = [], [], []
    target = None if rho is None else 1.0 - rho / (2.0 * l.p)
    for i, (x, y) in enumerate(pairs):
        xa, ya = np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(y, dtype=float))
        lxy = l(xa, ya)
        if lxy <= 0:
            raise DomainError(f"pair {i} has l(x, y) = 0")
        u, v = _one_step_pair(model, xa, ya, n_mc, seed, ("l-contract", i))
        ratio, b, exact = _pair_ratios(u, v, lxy, l.pairwise, l.paired, "semimetric", n_boot, rng)
        ci = 1.96 * float(np.std(b, ddof=1)) if n_boot > 1 else 0.0
        vsum = float(l.V(xa[None, :])[0] + l.V(ya[None, :])[0])
        row = {"pair": i, "V_sum": vsum, "l": lxy, "ratio": ratio, "ci95": ci, "exact": exact}
        verdict = "pass" if ratio <= 1.0 else "fail"
        if ratio - ci <= 1.0 < ratio + ci:
            notes.append(f"pair {i}: sampling-dominated, ci crosses 1")
            verdict = "inconclusive"
        if target is not None and R is not None and vsum <= R:
            row["case1_target"] = target
            row["meets_case1"] = bool(ratio <= target + 3.0 * ci)
            if not row["meets_case1"]:
                verdict = "fail"
        verdicts.append(verdict)
        rows.append(row)
    return CheckReport("l-contraction", combine_verdicts(verdicts), rows,
                       {"p": l.p, "beta": l.beta, "n_mc": n_mc, "target": target}, notes)
