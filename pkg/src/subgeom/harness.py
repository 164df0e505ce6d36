"""Convergence experiments, curve files and rate-constant fitting."""
from __future__ import annotations

import json
import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .chains import (
    MarkovModel,
    SegmentGrid,
    SegmentState,
    decimal_digits,
    digit_enumerate,
    digit_chain,
    digit_sample_exact,
    lyapunov_presets,
    ou_spec,
    sdde_model,
    simulate_sdde,
    vk_drift_spec,
)
from .errors import DegenerateFitError, DomainError, ParameterError
from .rate_kernel import RateBoundParams, RateFunction, log_rate_bound, rate_bound
from .reports import SCHEMA, dumps
from .transport import BoundedMetric, EmpiricalMeasure, wasserstein_exact, wasserstein_to_uniform

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

DIGIT_ENUM_MAX = 6
CSV_HEADER = "t,distance,ci95,bound"


class SurrogateWarning(UserWarning):
    """The reference measure is a long-run sample, not the invariant law."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one convergence experiment.

    ``model`` is a dict with ``kind`` in ``digit``, ``vk`` or ``ou`` plus
    its parameters (``m`` sets the number of coarse segment intervals for
    delay equations).  ``mode`` is ``reference`` (distance to the invariant
    law or a long-run surrogate) or ``two_start`` (distance between the
    laws started at ``x0`` and ``y0``, driven by common noise).  ``fit`` is
    ``None``, ``"auto"`` or a dict with ``C1`` and ``C2``.
    """

    model: dict
    schedule: list
    seed: int
    mode: str = "reference"
    metric: object = None
    rate: dict = field(default_factory=lambda: {"phi": "linear:1", "epsilon": 0.1})
    x0: float = 0.0
    y0: float | None = None
    n_samples: int = 2000
    replicates: int = 4
    dt: float = 0.01
    V0: float = 0.0
    fit: object = None
    exact: bool = True
    workers: int = 1
    out_csv: str | None = None
    out_json: str | None = None

    def __post_init__(self):
        if self.seed is None:
            raise ParameterError("config needs an explicit seed")
        self.seed = int(self.seed)
        self.schedule = [float(t) for t in self.schedule]
        if not self.schedule:
            raise ParameterError("schedule is empty")
        if any(b <= a for a, b in zip(self.schedule, self.schedule[1:])):
            raise ParameterError("schedule must be strictly increasing")
        if self.schedule[0] < 0:
            raise ParameterError("schedule times must be >= 0")
        if self.mode not in ("reference", "two_start"):
            raise ParameterError(f"unknown mode {self.mode!r}")
        if self.mode == "two_start" and self.y0 is None:
            raise ParameterError("two_start mode needs y0")
        if self.model.get("kind") not in ("digit", "vk", "ou"):
            raise ParameterError(f"unknown model kind {self.model.get('kind')!r}")
        if self.n_samples < 1 or self.replicates < 1:
            raise ParameterError("n_samples and replicates must be positive")
        if self.n_samples % self.replicates:
            raise ParameterError("n_samples must be divisible by replicates")
        if self.model["kind"] == "digit" and any(t != int(t) for t in self.schedule):
            raise ParameterError("digit chain schedules are integer step counts")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        out = d.pop("output", {}) or {}
        d.setdefault("out_csv", out.get("csv"))
        d.setdefault("out_json", out.get("json"))
        if "seed" not in d:
            raise ParameterError("config needs an explicit seed")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        p = Path(path)
        text = p.read_text()
        d = tomllib.loads(text) if p.suffix == ".toml" else json.loads(text)
        return cls.from_dict(d)

    def phi(self) -> RateFunction:
        return RateFunction.from_config(self.rate["phi"])

    @property
    def epsilon(self) -> float:
        return float(self.rate.get("epsilon", 0.1))


# ---------------------------------------------------------------------------
# curves


@dataclass
class CurveRow:
    t: float
    distance: float
    ci95: float
    bound: float | None = None
    floor: float | None = None


@dataclass
class ConvergenceCurve:
    rows: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ts = [r.t for r in self.rows]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise DomainError("curve times must be strictly increasing")
        if any(r.distance < 0 for r in self.rows):
            raise DomainError("distances must be nonnegative")

    @property
    def t(self) -> np.ndarray:
        return np.array([r.t for r in self.rows])

    @property
    def distance(self) -> np.ndarray:
        return np.array([r.distance for r in self.rows])

    @property
    def ci95(self) -> np.ndarray:
        return np.array([r.ci95 for r in self.rows])

    def to_csv(self) -> str:
        lines = [f"# schema: {SCHEMA}"]
        for k in sorted(self.meta):
            if isinstance(self.meta[k], (int, float, str)):
                lines.append(f"# {k}: {self.meta[k]}")
        lines.append(CSV_HEADER)
        for r in self.rows:
            b = "" if r.bound is None else repr(float(r.bound))
            lines.append(f"{float(r.t)!r},{float(r.distance)!r},{float(r.ci95)!r},{b}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return dumps({"schema": SCHEMA, "meta": self.meta, "rows": [asdict(r) for r in self.rows]})

    @classmethod
    def from_csv(cls, text: str) -> "ConvergenceCurve":
        rows, meta = [], {}
        for line in text.splitlines():
            if line.startswith("#"):
                k, _, v = line[1:].partition(":")
                meta[k.strip()] = v.strip()
                continue
            if not line.strip() or line.strip() == CSV_HEADER:
                continue
            t, d, c, b = (line.split(",") + [""])[:4]
            rows.append(CurveRow(float(t), float(d), float(c), float(b) if b else None))
        return cls(rows, meta)

    def write(self, csv_path=None, json_path=None) -> None:
        if csv_path:
            Path(csv_path).write_text(self.to_csv())
        if json_path:
            Path(json_path).write_text(self.to_json())


# ---------------------------------------------------------------------------
# digit chain experiments (exact integer arithmetic)


def _digit_reference(cfg: ExperimentConfig):
    rows = []
    for t in cfg.schedule:
        n = int(t)
        if cfg.exact and n <= DIGIT_ENUM_MAX:
            w = wasserstein_to_uniform(digit_enumerate(cfg.x0, n).measure()) if n else wasserstein_to_uniform(
                EmpiricalMeasure.uniform([float(cfg.x0)]))
            rows.append(CurveRow(t, w, 0.0))
            continue
        size = cfg.n_samples // cfg.replicates
        ws = []
        for rep in range(cfg.replicates):
            s = digit_sample_exact(cfg.x0, n, size, cfg.seed, key=f"ref-{rep}")
            ws.append(wasserstein_to_uniform(s.measure()))
        rows.append(CurveRow(t, float(np.mean(ws)), _ci(ws)))
    return rows, {}


def _digits(x) -> int:
    return decimal_digits(x)[1]


def _digit_two_start(cfg: ExperimentConfig):
    """W1 between the laws from ``x0`` and ``y0`` under common digits.

    Both samples are integer numerators over one denominator, so sorting
    and differencing is exact; the result is rounded once at the end.
    """
    D = max(_digits(cfg.x0), _digits(cfg.y0))
    rows = []
    for t in cfg.schedule:
        n = int(t)
        if cfg.exact and n <= DIGIT_ENUM_MAX:
            a = digit_enumerate(cfg.x0, n, D).numerators
            b = digit_enumerate(cfg.y0, n, D).numerators
        else:
            a = digit_sample_exact(cfg.x0, n, cfg.n_samples, cfg.seed, key="two-start", scale_digits=D).numerators
            b = digit_sample_exact(cfg.y0, n, cfg.n_samples, cfg.seed, key="two-start", scale_digits=D).numerators
        diff = np.abs(np.sort(a) - np.sort(b))
        total = sum(int(v) for v in diff)
        w = Fraction(total, len(a) * 10 ** (D + n))
        rows.append(CurveRow(t, float(w), 0.0))
    return rows, {"coupling": "synchronous"}


# ---------------------------------------------------------------------------
# delay-equation experiments


def build_sdde(model: dict):
    kind = model["kind"]
    if kind == "vk":
        keys = ("kappa", "alpha", "M", "r", "g_lo", "g_hi", "delay")
        return vk_drift_spec(**{k: model[k] for k in keys if k in model})
    if kind == "ou":
        return ou_spec(float(model.get("theta", 1.0)), float(model.get("sigma", 1.0)), float(model.get("r", 0.1)))
    raise ParameterError(f"{kind!r} is not a delay equation")


def build_model(model: dict) -> MarkovModel:
    """Model from a config dict; delay equations may carry a ``lyapunov`` preset."""
    if model["kind"] == "digit":
        return digit_chain()
    spec = build_sdde(model)
    lyap = model.get("lyapunov")
    if lyap is None:
        return sdde_model(spec)
    preset = lyapunov_presets(lyap["preset"], lyap.get("params", {}))
    return sdde_model(spec, preset.V, preset.phi, lyap.get("K"))


def _segment_metric(cfg: ExperimentConfig, n_points: int) -> BoundedMetric:
    m = cfg.metric
    if m is None:
        return BoundedMetric.sup_segment(1.0, n_points)
    if isinstance(m, (int, float)):
        return BoundedMetric.sup_segment(float(m), n_points)
    if isinstance(m, dict) and m.get("kind") in ("sup", "sup_segment"):
        return BoundedMetric.sup_segment(float(m["beta"]), n_points, int(m.get("dim", 1)))
    return BoundedMetric.from_spec(m)


def _ci(ws) -> float:
    ws = np.asarray(ws, dtype=float)
    return 1.96 * float(ws.std(ddof=1)) / math.sqrt(ws.size) if ws.size > 1 else 0.0


def _replicate_w(a, b, metric, reps, workers):
    """Mean and ci95 of exact W over ``reps`` disjoint equal-size blocks."""
    size = a.shape[0] // reps

    def one(i):
        sl = slice(i * size, (i + 1) * size)
        return wasserstein_exact(EmpiricalMeasure.uniform(a[sl]), EmpiricalMeasure.uniform(b[sl]), metric,
                                 certify=False)[0]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            ws = list(pool.map(one, range(reps)))
    else:
        ws = [one(i) for i in range(reps)]
    return float(np.mean(ws)), _ci(ws)


def _sdde_rows(cfg: ExperimentConfig):
    spec = build_sdde(cfg.model)
    grid = SegmentGrid(spec.r, int(cfg.model.get("m", 10)))
    metric = _segment_metric(cfg, grid.m + 1)
    horizon = cfg.schedule[-1]
    N = cfg.n_samples
    px = simulate_sdde(spec, SegmentState.constant(grid, cfg.x0), horizon, cfg.dt, N, cfg.seed, key=("start",))
    meta = {"dt": cfg.dt, "segment_points": grid.m + 1, "beta": metric.beta, "replicates": cfg.replicates}
    if cfg.mode == "two_start":
        # same key: both starts see identical noise
        py = simulate_sdde(spec, SegmentState.constant(grid, cfg.y0), horizon, cfg.dt, N, cfg.seed, key=("start",))
        floor = None
        meta["coupling"] = "common noise"
    else:
        long_t = 10.0 * horizon
        ref = simulate_sdde(spec, SegmentState.constant(grid, cfg.x0), long_t, cfg.dt, 4 * N, cfg.seed,
                            key=("surrogate",)).segment(long_t).reshape(4 * N, -1)
        refs = ref[:N]
        floor, _ = _replicate_w(ref[N:2 * N], ref[2 * N:3 * N], metric, cfg.replicates, cfg.workers)
        warnings.warn(f"reference is a long-run surrogate at t={long_t:g}; sampling floor ~ {floor:.3g}",
                      SurrogateWarning, stacklevel=3)
        meta["surrogate_t"] = long_t
        meta["sampling_floor"] = floor
    rows = []
    for t in cfg.schedule:
        a = px.segment(t).reshape(N, -1)
        b = py.segment(t).reshape(N, -1) if cfg.mode == "two_start" else refs
        d, ci = _replicate_w(a, b, metric, cfg.replicates, cfg.workers)
        rows.append(CurveRow(t, d, ci, None, floor))
    return rows, meta


# ---------------------------------------------------------------------------
# orchestration


def run_convergence_experiment(cfg: ExperimentConfig) -> ConvergenceCurve:
    """Distance curve over ``cfg.schedule``; optionally with a fitted or given bound.

    Files named in the config are written deterministically: identical
    config and seed give byte-identical CSV and JSON.
    """
    kind = cfg.model["kind"]
    if kind == "digit":
        if cfg.mode == "two_start":
            rows, meta = _digit_two_start(cfg)
        else:
            rows, meta = _digit_reference(cfg)
            meta["reference"] = "uniform[0,1)"
    else:
        rows, meta = _sdde_rows(cfg)
    meta.update({"model": kind, "mode": cfg.mode, "seed": cfg.seed, "n_samples": cfg.n_samples})
    curve = ConvergenceCurve(rows, meta)
    if cfg.fit is not None:
        phi, eps = cfg.phi(), cfg.epsilon
        if cfg.fit == "auto":
            C1, C2, resid = fit_rate_constants(curve, phi, eps, cfg.V0)
            meta["fit_residual"] = resid
        else:
            C1, C2 = float(cfg.fit["C1"]), float(cfg.fit["C2"])
        params = RateBoundParams(C1, C2, eps, cfg.V0)
        bounds = np.atleast_1d(rate_bound(phi, params, curve.t))
        for r, b in zip(curve.rows, bounds):
            r.bound = float(b)
        meta.update({"C1": C1, "C2": C2, "epsilon": eps, "phi": str(phi.to_config())})
    curve.write(cfg.out_csv, cfg.out_json)
    return curve


# ---------------------------------------------------------------------------
# fitting


@dataclass(frozen=True)
class RateFit:
    C1: float
    C2: float
    residual: float
    C1_least_squares: float
    adjustment: float

    def __iter__(self):
        yield self.C1
        yield self.C2
        yield self.residual


def fit_rate_constants(curve: ConvergenceCurve, phi: RateFunction, epsilon: float, V: float = 0.0,
                       log_c2_range=(-25.0, 10.0)) -> RateFit:
    """Least squares of ``log distance`` against ``log rate_bound`` over ``(C1, C2)``.

    Uses points above three times their ci95 (and above the sampling floor
    if one is recorded).  For fixed ``C2`` the optimal ``log C1`` is a mean,
    so only ``log C2`` is searched (grid, then bounded Brent).  ``C1`` is
    then raised just enough for the bound to dominate every fitted point;
    ``residual`` is the RMS log error of the least-squares fit.
    """
    t, d, ci = curve.t, curve.distance, curve.ci95
    floor = np.array([r.floor or 0.0 for r in curve.rows])
    keep = (d > 3.0 * ci) & (d > floor) & (d > 0)
    if keep.sum() < 4:
        raise DegenerateFitError("need at least 4 points above the sampling floor")
    t, y = t[keep], np.log(d[keep])
    if np.ptp(y) < 1e-9:
        raise DegenerateFitError("curve is flat; the rate constants are not identifiable")

    def profile(lc2):
        shape = log_rate_bound(phi, RateBoundParams(1.0, math.exp(lc2), epsilon, V), t)
        lc1 = float(np.mean(y - shape))
        r = y - shape - lc1
        return float(np.dot(r, r)), lc1

    grid = np.linspace(*log_c2_range, 141)
    sse = [profile(g)[0] for g in grid]
    i = int(np.argmin(sse))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    res = minimize_scalar(lambda g: profile(g)[0], bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12})
    lc2 = float(res.x) if res.fun <= sse[i] else float(grid[i])
    s, lc1 = profile(lc2)
    C1, C2 = math.exp(lc1), math.exp(lc2)
    fitted = log_rate_bound(phi, RateBoundParams(C1, C2, epsilon, V), t)
    adj = max(1.0, float(np.exp(np.max(y - fitted))))
    return RateFit(C1 * adj, C2, math.sqrt(s / t.size), C1, adj)


# ---------------------------------------------------------------------------
# shape diagnostics


def burn_in_index(curve: ConvergenceCurve, level: float = 0.95) -> int:
    """First row whose distance falls below ``level`` (bounded metrics saturate at 1)."""
    below = np.nonzero(curve.distance < level)[0]
    if below.size == 0:
        raise DomainError("curve never leaves the saturated regime")
    return int(below[0])


def nonincreasing_after(curve: ConvergenceCurve, start: int = 0) -> tuple[bool, float]:
    """Whether ``d[k+1] <= d[k] + 3 ci`` for consecutive rows from ``start``.

    ``ci`` is the combined ci95 of both rows.  Returns the verdict and the
    largest excess ``d[k+1] - d[k] - 3 ci`` (negative when monotone).
    """
    d, ci = curve.distance[start:], curve.ci95[start:]
    if d.size < 2:
        return True, -math.inf
    excess = np.diff(d) - 3.0 * np.hypot(ci[1:], ci[:-1])
    return bool(np.all(excess <= 0)), float(excess.max())


def log_r2(curve: ConvergenceCurve, power: float, start: int = 0, floor_factor: float = 3.0) -> float:
    """R^2 of ``log d`` regressed on ``t**power`` over rows above ``floor_factor * ci``."""
    t, d, ci = curve.t[start:], curve.distance[start:], curve.ci95[start:]
    keep = (d > floor_factor * ci) & (d > 0)
    if keep.sum() < 3:
        raise DegenerateFitError("need at least 3 points for a regression")
    x, y = t[keep] ** power, np.log(d[keep])
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    r = y - A @ coef
    return 1.0 - float(np.dot(r, r)) / float(np.sum((y - y.mean()) ** 2))
