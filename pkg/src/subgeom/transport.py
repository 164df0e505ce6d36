"""Metrics, empirical measures and Wasserstein / total-variation distances."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import sparse
from scipy.optimize import linear_sum_assignment, linprog

from . import _accel
from .errors import ConvergenceError, DomainError, ParameterError, SizeGuardError
from .reports import SCHEMA, dumps
from .rng import stream

MAX_PLAN_ENTRIES = 1_000_000
CERT_TOL = 1e-7


@dataclass(frozen=True)
class BoundedMetric:
    """A metric on states stored as flat float rows.

    kinds:
      ``discrete``            d0(x, y) = 1{x != y}
      ``euclidean``           |x - y| (unbounded; for raw W1 only)
      ``bounded_euclidean``   1 ^ |x - y| / beta
      ``sup_segment``         1 ^ max_k |x_k - y_k| / beta over grid points k,
                              each row holding ``n_points * dim`` values
    """

    kind: str
    beta: float | None = None
    dim: int = 1
    n_points: int | None = None

    def __post_init__(self):
        if self.kind not in ("discrete", "euclidean", "bounded_euclidean", "sup_segment"):
            raise ParameterError(f"unknown metric kind {self.kind!r}")
        if self.kind in ("bounded_euclidean", "sup_segment") and not (self.beta and self.beta > 0):
            raise ParameterError("bounded metrics need beta > 0")

    @classmethod
    def discrete(cls) -> "BoundedMetric":
        return cls("discrete")

    @classmethod
    def euclidean(cls, dim: int = 1) -> "BoundedMetric":
        return cls("euclidean", None, dim)

    @classmethod
    def bounded(cls, beta: float, dim: int = 1) -> "BoundedMetric":
        return cls("bounded_euclidean", float(beta), dim)

    @classmethod
    def sup_segment(cls, beta: float, n_points: int, dim: int = 1) -> "BoundedMetric":
        return cls("sup_segment", float(beta), dim, int(n_points))

    @classmethod
    def from_spec(cls, spec) -> "BoundedMetric":
        """Parse ``euclid1d``, ``discrete``, ``beta:0.5`` or a config dict."""
        if isinstance(spec, BoundedMetric):
            return spec
        if isinstance(spec, dict):
            kind = spec["kind"]
            if kind in ("euclid1d", "euclidean"):
                return cls.euclidean(int(spec.get("dim", 1)))
            if kind == "discrete":
                return cls.discrete()
            if kind in ("beta", "bounded", "bounded_euclidean"):
                return cls.bounded(float(spec["beta"]), int(spec.get("dim", 1)))
            if kind in ("sup", "sup_segment"):
                return cls.sup_segment(float(spec["beta"]), int(spec["n_points"]), int(spec.get("dim", 1)))
            raise ParameterError(f"unknown metric kind {kind!r}")
        name, _, arg = str(spec).partition(":")
        if name in ("euclid1d", "euclidean"):
            return cls.euclidean()
        if name == "discrete":
            return cls.discrete()
        if name in ("beta", "bounded"):
            return cls.bounded(float(arg))
        raise ParameterError(f"unknown metric {spec!r}")

    @property
    def bounded_by_one(self) -> bool:
        return self.kind != "euclidean"

    def pairwise(self, x, y) -> np.ndarray:
        x = _as_rows(x)
        y = _as_rows(y)
        if self.kind == "discrete":
            return np.any(x[:, None, :] != y[None, :, :], axis=2).astype(float)
        if self.kind == "sup_segment":
            a = x.reshape(x.shape[0], self.n_points, -1).astype(float)
            b = y.reshape(y.shape[0], self.n_points, -1).astype(float)
            return _accel.sup_cost(np.ascontiguousarray(a), np.ascontiguousarray(b), self.beta)
        diff = x[:, None, :].astype(float) - y[None, :, :]
        dist = np.sqrt(np.sum(diff * diff, axis=2))
        if self.kind == "bounded_euclidean":
            dist = np.minimum(dist / self.beta, 1.0)
        return dist

    def paired(self, x, y) -> np.ndarray:
        """Row-by-row distances ``d(x[i], y[i])``."""
        x = _as_rows(x)
        y = _as_rows(y)
        if self.kind == "discrete":
            return np.any(x != y, axis=1).astype(float)
        if self.kind == "sup_segment":
            a = x.reshape(x.shape[0], self.n_points, -1)
            b = y.reshape(y.shape[0], self.n_points, -1)
            dist = np.sqrt(np.max(np.sum((a - b) ** 2, axis=2), axis=1))
        else:
            dist = np.sqrt(np.sum((x - y) ** 2, axis=1))
        if self.kind in ("bounded_euclidean", "sup_segment"):
            dist = np.minimum(dist / self.beta, 1.0)
        return dist

    def __call__(self, x, y) -> float:
        return float(self.paired(np.atleast_2d(np.asarray(x, dtype=float)).reshape(1, -1),
                                 np.atleast_2d(np.asarray(y, dtype=float)).reshape(1, -1))[0])


def _as_rows(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim == 1:
        return x[:, None]
    if x.ndim > 2:
        return x.reshape(x.shape[0], -1)
    return x


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finite weighted sample; ``points`` has one state per row."""

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = _as_rows(self.points)
        w = np.asarray(self.weights, dtype=float).ravel()
        if pts.shape[0] == 0:
            raise DomainError("empirical measure needs at least one point")
        if pts.shape[0] != w.shape[0]:
            raise DomainError("points and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise DomainError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, points) -> "EmpiricalMeasure":
        pts = _as_rows(points)
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))

    @classmethod
    def normalized(cls, points, weights) -> "EmpiricalMeasure":
        w = np.asarray(weights, dtype=float)
        return cls(points, w / w.sum())

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def is_uniform(self) -> bool:
        return bool(np.all(self.weights == self.weights[0]))

    def expect(self, fn) -> float:
        return float(np.dot(self.weights, np.asarray(fn(self.points), dtype=float).ravel()))

    # -- serialization -----------------------------------------------------
    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            for row, wt in zip(self.points, self.weights):
                w.writerow([repr(float(v)) for v in row] + [repr(float(wt))])

    @classmethod
    def from_csv(cls, path) -> "EmpiricalMeasure":
        rows = []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                try:
                    rows.append([float(v) for v in rec])
                except ValueError:
                    if rows:
                        raise
                    continue  # header line
        arr = np.array(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] < 2:
            raise DomainError(f"{path}: expected rows 'value[,value...],weight'")
        return cls.normalized(arr[:, :-1], arr[:, -1])

    def to_json(self) -> str:
        return dumps({"schema": SCHEMA, "points": self.points.tolist(), "weights": self.weights.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "EmpiricalMeasure":
        obj = json.loads(text)
        if isinstance(obj, list):
            arr = np.array(obj, dtype=float)
            return cls.normalized(arr[:, :-1], arr[:, -1])
        return cls.normalized(np.array(obj["points"], dtype=float), obj["weights"])


def load_measure(path) -> EmpiricalMeasure:
    path = str(path)
    if path.endswith(".json"):
        with open(path) as fh:
            return EmpiricalMeasure.from_json(fh.read())
    return EmpiricalMeasure.from_csv(path)


@dataclass(frozen=True)
class TransportPlan:
    source: np.ndarray
    target: np.ndarray
    mass: np.ndarray
    cost: float
    n_source: int
    n_target: int
    dual_source: np.ndarray | None = None
    dual_target: np.ndarray | None = None

    def marginals(self) -> tuple[np.ndarray, np.ndarray]:
        a = np.bincount(self.source, weights=self.mass, minlength=self.n_source)
        b = np.bincount(self.target, weights=self.mass, minlength=self.n_target)
        return a, b

    def to_json(self) -> str:
        edges = [
            {"source": int(i), "target": int(j), "mass": float(m)}
            for i, j, m in zip(self.source, self.target, self.mass)
        ]
        return dumps({"schema": SCHEMA, "cost": float(self.cost), "edges": edges})


# ---------------------------------------------------------------------------


def wasserstein_1d(mu: EmpiricalMeasure, nu: EmpiricalMeasure, metric: BoundedMetric | None = None) -> float:
    """Exact W1 on the real line via the monotone (quantile) coupling.

    Only the raw Euclidean cost is accepted: for the truncated cost
    ``1 ^ |u|/beta`` the monotone coupling is not optimal in general
    (mass shared by both measures should stay put), so bounded metrics
    must go through :func:`wasserstein_exact`.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise DomainError("wasserstein_1d needs scalar states")
    if metric is not None and metric.kind != "euclidean":
        raise DomainError(
            f"monotone coupling is not optimal for metric {metric.kind!r}; use wasserstein_exact"
        )
    x = mu.points[:, 0].astype(float)
    y = nu.points[:, 0].astype(float)
    ix = np.argsort(x, kind="stable")
    iy = np.argsort(y, kind="stable")
    return float(_accel.quantile_sweep(x[ix], mu.weights[ix], y[iy], nu.weights[iy]))


def wasserstein_to_uniform(mu: EmpiricalMeasure, low: float = 0.0, high: float = 1.0) -> float:
    """Exact W1 between a 1-D empirical measure and Uniform[low, high)."""
    if mu.dim != 1:
        raise DomainError("wasserstein_to_uniform needs scalar states")
    x = mu.points[:, 0].astype(float)
    order = np.argsort(x, kind="stable")
    xs = (x[order] - low) / (high - low)
    cw = np.cumsum(mu.weights[order])
    cw[-1] = 1.0
    a = np.concatenate(([0.0], cw[:-1]))
    b = cw
    below = 0.5 * ((b - xs) ** 2 - (a - xs) ** 2)
    above = 0.5 * ((xs - a) ** 2 - (xs - b) ** 2)
    inside = 0.5 * ((xs - a) ** 2 + (b - xs) ** 2)
    piece = np.where(xs <= a, below, np.where(xs >= b, above, inside))
    return float(np.sum(piece) * (high - low))


def _assignment_potentials(c: np.ndarray, perm: np.ndarray):
    """Dual potentials certifying an optimal assignment (Bellman-Ford)."""
    n = c.shape[0]
    matched = c[np.arange(n), perm]
    p = np.empty_like(c)
    p[perm] = c - matched[:, None]
    # improvements at roundoff level come from ties, not from a better assignment
    tol = 1e-12 * max(1.0, float(np.abs(c).max()))
    dist = np.zeros(n)
    for _ in range(n + 1):
        new = np.minimum(dist, np.min(dist[:, None] + p, axis=0))
        if np.all(dist - new <= tol):
            break
        dist = new
    else:
        raise ConvergenceError("assignment is not optimal (negative cycle in residual graph)")
    v = dist
    u = matched - v[perm]
    return u, v


def _solve_lp(c: np.ndarray, a: np.ndarray, b: np.ndarray):
    n, m = c.shape
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    a_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate((a, b))
    b_eq[n:] *= a.sum() / b.sum()
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise ConvergenceError(f"transport LP failed: {res.message}")
    x = res.x.reshape(n, m)
    duals = res.eqlin.marginals
    return x, duals[:n], duals[n:]


def wasserstein_exact(mu: EmpiricalMeasure, nu: EmpiricalMeasure, metric, certify: bool = True):
    """Exact discrete optimal transport; returns ``(cost, TransportPlan)``.

    ``metric`` is a :class:`BoundedMetric` or any callable ``(X, Y) -> cost
    matrix``.  Equal-size uniform instances are solved as an assignment
    problem (optimal plans sit on permutations); general weights go through
    the transportation LP.  With ``certify`` the returned duals are checked
    for feasibility and complementary slackness within 1e-7.
    """
    n, m = len(mu), len(nu)
    if n * m > MAX_PLAN_ENTRIES:
        raise SizeGuardError(f"{n}x{m} transport instance exceeds {MAX_PLAN_ENTRIES} plan entries")
    cost_fn = metric.pairwise if isinstance(metric, BoundedMetric) else metric
    c = np.asarray(cost_fn(mu.points, nu.points), dtype=float)
    u = v = None
    if n == m and mu.is_uniform() and nu.is_uniform():
        rows, cols = linear_sum_assignment(c)
        src, tgt = rows, cols
        mass = np.full(n, 1.0 / n)
        if certify:
            perm = np.empty(n, dtype=int)
            perm[rows] = cols
            u, v = _assignment_potentials(c, perm)
    else:
        x, u, v = _solve_lp(c, mu.weights, nu.weights)
        x[x < 1e-15] = 0.0
        src, tgt = np.nonzero(x)
        mass = x[src, tgt]
    total = float(np.dot(mass, c[src, tgt]))
    plan = TransportPlan(src, tgt, mass, total, n, m, u, v)
    if certify:
        reduced = c - u[:, None] - v[None, :]
        gap = abs(total - (np.dot(mu.weights, u) + np.dot(nu.weights, v)))
        if reduced.min() < -CERT_TOL or np.abs(reduced[src, tgt]).max() > CERT_TOL or gap > CERT_TOL * max(1.0, total):
            raise ConvergenceError("transport solution failed the optimality certificate")
    return total, plan


def tv_distance(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> float:
    """``sum_s |mu(s) - nu(s)|`` over the merged support (exact row matching)."""
    if mu.dim != nu.dim:
        raise DomainError("measures live on different spaces")
    pts = np.concatenate((mu.points, nu.points))
    _, inv = np.unique(pts, axis=0, return_inverse=True)
    inv = inv.ravel()
    k = inv.max() + 1
    a = np.bincount(inv[: len(mu)], weights=mu.weights, minlength=k)
    b = np.bincount(inv[len(mu):], weights=nu.weights, minlength=k)
    # 2 (1 - overlap) equals sum |a - b| and is exactly 2 for disjoint supports
    return float(2.0 * (1.0 - np.sum(np.minimum(a, b))))


class CouplingEstimate(NamedTuple):
    mean: float
    ci95: float


COUPLING_BLOCK = 1024


def coupling_upper_bound(coupled_sampler, metric: BoundedMetric, n_samples: int, seed: int) -> CouplingEstimate:
    """Monte Carlo ``E d(X, Y)`` under a coupling: an upper bound on ``W_d``.

    ``coupled_sampler(rng, n)`` returns two arrays of ``n`` coupled states.
    Samples are drawn in fixed blocks, each from its own stream, so the
    result only depends on ``seed`` and ``n_samples``.
    """
    if n_samples < 2:
        raise DomainError("coupling_upper_bound needs n_samples >= 2")
    if n_samples < 100:
        warnings.warn("ci95 is unreliable with fewer than 100 samples", stacklevel=2)
    dists = []
    for blk, start in enumerate(range(0, n_samples, COUPLING_BLOCK)):
        size = min(COUPLING_BLOCK, n_samples - start)
        x, y = coupled_sampler(stream(seed, "coupling", blk), size)
        dists.append(metric.paired(x, y))
    d = np.concatenate(dists)
    sd = float(np.std(d, ddof=1))
    return CouplingEstimate(float(d.mean()), 1.96 * sd / math.sqrt(n_samples))
