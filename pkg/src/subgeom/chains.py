"""Markov models: the digit-shift autoregression and delay SDEs.

Randomness is drawn in fixed blocks of ``BLOCK`` trajectories, block ``b``
using ``stream(seed, *key, b)``.  Results therefore depend only on the seed,
the key and the number of trajectories, never on how blocks are scheduled
across workers.  Two calls with the same seed and key consume identical
noise, which is how synchronous couplings are built.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from typing import Callable

import numpy as np

from . import _accel
from .errors import BlowUpError, DomainError, ParameterError
from .rate_kernel import RateFunction
from .rng import as_generator, stream
from .transport import EmpiricalMeasure

BLOCK = 256
BLOWUP = 1e12


def _blocks(n: int):
    for b, start in enumerate(range(0, n, BLOCK)):
        yield b, start, min(BLOCK, n - start)


# ---------------------------------------------------------------------------
# digit-shift chain   X_{n+1} = X_n / 10 + eps,  eps uniform on {0, .1, ..., .9}


def _check_unit(x):
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(xa >= 1):
        raise DomainError("digit chain states live in [0, 1)")


def digit_step(x, rng=None, digit=None):
    """One step: insert a digit right after the decimal point.

    Pass ``digit`` for a deterministic step, otherwise a digit is drawn from
    ``rng``.  Works elementwise on arrays.
    """
    _check_unit(x)
    if digit is None:
        digit = as_generator(rng).integers(0, 10, size=np.shape(x))
    return (np.asarray(x, dtype=float) + digit) / 10.0 if np.ndim(x) else (float(x) + int(digit)) / 10.0


def digit_step_exact(x, digit: int) -> Decimal:
    x = Decimal(str(x)) if not isinstance(x, Decimal) else x
    if not (0 <= x < 1) or not 0 <= digit <= 9:
        raise DomainError("need x in [0, 1) and a digit 0..9")
    with localcontext() as ctx:
        ctx.prec = 200
        return (x + digit) / 10


def digit_reconstruct(x_n, n: int):
    """Recover ``X_0`` as the fractional part of ``10**n * X_n``.

    Exact for ``Decimal``/``str`` input.  For floats a warning is issued
    once accumulated rounding in ``x_n`` may exceed 1e-15.
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    if isinstance(x_n, (Decimal, str)):
        d = Decimal(x_n)
        with localcontext() as ctx:
            ctx.prec = 200
            return d.scaleb(n) % 1
    x = float(x_n)
    if (n + 1) * np.finfo(float).eps * max(abs(x), 1e-300) > 1e-15:
        warnings.warn(
            f"float reconstruction after {n} steps is not exact; use decimal states",
            RuntimeWarning,
            stacklevel=2,
        )
    return math.modf(x * 10.0**n)[0]


def decimal_digits(x) -> tuple[int, int]:
    """``(numerator, D)`` with ``x = numerator / 10**D`` for a terminating decimal."""
    d = Decimal(str(x))
    if not (0 <= d < 1):
        raise DomainError("digit chain states live in [0, 1)")
    sign, digits, exp = d.as_tuple()
    if not isinstance(exp, int):
        raise DomainError("start must be a finite decimal")
    D = max(0, -exp)
    return int(d.scaleb(D)), D


@dataclass(frozen=True)
class ExactDigitMarginal:
    """Law of ``X_n`` as integer numerators over ``10**scale_digits``."""

    numerators: np.ndarray
    scale_digits: int
    weights: np.ndarray | None = None

    @property
    def denominator(self) -> int:
        return 10**self.scale_digits

    def values(self) -> np.ndarray:
        return self.numerators.astype(float) / float(self.denominator)

    def measure(self) -> EmpiricalMeasure:
        if self.weights is None:
            return EmpiricalMeasure.uniform(self.values())
        return EmpiricalMeasure(self.values(), self.weights)

    def int_measure(self) -> EmpiricalMeasure:
        """Measure over exact numerators (for exact support matching)."""
        pts = self.numerators.reshape(-1, 1)
        if self.weights is None:
            return EmpiricalMeasure.uniform(pts)
        return EmpiricalMeasure(pts, self.weights)


def _check_exact_range(D: int, n: int):
    if D + n > 18:
        raise DomainError("exact digit states need D + n <= 18 decimal places")


def digit_enumerate(x0, n: int, scale_digits: int | None = None) -> ExactDigitMarginal:
    """All ``10**n`` equally likely outcomes of ``X_n`` from ``X_0 = x0``.

    ``X_n = (x0 + m) / 10**n`` for ``m = 0..10**n - 1``.
    """
    num, D0 = decimal_digits(x0)
    D = D0 if scale_digits is None else max(D0, scale_digits)
    num *= 10 ** (D - D0)
    _check_exact_range(D, n)
    m = np.arange(10**n, dtype=np.int64)
    return ExactDigitMarginal(num + m * np.int64(10**D), D + n)


def digit_sample_exact(x0, n: int, n_samples: int, seed: int, key="digit", scale_digits: int | None = None):
    """Sample ``X_n`` in exact integer arithmetic (same key => same digits)."""
    num, D0 = decimal_digits(x0)
    D = D0 if scale_digits is None else max(D0, scale_digits)
    num *= 10 ** (D - D0)
    _check_exact_range(D, n)
    out = np.empty(n_samples, dtype=np.int64)
    for b, start, size in _blocks(n_samples):
        digits = stream(seed, key, b).integers(0, 10, size=(size, n))
        acc = np.full(size, num, dtype=np.int64)
        for j in range(n):
            # X_{j+1} numerator over 10**(D+j+1) = numerator of X_j + digit * 10**(D+j)
            acc += digits[:, j].astype(np.int64) * np.int64(10 ** (D + j))
        out[start:start + size] = acc
    return ExactDigitMarginal(out, D + n)


# ---------------------------------------------------------------------------
# segments and delay equations


@dataclass(frozen=True)
class SegmentGrid:
    r: float
    m: int

    def __post_init__(self):
        if not self.r > 0 or self.m < 1:
            raise ParameterError("segment grid needs r > 0 and m >= 1")

    @property
    def dt(self) -> float:
        return self.r / self.m

    @property
    def times(self) -> np.ndarray:
        return np.linspace(-self.r, 0.0, self.m + 1)


@dataclass(frozen=True)
class SegmentState:
    """Path piece ``X(t + s)``, ``-r <= s <= 0``, on a uniform grid."""

    grid: SegmentGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.shape[0] != self.grid.m + 1:
            raise DomainError(f"segment has {v.shape[0]} points, grid needs {self.grid.m + 1}")
        if not np.all(np.isfinite(v)):
            raise DomainError("segment values must be finite")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: SegmentGrid, value, dim: int = 1) -> "SegmentState":
        v = np.broadcast_to(np.asarray(value, dtype=float), (dim,))
        return cls(grid, np.tile(v, (grid.m + 1, 1)))

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @property
    def head(self) -> np.ndarray:
        """Current value ``x(0)``."""
        return self.values[-1]

    def refine(self, factor: int) -> np.ndarray:
        """Values on a grid ``factor`` times finer (linear interpolation)."""
        fine_t = np.linspace(-self.grid.r, 0.0, self.grid.m * factor + 1)
        return np.stack([np.interp(fine_t, self.grid.times, self.values[:, c]) for c in range(self.dim)], axis=1)


@dataclass
class SddeSpec:
    """``dX = f(X_t) dt + g(X_t) dW`` on segments of length ``r``.

    ``drift(seg)`` maps a batch of fine segments, shape ``(B, L, n)`` ordered
    from ``-r`` to ``0``, to ``(B, n)``; ``diffusion(seg)`` returns
    ``(B, n, m_w)``.  ``kernel`` optionally names a compiled fast path
    (scalar presets only).
    """

    drift: Callable
    diffusion: Callable
    r: float
    dim: int = 1
    noise_dim: int = 1
    name: str = "sdde"
    params: dict = field(default_factory=dict)
    kernel: tuple | None = None


def _g_tanh(lo, hi):
    return lambda u: lo + (hi - lo) * 0.5 * (1.0 + np.tanh(u))


def _vk_radial(kappa, alpha, M):
    def f2(v):
        norm = np.linalg.norm(v, axis=-1, keepdims=True)
        scale = np.where(norm >= M, np.maximum(norm, M) ** (alpha - 2.0), M ** (alpha - 2.0))
        return -kappa * v * scale

    return f2


def vk_drift_spec(
    kappa: float = 1.0,
    alpha: float = 1.0,
    M: float = 1.0,
    r: float = 1.0,
    f1: Callable | None = None,
    g_lo: float = 0.5,
    g_hi: float = 1.5,
    delay: float | None = None,
    dim: int = 1,
    check_samples: int = 10_000,
    seed: int = 0,
) -> SddeSpec:
    """Drift ``f = f1(x) + f2(x(0))`` with radial ``f2(v) = -kappa v |v|^(alpha-2)``.

    Outside ``|v| < M`` this gives ``<f2(v), v> = -kappa |v|^alpha``; inside
    ``f2`` is continued linearly.  The diffusion is diagonal,
    ``g(x) = lo + (hi - lo)(1 + tanh x(-delay))/2``: strictly increasing,
    bounded and positive in the delayed value (constant when ``lo == hi``).
    The drift condition is verified on random segments at construction.
    """
    if not kappa > 0 or not 0 < alpha <= 1 or not M > 0:
        raise ParameterError("need kappa > 0, alpha in (0, 1], M > 0")
    if not 0 < g_lo <= g_hi:
        raise ParameterError("need 0 < g_lo <= g_hi")
    delay = r if delay is None else float(delay)
    if not 0 <= delay <= r:
        raise ParameterError("delay must lie in [0, r]")
    f2 = _vk_radial(kappa, alpha, M)
    gfun = _g_tanh(g_lo, g_hi)
    frac = 1.0 - delay / r

    def drift(seg):
        out = f2(seg[:, -1, :])
        if f1 is not None:
            out = out + f1(seg)
        return out

    def diffusion(seg):
        idx = int(round(frac * (seg.shape[1] - 1)))
        g = gfun(seg[:, idx, :])
        return g[:, :, None] * np.eye(dim)[None, :, :]

    spec = SddeSpec(
        drift,
        diffusion,
        r,
        dim,
        dim,
        name="vk",
        params=dict(kappa=kappa, alpha=alpha, M=M, r=r, g_lo=g_lo, g_hi=g_hi, delay=delay),
        kernel=None if (f1 is not None or dim != 1) else (
            _accel.DRIFT_VK, float(kappa), float(alpha), float(M), float(g_lo), float(g_hi), delay
        ),
    )
    check_vk_condition(spec, kappa, alpha, M, check_samples, seed)
    return spec


def check_vk_condition(spec: SddeSpec, kappa, alpha, M, n: int = 10_000, seed: int = 0, m_pts: int = 16):
    """Sample segments with ``|x(0)| >= M`` and assert ``<f(x), x(0)> <= -kappa |x(0)|^alpha``."""
    if n <= 0:
        return
    rng = stream(seed, "vk-check")
    segs = rng.normal(scale=max(M, 1.0) * 3, size=(n, m_pts + 1, spec.dim))
    direction = rng.normal(size=(n, spec.dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = M * np.exp(rng.uniform(0, math.log(100.0), size=(n, 1)))
    segs[:, -1, :] = direction * radius
    head = segs[:, -1, :]
    lhs = np.sum(spec.drift(segs) * head, axis=1)
    rhs = -kappa * np.linalg.norm(head, axis=1) ** alpha
    slack = 1e-12 * np.maximum(1.0, np.abs(rhs))
    if np.any(lhs > rhs + slack):
        raise ParameterError("drift violates <f(x), x(0)> <= -kappa |x(0)|^alpha on sampled segments")


def tanh_delay_spec(kappa=1.0, alpha=1.0, M=1.0, g_lo=0.5, g_hi=1.5, **kw) -> SddeSpec:
    """``dX = f(X(t)) dt + g(X(t-1)) dW`` with ``g`` increasing, bounded, positive."""
    spec = vk_drift_spec(kappa=kappa, alpha=alpha, M=M, r=1.0, g_lo=g_lo, g_hi=g_hi, delay=1.0, **kw)
    spec.name = "tanh-delay"
    return spec


def ou_spec(theta: float = 1.0, sigma: float = 1.0, r: float = 0.1) -> SddeSpec:
    """Ornstein-Uhlenbeck ``dX = -theta X dt + sigma dW`` (no delay dependence)."""

    def drift(seg):
        return -theta * seg[:, -1, :]

    def diffusion(seg):
        return np.full((seg.shape[0], 1, 1), sigma)

    return SddeSpec(
        drift, diffusion, r, 1, 1, name="ou", params=dict(theta=theta, sigma=sigma, r=r),
        kernel=(_accel.DRIFT_LINEAR, float(theta), 1.0, 1.0, float(sigma), float(sigma), 0.0),
    )


def zero_spec(r: float = 1.0, dim: int = 1) -> SddeSpec:
    return SddeSpec(
        lambda seg: np.zeros((seg.shape[0], dim)),
        lambda seg: np.zeros((seg.shape[0], dim, 1)),
        r, dim, 1, name="zero",
    )


def _steps(total: float, dt: float, what: str) -> int:
    k = total / dt
    kr = int(round(k))
    if abs(k - kr) > 1e-9 * max(1.0, k):
        raise DomainError(f"dt must divide the {what}")
    return kr


@dataclass
class SddePaths:
    """Fine-grid paths of a batch, plus enough metadata to cut segments."""

    path: np.ndarray  # (B, L + n_steps, n)
    dt: float
    fine_per_coarse: int
    grid: SegmentGrid

    @property
    def n_hist(self) -> int:
        return self.grid.m * self.fine_per_coarse + 1

    def step_index(self, t: float) -> int:
        return self.n_hist - 1 + _steps(t, self.dt, "recording time") if t > 0 else self.n_hist - 1

    def point(self, t: float) -> np.ndarray:
        return self.path[:, self.step_index(t), :]

    def segment(self, t: float) -> np.ndarray:
        """Segments at time ``t`` on the coarse grid, shape ``(B, m+1, n)``."""
        k = self.step_index(t)
        seg = self.path[:, k - self.n_hist + 1 : k + 1, :]
        return seg[:, :: self.fine_per_coarse, :]


def _noise(seed, key, n_traj, n_steps, noise_dim):
    out = np.empty((n_traj, n_steps, noise_dim))
    for b, start, size in _blocks(n_traj):
        out[start:start + size] = stream(seed, *key, b).standard_normal((size, n_steps, noise_dim))
    return out


def simulate_sdde(
    spec: SddeSpec,
    x0: SegmentState | np.ndarray,
    horizon: float,
    dt: float,
    n_traj: int,
    seed: int,
    key=("sdde",),
    use_kernel: bool = True,
) -> SddePaths:
    """Euler-Maruyama for a batch of trajectories from common or per-trajectory starts.

    ``x0`` is one :class:`SegmentState` or an array of coarse segment values
    of shape ``(n_traj, m+1, n)`` sharing ``grid = SegmentGrid(spec.r, m)``.
    """
    if isinstance(x0, SegmentState):
        grid = x0.grid
        factor = _steps(grid.dt, dt, "segment grid spacing")
        init = np.broadcast_to(x0.refine(factor), (n_traj, grid.m * factor + 1, x0.dim))
    else:
        arr = np.asarray(x0, dtype=float)
        grid = SegmentGrid(spec.r, arr.shape[1] - 1)
        factor = _steps(grid.dt, dt, "segment grid spacing")
        init = np.stack([SegmentState(grid, a).refine(factor) for a in arr])
    if abs(grid.r - spec.r) > 1e-12:
        raise DomainError("segment horizon does not match the equation's delay window")
    if horizon < 0:
        raise DomainError("horizon must be >= 0")
    n_steps = _steps(horizon, dt, "horizon") if horizon > 0 else 0
    n_hist = init.shape[1]
    n = spec.dim
    path = np.empty((n_traj, n_hist + n_steps, n))
    path[:, :n_hist, :] = init
    noise = _noise(seed, key, n_traj, n_steps, spec.noise_dim)
    if n_steps:
        if use_kernel and spec.kernel is not None and n == 1 and spec.noise_dim == 1:
            kind, kappa, alpha, M, lo, hi, delay = spec.kernel
            lag = _steps(delay, dt, "delay") if delay > 0 else 0
            flat = np.ascontiguousarray(path[:, :, 0])
            bad = _accel.em_delay(flat, np.ascontiguousarray(noise[:, :, 0]), n_hist - 1, n_steps, dt,
                                  lag, kind, kappa, alpha, M, lo, hi, BLOWUP)
            if bad >= 0:
                raise BlowUpError(f"|X| exceeded {BLOWUP:g} at step {bad}; reduce dt")
            path[:, :, 0] = flat
        else:
            sq = math.sqrt(dt)
            for s in range(n_steps):
                seg = path[:, s : s + n_hist, :]
                x = seg[:, -1, :]
                g = spec.diffusion(seg)
                nxt = x + spec.drift(seg) * dt + sq * np.einsum("bij,bj->bi", g, noise[:, s, :])
                if not np.all(np.abs(nxt) <= BLOWUP):
                    raise BlowUpError(f"|X| exceeded {BLOWUP:g} at step {s}; reduce dt")
                path[:, s + n_hist, :] = nxt
    return SddePaths(path, dt, factor, grid)


def sdde_integrate(spec: SddeSpec, x0: SegmentState, horizon: float, dt: float, rng) -> SegmentState:
    """Advance one trajectory by ``horizon``; returns the terminal segment.

    ``rng`` is an integer seed (or a Generator, from which a seed is drawn).
    """
    seed = int(rng.integers(2**63)) if isinstance(rng, np.random.Generator) else int(rng)
    paths = simulate_sdde(spec, x0, horizon, dt, 1, seed)
    return SegmentState(x0.grid, paths.segment(horizon)[0])


# ---------------------------------------------------------------------------
# generic model wrapper


@dataclass
class MarkovModel:
    """A Markov model with optional Lyapunov data.

    Discrete time: ``step(states, rng)`` maps a ``(B, D)`` batch one step.
    Continuous time: ``sdde`` holds the equation; states are segments and
    ``V`` is evaluated on the current value ``x(0)`` (shape ``(B, n)``).
    """

    name: str
    step: Callable | None = None
    sdde: SddeSpec | None = None
    V: Callable | None = None
    phi: RateFunction | None = None
    K: float | None = None
    stationary: str | None = None

    @property
    def continuous(self) -> bool:
        return self.sdde is not None

    def run(self, x0, n_steps: int, n_traj: int, seed: int, key=("chain",), workers: int = 1) -> np.ndarray:
        """Terminal states of ``n_traj`` discrete-time trajectories, shape ``(n_traj, D)``."""
        if self.step is None:
            raise DomainError(f"{self.name} is not a discrete-time model")
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))

        def block(args):
            b, start, size = args
            rng = stream(seed, *key, b)
            states = np.tile(x0, (size, 1))
            for _ in range(n_steps):
                states = self.step(states, rng)
            return states

        items = list(_blocks(n_traj))
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(block, items))
        else:
            parts = [block(it) for it in items]
        return np.concatenate(parts, axis=0)

    def run_paths(self, x0, n_steps: int, n_traj: int, seed: int, key=("chain",)) -> np.ndarray:
        """Whole trajectories, shape ``(n_traj, n_steps + 1, D)``."""
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        out = np.empty((n_traj, n_steps + 1, x0.shape[0]))
        for b, start, size in _blocks(n_traj):
            rng = stream(seed, *key, b)
            states = np.tile(x0, (size, 1))
            out[start:start + size, 0] = states
            for j in range(n_steps):
                states = self.step(states, rng)
                out[start:start + size, j + 1] = states
        return out


def digit_chain(phi: RateFunction | None = None, K: float | None = None) -> MarkovModel:
    """Digit-shift chain with ``V(x) = x``; defaults to ``phi(v) = 0.9 v``, ``K = 0.45``."""

    def step(states, rng):
        return (states + rng.integers(0, 10, size=states.shape)) / 10.0

    return MarkovModel(
        "digit",
        step=step,
        V=lambda s: np.asarray(s, dtype=float)[..., 0],
        phi=phi or RateFunction.linear(0.9),
        K=0.45 if K is None else K,
        stationary="uniform01",
    )


def sdde_model(spec: SddeSpec, V=None, phi=None, K=None) -> MarkovModel:
    return MarkovModel(spec.name, sdde=spec, V=V, phi=phi, K=K)


def sample_marginal(model: MarkovModel, x0, n_or_t, n_samples: int, seed: int, observable: str = "segment",
                    dt: float | None = None, key=("marginal",), workers: int = 1) -> EmpiricalMeasure:
    """Equal-weight sample of ``P^n(x0, .)`` (or ``P^t`` for delay equations).

    For delay equations ``observable`` is ``"segment"`` (flattened coarse
    segment per row) or ``"point"`` (the current value ``X(t)``).
    """
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    if not model.continuous:
        n = int(n_or_t)
        return EmpiricalMeasure.uniform(model.run(x0, n, n_samples, seed, key, workers))
    if dt is None:
        raise DomainError("delay equations need an integration step dt")
    paths = simulate_sdde(model.sdde, x0, float(n_or_t), dt, n_samples, seed, key)
    if observable == "point":
        return EmpiricalMeasure.uniform(paths.point(float(n_or_t)))
    if observable != "segment":
        raise DomainError(f"unknown observable {observable!r}")
    seg = paths.segment(float(n_or_t))
    return EmpiricalMeasure.uniform(seg.reshape(seg.shape[0], -1))


# ---------------------------------------------------------------------------
# Lyapunov presets for the drift conditions of delay equations


@dataclass(frozen=True)
class LyapunovPreset:
    name: str
    U: Callable  # function of the current value v, shape (..., n) -> (...)
    phi: RateFunction
    k: float
    M0: float | None
    K_hint: str

    def V(self, x) -> np.ndarray:
        """``V(x) = U(x(0))``; accepts points ``(B, n)`` or segments ``(B, L, n)``."""
        x = np.asarray(x, dtype=float)
        if x.ndim == 3:
            x = x[:, -1, :]
        return self.U(x)


def _exp_bridge(k, alpha, M0):
    """Coefficients of ``a s^2 + b s^4 + c s^6`` meeting exp(k s^alpha) in C^2 at M0."""
    h = math.exp(k * M0**alpha)
    h1 = k * alpha * M0 ** (alpha - 1) * h
    h2 = h * ((k * alpha * M0 ** (alpha - 1)) ** 2 + k * alpha * (alpha - 1) * M0 ** (alpha - 2))
    A = np.array([
        [M0**2, M0**4, M0**6],
        [2 * M0, 4 * M0**3, 6 * M0**5],
        [2.0, 12 * M0**2, 30 * M0**4],
    ])
    return np.linalg.solve(A, np.array([h, h1, h2]))


def lyapunov_presets(name: str, params: dict) -> LyapunovPreset:
    """Lyapunov function and matching rate for the VK drift condition.

    ``exp``  (alpha in (0, 1]): ``U(v) = exp(k |v|^alpha)`` for ``|v| >= M0``
      with ``k = kappa / (2 lambda_+ alpha)`` and
      ``M0 = (C/kappa)^(1/alpha) v (2/k)^(1/alpha) v M``,
      ``C = lambda_+ (alpha - 2) + n Lambda``; phi is ``logpower(alpha)``.
    ``poly`` (alpha = 0): ``U(v) = |v|^k`` with
      ``k = 2 + (2 kappa - n Lambda)/lambda_+ - eps`` (must exceed 2) and
      ``phi(u) = u^((k-2)/k)``.

    params: kappa, lambda_plus, Lambda, n (default 1), M (exp), alpha (exp),
    eps (poly).
    """
    kappa = float(params["kappa"])
    lam_plus = float(params["lambda_plus"])
    Lam = float(params.get("Lambda", lam_plus))
    n = int(params.get("n", 1))
    hint = "K is not given constructively; estimate it with a drift check"
    if kappa <= 0 or lam_plus <= 0:
        raise ParameterError("need kappa > 0 and lambda_plus > 0")
    if name == "exp":
        alpha = float(params["alpha"])
        M = float(params.get("M", 1.0))
        if not 0 < alpha <= 1:
            raise ParameterError("exp preset needs alpha in (0, 1]")
        k = kappa / (2.0 * lam_plus * alpha)
        C = lam_plus * (alpha - 2.0) + n * Lam
        M0 = max((C / kappa) ** (1 / alpha) if C > 0 else 0.0, (2.0 / k) ** (1 / alpha), M)
        a, b, c = _exp_bridge(k, alpha, M0)
        s = np.linspace(0, M0, 2001)
        if np.any(a * s**2 + b * s**4 + c * s**6 < 0):
            raise ParameterError("C^2 polynomial bridge goes negative for these parameters")

        def U(v):
            r = np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=float)), axis=-1)
            rt = np.maximum(r, M0)
            return np.where(r >= M0, np.exp(k * rt**alpha), a * r**2 + b * r**4 + c * r**6)

        return LyapunovPreset("exp", U, RateFunction.logpower(alpha), k, M0, hint)
    if name == "poly":
        eps = float(params.get("eps", 0.5))
        k = 2.0 + (2.0 * kappa - n * Lam) / lam_plus - eps
        if k <= 2.0:
            raise ParameterError(f"k = {k} <= 2: need kappa > n Lambda / 2 and a smaller eps")

        def U(v):
            return np.linalg.norm(np.atleast_1d(np.asarray(v, dtype=float)), axis=-1) ** k

        return LyapunovPreset("poly", U, RateFunction.power((k - 2.0) / k), k, None, hint)
    raise ParameterError(f"unknown Lyapunov preset {name!r}")
