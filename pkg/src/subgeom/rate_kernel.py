"""Rate functions, the clock transform H, and the subgeometric bound.

A rate function ``phi`` is concave, increasing to infinity, with
``phi(0) = 0``.  Its clock is

    H(x) = integral_1^x du / phi(u),   x >= 1,

and a convergence bound in Wasserstein distance has the shape

    C1 (1 + V(x)) / phi(H^{-1}(C2 t)) ** (1 - eps).

``C1`` and ``C2`` are never known in closed form; they are supplied by the
caller or fitted (see :mod:`subgeom.harness`).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq

from .errors import ConvergenceError, DomainError, ParameterError, UnsupportedKindError
from .quadrature import integrate, integrate_scalar
from .reports import CheckReport

RTOL = 1e-10
ATOL = 1e-14
BISECT_MAX = 200
PETROV_XMIN = 1e-12


def _as_array_fn(fn):
    """Wrap a scalar callable so it maps arrays elementwise."""

    def wrapped(x):
        x = np.asarray(x, dtype=float)
        try:
            out = np.asarray(fn(x), dtype=float)
            if out.shape == x.shape:
                return out
        except Exception:
            pass
        return np.vectorize(lambda v: float(fn(float(v))), otypes=[float])(x)

    return wrapped


@dataclass(frozen=True)
class RateFunction:
    """Concave rate ``phi`` with derivative and inverse.

    Use the constructors :meth:`linear`, :meth:`power`, :meth:`logpower` and
    :meth:`custom` rather than building instances by hand.
    """

    kind: str
    params: tuple = ()
    _phi: Callable | None = field(default=None, compare=False, repr=False)
    _dphi: Callable | None = field(default=None, compare=False, repr=False)
    _inv: Callable | None = field(default=None, compare=False, repr=False)

    # -- constructors -----------------------------------------------------
    @classmethod
    def linear(cls, lam: float = 1.0) -> "RateFunction":
        if not lam > 0:
            raise ParameterError("linear rate needs lambda > 0")
        return cls("linear", (float(lam),))

    @classmethod
    def power(cls, gamma: float) -> "RateFunction":
        if not 0 < gamma < 1:
            raise ParameterError("power rate needs gamma in (0, 1)")
        return cls("power", (float(gamma),))

    @classmethod
    def logpower(cls, alpha: float, s0: float | None = None) -> "RateFunction":
        """``t (ln t)^((2 alpha - 2)/alpha)`` beyond ``s0``, quadratic bridge below.

        The tail is concave and increasing only for ``ln t >= 1 - c`` with
        ``c = (2 alpha - 2)/alpha``, so ``s0`` defaults to
        ``exp(max(2, 1 - c))`` and smaller values are rejected.
        """
        if not 0 < alpha <= 1:
            raise ParameterError("logpower rate needs alpha in (0, 1]")
        c = (2.0 * alpha - 2.0) / alpha
        s_min = math.exp(max(2.0, 1.0 - c))
        if s0 is None:
            s0 = s_min
        elif s0 < s_min * (1 - 1e-12):
            raise ParameterError(f"splice point s0={s0} below the concavity threshold {s_min}")
        return cls("logpower", (float(alpha), float(s0)))

    @classmethod
    def custom(cls, phi, dphi, inverse=None, name: str = "custom") -> "RateFunction":
        return cls(
            "custom",
            (name,),
            _as_array_fn(phi),
            _as_array_fn(dphi),
            None if inverse is None else _as_array_fn(inverse),
        )

    @classmethod
    def from_config(cls, cfg) -> "RateFunction":
        """Build from ``{"kind": "power", "gamma": 0.5}`` or ``"power:0.5"``."""
        if isinstance(cfg, RateFunction):
            return cfg
        if isinstance(cfg, str):
            kind, _, arg = cfg.partition(":")
            kind = kind.strip().lower()
            val = float(arg) if arg else None
            if kind == "linear":
                return cls.linear(1.0 if val is None else val)
            if kind == "power":
                return cls.power(val)
            if kind == "logpower":
                return cls.logpower(val)
            raise ParameterError(f"unknown rate kind {kind!r}")
        kind = str(cfg["kind"]).lower()
        if kind == "linear":
            return cls.linear(float(cfg.get("lambda", 1.0)))
        if kind == "power":
            return cls.power(float(cfg["gamma"]))
        if kind == "logpower":
            return cls.logpower(float(cfg["alpha"]), cfg.get("s0"))
        raise ParameterError(f"unknown rate kind {kind!r}")

    def to_config(self) -> dict:
        if self.kind == "linear":
            return {"kind": "linear", "lambda": self.params[0]}
        if self.kind == "power":
            return {"kind": "power", "gamma": self.params[0]}
        if self.kind == "logpower":
            return {"kind": "logpower", "alpha": self.params[0], "s0": self.params[1]}
        return {"kind": "custom", "name": self.params[0]}

    # -- logpower pieces ---------------------------------------------------
    def _lp_coeffs(self):
        alpha, s0 = self.params
        c = (2.0 * alpha - 2.0) / alpha
        ls = math.log(s0)
        v = s0 * ls**c
        s = ls ** (c - 1.0) * (ls + c)
        b = (s - v / s0) / s0
        a = 2.0 * v / s0 - s
        return c, s0, a, b, v

    # -- evaluation --------------------------------------------------------
    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "linear":
            out = self.params[0] * x
        elif k == "power":
            out = np.power(np.maximum(x, 0.0), self.params[0])
        elif k == "logpower":
            c, s0, a, b, _ = self._lp_coeffs()
            xt = np.maximum(x, s0)
            tail = xt * np.log(xt) ** c
            out = np.where(x >= s0, tail, a * x + b * x * x)
        else:
            out = self._phi(x)
        return out if out.ndim else float(out)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        k = self.kind
        if k == "linear":
            out = np.full_like(x, self.params[0])
        elif k == "power":
            g = self.params[0]
            with np.errstate(divide="ignore"):
                out = g * np.power(np.maximum(x, 0.0), g - 1.0)
        elif k == "logpower":
            c, s0, a, b, _ = self._lp_coeffs()
            lt = np.log(np.maximum(x, s0))
            out = np.where(x >= s0, lt ** (c - 1.0) * (lt + c), a + 2.0 * b * x)
        else:
            out = self._dphi(x)
        return out if out.ndim else float(out)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        k = self.kind
        if k == "linear":
            out = y / self.params[0]
        elif k == "power":
            out = np.power(np.maximum(y, 0.0), 1.0 / self.params[0])
        elif k == "logpower":
            c, s0, a, b, v = self._lp_coeffs()
            yy = np.atleast_1d(y)
            res = np.empty_like(yy)
            low = yy <= v
            yl = yy[low]
            res[low] = 2.0 * yl / (a + np.sqrt(a * a + 4.0 * b * yl))
            for i in np.flatnonzero(~low):
                target = yy[i]
                hi = max(2.0 * s0, 2.0 * target)
                while self(hi) < target:
                    hi *= 2.0
                res[i] = brentq(lambda t: self(t) - target, s0, hi, xtol=1e-14, rtol=1e-15)
            out = res.reshape(y.shape)
        elif self._inv is not None:
            out = self._inv(y)
        else:
            yy = np.atleast_1d(y)
            res = np.empty_like(yy)
            for i, target in enumerate(yy):
                if target <= 0:
                    res[i] = 0.0
                    continue
                hi = 1.0
                while self(hi) < target:
                    hi *= 2.0
                    if hi > 1e300:
                        raise ConvergenceError("could not bracket phi^-1")
                res[i] = brentq(lambda t: self(t) - target, 0.0, hi, xtol=1e-14, rtol=1e-15)
            out = res.reshape(y.shape)
        out = np.asarray(out, dtype=float)
        return out if out.ndim else float(out)

    def breakpoints(self) -> tuple:
        """Points where phi is only C^1 (quadrature splits there)."""
        if self.kind == "logpower":
            return (self.params[1],)
        return ()

    def has_closed_form(self) -> bool:
        return self.kind in ("linear", "power")


@dataclass(frozen=True)
class RateBoundParams:
    C1: float
    C2: float
    epsilon: float
    V_of_x: float = 0.0

    def __post_init__(self):
        vals = (self.C1, self.C2, self.epsilon, self.V_of_x)
        if not all(math.isfinite(v) for v in vals):
            raise ParameterError("rate bound parameters must be finite")
        if self.C1 <= 0 or self.C2 <= 0:
            raise ParameterError("C1 and C2 must be positive")
        if not 0 < self.epsilon < 1:
            raise ParameterError("epsilon must lie strictly inside (0, 1)")
        if self.V_of_x < 0:
            raise ParameterError("V(x) must be nonnegative")


@dataclass(frozen=True)
class PsiFunction:
    """Continuous increasing ``psi: [0, inf) -> [0, 1]`` with ``psi(0) = 0``."""

    fn: Callable
    name: str = "psi"

    def __call__(self, t):
        return self.fn(np.asarray(t, dtype=float))

    @classmethod
    def builtin(cls, name: str) -> "PsiFunction":
        name = name.lower()
        if name in ("linear", "t"):
            return cls(lambda t: np.minimum(t, 1.0), "linear")
        if name in ("square", "t2", "t^2"):
            return cls(lambda t: np.minimum(t * t, 1.0), "square")
        if name in ("clip2", "min(1,2t)"):
            return cls(lambda t: np.minimum(1.0, 2.0 * t), "clip2")
        raise ParameterError(f"unknown psi {name!r}")


@dataclass(frozen=True)
class AsymptoticFamily:
    """Leading behaviour of the rate bound as ``t`` grows.

    * ``geometric``:      log bound ~ exponent * C2 t
    * ``polynomial``:     bound ~ (C2 t) ** exponent
    * ``subexponential``: log bound ~ -(1-eps) (scale C2 t) ** exponent
    """

    family: str
    exponent: float
    scale: float = 1.0


# ---------------------------------------------------------------------------
# H and its inverse


def _h_quad(phi: RateFunction, x: float) -> float:
    """H(x) by adaptive quadrature in log variable s = ln u."""
    top = math.log(x)
    if top == 0.0:
        return 0.0
    cuts = [0.0] + [math.log(b) for b in phi.breakpoints() if 1.0 < b < x] + [top]

    def integrand(s):
        u = np.exp(s)
        return u / np.asarray(phi(u), dtype=float)

    return float(np.sum(integrate(integrand, cuts[:-1], cuts[1:], rtol=RTOL, atol=ATOL)))


def h_transform(phi: RateFunction, x, method: str = "auto"):
    """``H_phi(x) = integral_1^x du/phi(u)``.

    Closed form for linear and power rates unless ``method="quad"``.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 1.0) or np.any(np.isnan(xa)):
        raise DomainError("h_transform needs x >= 1")
    if method == "auto" and phi.has_closed_form():
        if phi.kind == "linear":
            out = np.log(xa) / phi.params[0]
        else:
            g = phi.params[0]
            out = (np.power(xa, 1.0 - g) - 1.0) / (1.0 - g)
    else:
        flat = np.atleast_1d(xa).ravel()
        out = np.array([_h_quad(phi, float(v)) for v in flat]).reshape(xa.shape)
    return out if np.ndim(out) else float(out)


def _h_invert_scalar(phi: RateFunction, y: float) -> float:
    if y == 0.0:
        return 1.0
    tol = 1e-9 * max(1.0, y)

    def H(s):
        return _h_quad(phi, math.exp(s))

    lo, hi = 0.0, 1.0
    steps = 0
    while H(hi) < y:
        lo, hi = hi, 2.0 * hi
        steps += 1
        if steps > 1100:
            raise ConvergenceError("h_inverse could not bracket the root")
    for _ in range(BISECT_MAX):
        mid = 0.5 * (lo + hi)
        hm = H(mid)
        if abs(hm - y) <= 1e-14 * max(1.0, y):
            return math.exp(mid)
        if hm < y:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, hi):
            break
    x = math.exp(0.5 * (lo + hi))
    if abs(_h_quad(phi, x) - y) > tol:
        raise ConvergenceError(f"h_inverse did not converge for y={y}")
    return x


def h_inverse(phi: RateFunction, y, method: str = "auto"):
    """Solve ``H_phi(x) = y`` for ``x >= 1``."""
    ya = np.asarray(y, dtype=float)
    if np.any(ya < 0) or np.any(np.isnan(ya)):
        raise DomainError("h_inverse needs y >= 0")
    if method == "auto" and phi.has_closed_form():
        if phi.kind == "linear":
            out = np.exp(phi.params[0] * ya)
        else:
            g = phi.params[0]
            out = np.power(1.0 + (1.0 - g) * ya, 1.0 / (1.0 - g))
    else:
        flat = np.atleast_1d(ya).ravel()
        out = np.array([_h_invert_scalar(phi, float(v)) for v in flat]).reshape(ya.shape)
    return out if np.ndim(out) else float(out)


def rate_bound(phi: RateFunction, params: RateBoundParams, t, method: str = "auto"):
    """``C1 (1 + V) * phi(H^{-1}(C2 t)) ** -(1 - eps)``; vectorized in ``t``."""
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0):
        raise DomainError("rate_bound needs t >= 0")
    x = h_inverse(phi, params.C2 * ta, method=method)
    den = np.asarray(phi(x), dtype=float) ** (1.0 - params.epsilon)
    out = params.C1 * (1.0 + params.V_of_x) / den
    return out if np.ndim(out) else float(out)


def log_rate_bound(phi: RateFunction, params: RateBoundParams, t):
    """Logarithm of :func:`rate_bound`, stable when the bound underflows."""
    ta = np.asarray(t, dtype=float)
    base = math.log(params.C1) + math.log1p(params.V_of_x)
    e = 1.0 - params.epsilon
    y = params.C2 * ta
    if phi.kind == "linear":
        lam = phi.params[0]
        return base - e * (math.log(lam) + lam * y)
    if phi.kind == "power":
        g = phi.params[0]
        return base - e * g / (1.0 - g) * np.log1p((1.0 - g) * y)
    x = h_inverse(phi, y)
    return base - e * np.log(np.asarray(phi(x), dtype=float))


def rate_asymptotics(phi: RateFunction, epsilon: float = 0.0) -> AsymptoticFamily:
    if not 0 <= epsilon < 1:
        raise DomainError("epsilon must lie in [0, 1)")
    e = 1.0 - epsilon
    if phi.kind == "linear":
        return AsymptoticFamily("geometric", -e * phi.params[0])
    if phi.kind == "power":
        g = phi.params[0]
        return AsymptoticFamily("polynomial", -g * e / (1.0 - g))
    if phi.kind == "logpower":
        alpha = phi.params[0]
        if alpha == 1.0:
            return AsymptoticFamily("geometric", -e)
        return AsymptoticFamily("subexponential", alpha / (2.0 - alpha), scale=(2.0 - alpha) / alpha)
    raise UnsupportedKindError("no closed-form asymptotics for custom rate functions")


# ---------------------------------------------------------------------------
# Petrov recursion  a_{n+1} <= a_n (1 - psi(a_n))  =>  a_n <= g^{-1}(n)


def _petrov_integrand(psi: PsiFunction):
    def f(s):
        return 1.0 / np.asarray(psi(np.exp(s)), dtype=float)

    return f


def petrov_g(psi: PsiFunction, x):
    """``g(x) = integral_x^1 dt / (t psi(t))`` for ``1e-12 <= x <= 1``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)) or np.any(xa > 1):
        raise DomainError("petrov_g needs 0 < x <= 1")
    if np.any(xa < PETROV_XMIN):
        raise DomainError(f"petrov_g is not evaluated below x={PETROV_XMIN} (g diverges at 0)")
    flat = np.atleast_1d(xa).ravel()
    out = integrate(_petrov_integrand(psi), np.log(flat), np.zeros_like(flat), rtol=RTOL, atol=ATOL)
    out = out.reshape(xa.shape)
    if np.any(~np.isfinite(out)):
        raise ConvergenceError("petrov_g overflowed")
    return out if np.ndim(out) else float(out)


def petrov_g_inverse(psi: PsiFunction, y: float) -> float:
    """Solve ``g(x) = y`` on ``(1e-12, 1]`` by bisection in ``ln x``."""
    if y < 0:
        raise DomainError("g^-1 needs y >= 0")
    if y == 0:
        return 1.0
    lo, hi = math.log(PETROV_XMIN), 0.0
    if petrov_g(psi, PETROV_XMIN) < y:
        raise ConvergenceError("g^-1(y) lies below the evaluation floor 1e-12")
    for _ in range(BISECT_MAX):
        mid = 0.5 * (lo + hi)
        if petrov_g(psi, math.exp(mid)) > y:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-15:
            break
    return math.exp(0.5 * (lo + hi))


def petrov_iterates(psi: PsiFunction, a0: float, n_max: int) -> np.ndarray:
    """Extremal sequence ``a_{n+1} = a_n (1 - psi(a_n))`` for n = 0..n_max."""
    a = np.empty(n_max + 1)
    a[0] = a0
    cur = a0
    for n in range(n_max):
        cur = cur * (1.0 - float(psi(cur)))
        a[n + 1] = cur
    return a


def petrov_bound_check(psi: PsiFunction, a0: float, n_max: int, tol: float = 1e-9) -> CheckReport:
    """Check ``a_n <= g^{-1}(n) + tol`` along the extremal recursion.

    ``g`` is decreasing, so the check is done as ``g(a_n) >= n``; the margin
    reported per step is ``g(a_n) - n`` (``inf`` once the iterate is below
    ``tol``).  ``g(a_n)`` is accumulated interval by interval in one
    vectorized quadrature call.
    """
    if not 0 <= a0 <= 1:
        raise DomainError("a0 must lie in [0, 1]")
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    a = petrov_iterates(psi, a0, n_max)
    n = np.arange(n_max + 1, dtype=float)
    margin = np.full(n_max + 1, np.inf)
    trivially = a <= tol
    live = np.flatnonzero(~trivially & (a >= PETROV_XMIN))
    if live.size:
        # live indices form a prefix: once a_n drops under tol it stays there
        last = live[-1]
        seg = a[: last + 1]
        g0 = petrov_g(psi, seg[0])
        pieces = integrate(
            _petrov_integrand(psi), np.log(seg[1:]), np.log(seg[:-1]), rtol=RTOL, atol=ATOL
        )
        g_vals = g0 + np.concatenate(([0.0], np.cumsum(pieces)))
        margin[: last + 1] = g_vals - n[: last + 1]
    ok = margin >= 0
    # near-misses: compare in a-space through g(a_n - tol) >= n
    for i in np.flatnonzero(~ok):
        shifted = a[i] - tol
        if shifted <= 0 or petrov_g(psi, max(shifted, PETROV_XMIN)) >= n[i]:
            ok[i] = True
    rows = [
        {"n": int(i), "a_n": float(a[i]), "g_margin": float(margin[i]), "ok": bool(ok[i])}
        for i in range(n_max + 1)
    ]
    return CheckReport(
        name="petrov",
        verdict="pass" if ok.all() else "fail",
        rows=rows,
        summary={
            "psi": psi.name,
            "a0": float(a0),
            "n_max": int(n_max),
            "min_g_margin": float(np.min(margin)),
            "failures": int((~ok).sum()),
        },
    )
