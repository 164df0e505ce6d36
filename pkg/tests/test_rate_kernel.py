import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subgeom.errors import DomainError, ParameterError, UnsupportedKindError
from subgeom.rate_kernel import (
    PsiFunction,
    RateBoundParams,
    RateFunction,
    h_inverse,
    h_transform,
    log_rate_bound,
    petrov_bound_check,
    petrov_g,
    petrov_g_inverse,
    petrov_iterates,
    rate_asymptotics,
    rate_bound,
)

mp.mp.dps = 30

BUILTINS = [
    RateFunction.linear(1.0),
    RateFunction.linear(0.3),
    RateFunction.power(0.5),
    RateFunction.power(0.2),
    RateFunction.power(0.9),
    RateFunction.logpower(1.0),
    RateFunction.logpower(0.5),
    RateFunction.logpower(0.8),
]


def mp_h(phi, x):
    """H(x) = int_1^x du / phi(u) with mpmath, split at the rate's breakpoints."""
    pts = [1] + [b for b in phi.breakpoints() if 1 < b < x] + [x]
    return float(mp.quad(lambda u: 1 / mp.mpf(float(phi(float(u)))), pts))


# -- H transform -----------------------------------------------------------------


def test_h_linear_at_one_is_zero():
    assert h_transform(RateFunction.linear(1.0), 1.0) == 0.0


def test_h_linear_at_e():
    assert h_transform(RateFunction.linear(1.0), math.e) == pytest.approx(1.0, rel=1e-14)
    assert h_transform(RateFunction.linear(1.0), math.e, method="quad") == pytest.approx(1.0, rel=1e-10)


def test_h_power_half_at_four():
    assert h_transform(RateFunction.power(0.5), 4.0) == pytest.approx(2.0, rel=1e-14)
    assert h_transform(RateFunction.power(0.5), 4.0, method="quad") == pytest.approx(2.0, rel=1e-10)


@pytest.mark.parametrize("phi", BUILTINS, ids=lambda p: f"{p.kind}{p.params}")
@pytest.mark.parametrize("x", [1.5, 7.3, 40.0, 1e3])
def test_h_matches_mpmath(phi, x):
    assert h_transform(phi, x) == pytest.approx(mp_h(phi, x), rel=1e-9)


def test_h_rejects_below_one():
    with pytest.raises(DomainError):
        h_transform(RateFunction.linear(1.0), 0.5)


def test_h_vectorized_matches_scalar():
    phi = RateFunction.logpower(0.6)
    xs = np.array([1.0, 2.0, 10.0, 55.0])
    vec = h_transform(phi, xs)
    assert np.allclose(vec, [h_transform(phi, float(x)) for x in xs], rtol=1e-13, atol=0)


# -- inverse ---------------------------------------------------------------------


def test_h_inverse_examples():
    assert h_inverse(RateFunction.linear(1.0), 1.0) == pytest.approx(math.e, rel=1e-14)
    assert h_inverse(RateFunction.power(0.5), 2.0) == pytest.approx(4.0, rel=1e-14)
    for phi in BUILTINS:
        assert h_inverse(phi, 0.0) == 1.0


def test_h_inverse_bisection_matches_closed_form():
    phi = RateFunction.power(0.5)
    assert h_inverse(phi, 2.0, method="quad") == pytest.approx(4.0, rel=1e-9)
    assert h_inverse(RateFunction.linear(1.0), 1.0, method="quad") == pytest.approx(math.e, rel=1e-9)


@pytest.mark.parametrize("phi", BUILTINS, ids=lambda p: f"{p.kind}{p.params}")
def test_h_round_trip(phi):
    ys = np.concatenate(([0.0], np.logspace(-3, math.log10(50), 199)))
    xs = h_inverse(phi, ys)
    back = h_transform(phi, xs)
    assert np.all(np.abs(back - ys) <= 1e-9 * np.maximum(1.0, ys))


def test_h_inverse_mpmath_root():
    phi = RateFunction.logpower(0.5)
    y = 3.7
    x = h_inverse(phi, y)
    ref = mp.findroot(lambda u: mp_h(phi, float(u)) - y, x)
    assert x == pytest.approx(float(ref), rel=1e-9)


# -- rate bound --------------------------------------------------------------------


def test_rate_bound_linear_is_exponential():
    # eps -> 0 limit: tiny eps, bound ~ e^{-n}
    p = RateBoundParams(1.0, 1.0, 1e-12, 0.0)
    for n in range(6):
        assert rate_bound(RateFunction.linear(1.0), p, n) == pytest.approx(math.exp(-n), rel=1e-10)


def test_rate_bound_power_example():
    p = RateBoundParams(1.0, 1.0, 0.5, 0.0)
    assert rate_bound(RateFunction.power(0.5), p, 2.0) == pytest.approx(2**-0.5, rel=1e-14)


@pytest.mark.parametrize("phi", BUILTINS, ids=lambda p: f"{p.kind}{p.params}")
def test_rate_bound_at_zero(phi):
    p = RateBoundParams(1.0, 1.3, 0.25, 1.0)
    assert rate_bound(phi, p, 0.0) == pytest.approx(2.0 / float(phi(1.0)) ** 0.75, rel=1e-12)


@pytest.mark.parametrize("phi", BUILTINS, ids=lambda p: f"{p.kind}{p.params}")
def test_rate_bound_nonincreasing_and_log_consistent(phi):
    p = RateBoundParams(0.7, 0.9, 0.1, 2.0)
    t = np.linspace(0, 40, 81)
    b = rate_bound(phi, p, t)
    assert np.all(np.diff(b) <= 0)
    assert np.allclose(np.log(b), log_rate_bound(phi, p, t), rtol=1e-10, atol=1e-12)


def test_rate_bound_params_validation():
    with pytest.raises(ParameterError):
        RateBoundParams(1.0, 1.0, 0.0)
    with pytest.raises(ParameterError):
        RateBoundParams(-1.0, 1.0, 0.5)
    with pytest.raises(ParameterError):
        RateBoundParams(1.0, 1.0, 0.5, -1.0)
    with pytest.raises(DomainError):
        rate_bound(RateFunction.linear(), RateBoundParams(1, 1, 0.5), -1.0)


# -- asymptotics ---------------------------------------------------------------------


def test_asymptotic_families():
    assert rate_asymptotics(RateFunction.power(0.5)).family == "polynomial"
    assert rate_asymptotics(RateFunction.power(0.5)).exponent == pytest.approx(-1.0)
    assert rate_asymptotics(RateFunction.linear(2.0)).family == "geometric"
    assert rate_asymptotics(RateFunction.logpower(1.0)).family == "geometric"
    sub = rate_asymptotics(RateFunction.logpower(0.5))
    assert sub.family == "subexponential"
    assert sub.exponent == pytest.approx(1.0 / 3.0)
    with pytest.raises(UnsupportedKindError):
        rate_asymptotics(RateFunction.custom(lambda x: x, lambda x: 1.0 + 0 * x))


def test_power_asymptotic_slope():
    phi = RateFunction.power(0.4)
    fam = rate_asymptotics(phi, 0.2)
    p = RateBoundParams(1.0, 1.0, 0.2)
    t = np.array([1e6, 1e7])
    slope = np.diff(log_rate_bound(phi, p, t))[0] / math.log(10.0)
    assert slope == pytest.approx(fam.exponent, rel=1e-3)


def test_subexponential_shape():
    # log bound against t^(alpha/(2-alpha)) is asymptotically linear
    phi = RateFunction.logpower(0.5)
    p = RateBoundParams(1.0, 1.0, 0.1)
    t = np.array([1e4, 1e5, 1e6])
    lb = log_rate_bound(phi, p, t)
    k = rate_asymptotics(phi, 0.1).exponent
    s = np.diff(lb) / np.diff(t**k)
    assert s[1] == pytest.approx(s[0], rel=0.1)


# -- rate function invariants -------------------------------------------------------


@pytest.mark.parametrize("phi", BUILTINS, ids=lambda p: f"{p.kind}{p.params}")
def test_concavity_and_monotone_derivative(phi):
    grid = np.unique(np.concatenate((np.linspace(0, 10, 400), np.logspace(1, 6, 400))))
    v = phi(grid)
    assert v[0] == 0.0
    assert np.all(np.diff(v) > 0)
    d = phi.deriv(grid[1:])
    assert np.all(np.diff(d) <= 1e-12)
    rng = np.random.default_rng(3)
    abc = np.sort(rng.uniform(0, 200, size=(2000, 3)), axis=1)
    a, b, c = abc.T
    fa, fb, fc = phi(a), phi(b), phi(c)
    chord = fa + (b - a) * (fc - fa) / (c - a)
    assert np.all(fb >= chord - 1e-10 * np.maximum(1, np.abs(fb)))


@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8, 1.0])
def test_logpower_splice_is_c1(alpha):
    phi = RateFunction.logpower(alpha)
    s0 = phi.params[1]
    h = 1e-7 * s0
    assert float(phi(s0 - h)) == pytest.approx(float(phi(s0 + h)), rel=1e-6)
    assert float(phi.deriv(s0 - h)) == pytest.approx(float(phi.deriv(s0 + h)), rel=1e-5)
    c = (2 * alpha - 2) / alpha
    t = 50 * s0
    assert float(phi(t)) == pytest.approx(t * math.log(t) ** c, rel=1e-14)


def test_logpower_rejects_early_splice():
    with pytest.raises(ParameterError):
        RateFunction.logpower(0.3, s0=math.e**2)


@pytest.mark.parametrize("phi", BUILTINS, ids=lambda p: f"{p.kind}{p.params}")
def test_rate_inverse(phi):
    y = np.array([0.5, 3.0, 40.0])
    assert np.allclose(phi(phi.inverse(y)), y, rtol=1e-10)


def test_config_round_trip():
    for phi in BUILTINS:
        again = RateFunction.from_config(phi.to_config())
        assert again == phi
    assert RateFunction.from_config("power:0.5") == RateFunction.power(0.5)
    assert RateFunction.from_config({"kind": "linear", "lambda": 1.0}) == RateFunction.linear(1.0)
    with pytest.raises(ParameterError):
        RateFunction.from_config("cubic:2")


@given(st.floats(0.05, 0.95), st.floats(0.0, 30.0))
def test_power_round_trip_property(gamma, y):
    phi = RateFunction.power(gamma)
    x = h_inverse(phi, y)
    assert abs(h_transform(phi, x) - y) <= 1e-9 * max(1.0, y)
    assert abs(h_transform(phi, x, method="quad") - y) <= 1e-8 * max(1.0, y)


@given(st.floats(0.2, 1.0), st.floats(1.0, 1e4))
def test_logpower_h_monotone_property(alpha, x):
    phi = RateFunction.logpower(alpha)
    assert h_transform(phi, x * 1.01) > h_transform(phi, x) >= 0


# -- Petrov recursion -----------------------------------------------------------------


LIN, SQ, CLIP = (PsiFunction.builtin(n) for n in ("linear", "square", "clip2"))


def test_petrov_g_examples():
    assert petrov_g(LIN, 1.0) == 0.0
    assert petrov_g(LIN, 0.5) == pytest.approx(1.0, rel=1e-12)
    # int_{1/2}^1 t^-3 dt = (1/x^2 - 1)/2 at x = 1/2
    assert petrov_g(SQ, 0.5) == pytest.approx(1.5, rel=1e-12)


@pytest.mark.parametrize("psi", [LIN, SQ, CLIP], ids=lambda p: p.name)
@pytest.mark.parametrize("x", [0.9, 0.31, 0.02, 1e-6])
def test_petrov_g_matches_mpmath(psi, x):
    ref = float(mp.quad(lambda t: 1 / (t * float(psi(float(t)))), [x, 0.5, 1]))
    assert petrov_g(psi, x) == pytest.approx(ref, rel=1e-10)


def test_petrov_g_domain():
    for bad in (0.0, -0.1, 1.5, 1e-13):
        with pytest.raises(DomainError):
            petrov_g(LIN, bad)


def test_petrov_g_inverse_linear():
    for n in (1, 5, 100):
        assert petrov_g_inverse(LIN, n) == pytest.approx(1.0 / (n + 1), rel=1e-12)


def test_petrov_examples():
    assert petrov_iterates(LIN, 1.0, 1)[1] == 0.0
    assert petrov_iterates(LIN, 0.5, 1)[1] == 0.25
    rep = petrov_bound_check(LIN, 0.5, 1)
    assert rep.verdict == "pass"
    rep0 = petrov_bound_check(SQ, 0.0, 50)
    assert rep0.verdict == "pass"
    assert all(r["a_n"] == 0.0 for r in rep0.rows)


def test_petrov_detects_violation():
    # psi too weak for the bound of a stronger psi: iterates of t^2 vs g of t
    a = petrov_iterates(SQ, 0.7, 200)
    assert any(a[n] > petrov_g_inverse(LIN, n) + 1e-9 for n in range(1, 201))


@pytest.mark.parametrize("psi", [LIN, SQ, CLIP], ids=lambda p: p.name)
@pytest.mark.parametrize("a0", [1.0, 0.7, 0.3])
def test_petrov_suite_a_space(psi, a0):
    # independent check in a-space at a few n through the inverse
    a = petrov_iterates(psi, a0, 400)
    for n in (1, 7, 50, 400):
        assert a[n] <= petrov_g_inverse(psi, n) + 1e-9
