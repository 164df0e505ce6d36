import math
import warnings
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from subgeom.chains import (
    SddeSpec,
    SegmentGrid,
    SegmentState,
    decimal_digits,
    digit_chain,
    digit_enumerate,
    digit_reconstruct,
    digit_sample_exact,
    digit_step,
    digit_step_exact,
    lyapunov_presets,
    ou_spec,
    sample_marginal,
    sdde_integrate,
    sdde_model,
    simulate_sdde,
    tanh_delay_spec,
    vk_drift_spec,
    zero_spec,
)
from subgeom.errors import BlowUpError, DomainError, ParameterError
from subgeom.rate_kernel import RateFunction, rate_asymptotics
from subgeom.transport import EmpiricalMeasure, tv_distance, wasserstein_to_uniform


def insert_digit(x: str, k: int) -> str:
    """String oracle: the new digit goes right after the decimal point."""
    frac = x.split(".")[1] if "." in x else ""
    return "0." + str(k) + frac


# -- digit chain -----------------------------------------------------------------


def test_digit_step_examples():
    assert digit_step(0.0, digit=7) == pytest.approx(0.7)
    assert digit_step(0.5, digit=0) == pytest.approx(0.05)
    assert digit_step_exact("0", 7) == Decimal("0.7")
    assert digit_step_exact("0.5", 0) == Decimal("0.05")


def test_digit_step_domain():
    with pytest.raises(DomainError):
        digit_step(1.0, digit=1)
    with pytest.raises(DomainError):
        digit_step(-0.1, digit=1)


@given(st.integers(0, 10**6 - 1), st.lists(st.integers(0, 9), min_size=0, max_size=6))
def test_exact_step_matches_string_oracle_and_reconstructs(num, digits):
    x0 = Decimal(num).scaleb(-6).normalize()
    s = format(x0, "f")
    x = x0
    for k in digits:
        s = insert_digit(s, k)
        x = digit_step_exact(x, k)
        assert x == Decimal(s)
    assert digit_reconstruct(x, len(digits)) == x0


def test_reconstruct_examples():
    x1 = digit_step_exact("0.25", 3)
    assert x1 == Decimal("0.325")
    assert digit_reconstruct(x1, 1) == Decimal("0.25")
    assert digit_reconstruct("0.4", 0) == Decimal("0.4")


def test_float_reconstruct_warns_when_inexact():
    x = 0.1234567
    for k in [3, 1, 4, 1, 5, 9, 2, 6]:
        x = digit_step(x, digit=k)
    with pytest.warns(RuntimeWarning):
        digit_reconstruct(x, 8)


@given(st.integers(0, 999), st.integers(0, 999), st.integers(1, 8), st.integers(0, 2**31))
def test_synchronous_contraction(a, b, n, seed):
    x, y = a / 1000, b / 1000
    rng = np.random.default_rng(seed)
    for _ in range(n):
        k = int(rng.integers(0, 10))
        x, y = digit_step(x, digit=k), digit_step(y, digit=k)
    assert abs(abs(x - y) - abs(a - b) / 1000 * 10.0**-n) <= 1e-12


def test_enumeration_support_and_w1():
    for x0 in ("0", "0.3", "0.77"):
        x = float(x0)
        for n in range(0, 5):
            m = digit_enumerate(x0, n)
            assert m.numerators.size == 10**n
            vals = np.sort(m.values())
            assert np.allclose(vals, (x + np.arange(10**n)) / 10.0**n, atol=1e-15)
            h = 10.0**-n
            # each atom sits at offset x*h inside its cell of width h
            assert wasserstein_to_uniform(m.measure()) == pytest.approx(h * (x * x + (1 - x) ** 2) / 2, rel=1e-9)


def test_enumeration_is_exact_integer_arithmetic():
    m = digit_enumerate("0.25", 3)
    assert m.scale_digits == 5
    assert sorted(m.numerators)[:3] == [25, 125, 225]


def test_disjoint_tails_give_tv_two():
    for n in range(1, 6):
        a = digit_enumerate("0.3", n, scale_digits=1).int_measure()
        b = digit_enumerate("0.8", n, scale_digits=1).int_measure()
        assert np.intersect1d(a.points, b.points).size == 0
        assert tv_distance(a, b) == 2.0


def test_exact_sampling_shares_digits_by_key():
    a = digit_sample_exact("0.3", 5, 1000, 7, key="k", scale_digits=1)
    b = digit_sample_exact("0.8", 5, 1000, 7, key="k", scale_digits=1)
    assert np.all(b.numerators - a.numerators == 5)
    c = digit_sample_exact("0.3", 5, 1000, 7, key="other", scale_digits=1)
    assert not np.array_equal(a.numerators, c.numerators)


def test_decimal_digits():
    assert decimal_digits("0.25") == (25, 2)
    assert decimal_digits(0.3) == (3, 1)
    assert decimal_digits(0) == (0, 0)


def test_sample_marginal_digit():
    model = digit_chain()
    m0 = sample_marginal(model, 0.4, 0, 50, seed=1)
    assert np.all(m0.points == 0.4)
    m1 = sample_marginal(model, 0.0, 1, 5000, seed=1)
    support, counts = np.unique(np.round(m1.points[:, 0], 12), return_counts=True)
    assert np.allclose(support, np.arange(10) / 10)
    assert np.all(np.abs(counts / 5000 - 0.1) < 0.02)
    big = sample_marginal(model, 0.0, 12, 20_000, seed=2)
    x = np.sort(big.points[:, 0])
    ks = np.max(np.abs(np.arange(1, x.size + 1) / x.size - x))
    assert ks < 1.36 / math.sqrt(x.size) * 1.5


def test_worker_count_does_not_change_samples():
    model = digit_chain()
    a = model.run(0.2, 5, 3000, 11, workers=1)
    b = model.run(0.2, 5, 3000, 11, workers=3)
    assert np.array_equal(a, b)


# -- segments and delay equations -----------------------------------------------------


def test_segment_validation():
    g = SegmentGrid(1.0, 4)
    with pytest.raises(DomainError):
        SegmentState(g, np.zeros(3))
    with pytest.raises(DomainError):
        SegmentState(g, [0, 1, np.nan, 0, 0])
    with pytest.raises(ParameterError):
        SegmentGrid(0.0, 3)
    s = SegmentState(g, [0, 1, 2, 3, 4])
    assert np.allclose(s.refine(2)[:, 0], np.arange(9) / 2)
    assert s.head[0] == 4


def test_zero_dynamics_keep_the_path():
    g = SegmentGrid(1.0, 5)
    x0 = SegmentState(g, np.linspace(-1, 1, 6))
    out = sdde_integrate(zero_spec(1.0), x0, 3.0, 0.1, 0)
    assert np.all(out.values == 1.0)


@pytest.mark.parametrize("dt", [0.1, 0.01, 0.001])
def test_deterministic_decay(dt):
    spec = ou_spec(theta=1.0, sigma=0.0, r=0.1)
    x0 = SegmentState.constant(SegmentGrid(0.1, 1), 1.0)
    for use_kernel in (True, False):
        p = simulate_sdde(spec, x0, 1.0, dt, 3, 0, use_kernel=use_kernel)
        assert p.point(1.0)[0, 0] == pytest.approx((1 - dt) ** round(1 / dt), rel=1e-12)
    assert (1 - 0.001) ** 1000 == pytest.approx(math.exp(-1), rel=1e-3)


def test_ou_moments():
    theta, sigma, x, t, n = 1.0, 1.0, 1.0, 1.0, 40_000
    spec = ou_spec(theta, sigma, r=0.1)
    p = simulate_sdde(spec, SegmentState.constant(SegmentGrid(0.1, 1), x), t, 0.002, n, 5)
    xt = p.point(t)[:, 0]
    mean, var = x * math.exp(-theta * t), sigma**2 * (1 - math.exp(-2 * theta * t)) / (2 * theta)
    se_mean = math.sqrt(var / n)
    se_var = var * math.sqrt(2.0 / (n - 1))
    assert abs(xt.mean() - mean) <= 3 * se_mean
    assert abs(xt.var(ddof=1) - var) <= 3 * se_var


def test_kernel_matches_generic_path():
    spec = tanh_delay_spec(kappa=1.0, alpha=0.5, M=1.0)
    x0 = SegmentState(SegmentGrid(1.0, 4), [0.5, -1.0, 2.0, 0.0, 1.5])
    a = simulate_sdde(spec, x0, 3.0, 0.05, 64, 3, use_kernel=True).path
    b = simulate_sdde(spec, x0, 3.0, 0.05, 64, 3, use_kernel=False).path
    assert np.max(np.abs(a - b)) < 1e-12


def test_simulation_is_reproducible_and_keyed():
    spec = vk_drift_spec(alpha=1.0)
    x0 = SegmentState.constant(SegmentGrid(1.0, 10), 2.0)
    a = simulate_sdde(spec, x0, 2.0, 0.01, 300, 9).path
    b = simulate_sdde(spec, x0, 2.0, 0.01, 300, 9).path
    c = simulate_sdde(spec, x0, 2.0, 0.01, 300, 9, key=("other",)).path
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    # the first block does not depend on how many trajectories follow it
    d = simulate_sdde(spec, x0, 2.0, 0.01, 100, 9).path
    assert np.array_equal(a[:100], d)


def test_step_must_divide_grid():
    spec = ou_spec(r=0.1)
    with pytest.raises(DomainError):
        simulate_sdde(spec, SegmentState.constant(SegmentGrid(0.1, 1), 0.0), 1.0, 0.03, 2, 0)


def test_blow_up_is_reported():
    spec = SddeSpec(lambda seg: seg[:, -1, :] ** 3, lambda seg: np.zeros((seg.shape[0], 1, 1)), 0.1)
    with pytest.raises(BlowUpError):
        simulate_sdde(spec, SegmentState.constant(SegmentGrid(0.1, 1), 10.0), 10.0, 0.1, 2, 0)


def test_vk_condition_identity():
    spec = vk_drift_spec(kappa=1.0, alpha=1.0, M=1.0, g_lo=1.0, g_hi=1.0)
    seg = np.zeros((5, 3, 1))
    seg[:, -1, 0] = [-4.0, -1.0, 1.0, 2.5, 7.0]
    f = spec.drift(seg)
    assert np.allclose(f[:, 0] * seg[:, -1, 0], -np.abs(seg[:, -1, 0]))


def test_vk_check_rejects_bad_perturbation():
    with pytest.raises(ParameterError):
        vk_drift_spec(kappa=1.0, alpha=1.0, f1=lambda seg: 2.0 * np.sign(seg[:, -1, :]))


def test_vk_condition_with_bounded_perturbation():
    # inward perturbation keeps the condition
    vk_drift_spec(kappa=1.0, alpha=0.5, M=1.0, f1=lambda seg: -0.3 * np.tanh(seg[:, -1, :]) ** 2 * np.sign(seg[:, -1, :]))


def test_diffusion_uses_delayed_value():
    spec = tanh_delay_spec(g_lo=0.5, g_hi=1.5)
    seg = np.zeros((2, 11, 1))
    seg[0, 0, 0] = 5.0
    g = spec.diffusion(seg)[:, 0, 0]
    assert g[0] > g[1] == pytest.approx(1.0)


# -- Lyapunov presets ----------------------------------------------------------------


def test_poly_preset_example():
    pre = lyapunov_presets("poly", {"kappa": 3, "n": 1, "Lambda": 1, "lambda_plus": 1, "eps": 0.5})
    assert pre.k == pytest.approx(6.5)
    assert pre.phi == RateFunction.power(4.5 / 6.5)
    assert pre.V(np.array([[2.0]]))[0] == pytest.approx(2.0**6.5)


def test_poly_preset_needs_k_above_two():
    with pytest.raises(ParameterError):
        lyapunov_presets("poly", {"kappa": 0.4, "Lambda": 1, "lambda_plus": 1, "eps": 0.1})


def test_exp_preset_alpha_one_is_geometric():
    pre = lyapunov_presets("exp", {"kappa": 1, "alpha": 1.0, "lambda_plus": 1, "M": 1})
    assert rate_asymptotics(pre.phi).family == "geometric"


def test_exp_preset_values_and_bridge():
    pre = lyapunov_presets("exp", {"kappa": 1, "alpha": 0.5, "lambda_plus": 2.25, "M": 1})
    k, M0 = pre.k, pre.M0
    assert k == pytest.approx(1 / (2 * 2.25 * 0.5))
    v = 1.3 * M0
    assert pre.V(np.array([[v]]))[0] == pytest.approx(math.exp(k * v**0.5), rel=1e-14)
    seg = np.zeros((1, 4, 1))
    seg[0, -1, 0] = -v
    assert pre.V(seg)[0] == pytest.approx(math.exp(k * v**0.5), rel=1e-14)
    # C^2 across M0 by finite differences
    h = 1e-4 * M0
    U = lambda s: float(pre.U(np.array([[s]]))[0])
    for s in (M0 - h, M0 + h):
        assert U(s) == pytest.approx(U(M0), rel=1e-3)
    d2l = (U(M0) - 2 * U(M0 - h) + U(M0 - 2 * h)) / h**2
    d2r = (U(M0 + 2 * h) - 2 * U(M0 + h) + U(M0)) / h**2
    assert d2l == pytest.approx(d2r, rel=1e-2)
    assert U(0.0) == 0.0
