"""Oracle-first tests for the moment bounds, rate functions, and tilted
discrepancy diagnostics.

Oracles come first and are exercised on worked examples with frozen
expectations before anything from the package is trusted: a one-shot
arithmetic transcription of the kappa/eta bound algebra, an upper
incomplete gamma via the scipy recurrence, and a brentq-based small-jump
inverse for the epoch-domain comparison."""

import math

import numpy as np
import pytest
from scipy.integrate import quad as sp_quad
from scipy.optimize import brentq
from scipy.special import gamma as sp_gamma, gammaincc

from lcl._rng import substream
from lcl.bounds import (
    DriverSummary,
    RateSpec,
    additive_wasserstein_factor,
    discrepancy_integrals,
    gronwall_bound_como,
    gronwall_bound_thinning,
    rate_function,
)
from lcl.bounds import _quad as bounds_quad
from lcl.levy_model import (
    AngularMeasure,
    AugmentedSpec,
    SlowVariationBundle,
    StableSpec,
    unit_scale_c_alpha,
)

ALPHA = 0.7
C_UNIT = unit_scale_c_alpha(ALPHA)


# ---------------------------------------------------------------------------
# oracles


def oracle_bound(d, T, order, coupling, C_flow=None):
    """One-shot arithmetic transcription of the kappa/eta/bound algebra from
    plain floats and lists, sharing no helper with the implementation."""
    nrm = lambda v: math.sqrt(sum(float(x) ** 2 for x in v))
    gap = lambda u, v: math.sqrt(sum((float(a) - float(b)) ** 2 for a, b in zip(u, v)))
    K, C0, V2 = d["K"], d["C0"], d["v_at_x2"]
    if order == 2:
        if C_flow is None:
            grow = 6.0 * T * V2**2 * (
                nrm(d["a2"]) ** 2 * T + 2.0 * C0 * (nrm(d["Sigma2"]) ** 2 + d["nu2_2"])
            ) * math.exp(
                6.0 * nrm(d["a2"]) ** 2 * T**2
                + 6.0 * C0 * K**2 * (2.0 * nrm(d["Sigma2"]) ** 2 + d["nu2_2"]) * T
            )
            cf = 2.0 * (V2**2 + K * grow)
        else:
            cf = C_flow
        cross = d["nu_df_2"] if coupling == "thinning" else d["mu_drho_2"]
        cross_weight = 2.0 * C0 if coupling == "thinning" else C0
        kappa = (
            6.0 * gap(d["x0_1"], d["x0_2"]) ** 2
            + 6.0 * T * cf * gap(d["a1"], d["a2"]) ** 2 * T
            + 6.0 * T * cf * 2.0 * C0 * gap(d["Sigma1"], d["Sigma2"]) ** 2
            + 6.0 * T * cf * cross_weight * cross
        )
        eta = (
            6.0 * nrm(d["a1"]) ** 2 * K**2 * T**2
            + 6.0 * C0 * K**2 * (2.0 * nrm(d["Sigma1"]) ** 2 + d["nu1_2"]) * T
        )
    else:
        if C_flow is None:
            grow = T * V2 * (nrm(d["b2"]) + d["nu2_1"]) * math.exp(
                K * (nrm(d["b2"]) + d["nu2_1"]) * T
            )
            cf = V2 + K * grow
        else:
            cf = C_flow
        cross = d["nu_df_1"] if coupling == "thinning" else d["mu_drho_1"]
        cross_weight = 1.0 if coupling == "thinning" else C0
        kappa = (
            gap(d["x0_1"], d["x0_2"])
            + T * cf * gap(d["b1"], d["b2"])
            + T * cf * cross_weight * cross
        )
        eta = K * (nrm(d["b1"]) + d["nu1_1"]) * T
    return kappa, eta, kappa * math.exp(eta)


def upper_gamma_oracle(a, z):
    """Upper incomplete gamma for possibly negative a via the recurrence on
    scipy's regularized function."""
    if a > 0:
        return sp_gamma(a) * gammaincc(a, z)
    return (upper_gamma_oracle(a + 1.0, z) - z**a * math.exp(-z)) / a


def tempered_tail_oracle(u, lam, alpha, c):
    return c * lam**alpha * upper_gamma_oracle(-alpha, lam * u)


def oracle_como_lhs(lam, alpha, c, t, theta, r):
    """Epoch-domain comparison integral with a brentq inverse: independent
    of the package's bisection and panel assembly."""
    rho1 = tempered_tail_oracle(1.0, lam, alpha, c)

    def jx(y):
        return brentq(
            lambda u: tempered_tail_oracle(u, lam, alpha, c) - rho1 - y,
            1e-14,
            1.0,
            xtol=1e-15,
            rtol=8.9e-16,
        )

    g = t ** (1.0 / alpha)

    def gap(x):
        y = x / t
        return (jx(y) - ((alpha / c) * y + 1.0) ** (-1.0 / alpha)) / g

    small = sp_quad(
        lambda x: abs(gap(x)) ** r * math.exp(-theta / x), 0.0, 1.0, limit=200
    )[0]
    big = sp_quad(lambda x: abs(gap(x)) ** r, 1.0, np.inf, limit=200)[0]
    return small + big


def test_oracle_worked_example_first_order():
    d = dict(
        x0_1=[0.0], x0_2=[0.0], K=1.0, v_at_x2=1.0, b1=[0.0], b2=[0.0],
        nu1_1=1.0, nu2_1=1.0, nu_df_1=0.1, C0=4.0,
    )
    kappa, eta, bound = oracle_bound(d, 1.0, 1, "thinning", C_flow=2.0)
    assert kappa == pytest.approx(0.2, rel=1e-14)
    assert eta == pytest.approx(1.0, rel=1e-14)
    assert bound == pytest.approx(0.2 * math.e, rel=1e-14)


def test_oracle_worked_example_second_order_como():
    d = dict(
        x0_1=[1.0], x0_2=[1.0], K=1.0, v_at_x2=1.0, a1=[0.0], a2=[0.0],
        Sigma1=[0.0], Sigma2=[0.0], nu1_2=0.5, nu2_2=0.5, mu_drho_2=0.04, C0=4.0,
    )
    kappa, eta, _ = oracle_bound(d, 1.0, 2, "comonotonic", C_flow=3.0)
    assert kappa == pytest.approx(2.88, rel=1e-14)
    assert eta == pytest.approx(6.0 * 4.0 * 0.5, rel=1e-14)


def test_oracle_upper_gamma_matches_quadrature():
    want = sp_quad(lambda s: s**-1.7 * math.exp(-s), 1.0, np.inf)[0]
    assert upper_gamma_oracle(-0.7, 1.0) == pytest.approx(want, rel=1e-10)


def test_oracle_inverse_satisfies_defining_equation():
    lam, c = 1.0, C_UNIT
    rho1 = tempered_tail_oracle(1.0, lam, ALPHA, c)
    for y in (0.03, 2.0, 500.0):
        u = brentq(
            lambda s: tempered_tail_oracle(s, lam, ALPHA, c) - rho1 - y, 1e-14, 1.0
        )
        got = tempered_tail_oracle(u, lam, ALPHA, c) - rho1
        assert got == pytest.approx(y, rel=1e-9)


# ---------------------------------------------------------------------------
# gronwall bounds


def random_summary(rng, order):
    dim = int(rng.integers(1, 4))
    vec = lambda: rng.uniform(-1.0, 1.0, dim).tolist()
    zeros = [0.0] * dim
    mom = lambda: float(rng.uniform(0.01, 2.0))
    d = dict(
        x0_1=vec(), x0_2=vec(),
        K=float(rng.uniform(0.1, 1.5)), v_at_x2=float(rng.uniform(0.1, 2.0)),
        a1=vec(), a2=vec(), b1=vec(), b2=vec(),
        Sigma1=zeros if order == 1 else vec(), Sigma2=zeros if order == 1 else vec(),
        nu1_1=mom(), nu1_2=mom(), nu2_1=mom(), nu2_2=mom(),
        nu_df_1=mom(), nu_df_2=mom(), mu_drho_1=mom(), mu_drho_2=mom(),
        C0=float(rng.uniform(1.0, 6.0)),
    )
    return d


def test_bounds_match_arithmetic_oracle_on_random_summaries():
    for i in range(20):
        rng = substream(0xB0DD, i)
        order = 1 if i % 2 else 2
        coupling = "thinning" if (i // 2) % 2 else "comonotonic"
        d = random_summary(rng, order)
        T = float(rng.uniform(0.2, 1.5))
        override = 2.5 if i % 5 == 0 else None
        fn = gronwall_bound_thinning if coupling == "thinning" else gronwall_bound_como
        rep = fn(DriverSummary(**d), T, order=order, C_flow=override)
        kappa, eta, bound = oracle_bound(d, T, order, coupling, C_flow=override)
        assert rep.kappa == pytest.approx(kappa, rel=1e-12), (i, coupling, order)
        assert rep.eta == pytest.approx(eta, rel=1e-12)
        assert rep.bound == pytest.approx(bound, rel=1e-12)
        rep.check_invariants()


def test_worked_first_order_thinning_bound():
    s = DriverSummary(
        x0_1=[0.0], x0_2=[0.0], K=1.0, v_at_x2=1.0, b1=[0.0], b2=[0.0],
        nu1_1=1.0, nu2_1=1.0, nu_df_1=0.1,
    )
    rep = gronwall_bound_thinning(s, 1.0, order=1, C_flow=2.0)
    assert rep.kappa == pytest.approx(0.2, rel=1e-12)
    assert rep.eta == pytest.approx(1.0, rel=1e-12)
    assert rep.bound == pytest.approx(0.2 * math.e, rel=1e-12)
    assert set(rep.breakdown) == {"initial", "natural-drift", "jump"}


def test_worked_second_order_como_bound():
    s = DriverSummary(
        x0_1=[1.0], x0_2=[1.0], K=1.0, v_at_x2=1.0,
        nu1_2=0.5, nu2_2=0.5, mu_drho_2=0.04,
    )
    rep = gronwall_bound_como(s, 1.0, order=2, C_flow=3.0)
    assert rep.kappa == pytest.approx(2.88, rel=1e-12)
    assert rep.bound == pytest.approx(2.88 * math.exp(rep.eta), rel=1e-12)
    assert set(rep.breakdown) == {"initial", "mean-drift", "gaussian", "jump"}


def test_thinning_jump_weight_doubles_como_jump_weight():
    base = dict(
        x0_1=[0.0], x0_2=[0.0], K=0.5, v_at_x2=1.0,
        nu1_2=0.3, nu2_2=0.3, nu_df_2=0.2, mu_drho_2=0.2,
    )
    thin = gronwall_bound_thinning(DriverSummary(**base), 1.0, order=2, C_flow=1.0)
    como = gronwall_bound_como(DriverSummary(**base), 1.0, order=2, C_flow=1.0)
    assert thin.breakdown["jump"] == pytest.approx(
        2.0 * como.breakdown["jump"], rel=1e-14
    )


def test_bound_monotone_in_horizon():
    rng = substream(0xB0DD, 777)
    d = random_summary(rng, 2)
    grid = [0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0]
    vals = [gronwall_bound_thinning(DriverSummary(**d), T, order=2).bound for T in grid]
    assert all(b2 >= b1 for b1, b2 in zip(vals, vals[1:]))


def test_zero_difference_collapses_to_initial_gap():
    shared = dict(
        K=1.0, v_at_x2=1.0, a1=[0.2], a2=[0.2], b1=[0.1], b2=[0.1],
        Sigma1=[0.0], Sigma2=[0.0],
        nu1_1=0.5, nu1_2=0.5, nu2_1=0.5, nu2_2=0.5,
        nu_df_1=0.0, nu_df_2=0.0, mu_drho_1=0.0, mu_drho_2=0.0,
    )
    s = DriverSummary(x0_1=[0.7], x0_2=[0.4], **shared)
    rep2 = gronwall_bound_thinning(s, 1.0, order=2)
    assert rep2.kappa == pytest.approx(6.0 * 0.3**2, rel=1e-12)
    s1 = DriverSummary(x0_1=[0.7], x0_2=[0.4], **{**shared, "a1": [0.0], "a2": [0.0]})
    rep1 = gronwall_bound_como(s1, 1.0, order=1)
    assert rep1.kappa == pytest.approx(0.3, rel=1e-12)
    same = DriverSummary(x0_1=[0.4], x0_2=[0.4], **shared)
    assert gronwall_bound_thinning(same, 1.0, order=2).bound == 0.0


def test_missing_moments_raise_with_integral_name():
    s = DriverSummary(x0_1=[0.0], x0_2=[1.0], K=1.0, v_at_x2=1.0, nu1_2=0.5, nu2_2=0.5)
    with pytest.raises(ValueError, match=r"nu\(\|f1-f2\|;2\)"):
        gronwall_bound_thinning(s, 1.0, order=2)
    with pytest.raises(ValueError, match=r"mu\(\|rho inverse gap\|;2\)"):
        gronwall_bound_como(s, 1.0, order=2)
    s2 = DriverSummary(x0_1=[0.0], x0_2=[1.0], K=1.0, v_at_x2=1.0, nu_df_2=0.1, nu2_2=0.5)
    with pytest.raises(ValueError, match=r"nu_1\(1;2\)"):
        gronwall_bound_thinning(s2, 1.0, order=2)
    s3 = DriverSummary(
        x0_1=[0.0], x0_2=[1.0], K=1.0, v_at_x2=1.0, nu_df_2=math.inf,
        nu1_2=0.5, nu2_2=0.5,
    )
    with pytest.raises(ValueError, match="finite"):
        gronwall_bound_thinning(s3, 1.0, order=2)


def test_first_order_requires_zero_gaussian_parts():
    s = DriverSummary(
        x0_1=[0.0], x0_2=[1.0], K=1.0, v_at_x2=1.0, Sigma1=[0.3],
        nu1_1=0.5, nu2_1=0.5, nu_df_1=0.1,
    )
    with pytest.raises(ValueError, match="Gaussian"):
        gronwall_bound_thinning(s, 1.0, order=1)


def test_summary_and_call_validation():
    with pytest.raises(ValueError, match="nu_df_2"):
        DriverSummary(x0_1=[0.0], x0_2=[0.0], K=1.0, v_at_x2=1.0, nu_df_2=-0.1)
    with pytest.raises(ValueError, match="nonnegative"):
        DriverSummary(x0_1=[0.0], x0_2=[0.0], K=-1.0, v_at_x2=1.0)
    with pytest.raises(ValueError, match="C0"):
        DriverSummary(x0_1=[0.0], x0_2=[0.0], K=1.0, v_at_x2=1.0, C0=0.0)
    ok = DriverSummary(x0_1=[0.0], x0_2=[0.0], K=1.0, v_at_x2=1.0, nu_df_2=0.1,
                       nu1_2=0.5, nu2_2=0.5)
    with pytest.raises(ValueError, match="order"):
        gronwall_bound_thinning(ok, 1.0, order=3)
    with pytest.raises(ValueError, match="positive"):
        gronwall_bound_thinning(ok, 0.0, order=2)


# ---------------------------------------------------------------------------
# additive Wasserstein factor


def test_additive_factor_values():
    assert additive_wasserstein_factor(1.0, 1.0, 1.0) == pytest.approx(
        math.e, rel=1e-15
    )
    assert additive_wasserstein_factor(0.5, 1.0, 1.0) == 160.0
    assert additive_wasserstein_factor(0.9, 2.0, 0.5) == 48.0


def test_additive_factor_domain():
    with pytest.raises(ValueError, match="q <= 1"):
        additive_wasserstein_factor(1.2, 1.0, 1.0)
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        additive_wasserstein_factor(0.0, 1.0, 1.0)
    with pytest.raises(ValueError, match="positive"):
        additive_wasserstein_factor(0.5, -1.0, 1.0)


# ---------------------------------------------------------------------------
# rate functions


def test_rate_como_low_alpha_power():
    r = RateSpec(regime="DoNA", coupling="comonotonic", alpha=0.7, p=1.0)
    assert rate_function(r, 0.5) == pytest.approx(0.5 ** (1.0 / 0.7), rel=1e-14)


def test_rate_como_unbalanced_min_exponent():
    r = RateSpec(regime="DoNA", coupling="comonotonic", alpha=1.5, p=0.25)
    assert rate_function(r, 0.1) == pytest.approx(0.1 ** (1.0 / 6.0), rel=1e-14)


def test_rate_como_log_correction_at_knee():
    r = RateSpec(regime="DoNA", coupling="comonotonic", alpha=1.5, p=0.5)
    t = math.exp(-1.0)
    assert rate_function(r, t) == pytest.approx(2.0 * math.exp(-1.0 / 3.0), rel=1e-12)


def test_rate_knee_indicator_is_exact():
    t = math.exp(-1.0)
    for p in (0.5 + 1e-9, 0.5 - 1e-9):
        r = RateSpec(regime="DoNA", coupling="comonotonic", alpha=1.5, p=p)
        val = rate_function(r, t)
        assert val == pytest.approx(t ** min(p / 1.5, 1.0 / 3.0), rel=1e-12)


def test_rate_thinning_theorem_vs_table_forms():
    r = RateSpec(regime="DoNA", coupling="thinning", alpha=1.5, p=0.25)
    t = 0.1
    assert rate_function(r, t, form="theorem") == pytest.approx(
        t ** (1.0 / 12.0), rel=1e-14
    )
    assert rate_function(r, t, form="table") == pytest.approx(
        t ** (1.0 / 12.0) + t ** (1.0 / 3.0), rel=1e-14
    )
    knee = RateSpec(regime="DoNA", coupling="thinning", alpha=1.5, p=0.5)
    assert rate_function(knee, t, form="table") == pytest.approx(
        t ** (1.0 / 6.0) + t ** (1.0 / 3.0) * (1.0 + abs(math.log(t))), rel=1e-14
    )


def test_rate_thinning_balanced_and_low_alpha():
    bal = RateSpec(regime="DoNA", coupling="thinning", alpha=1.5, p=0.6, balanced=True)
    assert rate_function(bal, 0.2) == pytest.approx(0.2 ** (0.6 / 3.0), rel=1e-14)
    low = RateSpec(regime="DoNA", coupling="thinning", alpha=0.7, p=0.6)
    assert rate_function(low, 0.2) == pytest.approx(0.2 ** (0.6 / 0.7), rel=1e-14)


def test_rate_vector_input_and_scalar_type():
    r = RateSpec(regime="DoNA", coupling="comonotonic", alpha=0.7, p=1.0)
    out = rate_function(r, np.array([0.1, 0.5, 1.0]))
    assert out.shape == (3,)
    assert isinstance(rate_function(r, 0.5), float)


def test_rate_donna_thinning_matches_bisection_oracle():
    bundle = SlowVariationBundle.iterated_log(1)
    alpha = 1.5
    r = RateSpec(regime="DoNNA", coupling="thinning", alpha=alpha, bundle=bundle)
    for t in (1e-3, 0.2):
        g_oracle = brentq(
            lambda s: s * bundle.H(s) ** (-1.0 / alpha) - t ** (1.0 / alpha),
            1e-30,
            1.0,
            xtol=1e-300,
            rtol=8.9e-16,
        )
        assert rate_function(r, t) == pytest.approx(
            bundle.H2(g_oracle) ** 0.5, rel=1e-6
        )


def test_rate_donna_como_reads_bundle_directly():
    bundle = SlowVariationBundle.iterated_log(1)
    r = RateSpec(regime="DoNNA", coupling="comonotonic", alpha=0.7, bundle=bundle)
    assert rate_function(r, 0.02) == pytest.approx(bundle.H2(0.02), rel=1e-14)


def test_rate_continuity_in_p_away_from_knee():
    for coupling, alpha, balanced in (
        ("thinning", 0.7, False),
        ("comonotonic", 1.5, False),
        ("thinning", 1.5, True),
    ):
        p0 = 0.8
        f0 = rate_function(
            RateSpec(regime="DoNA", coupling=coupling, alpha=alpha, p=p0,
                     balanced=balanced),
            0.3,
        )
        f1 = rate_function(
            RateSpec(regime="DoNA", coupling=coupling, alpha=alpha, p=p0 + 1e-7,
                     balanced=balanced),
            0.3,
        )
        assert abs(f1 - f0) / f0 < 1e-5


def test_rate_spec_domain_errors():
    with pytest.raises(ValueError, match="stability index"):
        RateSpec(regime="DoNA", coupling="thinning", alpha=1.0, p=1.0)
    with pytest.raises(ValueError, match="stability index"):
        RateSpec(regime="DoNA", coupling="thinning", alpha=2.0, p=1.0)
    with pytest.raises(ValueError, match="regime"):
        RateSpec(regime="mystery", coupling="thinning", alpha=0.7, p=1.0)
    with pytest.raises(ValueError, match="bundle"):
        RateSpec(regime="DoNNA", coupling="thinning", alpha=0.7)
    with pytest.raises(ValueError, match="exponent p"):
        RateSpec(regime="DoNA", coupling="thinning", alpha=0.7)
    ok = RateSpec(regime="DoNA", coupling="thinning", alpha=0.7, p=1.0)
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        rate_function(ok, 0.0)
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        rate_function(ok, 1.1)
    with pytest.raises(ValueError, match="form"):
        rate_function(ok, 0.5, form="chart")


# ---------------------------------------------------------------------------
# discrepancy integrals


def stable_spec(sigma):
    return AugmentedSpec.stable(StableSpec(alpha=ALPHA, c_alpha=C_UNIT, sigma=sigma))


def tempered_spec(sigma, lam=1.0):
    return AugmentedSpec.tempered(
        StableSpec(alpha=ALPHA, c_alpha=C_UNIT, sigma=sigma), lam
    )


def test_stable_driver_is_exactly_at_its_limit():
    for coupling in ("thinning", "comonotonic"):
        rep = discrepancy_integrals(
            stable_spec(AngularMeasure.uniform(2)), 0.3, theta=1.0, r=1.0,
            coupling=coupling,
        )
        assert rep.lhs == 0.0
        assert rep.drift_gap == 0.0
        assert rep.meta["coupling"] == coupling


def test_tempered_thinning_small_t_asymptote():
    lam, theta, r, t = 1.0, 1.0, 1.0, 1e-4
    rep = discrepancy_integrals(
        tempered_spec(AngularMeasure.uniform(2), lam), t, theta=theta, r=r
    )
    g = t ** (1.0 / ALPHA)
    s = r - ALPHA + 1.0
    want = lam * C_UNIT * g * (1.0 / s + sp_gamma(s) * gammaincc(s, theta))
    assert rep.lhs == pytest.approx(want, rel=1e-3)
    assert rep.drift_gap == 0.0
    assert rep.envelope == pytest.approx(g, rel=1e-12)


def test_tempered_thinning_band_is_order_one():
    for t in (1e-3, 1e-2, 1e-1):
        rep = discrepancy_integrals(
            tempered_spec(AngularMeasure.uniform(2)), t, theta=1.0, r=1.0
        )
        band = rep.lhs / rep.envelope
        assert 0.05 < band < 10.0


def test_atom_pair_matches_uniform_radial_integral():
    t, theta, r = 0.01, 1.0, 1.0
    pair = discrepancy_integrals(
        tempered_spec(AngularMeasure.symmetric_pair()), t, theta=theta, r=r
    )
    unif = discrepancy_integrals(
        tempered_spec(AngularMeasure.uniform(2)), t, theta=theta, r=r
    )
    assert pair.lhs == pytest.approx(unif.lhs, rel=1e-14)


def test_balanced_atom_pair_drift_gap_cancels_exactly():
    rep = discrepancy_integrals(
        tempered_spec(AngularMeasure.symmetric_pair()), 0.05, theta=1.0, r=1.0
    )
    assert rep.drift_gap == 0.0
    rep_c = discrepancy_integrals(
        tempered_spec(AngularMeasure.symmetric_pair()), 0.5, theta=1.0, r=2.0,
        coupling="comonotonic",
    )
    assert rep_c.drift_gap == 0.0


def test_truncated_thinning_matches_closed_form():
    t, theta, r = 0.25, 0.5, 2.0
    spec = AugmentedSpec.truncated(
        StableSpec(alpha=ALPHA, c_alpha=C_UNIT, sigma=AngularMeasure.symmetric_pair()),
        1.0,
    )
    rep = discrepancy_integrals(spec, t, theta=theta, r=r)
    g = t ** (1.0 / ALPHA)
    s = r - ALPHA
    want = C_UNIT * theta**-s * sp_gamma(s) * gammaincc(s, theta / g)
    assert rep.lhs == pytest.approx(want, rel=1e-8)
    assert rep.drift_gap == 0.0


def test_como_tempered_matches_brentq_oracle():
    t, theta, r = 0.5, 1.0, 2.0
    rep = discrepancy_integrals(
        tempered_spec(AngularMeasure.uniform(2)), t, theta=theta, r=r,
        coupling="comonotonic",
    )
    want = oracle_como_lhs(1.0, ALPHA, C_UNIT, t, theta, r)
    assert rep.lhs == pytest.approx(want, rel=1e-4)
    assert rep.envelope == pytest.approx(
        (t ** (1.0 / ALPHA)) ** (r * ALPHA), rel=1e-2
    )


def test_como_delta_appends_drift_envelope_term():
    t, theta, r, delta = 0.5, 1.0, 2.0, 0.5
    spec = tempered_spec(AngularMeasure.uniform(2))
    plain = discrepancy_integrals(spec, t, theta=theta, r=r, coupling="comonotonic")
    with_d = discrepancy_integrals(
        spec, t, theta=theta, r=r, coupling="comonotonic", delta=delta
    )
    assert with_d.envelope - plain.envelope == pytest.approx(
        t ** (r * delta), rel=1e-12
    )
    assert with_d.lhs == pytest.approx(plain.lhs, rel=1e-12)


def test_donna_thinning_tracks_bundle_envelope():
    bundle = SlowVariationBundle.iterated_log(1)
    spec = AugmentedSpec.radial_modulation(
        StableSpec(alpha=ALPHA, c_alpha=C_UNIT, sigma=AngularMeasure.uniform(2)),
        bundle,
    )
    rep = discrepancy_integrals(spec, 0.01, theta=1.0, r=1.0)
    assert rep.envelope == pytest.approx(bundle.H2(rep.meta["g"]), rel=1e-12)
    assert 0.0 < rep.lhs
    assert rep.lhs / rep.envelope < 50.0


def test_discrepancy_domain_errors():
    spec = tempered_spec(AngularMeasure.uniform(2))
    with pytest.raises(ValueError, match="positive"):
        discrepancy_integrals(spec, 0.1, theta=0.0, r=1.0)
    with pytest.raises(ValueError, match="diverg"):
        discrepancy_integrals(spec, 0.1, theta=1.0, r=ALPHA)
    with pytest.raises(ValueError, match="diverg"):
        discrepancy_integrals(spec, 0.1, theta=1.0, r=0.5)
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        discrepancy_integrals(spec, 0.0, theta=1.0, r=1.0)
    with pytest.raises(ValueError, match=r"\(0, 1\]"):
        discrepancy_integrals(spec, 1.5, theta=1.0, r=1.0)
    with pytest.raises(ValueError, match="coupling"):
        discrepancy_integrals(spec, 0.1, theta=1.0, r=1.0, coupling="mixed")


def test_quadrature_failure_raises_arithmetic_error():
    with pytest.raises(ArithmeticError, match="quadrature"):
        bounds_quad(lambda x: math.sin(1.0 / x) if x > 0 else 0.0, 0.0, 1.0)
