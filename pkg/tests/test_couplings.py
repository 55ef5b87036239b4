"""Tests for the coupled jump-stream samplers.

Oracles come first: independent brute-force integrators and reference count
laws that the sampler outputs are held against.
"""

import math

import numpy as np
import pytest
from scipy import stats

from lcl._rng import substream
from lcl.levy_model import (
    AngularMeasure,
    AugmentedSpec,
    RadialTail,
    StableSpec,
    unit_scale_c_alpha,
)
from lcl.couplings import (
    ComonotonicSampler,
    CoupledJumpStream,
    IndependentSampler,
    ThinningSampler,
    default_eps,
    first_moment_above,
    lambda_for_eps,
    sample_comonotonic,
    sample_independent,
    sample_thinning,
    truncation_error,
)

# ---------------------------------------------------------------------------
# oracles


def oracle_small_moment_tempered(r: int, eps: float, alpha: float, lam: float, c: float) -> float:
    """int_0^eps x^{r-alpha-1} c e^{-lam x} dx by a million-point log-spaced
    trapezoid plus a two-term series stub for the integrable endpoint."""
    a0 = eps * 1e-12
    stub = c * (a0 ** (r - alpha) / (r - alpha) - lam * a0 ** (r - alpha + 1) / (r - alpha + 1))
    xs = np.logspace(math.log10(a0), math.log10(eps), 1_000_001)
    ys = c * xs ** (r - alpha - 1.0) * np.exp(-lam * xs)
    return stub + float(np.trapezoid(ys, xs))


def oracle_retained_tail_mass(s: float, alpha: float, lam: float, c: float) -> float:
    """int_s^inf c x^{-alpha-1} e^{-lam x} dx by log-spaced trapezoid with an
    exponentially damped far cutoff."""
    hi = s + 60.0 / max(lam, 1.0)
    xs = np.logspace(math.log10(s), math.log10(hi), 400_001)
    ys = c * xs ** (-alpha - 1.0) * np.exp(-lam * xs)
    return float(np.trapezoid(ys, xs))


def oracle_poisson_ks(counts: np.ndarray, mean: float) -> float:
    """sup_k |empirical CDF - Poisson(mean) CDF| over the observed range."""
    counts = np.asarray(counts)
    ks = np.arange(0, counts.max() + 1)
    emp = (counts[None, :] <= ks[:, None]).mean(axis=1)
    ref = stats.poisson.cdf(ks, mean)
    return float(np.max(np.abs(emp - ref)))


def binomial_3sigma(p: float, n: int) -> float:
    return 3.0 * math.sqrt(max(p * (1.0 - p), 1e-12) / n)


def test_oracle_small_moment_matches_closed_form_powerlaw():
    # lam = 0 reduces to c eps^{r-a}/(r-a); the oracle must reproduce it
    got = oracle_small_moment_tempered(1, 0.01, 0.5, 0.0, 0.5)
    assert got == pytest.approx(0.1, rel=1e-8)


def test_oracle_poisson_ks_is_small_for_exact_poisson_draws():
    rng = substream(314159)
    counts = rng.poisson(5.0, size=10_000)
    assert oracle_poisson_ks(counts, 5.0) < 0.015


# ---------------------------------------------------------------------------
# shared fixtures

ALPHA = 0.7
C_UNIT = unit_scale_c_alpha(ALPHA)


def pair_sigma():
    return AngularMeasure.symmetric_pair()


def base_spec(alpha=ALPHA):
    return StableSpec(alpha=alpha, c_alpha=unit_scale_c_alpha(alpha), sigma=pair_sigma())


def stable_driver(alpha=ALPHA):
    return AugmentedSpec.stable(base_spec(alpha))


def tempered_driver(lam, alpha=ALPHA):
    return AugmentedSpec.tempered(base_spec(alpha), lam)


# ---------------------------------------------------------------------------
# truncation error


class TestTruncationError:
    def test_stable_alpha_half_closed_form(self):
        spec = AugmentedSpec.stable(
            StableSpec(alpha=0.5, c_alpha=0.5, sigma=pair_sigma())
        )
        l1, l2 = truncation_error(spec, 0.01)
        assert l1 == pytest.approx(0.1, rel=1e-12)
        assert l2 == pytest.approx(0.5 * 0.01**1.5 / 1.5, rel=1e-12)

    def test_l2_scales_by_two_to_minus_two_minus_alpha(self):
        spec = stable_driver()
        _, l2a = truncation_error(spec, 0.02)
        _, l2b = truncation_error(spec, 0.01)
        assert l2b / l2a == pytest.approx(2.0 ** -(2.0 - ALPHA), rel=1e-6)

    def test_tempered_against_trapezoid_oracle(self):
        spec = tempered_driver(1.0)
        l1, l2 = truncation_error(spec, 1e-3)
        want1 = oracle_small_moment_tempered(1, 1e-3, ALPHA, 1.0, C_UNIT)
        want2 = oracle_small_moment_tempered(2, 1e-3, ALPHA, 1.0, C_UNIT)
        assert l1 == pytest.approx(want1, rel=1e-6)
        assert l2 == pytest.approx(want2, rel=1e-6)

    def test_infinite_variation_gives_l1_sentinel_not_error(self):
        l1, l2 = truncation_error(stable_driver(alpha=1.5), 0.1)
        assert math.isinf(l1)
        assert math.isfinite(l2) and l2 > 0

    def test_truncated_driver_ignores_mass_beyond_cut(self):
        spec = AugmentedSpec.truncated(base_spec(), 0.005)
        l1_at_cut, _ = truncation_error(spec, 0.005)
        l1_above, _ = truncation_error(spec, 0.5)
        assert l1_above == pytest.approx(l1_at_cut, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            truncation_error(stable_driver(), 0.0)
        with pytest.raises(ValueError):
            truncation_error(stable_driver(), 1.5)

    def test_default_eps_meets_tolerance_and_documents_scale(self):
        spec = stable_driver()
        e = default_eps(spec, tol=1e-6)
        assert truncation_error(spec, e)[0] <= 1e-6
        # closed form: eps = (tol (1-a) / c)^{1/(1-a)} — astronomically small
        want = (1e-6 * 0.3 / C_UNIT) ** (1.0 / 0.3)
        assert e == pytest.approx(want, rel=1e-3)
        assert e < 1e-20

    def test_default_eps_variance_proxy_for_infinite_variation(self):
        spec = stable_driver(alpha=1.5)
        e = default_eps(spec, tol=1e-6)
        assert truncation_error(spec, e)[1] <= 1e-6
        assert truncation_error(spec, min(1.0, e * 2.0))[1] > 1e-6


# ---------------------------------------------------------------------------
# retained first moments / compensators


class TestFirstMoments:
    def test_stable_retained_moment_closed_form(self):
        spec = stable_driver(alpha=1.5)
        c = spec.base.c_alpha
        got = first_moment_above(spec, 0.3, np.array([1.0]))
        assert got == pytest.approx(c * 0.3**-0.5 / 0.5, rel=1e-12)

    def test_tempered_retained_moment_vs_quadrature(self):
        spec = tempered_driver(2.0, alpha=1.5)
        c = spec.base.c_alpha
        got = first_moment_above(spec, 0.3, np.array([1.0]))
        want = oracle_retained_tail_mass(0.3, 0.5, 2.0, c)  # x * x^{-a-1} = x^{-0.5-1}
        assert got == pytest.approx(want, rel=1e-6)

    def test_truncated_retained_moment(self):
        spec = AugmentedSpec.truncated(base_spec(alpha=1.3), 2.0)
        c = spec.base.c_alpha
        got = first_moment_above(spec, 0.5, np.array([1.0]))
        assert got == pytest.approx(c * (0.5**-0.3 - 2.0**-0.3) / 0.3, rel=1e-12)
        assert first_moment_above(spec, 3.0, np.array([1.0])) == 0.0

    def test_symmetric_pair_compensator_cancels(self):
        s = ThinningSampler(tempered_driver(1.0, alpha=1.5), stable_driver(alpha=1.5), 0.2)
        c1, c2 = s.compensators()
        assert np.allclose(c1, 0.0) and np.allclose(c2, 0.0)

    def test_asymmetric_weights_compensator_closed_form(self):
        sig = AngularMeasure.from_atoms([[1.0], [-1.0]], [0.75, 0.25])
        base = StableSpec(alpha=1.5, c_alpha=1.0, sigma=sig)
        spec = AugmentedSpec.stable(base)
        s = ThinningSampler(spec, None, 0.2)
        c1, _ = s.compensators()
        mom = 1.0 * 0.2**-0.5 / 0.5
        assert c1[0] == pytest.approx(-(0.75 - 0.25) * mom, rel=1e-12)

    def test_finite_variation_compensator_is_zero(self):
        s = ThinningSampler(tempered_driver(1.0), tempered_driver(2.0), 0.05)
        c1, c2 = s.compensators()
        assert np.all(c1 == 0.0) and np.all(c2 == 0.0)


# ---------------------------------------------------------------------------
# thinning sampler


class TestThinning:
    def test_identical_specs_every_event_shared(self):
        spec = tempered_driver(1.0)
        st = sample_thinning(spec, spec, 0.05, 4.0, 99)
        st.check_invariants()
        assert st.n_events > 10
        assert np.all(st.shared)
        assert np.array_equal(st.jump1, st.jump2)
        assert st.sup_difference() == 0.0

    def test_degenerate_second_driver_count_is_poisson(self):
        # f1 = 1, f2 = 0: stream 2 empty; the count of stream-1 events is
        # Poisson with mean T * nu_1(|w| >= eps)
        spec = stable_driver()
        eps = 0.167
        s = ThinningSampler(spec, None, eps)
        mean = 1.0 * s.mass
        counts = np.empty(10_000, dtype=int)
        for k in range(counts.size):
            st = s.sample(1.0, 1_000_000 + k)
            counts[k] = st.n_events
            if k < 50:
                assert np.all(st.jump2 == 0.0)
                assert not st.shared.any()
        assert oracle_poisson_ks(counts, mean) < 0.02

    def test_envelope_acceptance_frequency_estimates_f2(self):
        # under the attractor-anchored envelope, the driver-2 acceptance
        # frequency at radius x must estimate f2(x) = e^{-x} / (1 + K_h)
        s1, s2 = stable_driver(), tempered_driver(1.0)
        samp = ThinningSampler(s1, s2, 0.01, dominating="stable-envelope")
        rng = substream(777)
        _, atom_idx, _, levels, marks = samp._draw_marks(rng, 800.0)
        radii, f1, f2 = samp._radii_and_densities(atom_idx, levels)
        scale = 2.0  # 1 + K_h with K_h = max(0, lam) = 1
        assert np.allclose(f1, 1.0 / scale)
        assert np.allclose(f2, np.exp(-radii) / scale, rtol=1e-12)
        accepted = marks <= f2
        edges = np.array([0.01, 0.03, 0.1, 0.3, 1.0, 3.0])
        for lo, hi in zip(edges[:-1], edges[1:]):
            sel = (radii >= lo) & (radii < hi)
            n = int(sel.sum())
            if n < 200:
                continue
            p_bar = float(f2[sel].mean())
            p_hat = float(accepted[sel].mean())
            assert abs(p_hat - p_bar) <= binomial_3sigma(p_bar, n) + 1e-12

    def test_sharing_law_matches_min_density(self):
        samp = ThinningSampler(tempered_driver(1.0), tempered_driver(2.0), 0.05)
        rng = substream(987)
        _, atom_idx, _, levels, marks = samp._draw_marks(rng, 400.0)
        radii, f1, f2 = samp._radii_and_densities(atom_idx, levels)
        fmin = np.minimum(f1, f2)
        shared = marks <= fmin
        edges = np.logspace(math.log10(0.05), math.log10(5.0), 8)
        checked = 0
        for lo, hi in zip(edges[:-1], edges[1:]):
            sel = (radii >= lo) & (radii < hi)
            n = int(sel.sum())
            if n < 200:
                continue
            p_bar = float(fmin[sel].mean())
            p_hat = float(shared[sel].mean())
            assert abs(p_hat - p_bar) <= binomial_3sigma(p_bar, n) + 1e-12
            checked += 1
        assert checked >= 3

    def test_sum_dominating_densities_add_to_one(self):
        samp = ThinningSampler(tempered_driver(1.0), tempered_driver(2.0), 0.05)
        xs = np.logspace(-1, 1, 50)
        f1, f2 = samp.densities_at(xs, np.array([1.0]))
        assert np.allclose(f1 + f2, 1.0, rtol=1e-12)

    def test_density_above_one_is_reported_with_the_point(self):
        # a genuinely varying modulation exceeds the normal-attraction
        # envelope near zero, and the sampler must name the offending radius
        from lcl.levy_model import SlowVariationBundle

        bundle = SlowVariationBundle.iterated_log(1)
        spec = AugmentedSpec.radial_modulation(base_spec(), bundle)
        samp = ThinningSampler(spec, None, 1e-3, dominating="stable-envelope")
        with pytest.raises(ValueError, match="density above 1"):
            samp.sample(0.5, 3)

    def test_domain_and_mismatch_errors(self):
        with pytest.raises(ValueError):
            ThinningSampler(stable_driver(), None, 0.0)
        with pytest.raises(ValueError):
            ThinningSampler(stable_driver(), None, -1.0)
        with pytest.raises(ValueError, match="stability index"):
            ThinningSampler(stable_driver(0.7), stable_driver(1.5), 0.1)
        with pytest.raises(ValueError, match="dominating"):
            ThinningSampler(stable_driver(), None, 0.1, dominating="bogus")

    def test_event_budget_guard(self):
        s = ThinningSampler(stable_driver(), None, 1e-12, max_expected_events=1e6)
        with pytest.raises(ValueError, match="exceeds the budget"):
            s.sample(1.0, 1)

    def test_determinism_and_seed_sensitivity(self):
        a = sample_thinning(tempered_driver(1.0), tempered_driver(2.0), 0.05, 1.0, 42)
        b = sample_thinning(tempered_driver(1.0), tempered_driver(2.0), 0.05, 1.0, 42)
        c = sample_thinning(tempered_driver(1.0), tempered_driver(2.0), 0.05, 1.0, 43)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.jump1, b.jump1)
        assert np.array_equal(a.jump2, b.jump2)
        assert np.array_equal(a.shared, b.shared)
        assert not (a.n_events == c.n_events and np.array_equal(a.times, c.times))

    def test_count_hits_deterministic_and_mean_matches_tail(self):
        samp = ThinningSampler(tempered_driver(1.0), tempered_driver(2.0), 0.05)
        thresholds = np.array([0.1, 0.5])
        h1 = samp.count_hits(1.0, 5, thresholds, which=1, chunk=64)
        h2 = samp.count_hits(1.0, 5, thresholds, which=1, chunk=64)
        assert np.array_equal(h1, h2)
        # law check: the mean over seeds estimates T * rho_1([s, inf))
        T = 2.0
        want = np.array(
            [T * oracle_retained_tail_mass(s, ALPHA, 1.0, C_UNIT) for s in thresholds]
        )
        acc = np.zeros(2)
        n_seeds = 600
        for k in range(n_seeds):
            acc += samp.count_hits(T, 20_000 + k, thresholds, which=1, chunk=256)
        got = acc / n_seeds
        sigma = np.sqrt(want / n_seeds)
        assert np.all(np.abs(got - want) <= 3.5 * sigma)


# ---------------------------------------------------------------------------
# comonotonic sampler


class TestComonotonic:
    def _tails(self, lam1=1.0, lam2=2.0):
        t1 = RadialTail.from_augmented(tempered_driver(lam1))
        t2 = RadialTail.from_augmented(tempered_driver(lam2))
        return t1, t2

    def test_identical_tails_identical_jumps(self):
        t1, _ = self._tails()
        st = sample_comonotonic(t1, t1, 25.0, 1.0, 8)
        st.check_invariants()
        assert st.n_events > 5
        assert np.array_equal(st.jump1, st.jump2)
        assert not st.shared.any()

    def test_magnitudes_nonincreasing_in_epoch(self):
        # mixed inverse routes: interpolated (tempered) and exact (truncated)
        t1 = RadialTail.from_augmented(tempered_driver(1.0))
        t2 = RadialTail.from_augmented(AugmentedSpec.truncated(base_spec(), 1.0))
        st = sample_comonotonic(t1, t2, 40.0, 2.0, 21)
        st.check_invariants()
        order = np.argsort(st.meta["epochs"])
        for jumps in (st.jump1, st.jump2):
            mags = np.linalg.norm(jumps[order], axis=1)
            assert np.all(np.diff(mags) <= 1e-9 * np.maximum(mags[:-1], 1e-300))

    def test_count_law_matches_quadrature_oracle(self):
        t1, t2 = self._tails()
        samp = ComonotonicSampler(t1, t2, 50.0, spec1=tempered_driver(1.0), spec2=tempered_driver(2.0))
        s_thr = 0.1
        total = 0
        n_paths = 10_000
        for k in range(n_paths):
            st = samp.sample(1.0, 3_000_000 + k)
            total += int((np.linalg.norm(st.jump1, axis=1) >= s_thr).sum())
        got = total / n_paths
        want = oracle_retained_tail_mass(s_thr, ALPHA, 1.0, C_UNIT)
        assert abs(got - want) <= 0.02 * want

    def test_zero_radius_side_keeps_other_driver(self):
        # a finite-activity tail runs out of mass before the epoch cap: those
        # events survive with a zero jump on the exhausted side only
        sig = pair_sigma()

        def cp_tail(x):
            x = np.asarray(x, dtype=float)
            return 5.0 * np.clip((1.0 - x) / 0.5, 0.0, 1.0)

        t1 = RadialTail.from_callable(sig, cp_tail, total_mass=5.0, support_upper=1.0)
        t2 = RadialTail.from_augmented(tempered_driver(1.0))
        st = sample_comonotonic(t1, t2, 30.0, 1.0, 13)
        st.check_invariants()
        high = st.meta["epochs"] > 5.0
        assert high.any()
        assert np.all(np.linalg.norm(st.jump1[high], axis=1) == 0.0)
        assert np.all(np.linalg.norm(st.jump2[high], axis=1) > 0.0)

    def test_per_jump_mean_gap_matches_quadrature(self):
        lam_cap = 20.0
        sig = pair_sigma()
        spec1, spec2 = tempered_driver(1.0), tempered_driver(2.0)
        t1 = RadialTail(sig, [lambda x, v=v: spec1.tail(x, v) for v in sig.directions],
                        cache_u_range=(1e-10, 1e8))
        t2 = RadialTail(sig, [lambda x, v=v: spec2.tail(x, v) for v in sig.directions],
                        cache_u_range=(1e-10, 1e8))
        u = lam_cap * (1.0 - substream(55).random(100_000))
        mc = float(np.abs(t1.inverse_bulk(u, v=0) - t2.inverse_bulk(u, v=0)).mean())
        grid = np.logspace(-9, math.log10(lam_cap), 200_001)
        vals = np.abs(t1.inverse_bulk(grid, v=0) - t2.inverse_bulk(grid, v=0))
        quad = float(np.trapezoid(vals, grid)) / lam_cap
        assert abs(mc - quad) <= 0.01 * quad

    def test_domain_and_mismatch_errors(self):
        t1, t2 = self._tails()
        with pytest.raises(ValueError):
            ComonotonicSampler(t1, t2, 0.0)
        with pytest.raises(ValueError):
            ComonotonicSampler(t1, t2, -3.0)
        other = RadialTail.from_augmented(
            AugmentedSpec.tempered(
                StableSpec(
                    alpha=ALPHA,
                    c_alpha=C_UNIT,
                    sigma=AngularMeasure.from_atoms([[1.0], [-1.0]], [0.75, 0.25]),
                ),
                1.0,
            )
        )
        with pytest.raises(ValueError, match="angular measure"):
            ComonotonicSampler(t1, other, 10.0)

    def test_determinism(self):
        t1, t2 = self._tails()
        a = sample_comonotonic(t1, t2, 25.0, 1.0, 42)
        b = sample_comonotonic(t1, t2, 25.0, 1.0, 42)
        assert np.array_equal(a.times, b.times)
        assert np.array_equal(a.jump1, b.jump1)
        assert np.array_equal(a.jump2, b.jump2)
        assert np.array_equal(a.meta["epochs"], b.meta["epochs"])

    def test_lambda_for_eps_matches_tail_level(self):
        t1, _ = self._tails()
        lam = lambda_for_eps(t1, 0.05)
        assert lam == pytest.approx(float(np.asarray(t1.tail(0.05, v=0))), rel=1e-12)
        # retained cutoff at that cap recovers eps
        samp = ComonotonicSampler(t1, t1, lam)
        cut = samp.retained_cutoffs(1)
        assert np.allclose(cut, 0.05, rtol=1e-6)


# ---------------------------------------------------------------------------
# independent baseline


class TestIndependent:
    def test_no_shared_even_for_identical_specs(self):
        spec = tempered_driver(1.0)
        st = sample_independent(spec, spec, 0.05, 2.0, 17)
        st.check_invariants()
        assert st.n_events > 10
        assert not st.shared.any()
        m1 = np.linalg.norm(st.jump1, axis=1)
        m2 = np.linalg.norm(st.jump2, axis=1)
        assert np.all((m1 == 0) | (m2 == 0))

    def test_marginal_count_law_matches_thinning(self):
        spec1, spec2 = tempered_driver(1.0), tempered_driver(2.0)
        eps = 0.1
        thin = ThinningSampler(spec1, spec2, eps)
        indep = IndependentSampler(spec1, spec2, eps)
        mean1 = float(np.asarray(spec1.tail(eps, np.array([1.0]))))  # symmetric pair
        n_seeds = 8_000
        ct = np.empty(n_seeds, dtype=int)
        ci = np.empty(n_seeds, dtype=int)
        for k in range(n_seeds):
            st = thin.sample(1.0, 5_000_000 + k)
            ct[k] = int((np.linalg.norm(st.jump1, axis=1) > 0).sum())
            si = indep.sample(1.0, 6_000_000 + k)
            ci[k] = int((np.linalg.norm(si.jump1, axis=1) > 0).sum())
        assert oracle_poisson_ks(ct, mean1) < 0.02
        assert oracle_poisson_ks(ci, mean1) < 0.02

    def test_mean_sup_gap_larger_than_comonotonic(self):
        spec1, spec2 = tempered_driver(1.0), stable_driver()
        eps = 0.05
        lam_cap = lambda_for_eps(RadialTail.from_augmented(spec2), eps)
        indep = IndependentSampler(spec1, spec2, eps)
        como = ComonotonicSampler(
            RadialTail.from_augmented(spec1),
            RadialTail.from_augmented(spec2),
            lam_cap,
            spec1=spec1,
            spec2=spec2,
        )
        n = 2_000
        gap_i = np.empty(n)
        gap_c = np.empty(n)
        for k in range(n):
            gap_i[k] = indep.sample(1.0, 40_000 + k).sup_difference()
            gap_c[k] = como.sample(1.0, 40_000 + k).sup_difference()
        # the gap's upper tail has infinite mean at this stability index, so a
        # raw sample-mean comparison only compares each sample's largest
        # outlier; the location ordering is asserted through the median and a
        # capped mean, both of which are stable across seeds
        assert np.median(gap_i) > 1.3 * np.median(gap_c)
        assert np.minimum(gap_i, 5.0).mean() > 1.1 * np.minimum(gap_c, 5.0).mean()


# ---------------------------------------------------------------------------
# cross-coupling marginal-law invariance


class TestMarginalInvariance:
    def test_two_sample_ks_under_two_percent(self):
        spec1, spec2 = tempered_driver(1.0), tempered_driver(2.0)
        eps = 0.01
        t1 = RadialTail.from_augmented(spec1)
        t2 = RadialTail.from_augmented(spec2)
        lam_cap = lambda_for_eps(t1, eps)  # driver 1's cutoff is exactly eps
        thin = ThinningSampler(spec1, spec2, eps)
        como = ComonotonicSampler(t1, t2, lam_cap, spec1=spec1, spec2=spec2)
        indep = IndependentSampler(spec1, spec2, eps)
        ts = np.array([0.25, 0.5, 1.0])
        n = 10_000
        vals = {}
        for name, samp, base_seed in (
            ("thin", thin, 10_000_000),
            ("como", como, 11_000_000),
            ("indep", indep, 12_000_000),
        ):
            y1 = np.empty((n, 3))
            y2 = np.empty((n, 3))
            for k in range(n):
                st = samp.sample(1.0, base_seed + k)
                y1[k] = st.marginal_at(1, ts)[:, 0]
                y2[k] = st.marginal_at(2, ts)[:, 0]
            vals[name] = (y1, y2)
        worst = 0.0
        for a, b in (("thin", "como"), ("thin", "indep"), ("como", "indep")):
            for which in (0, 1):
                for j in range(3):
                    d = stats.ks_2samp(
                        vals[a][which][:, j], vals[b][which][:, j]
                    ).statistic
                    worst = max(worst, float(d))
                    assert d < 0.02, (a, b, which, ts[j], d)
        # the couplings genuinely vary jointly yet agree marginally
        assert worst > 0.0


# ---------------------------------------------------------------------------
# stream data structure


class TestStream:
    def _tiny(self, **over):
        kw = dict(
            T=1.0,
            d=1,
            times=np.array([0.5]),
            jump1=np.array([[1.0]]),
            jump2=np.array([[0.0]]),
            shared=np.array([False]),
            eps=0.1,
            comp1=np.array([0.2]),
            comp2=np.array([0.0]),
            meta={"coupling": "thinning"},
        )
        kw.update(over)
        return CoupledJumpStream(**kw)

    def test_marginal_at_steps_and_drift(self):
        st = self._tiny()
        got = st.marginal_at(1, [0.4, 0.5, 1.0])[:, 0]
        assert got == pytest.approx([0.08, 1.1, 1.2])

    def test_sup_difference_piecewise_linear(self):
        st = self._tiny()
        # |Y1 - Y2| = 0.2 t before the jump, 1 + 0.2 t after: sup = 1.2 at T
        assert st.sup_difference() == pytest.approx(1.2)

    def test_invariant_violations_raise(self):
        bad_order = self._tiny(
            times=np.array([0.6, 0.5]),
            jump1=np.array([[1.0], [1.0]]),
            jump2=np.array([[0.0], [0.0]]),
            shared=np.array([False, False]),
        )
        with pytest.raises(AssertionError, match="sorted"):
            bad_order.check_invariants()
        lying_shared = self._tiny(shared=np.array([True]))
        with pytest.raises(AssertionError, match="differing jumps"):
            lying_shared.check_invariants()
        small = self._tiny(jump1=np.array([[0.01]]))
        with pytest.raises(AssertionError, match="below the truncation"):
            small.check_invariants()
        ghost = self._tiny(jump1=np.array([[0.0]]))
        with pytest.raises(AssertionError, match="no jump"):
            ghost.check_invariants()
        shared_como = self._tiny(
            meta={"coupling": "comonotonic"}, shared=np.array([True])
        )
        with pytest.raises(AssertionError, match="never"):
            shared_como.check_invariants()
