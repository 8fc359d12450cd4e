"""Tests for the error budget: ε composition, the binomial tail bound,
completeness, input-side accounting, and net expansion.

Frozen reference values were computed with an independent 60-digit
implementation and rounded to double precision.
"""

import math
import warnings

import numpy as np
import pytest
from scipy import stats

from dirne.budget import (
    EXT_FRACTION,
    ErrorBudget,
    binomial_cdf_bound,
    completeness_error,
    extractor_error,
    input_randomness,
    net_expansion,
    soundness_compose,
    split_budget,
)
from dirne.entropy import EntropyCertificate, h_bin

# Headline operating point used across the suite.
N_HEADLINE = 3.168e12
GAMMA_HEADLINE = 1.194e-4
OMEGA_HEADLINE = 0.750809
DELTA_HEADLINE = 2.1e-4


class TestErrorBudget:
    """Validation of the five-component ε budget."""

    def test_fields_echo(self):
        b = ErrorBudget(eps_s=1e-6, eps_c=1e-6, eps_ext=1e-11, eps_h=4.99995e-7, eps_eat=1e-6)
        assert b.eps_s == 1e-6
        assert b.eps_c == 1e-6
        assert b.eps_ext == 1e-11

    @pytest.mark.parametrize("field", ["eps_s", "eps_c", "eps_ext", "eps_h", "eps_eat"])
    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.5])
    def test_rejects_out_of_range_components(self, field, bad):
        kwargs = dict(eps_s=1e-6, eps_c=1e-6, eps_ext=1e-11, eps_h=4.99995e-7, eps_eat=1e-6)
        kwargs[field] = bad
        with pytest.raises(ValueError):
            ErrorBudget(**kwargs)

    def test_rejects_overspent_accumulation_branch(self):
        with pytest.raises(ValueError):
            ErrorBudget(eps_s=1e-6, eps_c=1e-6, eps_ext=1e-11, eps_h=1e-12, eps_eat=1e-3)

    def test_rejects_overspent_sum_branch(self):
        with pytest.raises(ValueError):
            ErrorBudget(eps_s=1e-6, eps_c=1e-6, eps_ext=1e-6, eps_h=1e-6, eps_eat=1e-7)


class TestSplitBudget:
    """The default allocation of a soundness budget."""

    @pytest.mark.parametrize("eps_s", [1e-3, 1e-6, 5.74e-8, 1e-9])
    def test_split_structure(self, eps_s):
        b = split_budget(eps_s, 1e-6)
        assert b.eps_ext == EXT_FRACTION * eps_s
        assert b.eps_h == 0.5 * (eps_s - b.eps_ext)
        # Both branches of the composition max out exactly at eps_s.
        assert math.isclose(b.eps_eat, eps_s, rel_tol=1e-12)
        assert soundness_compose(b.eps_eat, b.eps_ext, b.eps_h) <= eps_s * (1.0 + 1e-12)

    def test_completeness_passthrough(self):
        assert split_budget(1e-6, 3e-4).eps_c == 3e-4

    def test_rejects_budget_of_one(self):
        with pytest.raises(ValueError):
            split_budget(1.0, 0.5)


class TestSoundnessCompose:
    """max{ε_EAT, ε_EXT + 2·ε_h} with domain checks."""

    def test_accumulation_branch_dominates(self):
        assert soundness_compose(1e-6, 1e-11, 1e-7) == 1e-6

    def test_sum_branch_dominates(self):
        assert soundness_compose(1e-8, 1e-7, 1e-7) == 1e-7 + 2e-7

    def test_domain(self):
        with pytest.raises(ValueError):
            soundness_compose(0.0, 0.5, 0.5)


class TestBinomialCdfBound:
    """The KL-based normal upper bound on the binomial lower tail."""

    def test_reference_value(self):
        np.testing.assert_allclose(
            binomial_cdf_bound(200, 80, 0.5), 0.0022699074683118214, rtol=1e-12
        )

    def test_dominates_exact_cdf_at_reference_point(self):
        exact = 0.00181747397626496926  # P(X ≤ 79), X ~ Binomial(200, 1/2)
        np.testing.assert_allclose(stats.binom.cdf(79, 200, 0.5), exact, rtol=1e-12)
        assert binomial_cdf_bound(200, 80, 0.5) >= exact

    def test_exactly_half_at_the_mean(self):
        assert binomial_cdf_bound(100, 50, 0.5) == 0.5
        assert binomial_cdf_bound(1_000_000, 300_000, 0.3) == 0.5

    def test_full_count_branch(self):
        got = binomial_cdf_bound(5, 5, 0.5)
        expected = 0.5 * math.erfc(-math.sqrt(2.0 * 5.0 * math.log(2.0)) / math.sqrt(2.0))
        assert math.isclose(got, expected, rel_tol=1e-14)
        assert got >= stats.binom.cdf(4, 5, 0.5)

    def test_monotone_in_count(self):
        ks = [290_000, 295_000, 299_999]
        vals = [binomial_cdf_bound(1_000_000, k, 0.3) for k in ks]
        assert vals == sorted(vals)
        assert all(0.0 < v < 0.5 for v in vals)

    def test_dominates_exact_cdf_randomized(self):
        """Spot-check dominance on random (n, k, p) triples."""
        rng = np.random.default_rng(42)
        for _ in range(100):
            n = int(rng.integers(10, 10_001))
            k_plus_1 = int(rng.integers(1, n + 1))
            p = float(rng.uniform(0.02, 0.98))
            bound = binomial_cdf_bound(n, k_plus_1, p)
            exact = stats.binom.cdf(k_plus_1 - 1, n, p)
            assert bound >= exact

    def test_stable_near_the_mean_at_scale(self):
        """No cancellation blow-up when x sits within ~1e-6 of p."""
        n = 1e12
        p = 0.3
        lo = binomial_cdf_bound(n, 299_999_700_000, p)
        hi = binomial_cdf_bound(n, 300_000_000_000, p)
        assert 0.0 < lo < hi <= 0.5

    @pytest.mark.parametrize(
        "n, k_plus_1, p",
        [
            (100, 0, 0.5),
            (100, 101, 0.5),
            (100, 50, 0.0),
            (100, 50, 1.0),
        ],
    )
    def test_domain(self, n, k_plus_1, p):
        with pytest.raises(ValueError):
            binomial_cdf_bound(n, k_plus_1, p)


class TestCompletenessError:
    """Abort-probability bound for an honest device."""

    def test_headline_reference_value(self):
        got = completeness_error(N_HEADLINE, GAMMA_HEADLINE, OMEGA_HEADLINE, DELTA_HEADLINE)
        np.testing.assert_allclose(got, 1.2151550014549403e-06, rtol=1e-9)

    def test_small_reference_value(self):
        got = completeness_error(1e4, 0.5, 0.85, 0.05)
        np.testing.assert_allclose(got, 2.1976911323462315e-07, rtol=1e-9)

    def test_reduces_to_tail_bound_at_integer_threshold(self):
        """The wrapper is exactly the tail bound at ⌈threshold⌉ + 1."""
        n, gamma, omega, delta = 1e6, 1e-2, 0.8, 1e-2
        k_plus_1 = math.ceil(n * gamma * (omega - delta)) + 1
        assert completeness_error(n, gamma, omega, delta) == binomial_cdf_bound(
            n, k_plus_1, gamma * omega
        )

    def test_threshold_above_n_returns_trivial_bound(self):
        assert completeness_error(10, 1.0, 1.0, 1e-9) == 1.0

    def test_non_positive_threshold_warns(self):
        with pytest.warns(RuntimeWarning):
            got = completeness_error(100, 0.5, 0.4, 0.5)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            assert got == binomial_cdf_bound(100, 1, 0.5 * 0.4)
        assert 0.0 < got < 0.5

    def test_shrinks_with_wider_abort_margin(self):
        vals = [completeness_error(1e6, 1e-2, 0.8, d) for d in (1e-3, 5e-3, 2e-2)]
        assert vals == sorted(vals, reverse=True)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(n=0),
            dict(gamma=0.0),
            dict(gamma=1.5),
            dict(omega_exp=1.5),
        ],
    )
    def test_domain(self, kwargs):
        good = dict(n=1e6, gamma=1e-2, omega_exp=0.8, delta=1e-2)
        good.update(kwargs)
        with pytest.raises(ValueError):
            completeness_error(**good)


class TestInputRandomness:
    """Uniform bits consumed to drive the inputs."""

    def test_headline_reference_value(self):
        got = input_randomness(N_HEADLINE, GAMMA_HEADLINE)
        np.testing.assert_allclose(got, 6231638171.8547804, rtol=1e-12)

    def test_per_round_rate(self):
        """(consumed − 2)/n is the binary entropy of γ plus two raw bits."""
        gamma = 1.008e-4
        got = input_randomness(1e9, gamma)
        np.testing.assert_allclose(got, 1e9 * (h_bin(gamma) + 2.0 * gamma) + 2.0, rtol=1e-15)
        np.testing.assert_allclose((got - 2.0) / 1e9, 0.00168525897798658998, rtol=1e-12)

    def test_monotone_in_gamma_below_half(self):
        vals = [input_randomness(1e6, g) for g in (1e-3, 1e-2, 0.1, 0.5)]
        assert vals == sorted(vals)

    @pytest.mark.parametrize("gamma", [0.0, 1.0, -0.1])
    def test_gamma_domain(self, gamma):
        with pytest.raises(ValueError):
            input_randomness(1e6, gamma)


class TestExtractorError:
    """Hashing error of Toeplitz extraction."""

    def test_powers_of_two(self):
        assert extractor_error(1300, 1200) == 2.0**-50
        assert extractor_error(100, 100) == 1.0

    def test_domain(self):
        with pytest.raises(ValueError):
            extractor_error(100, 101)
        with pytest.raises(ValueError):
            extractor_error(100, -1)


class TestNetExpansion:
    """Output minus input accounting."""

    @staticmethod
    def _toy_certificate() -> EntropyCertificate:
        return EntropyCertificate(
            n=1e5,
            hmin_lower=1e6,
            rate_per_round=10.0,
            threshold_r=10.0,
            error_term_alpha=0.0,
            inner_inf_value=0.0,
            alpha=1.5,
            t=0.8,
            c_perp=0.0,
        )

    def test_toy_reference_value(self):
        net = net_expansion(self._toy_certificate(), 1e5, 1e-2, 2.0**-40)
        np.testing.assert_allclose(net, 989838.6864104089, rtol=1e-12)

    def test_reconstruction(self):
        cert = self._toy_certificate()
        net = net_expansion(cert, 1e5, 1e-2, 2.0**-40)
        expected = (cert.hmin_lower - 80.0) - input_randomness(1e5, 1e-2)
        assert math.isclose(net, expected, rel_tol=1e-14)
