import math
from collections.abc import Callable

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from src.baselines import (
    BERNOULLI_SIGMA2,
    GAUSSIAN_SIGMA2,
    bernoulli_ks,
    bernoulli_lambda,
    bernoulli_rate,
    bernoulli_series,
    certified_truncation,
    gaussian_ks,
    gaussian_lambda,
    gaussian_log_weighted,
    gaussian_rate,
    gaussian_series,
    ld_tail,
)
from src.exceptions import DomainError

N_MAX = 200


def test_bernoulli_rate_endpoints() -> None:
    """Verify I(0) = 0, I(1/2) = log 2 and +inf beyond."""
    assert bernoulli_rate(0.0) == 0.0
    assert bernoulli_rate(0.5) == pytest.approx(math.log(2.0))
    assert bernoulli_rate(0.6) == math.inf


@given(st.floats(min_value=0.001, max_value=0.49))
def test_bernoulli_rate_is_symmetric_and_above_gaussian(eps: float) -> None:
    """Verify the fair-bit rate is even and dominates 2 eps^2."""
    assert bernoulli_rate(-eps) == bernoulli_rate(eps)
    assert bernoulli_rate(eps) >= gaussian_rate(eps, BERNOULLI_SIGMA2) * (1 - 1e-12)


def test_gaussian_rate() -> None:
    """Verify eps^2 / (2 sigma^2)."""
    assert gaussian_rate(0.3) == pytest.approx(0.045)
    assert gaussian_rate(0.3, 0.25) == pytest.approx(0.18)


def test_bernoulli_lambda_small_cases() -> None:
    """Verify exact binomial tails, including the boundary atom."""
    assert bernoulli_lambda(1, 0.3).plus == pytest.approx(0.5)
    assert bernoulli_lambda(4, 0.25).plus == pytest.approx(5 / 16)
    estimate = bernoulli_lambda(4, 0.25)
    assert estimate.plus == estimate.minus


def test_gaussian_lambda() -> None:
    """Verify Phi(-eps sqrt(n))."""
    assert gaussian_lambda(4, 0.5).plus == pytest.approx(float(special.ndtr(-1.0)))


def test_ld_tail_skips_infinite_rates() -> None:
    """Verify an infinite rate contributes nothing to the tail."""
    n = np.array([1.0, 10.0])
    assert np.all(ld_tail((math.inf, math.inf), 1.0, n) == 0.0)
    one_sided = ld_tail((0.5, math.inf), 2.0, n)
    assert one_sided[1] == pytest.approx(2.0 * math.exp(-5.0) / -math.expm1(-0.5))


def test_certified_truncation_first_index() -> None:
    """Verify the first index whose tail is below the threshold is returned, 1-based."""
    partial = np.array([1.0, 1.0, 1.0])
    assert certified_truncation(partial, np.array([1.0, 1e-2, 1e-4])) == 3
    assert certified_truncation(partial, np.array([1.0, 1.0, 1.0])) is None


@pytest.mark.parametrize("eps", [0.1, 0.05])
def test_gaussian_series_heyde_scaling(eps: float) -> None:
    """Verify eps^2 times the Gaussian series is within eps^2 of sigma^2 = 1."""
    series = gaussian_series(eps, N_MAX)
    assert series.certified
    assert eps * eps * series.value == pytest.approx(GAUSSIAN_SIGMA2, abs=eps * eps)
    assert len(series.per_n) == min(N_MAX, series.truncation_n)
    assert series.per_n[0].plus == pytest.approx(float(special.ndtr(-eps)))


def test_gaussian_series_weighted_value() -> None:
    """Verify the log-weighted field is 2 IV(eps)."""
    assert gaussian_series(0.05, N_MAX).weighted_value == pytest.approx(gaussian_log_weighted(0.05))


def test_bernoulli_series_heyde_scaling() -> None:
    """Verify eps^2 times the fair-bit series is close to sigma^2 = 1/4."""
    series = bernoulli_series(0.05, N_MAX)
    assert series.certified
    assert series.tail_remainder < 1e-3 * series.value
    assert 0.05**2 * series.value == pytest.approx(BERNOULLI_SIGMA2, rel=0.1)
    assert len(series.per_n) == N_MAX
    assert series.per_n[0].n == 1


def test_bernoulli_series_per_n_matches_lambda() -> None:
    """Verify the listed per-n probabilities are the exact binomial tails."""
    series = bernoulli_series(0.1, N_MAX)
    for n in (1, 10, 57):
        assert series.per_n[n - 1].plus == pytest.approx(bernoulli_lambda(n, 0.1).plus)


@pytest.mark.parametrize("series", [bernoulli_series, gaussian_series])
def test_series_reject_non_positive_eps(series: Callable[[float, int], object]) -> None:
    """Verify eps must be positive."""
    with pytest.raises(DomainError):
        series(0.0, N_MAX)


def test_bernoulli_ks_is_half_the_central_atom() -> None:
    """Verify the Kolmogorov distance is about 1 / sqrt(2 pi n)."""
    for n in (100, 400):
        assert bernoulli_ks(n).delta_n == pytest.approx(1.0 / math.sqrt(2.0 * math.pi * n), rel=0.05)
    assert bernoulli_ks(400).delta_n < bernoulli_ks(100).delta_n


def test_gaussian_ks_is_zero() -> None:
    """Verify the Gaussian walk is exactly normal."""
    assert gaussian_ks(50).delta_n == 0.0
