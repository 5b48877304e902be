"""Exact i.i.d. oracles: fair-bit walks through binomial tails, Gaussian walks through Phi."""

from __future__ import annotations

import logging
import math

import numpy as np
from scipy import special, stats

from src.exceptions import CertificationError, DomainError
from src.gaussian import heyde_gaussian_sum, log_weighted_gaussian_report
from src.models import DeviationSeries, KSReport, LambdaEstimate

logger = logging.getLogger(__name__)

TAIL_RATIO = 1e-3
MAX_EXACT_TERMS = 10**7
BLOCK = 2**16
CEILING_SLACK = 1e-9
BERNOULLI_SIGMA2 = 0.25
GAUSSIAN_SIGMA2 = 1.0


def bernoulli_rate(eps: float) -> float:
    """Cramer rate of the mean of +-1/2 fair bits; +inf beyond 1/2."""
    if abs(eps) > 0.5:  # noqa: PLR2004
        return math.inf
    p = 0.5 + abs(eps)
    if p == 1.0:
        return math.log(2.0)
    return float(p * math.log(2.0 * p) + (1.0 - p) * math.log(2.0 * (1.0 - p)))


def gaussian_rate(eps: float, sigma2: float = GAUSSIAN_SIGMA2) -> float:
    """Rate eps^2 / (2 sigma^2) of a Gaussian walk."""
    return eps * eps / (2.0 * sigma2)


def ld_tail(rates: tuple[float, float], constant: float, n: np.ndarray) -> np.ndarray:
    """Sum over k > n of C exp(-I k), added over both deviation sides.

    Args:
        rates: I(eps) and I(-eps); +inf contributes nothing.
        constant: The LD constant C.
        n: Truncation indices.

    Returns:
        The tail bound for every index.

    """
    tail = np.zeros(n.shape, dtype=np.float64)
    for rate in rates:
        if math.isinf(rate):
            continue
        tail += constant * np.exp(-rate * n) / -math.expm1(-rate)
    return tail


def certified_truncation(partial: np.ndarray, tail: np.ndarray) -> int | None:
    """First N (1-based) whose tail bound falls below ``TAIL_RATIO`` of the partial sum."""
    accepted = np.flatnonzero((tail < TAIL_RATIO * partial) | (tail == 0))
    return int(accepted[0]) + 1 if accepted.size else None


def _bernoulli_tail_probability(n: np.ndarray, eps: float) -> np.ndarray:
    # S_n / n >= eps  <=>  Binomial(n, 1/2) >= n (1/2 + eps)
    k = np.ceil(n * (0.5 + eps) - CEILING_SLACK)
    return stats.binom.sf(k - 1, n, 0.5)


def bernoulli_lambda(n: int, eps: float) -> LambdaEstimate:
    """Exact deviation probabilities of the fair-bit walk.

    Args:
        n: Walk length.
        eps: Deviation level.

    Returns:
        Equal upper and lower probabilities, by symmetry.

    """
    value = float(_bernoulli_tail_probability(np.array([n], dtype=np.float64), eps)[0])
    return LambdaEstimate(n=n, eps=eps, plus=value, minus=value)


def gaussian_lambda(n: int, eps: float) -> LambdaEstimate:
    """Exact deviation probabilities Phi(-eps sqrt(n)) of the Gaussian walk."""
    value = float(special.ndtr(-eps * math.sqrt(n)))
    return LambdaEstimate(n=n, eps=eps, plus=value, minus=value)


def _check_eps(eps: float) -> None:
    if not eps > 0:
        msg = f"eps must be positive, got {eps}"
        raise DomainError(msg)


def bernoulli_series(eps: float, n_max: int) -> DeviationSeries:
    """Exact deviation series of the fair-bit walk, truncated by the Chernoff bound.

    Chernoff's inequality gives the LD bound with C = 1, so the truncation
    is rigorous.

    Args:
        eps: Deviation level.
        n_max: Number of per-n entries kept in the result.

    Returns:
        The series; entries are listed for n <= n_max only.

    Raises:
        CertificationError: If the tail is not certified within ``MAX_EXACT_TERMS`` terms.

    """
    _check_eps(eps)
    rate = bernoulli_rate(eps)
    blocks: list[np.ndarray] = []
    partial_end = weighted_end = 0.0
    for start in range(1, MAX_EXACT_TERMS + 1, BLOCK):
        n = np.arange(start, min(start + BLOCK, MAX_EXACT_TERMS + 1), dtype=np.float64)
        probability = _bernoulli_tail_probability(n, eps)
        blocks.append(probability)
        partial = partial_end + np.cumsum(2.0 * probability)
        weighted = weighted_end + np.cumsum(2.0 * probability / n)
        tail = ld_tail((rate, rate), 1.0, n)
        found = certified_truncation(partial, tail)
        if found is not None:
            logger.debug("fair-bit series at eps=%s truncated at n=%d", eps, start + found - 1)
            return _exact_series(
                eps,
                np.concatenate(blocks),
                truncation_n=start + found - 1,
                value=float(partial[found - 1]),
                weighted=float(weighted[found - 1]),
                tail=float(tail[found - 1]),
                rate=rate,
                n_max=n_max,
            )
        partial_end, weighted_end = float(partial[-1]), float(weighted[-1])
    msg = f"eps={eps}: the fair-bit series needs more than {MAX_EXACT_TERMS} terms for a certified tail"
    raise CertificationError(msg)


def gaussian_series(eps: float, n_max: int) -> DeviationSeries:
    """Exact deviation series of the standard Gaussian walk.

    Lambda_n(eps) = 2 Phi(-eps sqrt(n)), so the series is twice the Gaussian
    sum without its n = 0 term and the log-weighted series is 2 IV(eps).
    """
    _check_eps(eps)
    report = heyde_gaussian_sum(eps)
    weighted = log_weighted_gaussian_report(eps, 1.0).value if eps < 1 else math.nan
    shown = np.arange(1, min(n_max, report.truncation_n) + 1, dtype=np.float64)
    return _exact_series(
        eps,
        special.ndtr(-eps * np.sqrt(shown)),
        truncation_n=report.truncation_n,
        value=2.0 * (report.value - 0.5),
        weighted=2.0 * weighted,
        tail=2.0 * report.tail_bound,
        rate=gaussian_rate(eps),
        n_max=n_max,
    )


def gaussian_log_weighted(eps: float) -> float:
    """Exact log-weighted deviation series 2 IV(eps) of the Gaussian walk."""
    return 2.0 * log_weighted_gaussian_report(eps, 1.0).value


def _exact_series(
    eps: float,
    probabilities: np.ndarray,
    *,
    truncation_n: int,
    value: float,
    weighted: float,
    tail: float,
    rate: float,
    n_max: int,
) -> DeviationSeries:
    shown = probabilities[: min(n_max, truncation_n)]
    per_n = tuple(
        LambdaEstimate(n=n, eps=eps, plus=float(p), minus=float(p)) for n, p in enumerate(shown, start=1)
    )
    return DeviationSeries(
        eps=eps,
        per_n=per_n,
        truncation_n=truncation_n,
        tail_remainder=tail,
        value=value,
        stderr=0.0,
        weighted_value=weighted,
        weighted_stderr=0.0,
        rate_plus=rate,
        rate_minus=rate,
        certified=True,
    )


def bernoulli_ks(n: int) -> KSReport:
    """Exact Kolmogorov distance between (2K - n) / sqrt(n), K ~ Binomial(n, 1/2), and Phi.

    Both the distribution function and its left limits are compared at
    every atom.
    """
    k = np.arange(n + 1)
    z = (2.0 * k - n) / math.sqrt(n)
    normal = special.ndtr(z)
    cdf = stats.binom.cdf(k, n, 0.5)
    left = cdf - stats.binom.pmf(k, n, 0.5)
    distance = float(max(np.max(np.abs(cdf - normal)), np.max(np.abs(left - normal))))
    return KSReport(n=n, delta_n=distance)


def gaussian_ks(n: int) -> KSReport:
    """The Gaussian walk is exactly normal at every n."""
    return KSReport(n=n, delta_n=0.0)
