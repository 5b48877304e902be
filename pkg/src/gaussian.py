"""Standard-normal analytics and certified Gaussian series."""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING

import numpy as np
from scipy import integrate, optimize, special

from src.exceptions import CertificationError, DomainError, PreconditionError
from src.models import GaussianSumReport

if TYPE_CHECKING:
    from collections.abc import Callable

logger = logging.getLogger(__name__)

SQRT_2PI = math.sqrt(2.0 * math.pi)
RELATIVE_TAIL_TOLERANCE = 1e-12
ABSOLUTE_TAIL_TOLERANCE = 1e-15
MAX_TERMS = 10**9
DIRECT_TERMS = 2**20
BLOCK = 2**20
DECAY_TOLERANCE = 1e-13
MAX_DECAY_DOUBLINGS = 60
MAX_UNIT_INTERVALS = 2**16
QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-12


def _require_finite(x: float) -> None:
    if not math.isfinite(x):
        msg = f"expected a finite argument, got {x}"
        raise DomainError(msg)


def _require_positive(label: str, value: float) -> None:
    if not (value > 0 and math.isfinite(value)):
        msg = f"{label} must be positive and finite, got {value}"
        raise DomainError(msg)


def phi_cdf(x: float) -> float:
    """Standard normal distribution function.

    Args:
        x: A finite real.

    Returns:
        Phi(x).

    Raises:
        DomainError: If x is not finite.

    """
    _require_finite(x)
    return float(special.ndtr(x))


def phi_density(x: float) -> float:
    """Standard normal density."""
    _require_finite(x)
    return math.exp(-0.5 * x * x) / SQRT_2PI


def mills_bounds(x: float) -> tuple[float, float]:
    """Two-sided bounds on the upper Gaussian tail Phi(-x).

    Args:
        x: A positive real.

    Returns:
        ``(lower, upper)`` with lower <= Phi(-x) <= upper.

    Raises:
        DomainError: If x is not positive.

    """
    _require_positive("x", x)
    density = phi_density(x)
    return x / (x * x + 1.0) * density, density / x


def _decay_horizon(f: Callable[[float], float], a: int) -> int:
    """First probe a + 2**j at which |f| falls below the decay tolerance."""
    for j in range(MAX_DECAY_DOUBLINGS):
        point = a + 2**j
        current = abs(f(float(point)))
        if not math.isfinite(current):
            break
        if current <= DECAY_TOLERANCE:
            return point
    msg = f"f does not decay to zero from a={a}; the infinite Euler-Maclaurin form does not apply"
    raise PreconditionError(msg)


def euler_maclaurin_sum(
    f: Callable[[float], float],
    f_prime: Callable[[float], float],
    a: int,
    b: float,
) -> float:
    """Sum f(a) + ... + f(b) through the first-order Euler-Maclaurin identity.

    The sum equals the integral of f over [a, b], plus the integral of f'
    against the sawtooth x - floor(x) - 1/2, plus (f(a) + f(b)) / 2. Both
    integrals are taken per unit interval so the quadrature never straddles
    a jump of the sawtooth. For ``b = math.inf`` the boundary term at b is
    zero and f must decay; the decay is probed before integrating.

    Args:
        f: A continuously differentiable function.
        f_prime: Its derivative.
        a: Integer lower end.
        b: Integer upper end, or ``math.inf``.

    Returns:
        The value of the sum.

    Raises:
        DomainError: If the ends are not integers in order.
        PreconditionError: If b is infinite and f does not decay, or the range
            needs more than ``MAX_UNIT_INTERVALS`` unit intervals.
        CertificationError: If the sawtooth term beyond the decay horizon,
            bounded by half the variation of f there, exceeds ``DECAY_TOLERANCE``.

    """
    infinite = math.isinf(b)
    if not infinite and (b != int(b) or b < a):
        msg = f"expected integer ends with a <= b, got a={a}, b={b}"
        raise DomainError(msg)

    end = _decay_horizon(f, a) if infinite else int(b)
    if end - a > MAX_UNIT_INTERVALS:
        msg = f"range [{a}, {end}] spans more than {MAX_UNIT_INTERVALS} unit intervals"
        raise PreconditionError(msg)
    integral = 0.0
    correction = 0.0
    for k in range(a, end):
        integral += integrate.quad(f, k, k + 1, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL)[0]
        correction += integrate.quad(
            lambda x, k=k: f_prime(x) * (x - k - 0.5), k, k + 1, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
        )[0]

    if infinite:
        integral += integrate.quad(f, float(end), math.inf, epsabs=QUAD_EPSABS, limit=200)[0]
        dropped = 0.5 * integrate.quad(lambda x: abs(f_prime(x)), float(end), math.inf, limit=200)[0]
        if dropped > DECAY_TOLERANCE:
            msg = f"sawtooth term beyond {end} is only bounded by {dropped:.3g}"
            raise CertificationError(msg)
        logger.debug("Euler-Maclaurin sawtooth term dropped beyond %d (bound %.3g)", end, dropped)

    boundary = 0.5 * f(float(a)) + (0.0 if infinite else 0.5 * f(float(end)))
    return integral + correction + boundary


def _phi_upper_tail_sum(rho: float, first: int, last: int) -> float:
    """Sum of Phi(-rho sqrt(n)) for first <= n <= last, blockwise."""
    total = 0.0
    for start in range(first, last + 1, BLOCK):
        n = np.arange(start, min(start + BLOCK, last + 1), dtype=np.float64)
        total += float(np.sum(special.ndtr(-rho * np.sqrt(n))))
    return total


def _remainder_bound(rho: float, n: int) -> float:
    """Certified bound on the sum of Phi(-rho sqrt(k)) over k > n.

    The summand decreases, so the remainder is at most the integral from n,
    and Mills' upper bound inside the integral gives phi(t) / (rho^2 t) with
    t = rho sqrt(n).
    """
    if n <= 0:
        return math.inf
    t = rho * math.sqrt(n)
    return phi_density(t) / (rho * rho * t)


def _cutoff_point(ratio: float) -> float:
    """The t at which phi(t) / t drops to the given ratio."""
    log_ratio = math.log(ratio)
    return optimize.brentq(lambda t: -0.5 * t * t - math.log(SQRT_2PI * t) - log_ratio, 0.5, 60.0)


def _truncation_index(rho: float, ratio: float) -> int:
    n = math.ceil((_cutoff_point(ratio) / rho) ** 2)
    if n > MAX_TERMS:
        msg = f"rho={rho} needs {n} terms, above the cap of {MAX_TERMS}"
        raise CertificationError(msg)
    return n


def heyde_gaussian_sum(rho: float) -> GaussianSumReport:
    """Sum Phi(-rho sqrt(n)) over n >= 0 with a certified remainder.

    The series is at least 1 / (2 rho^2), so truncating where the remainder
    bound falls below ``RELATIVE_TAIL_TOLERANCE / (2 rho^2)`` certifies the
    relative accuracy without knowing the value in advance.

    Args:
        rho: Positive scale.

    Returns:
        The report; ``scaled`` lies in [1/2, 1/2 + rho^2].

    """
    _require_positive("rho", rho)
    last = _truncation_index(rho, 0.5 * RELATIVE_TAIL_TOLERANCE)
    value = _phi_upper_tail_sum(rho, 0, last)
    return GaussianSumReport(
        rho=rho,
        value=value,
        scaled=rho * rho * value,
        truncation_n=last,
        tail_bound=_remainder_bound(rho, last),
    )


def tail_gaussian_sum(rho: float, K: float) -> float:  # noqa: N803
    """Return rho^2 times the sum of Phi(-rho sqrt(n)) over n >= K / rho^2.

    Args:
        rho: Positive scale.
        K: Positive cut, in units of rho^-2.

    Returns:
        The rescaled tail; zero when the cut lies beyond the truncation horizon.

    """
    return tail_gaussian_report(rho, K).scaled


def tail_gaussian_report(rho: float, K: float) -> GaussianSumReport:  # noqa: N803
    """Full report behind :func:`tail_gaussian_sum`."""
    _require_positive("rho", rho)
    _require_positive("K", K)
    first = max(0, math.ceil(K / (rho * rho) * (1.0 - 1e-12)))
    last = _truncation_index(rho, ABSOLUTE_TAIL_TOLERANCE)
    if first > last:
        bound = _remainder_bound(rho, first - 1) if first > 1 else math.inf
        return GaussianSumReport(rho=rho, value=0.0, scaled=0.0, truncation_n=last, tail_bound=bound, start=first)
    value = _phi_upper_tail_sum(rho, first, last)
    return GaussianSumReport(
        rho=rho,
        value=value,
        scaled=rho * rho * value,
        truncation_n=last,
        tail_bound=_remainder_bound(rho, last),
        start=first,
    )


def gaussian_tail_limit(K: float) -> float:  # noqa: N803
    """Limit of :func:`tail_gaussian_sum` as rho -> 0 for fixed K.

    Equals the integral of Phi(-sqrt(y)) over y >= K.
    """
    _require_positive("K", K)
    root = math.sqrt(K)
    return (1.0 - K) * phi_cdf(-root) + root * phi_density(root)


def _log_weighted_integral(rho: float, m: int) -> float:
    """Integral of Phi(-rho sqrt(x)) / x over x >= m, in the variable t = rho sqrt(x)."""
    t0 = rho * math.sqrt(m)
    return integrate.quad(lambda t: 2.0 * special.ndtr(-t) / t, t0, math.inf, limit=200)[0]


def log_weighted_gaussian_report(eps: float, sigma: float) -> GaussianSumReport:
    """Sum Phi(-eps sqrt(n) / sigma) / n over n >= 1.

    Up to ``DIRECT_TERMS`` terms are added directly; beyond that the tail is
    the first-order Euler-Maclaurin form whose sawtooth term is bounded by
    half of the first omitted summand.

    Args:
        eps: Deviation level in (0, 1).
        sigma: Positive standard deviation.

    Returns:
        The report; ``scaled`` holds the value divided by -log eps.

    Raises:
        DomainError: If eps is not in (0, 1) or sigma is not positive.

    """
    if not 0 < eps < 1:
        msg = f"eps must lie in (0, 1) so that -log(eps) > 0, got {eps}"
        raise DomainError(msg)
    _require_positive("sigma", sigma)
    rho = eps / sigma
    t_cut = _cutoff_point(0.5 * ABSOLUTE_TAIL_TOLERANCE)
    needed = math.ceil((t_cut / rho) ** 2)

    last = min(needed, DIRECT_TERMS)
    n = np.arange(1, last + 1, dtype=np.float64)
    value = float(np.sum(special.ndtr(-rho * np.sqrt(n)) / n))
    if last == needed:
        t = rho * math.sqrt(last)
        bound = 2.0 * phi_density(t) / (t * t)
    else:
        head = float(special.ndtr(-rho * math.sqrt(last))) / last
        value += _log_weighted_integral(rho, last) - 0.5 * head
        bound = 0.5 * head
    return GaussianSumReport(
        rho=rho,
        value=value,
        scaled=value / -math.log(eps),
        truncation_n=last,
        tail_bound=bound,
        start=1,
    )


def log_weighted_gaussian_sum(eps: float, sigma: float) -> float:
    """Return the log-weighted Gaussian series; see :func:`log_weighted_gaussian_report`."""
    return log_weighted_gaussian_report(eps, sigma).value
