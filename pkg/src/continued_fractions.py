"""Exact continued-fraction arithmetic: digits, convergents, approximation checks."""

from __future__ import annotations

import logging
import math
from fractions import Fraction
from typing import TYPE_CHECKING, TypeAlias

import msgspec
import numpy as np
from mpmath import iv
from mpmath.libmp import to_rational

from src.exceptions import ArityError, DomainError, IntegrityError, PrecisionError
from src.interval_maps import LEVY_CONSTANT, LN2
from src.models import (
    CFExpansion,
    ConvergentPair,
    DiophantineBatch,
    DiophantineEntry,
    DiophantineReport,
    IntegrityReport,
    LevyBatch,
)
from src.sampling import DIOPHANTINE_STREAM, LEVY_STREAM, dyadic_numerator
from src.utils import map_ordered

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

DEFAULT_PRECISION = 256
SEED_BITS = 256
LEVY_GUARD_BITS = 128
FULL_REEVALUATION_LIMIT = 64
BATCH_CHUNK = 64


class Enclosure(msgspec.Struct, frozen=True):
    """A real number known to lie in the closed rational interval [low, high]."""

    low: Fraction
    high: Fraction
    label: str = ""


RealSource: TypeAlias = Fraction | Enclosure

NAMED_CONSTANTS: dict[str, Callable[[], object]] = {
    "pi-3": lambda: iv.pi - 3,
    "e-2": lambda: iv.e - 2,
    "golden": lambda: (iv.sqrt(5) - 1) / 2,
    "sqrt2-1": lambda: iv.sqrt(2) - 1,
}


def enclose_constant(name: str, precision: int = DEFAULT_PRECISION) -> Enclosure:
    """Enclose a named constant with interval arithmetic.

    Args:
        name: One of the keys of ``NAMED_CONSTANTS``.
        precision: Working precision in bits.

    Returns:
        A rational enclosure of the constant.

    Raises:
        DomainError: If the name is unknown.

    """
    try:
        builder = NAMED_CONSTANTS[name]
    except KeyError:
        msg = f"unknown constant '{name}'; known: {', '.join(sorted(NAMED_CONSTANTS))}"
        raise DomainError(msg) from None
    saved = iv.prec
    iv.prec = precision
    try:
        value = builder()
    finally:
        iv.prec = saved
    low, high = (Fraction(*to_rational(end)) for end in value._mpi_)
    return Enclosure(low=low, high=high, label=name)


def parse_real(text: str | float | Fraction, precision: int = DEFAULT_PRECISION) -> RealSource:
    """Parse ``p/q``, a decimal string, a float or a named constant.

    Floats are taken as the exact dyadic rationals they represent.

    Returns:
        An exact rational or an enclosure.

    Raises:
        DomainError: If the input cannot be parsed or is not in (0, 1).

    """
    if isinstance(text, str) and text.strip() in NAMED_CONSTANTS:
        return enclose_constant(text.strip(), precision)
    try:
        value = Fraction(text.strip()) if isinstance(text, str) else Fraction(text)
    except (ValueError, ZeroDivisionError):
        msg = f"cannot parse '{text}' as a fraction, decimal or named constant"
        raise DomainError(msg) from None
    if not 0 < value < 1:
        msg = f"expected a number in (0, 1), got {value}"
        raise DomainError(msg)
    return value


def _source_label(x: RealSource) -> str:
    if isinstance(x, Enclosure):
        return x.label or f"[{x.low}, {x.high}]"
    return f"{x.numerator}/{x.denominator}"


def _exact_digits(x: Fraction, n: int) -> tuple[list[int], bool]:
    digits: list[int] = []
    numerator, denominator = x.numerator, x.denominator
    while len(digits) < n and numerator:
        digit, remainder = divmod(denominator, numerator)
        digits.append(digit)
        numerator, denominator = remainder, numerator
    return digits, numerator == 0


def _enclosure_digits(x: Enclosure, n: int) -> list[int]:
    digits: list[int] = []
    low, high = x.low, x.high
    while len(digits) < n:
        if low <= 0 or high >= 1:
            break
        digit = math.floor(1 / high)
        if math.floor(1 / low) != digit:
            break
        digits.append(digit)
        low, high = 1 / high - digit, 1 / low - digit
    if len(digits) < n:
        msg = f"only {len(digits)} of {n} digits of {_source_label(x)} are certified at this precision"
        raise PrecisionError(msg, certified=len(digits), digits=tuple(digits))
    return digits


def cf_digits(x: RealSource, n: int) -> CFExpansion:
    """Return the first n continued-fraction digits of x.

    Rationals are expanded exactly and may stop early; enclosures emit a
    digit only when the floor is the same at both ends of the interval.

    Args:
        x: An exact rational or an enclosure in (0, 1).
        n: Number of digits.

    Returns:
        The expansion.

    Raises:
        DomainError: If n is negative.
        PrecisionError: If fewer than n digits of an enclosure can be certified.

    """
    if n < 0:
        msg = f"digit count must be non-negative, got {n}"
        raise DomainError(msg)
    if isinstance(x, Enclosure):
        return CFExpansion(digits=tuple(_enclosure_digits(x, n)), source=_source_label(x), exact=False)
    digits, terminated = _exact_digits(x, n)
    return CFExpansion(digits=tuple(digits), source=_source_label(x), exact=True, terminated=terminated)


def convergents(expansion: CFExpansion | Sequence[int], n: int) -> list[ConvergentPair]:
    """Return the convergents p_1/q_1, ..., p_n/q_n.

    Args:
        expansion: Digits a_1, a_2, ...
        n: Number of convergents.

    Returns:
        The convergent pairs in index order.

    Raises:
        ArityError: If fewer than n digits are available.

    """
    digits = expansion.digits if isinstance(expansion, CFExpansion) else tuple(expansion)
    if n > len(digits):
        msg = f"{n} convergents need {n} digits, only {len(digits)} available"
        raise ArityError(msg)
    pairs: list[ConvergentPair] = []
    p_prev, q_prev, p, q = 1, 0, 0, 1
    for index, digit in enumerate(digits[:n], start=1):
        p_prev, q_prev, p, q = p, q, digit * p + p_prev, digit * q + q_prev
        pairs.append(ConvergentPair(p=p, q=q, index=index))
    return pairs


def fold_digits(digits: Sequence[int]) -> Fraction:
    """Evaluate [a_1, ..., a_n] bottom-up as an exact rational."""
    value = Fraction(0)
    for digit in reversed(digits):
        value = 1 / (digit + value)
    return value


def convergent_integrity(expansion: CFExpansion, pairs: Sequence[ConvergentPair]) -> IntegrityReport:
    """Run the exact integrity checks on a list of convergents.

    Checks coprimality, the determinant identity
    p_n q_(n-1) - p_(n-1) q_n = (-1)^(n-1), strict growth of q from index 2
    and re-evaluation of the folded digits.
    """
    coprime = all(math.gcd(pair.p, pair.q) == 1 for pair in pairs)
    determinant = True
    increasing = True
    p_prev, q_prev = 0, 1
    for pair in pairs:
        determinant &= pair.p * q_prev - p_prev * pair.q == (-1) ** (pair.index - 1)
        if pair.index >= 2:  # noqa: PLR2004
            increasing &= pair.q > q_prev
        p_prev, q_prev = pair.p, pair.q

    checked = pairs if len(pairs) <= FULL_REEVALUATION_LIMIT else pairs[-1:]
    reevaluation = all(
        fold_digits(expansion.digits[: pair.index]) == Fraction(pair.p, pair.q) for pair in checked
    )
    return IntegrityReport(
        count=len(pairs),
        coprime=coprime,
        determinant=determinant,
        increasing=increasing,
        reevaluation=reevaluation,
    )


def _distance_bounds(x: RealSource, target: Fraction) -> tuple[Fraction, Fraction]:
    if isinstance(x, Enclosure):
        low, high = x.low - target, x.high - target
        if low < 0 < high:
            return Fraction(0), max(-low, high)
        return min(abs(low), abs(high)), max(abs(low), abs(high))
    distance = abs(x - target)
    return distance, distance


def diophantine_check(x: RealSource, n: int) -> DiophantineReport:
    """Check 1/(2 q_(k+1)^2) <= |x - p_k/q_k| <= 1/q_k^2 for k = 1..n.

    For a rational that terminates at index m <= n, entry m has error zero;
    it is flagged terminal and only the upper inequality is checked there.

    Raises:
        PrecisionError: If an enclosure is too wide to decide an inequality.

    """
    expansion = cf_digits(x, n + 1)
    available = len(expansion.digits)
    pairs = convergents(expansion, available)
    entries: list[DiophantineEntry] = []
    terminal_index = None
    for pair in pairs[: min(n, available)]:
        approximation = Fraction(pair.p, pair.q)
        low, high = _distance_bounds(x, approximation)
        upper = Fraction(1, pair.q * pair.q)
        if pair.index == available and expansion.terminated:
            terminal_index = pair.index
            entries.append(
                DiophantineEntry(
                    index=pair.index, error=float(high), lower=None, upper=float(upper), passed=high <= upper,
                    terminal=True,
                ),
            )
            continue
        next_q = pairs[pair.index].q
        lower = Fraction(1, 2 * next_q * next_q)
        passed = lower <= low and high <= upper
        if not passed and isinstance(x, Enclosure) and (low < lower <= high or low <= upper < high):
            msg = f"enclosure of {_source_label(x)} is too wide to decide index {pair.index}"
            raise PrecisionError(msg, certified=pair.index - 1, digits=expansion.digits[: pair.index - 1])
        entries.append(
            DiophantineEntry(
                index=pair.index, error=float(high), lower=float(lower), upper=float(upper), passed=passed,
            ),
        )
    return DiophantineReport(entries=tuple(entries), terminal_index=terminal_index)


def levy_statistic(x: RealSource, n: int) -> float:
    """Return log q_n(x) / n.

    Raises:
        DomainError: If n < 1.
        ArityError: If the expansion of a rational has fewer than n digits.

    """
    if n < 1:
        msg = f"n must be at least 1, got {n}"
        raise DomainError(msg)
    expansion = cf_digits(x, n)
    return math.log(denominator_after(expansion.digits, n)) / n


def denominator_after(digits: Sequence[int], n: int) -> int:
    """q_n from the recurrence, without the numerators.

    Raises:
        ArityError: If fewer than n digits are available.

    """
    if n > len(digits):
        msg = f"q_{n} needs {n} digits, only {len(digits)} available"
        raise ArityError(msg)
    q_prev, q = 0, 1
    for digit in digits[:n]:
        q_prev, q = q, digit * q + q_prev
    return q


def levy_seed_bits(n: int) -> int:
    """Seed precision that leaves room for n digits with a wide margin."""
    return math.ceil(2.0 * LEVY_CONSTANT * n / LN2) + LEVY_GUARD_BITS


def _diophantine_chunk(task: tuple[int, int, int, int, int]) -> tuple[int, int, int, int]:
    seed, start, stop, n, bits = task
    checked = passed = integrity = terminated = 0
    for index in range(start, stop):
        numerator = dyadic_numerator(seed, DIOPHANTINE_STREAM, index, bits)
        if numerator == 0:
            continue
        x = Fraction(numerator, 1 << bits)
        checked += 1
        report = diophantine_check(x, n)
        passed += report.passed
        terminated += report.terminal_index is not None
        expansion = cf_digits(x, n + 1)
        integrity += convergent_integrity(expansion, convergents(expansion, len(expansion.digits))).passed
    return checked, passed, integrity, terminated


def _check_batch(count: int, n: int) -> None:
    if count < 1:
        msg = f"batch count must be at least 1, got {count}"
        raise DomainError(msg)
    if n < 1:
        msg = f"digit index must be at least 1, got {n}"
        raise DomainError(msg)


def diophantine_batch(seed: int, count: int, n: int, bits: int = SEED_BITS, workers: int = 1) -> DiophantineBatch:
    """Run the Diophantine and integrity checks on random dyadic seeds.

    Raises:
        DomainError: If count or n is not positive.
        IntegrityError: If an integrity check fails on any seed.

    """
    _check_batch(count, n)
    tasks = [(seed, start, min(start + BATCH_CHUNK, count), n, bits) for start in range(0, count, BATCH_CHUNK)]
    totals = [sum(column) for column in zip(*map_ordered(_diophantine_chunk, tasks, workers), strict=True)]
    checked, passed, integrity, terminated = totals or [0, 0, 0, 0]
    if integrity != checked:
        msg = f"convergent integrity failed on {checked - integrity} of {checked} seeds"
        raise IntegrityError(msg)
    return DiophantineBatch(
        count=checked, n=n, bits=bits, passed=passed, integrity_passed=integrity, terminated_early=terminated,
    )


def _levy_chunk(task: tuple[int, int, int, int, int]) -> list[float]:
    seed, start, stop, n, bits = task
    values: list[float] = []
    for index in range(start, stop):
        numerator = dyadic_numerator(seed, LEVY_STREAM, index, bits)
        digits, _ = _exact_digits(Fraction(numerator, 1 << bits), n) if numerator else ([], True)
        if len(digits) < n:
            msg = f"seed {index} ran out of digits before index {n}"
            raise PrecisionError(msg, certified=len(digits), digits=tuple(digits))
        values.append(math.log(denominator_after(digits, n)) / n)
    return values


def levy_batch(seed: int, count: int, n: int, workers: int = 1) -> LevyBatch:
    """Average log q_n / n over random dyadic seeds.

    Raises:
        DomainError: If count or n is not positive.

    """
    _check_batch(count, n)
    bits = levy_seed_bits(n)
    tasks = [(seed, start, min(start + BATCH_CHUNK, count), n, bits) for start in range(0, count, BATCH_CHUNK)]
    values = np.array([value for chunk in map_ordered(_levy_chunk, tasks, workers) for value in chunk])
    stderr = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
    return LevyBatch(count=count, n=n, bits=bits, mean=float(np.mean(values)), stderr=stderr, gamma=LEVY_CONSTANT)

