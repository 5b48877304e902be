import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from src.continued_fractions import (
    Enclosure,
    cf_digits,
    convergent_integrity,
    convergents,
    denominator_after,
    diophantine_batch,
    diophantine_check,
    enclose_constant,
    fold_digits,
    levy_batch,
    levy_seed_bits,
    levy_statistic,
    parse_real,
)
from src.exceptions import ArityError, DomainError, PrecisionError
from src.interval_maps import LEVY_CONSTANT

PI_DIGITS = (7, 15, 1, 292, 1, 1, 1, 2, 1, 3)
E_DIGITS = (1, 2, 1, 1, 4, 1, 1, 6, 1, 1, 8)
PI_CONVERGENTS = ((1, 7), (15, 106), (16, 113), (4687, 33102))
LOW_PRECISION = 32
BATCH_SEED = 20240501

fractions_in_unit_interval = st.fractions(min_value=0, max_value=1, max_denominator=10**12).filter(
    lambda x: 0 < x < 1,
)


def test_rational_digits_terminate() -> None:
    """Verify 2/5 = [2, 2] and the expansion stops early."""
    expansion = cf_digits(Fraction(2, 5), 10)
    assert expansion.digits == (2, 2)
    assert expansion.exact
    assert expansion.terminated


def test_rational_digits_truncate() -> None:
    """Verify only n digits are returned when the expansion is longer."""
    expansion = cf_digits(Fraction(355, 1000), 2)
    assert expansion.digits == (2, 1)
    assert not expansion.terminated


@pytest.mark.parametrize(
    ("name", "expected"),
    [("pi-3", PI_DIGITS), ("e-2", E_DIGITS), ("golden", (1,) * 40), ("sqrt2-1", (2,) * 40)],
)
def test_named_constant_digits(name: str, expected: tuple[int, ...]) -> None:
    """Verify certified digits of the named constants."""
    expansion = cf_digits(parse_real(name), len(expected))
    assert expansion.digits == expected
    assert not expansion.exact


def test_enclosure_runs_out_of_precision() -> None:
    """Verify a narrow-precision enclosure certifies a prefix and then stops."""
    golden = enclose_constant("golden", LOW_PRECISION)
    with pytest.raises(PrecisionError) as info:
        cf_digits(golden, 100)
    assert 0 < info.value.certified < 100
    assert info.value.digits == (1,) * info.value.certified


def test_enclosure_straddling_a_digit_boundary() -> None:
    """Verify an interval around 1/2 cannot certify its first digit."""
    wide = Enclosure(low=Fraction(49, 100), high=Fraction(51, 100))
    with pytest.raises(PrecisionError) as info:
        cf_digits(wide, 1)
    assert info.value.certified == 0


def test_cf_digits_rejects_negative_count() -> None:
    """Verify n < 0 is a domain error."""
    with pytest.raises(DomainError):
        cf_digits(Fraction(1, 3), -1)


@pytest.mark.parametrize("text", ["1.5", "0", "abc", "1/0", "-1/3"])
def test_parse_real_rejects(text: str) -> None:
    """Verify unparsable input and numbers outside (0, 1) are rejected."""
    with pytest.raises(DomainError):
        parse_real(text)


def test_parse_real_forms() -> None:
    """Verify fractions, decimals and floats parse exactly."""
    assert parse_real("2/5") == Fraction(2, 5)
    assert parse_real("0.25") == Fraction(1, 4)
    assert parse_real(0.1) == Fraction(0.1)


def test_unknown_constant() -> None:
    """Verify unknown constant names are domain errors."""
    with pytest.raises(DomainError):
        enclose_constant("tau")


def test_pi_convergents() -> None:
    """Verify the classic convergents 1/7, 15/106, 16/113, 4687/33102."""
    pairs = convergents(PI_DIGITS, 4)
    assert tuple((pair.p, pair.q) for pair in pairs) == PI_CONVERGENTS
    assert [pair.index for pair in pairs] == [1, 2, 3, 4]


def test_convergents_need_enough_digits() -> None:
    """Verify asking for more convergents than digits is an arity error."""
    with pytest.raises(ArityError):
        convergents([1, 2], 3)


@given(fractions_in_unit_interval)
def test_full_expansion_folds_back(x: Fraction) -> None:
    """Verify the digits of a rational fold back to it and the last convergent equals it."""
    expansion = cf_digits(x, 200)
    assert expansion.terminated
    assert fold_digits(expansion.digits) == x
    last = convergents(expansion, len(expansion.digits))[-1]
    assert Fraction(last.p, last.q) == x


@given(fractions_in_unit_interval)
def test_integrity_holds_on_rationals(x: Fraction) -> None:
    """Verify coprimality, determinant, growth and re-evaluation on any rational."""
    expansion = cf_digits(x, 200)
    report = convergent_integrity(expansion, convergents(expansion, len(expansion.digits)))
    assert report.passed


def test_integrity_detects_tampering() -> None:
    """Verify a non-reduced convergent fails the integrity check."""
    expansion = cf_digits(Fraction(2, 5), 2)
    pairs = convergents(expansion, 2)
    tampered = [pairs[0], type(pairs[1])(p=4, q=10, index=2)]
    report = convergent_integrity(expansion, tampered)
    assert not report.coprime
    assert not report.passed


@given(fractions_in_unit_interval)
def test_diophantine_sandwich_on_rationals(x: Fraction) -> None:
    """Verify 1/(2 q_(k+1)^2) <= |x - p_k/q_k| <= 1/q_k^2 before termination."""
    report = diophantine_check(x, 30)
    assert report.passed


def test_diophantine_terminal_entry() -> None:
    """Verify the terminal index of 2/5 has zero error and no lower bound."""
    report = diophantine_check(Fraction(2, 5), 5)
    assert report.terminal_index == 2
    terminal = report.entries[-1]
    assert terminal.terminal
    assert terminal.error == 0.0
    assert terminal.lower is None
    assert report.entries[0].lower == pytest.approx(1 / 50)


def test_diophantine_on_golden_enclosure() -> None:
    """Verify the sandwich holds for the golden mean at full precision."""
    report = diophantine_check(parse_real("golden"), 30)
    assert report.passed
    assert report.terminal_index is None
    assert len(report.entries) == 30


def test_levy_statistic_of_rational() -> None:
    """Verify log q_2(2/5) / 2 = log 5 / 2."""
    assert levy_statistic(Fraction(2, 5), 2) == pytest.approx(math.log(5.0) / 2.0)


def test_levy_statistic_beyond_termination() -> None:
    """Verify asking beyond the last digit is an arity error."""
    with pytest.raises(ArityError):
        levy_statistic(Fraction(2, 5), 3)


def test_levy_statistic_rejects_zero() -> None:
    """Verify n must be positive."""
    with pytest.raises(DomainError):
        levy_statistic(Fraction(2, 5), 0)


def test_denominator_after_fibonacci() -> None:
    """Verify all-ones digits give Fibonacci denominators."""
    assert denominator_after([1] * 10, 10) == 89


def test_levy_seed_bits_grow_with_n() -> None:
    """Verify the seed precision covers the expected digit consumption."""
    assert levy_seed_bits(100) > 100 * 2 * LEVY_CONSTANT / math.log(2)


def test_diophantine_batch_passes() -> None:
    """Verify random dyadic seeds satisfy every check."""
    batch = diophantine_batch(BATCH_SEED, 50, 10, bits=64)
    assert 0 < batch.count <= 50
    assert batch.passed == batch.count
    assert batch.integrity_passed == batch.count


def test_levy_batch_near_levy_constant() -> None:
    """Verify the average of log q_n / n is close to pi^2 / (12 log 2)."""
    batch = levy_batch(BATCH_SEED, 200, 50)
    assert batch.gamma == LEVY_CONSTANT
    assert abs(batch.mean - LEVY_CONSTANT) < 0.1
    assert batch.stderr > 0


def test_levy_batch_is_reproducible() -> None:
    """Verify the same seed gives the same batch."""
    assert levy_batch(BATCH_SEED, 64, 20) == levy_batch(BATCH_SEED, 64, 20)


@pytest.mark.parametrize(("count", "n"), [(0, 10), (-1, 10), (5, 0)])
def test_batches_reject_empty_runs(count: int, n: int) -> None:
    """Verify batch runs need at least one seed and one digit."""
    with pytest.raises(DomainError):
        levy_batch(BATCH_SEED, count, n)
    with pytest.raises(DomainError):
        diophantine_batch(BATCH_SEED, count, n)
