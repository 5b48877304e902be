import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.exceptions import ConfigError, DomainError, OrbitTerminatedError, PartialOrbitError, PreconditionError
from src.interval_maps import (
    GOLDEN,
    GOLDEN_LYAPUNOV,
    LEVY_CONSTANT,
    LN2,
    BinaryMap,
    FiniteMap,
    GaussMap,
    apply,
    birkhoff_sum,
    build_map,
    build_observable,
    log_derivative,
    orbit,
    orbit_log_derivative,
    verify_conditions,
)
from src.models import FiniteMapDefinition

PROBES = 16
PREIMAGE_BRANCHES = 10_000


def test_gauss_apply_is_exact_on_rationals() -> None:
    """Verify G(2/5) = 1/2 with exact arithmetic."""
    assert apply(GaussMap(), Fraction(2, 5)) == Fraction(1, 2)


@given(st.integers(min_value=2, max_value=10**6), st.integers(min_value=1, max_value=10**6))
def test_gauss_apply_matches_reciprocal_remainder(q: int, p: int) -> None:
    """Verify the exact image of p/q is q mod p over p."""
    p = p % q or 1
    x = Fraction(p, q)
    if x.denominator % x.numerator == 0:
        with pytest.raises(OrbitTerminatedError):
            GaussMap().apply(x)
    else:
        assert GaussMap().apply(x) == 1 / x - math.floor(1 / x)


@pytest.mark.parametrize("x", [Fraction(1, 2), Fraction(1, 3), 0.0, 1.0, 1.5])
def test_gauss_apply_terminates_at_endpoints(x: Fraction | float) -> None:
    """Verify 1/k and points outside (0, 1) end the orbit."""
    with pytest.raises(OrbitTerminatedError):
        GaussMap().apply(x)


def test_orbit_reports_partial_length() -> None:
    """Verify a terminating orbit reports how many points were valid."""
    with pytest.raises(PartialOrbitError) as info:
        orbit(GaussMap(), Fraction(2, 5), 5)
    assert info.value.length == 2


def test_orbit_rejects_negative_length() -> None:
    """Verify n < 0 is a domain error."""
    with pytest.raises(DomainError):
        orbit(BinaryMap(), 0.3, -1)


def test_orbit_log_derivative_is_log_denominator_squared() -> None:
    """Verify log|(G^2)'(2/5)| = log 25, twice the log of the second denominator."""
    assert orbit_log_derivative(GaussMap(), Fraction(2, 5), 2) == pytest.approx(math.log(25.0), rel=1e-14)


def test_orbit_log_derivative_at_golden_fixed_point() -> None:
    """Verify the golden mean expands at rate 2 log phi per step."""
    assert orbit_log_derivative(GaussMap(), GOLDEN, 10) == pytest.approx(10 * GOLDEN_LYAPUNOV, rel=1e-8)


def test_log_derivative_of_gauss() -> None:
    """Verify log|G'(1/2)| = 2 log 2, accepted at the branch endpoint."""
    assert log_derivative(GaussMap(), 0.5) == pytest.approx(2.0 * LN2)


def test_log_derivative_rejects_outside_points() -> None:
    """Verify points outside (0, 1) terminate."""
    with pytest.raises(OrbitTerminatedError):
        log_derivative(GaussMap(), 1.0)


def test_birkhoff_sum_of_log_derivative_on_rationals() -> None:
    """Verify the Birkhoff sum of log|G'| along 2/5 equals log 25."""
    f = build_observable("log-derivative", GaussMap())
    assert birkhoff_sum(GaussMap(), f, Fraction(2, 5), 2) == pytest.approx(math.log(25.0))


def from_digits(digits: list[int]) -> Fraction:
    """Rational [0; a1, ..., ak] from its continued fraction digits."""
    value = Fraction(0)
    for digit in reversed(digits):
        value = 1 / (digit + value)
    return value


@settings(max_examples=1000, deadline=None)
@given(
    st.lists(st.integers(min_value=1, max_value=50), min_size=48, max_size=48),
    st.integers(min_value=0, max_value=20),
    st.integers(min_value=0, max_value=20),
)
def test_birkhoff_sum_is_additive_along_orbits(digits: list[int], n: int, m: int) -> None:
    """Verify S_(n+m) f(x) = S_n f(x) + S_m f(T^n x) for log|G'| on exact rationals."""
    gauss = GaussMap()
    f = build_observable("log-derivative", gauss)
    x = from_digits(digits)
    shifted = orbit(gauss, x, n + 1)[-1]
    assert shifted == from_digits(digits[n:])
    whole = birkhoff_sum(gauss, f, x, n + m)
    split = birkhoff_sum(gauss, f, x, n) + birkhoff_sum(gauss, f, shifted, m)
    assert whole == pytest.approx(split, rel=1e-12, abs=1e-12)


def test_birkhoff_sum_of_zero_length_is_zero() -> None:
    """Verify n = 0 gives an empty sum."""
    f = build_observable("identity", BinaryMap())
    assert birkhoff_sum(BinaryMap(), f, 0.3, 0) == 0.0


def test_birkhoff_sum_rejects_orbit_statistics() -> None:
    """Verify the log-denominator statistic is refused pointwise."""
    f = build_observable("log-denominator", GaussMap())
    with pytest.raises(PreconditionError):
        birkhoff_sum(GaussMap(), f, 0.3, 3)


def test_binary_birkhoff_sum_of_half_indicator() -> None:
    """Verify the half indicator counts the zero binary digits along the orbit."""
    f = build_observable("half-indicator", BinaryMap())
    # 0.3 = 0.0100110011... in base 2
    assert birkhoff_sum(BinaryMap(), f, Fraction(3, 10), 6) == 3.0


@pytest.mark.parametrize(
    ("observable_id", "mean"),
    [
        ("zero", 0.0),
        ("constant:2.5", 2.5),
        ("log-derivative", math.pi**2 / (6.0 * LN2)),
        ("half-indicator", math.log(1.5) / LN2),
        ("identity", (1.0 - LN2) / LN2),
        ("log-denominator", LEVY_CONSTANT),
    ],
)
def test_gauss_observable_means(observable_id: str, mean: float) -> None:
    """Verify the reference means of the Gauss observables."""
    assert build_observable(observable_id, GaussMap()).mean == pytest.approx(mean)


def test_observable_rejects_unknown_ids() -> None:
    """Verify unknown or inapplicable observables are config errors."""
    with pytest.raises(ConfigError):
        build_observable("cosine", GaussMap())
    with pytest.raises(ConfigError):
        build_observable("constant:abc", GaussMap())
    with pytest.raises(ConfigError):
        build_observable("log-denominator", BinaryMap())


def test_identity_mean_unknown_for_mobius_map() -> None:
    """Verify non-affine finite maps have no known invariant density."""
    interval_map = FiniteMap("bent", (0.0, 0.5, 1.0), ("affine", "mobius:0.5"))
    assert build_observable("identity", interval_map).mean is None
    assert interval_map.lyapunov_exponent is None


def test_build_map_registry() -> None:
    """Verify the built-in ids and the finite shorthand."""
    assert isinstance(build_map("gauss"), GaussMap)
    assert isinstance(build_map("binary"), BinaryMap)
    finite = build_map("finite:0,0.25,1")
    assert finite.branch_count == 2
    assert finite.lyapunov_exponent == pytest.approx(-(0.25 * math.log(0.25) + 0.75 * math.log(0.75)))


def test_build_map_from_definitions() -> None:
    """Verify config-declared maps are found by name."""
    definition = FiniteMapDefinition(name="tent", endpoints=(0.0, 0.5, 1.0), kinds=("affine", "affine-reversed"))
    tent = build_map("tent", [definition])
    assert tent.apply(0.75) == pytest.approx(0.5)


@pytest.mark.parametrize("map_id", ["nope", "finite:0,x,1", "finite:0,1", "finite:0,0.6,0.4,1"])
def test_build_map_rejects_bad_ids(map_id: str) -> None:
    """Verify unknown and malformed ids are config errors."""
    with pytest.raises(ConfigError):
        build_map(map_id)


def test_finite_map_rejects_bad_mobius_parameter() -> None:
    """Verify Mobius parameters must exceed -1."""
    with pytest.raises(ConfigError):
        FiniteMap("bad", (0.0, 0.5, 1.0), ("affine", "mobius:-1"))


def test_gauss_invariant_mass_is_total() -> None:
    """Verify the Gauss measure is a probability measure."""
    assert GaussMap().invariant_mass(0.0, 1.0) == pytest.approx(1.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(min_value=0.05, max_value=0.95))
def test_gauss_measure_is_invariant(b: float) -> None:
    """Verify mu(G^-1 [0, b]) = mu([0, b]) up to the truncated branches."""
    gauss = GaussMap()
    preimage = sum(gauss.invariant_mass(1.0 / (k + b), 1.0 / k) for k in range(1, PREIMAGE_BRANCHES + 1))
    assert preimage == pytest.approx(gauss.invariant_mass(0.0, b), abs=1e-3)


def test_gauss_apply_array_flags_invalid_points() -> None:
    """Verify the vectorized map marks endpoints and outside points invalid."""
    images, valid = GaussMap().apply_array(np.array([0.3, 0.5, 1.2]))
    assert images[0] == pytest.approx(1 / 0.3 - 3)
    assert valid.tolist() == [True, False, False]


@pytest.mark.parametrize("interval_map", [GaussMap(), BinaryMap(), build_map("finite:0,0.3,1")])
def test_builtin_maps_pass_conditions(interval_map: GaussMap | BinaryMap | FiniteMap) -> None:
    """Verify the built-in maps satisfy the probed expanding Markov conditions."""
    report = verify_conditions(interval_map, PROBES)
    assert report.passed
    assert report.min_expansion >= report.expansion_constant * (1 - 1e-9)


def test_mobius_map_distortion_within_bound() -> None:
    """Verify a Mobius branch stays within its declared Renyi bound."""
    interval_map = FiniteMap("bent", (0.0, 0.5, 1.0), ("affine", "mobius:0.5"))
    report = verify_conditions(interval_map, PROBES)
    assert report.renyi_bound == pytest.approx(1.0)
    assert report.max_distortion <= 1.0 + 1e-9
    assert report.passed


def test_gauss_single_step_expansion_fails() -> None:
    """Verify G itself is not uniformly expanding by 4 while G^2 is."""
    report = verify_conditions(GaussMap(), PROBES, power=1)
    assert not report.expansion_ok


def test_verify_conditions_rejects_zero_probes() -> None:
    """Verify probe_count must be positive."""
    with pytest.raises(DomainError):
        verify_conditions(BinaryMap(), 0)
