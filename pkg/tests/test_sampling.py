import math
from fractions import Fraction

import numpy as np
import pytest

from src.continued_fractions import cf_digits, convergents
from src.exceptions import ConfigError, PreconditionError
from src.interval_maps import BinaryMap, GaussMap, birkhoff_sum, build_observable, orbit_log_derivative
from src.models import ExperimentConfig, FiniteMapDefinition
from src.sampling import (
    DEVIATION_STREAM,
    MEAN_STREAM,
    BernoulliIidSource,
    BinaryExactSource,
    ExtendedPrecisionSource,
    GaussExactSource,
    GaussianIidSource,
    binary_bits,
    build_source,
    dyadic_numerator,
    gauss_bits,
    is_iid,
    keyed_words,
    replace_length,
    resolve_center,
    uniform_points,
)

SEED = 12345
N = 24
SMALL = {"n_max": N, "n_cal": (12, N), "ks_n": (N,), "samples": 1000, "seed": SEED}
BENT = FiniteMapDefinition(name="bent", endpoints=(0.0, 0.5, 1.0), kinds=("affine", "mobius:0.5"))


def test_keyed_words_are_reproducible() -> None:
    """Verify words depend only on the key, stream and index."""
    first = keyed_words(SEED, DEVIATION_STREAM, 7, 4)
    assert first.dtype == np.uint64
    assert np.array_equal(first, keyed_words(SEED, DEVIATION_STREAM, 7, 4))


def test_keyed_words_differ_across_streams_and_indices() -> None:
    """Verify distinct streams and sample indices never share words."""
    base = keyed_words(SEED, DEVIATION_STREAM, 0, 4)
    assert not np.array_equal(base, keyed_words(SEED, MEAN_STREAM, 0, 4))
    assert not np.array_equal(base, keyed_words(SEED, DEVIATION_STREAM, 1, 4))
    assert not np.array_equal(base, keyed_words(SEED + 1, DEVIATION_STREAM, 0, 4))


@pytest.mark.parametrize("bits", [1, 53, 64, 65, 300])
def test_dyadic_numerator_fits_in_bits(bits: int) -> None:
    """Verify the numerator lies in [0, 2**bits)."""
    values = [dyadic_numerator(SEED, DEVIATION_STREAM, index, bits) for index in range(20)]
    assert all(0 <= value < 1 << bits for value in values)


def test_uniform_points_open_interval() -> None:
    """Verify keyed uniforms stay strictly inside (0, 1)."""
    points = uniform_points(SEED, DEVIATION_STREAM, 3, 10_000)
    assert np.all(points > 0)
    assert np.all(points < 1)
    assert abs(float(np.mean(points)) - 0.5) < 0.02


def test_bit_budgets() -> None:
    """Verify the seed precisions grow with the orbit length."""
    assert gauss_bits(100) > gauss_bits(10) > 128
    assert binary_bits(100) == 164


def test_gauss_source_log_derivative_telescopes() -> None:
    """Verify the remainder formula matches the exact orbit derivative."""
    source = build_source(ExperimentConfig(**SMALL))
    assert isinstance(source, GaussExactSource)
    numerator = dyadic_numerator(SEED, DEVIATION_STREAM, 0, source.bits)
    x = Fraction(numerator, 1 << source.bits)
    joint = source.joint(0)
    assert joint is not None
    sums, log_q = joint
    for k in (1, 5, N):
        assert sums[k - 1] == pytest.approx(orbit_log_derivative(GaussMap(), x, k), rel=1e-12)
    pairs = convergents(cf_digits(x, N), N)
    assert log_q[-1] == pytest.approx(math.log(pairs[-1].q), rel=1e-12)


def test_gauss_source_centers_partial_sums() -> None:
    """Verify cumulative subtracts k times the center."""
    source = build_source(ExperimentConfig(**SMALL))
    joint = source.joint(2)
    row = source.cumulative(2)
    assert joint is not None
    assert row is not None
    expected = joint[0] - source.center * np.arange(1, N + 1)
    assert np.allclose(row, expected)


def test_gauss_source_identity_observable() -> None:
    """Verify pointwise observables are evaluated at the exact orbit points."""
    config = ExperimentConfig(observable_id="identity", **SMALL)
    source = build_source(config)
    numerator = dyadic_numerator(SEED, DEVIATION_STREAM, 1, source.bits)
    x = Fraction(numerator, 1 << source.bits)
    f = build_observable("identity", GaussMap())
    row = source.cumulative(1)
    assert row is not None
    assert row[-1] + source.center * N == pytest.approx(birkhoff_sum(GaussMap(), f, x, N), rel=1e-12)


def test_binary_source_matches_exact_orbit() -> None:
    """Verify the half indicator reads the binary digits of the seed."""
    config = ExperimentConfig(map_id="binary", observable_id="half-indicator", **SMALL)
    source = build_source(config)
    assert isinstance(source, BinaryExactSource)
    assert source.sigma2 == 0.25
    numerator = dyadic_numerator(SEED, DEVIATION_STREAM, 0, source.bits)
    x = Fraction(numerator, 1 << source.bits)
    f = build_observable("half-indicator", BinaryMap())
    row = source.cumulative(0)
    assert row is not None
    assert row[-1] + 0.5 * N == pytest.approx(birkhoff_sum(BinaryMap(), f, x, N))


def test_chunks_are_partition_invariant() -> None:
    """Verify splitting the samples into chunks reproduces the same rows."""
    source = build_source(ExperimentConfig(map_id="binary", observable_id="identity", **SMALL))
    whole, terminated = source.chunk(0, 10)
    left, _ = source.chunk(0, 4)
    right, _ = source.chunk(4, 10)
    assert terminated == 0
    assert np.array_equal(whole, np.vstack([left, right]))


def test_extended_precision_source_for_finite_maps() -> None:
    """Verify generic maps iterate in extended precision and flag shadowing."""
    config = ExperimentConfig(map_id="finite:0,0.3,1", observable_id="identity", **SMALL)
    source = build_source(config)
    assert isinstance(source, ExtendedPrecisionSource)
    assert source.center == 0.5
    assert not source.shadowing
    rows, terminated = source.chunk(0, 8)
    assert rows.shape == (8 - terminated, N)
    single = source.cumulative(0)
    if single is not None:
        assert np.allclose(single, rows[0])


def test_extended_precision_shadowing_flag() -> None:
    """Verify long float orbits are flagged as shadowing orbits."""
    config = ExperimentConfig(map_id="finite:0,0.3,1", observable_id="identity", n_max=100, n_cal=(50,), ks_n=(50,))
    assert build_source(config).shadowing


def test_bernoulli_source_terms() -> None:
    """Verify fair bits are centered to +-1/2 and roughly balanced."""
    source = build_source(ExperimentConfig(map_id="iid:bernoulli", n_max=4096, n_cal=(100,), ks_n=(100,)))
    assert isinstance(source, BernoulliIidSource)
    terms = source.terms(0)
    assert set(np.unique(terms)) <= {-0.5, 0.5}
    assert abs(float(np.mean(terms))) < 0.05


def test_gaussian_source_terms() -> None:
    """Verify inverse-CDF draws look standard normal."""
    source = build_source(ExperimentConfig(map_id="iid:gaussian", n_max=10_000, n_cal=(100,), ks_n=(100,)))
    assert isinstance(source, GaussianIidSource)
    terms = source.terms(0)
    assert np.all(np.isfinite(terms))
    assert abs(float(np.mean(terms))) < 0.05
    assert abs(float(np.var(terms)) - 1.0) < 0.05


def test_build_source_length_override() -> None:
    """Verify a shorter length keeps the n_max seed precision."""
    config = ExperimentConfig(**SMALL)
    short = build_source(config, n=10)
    assert short.n == 10
    assert short.bits == build_source(config).bits


def test_build_source_rejects_unknown_iid() -> None:
    """Verify unknown i.i.d. sources are config errors."""
    with pytest.raises(ConfigError):
        build_source(ExperimentConfig(map_id="iid:cauchy", **SMALL))


def test_build_source_rejects_orbit_statistic_off_gauss() -> None:
    """Verify the denominator statistic needs the Gauss map."""
    with pytest.raises(ConfigError):
        build_source(ExperimentConfig(map_id="binary", observable_id="log-denominator", **SMALL))


def test_unknown_mean_needs_a_center() -> None:
    """Verify a Mobius map without a configured mean cannot be centered."""
    config = ExperimentConfig(map_id="bent", observable_id="identity", maps=(BENT,), **SMALL)
    with pytest.raises(PreconditionError):
        build_source(config)
    assert build_source(config, center=0.4).center == 0.4


def test_resolve_center_prefers_config_mean() -> None:
    """Verify an explicit mean overrides the reference mean."""
    config = ExperimentConfig(mean=1.5, **SMALL)
    assert resolve_center(config, build_observable("log-derivative", GaussMap())) == 1.5


def test_is_iid() -> None:
    """Verify the i.i.d. prefix is recognised."""
    assert is_iid(ExperimentConfig(map_id="iid:gaussian"))
    assert not is_iid(ExperimentConfig())


def test_replace_length() -> None:
    """Verify n_max only grows."""
    config = ExperimentConfig(**SMALL)
    assert replace_length(config, 10) is config
    assert replace_length(config, 100).n_max == 100
