"""Counter-keyed random seeds and orbit sources for the deviation estimators.

Every sample's random words depend only on (seed, stream, index), so any
partition of the samples over workers reproduces the same numbers.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING

import msgspec
import numpy as np
from scipy import special

from src.exceptions import ConfigError, PreconditionError
from src.interval_maps import LEVY_CONSTANT, LN2, BinaryMap, GaussMap, IntervalMap, build_map, build_observable

if TYPE_CHECKING:
    from src.interval_maps import Observable
    from src.models import ExperimentConfig

DEVIATION_STREAM = 0
DIOPHANTINE_STREAM = 1
LEVY_STREAM = 2
MEAN_STREAM = 3

WORD_BITS = 64
GUARD_BITS = 128
BINARY_GUARD_BITS = 64
MANTISSA_BITS = 53
SHADOWING_HORIZON = 40
IID_PREFIX = "iid:"


def keyed_words(seed: int, stream: int, index: int, count: int) -> np.ndarray:
    """Return ``count`` random 64-bit words for one sample.

    Args:
        seed: 64-bit experiment seed, used as the Philox key.
        stream: Purpose of the draw; distinct streams never share words.
        index: Sample index within the stream.
        count: Number of words.

    Returns:
        A uint64 array of length ``count``.

    """
    generator = np.random.Philox(key=seed, counter=(stream << 128) | (index << WORD_BITS))
    return generator.random_raw(count)


def dyadic_numerator(seed: int, stream: int, index: int, bits: int) -> int:
    """Numerator A of the keyed dyadic rational A / 2**bits in [0, 1)."""
    count = -(-bits // WORD_BITS)
    words = keyed_words(seed, stream, index, count)
    value = int.from_bytes(words.astype(">u8").tobytes(), "big")
    return value >> (count * WORD_BITS - bits)


def uniform_points(seed: int, stream: int, index: int, count: int) -> np.ndarray:
    """Keyed uniforms strictly inside (0, 1), one per word."""
    words = keyed_words(seed, stream, index, count)
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-MANTISSA_BITS


def gauss_bits(n: int) -> int:
    """Seed precision leaving room for n continued-fraction digits."""
    return math.ceil(2.0 * LEVY_CONSTANT * n / LN2) + GUARD_BITS


def binary_bits(n: int) -> int:
    """Seed precision for n doublings plus guard bits."""
    return n + BINARY_GUARD_BITS


class OrbitSource:
    """Produces centered partial sums S_1 - c, ..., S_n - n c for keyed samples.

    A sample whose orbit terminates before n points yields None.
    """

    name: str = ""
    sigma2: float | None = None
    iid: bool = False
    shadowing: bool = False

    def __init__(self, seed: int, stream: int, n: int, center: float) -> None:
        """Initialize the source.

        Args:
            seed: Experiment seed.
            stream: Random stream.
            n: Orbit length.
            center: Mean subtracted from every term.

        """
        self.seed = seed
        self.stream = stream
        self.n = n
        self.center = center
        self._steps = np.arange(1, n + 1, dtype=np.float64)

    def terms(self, index: int) -> np.ndarray | None:
        """Uncentered terms f(x), f(Tx), ... for one sample."""
        raise NotImplementedError

    def cumulative(self, index: int) -> np.ndarray | None:
        """Centered partial sums for one sample."""
        values = self.terms(index)
        if values is None:
            return None
        return np.cumsum(values) - self.center * self._steps

    def chunk(self, start: int, stop: int) -> tuple[np.ndarray, int]:
        """Partial sums for samples ``start`` to ``stop - 1``.

        Returns:
            The surviving rows (one per sample, in index order) and the
            number of terminated samples.

        """
        rows = []
        terminated = 0
        for index in range(start, stop):
            row = self.cumulative(index)
            if row is None:
                terminated += 1
            else:
                rows.append(row)
        matrix = np.vstack(rows) if rows else np.empty((0, self.n))
        return matrix, terminated


class GaussExactSource(OrbitSource):
    """Gauss-map orbits of dyadic rationals in exact integer arithmetic.

    With x = A / B the Euclidean remainders r_{-1} = B, r_0 = A,
    r_{k+1} = r_{k-1} mod r_k give G^k x = r_k / r_{k-1}, so the Birkhoff
    sum of log|G'| telescopes to 2 (log B - log r_{n-1}).
    """

    name = "gauss"

    def __init__(self, seed: int, stream: int, n: int, center: float, observable: Observable, bits: int) -> None:
        """Initialize the source for a Gauss-map observable."""
        super().__init__(seed, stream, n, center)
        self.observable = observable
        self.bits = bits

    def remainders(self, index: int) -> list[int] | None:
        """r_0, ..., r_{n-1}, or None if one of them vanishes."""
        numerator = dyadic_numerator(self.seed, self.stream, index, self.bits)
        previous, current = 1 << self.bits, numerator
        remainders = []
        for _ in range(self.n):
            if current == 0:
                return None
            remainders.append(current)
            previous, current = current, previous % current
        return remainders

    def log_derivative_sums(self, remainders: list[int]) -> np.ndarray:
        """log|(G^k)'x| for k = 1, ..., n."""
        logs = np.array([math.log(r) for r in remainders])
        return 2.0 * (self.bits * LN2 - logs)

    def log_denominators(self, remainders: list[int]) -> np.ndarray:
        """log q_k for k = 1, ..., n from the convergent recurrence."""
        previous_r = 1 << self.bits
        q_before, q = 0, 1
        logs = np.empty(self.n)
        for k, r in enumerate(remainders):
            digit = previous_r // r
            q_before, q = q, digit * q + q_before
            logs[k] = math.log(q)
            previous_r = r
        return logs

    def joint(self, index: int) -> tuple[np.ndarray, np.ndarray] | None:
        """Uncentered log|(G^k)'x| and log q_k for k = 1, ..., n."""
        remainders = self.remainders(index)
        if remainders is None:
            return None
        return self.log_derivative_sums(remainders), self.log_denominators(remainders)

    def cumulative(self, index: int) -> np.ndarray | None:
        """Centered partial sums; log q_k stands in for S_k of the denominator statistic."""
        remainders = self.remainders(index)
        if remainders is None:
            return None
        name = self.observable.name
        if name == "log-derivative":
            sums = self.log_derivative_sums(remainders)
        elif name == "log-denominator":
            sums = self.log_denominators(remainders)
        else:
            denominators = [1 << self.bits, *remainders[:-1]]
            points = np.array([r / d for r, d in zip(remainders, denominators, strict=True)])
            sums = np.cumsum(self.observable.eval(points))
        return sums - self.center * self._steps


class BinaryExactSource(OrbitSource):
    """Doubling-map orbits read off the binary digits of a dyadic seed."""

    name = "binary"

    def __init__(self, seed: int, stream: int, n: int, center: float, observable: Observable) -> None:
        """Initialize the source for a binary-map observable."""
        super().__init__(seed, stream, n, center)
        self.observable = observable
        self.bits = binary_bits(n)
        self._weights = 2.0 ** -np.arange(1, MANTISSA_BITS + 1)
        if observable.name == "half-indicator":
            self.sigma2 = 0.25

    def digits(self, index: int) -> np.ndarray:
        """Binary digits of the seed, most significant first."""
        numerator = dyadic_numerator(self.seed, self.stream, index, self.bits)
        length = -(-self.bits // 8)
        unpacked = np.unpackbits(np.frombuffer(numerator.to_bytes(length, "big"), dtype=np.uint8))
        return unpacked[8 * length - self.bits :]

    def terms(self, index: int) -> np.ndarray | None:
        """Observable along the orbit, each point rounded down to 53 bits."""
        digits = self.digits(index)
        if not digits[self.n - 1 :].any():
            return None
        if self.observable.name == "half-indicator":
            return 1.0 - digits[: self.n].astype(np.float64)
        windows = np.lib.stride_tricks.sliding_window_view(digits, MANTISSA_BITS)[: self.n]
        return np.asarray(self.observable.eval(windows @ self._weights), dtype=np.float64)


class ExtendedPrecisionSource(OrbitSource):
    """Orbits iterated in numpy extended precision, one chunk at a time."""

    def __init__(
        self, seed: int, stream: int, n: int, center: float, interval_map: IntervalMap, observable: Observable,
    ) -> None:
        """Initialize the source for a generic map."""
        super().__init__(seed, stream, n, center)
        self.interval_map = interval_map
        self.observable = observable
        self.name = interval_map.id
        self.shadowing = n > SHADOWING_HORIZON

    def _starts(self, start: int, stop: int) -> np.ndarray:
        points = np.empty(stop - start, dtype=np.longdouble)
        for offset, index in enumerate(range(start, stop)):
            high, low = keyed_words(self.seed, self.stream, index, 2) >> np.uint64(11)
            points[offset] = (np.longdouble(int(high)) + (np.longdouble(int(low)) + 0.5) * 2.0**-MANTISSA_BITS) * (
                2.0**-MANTISSA_BITS
            )
        return points

    def chunk(self, start: int, stop: int) -> tuple[np.ndarray, int]:
        """Iterate every sample of the chunk together."""
        points = self._starts(start, stop)
        values = np.empty((stop - start, self.n), dtype=np.float64)
        alive = (points > 0) & (points < 1)
        for k in range(self.n):
            values[:, k] = np.asarray(self.observable.eval(np.where(alive, points, 0.5)), dtype=np.float64)
            if k < self.n - 1:
                points, valid = self.interval_map.apply_array(np.where(alive, points, 0.5))
                alive &= valid
        sums = np.cumsum(values[alive], axis=1) - self.center * self._steps
        return sums, int(np.count_nonzero(~alive))

    def cumulative(self, index: int) -> np.ndarray | None:
        """Centered partial sums for one sample."""
        sums, terminated = self.chunk(index, index + 1)
        return None if terminated else sums[0]


class GaussianIidSource(OrbitSource):
    """Independent standard normal terms from inverse-CDF keyed uniforms."""

    name = "iid:gaussian"
    sigma2 = 1.0
    iid = True

    def terms(self, index: int) -> np.ndarray:
        """n standard normal draws."""
        return special.ndtri(uniform_points(self.seed, self.stream, index, self.n))


class BernoulliIidSource(OrbitSource):
    """Independent fair bits centered to +-1/2."""

    name = "iid:bernoulli"
    sigma2 = 0.25
    iid = True

    def terms(self, index: int) -> np.ndarray:
        """n fair bits minus 1/2."""
        words = keyed_words(self.seed, self.stream, index, -(-self.n // WORD_BITS))
        bits = np.unpackbits(words.astype(">u8").view(np.uint8))[: self.n]
        return bits.astype(np.float64) - 0.5


IID_SOURCES: dict[str, type[OrbitSource]] = {
    GaussianIidSource.name: GaussianIidSource,
    BernoulliIidSource.name: BernoulliIidSource,
}


def is_iid(config: ExperimentConfig) -> bool:
    """Whether the config names an i.i.d. baseline instead of a map."""
    return config.map_id.startswith(IID_PREFIX)


def resolve_center(config: ExperimentConfig, observable: Observable) -> float:
    """Centering constant: the config's mean, else the observable's reference mean.

    Raises:
        PreconditionError: If neither is known.

    """
    if config.mean is not None:
        return config.mean
    if observable.mean is not None:
        return observable.mean
    msg = (
        f"the mean of '{observable.name}' under the invariant measure of '{config.map_id}' is unknown; "
        "set experiment.mean or estimate it first"
    )
    raise PreconditionError(msg)


def build_source(
    config: ExperimentConfig,
    stream: int = DEVIATION_STREAM,
    *,
    center: float | None = None,
    n: int | None = None,
) -> OrbitSource:
    """Build the orbit source an experiment samples from.

    Args:
        config: The experiment configuration.
        stream: Random stream of the samples.
        center: Centering constant overriding the config and the observable.
        n: Orbit length, ``config.n_max`` by default.

    Returns:
        The source.

    Raises:
        ConfigError: If the map or observable id is unknown.
        PreconditionError: If no centering constant is available.

    """
    length = n or config.n_max
    if is_iid(config):
        try:
            source_type = IID_SOURCES[config.map_id]
        except KeyError:
            msg = f"unknown i.i.d. source '{config.map_id}'; known: {', '.join(sorted(IID_SOURCES))}"
            raise ConfigError(msg) from None
        return source_type(config.seed, stream, length, 0.0 if center is None else center)

    interval_map = build_map(config.map_id, config.maps)
    observable = build_observable(config.observable_id, interval_map)
    mean = center if center is not None else resolve_center(config, observable)
    if isinstance(interval_map, GaussMap):
        # seed precision follows n_max so every run of a config shares its orbits
        bits = gauss_bits(max(config.n_max, length))
        return GaussExactSource(config.seed, stream, length, mean, observable, bits)
    if not observable.pointwise:
        msg = f"observable '{observable.name}' is only available on the gauss map"
        raise ConfigError(msg)
    if isinstance(interval_map, BinaryMap):
        return BinaryExactSource(config.seed, stream, length, mean, observable)
    return ExtendedPrecisionSource(config.seed, stream, length, mean, interval_map, observable)


def replace_length(config: ExperimentConfig, n: int) -> ExperimentConfig:
    """Return the config with ``n_max`` raised to at least n."""
    if n <= config.n_max:
        return config
    return msgspec.structs.replace(config, n_max=n)
