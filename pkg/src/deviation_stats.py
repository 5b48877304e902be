"""Deviation probabilities, deviation series, variance and normality diagnostics."""

from __future__ import annotations

import functools
import logging
import math
from typing import TYPE_CHECKING

import msgspec
import numpy as np
from scipy import special, stats

from src.baselines import (
    BERNOULLI_SIGMA2,
    GAUSSIAN_SIGMA2,
    TAIL_RATIO,
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
from src.exceptions import (
    ArityError,
    CertificationError,
    ConfigError,
    DomainError,
    IntegrityError,
    PreconditionError,
)
from src.gaussian import log_weighted_gaussian_sum
from src.interval_maps import LEVY_CONSTANT, LN2
from src.models import (
    DeviationSeries,
    ExperimentConfig,
    FitModel,
    HeydeEstimate,
    HeydePoint,
    KSReport,
    LambdaEstimate,
    LevyCoupling,
    MeanEstimate,
    Method,
    PrefixCoupling,
    SolverConfig,
    SpataruEstimate,
    SpataruPoint,
    VarianceEstimate,
    VarianceMethod,
)
from src.sampling import DEVIATION_STREAM, MEAN_STREAM, GaussExactSource, build_source, is_iid, replace_length
from src.utils import map_ordered

if TYPE_CHECKING:
    from collections.abc import Callable, Sequence

logger = logging.getLogger(__name__)

CHUNK_SIZE = 256
TERMINATION_LIMIT = 1e-3
THRESHOLD_SLACK = 1e-9
SOKAL_WINDOW = 5.0
AGREEMENT_SIGMAS = 3.0
KS_CRITICAL = 1.36
SANDWICH_TOLERANCE = 1e-9
FIT_POINTS = 3
GAUSSIAN_LIMIT = 2.0


class RateHandle(msgspec.Struct, frozen=True):
    """A rate function I together with the constant C of the bound C exp(-I n)."""

    name: str
    evaluate: Callable[[float], float]
    constant: float = 1.0
    rigorous: bool = False

    def __call__(self, eps: float) -> float:
        """Return I(eps)."""
        return self.evaluate(eps)

    def rates(self, eps: float) -> tuple[float, float]:
        """Return I(eps) and I(-eps).

        Raises:
            CertificationError: If either rate is not positive.

        """
        rates = (self.evaluate(eps), self.evaluate(-eps))
        if any(not rate > 0 for rate in rates):
            msg = f"rate '{self.name}' is not positive at eps=+-{eps} ({rates[0]}, {rates[1]}); no tail certificate"
            raise CertificationError(msg)
        return rates


def _auto_rate(config: ExperimentConfig) -> str:
    map_id, observable_id = config.map_id, config.observable_id
    if map_id == "iid:bernoulli" or (map_id == "binary" and observable_id == "half-indicator"):
        return "bernoulli"
    if map_id == "iid:gaussian":
        return f"quadratic:{GAUSSIAN_SIGMA2}"
    if observable_id == "zero" or observable_id.startswith("constant:"):
        return "degenerate"
    if map_id == "gauss" and observable_id == "log-derivative":
        return "gauss"
    if map_id == "gauss" and observable_id == "log-denominator":
        return "gauss-levy"
    msg = f"no rate function is known for '{observable_id}' on '{map_id}'; set experiment.ld.rate"
    raise ConfigError(msg)


def resolve_rate(config: ExperimentConfig, solver: SolverConfig | None = None) -> RateHandle:
    """Turn the configured rate name into a callable handle.

    Args:
        config: The experiment configuration.
        solver: Solver parameters for the Gauss-map rate.

    Returns:
        The rate handle; ``rigorous`` tells whether C exp(-I n) is a proven bound.

    Raises:
        ConfigError: If the rate name is unknown or malformed.

    """
    name = config.ld.rate if config.ld.rate != "auto" else _auto_rate(config)
    constant = config.ld.constant
    if name == "degenerate":
        return RateHandle(name=name, evaluate=lambda _: math.inf, constant=constant, rigorous=True)
    if name == "bernoulli":
        return RateHandle(name=name, evaluate=bernoulli_rate, constant=constant, rigorous=constant >= 1)
    if name.startswith("quadratic:"):
        try:
            sigma2 = float(name.removeprefix("quadratic:"))
        except ValueError:
            msg = f"malformed quadratic rate '{name}'"
            raise ConfigError(msg) from None
        if not sigma2 > 0:
            msg = f"quadratic rate needs a positive variance, got {sigma2}"
            raise ConfigError(msg)
        # Phi(-x) <= exp(-x^2 / 2) / 2 for the standard Gaussian walk
        rigorous = config.map_id == "iid:gaussian" and sigma2 >= GAUSSIAN_SIGMA2 and constant >= 0.5  # noqa: PLR2004
        return RateHandle(
            name=name, evaluate=functools.partial(gaussian_rate, sigma2=sigma2), constant=constant, rigorous=rigorous,
        )
    if name in {"gauss", "gauss-levy"}:
        from src.thermo import rate_function

        settings = solver or SolverConfig()
        scale = 2.0 if name == "gauss-levy" else 1.0
        return RateHandle(name=name, evaluate=lambda eps: rate_function(scale * eps, settings), constant=constant)
    msg = f"unknown rate function '{name}'"
    raise ConfigError(msg)


def known_sigma2(config: ExperimentConfig) -> float | None:
    """Asymptotic variance of sources where it is known in closed form."""
    if config.map_id == "iid:gaussian":
        return GAUSSIAN_SIGMA2
    if config.map_id == "iid:bernoulli" or (config.map_id == "binary" and config.observable_id == "half-indicator"):
        return BERNOULLI_SIGMA2
    if config.observable_id == "zero" or config.observable_id.startswith("constant:"):
        return 0.0
    return None


def _require_exact_source(config: ExperimentConfig) -> None:
    if config.method is Method.EXACT and not is_iid(config):
        msg = f"method 'exact' is only available for i.i.d. sources, not for '{config.map_id}'"
        raise ConfigError(msg)


# Sampling


class ChunkTask(msgspec.Struct, frozen=True):
    """One fixed block of samples, self-contained so it can run in a worker process."""

    config: ExperimentConfig
    start: int
    stop: int
    n: int
    eps: tuple[float, ...] = ()
    probes: tuple[int, ...] = ()
    acov_horizon: int = 0
    max_lag: int = 0
    stream: int = DEVIATION_STREAM
    center: float | None = None


class SampleAggregate(msgspec.Struct):
    """Sufficient statistics of a block of samples.

    Hit counts and their squared partial sums are integers, so merging
    blocks is exact; merges always happen in block order.
    """

    samples: int
    terminated: int
    eps: tuple[float, ...]
    probe_n: tuple[int, ...]
    acov_horizon: int
    plus: np.ndarray
    minus: np.ndarray
    count_squares: np.ndarray
    weighted_squares: np.ndarray
    probes: np.ndarray
    lag_sums: np.ndarray
    lag_counts: np.ndarray

    @property
    def n(self) -> int:
        """Orbit length."""
        return self.plus.shape[1]

    def merge(self, other: SampleAggregate) -> SampleAggregate:
        """Combine with the aggregate of the next block."""
        return SampleAggregate(
            samples=self.samples + other.samples,
            terminated=self.terminated + other.terminated,
            eps=self.eps,
            probe_n=self.probe_n,
            acov_horizon=self.acov_horizon,
            plus=self.plus + other.plus,
            minus=self.minus + other.minus,
            count_squares=self.count_squares + other.count_squares,
            weighted_squares=self.weighted_squares + other.weighted_squares,
            probes=np.vstack([self.probes, other.probes]),
            lag_sums=self.lag_sums + other.lag_sums,
            lag_counts=self.lag_counts + other.lag_counts,
        )

    def probe(self, n: int) -> np.ndarray:
        """S_n / sqrt(n) for every surviving sample.

        Raises:
            ArityError: If n was not probed.

        """
        try:
            column = self.probe_n.index(n)
        except ValueError:
            msg = f"n={n} was not probed; probed: {list(self.probe_n)}"
            raise ArityError(msg) from None
        return self.probes[:, column]


def aggregate_sums(sums: np.ndarray, terminated: int, task: ChunkTask) -> SampleAggregate:
    """Reduce a block of centered partial sums to its sufficient statistics.

    Args:
        sums: One row of S_1, ..., S_n per surviving sample.
        terminated: Samples of the block whose orbit terminated.
        task: The block description.

    Returns:
        The block's aggregate.

    """
    rows, n = sums.shape
    steps = np.arange(1, n + 1, dtype=np.float64)
    count = len(task.eps)
    plus = np.zeros((count, n), dtype=np.int64)
    minus = np.zeros((count, n), dtype=np.int64)
    count_squares = np.zeros((count, n), dtype=np.int64)
    weighted_squares = np.zeros((count, n), dtype=np.float64)
    for e, eps in enumerate(task.eps):
        above = sums >= steps * (eps - THRESHOLD_SLACK)
        below = sums <= -steps * (eps - THRESHOLD_SLACK)
        plus[e] = above.sum(axis=0)
        minus[e] = below.sum(axis=0)
        hits = above.astype(np.int64) + below.astype(np.int64)
        cumulative = np.cumsum(hits, axis=1)
        count_squares[e] = (cumulative * cumulative).sum(axis=0)
        weighted = np.cumsum(hits / steps, axis=1)
        weighted_squares[e] = (weighted * weighted).sum(axis=0)

    probes = np.empty((rows, len(task.probes)), dtype=np.float64)
    for column, m in enumerate(task.probes):
        probes[:, column] = sums[:, m - 1] / math.sqrt(m)

    lag_sums = np.zeros(task.max_lag + 1, dtype=np.float64)
    lag_counts = np.zeros(task.max_lag + 1, dtype=np.int64)
    if task.acov_horizon:
        horizon = task.acov_horizon
        increments = np.diff(sums[:, :horizon], axis=1, prepend=0.0)
        for lag in range(min(task.max_lag, horizon - 1) + 1):
            lag_sums[lag] = float(np.sum(increments[:, : horizon - lag] * increments[:, lag:]))
            lag_counts[lag] = rows * (horizon - lag)

    return SampleAggregate(
        samples=rows,
        terminated=terminated,
        eps=task.eps,
        probe_n=task.probes,
        acov_horizon=task.acov_horizon,
        plus=plus,
        minus=minus,
        count_squares=count_squares,
        weighted_squares=weighted_squares,
        probes=probes,
        lag_sums=lag_sums,
        lag_counts=lag_counts,
    )


def _sample_chunk(task: ChunkTask) -> SampleAggregate:
    source = build_source(task.config, task.stream, center=task.center, n=task.n)
    sums, terminated = source.chunk(task.start, task.stop)
    return aggregate_sums(sums, terminated, task)


def run_samples(
    config: ExperimentConfig,
    *,
    eps: Sequence[float] = (),
    n: int | None = None,
    probes: Sequence[int] = (),
    acov_horizon: int = 0,
    max_lag: int = 0,
    stream: int = DEVIATION_STREAM,
    center: float | None = None,
    workers: int = 1,
) -> SampleAggregate:
    """Sample ``config.samples`` orbits once and aggregate every requested statistic.

    Args:
        config: The experiment configuration.
        eps: Deviation levels sharing the same samples.
        n: Orbit length, ``config.n_max`` by default.
        probes: Indices m at which S_m / sqrt(m) is kept per sample.
        acov_horizon: Number of leading steps used for autocovariances, 0 to skip.
        max_lag: Largest autocovariance lag.
        stream: Random stream.
        center: Centering constant overriding the config.
        workers: Worker processes.

    Returns:
        The aggregate over all samples.

    Raises:
        IntegrityError: If more than 0.1% of the orbits terminate.

    """
    length = n or config.n_max
    source = build_source(config, stream, center=center, n=length)
    if source.shadowing:
        logger.warning("%s: orbits of length %d in extended precision only shadow true orbits", source.name, length)
    logger.info("Sampling %d orbits of length %d from %s", config.samples, length, source.name)
    tasks = [
        ChunkTask(
            config=config,
            start=start,
            stop=min(start + CHUNK_SIZE, config.samples),
            n=length,
            eps=tuple(eps),
            probes=tuple(probes),
            acov_horizon=acov_horizon,
            max_lag=max_lag,
            stream=stream,
            center=center,
        )
        for start in range(0, config.samples, CHUNK_SIZE)
    ]
    aggregate = functools.reduce(SampleAggregate.merge, map_ordered(_sample_chunk, tasks, workers))
    total = aggregate.samples + aggregate.terminated
    if aggregate.terminated > TERMINATION_LIMIT * total or aggregate.samples < 2:  # noqa: PLR2004
        msg = f"{aggregate.terminated} of {total} orbits terminated early, above the {TERMINATION_LIMIT:.1%} limit"
        raise IntegrityError(msg)
    if aggregate.terminated:
        logger.debug("%d orbits terminated and were dropped", aggregate.terminated)
    return aggregate


def run_deviation(config: ExperimentConfig, *, workers: int = 1) -> SampleAggregate:
    """One sampling pass serving the series, variance and KS estimates of a config."""
    horizon = max(config.n_cal)
    return run_samples(
        config,
        eps=config.eps_grid,
        probes=sorted(set(config.n_cal) | set(config.ks_n)),
        acov_horizon=horizon,
        max_lag=min(config.max_lag, horizon - 1),
        workers=workers,
    )


# Deviation probabilities and series


def _check_level(n: int, eps: float) -> None:
    if n < 1:
        msg = f"n must be at least 1, got {n}"
        raise DomainError(msg)
    if not eps > 0:
        msg = f"eps must be positive, got {eps}"
        raise DomainError(msg)


def lambda_estimate(aggregate: SampleAggregate, index: int, n: int) -> LambdaEstimate:
    """Deviation probabilities at (n, eps) with binomial standard errors."""
    samples = aggregate.samples
    plus = float(aggregate.plus[index, n - 1]) / samples
    minus = float(aggregate.minus[index, n - 1]) / samples
    return LambdaEstimate(
        n=n,
        eps=aggregate.eps[index],
        plus=plus,
        minus=minus,
        stderr_plus=math.sqrt(plus * (1.0 - plus) / samples),
        stderr_minus=math.sqrt(minus * (1.0 - minus) / samples),
        samples=samples,
    )


def exact_lambda(config: ExperimentConfig, n: int, eps: float) -> LambdaEstimate:
    """Deviation probabilities of an i.i.d. source from its exact oracle."""
    oracle = bernoulli_lambda if config.map_id == "iid:bernoulli" else gaussian_lambda
    return oracle(n, eps)


def estimate_lambda_n(config: ExperimentConfig, n: int, eps: float, *, workers: int = 1) -> LambdaEstimate:
    """Estimate the measure of {S_n / n >= eps} and {S_n / n <= -eps}.

    Args:
        config: The experiment configuration.
        n: Orbit length.
        eps: Deviation level.
        workers: Worker processes.

    Returns:
        Both probabilities with binomial standard errors.

    Raises:
        DomainError: If n < 1 or eps <= 0.
        IntegrityError: If too many orbits terminate.

    """
    _check_level(n, eps)
    _require_exact_source(config)
    if config.method is Method.EXACT:
        return exact_lambda(config, n, eps)
    aggregate = run_samples(replace_length(config, n), eps=(eps,), n=n, workers=workers)
    return lambda_estimate(aggregate, 0, n)


def series_from_aggregate(aggregate: SampleAggregate, index: int, rate: RateHandle) -> DeviationSeries:
    """Truncate the deviation series at one eps where the LD tail is certified.

    Args:
        aggregate: Samples covering the eps.
        index: Position of the eps in ``aggregate.eps``.
        rate: The LD rate handle.

    Returns:
        The series with per-sample standard errors.

    Raises:
        CertificationError: If the rate is not positive or the tail bound
            never drops below ``TAIL_RATIO`` of the partial sum within n_max.

    """
    eps = aggregate.eps[index]
    rates = rate.rates(eps)
    samples = aggregate.samples
    steps = np.arange(1, aggregate.n + 1, dtype=np.float64)
    counts = aggregate.plus[index] + aggregate.minus[index]
    cumulative = np.cumsum(counts)
    partial = cumulative / samples
    tail = ld_tail(rates, rate.constant, steps)
    truncation = certified_truncation(partial, tail)
    if truncation is None:
        msg = (
            f"eps={eps}: the LD tail bound stays above {TAIL_RATIO} of the partial sum up to "
            f"n_max={aggregate.n}; raise n_max"
        )
        raise CertificationError(msg)

    last = truncation - 1
    mean = cumulative[last] / samples
    variance = (float(aggregate.count_squares[index, last]) - samples * mean * mean) / (samples - 1)
    weighted_mean = float(np.cumsum(counts / steps)[last]) / samples
    weighted_variance = (float(aggregate.weighted_squares[index, last]) - samples * weighted_mean**2) / (samples - 1)
    if not rate.rigorous:
        logger.warning("eps=%s: tail bound uses C=%s, which is not proven for rate '%s'", eps, rate.constant, rate.name)
    return DeviationSeries(
        eps=eps,
        per_n=tuple(lambda_estimate(aggregate, index, n) for n in range(1, truncation + 1)),
        truncation_n=truncation,
        tail_remainder=float(tail[last]),
        value=float(partial[last]),
        stderr=math.sqrt(max(variance, 0.0) / samples),
        weighted_value=weighted_mean,
        weighted_stderr=math.sqrt(max(weighted_variance, 0.0) / samples),
        rate_plus=rates[0],
        rate_minus=rates[1],
        certified=rate.rigorous,
    )


def exact_series(config: ExperimentConfig, eps: float) -> DeviationSeries:
    """Deviation series of an i.i.d. source from its exact oracle."""
    oracle = bernoulli_series if config.map_id == "iid:bernoulli" else gaussian_series
    return oracle(eps, config.n_max)


def lambda_series(
    config: ExperimentConfig,
    eps: float,
    *,
    rate: RateHandle | None = None,
    solver: SolverConfig | None = None,
    workers: int = 1,
) -> DeviationSeries:
    """Sum the deviation probabilities over n up to a certified truncation.

    Args:
        config: The experiment configuration.
        eps: Deviation level in (0, delta).
        rate: Rate handle, resolved from the config when omitted.
        solver: Solver parameters for the Gauss-map rate.
        workers: Worker processes.

    Returns:
        The series.

    Raises:
        DomainError: If eps is outside (0, delta).
        CertificationError: If the tail cannot be certified.

    """
    if not 0 < eps < config.ld.delta:
        msg = f"eps must lie in (0, {config.ld.delta}), got {eps}"
        raise DomainError(msg)
    _require_exact_source(config)
    if config.method is Method.EXACT:
        return exact_series(config, eps)
    handle = rate or resolve_rate(config, solver)
    handle.rates(eps)
    aggregate = run_samples(config, eps=(eps,), workers=workers)
    return series_from_aggregate(aggregate, 0, handle)


def lambda_series_grid(
    config: ExperimentConfig,
    *,
    rate: RateHandle | None = None,
    solver: SolverConfig | None = None,
    aggregate: SampleAggregate | None = None,
    workers: int = 1,
) -> tuple[DeviationSeries, ...]:
    """Deviation series for every eps of the grid from one set of samples."""
    _require_exact_source(config)
    if config.method is Method.EXACT:
        return tuple(exact_series(config, eps) for eps in config.eps_grid)
    handle = rate or resolve_rate(config, solver)
    for eps in config.eps_grid:
        handle.rates(eps)
    shared = aggregate or run_samples(config, eps=config.eps_grid, workers=workers)
    return tuple(series_from_aggregate(shared, index, handle) for index in range(len(config.eps_grid)))


def _check_grid(values: Sequence[float]) -> None:
    if any(b >= a for a, b in zip(values, values[1:], strict=False)):
        msg = f"eps values must be strictly decreasing, got {list(values)}"
        raise ConfigError(msg)


def extrapolate(points: Sequence[HeydePoint], fit: FitModel) -> tuple[float, float]:
    """Fit a + b x over the smallest eps, with x = eps or eps^2, and return a with its stderr."""
    chosen = list(points[-FIT_POINTS:])
    if len(chosen) == 1:
        return chosen[0].scaled, chosen[0].stderr
    eps = np.array([point.eps for point in chosen])
    x = eps if fit is FitModel.LINEAR else eps * eps
    design = np.column_stack([np.ones_like(x), x])
    solve = np.linalg.pinv(design)
    values = np.array([point.scaled for point in chosen])
    errors = np.array([point.stderr for point in chosen])
    limit = float(solve[0] @ values)
    return limit, float(math.sqrt(np.sum(solve[0] ** 2 * errors**2)))


def heyde_limit_estimate(
    config: ExperimentConfig,
    *,
    series: Sequence[DeviationSeries] | None = None,
    rate: RateHandle | None = None,
    solver: SolverConfig | None = None,
    workers: int = 1,
) -> HeydeEstimate:
    """Scale the series by eps^2 and extrapolate to eps -> 0.

    Args:
        config: The experiment configuration.
        series: Precomputed series over the grid.
        rate: Rate handle for the tail certificates.
        solver: Solver parameters for the Gauss-map rate.
        workers: Worker processes.

    Returns:
        The scaled points, the fitted limit and the raw value at the smallest eps.

    Raises:
        ConfigError: If the eps values are not strictly decreasing.

    """
    _check_grid(config.eps_grid)
    chosen = series or lambda_series_grid(config, rate=rate, solver=solver, workers=workers)
    _check_grid([item.eps for item in chosen])
    points = tuple(
        HeydePoint(eps=item.eps, scaled=item.eps**2 * item.value, stderr=item.eps**2 * item.stderr) for item in chosen
    )
    limit, limit_stderr = extrapolate(points, config.fit)
    return HeydeEstimate(
        points=points,
        fit=config.fit,
        limit=limit,
        limit_stderr=limit_stderr,
        smallest_eps_value=points[-1].scaled,
    )


def spataru_limit_estimate(
    config: ExperimentConfig,
    *,
    series: Sequence[DeviationSeries] | None = None,
    sigma2: float | None = None,
    rate: RateHandle | None = None,
    solver: SolverConfig | None = None,
    workers: int = 1,
) -> SpataruEstimate:
    """Normalize the log-weighted series by -log eps and bracket it.

    When the variance is known the reference value 2 IV(eps) / (-log eps)
    is reported with a bracket of half-width 4 sigma^3 / sqrt(2 pi) / (-log eps).

    Args:
        config: The experiment configuration.
        series: Precomputed series over the grid.
        sigma2: Variance used for the bracket, the closed-form one by default.
        rate: Rate handle for the tail certificates.
        solver: Solver parameters for the Gauss-map rate.
        workers: Worker processes.

    Returns:
        The normalized values and whether they approach 2 monotonically.

    Raises:
        ConfigError: If the eps values are not strictly decreasing.
        DomainError: If an eps is not below 1.

    """
    _check_grid(config.eps_grid)
    if config.eps_grid[0] >= 1:
        msg = f"the log-weighted series needs eps < 1, got {config.eps_grid[0]}"
        raise DomainError(msg)
    if config.method is Method.EXACT and config.map_id == "iid:gaussian":
        weighted = [(eps, gaussian_log_weighted(eps), 0.0) for eps in config.eps_grid]
    else:
        chosen = series or lambda_series_grid(config, rate=rate, solver=solver, workers=workers)
        weighted = [(item.eps, item.weighted_value, item.weighted_stderr) for item in chosen]

    variance = sigma2 if sigma2 is not None else known_sigma2(config)
    points = []
    for eps, value, stderr in weighted:
        scale = -math.log(eps)
        reference = low = high = None
        if variance is not None and variance > 0:
            sigma = math.sqrt(variance)
            reference = 2.0 * log_weighted_gaussian_sum(eps, sigma) / scale
            half_width = 4.0 * sigma**3 / math.sqrt(2.0 * math.pi) / scale
            low, high = reference - half_width, reference + half_width
        points.append(
            SpataruPoint(
                eps=eps,
                normalized=value / scale,
                stderr=stderr / scale,
                reference=reference,
                bracket_low=low,
                bracket_high=high,
            )
        )

    distances = [abs(point.normalized - GAUSSIAN_LIMIT) for point in points]
    monotone = all(
        later <= earlier + AGREEMENT_SIGMAS * (a.stderr + b.stderr)
        for earlier, later, a, b in zip(distances, distances[1:], points, points[1:], strict=False)
    )
    return SpataruEstimate(points=tuple(points), trend_monotone=monotone)


# Variance and normality


def _autocovariance(aggregate: SampleAggregate) -> tuple[float, float, int] | None:
    if not aggregate.lag_counts[0]:
        return None
    gammas = aggregate.lag_sums / np.maximum(aggregate.lag_counts, 1)
    if gammas[0] <= 0:
        return 0.0, 0.0, 0
    tau = 0.5
    cutoff = len(gammas) - 1
    for lag in range(1, len(gammas)):
        tau += gammas[lag] / gammas[0]
        if lag >= SOKAL_WINDOW * tau:
            cutoff = lag
            break
    else:
        logger.warning("autocovariance window did not settle within %d lags", cutoff)
    sigma2 = 2.0 * tau * float(gammas[0])
    stderr = abs(sigma2) * math.sqrt(2.0 * (2 * cutoff + 1) / (aggregate.samples * aggregate.acov_horizon))
    return sigma2, stderr, cutoff


def estimate_sigma2(
    config: ExperimentConfig, n_cal: int, *, aggregate: SampleAggregate | None = None, workers: int = 1,
) -> VarianceEstimate:
    """Estimate sigma^2 as the variance of S_n / sqrt(n) across independent orbits.

    When autocovariances are available the windowed Green-Kubo sum is
    reported too; a gap above 3 combined standard errors is logged.

    Args:
        config: The experiment configuration.
        n_cal: Orbit length used for calibration.
        aggregate: Samples probed at ``n_cal``.
        workers: Worker processes.

    Returns:
        The variance estimate.

    """
    if n_cal < 1:
        msg = f"n_cal must be at least 1, got {n_cal}"
        raise DomainError(msg)
    _require_exact_source(config)
    if config.method is Method.EXACT:
        exact = known_sigma2(config) or 0.0
        return VarianceEstimate(sigma2=exact, method=VarianceMethod.BATCH_MEANS, n_used=n_cal, stderr=0.0)
    if aggregate is None or n_cal not in aggregate.probe_n:
        aggregate = run_samples(
            replace_length(config, n_cal),
            n=n_cal,
            probes=(n_cal,),
            acov_horizon=n_cal,
            max_lag=min(config.max_lag, n_cal - 1),
            workers=workers,
        )

    values = aggregate.probe(n_cal)
    samples = len(values)
    sigma2 = float(np.var(values, ddof=1))
    fourth = float(np.mean((values - values.mean()) ** 4))
    stderr = math.sqrt(max(fourth - sigma2 * sigma2, 0.0) / samples)

    autocov = _autocovariance(aggregate)
    if autocov is None:
        return VarianceEstimate(sigma2=sigma2, method=VarianceMethod.BATCH_MEANS, n_used=n_cal, stderr=stderr)
    autocov_sigma2, autocov_stderr, cutoff = autocov
    if autocov_sigma2 < -AGREEMENT_SIGMAS * autocov_stderr:
        logger.warning("negative autocovariance sum %.4g beyond its noise %.2g", autocov_sigma2, autocov_stderr)
    combined = math.hypot(stderr, autocov_stderr)
    agree = abs(sigma2 - autocov_sigma2) <= AGREEMENT_SIGMAS * combined
    if not agree:
        logger.warning(
            "batch means (%.4g) and autocovariance (%.4g) disagree beyond %.0f combined stderr",
            sigma2,
            autocov_sigma2,
            AGREEMENT_SIGMAS,
        )
    return VarianceEstimate(
        sigma2=sigma2,
        method=VarianceMethod.BATCH_MEANS,
        n_used=n_cal,
        stderr=stderr,
        autocov_sigma2=autocov_sigma2,
        autocov_stderr=autocov_stderr,
        lag_cutoff=cutoff,
        methods_agree=agree,
    )


def ks_distance(
    config: ExperimentConfig,
    n: int,
    *,
    sigma2: float | None = None,
    aggregate: SampleAggregate | None = None,
    workers: int = 1,
) -> KSReport:
    """Kolmogorov distance between the law of S_n / (sigma sqrt(n)) and Phi.

    Args:
        config: The experiment configuration.
        n: Orbit length.
        sigma2: Variance estimate, the closed-form one by default.
        aggregate: Samples probed at n.
        workers: Worker processes.

    Returns:
        The distance and the 95% Kolmogorov critical value for the sample size.

    Raises:
        PreconditionError: If no positive variance is available.

    """
    _require_exact_source(config)
    if config.method is Method.EXACT:
        return bernoulli_ks(n) if config.map_id == "iid:bernoulli" else gaussian_ks(n)
    variance = sigma2 if sigma2 is not None else known_sigma2(config)
    if variance is None or not variance > 0:
        msg = f"the KS diagnostic needs a positive variance estimate, got {variance}"
        raise PreconditionError(msg)
    if aggregate is None or n not in aggregate.probe_n:
        aggregate = run_samples(replace_length(config, n), n=n, probes=(n,), workers=workers)
    values = aggregate.probe(n) / math.sqrt(variance)
    statistic = float(stats.kstest(values, "norm").statistic)
    return KSReport(n=n, delta_n=statistic, samples=len(values), critical=KS_CRITICAL / math.sqrt(len(values)))


# Couplings and centering


class LevyTask(msgspec.Struct, frozen=True):
    """A block of samples for the denominator/derivative coupling."""

    config: ExperimentConfig
    start: int
    stop: int
    n: int
    eps: float


def _levy_chunk(task: LevyTask) -> tuple[float, ...]:
    source = build_source(task.config, DEVIATION_STREAM, center=0.0, n=task.n)
    if not isinstance(source, GaussExactSource):
        msg = "the denominator coupling needs exact Gauss-map orbits"
        raise ConfigError(msg)
    counts = np.zeros(8, dtype=np.int64)
    low, high = math.inf, -math.inf
    threshold = task.eps - THRESHOLD_SLACK
    for index in range(task.start, task.stop):
        joint = source.joint(index)
        if joint is None:
            counts[0] += 1
            continue
        derivative = joint[0][-1] / task.n - 2.0 * LEVY_CONSTANT
        denominator = joint[1][-1] / task.n - LEVY_CONSTANT
        hits = np.array([
            denominator >= threshold,
            denominator <= -threshold,
            derivative >= 2.0 * threshold,
            derivative <= -2.0 * threshold,
        ], dtype=np.int64)
        counts[1] += 1
        counts[2:6] += hits
        counts[6] += abs(hits[0] - hits[2])
        counts[7] += abs(hits[1] - hits[3])
        gap = float(joint[0][-1] - 2.0 * joint[1][-1])
        low, high = min(low, gap), max(high, gap)
    return (*counts.tolist(), low, high)


def levy_coupling(config: ExperimentConfig, n: int, eps: float, *, workers: int = 1) -> LevyCoupling:
    """Compare denominator deviations at eps with derivative deviations at 2 eps on shared samples.

    Per sample, log|(G^n)'x| - 2 log q_n(x) must lie in [0, 2 log 2].

    Args:
        config: A Gauss-map configuration.
        n: Orbit length.
        eps: Deviation level of log q_n / n around the Levy constant.
        workers: Worker processes.

    Returns:
        Both pairs of probabilities with the paired standard error of their difference.

    Raises:
        ConfigError: If the map is not the Gauss map.
        IntegrityError: If the sandwich fails on any sample.

    """
    _check_level(n, eps)
    if config.map_id != "gauss":
        msg = f"the denominator coupling is defined for the gauss map, not '{config.map_id}'"
        raise ConfigError(msg)
    base = replace_length(msgspec.structs.replace(config, observable_id="log-derivative"), n)
    tasks = [
        LevyTask(config=base, start=start, stop=min(start + CHUNK_SIZE, config.samples), n=n, eps=eps)
        for start in range(0, config.samples, CHUNK_SIZE)
    ]
    totals = np.zeros(8, dtype=np.int64)
    low, high = math.inf, -math.inf
    for result in map_ordered(_levy_chunk, tasks, workers):
        totals += np.array(result[:8], dtype=np.int64)
        low, high = min(low, result[8]), max(high, result[9])
    terminated, samples = int(totals[0]), int(totals[1])
    if terminated > TERMINATION_LIMIT * (samples + terminated) or samples < 2:  # noqa: PLR2004
        msg = f"{terminated} of {samples + terminated} orbits terminated early"
        raise IntegrityError(msg)
    if low < -SANDWICH_TOLERANCE or high > 2.0 * LN2 + SANDWICH_TOLERANCE:
        msg = f"log|(G^n)'x| - 2 log q_n(x) left [0, 2 log 2]: observed [{low}, {high}]"
        raise IntegrityError(msg)

    probabilities = totals[2:6] / samples
    stderr = 0.0
    for side in range(2):
        mean = probabilities[side] - probabilities[side + 2]
        second = totals[6 + side] / samples
        stderr = max(stderr, math.sqrt(max(second - mean * mean, 0.0) / samples))
    return LevyCoupling(
        n=n,
        eps=eps,
        gamma_plus=float(probabilities[0]),
        gamma_minus=float(probabilities[1]),
        lambda_plus=float(probabilities[2]),
        lambda_minus=float(probabilities[3]),
        stderr=stderr,
        sandwich_min=low,
        sandwich_max=high,
        samples=samples,
    )


def prefix_coupling(
    eps: float, per_n_plus: Sequence[float], sigma: float, deltas: Sequence[float], K: float,  # noqa: N803
) -> PrefixCoupling:
    """Compare the deviation prefix n <= K / eps^2 with its Gaussian counterpart.

    The eps^2-scaled gap between the sums of Lambda_n^+(eps) and
    Phi(-eps sqrt(n) / sigma) is bounded by eps^2 times the sum of the
    Kolmogorov distances Delta_n over the prefix.

    Args:
        eps: Deviation level.
        per_n_plus: Lambda_n^+(eps) for n = 1, 2, ...
        sigma: Standard deviation.
        deltas: Delta_n for n = 1, 2, ...
        K: Prefix length in units of eps^-2.

    Returns:
        The gap and its bound.

    Raises:
        DomainError: If eps, sigma or K is not positive.
        ArityError: If fewer than K / eps^2 entries are supplied.

    """
    if not (eps > 0 and sigma > 0 and K > 0):
        msg = f"eps, sigma and K must be positive, got {eps}, {sigma}, {K}"
        raise DomainError(msg)
    prefix = math.floor(K / (eps * eps))
    if len(per_n_plus) < prefix or len(deltas) < prefix:
        msg = f"the prefix needs {prefix} entries, got {len(per_n_plus)} estimates and {len(deltas)} distances"
        raise ArityError(msg)
    n = np.arange(1, prefix + 1, dtype=np.float64)
    gaussian = special.ndtr(-eps * np.sqrt(n) / sigma)
    gap = eps * eps * abs(float(np.sum(np.asarray(per_n_plus[:prefix]) - gaussian)))
    bound = eps * eps * float(np.sum(np.asarray(deltas[:prefix])))
    return PrefixCoupling(eps=eps, K=K, prefix_n=prefix, gap=gap, bound=bound)


def estimate_mean(config: ExperimentConfig, *, workers: int = 1) -> MeanEstimate:
    """Estimate the centering constant by ergodic averages S_n / n on a separate stream.

    Lebesgue-distributed starting points converge to the invariant mean for
    the maps considered here; the estimate is never certified.
    """
    n = config.n_max
    aggregate = run_samples(config, n=n, probes=(n,), stream=MEAN_STREAM, center=0.0, workers=workers)
    averages = aggregate.probe(n) / math.sqrt(n)
    logger.warning("centering constant of %s estimated from ergodic averages; not certified", config.observable_id)
    return MeanEstimate(
        mean=float(np.mean(averages)),
        stderr=float(np.std(averages, ddof=1) / math.sqrt(len(averages))),
        n=n,
        samples=len(averages),
    )
