"""Deviation asymptotics of a Birkhoff sum: series, limits, variance and normality."""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING, Any

import msgspec

from src.baselines import bernoulli_lambda, gaussian_lambda
from src.deviation_stats import (
    estimate_mean,
    estimate_sigma2,
    heyde_limit_estimate,
    ks_distance,
    lambda_estimate,
    lambda_series_grid,
    levy_coupling,
    resolve_rate,
    run_deviation,
    spataru_limit_estimate,
)
from src.exceptions import PreconditionError
from src.experiment import BaseExperiment, ExperimentResult, RunContext, Table, parse_float_list
from src.interval_maps import build_map, build_observable
from src.models import DeviationSeries, ExperimentConfig, LambdaEstimate, Method, SolverConfig
from src.sampling import is_iid
from src.thermo import equilibrium_variance, rate_second_derivative_at_0

if TYPE_CHECKING:
    import argparse
    from collections.abc import Callable

logger = logging.getLogger(__name__)

ORACLE_SIGMAS = 4.0
VARIANCE_STABILITY = 0.10
SERIES_AGREEMENT = 0.25


def _with_mean(
    config: ExperimentConfig, notes: list[str], workers: int,
) -> tuple[ExperimentConfig, dict[str, Any] | None]:
    """Fill in an unknown centering constant from ergodic averages."""
    if is_iid(config) or config.mean is not None:
        return config, None
    observable = build_observable(config.observable_id, build_map(config.map_id, config.maps))
    if observable.mean is not None:
        return config, None
    estimate = estimate_mean(config, workers=workers)
    notes.append(f"centering constant {estimate.mean!r} estimated from ergodic averages (not certified)")
    return msgspec.structs.replace(config, mean=estimate.mean), msgspec.to_builtins(estimate)


def _oracle(config: ExperimentConfig) -> Callable[[int, float], LambdaEstimate] | None:
    if config.method is Method.EXACT:
        return None
    if config.map_id == "iid:bernoulli" or (config.map_id == "binary" and config.observable_id == "half-indicator"):
        return bernoulli_lambda
    if config.map_id == "iid:gaussian":
        return gaussian_lambda
    return None


def _series_rows(series: tuple[DeviationSeries, ...]) -> tuple[tuple[Any, ...], ...]:
    return tuple(
        (
            item.eps,
            item.truncation_n,
            item.value,
            item.stderr,
            item.eps**2 * item.value,
            item.weighted_value,
            item.weighted_stderr,
            item.tail_remainder,
            item.certified,
        )
        for item in series
    )


def deviation_report(
    config: ExperimentConfig, solver: SolverConfig, *, workers: int = 1,
) -> tuple[ExperimentResult, tuple[DeviationSeries, ...]]:
    """Run the deviation pipeline of a config and collect its tables.

    One sampling pass feeds the deviation series, the variance estimates
    and the Kolmogorov distances.

    Args:
        config: The experiment configuration.
        solver: Solver parameters for the Gauss-map rate function.
        workers: Worker processes.

    Returns:
        The result and the series it was built from.

    """
    notes: list[str] = []
    config, mean_estimate = _with_mean(config, notes, workers)
    rate = resolve_rate(config, solver)
    if not rate.rigorous:
        notes.append(f"LD constant C={rate.constant} is not proven for rate '{rate.name}'; tails are not certified")

    aggregate = run_deviation(config, workers=workers) if config.method is Method.MONTE_CARLO else None
    series = lambda_series_grid(config, rate=rate, solver=solver, aggregate=aggregate, workers=workers)
    heyde = heyde_limit_estimate(config, series=series, rate=rate, solver=solver)

    variances = [estimate_sigma2(config, n, aggregate=aggregate, workers=workers) for n in config.n_cal]
    sigma2 = variances[-1].sigma2
    positive = [item.sigma2 for item in variances if item.sigma2 > 0]
    stable = bool(positive) and (max(positive) - min(positive)) <= VARIANCE_STABILITY * max(positive)

    spataru = None
    if config.eps_grid[0] < 1:
        spataru = spataru_limit_estimate(config, series=series, sigma2=sigma2 if sigma2 > 0 else None)

    ks_reports = []
    try:
        ks_reports = [ks_distance(config, n, sigma2=sigma2, aggregate=aggregate) for n in config.ks_n]
    except PreconditionError as exc:
        notes.append(f"KS diagnostic skipped: {exc}")
        logger.warning(notes[-1])

    summary: dict[str, Any] = {
        "map_id": config.map_id,
        "observable_id": config.observable_id,
        "method": config.method,
        "samples": aggregate.samples if aggregate is not None else 0,
        "terminated": aggregate.terminated if aggregate is not None else 0,
        "rate": rate.name,
        "rate_rigorous": rate.rigorous,
        "heyde": msgspec.to_builtins(heyde),
        "sigma2": sigma2,
        "sigma2_stable": stable,
        "heyde_vs_sigma2": abs(heyde.limit - sigma2) / sigma2 if sigma2 > 0 else None,
        "variances": msgspec.to_builtins(variances),
        "spataru": msgspec.to_builtins(spataru) if spataru is not None else None,
        "ks": msgspec.to_builtins(ks_reports),
    }
    if mean_estimate is not None:
        summary["mean_estimate"] = mean_estimate

    tables = {
        "series": Table(
            columns=(
                "eps", "truncation_n", "value", "stderr", "scaled", "weighted", "weighted_stderr", "tail", "certified",
            ),
            rows=_series_rows(series),
        ),
        "per_n": Table(
            columns=("eps", "n", "lambda_plus", "lambda_minus", "stderr_plus", "stderr_minus"),
            rows=tuple(
                (item.eps, point.n, point.plus, point.minus, point.stderr_plus, point.stderr_minus)
                for item in series
                for point in item.per_n
            ),
        ),
        "variance": Table(
            columns=("n", "sigma2", "stderr", "autocov_sigma2", "autocov_stderr", "lag_cutoff"),
            rows=tuple(
                (v.n_used, v.sigma2, v.stderr, v.autocov_sigma2, v.autocov_stderr, v.lag_cutoff) for v in variances
            ),
        ),
        "ks": Table(
            columns=("n", "delta_n", "samples", "critical"),
            rows=tuple((k.n, k.delta_n, k.samples, k.critical) for k in ks_reports),
        ),
    }

    oracle = _oracle(config)
    if oracle is not None and aggregate is not None:
        rows = []
        for index, eps in enumerate(config.eps_grid):
            for n in config.n_cal:
                estimate = lambda_estimate(aggregate, index, n)
                exact = oracle(n, eps)
                spread = math.sqrt(exact.plus * (1.0 - exact.plus) / aggregate.samples)
                stderr = max(spread, 1.0 / aggregate.samples)
                rows.append((eps, n, estimate.plus, exact.plus, (estimate.plus - exact.plus) / stderr))
        summary["oracle_max_z"] = max(abs(row[-1]) for row in rows)
        summary["oracle_agrees"] = summary["oracle_max_z"] <= ORACLE_SIGMAS
        tables["oracle"] = Table(columns=("eps", "n", "estimate", "exact", "z"), rows=tuple(rows))

    return ExperimentResult(summary=summary, tables=tables, notes=tuple(notes)), series


class AsymptoticsExperiment(BaseExperiment):
    """Deviation series and limits for a map and observable."""

    @property
    def description(self) -> str:  # noqa: D102
        return "Heyde and Spataru limits, variance and KS distances of a Birkhoff sum"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:  # noqa: D102, PLR6301
        parser.add_argument("--map", dest="map_id", help="gauss, binary, finite:<endpoints> or a configured map")
        parser.add_argument("--observable", dest="observable_id", help="observable id")
        parser.add_argument("--eps-grid", type=parse_float_list, help="comma-separated decreasing eps values")
        parser.add_argument("--samples", type=int, help="number of sampled orbits")
        parser.add_argument("--n-max", type=int, help="orbit length")
        parser.add_argument("--seed", type=int, help="64-bit seed")
        parser.add_argument("--levy-n", type=int, default=0, help="also compare log q_n with log|(G^n)'| at this n")

    def overrides(self, args: argparse.Namespace) -> dict[str, dict[str, Any]]:  # noqa: D102, PLR6301
        return {
            "experiment": {
                "map_id": args.map_id,
                "observable_id": args.observable_id,
                "eps_grid": args.eps_grid,
                "samples": args.samples,
                "n_max": args.n_max,
                "seed": args.seed,
            },
        }

    def options(self, args: argparse.Namespace) -> dict[str, Any]:  # noqa: D102, PLR6301
        return {"levy_n": args.levy_n}

    def run(self, context: RunContext) -> ExperimentResult:  # noqa: D102, PLR6301
        config, solver = context.config.experiment, context.config.solver
        result, _ = deviation_report(config, solver, workers=context.workers)
        summary = dict(result.summary)
        tables = dict(result.tables)

        if config.map_id == "gauss" and config.observable_id == "log-derivative":
            variance = equilibrium_variance(solver)
            summary["equilibrium_variance"] = variance
            summary["rate_second_deriv_at_0"] = rate_second_derivative_at_0(solver).second_deriv_at_0
            heyde_limit = summary["heyde"]["limit"]
            summary["heyde_vs_equilibrium"] = abs(heyde_limit - variance) / variance
            summary["heyde_agrees"] = summary["heyde_vs_equilibrium"] <= SERIES_AGREEMENT

        levy_n = context.options.get("levy_n", 0)
        if levy_n and config.map_id == "gauss":
            coupling = levy_coupling(config, levy_n, config.eps_grid[0] / 2.0, workers=context.workers)
            summary["levy_coupling"] = {**msgspec.to_builtins(coupling), "difference": coupling.difference}

        return ExperimentResult(summary=summary, tables=tables, notes=result.notes)
