"""Pressure, Lyapunov spectrum and rate function of the Gauss map."""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING, Any

import msgspec
import numpy as np

from src.experiment import BaseExperiment, ExperimentResult, RunContext, Table, parse_float_list
from src.interval_maps import GAUSS_LYAPUNOV, LN2, BinaryMap
from src.thermo import (
    LEFT_SPECTRUM_END,
    equilibrium_variance,
    map_pressure,
    pressure,
    pressure_derivatives,
    pressure_table,
    rate_function,
    rate_second_derivative_at_0,
    spectrum_table,
    transfer_apply,
)

if TYPE_CHECKING:
    import argparse

logger = logging.getLogger(__name__)

DEFAULT_BETA_GRID = tuple(round(0.7 + 0.1 * i, 10) for i in range(14))
ALPHA_HALF_WIDTH = 0.5
ALPHA_POINTS = 21
WITNESS_POINTS = 9
BINARY_CHECK_BETA = 2.0


def gauss_density(x: np.ndarray) -> np.ndarray:
    """Density 1 / ((1 + x) log 2) of the Gauss measure."""
    return 1.0 / ((1.0 + x) * LN2)


class PressureExperiment(BaseExperiment):
    """Pressure, Lyapunov spectrum and rate function of the Gauss map."""

    @property
    def description(self) -> str:  # noqa: D102
        return "Transfer-operator pressure, Lyapunov spectrum and rate function"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:  # noqa: D102, PLR6301
        parser.add_argument("--beta-grid", type=parse_float_list, help="comma-separated increasing beta values")
        parser.add_argument("--alpha-grid", type=parse_float_list, help="comma-separated alpha values")
        parser.add_argument("--degree", type=int, help="collocation degree")
        parser.add_argument("--tail", choices=("hurwitz", "integral"), help="branch tail treatment")

    def overrides(self, args: argparse.Namespace) -> dict[str, dict[str, Any]]:  # noqa: D102, PLR6301
        return {"solver": {"degree": args.degree, "tail": args.tail}}

    def options(self, args: argparse.Namespace) -> dict[str, Any]:  # noqa: D102, PLR6301
        alphas = np.linspace(GAUSS_LYAPUNOV - ALPHA_HALF_WIDTH, GAUSS_LYAPUNOV + ALPHA_HALF_WIDTH, ALPHA_POINTS)
        return {
            "beta_grid": list(args.beta_grid or DEFAULT_BETA_GRID),
            "alpha_grid": list(args.alpha_grid or (float(alpha) for alpha in alphas)),
        }

    def run(self, context: RunContext) -> ExperimentResult:  # noqa: D102, PLR6301
        solver = context.config.solver
        p_one, diagnostics = pressure(1.0, solver)
        first, second = pressure_derivatives(1.0, solver)

        # the Gauss density is the fixed point of the beta = 1 operator
        points = np.linspace(0.0, 1.0, WITNESS_POINTS)
        applied = transfer_apply(1.0, gauss_density, points, solver.k_max)
        residual = float(np.max(np.abs(applied - gauss_density(points))))

        table = pressure_table(context.options["beta_grid"], solver)
        spectrum = spectrum_table(context.options["alpha_grid"], solver)
        rates = [rate_function(point.alpha - GAUSS_LYAPUNOV, solver) for point in spectrum]
        rate = rate_second_derivative_at_0(solver)

        peak = max(spectrum, key=lambda point: point.b)
        summary = {
            "pressure_at_1": p_one,
            "diagnostics": msgspec.to_builtins(diagnostics),
            "lyapunov": -first,
            "lyapunov_error": abs(-first - GAUSS_LYAPUNOV),
            "equilibrium_variance": equilibrium_variance(solver),
            "fixed_point_residual": residual,
            "convex": all(value > 0 for value in table.P2),
            "spectrum_peak_alpha": peak.alpha,
            "spectrum_peak_b": peak.b,
            "left_spectrum_end": LEFT_SPECTRUM_END,
            "rate": msgspec.to_builtins(rate),
            "rate_second_deriv_inverse_P2": 1.0 / second,
        }
        if not math.isclose(peak.alpha, GAUSS_LYAPUNOV, abs_tol=2 * ALPHA_HALF_WIDTH / (ALPHA_POINTS - 1)):
            logger.warning("spectrum maximum at alpha=%.6g, away from 2 gamma", peak.alpha)

        # the doubling map has P(beta) = (1 - beta) log 2 in closed form
        binary = map_pressure(BinaryMap(), BINARY_CHECK_BETA, solver)
        summary["binary_pressure_error"] = abs(binary - (1.0 - BINARY_CHECK_BETA) * LN2)
        return ExperimentResult(
            summary=summary,
            tables={
                "pressure": Table(
                    columns=("beta", "P", "P1", "P2"),
                    rows=tuple(zip(table.beta_grid, table.P, table.P1, table.P2, strict=True)),
                ),
                "spectrum": Table(
                    columns=("alpha", "beta", "b", "I"),
                    rows=tuple(
                        (point.alpha, point.beta_of_alpha, point.b, value)
                        for point, value in zip(spectrum, rates, strict=True)
                    ),
                ),
            },
        )
