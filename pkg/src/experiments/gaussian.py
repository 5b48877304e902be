"""Certified Gaussian sums and their tail behaviour as the scale shrinks."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any

from src.experiment import BaseExperiment, ExperimentResult, RunContext, Table, parse_float_list
from src.gaussian import (
    gaussian_tail_limit,
    heyde_gaussian_sum,
    log_weighted_gaussian_report,
    tail_gaussian_report,
)

if TYPE_CHECKING:
    import argparse

logger = logging.getLogger(__name__)

DEFAULT_RHO = (0.2, 0.1, 0.05, 0.02)
DEFAULT_CUT = 8.0


class GaussianExperiment(BaseExperiment):
    """Certified Gaussian sums and their rescaled limits."""

    @property
    def description(self) -> str:  # noqa: D102
        return "Gaussian series bounds, tail sums and log-weighted sums"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:  # noqa: D102, PLR6301
        parser.add_argument("--rho", type=parse_float_list, help="comma-separated scales, e.g. 0.2,0.1")
        parser.add_argument("--cut", type=float, help=f"tail cut K in units of rho^-2 (default {DEFAULT_CUT})")

    def options(self, args: argparse.Namespace) -> dict[str, Any]:  # noqa: D102, PLR6301
        return {
            "rho": list(args.rho or DEFAULT_RHO),
            "cut": args.cut if args.cut is not None else DEFAULT_CUT,
        }

    def run(self, context: RunContext) -> ExperimentResult:  # noqa: D102, PLR6301
        cut = float(context.options["cut"])
        points = []
        notes = []
        for rho in context.options["rho"]:
            report = heyde_gaussian_sum(rho)
            tail = tail_gaussian_report(rho, cut)
            within = 0.5 <= report.scaled <= 0.5 + rho * rho  # noqa: PLR2004
            if not within:
                notes.append(f"rho={rho}: scaled sum {report.scaled!r} is outside [1/2, 1/2 + rho^2]")
                logger.warning(notes[-1])
            weighted = log_weighted_gaussian_report(rho, 1.0) if rho < 1 else None
            points.append(
                {
                    "rho": rho,
                    "value": report.value,
                    "scaled": report.scaled,
                    "truncation_n": report.truncation_n,
                    "tail_bound": report.tail_bound,
                    "within_bound": within,
                    "tail_scaled": tail.scaled,
                    "tail_start": tail.start,
                    "log_weighted": weighted.value if weighted else None,
                    "log_weighted_scaled": weighted.scaled if weighted else None,
                },
            )

        ordered = sorted(points, key=lambda point: -point["rho"])
        decreasing = all(
            later["tail_scaled"] <= earlier["tail_scaled"] for earlier, later in zip(ordered, ordered[1:], strict=False)
        )
        summary = {
            "points": points,
            "cut": cut,
            "tail_limit": gaussian_tail_limit(cut),
            "tail_decreasing": decreasing,
        }
        rows = tuple(
            (p["rho"], p["value"], p["scaled"], p["truncation_n"], p["tail_bound"], p["tail_scaled"], p["log_weighted"])
            for p in points
        )
        return ExperimentResult(
            summary=summary,
            tables={
                "gaussian_sums": Table(
                    columns=("rho", "value", "scaled", "truncation_n", "tail_bound", "tail_scaled", "log_weighted"),
                    rows=rows,
                ),
            },
            notes=tuple(notes),
        )
