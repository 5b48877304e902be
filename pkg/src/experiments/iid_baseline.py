"""I.i.d. baselines whose deviation probabilities are known exactly."""

from __future__ import annotations

import logging
import math
from typing import TYPE_CHECKING, Any

import msgspec

from src.baselines import bernoulli_ks
from src.deviation_stats import known_sigma2, prefix_coupling
from src.experiment import BaseExperiment, ExperimentResult, RunContext, Table, parse_float_list
from src.experiments.asymptotics import deviation_report
from src.models import Method
from src.sampling import IID_PREFIX, is_iid

if TYPE_CHECKING:
    import argparse

logger = logging.getLogger(__name__)

DEFAULT_SOURCE = "iid:bernoulli"
DEFAULT_PREFIX_CUT = 1.0


class IidBaselineExperiment(BaseExperiment):
    """Fair-bit and Gaussian walks through the same estimators as the maps."""

    @property
    def description(self) -> str:  # noqa: D102
        return "Exact and sampled deviation series of i.i.d. Bernoulli and Gaussian walks"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:  # noqa: D102, PLR6301
        parser.add_argument("--dist", choices=("bernoulli", "gaussian"), help="increment distribution")
        parser.add_argument("--eps-grid", type=parse_float_list, help="comma-separated decreasing eps values")
        parser.add_argument("--method", choices=tuple(Method), help="exact oracle or Monte Carlo")
        parser.add_argument("--samples", type=int, help="number of sampled walks")
        parser.add_argument("--prefix-cut", type=float, help="prefix length K in units of eps^-2")

    def overrides(self, args: argparse.Namespace) -> dict[str, dict[str, Any]]:  # noqa: D102, PLR6301
        return {
            "experiment": {
                "map_id": f"{IID_PREFIX}{args.dist}" if args.dist else None,
                "eps_grid": args.eps_grid,
                "method": args.method,
                "samples": args.samples,
            },
        }

    def options(self, args: argparse.Namespace) -> dict[str, Any]:  # noqa: D102, PLR6301
        return {"prefix_cut": args.prefix_cut if args.prefix_cut is not None else DEFAULT_PREFIX_CUT}

    def run(self, context: RunContext) -> ExperimentResult:  # noqa: D102, PLR6301
        config = context.config.experiment
        if not is_iid(config):
            logger.info("map '%s' is not an i.i.d. source; using %s", config.map_id, DEFAULT_SOURCE)
            config = msgspec.structs.replace(config, map_id=DEFAULT_SOURCE)
        result, series = deviation_report(config, context.config.solver, workers=context.workers)
        summary = dict(result.summary)
        tables = dict(result.tables)
        notes = list(result.notes)

        sigma = math.sqrt(known_sigma2(config) or 0.0)
        cut = float(context.options["prefix_cut"])
        couplings = []
        if config.method is Method.EXACT:
            for item in series:
                prefix = math.floor(cut / item.eps**2)
                if prefix > len(item.per_n):
                    notes.append(f"eps={item.eps}: prefix of {prefix} terms exceeds the {len(item.per_n)} listed")
                    continue
                if config.map_id == "iid:bernoulli":
                    deltas = [bernoulli_ks(n).delta_n for n in range(1, prefix + 1)]
                else:
                    deltas = [0.0] * prefix
                couplings.append(prefix_coupling(item.eps, [p.plus for p in item.per_n], sigma, deltas, cut))
        summary["prefix_coupling"] = msgspec.to_builtins(couplings)
        tables["prefix"] = Table(
            columns=("eps", "K", "prefix_n", "gap", "bound"),
            rows=tuple((c.eps, c.K, c.prefix_n, c.gap, c.bound) for c in couplings),
        )
        return ExperimentResult(summary=summary, tables=tables, notes=tuple(notes))
