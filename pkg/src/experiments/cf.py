"""Continued fraction digits, convergents and their exact checks for one input."""

from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Any

import msgspec

from src.continued_fractions import (
    DEFAULT_PRECISION,
    SEED_BITS,
    cf_digits,
    convergent_integrity,
    convergents,
    diophantine_batch,
    diophantine_check,
    levy_batch,
    parse_real,
)
from src.exceptions import PrecisionError
from src.experiment import BaseExperiment, ExperimentResult, RunContext, Table

if TYPE_CHECKING:
    import argparse

logger = logging.getLogger(__name__)

DEFAULT_INPUT = "golden"
DEFAULT_DIGITS = 10
DEFAULT_LEVY_N = 1000


class CfExperiment(BaseExperiment):
    """Continued-fraction digits, convergents and their exact checks."""

    @property
    def description(self) -> str:  # noqa: D102
        return "Continued-fraction expansion, convergents and Diophantine checks"

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:  # noqa: D102, PLR6301
        parser.add_argument("--input", help="p/q, a decimal, or pi-3, e-2, golden, sqrt2-1")
        parser.add_argument("--digits", type=int, help=f"number of digits (default {DEFAULT_DIGITS})")
        parser.add_argument("--precision", type=int, help=f"enclosure precision in bits (default {DEFAULT_PRECISION})")
        parser.add_argument("--batch", type=int, default=0, help="also check this many random dyadic seeds")
        parser.add_argument(
            "--levy-n", type=int, help=f"digit index of the batch Levy average (default {DEFAULT_LEVY_N})",
        )

    def options(self, args: argparse.Namespace) -> dict[str, Any]:  # noqa: D102, PLR6301
        return {
            "input": args.input or DEFAULT_INPUT,
            "digits": args.digits if args.digits is not None else DEFAULT_DIGITS,
            "precision": args.precision or DEFAULT_PRECISION,
            "batch": args.batch,
            "levy_n": args.levy_n or DEFAULT_LEVY_N,
        }

    def run(self, context: RunContext) -> ExperimentResult:  # noqa: D102, PLR6301
        options = context.options
        x = parse_real(options["input"], options["precision"])
        notes: list[str] = []
        try:
            expansion = cf_digits(x, options["digits"])
        except PrecisionError as exc:
            notes.append(f"{exc}; reporting the {exc.certified} certified digits")
            logger.warning(notes[-1])
            expansion = cf_digits(x, exc.certified)

        pairs = convergents(expansion, len(expansion.digits))
        integrity = convergent_integrity(expansion, pairs)
        try:
            diophantine = diophantine_check(x, len(expansion.digits))
        except PrecisionError as exc:
            notes.append(f"Diophantine check stopped: {exc}")
            logger.warning(notes[-1])
            diophantine = diophantine_check(x, max(exc.certified - 1, 0))

        summary: dict[str, Any] = {
            "input": options["input"],
            "digits": list(expansion.digits),
            "exact": expansion.exact,
            "terminated": expansion.terminated,
            "convergents": [pair.to_builtins() for pair in pairs],
            "integrity": {**msgspec.to_builtins(integrity), "passed": integrity.passed},
            "diophantine": {**msgspec.to_builtins(diophantine), "passed": diophantine.passed},
        }

        if options["batch"]:
            config = context.config.experiment
            batch = diophantine_batch(config.seed, options["batch"], options["digits"], SEED_BITS, context.workers)
            levy = levy_batch(config.seed, options["batch"], options["levy_n"], context.workers)
            summary["batch"] = msgspec.to_builtins(batch)
            summary["levy"] = {**msgspec.to_builtins(levy), "relative_error": levy.relative_error}

        rows = tuple((pair.index, str(pair.p), str(pair.q)) for pair in pairs)
        entries = tuple(
            (entry.index, entry.error, entry.lower, entry.upper, entry.passed, entry.terminal)
            for entry in diophantine.entries
        )
        return ExperimentResult(
            summary=summary,
            tables={
                "convergents": Table(columns=("index", "p", "q"), rows=rows),
                "diophantine": Table(columns=("index", "error", "lower", "upper", "passed", "terminal"), rows=entries),
            },
            notes=tuple(notes),
        )

    def stdout_records(self, result: ExperimentResult) -> list[dict[str, Any]] | None:  # noqa: PLR6301
        """One record per digit with its convergent; integers are decimal strings."""
        digits = result.summary["digits"]
        return [
            {"index": pair["index"], "digit": digits[pair["index"] - 1], "p": pair["p"], "q": pair["q"]}
            for pair in result.summary["convergents"]
        ]
