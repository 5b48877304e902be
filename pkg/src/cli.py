"""Command-line interface for birkhoff-lab."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING

import msgspec
import questionary
from rich.console import Console
from rich.panel import Panel
from rich.text import Text

from src import __version__
from src.cache import ResultCache
from src.exceptions import LabError
from src.experiment import discover_experiments
from src.runner import ExperimentRunner
from src.utils import apply_overrides, default_cache_dir, load_config, setup_logging

if TYPE_CHECKING:
    from collections.abc import Sequence

    from src.experiment import Experiment

console = Console(stderr=True)
logger = logging.getLogger(__name__)


def print_banner() -> None:
    """Print the welcome banner."""
    banner = Text("∑ Birkhoff Lab ∑", style="bold cyan", justify="center")
    console.print(Panel(banner))
    console.print()


def positive_int(text: str) -> int:
    """Argparse type for a positive integer.

    Returns:
        The parsed value.

    Raises:
        argparse.ArgumentTypeError: If the value is not a positive integer.

    """
    try:
        value = int(text)
    except ValueError:
        msg = f"expected a positive integer, got {text!r}"
        raise argparse.ArgumentTypeError(msg) from None
    if value < 1:
        msg = f"expected a positive integer, got {value}"
        raise argparse.ArgumentTypeError(msg)
    return value


def build_parser(experiments: Sequence[Experiment]) -> argparse.ArgumentParser:
    """Build the parser with one subcommand per experiment.

    Returns:
        The argument parser.

    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML config file")
    common.add_argument("--output", type=Path, help="artifact directory (default runs/<subcommand>-<hash>)")
    common.add_argument("--workers", type=positive_int, default=1, help="worker processes (default 1)")
    common.add_argument("--no-cache", action="store_true", help="recompute even when a cached result exists")
    common.add_argument("--verbose", action="store_true", help="log debug messages")

    parser = argparse.ArgumentParser(prog="birkhoff-lab", description="Deviation asymptotics of Birkhoff sums")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="subcommand", metavar="SUBCOMMAND")
    for experiment in experiments:
        subparser = subparsers.add_parser(
            experiment.id, parents=[common], help=experiment.description, description=experiment.description,
        )
        experiment.add_arguments(subparser)
    return parser


def ask_subcommand(experiments: Sequence[Experiment]) -> list[str]:
    """Ask for the subcommand and an optional config file.

    Returns:
        Command-line arguments equivalent to the answers.

    Raises:
        SystemExit: If the user cancels the operation.

    """
    choices = [
        questionary.Choice(title=f"{experiment.id}: {experiment.description}", value=experiment.id)
        for experiment in experiments
    ]
    subcommand = questionary.select("Select an experiment:", choices=choices).ask()
    if subcommand is None:
        console.print("\n[yellow]Cancelled.[/yellow]")
        raise SystemExit(0)

    config = questionary.path("Config file (leave empty for defaults):", default="").ask()
    if config is None:
        console.print("\n[yellow]Cancelled.[/yellow]")
        raise SystemExit(0)

    return [subcommand, "--config", config] if config.strip() else [subcommand]


def run_experiment(experiment: Experiment, args: argparse.Namespace) -> None:
    """Load the config, run the experiment and print its summary or records.

    Raises:
        LabError: Propagated from configuration, computation or cache.

    """
    config = apply_overrides(load_config(args.config), experiment.overrides(args))
    options = experiment.options(args)
    cache = None if args.no_cache else ResultCache(default_cache_dir(), __version__)
    runner = ExperimentRunner(
        experiment, config, options, output_dir=args.output, cache=cache, workers=args.workers,
    )

    with console.status(f"[bold green]Running {experiment.id}..."):
        result, manifest = runner.run()

    source = "cache" if runner.cached else "computed"
    console.print(
        f"[bold green]✓[/bold green] {experiment.id} ({source}) written to [cyan]{runner.output_dir}[/cyan]",
    )
    for path in manifest.output_paths:
        logger.debug("wrote %s", runner.output_dir / path)
    records = experiment.stdout_records(result)
    if records is None:
        sys.stdout.write((runner.output_dir / "summary.json").read_text(encoding="utf-8"))
    else:
        for record in records:
            sys.stdout.write(msgspec.json.encode(record).decode() + "\n")
    sys.stdout.flush()


def main(argv: Sequence[str] | None = None) -> None:
    """Run the main CLI interface.

    Raises:
        SystemExit: With the error's exit code, 2 on usage errors, 0 on cancel.

    """
    experiments = discover_experiments()
    parser = build_parser(experiments)
    arguments = list(sys.argv[1:] if argv is None else argv)

    try:
        if not arguments:
            if not sys.stdin.isatty():
                parser.print_usage(sys.stderr)
                raise SystemExit(2)
            print_banner()
            arguments = ask_subcommand(experiments)

        args = parser.parse_args(arguments)
        if args.subcommand is None:
            parser.print_usage(sys.stderr)
            raise SystemExit(2)

        setup_logging(console, verbose=args.verbose)
        experiment = next(experiment for experiment in experiments if experiment.id == args.subcommand)
        run_experiment(experiment, args)

    except LabError as exc:
        console.print(f"[bold red]✗[/bold red] {exc}")
        raise SystemExit(exc.exit_code) from exc
    except KeyboardInterrupt:
        console.print("\n[yellow]Cancelled.[/yellow]")
        return


if __name__ == "__main__":
    main()
