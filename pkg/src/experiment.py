"""Experiment plugin system: one subcommand per module under ``src/experiments``."""

from __future__ import annotations

import importlib
import logging
import pkgutil
import re
from typing import TYPE_CHECKING, Any, Protocol, runtime_checkable

import msgspec

from src.models import ConfigFile  # noqa: TC001

if TYPE_CHECKING:
    import argparse
    from pathlib import Path

logger = logging.getLogger(__name__)


def camel_to_snake(name: str) -> str:
    """Convert CamelCase to snake_case.

    Returns:
        The converted string in snake_case.

    """
    name = re.sub(r"(.)([A-Z][a-z]+)", r"\1_\2", name)
    return re.sub(r"([a-z0-9])([A-Z])", r"\1_\2", name).lower()


def parse_float_list(text: str) -> tuple[float, ...]:
    """Parse a comma-separated list of numbers such as ``0.1,0.05,0.02``."""
    return tuple(float(item) for item in text.split(",") if item.strip())


class Table(msgspec.Struct, frozen=True):
    """A CSV table: header plus rows of plain values."""

    columns: tuple[str, ...]
    rows: tuple[tuple[Any, ...], ...]


class ExperimentResult(msgspec.Struct, frozen=True):
    """Everything a run produces apart from provenance."""

    summary: dict[str, Any]
    tables: dict[str, Table] = msgspec.field(default_factory=dict)
    notes: tuple[str, ...] = ()


class RunContext(msgspec.Struct, frozen=True):
    """Inputs of one experiment run."""

    config: ConfigFile
    options: dict[str, Any]
    workers: int = 1


@runtime_checkable
class Experiment(Protocol):
    """Protocol for birkhoff-lab experiments."""

    @property
    def id(self) -> str:
        """Subcommand name."""
        ...

    @property
    def description(self) -> str:
        """Short description for the CLI."""
        ...

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Register the subcommand's own flags."""
        ...

    def overrides(self, args: argparse.Namespace) -> dict[str, dict[str, Any]]:
        """Config keys set by the subcommand's flags."""
        ...

    def options(self, args: argparse.Namespace) -> dict[str, Any]:
        """Flag values that change results but have no config key."""
        ...

    def run(self, context: RunContext) -> ExperimentResult:
        """Run the experiment."""
        ...

    def stdout_records(self, result: ExperimentResult) -> list[dict[str, Any]] | None:
        """Records printed as JSON lines instead of the summary document."""
        ...


class BaseExperiment:
    """Base class for experiments with default implementations."""

    path: Path

    @property
    def id(self) -> str:
        """Subcommand name derived from the class name."""
        return camel_to_snake(self.__class__.__name__.removesuffix("Experiment")).replace("_", "-")

    @property
    def description(self) -> str:
        """Short description for the CLI."""
        return ""

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        """Default implementation: no extra flags."""

    def overrides(self, args: argparse.Namespace) -> dict[str, dict[str, Any]]:  # noqa: ARG002, PLR6301
        """Default implementation: no config overrides.

        Returns:
            An empty mapping.

        """
        return {}

    def options(self, args: argparse.Namespace) -> dict[str, Any]:  # noqa: ARG002, PLR6301
        """Default implementation: no extra options.

        Returns:
            An empty mapping.

        """
        return {}

    def run(self, context: RunContext) -> ExperimentResult:
        """Run the experiment.

        Raises:
            NotImplementedError: Always; subclasses implement it.

        """
        msg = f"experiment {self.id} does not implement run()"
        raise NotImplementedError(msg)

    def stdout_records(self, result: ExperimentResult) -> list[dict[str, Any]] | None:  # noqa: ARG002, PLR6301
        """Default implementation: print the summary document.

        Returns:
            None.

        """
        return None


def discover_experiments() -> list[Experiment]:
    """Discover the experiments shipped in ``src/experiments``.

    Returns:
        One instance per experiment module, sorted by id.

    """
    from src.utils import get_package_dir

    experiments_path = get_package_dir() / "experiments"
    if not experiments_path.exists():
        return []

    experiments = []
    for _, module_name, is_pkg in pkgutil.iter_modules([str(experiments_path)]):
        if is_pkg:
            continue
        try:
            module = importlib.import_module(f"src.experiments.{module_name}")
        except ImportError:
            logger.exception("failed to import experiment module %s", module_name)
            continue
        for attr_name in dir(module):
            attr = getattr(module, attr_name)
            if isinstance(attr, type) and issubclass(attr, BaseExperiment) and attr is not BaseExperiment:
                instance = attr()
                instance.path = experiments_path / f"{module_name}.py"
                experiments.append(instance)
                break  # one experiment per module

    return sorted(experiments, key=lambda experiment: experiment.id)
