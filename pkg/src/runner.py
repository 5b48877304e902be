"""Experiment run orchestrator: caching, artifacts and the run manifest."""

from __future__ import annotations

import logging
from datetime import UTC, datetime
from pathlib import Path
from typing import TYPE_CHECKING, Any

import msgspec

from src import __version__
from src.experiment import Experiment, ExperimentResult, RunContext
from src.models import RunManifest
from src.utils import (
    HASH_PREFIX_LENGTH,
    config_hash,
    get_template_env,
    render_csv,
    render_template,
    write_file,
)

if TYPE_CHECKING:
    from src.cache import ResultCache
    from src.models import ConfigFile

logger = logging.getLogger(__name__)

REPORT_TEMPLATE = "report.md.jinja"


class RunKey(msgspec.Struct, frozen=True):
    """What the config hash of a run covers."""

    subcommand: str
    config: Any
    options: dict[str, Any]


def run_hash(subcommand: str, config: ConfigFile, options: dict[str, Any]) -> str:
    """Canonical hash of everything that can change a run's numbers."""
    return config_hash(RunKey(subcommand=subcommand, config=config, options=options))


def default_output_dir(subcommand: str, digest: str) -> Path:
    """``runs/<subcommand>-<hash12>`` under the working directory."""
    return Path.cwd() / "runs" / f"{subcommand}-{digest[:HASH_PREFIX_LENGTH]}"


class ExperimentRunner:
    """Runs one experiment and writes its artifacts."""

    def __init__(
        self,
        experiment: Experiment,
        config: ConfigFile,
        options: dict[str, Any],
        *,
        output_dir: Path | None = None,
        cache: ResultCache | None = None,
        workers: int = 1,
    ) -> None:
        """Initialize the runner.

        Args:
            experiment: The experiment to run.
            config: Validated configuration.
            options: Experiment options that are not config keys.
            output_dir: Artifact directory, derived from the hash by default.
            cache: Result cache, or None to always recompute.
            workers: Worker processes for sampling.

        """
        self.experiment = experiment
        self.config = config
        self.options = options
        self.digest = run_hash(experiment.id, config, options)
        self.output_dir = output_dir or default_output_dir(experiment.id, self.digest)
        self.cache = cache
        self.workers = workers
        self.cached = False

    @property
    def cache_key(self) -> str:
        """Cache entry name of this run."""
        return f"{self.experiment.id}-{self.digest}"

    def compute(self) -> ExperimentResult:
        """Return the result from the cache or by running the experiment.

        The fresh result goes through the same JSON encoding as a cached one,
        so both produce the same artifacts.
        """
        if self.cache is not None:
            cached = self.cache.load(self.cache_key, ExperimentResult)
            if cached is not None:
                logger.info("Reusing cached result %s", self.cache_key)
                self.cached = True
                return cached

        context = RunContext(config=self.config, options=self.options, workers=self.workers)
        result = self.experiment.run(context)
        result = msgspec.json.decode(msgspec.json.encode(result, order="sorted"), type=ExperimentResult)
        if self.cache is not None:
            self.cache.store(self.cache_key, result)
        return result

    def write_artifacts(self, result: ExperimentResult) -> RunManifest:
        """Write the summary, tables, report and manifest.

        Returns:
            The manifest that was written.

        """
        generated_at = datetime.now(UTC)
        summary = {
            "subcommand": self.experiment.id,
            "config_hash": self.digest,
            "generated_at": generated_at,
            **result.summary,
        }
        paths = [self.output_dir / "summary.json"]
        write_file(paths[0], msgspec.json.format(msgspec.json.encode(summary, order="sorted")).decode() + "\n")

        for name, table in sorted(result.tables.items()):
            path = self.output_dir / f"{name}.csv"
            write_file(path, render_csv(table.columns, table.rows))
            paths.append(path)

        report = render_template(
            get_template_env(),
            REPORT_TEMPLATE,
            {
                "experiment": self.experiment,
                "digest": self.digest,
                "generated_at": generated_at,
                "version": __version__,
                "config": msgspec.to_builtins(self.config),
                "options": self.options,
                "summary": result.summary,
                "tables": result.tables,
                "notes": result.notes,
                "cached": self.cached,
            },
        )
        paths.append(self.output_dir / "report.md")
        write_file(paths[-1], report)

        manifest = RunManifest(
            config_hash=self.digest,
            generated_at=generated_at,
            tool_version=__version__,
            subcommand=self.experiment.id,
            output_paths=tuple(str(path.relative_to(self.output_dir)) for path in paths),
        )
        write_file(
            self.output_dir / "manifest.json",
            msgspec.json.format(msgspec.json.encode(manifest)).decode() + "\n",
        )
        return manifest

    def run(self) -> tuple[ExperimentResult, RunManifest]:
        """Compute the result and write every artifact."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        result = self.compute()
        return result, self.write_artifacts(result)
