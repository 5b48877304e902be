import argparse
import json
from pathlib import Path

import msgspec
import pytest

from src import __version__
from src.cache import ResultCache
from src.experiment import (
    BaseExperiment,
    Experiment,
    ExperimentResult,
    RunContext,
    Table,
    camel_to_snake,
    discover_experiments,
    parse_float_list,
)
from src.experiments.asymptotics import AsymptoticsExperiment
from src.experiments.cf import CfExperiment
from src.experiments.gaussian import GaussianExperiment
from src.experiments.iid_baseline import IidBaselineExperiment
from src.models import ConfigFile, ExperimentConfig, Method, RunManifest
from src.runner import ExperimentRunner, run_hash

EXPECTED_IDS = ["asymptotics", "cf", "gaussian", "iid-baseline", "pressure"]


class EchoExperiment(BaseExperiment):
    """Returns its options and counts how often it ran."""

    def __init__(self) -> None:
        """Start with no runs."""
        self.calls = 0

    def run(self, context: RunContext) -> ExperimentResult:
        """Echo the options back."""
        self.calls += 1
        return ExperimentResult(
            summary={"options": context.options, "value": 0.1, "workers": context.workers},
            tables={"echo": Table(columns=("key", "value"), rows=tuple(sorted(context.options.items())))},
            notes=("echoed",),
        )


def small_iid_config() -> ConfigFile:
    """Fair-bit walk small enough for the exact oracle to be quick."""
    experiment = ExperimentConfig(
        map_id="iid:bernoulli",
        observable_id="identity",
        eps_grid=(0.45, 0.4),
        n_max=64,
        samples=1000,
        n_cal=(32, 64),
        ks_n=(64,),
        max_lag=8,
        method=Method.EXACT,
    )
    return ConfigFile(experiment=experiment)


def test_camel_to_snake() -> None:
    """Verify CamelCase names become snake_case."""
    assert camel_to_snake("IidBaseline") == "iid_baseline"
    assert camel_to_snake("Cf") == "cf"


def test_parse_float_list() -> None:
    """Verify comma-separated numbers parse and blanks are skipped."""
    assert parse_float_list("0.1, 0.05,") == (0.1, 0.05)


def test_discover_experiments() -> None:
    """Verify every experiment module is discovered once, sorted by id."""
    experiments = discover_experiments()
    assert [experiment.id for experiment in experiments] == EXPECTED_IDS
    for experiment in experiments:
        assert isinstance(experiment, Experiment)
        assert experiment.description
        assert isinstance(experiment.path, Path)
        assert experiment.path.exists()


def test_base_experiment_defaults() -> None:
    """Verify the defaults add nothing and run must be overridden."""
    experiment = BaseExperiment()
    namespace = argparse.Namespace()
    assert experiment.overrides(namespace) == {}
    assert experiment.options(namespace) == {}
    with pytest.raises(NotImplementedError):
        experiment.run(RunContext(config=ConfigFile(), options={}))


def test_run_hash_covers_options() -> None:
    """Verify options and subcommand both enter the hash."""
    config = ConfigFile()
    base = run_hash("cf", config, {"digits": 10})
    assert base == run_hash("cf", config, {"digits": 10})
    assert base != run_hash("cf", config, {"digits": 11})
    assert base != run_hash("gaussian", config, {"digits": 10})


def test_runner_writes_artifacts(tmp_path: Path) -> None:
    """Verify summary, CSV, report and manifest are written and listed."""
    runner = ExperimentRunner(EchoExperiment(), ConfigFile(), {"k": 2}, output_dir=tmp_path / "out")
    result, manifest = runner.run()
    assert result.summary["value"] == 0.1
    assert manifest.output_paths == ("summary.json", "echo.csv", "report.md")
    summary = json.loads((tmp_path / "out" / "summary.json").read_text(encoding="utf-8"))
    assert summary["subcommand"] == "echo"
    assert summary["config_hash"] == runner.digest
    assert (tmp_path / "out" / "echo.csv").read_text(encoding="utf-8") == "key,value\nk,2\n"
    report = (tmp_path / "out" / "report.md").read_text(encoding="utf-8")
    assert runner.digest in report
    assert "- echoed" in report
    stored = msgspec.json.decode((tmp_path / "out" / "manifest.json").read_bytes(), type=RunManifest)
    assert stored.tool_version == __version__
    assert stored.config_hash == runner.digest


def test_runner_default_output_dir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Verify runs land in runs/<subcommand>-<hash12>."""
    monkeypatch.chdir(tmp_path)
    runner = ExperimentRunner(EchoExperiment(), ConfigFile(), {})
    assert runner.output_dir == tmp_path / "runs" / f"echo-{runner.digest[:12]}"


def test_runner_reuses_cache(tmp_path: Path) -> None:
    """Verify the second run is served from the cache with identical summary bytes."""
    cache = ResultCache(tmp_path / "cache", __version__)
    experiment = EchoExperiment()
    first = ExperimentRunner(experiment, ConfigFile(), {"k": 1}, output_dir=tmp_path / "a", cache=cache)
    first.run()
    second = ExperimentRunner(experiment, ConfigFile(), {"k": 1}, output_dir=tmp_path / "b", cache=cache)
    result, _ = second.run()
    assert experiment.calls == 1
    assert second.cached
    assert result.tables["echo"].rows == (("k", 1),)
    assert (tmp_path / "a" / "echo.csv").read_bytes() == (tmp_path / "b" / "echo.csv").read_bytes()


def test_cf_experiment_on_rational() -> None:
    """Verify the cf run reports digits, convergents and passing checks."""
    result = CfExperiment().run(
        RunContext(config=ConfigFile(), options={"input": "2/5", "digits": 5, "precision": 256, "batch": 0}),
    )
    assert result.summary["digits"] == [2, 2]
    assert result.summary["terminated"]
    assert result.summary["integrity"]["passed"]
    assert result.summary["diophantine"]["passed"]
    assert result.tables["convergents"].rows == ((1, "1", "2"), (2, "2", "5"))
    assert CfExperiment().stdout_records(result)[1] == {"index": 2, "digit": 2, "p": "2", "q": "5"}
    assert EchoExperiment().stdout_records(result) is None


def test_cf_experiment_reports_certified_prefix() -> None:
    """Verify a short enclosure falls back to its certified digits with a note."""
    options = {"input": "golden", "digits": 200, "precision": 64, "batch": 0}
    result = CfExperiment().run(RunContext(config=ConfigFile(), options=options))
    assert 0 < len(result.summary["digits"]) < 200
    assert set(result.summary["digits"]) == {1}
    assert result.notes


def test_gaussian_experiment() -> None:
    """Verify the scaled sums sit in [1/2, 1/2 + rho^2] and the tail trend decreases."""
    result = GaussianExperiment().run(RunContext(config=ConfigFile(), options={"rho": [0.2, 0.1], "cut": 8.0}))
    assert all(point["within_bound"] for point in result.summary["points"])
    assert result.summary["tail_decreasing"]
    assert result.summary["tail_limit"] > 0
    assert len(result.tables["gaussian_sums"].rows) == 2
    assert not result.notes


def test_iid_baseline_exact_run() -> None:
    """Verify the exact fair-bit walk gives Heyde and prefix tables without sampling."""
    result = IidBaselineExperiment().run(RunContext(config=small_iid_config(), options={"prefix_cut": 1.0}))
    assert result.summary["samples"] == 0
    assert result.summary["sigma2"] == pytest.approx(0.25)
    assert [row[0] for row in result.tables["series"].rows] == [0.45, 0.4]
    assert len(result.summary["prefix_coupling"]) == 2
    assert all(row[3] == 0.0 for row in result.tables["prefix"].rows)


def test_iid_baseline_replaces_map_source() -> None:
    """Verify a non-i.i.d. map falls back to the fair-bit walk."""
    config = small_iid_config()
    config = msgspec.structs.replace(
        config, experiment=msgspec.structs.replace(config.experiment, map_id="gauss", observable_id="log-derivative"),
    )
    result = IidBaselineExperiment().run(RunContext(config=config, options={"prefix_cut": 1.0}))
    assert result.summary["map_id"] == "iid:bernoulli"


def test_asymptotics_per_n_csv_header(tmp_path: Path) -> None:
    """Verify the per-n table is written with the lambda column names."""
    runner = ExperimentRunner(AsymptoticsExperiment(), small_iid_config(), {"levy_n": 0}, output_dir=tmp_path / "out")
    _, manifest = runner.run()
    assert "per_n.csv" in manifest.output_paths
    lines = (tmp_path / "out" / "per_n.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "eps,n,lambda_plus,lambda_minus,stderr_plus,stderr_minus"
    assert len(lines) > 1
