import argparse
import json
from pathlib import Path

import pytest
from pytest_mock import MockerFixture

from src import __version__
from src.cli import ask_subcommand, build_parser, main, positive_int
from src.experiment import discover_experiments
from src.utils import CACHE_DIR_ENV

GAUSSIAN_ARGS = ["gaussian", "--rho", "0.2", "--cut", "8"]


@pytest.fixture(autouse=True)
def isolated_cache(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Keep every CLI run away from the user's cache."""
    cache_dir = tmp_path / "cache"
    monkeypatch.setenv(CACHE_DIR_ENV, str(cache_dir))
    return cache_dir


def test_positive_int() -> None:
    """Verify the argparse type accepts positive integers only."""
    assert positive_int("3") == 3
    for text in ("0", "-2", "two"):
        with pytest.raises(argparse.ArgumentTypeError):
            positive_int(text)


def test_parser_has_one_subcommand_per_experiment() -> None:
    """Verify global flags are accepted after every subcommand."""
    experiments = discover_experiments()
    parser = build_parser(experiments)
    for experiment in experiments:
        args = parser.parse_args([experiment.id, "--workers", "2", "--no-cache"])
        assert args.subcommand == experiment.id
        assert args.workers == 2
        assert args.no_cache


def test_version(capsys: pytest.CaptureFixture[str]) -> None:
    """Verify --version prints the tool version."""
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_run_writes_summary(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Verify a run writes its artifacts and echoes the summary to stdout."""
    output = tmp_path / "out"
    main([*GAUSSIAN_ARGS, "--output", str(output), "--no-cache"])
    printed = json.loads(capsys.readouterr().out)
    assert printed["subcommand"] == "gaussian"
    assert printed["tail_decreasing"]
    for name in ("summary.json", "gaussian_sums.csv", "report.md", "manifest.json"):
        assert (output / name).exists()


def test_second_run_uses_cache(tmp_path: Path, capsys: pytest.CaptureFixture[str], isolated_cache: Path) -> None:
    """Verify a repeated run is served from the cache with the same summary numbers."""
    main([*GAUSSIAN_ARGS, "--output", str(tmp_path / "first")])
    first = json.loads(capsys.readouterr().out)
    main([*GAUSSIAN_ARGS, "--output", str(tmp_path / "second")])
    captured = capsys.readouterr()
    second = json.loads(captured.out)
    assert "gaussian (cache)" in captured.err
    assert any(isolated_cache.iterdir())
    assert first["points"] == second["points"]
    assert first["config_hash"] == second["config_hash"]


def test_cf_prints_json_lines(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Verify cf prints one JSON record per digit and convergent."""
    main(["cf", "--input", "2/5", "--output", str(tmp_path / "out"), "--no-cache"])
    lines = capsys.readouterr().out.splitlines()
    assert [json.loads(line) for line in lines] == [
        {"index": 1, "digit": 2, "p": "1", "q": "2"},
        {"index": 2, "digit": 2, "p": "2", "q": "5"},
    ]


def test_domain_error_exit_code(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    """Verify library errors are printed and mapped to their exit code."""
    with pytest.raises(SystemExit) as info:
        main(["cf", "--input", "1.5", "--output", str(tmp_path / "out"), "--no-cache"])
    assert info.value.code == 2
    assert "✗" in capsys.readouterr().err


def test_bad_config_file_exit_code(tmp_path: Path) -> None:
    """Verify a missing config file is a config error."""
    with pytest.raises(SystemExit) as info:
        main([*GAUSSIAN_ARGS, "--config", str(tmp_path / "missing.toml"), "--no-cache"])
    assert info.value.code == 2


def test_invalid_workers_is_usage_error() -> None:
    """Verify argparse rejects a zero worker count."""
    with pytest.raises(SystemExit) as info:
        main([*GAUSSIAN_ARGS, "--workers", "0"])
    assert info.value.code == 2


def test_no_arguments_without_terminal(mocker: MockerFixture) -> None:
    """Verify a bare invocation outside a terminal prints usage and exits 2."""
    mocker.patch("src.cli.sys.stdin.isatty", return_value=False)
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 2


def test_interactive_cancel(mocker: MockerFixture) -> None:
    """Verify cancelling the experiment prompt exits cleanly."""
    mocker.patch("src.cli.sys.stdin.isatty", return_value=True)
    mocker.patch("src.cli.questionary.select").return_value.ask.return_value = None
    with pytest.raises(SystemExit) as info:
        main([])
    assert info.value.code == 0


def test_ask_subcommand_with_config(mocker: MockerFixture) -> None:
    """Verify the answers become equivalent command-line arguments."""
    mocker.patch("src.cli.questionary.select").return_value.ask.return_value = "pressure"
    mocker.patch("src.cli.questionary.path").return_value.ask.return_value = "lab.toml"
    assert ask_subcommand(discover_experiments()) == ["pressure", "--config", "lab.toml"]


def test_ask_subcommand_without_config(mocker: MockerFixture) -> None:
    """Verify an empty config answer means the defaults."""
    mocker.patch("src.cli.questionary.select").return_value.ask.return_value = "cf"
    mocker.patch("src.cli.questionary.path").return_value.ask.return_value = "  "
    assert ask_subcommand(discover_experiments()) == ["cf"]


def test_interactive_run(mocker: MockerFixture, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    """Verify the prompted subcommand is run like the typed one."""
    monkeypatch.chdir(tmp_path)
    mocker.patch("src.cli.sys.stdin.isatty", return_value=True)
    mocker.patch("src.cli.ask_subcommand", return_value=["cf", "--input", "2/5"])
    main([])
    runs = list((tmp_path / "runs").iterdir())
    assert len(runs) == 1
    assert runs[0].name.startswith("cf-")
    summary = json.loads((runs[0] / "summary.json").read_text(encoding="utf-8"))
    assert summary["digits"] == [2, 2]
