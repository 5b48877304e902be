"""Utility functions shared by the experiments and the CLI."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import TYPE_CHECKING, Any, TypeVar

import msgspec
from jinja2 import Environment, FileSystemLoader, select_autoescape
from rich.logging import RichHandler

from src.exceptions import ConfigError
from src.models import ConfigFile

if TYPE_CHECKING:
    from collections.abc import Callable, Iterable, Sequence

    from rich.console import Console

CACHE_DIR_ENV = "BIRKHOFF_LAB_CACHE_DIR"
HASH_PREFIX_LENGTH = 12

T = TypeVar("T")
R = TypeVar("R")


def get_package_dir() -> Path:
    """Get the package directory.

    Returns:
        The path to the package directory.

    """
    return Path(__file__).parent


def get_template_env(template_dir: Path | None = None) -> Environment:
    """Create a Jinja2 environment for the report templates.

    Args:
        template_dir: Directory containing the templates, the packaged templates by default.

    Returns:
        A configured Jinja2 environment.

    """
    env = Environment(
        loader=FileSystemLoader(str(template_dir or get_package_dir() / "templates")),
        autoescape=select_autoescape(default=False),
        keep_trailing_newline=True,
        trim_blocks=True,
        lstrip_blocks=True,
    )
    env.filters["num"] = format_number
    return env


def render_template(env: Environment, template_name: str, context: dict) -> str:
    """Render a Jinja2 template with the given context.

    Args:
        env: The Jinja2 environment.
        template_name: The name of the template to render.
        context: The context dictionary to render the template with.

    Returns:
        The rendered template string.

    """
    template = env.get_template(template_name)
    return template.render(**context)


def write_file(path: Path, content: str) -> None:
    """Write content to a file, creating parent directories if needed."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")


def format_number(value: object) -> str:
    """Format a value for CSV and reports.

    Floats use the shortest representation that round-trips, so identical
    numbers always produce identical bytes.

    Args:
        value: The value to format.

    Returns:
        The formatted text.

    """
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(columns: Sequence[str], rows: Iterable[Sequence[object]]) -> str:
    """Render rows as CSV text with a header line.

    Returns:
        The CSV document.

    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_number(value) for value in row])
    return buffer.getvalue()


def canonical_bytes(value: object) -> bytes:
    """Encode a value as canonical JSON (sorted keys)."""
    return msgspec.json.encode(value, order="sorted")


def config_hash(config: object) -> str:
    """Return the SHA-256 hex digest of a config's canonical encoding."""
    return hashlib.sha256(canonical_bytes(config)).hexdigest()


def setup_logging(console: Console, *, verbose: bool = False) -> None:
    """Route library logging through a rich handler on the given console."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=console, show_path=False, rich_tracebacks=True)],
        force=True,
    )


def default_cache_dir() -> Path:
    """Return the cache directory, honoring the environment override."""
    override = os.environ.get(CACHE_DIR_ENV)
    if override:
        return Path(override).expanduser()
    return Path.home() / ".cache" / "birkhoff-lab"


def load_config(path: Path | None) -> ConfigFile:
    """Load and validate a TOML config file.

    Args:
        path: The config file, or None for the defaults.

    Returns:
        The validated configuration.

    Raises:
        ConfigError: If the file is missing or does not match the schema.

    """
    if path is None:
        return ConfigFile()
    try:
        raw = path.read_bytes()
    except OSError as exc:
        msg = f"cannot read config file {path}: {exc}"
        raise ConfigError(msg) from exc
    try:
        return msgspec.toml.decode(raw, type=ConfigFile)
    except (msgspec.ValidationError, msgspec.DecodeError) as exc:
        msg = f"invalid config file {path}: {exc}"
        raise ConfigError(msg) from exc


def apply_overrides(config: ConfigFile, overrides: dict[str, dict[str, Any]]) -> ConfigFile:
    """Override config keys and re-validate the result.

    Args:
        config: The loaded configuration.
        overrides: Values per top-level table, e.g. ``{"experiment": {"seed": 3}}``.

    Returns:
        The merged configuration.

    Raises:
        ConfigError: If the merged configuration is invalid.

    """
    merged = msgspec.to_builtins(config)
    for table, values in overrides.items():
        merged.setdefault(table, {}).update({key: value for key, value in values.items() if value is not None})
    try:
        return msgspec.convert(merged, type=ConfigFile)
    except msgspec.ValidationError as exc:
        msg = f"invalid configuration: {exc}"
        raise ConfigError(msg) from exc


def map_ordered(function: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Apply a function to every item, optionally in worker processes.

    Results always come back in item order, so any reduction over them is
    independent of the worker count.

    Args:
        function: A picklable top-level function.
        items: The work items.
        workers: Number of worker processes; 1 runs in the current process.

    Returns:
        The results in item order.

    """
    if workers <= 1 or len(items) <= 1:
        return [function(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as executor:
        return list(executor.map(function, items))
