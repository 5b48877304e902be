"""On-disk cache of experiment results keyed by subcommand and config hash."""

from __future__ import annotations

import hashlib
import logging
from typing import TYPE_CHECKING, TypeVar

import msgspec

from src.exceptions import CacheCorruptionError
from src.utils import write_file

if TYPE_CHECKING:
    from pathlib import Path

logger = logging.getLogger(__name__)

T = TypeVar("T")


class CacheEnvelope(msgspec.Struct, frozen=True, forbid_unknown_fields=True):
    """A cached payload with the checksum of its encoded bytes."""

    key: str
    tool_version: str
    checksum: str
    payload: msgspec.Raw


class ResultCache:
    """JSON files named after their key, one per cached result."""

    def __init__(self, directory: Path, tool_version: str) -> None:
        """Initialize the cache.

        Args:
            directory: Where entries are stored; created on first write.
            tool_version: Entries written by other versions are ignored.

        """
        self.directory = directory
        self.tool_version = tool_version

    def path(self, key: str) -> Path:
        """Return the file that holds the entry for a key."""
        return self.directory / f"{key}.json"

    def load(self, key: str, type: type[T]) -> T | None:  # noqa: A002
        """Read an entry back.

        Args:
            key: The entry key.
            type: The type the payload decodes into.

        Returns:
            The cached value, or None when there is no entry for this version.

        Raises:
            CacheCorruptionError: If the entry exists but is unreadable or fails its checksum.

        """
        path = self.path(key)
        if not path.exists():
            return None
        try:
            envelope = msgspec.json.decode(path.read_bytes(), type=CacheEnvelope)
        except (OSError, msgspec.DecodeError, msgspec.ValidationError) as exc:
            msg = f"cache entry {path} is unreadable: {exc}"
            raise CacheCorruptionError(msg) from exc
        if envelope.key != key:
            msg = f"cache entry {path} belongs to key {envelope.key}"
            raise CacheCorruptionError(msg)
        if hashlib.sha256(bytes(envelope.payload)).hexdigest() != envelope.checksum:
            msg = f"cache entry {path} fails its checksum"
            raise CacheCorruptionError(msg)
        if envelope.tool_version != self.tool_version:
            logger.debug("ignoring cache entry %s written by version %s", key, envelope.tool_version)
            return None
        try:
            value = msgspec.json.decode(envelope.payload, type=type)
        except msgspec.ValidationError as exc:
            msg = f"cache entry {path} does not match the result schema: {exc}"
            raise CacheCorruptionError(msg) from exc
        logger.debug("cache hit for %s", key)
        return value

    def store(self, key: str, value: object) -> Path:
        """Write an entry, replacing any previous one.

        Returns:
            The path of the entry.

        """
        payload = msgspec.json.encode(value, order="sorted")
        envelope = CacheEnvelope(
            key=key,
            tool_version=self.tool_version,
            checksum=hashlib.sha256(payload).hexdigest(),
            payload=msgspec.Raw(payload),
        )
        path = self.path(key)
        write_file(path, msgspec.json.encode(envelope).decode())
        return path
