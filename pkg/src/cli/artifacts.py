"""Atomic artifact writes and per-command run manifests."""
import hashlib
import json
import os
import tempfile
import time
from collections.abc import Iterable
from pathlib import Path
from typing import Any

from loguru import logger


def atomic_write_text(path: Path, text: str) -> None:
    """
    Write a file so readers never see a partial artifact.

    The text goes to a temporary file in the same directory, which then replaces the destination.

    :param path: Destination file
    :param text: Contents
    """
    path.parent.mkdir(parents=True, exist_ok=True)
    handle, temp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(handle, "w", encoding="utf-8", newline="") as temp_file:
            temp_file.write(text)
        os.replace(temp_name, path)
    except BaseException:
        Path(temp_name).unlink(missing_ok=True)
        raise


def atomic_write_json(path: Path, data: Any) -> None:
    """
    Write indented, key-sorted JSON atomically.

    :param path: Destination file
    :param data: JSON-ready value
    """
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def file_hash(path: Path) -> str:
    """
    Hash a file's bytes.

    :param path: File to hash
    :return: Hex sha256
    """
    digest = hashlib.sha256()
    with path.open("rb") as source:
        for chunk in iter(lambda: source.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest:
    """Records what one command read, what it wrote and how long it took."""

    def __init__(self, command: str, config_hash: str, seed: int) -> None:
        """
        Start the wall clock.

        :param command: CLI command name
        :param config_hash: Hash of the config blocks the command depends on
        :param seed: Master seed
        """
        self.command: str = command
        self.config_hash: str = config_hash
        self.seed: int = seed
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.extra: dict[str, Any] = {}
        self._start: float = time.monotonic()

    def add_inputs(self, paths: Iterable[Path]) -> None:
        """
        Hash input files that exist.

        :param paths: Files the command read
        """
        for path in paths:
            if path.is_file():
                self.inputs[str(path)] = file_hash(path)

    def add_outputs(self, paths: Iterable[Path]) -> None:
        """
        Remember artifacts the command wrote.

        :param paths: Files the command wrote
        """
        self.outputs.extend(str(path) for path in paths)

    def to_dict(self) -> dict[str, Any]:
        """
        Serialize with the elapsed wall time.

        :return: JSON-ready dictionary
        """
        return {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "input_hashes": dict(self.inputs),
            "outputs": list(self.outputs),
            "wall_time": time.monotonic() - self._start,
            "extra": dict(self.extra),
        }

    def write(self, directory: Path) -> Path:
        """
        Write the manifest as <command>.json.

        :param directory: Manifest directory
        :return: Path written
        """
        path = directory / f"{self.command}.json"
        atomic_write_json(path, self.to_dict())
        logger.debug(f"Wrote manifest {path}")
        return path
