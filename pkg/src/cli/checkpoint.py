"""
Checkpoint files: a JSON header plus every parameter as a flat list of floats.

Floats are written with their shortest round-tripping repr, so loading restores parameters bitwise.
"""
import json
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from src.cli.artifacts import atomic_write_text
from src.model.core.autodiff import Array
from src.model.core.errors import CheckpointError

CHECKPOINT_FORMAT: str = "poac-ckpt"
CHECKPOINT_VERSION: int = 1


@dataclass
class Checkpoint:
    """
    Saved parameters of one model.

    :param module: Which model the parameters belong to ("plm" or "diffusion")
    :param seed: Master seed of the run that wrote it
    :param config_hash: Hash of the config blocks the model depends on
    :param params: Parameter arrays by name
    :param extra: Settings needed to rebuild the model
    """

    module: str
    seed: int
    config_hash: str
    params: dict[str, Array]
    extra: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> str:
        """
        Serialize, parameters sorted by name.

        :return: JSON text
        """
        payload = {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "module": self.module,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "extra": self.extra,
            "params": {
                name: {"shape": list(value.shape), "data": np.asarray(value, dtype=np.float64).ravel().tolist()}
                for name, value in sorted(self.params.items())
            },
        }
        return json.dumps(payload) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Checkpoint":
        """
        Parse and check the header.

        :param text: JSON text written by to_json
        :raises CheckpointError: Not a checkpoint, unknown version or malformed parameters
        :return: Checkpoint
        """
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as err:
            raise CheckpointError(f"not JSON: {err}") from err
        if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
            raise CheckpointError(f"not a {CHECKPOINT_FORMAT} file")
        if payload.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {payload.get('version')!r}")
        params = {}
        try:
            for name, record in payload["params"].items():
                shape = tuple(int(size) for size in record["shape"])
                params[name] = np.asarray(record["data"], dtype=np.float64).reshape(shape)
            return cls(
                module=str(payload["module"]),
                seed=int(payload["seed"]),
                config_hash=str(payload["config_hash"]),
                params=params,
                extra=dict(payload.get("extra", {})),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise CheckpointError(f"malformed checkpoint: {err}") from err


def save_checkpoint(
    path: Path,
    module: str,
    state: Mapping[str, Array],
    seed: int,
    config_hash: str,
    extra: Mapping[str, Any] | None = None,
) -> None:
    """
    Write a checkpoint atomically.

    :param path: Destination file
    :param module: Model name
    :param state: Parameter arrays
    :param seed: Master seed
    :param config_hash: Hash of the config blocks the model depends on
    :param extra: Settings needed to rebuild the model
    """
    checkpoint = Checkpoint(module, seed, config_hash, dict(state), dict(extra or {}))
    atomic_write_text(path, checkpoint.to_json())
    logger.info(f"Saved {module} checkpoint to {path}")


def load_checkpoint(path: Path, module: str, config_hash: str | None = None, force: bool = False) -> Checkpoint:
    """
    Read a checkpoint and check it belongs to the current config.

    :param path: Source file
    :param module: Model name the checkpoint must hold
    :param config_hash: Expected config hash (None skips the check)
    :param force: Only warn on a config hash mismatch
    :raises CheckpointError: Unreadable, wrong module or config hash mismatch
    :return: Checkpoint
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as err:
        raise CheckpointError(f"can't read {path}: {err}") from err
    checkpoint = Checkpoint.from_json(text)
    if checkpoint.module != module:
        raise CheckpointError(f"{path} holds a {checkpoint.module} model, expected {module}")
    if config_hash is not None and checkpoint.config_hash != config_hash:
        message = f"{path} was written under a different config"
        if not force:
            raise CheckpointError(f"{message}; rerun the stage or pass --force")
        logger.warning(f"{message}; loading anyway")
    return checkpoint
