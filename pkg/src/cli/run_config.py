"""
Run configuration: one JSON file holding a block per pipeline stage.

Precedence is file < POAC_SEED environment variable < command-line flags. The top-level seed is the
only seed knob; it is copied into every stage block.
"""
import hashlib
import json
import os
from collections.abc import Iterable, Mapping
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any

from src.model.core.errors import ConfigError
from src.model.core.settings import (
    EpsNetConfig,
    EvalConfig,
    LexiconConfig,
    PlmConfig,
    PretrainConfig,
    ReflConfig,
    RemoteConfig,
    RewardConfig,
    ScheduleConfig,
    WorldConfig,
)

SEED_ENV_VAR: str = "POAC_SEED"
DEFAULT_RUN_DIR: str = "runs"


@dataclass
class PathsConfig:
    """
    Where inputs are read from and artifacts written to.

    :param run_dir: Directory holding every artifact of a run
    :param lexicon: Lexicon JSON (None for the shipped lexicon)
    :param modifiers: Modifier pool JSON (None for the shipped pool)
    """

    run_dir: str = DEFAULT_RUN_DIR
    lexicon: str | None = None
    modifiers: str | None = None

    def __post_init__(self) -> None:
        for key in ("lexicon", "modifiers"):
            value = getattr(self, key)
            if value is not None and not Path(value).is_file():
                raise ConfigError(f"paths.{key}", f"no such file {value}")

    @property
    def root(self) -> Path:
        """Run directory."""
        return Path(self.run_dir)

    @property
    def corpus(self) -> Path:
        """Prompt pair corpus."""
        return self.root / "corpus.jsonl"

    @property
    def world(self) -> Path:
        """Serialized world embedding."""
        return self.root / "world.json"

    @property
    def plm_checkpoint(self) -> Path:
        """Fine-tuned prompt language model."""
        return self.root / "plm.ckpt.json"

    @property
    def diffusion_checkpoint(self) -> Path:
        """Pretrained denoiser."""
        return self.root / "diffusion.ckpt.json"

    @property
    def refl_checkpoint(self) -> Path:
        """Reward fine-tuned denoiser."""
        return self.root / "refl.ckpt.json"

    @property
    def reports(self) -> Path:
        """Curves, tables and evaluation reports."""
        return self.root / "reports"

    @property
    def manifests(self) -> Path:
        """One manifest per command."""
        return self.root / "manifests"


_BLOCKS: dict[str, type] = {
    "paths": PathsConfig,
    "world": WorldConfig,
    "lexicon": LexiconConfig,
    "remote": RemoteConfig,
    "plm": PlmConfig,
    "schedule": ScheduleConfig,
    "eps_net": EpsNetConfig,
    "pretrain": PretrainConfig,
    "reward": RewardConfig,
    "refl": ReflConfig,
    "eval": EvalConfig,
}


@dataclass
class RunConfig:
    """
    Every setting of a pipeline run.

    :param seed: Master seed, copied into every stage block
    """

    seed: int = 0
    paths: PathsConfig = field(default_factory=PathsConfig)
    world: WorldConfig = field(default_factory=WorldConfig)
    lexicon: LexiconConfig = field(default_factory=LexiconConfig)
    remote: RemoteConfig = field(default_factory=RemoteConfig)
    plm: PlmConfig = field(default_factory=PlmConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    eps_net: EpsNetConfig = field(default_factory=EpsNetConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    refl: ReflConfig = field(default_factory=ReflConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self) -> None:
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        for name in _BLOCKS:
            block = getattr(self, name)
            if any(f.name == "seed" for f in fields(block)) and block.seed != self.seed:
                setattr(self, name, replace(block, seed=self.seed))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "RunConfig":
        """
        Build a config, rejecting unknown keys and per-block seeds.

        :param data: Parsed JSON
        :raises ConfigError: Unknown key, wrongly typed value or failed validation, with its key path
        :return: Run config
        """
        unknown = sorted(set(data) - set(_BLOCKS) - {"seed"})
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        blocks = {}
        for name, block_type in _BLOCKS.items():
            raw = data.get(name, {})
            if not isinstance(raw, Mapping):
                raise ConfigError(name, "must be an object")
            blocks[name] = _build_block(name, block_type, raw)
        return cls(seed=_coerce("seed", data.get("seed", 0), 0), **blocks)

    @classmethod
    def load(cls, path: Path | None, overrides: Iterable[str] = (), seed: int | None = None) -> "RunConfig":
        """
        Read a config file and apply the environment seed, the given seed and --set overrides.

        :param path: JSON config file (None for defaults)
        :param overrides: "block.key=value" strings; values parse as JSON, else as plain strings
        :param seed: Seed flag, winning over the file and the environment
        :raises ConfigError: Unreadable file or any invalid setting
        :return: Run config
        """
        data: dict[str, Any] = {}
        if path is not None:
            try:
                data = json.loads(path.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as err:
                raise ConfigError("config", f"can't read {path}: {err}") from err
            if not isinstance(data, dict):
                raise ConfigError("config", "must be a JSON object")
        env_seed = os.environ.get(SEED_ENV_VAR)
        if env_seed is not None:
            try:
                data["seed"] = int(env_seed)
            except ValueError:
                raise ConfigError("seed", f"{SEED_ENV_VAR}={env_seed!r} isn't an integer") from None
        for override in overrides:
            _apply_override(data, override)
        if seed is not None:
            data["seed"] = seed
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        """
        Serialize with enums as their values.

        :return: JSON-ready dictionary
        """
        out: dict[str, Any] = {"seed": self.seed}
        for name in _BLOCKS:
            block = asdict(getattr(self, name))
            block.pop("seed", None)
            out[name] = block
        out["eval"]["configurations"] = [c.value for c in self.eval.configurations]
        return out

    def block_hash(self, *names: str) -> str:
        """
        Hash the seed and the named blocks.

        :param names: Block names the artifact depends on
        :return: Hex sha256 of their canonical JSON
        """
        everything = self.to_dict()
        chosen = {"seed": self.seed, **{name: everything[name] for name in names}}
        return hashlib.sha256(json.dumps(chosen, sort_keys=True).encode("utf-8")).hexdigest()


def _coerce(key_path: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(key_path, f"expected a boolean, got {value!r}")
    elif isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(key_path, f"expected an integer, got {value!r}")
    elif isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, int | float):
            raise ConfigError(key_path, f"expected a number, got {value!r}")
        return float(value)
    elif isinstance(default, str) and not isinstance(value, str):
        raise ConfigError(key_path, f"expected a string, got {value!r}")
    return value


def _build_block(name: str, block_type: type, raw: Mapping[str, Any]) -> Any:
    assert is_dataclass(block_type)
    defaults = block_type()
    known = {f.name for f in fields(block_type)}
    for key in raw:
        if key == "seed" and "seed" in known:
            raise ConfigError(f"{name}.seed", "set the top-level seed instead")
        if key not in known:
            raise ConfigError(f"{name}.{key}", "unknown key")
    values = {key: _coerce(f"{name}.{key}", value, getattr(defaults, key)) for key, value in raw.items()}
    try:
        return block_type(**values)
    except (TypeError, ValueError) as err:
        raise ConfigError(name, str(err)) from err


def _apply_override(data: dict[str, Any], override: str) -> None:
    key_path, sep, text = override.partition("=")
    if not sep or not key_path:
        raise ConfigError(override, "override must look like block.key=value")
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = key_path.split(".")
    if len(parts) == 1:
        data[parts[0]] = value
        return
    if len(parts) != 2:
        raise ConfigError(key_path, "overrides reach one level into a block")
    block = data.setdefault(parts[0], {})
    if not isinstance(block, dict):
        raise ConfigError(parts[0], "must be an object")
    block[parts[1]] = value
