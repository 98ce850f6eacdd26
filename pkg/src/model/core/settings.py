"""Settings for every stage of the prompt optimization pipeline."""
from dataclasses import dataclass, field
from enum import Enum

from src.model.core.errors import ConfigError

# Reward loss weight of the full-scale recipe
FULL_SCALE_REFL_LAMBDA: float = 1e-3

# Plain SGD step sizes for the toy world, used by the defaults
SGD_PLM_LR: float = 0.3
SGD_PRETRAIN_LR: float = 0.1
SGD_REFL_LR: float = 0.01

# Desk preset: Adam with larger steps and a stronger reward, opted into with
# --set refl.optimizer=adam --set refl.lr=0.001 --set refl.lam=1.0
DESK_PLM_LR: float = 5e-3
DESK_REFL_LR: float = 1e-3
DESK_REFL_LAMBDA: float = 1.0


class ConfigId(Enum):
    """Pipeline configurations compared by the evaluation protocol, in report order."""

    BASE = "BASE"
    POAC = "POAC"
    POAC_REFL = "POAC_REFL"


def _require(condition: bool, key_path: str, message: str) -> None:
    if not condition:
        raise ConfigError(key_path, message)


@dataclass
class WorldConfig:
    """
    Synthetic embedding space standing in for the text and image encoders.

    :param dim: Dimension m of every token vector and image
    :param rho: Deviation of abstract concept vectors from their objects' direction
    :param gamma: Sharpness of the aesthetic scorer around the unit sphere
    :param render_noise: Standard deviation of rendering noise for pretraining images
    :param seed: Seed every token vector is derived from
    """

    dim: int = 16
    rho: float = 1.0
    gamma: float = 4.0
    render_noise: float = 0.05
    seed: int = 0

    def __post_init__(self) -> None:
        _require(self.dim >= 2, "world.dim", "must be at least 2")
        _require(self.rho >= 0.0, "world.rho", "must be non-negative")
        _require(self.gamma > 0.0, "world.gamma", "must be positive")
        _require(self.render_noise >= 0.0, "world.render_noise", "must be non-negative")


@dataclass
class LexiconConfig:
    """
    How prompt pairs are built from the concept lexicon.

    :param min_modifiers: Fewest modifiers appended to a target
    :param max_modifiers: Most modifiers appended to a target
    :param max_concepts: Use only the first n lexicon concepts (None for all)
    :param seed: Seed for modifier draws
    """

    min_modifiers: int = 1
    max_modifiers: int = 3
    max_concepts: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        _require(self.min_modifiers >= 0, "lexicon.min_modifiers", "must be non-negative")
        _require(
            self.max_modifiers >= self.min_modifiers,
            "lexicon.max_modifiers",
            "must be at least min_modifiers",
        )
        _require(
            self.max_concepts is None or self.max_concepts >= 1,
            "lexicon.max_concepts",
            "must be positive",
        )


@dataclass
class RemoteConfig:
    """
    Remote rewriter client.

    :param endpoint: HTTP endpoint; None runs offline with the deterministic oracle
    :param timeout: Seconds per request
    :param max_attempts: Attempts before giving up on a request
    :param backoff_base: Seconds slept after the first failure, doubled after each further one
    :param workers: Concepts rewritten concurrently
    """

    endpoint: str | None = None
    timeout: float = 10.0
    max_attempts: int = 3
    backoff_base: float = 0.5
    workers: int = 1

    def __post_init__(self) -> None:
        _require(self.timeout > 0.0, "remote.timeout", "must be positive")
        _require(self.max_attempts >= 1, "remote.max_attempts", "must be at least 1")
        _require(self.backoff_base >= 0.0, "remote.backoff_base", "must be non-negative")
        _require(self.workers >= 1, "remote.workers", "must be at least 1")


@dataclass
class PlmConfig:
    """
    Prompt language model shape and supervised fine-tuning schedule.

    :param d_model: Width of token representations
    :param n_layers: Number of attention blocks
    :param n_heads: Attention heads per block
    :param max_len: Longest formatted sequence
    :param lr: Learning rate
    :param batch_size: Prompt pairs per step
    :param epochs: Passes over the corpus
    :param optimizer: "sgd" or "adam"
    :param init_scale: Standard deviation of initial weights
    :param checkpoint_every: Epochs between in-memory checkpoints
    :param top_k: Sample among the k most likely tokens instead of greedy argmax (None for greedy)
    """

    d_model: int = 32
    n_layers: int = 2
    n_heads: int = 2
    max_len: int = 64
    lr: float = SGD_PLM_LR
    batch_size: int = 16
    epochs: int = 200
    optimizer: str = "sgd"
    init_scale: float = 0.1
    checkpoint_every: int = 10
    top_k: int | None = None

    def __post_init__(self) -> None:
        _require(self.d_model >= 1, "plm.d_model", "must be positive")
        _require(self.n_heads >= 1, "plm.n_heads", "must be positive")
        _require(self.d_model % self.n_heads == 0, "plm.d_model", "must be divisible by n_heads")
        _require(self.n_layers >= 0, "plm.n_layers", "must be non-negative")
        _require(self.max_len >= 3, "plm.max_len", "must fit BOS, SEP and EOS")
        _require(self.lr >= 0.0, "plm.lr", "must be non-negative")
        _require(self.batch_size >= 1, "plm.batch_size", "must be positive")
        _require(self.epochs >= 0, "plm.epochs", "must be non-negative")
        _require(self.checkpoint_every >= 1, "plm.checkpoint_every", "must be positive")
        _require(self.top_k is None or self.top_k >= 1, "plm.top_k", "must be positive")


@dataclass
class ScheduleConfig:
    """
    Linear noise schedule.

    :param steps: Number of diffusion steps T
    :param beta_start: First beta of the reference schedule
    :param beta_end: Last beta of the reference schedule
    :param reference_steps: Step count the beta range is quoted for; betas scale by reference_steps / steps
    """

    steps: int = 40
    beta_start: float = 1e-4
    beta_end: float = 0.02
    reference_steps: int = 1000

    def __post_init__(self) -> None:
        _require(self.steps >= 1, "schedule.steps", "must be positive")
        _require(0.0 < self.beta_start < self.beta_end, "schedule.beta_start", "must be in (0, beta_end)")
        _require(self.reference_steps >= 1, "schedule.reference_steps", "must be positive")


@dataclass
class EpsNetConfig:
    """
    Noise prediction network.

    :param hidden: Width of both hidden layers
    :param time_dim: Width of the sinusoidal step embedding
    :param seed: Initialization seed
    """

    hidden: int = 64
    time_dim: int = 8
    seed: int = 0

    def __post_init__(self) -> None:
        _require(self.hidden >= 1, "eps_net.hidden", "must be positive")
        _require(self.time_dim >= 2 and self.time_dim % 2 == 0, "eps_net.time_dim", "must be even")


@dataclass
class PretrainConfig:
    """
    Denoising pretraining of the diffusion model.

    :param steps: Optimizer steps
    :param batch_size: Images per step
    :param lr: Learning rate
    :param optimizer: "sgd" or "adam"
    :param log_every: Steps between logged loss means
    :param checkpoint_every: Steps between checkpoint files (0 disables)
    :param seed: Seed for batches, steps and noise
    """

    steps: int = 4000
    batch_size: int = 64
    lr: float = SGD_PRETRAIN_LR
    optimizer: str = "sgd"
    log_every: int = 200
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        _require(self.steps >= 0, "pretrain.steps", "must be non-negative")
        _require(self.batch_size >= 1, "pretrain.batch_size", "must be positive")
        _require(self.log_every >= 1, "pretrain.log_every", "must be positive")
        _require(self.checkpoint_every >= 0, "pretrain.checkpoint_every", "must be non-negative")


@dataclass
class RewardConfig:
    """
    Weighted relevance plus aesthetic reward.

    :param w_orig: Weight of relevance to the original prompt
    :param w_opt: Weight of relevance to the optimized prompt
    :param n_samples: Generations per expectation
    :param gamma: Aesthetic scorer sharpness
    :param seed: Seed for generations
    """

    w_orig: float = 0.3
    w_opt: float = 0.7
    n_samples: int = 8
    gamma: float = 4.0
    seed: int = 0

    def __post_init__(self) -> None:
        _require(abs(self.w_orig + self.w_opt - 1.0) < 1e-12, "reward.w_orig", "weights must sum to 1")
        _require(self.n_samples >= 1, "reward.n_samples", "must be at least 1")
        _require(self.gamma > 0.0, "reward.gamma", "must be positive")


@dataclass
class ReflConfig:
    """
    Reward feedback fine-tuning of the diffusion model.

    :param t1: Lowest step the reward is evaluated at
    :param t2: Highest step the reward is evaluated at
    :param lam: Weight of the reward loss
    :param phi: Map from reward to loss: "negate", "softplus" or "hinge"
    :param lr: Learning rate
    :param steps: Optimizer steps
    :param batch_size: Prompt pairs per step
    :param pretrain_batch: Rendered scenes in the pretraining-loss regularizer batch
    :param optimizer: "sgd" or "adam"
    :param log_every: Steps between logged curve points
    :param checkpoint_every: Steps between checkpoint files (0 disables)
    :param seed: Seed for pairs, steps and noise
    """

    t1: int = 1
    t2: int = 10
    lam: float = FULL_SCALE_REFL_LAMBDA
    phi: str = "negate"
    lr: float = SGD_REFL_LR
    steps: int = 400
    batch_size: int = 4
    pretrain_batch: int = 64
    optimizer: str = "sgd"
    log_every: int = 20
    checkpoint_every: int = 0
    seed: int = 0

    def __post_init__(self) -> None:
        _require(1 <= self.t1 <= self.t2, "refl.t1", "need 1 <= t1 <= t2")
        _require(self.lam >= 0.0, "refl.lam", "must be non-negative")
        _require(self.phi in ("negate", "softplus", "hinge"), "refl.phi", f"unknown map {self.phi!r}")
        _require(self.steps >= 0, "refl.steps", "must be non-negative")
        _require(self.batch_size >= 1, "refl.batch_size", "must be positive")
        _require(self.pretrain_batch >= 1, "refl.pretrain_batch", "must be positive")
        _require(self.log_every >= 1, "refl.log_every", "must be positive")
        _require(self.checkpoint_every >= 0, "refl.checkpoint_every", "must be non-negative")


@dataclass
class EvalConfig:
    """
    Quantitative comparison protocol.

    :param concepts: Concepts under test (None for every lexicon concept)
    :param n_samples: Generations per prompt
    :param seed: Seed shared by every configuration so samples are paired
    :param configurations: Configurations to score
    :param holdout: Evaluate only the last 20% of concepts
    """

    concepts: list[str] | None = None
    n_samples: int = 64
    seed: int = 0
    configurations: list[ConfigId] = field(default_factory=lambda: list(ConfigId))
    holdout: bool = False

    def __post_init__(self) -> None:
        self.configurations = [ConfigId(config) for config in self.configurations]
        _require(self.n_samples >= 1, "eval.n_samples", "must be at least 1")
        _require(
            len(set(self.configurations)) == len(self.configurations),
            "eval.configurations",
            "must be distinct",
        )
