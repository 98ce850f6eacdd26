"""Module for supervised fine-tuning of the prompt language model on prompt pairs."""
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from tqdm import tqdm

from src.model.core.autodiff import Array, backward
from src.model.core.errors import MaskError, NumericError
from src.model.core.prompt_representations import PromptPair
from src.model.core.settings import PlmConfig
from src.model.optimizers.optimizer_factory import make_optimizer
from src.model.plm.prompt_language_model import PlmModel, format_pair, sft_loss

CheckpointHook = Callable[[int, PlmModel], None]


@dataclass
class SftResult:
    """
    Outcome of fine-tuning.

    :param model: Trained model (the instance passed in, updated in place)
    :param losses: Mean batch loss of each epoch
    :param checkpoint_epochs: Epochs after which a checkpoint was taken
    """

    model: PlmModel
    losses: list[float] = field(default_factory=list)
    checkpoint_epochs: list[int] = field(default_factory=list)


def canonical_order(corpus: Sequence[PromptPair]) -> list[PromptPair]:
    """
    Sort a corpus so training doesn't depend on the order pairs arrive in.

    :param corpus: Prompt pairs
    :return: Pairs sorted by (concept, source, target, modifiers)
    """
    return sorted(corpus, key=lambda pair: (pair.concept, pair.source, pair.target, pair.modifiers))


def sft_train(
    model: PlmModel,
    corpus: Sequence[PromptPair],
    config: PlmConfig,
    seed: int,
    on_checkpoint: CheckpointHook | None = None,
    progress: bool = False,
) -> SftResult:
    """
    Fine-tune by maximizing the log-likelihood of targets given sources.

    Each epoch visits the canonically ordered corpus in a permutation drawn from (seed, epoch).

    :param model: Model to train in place
    :param corpus: Prompt pairs
    :param config: Learning rate, batch size, epochs, optimizer and checkpoint interval
    :param seed: Shuffle seed
    :param on_checkpoint: Called with (epoch, model) at every checkpoint
    :param progress: Show a progress bar
    :raises LengthError: A pair doesn't fit max length
    :raises MaskError: Empty corpus
    :raises NumericError: Loss or gradients became non-finite; the model is rolled back to the last checkpoint
    :return: Trained model and per-epoch loss curve
    """
    formatted = [format_pair(pair, config.max_len) for pair in canonical_order(corpus)]
    if config.epochs and not formatted:
        raise MaskError("empty corpus")
    optimizer = make_optimizer(config.optimizer, model.params, config.lr)
    result = SftResult(model)
    last_good: dict[str, Array] = model.state_dict()
    last_good_epoch = 0

    epochs = tqdm(range(config.epochs), desc="sft", disable=not progress)
    for epoch in epochs:
        order = np.random.default_rng([seed, epoch]).permutation(len(formatted))
        batch_losses = []
        try:
            for start in range(0, len(order), config.batch_size):
                batch = [formatted[int(i)] for i in order[start : start + config.batch_size]]
                loss = sft_loss(model, batch)
                backward(loss)
                optimizer.step()
                batch_losses.append(loss.item())
        except NumericError as err:
            model.load_state(last_good)
            logger.error(f"SFT diverged in epoch {epoch}; restored the checkpoint of epoch {last_good_epoch}")
            raise NumericError(f"non-finite SFT loss in epoch {epoch}: {err}") from err
        mean_loss = float(np.mean(batch_losses)) if batch_losses else float("nan")
        result.losses.append(mean_loss)
        logger.info(f"SFT epoch {epoch}: loss={mean_loss:.6f}")
        if (epoch + 1) % config.checkpoint_every == 0 or epoch + 1 == config.epochs:
            last_good = model.state_dict()
            last_good_epoch = epoch + 1
            result.checkpoint_epochs.append(epoch + 1)
            if on_checkpoint is not None:
                on_checkpoint(epoch + 1, model)
    return result
