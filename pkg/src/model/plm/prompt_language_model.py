"""
Tiny decoder-only transformer that rewrites abstract prompts into concrete ones.

A batch of sequences is flattened into one [N, d] matrix; a block-diagonal causal mask keeps
each position attending only to earlier positions of its own sequence.
"""
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from src.model.core.autodiff import (
    Array,
    GradNode,
    add,
    concat,
    constant,
    gather,
    log_softmax,
    matmul,
    mul,
    parameter,
    reduce_sum,
    scale,
    silu,
    slice_last,
    softmax,
    transpose,
)
from src.model.core.errors import CheckpointError, LengthError, MaskError, ShapeError
from src.model.core.prompt_representations import BOS, EOS, SEP, PromptPair, Vocabulary
from src.model.core.settings import PlmConfig

MASKED_SCORE: float = -1e9


@dataclass(frozen=True)
class FormattedPair:
    """
    Training sequence "[BOS] source [SEP] target [EOS]" and which positions carry loss.

    :param tokens: Formatted tokens
    :param mask: 1 over target tokens and EOS, 0 over BOS, source and SEP
    """

    tokens: tuple[str, ...]
    mask: tuple[int, ...]

    def target(self) -> tuple[str, ...]:
        """
        Recover the target by stripping the mask-0 prefix and the trailing EOS.

        :return: Target tokens
        """
        return tuple(token for token, weight in zip(self.tokens, self.mask) if weight)[:-1]


def format_pair(pair: PromptPair, max_len: int | None = None) -> FormattedPair:
    """
    Lay a prompt pair out as "[BOS] source [SEP] target [EOS]".

    :param pair: Prompt pair (its target already ends with the modifiers)
    :param max_len: Longest allowed sequence; unchecked when omitted
    :raises LengthError: Formatted sequence is longer than max_len
    :return: Tokens and loss mask
    """
    tokens = (BOS, *pair.source, SEP, *pair.target, EOS)
    if max_len is not None and len(tokens) > max_len:
        raise LengthError(f"formatted pair has {len(tokens)} tokens, max length is {max_len}")
    mask = (0,) * (len(pair.source) + 2) + (1,) * (len(pair.target) + 1)
    return FormattedPair(tokens, mask)


def format_prefix(source: Sequence[str], max_len: int | None = None) -> tuple[str, ...]:
    """
    Lay a source prompt out as the decoding prefix "[BOS] source [SEP]".

    :param source: Source tokens
    :param max_len: Longest allowed sequence; unchecked when omitted
    :raises LengthError: Prefix is longer than max_len
    :return: Prefix tokens
    """
    prefix = (BOS, *source, SEP)
    if max_len is not None and len(prefix) > max_len:
        raise LengthError(f"prefix has {len(prefix)} tokens, max length is {max_len}")
    return prefix


def _block_causal_mask(lengths: Sequence[int]) -> Array:
    total = sum(lengths)
    mask = np.full((total, total), MASKED_SCORE)
    start = 0
    for length in lengths:
        block = np.triu(np.full((length, length), MASKED_SCORE), k=1)
        mask[start : start + length, start : start + length] = block
        start += length
    return mask


class PlmModel:
    """
    Decoder-only transformer over the prompt vocabulary.

    Attention blocks have residual connections and a SiLU MLP; there is no layer normalization.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        config: PlmConfig,
        seed: int = 0,
        state: Mapping[str, Array] | None = None,
    ) -> None:
        """
        Initialize every parameter from a seeded normal draw, or from a saved state.

        :param vocab: Token alphabet
        :param config: Model shape
        :param seed: Initialization seed
        :param state: Parameter arrays to start from instead (e.g. an external checkpoint)
        :raises CheckpointError: State is missing parameters or has mismatched shapes
        """
        self._vocab: Vocabulary = vocab
        self._config: PlmConfig = config
        rng = np.random.default_rng(seed)
        self._params: dict[str, GradNode] = {}
        for name, shape in self.param_shapes().items():
            if name.startswith("b"):
                initial = np.zeros(shape)
            else:
                initial = config.init_scale * rng.standard_normal(shape)
            self._params[name] = parameter(initial, name)
        if state is not None:
            self.load_state(state)

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        """
        Get the shape of every parameter, in initialization order.

        :return: Shapes by parameter name
        """
        d, v = self._config.d_model, len(self._vocab)
        shapes: dict[str, tuple[int, ...]] = {
            "tok_emb": (v, d),
            "pos_emb": (self._config.max_len, d),
        }
        for layer in range(self._config.n_layers):
            for weight in ("wq", "wk", "wv", "wo"):
                shapes[f"{weight}{layer}"] = (d, d)
            shapes[f"w1_{layer}"] = (d, 4 * d)
            shapes[f"b1_{layer}"] = (4 * d,)
            shapes[f"w2_{layer}"] = (4 * d, d)
            shapes[f"b2_{layer}"] = (d,)
        shapes["w_out"] = (d, v)
        shapes["b_out"] = (v,)
        return shapes

    @property
    def vocab(self) -> Vocabulary:
        """
        Get the token alphabet.

        :return: Vocabulary
        """
        return self._vocab

    @property
    def config(self) -> PlmConfig:
        """
        Get the model shape.

        :return: PLM config
        """
        return self._config

    @property
    def params(self) -> dict[str, GradNode]:
        """
        Get the trainable leaves.

        :return: Parameters by name
        """
        return self._params

    def state_dict(self) -> dict[str, Array]:
        """
        Copy every parameter value.

        :return: Arrays by parameter name
        """
        return {name: node.array.copy() for name, node in self._params.items()}

    def load_state(self, state: Mapping[str, Array]) -> None:
        """
        Overwrite every parameter value.

        :param state: Arrays by parameter name
        :raises CheckpointError: Missing, unexpected or mis-shaped parameters
        """
        missing = sorted(set(self._params) - set(state))
        unexpected = sorted(set(state) - set(self._params))
        if missing or unexpected:
            raise CheckpointError(f"PLM state mismatch: missing {missing}, unexpected {unexpected}")
        for name, node in self._params.items():
            array = np.asarray(state[name], dtype=np.float64)
            if array.shape != node.shape:
                raise CheckpointError(f"PLM parameter {name}: shape {array.shape}, expected {node.shape}")
            node.assign(array)

    def _attention(self, x: GradNode, layer: int, mask: GradNode) -> GradNode:
        p = self._params
        n_heads = self._config.n_heads
        head_dim = self._config.d_model // n_heads
        q = matmul(x, p[f"wq{layer}"])
        k = matmul(x, p[f"wk{layer}"])
        v = matmul(x, p[f"wv{layer}"])
        heads = []
        for h in range(n_heads):
            lo, hi = h * head_dim, (h + 1) * head_dim
            scores = scale(matmul(slice_last(q, lo, hi), transpose(slice_last(k, lo, hi))), 1.0 / math.sqrt(head_dim))
            weights = softmax(add(scores, mask))
            heads.append(matmul(weights, slice_last(v, lo, hi)))
        mixed = heads[0] if n_heads == 1 else concat(heads)
        return matmul(mixed, p[f"wo{layer}"])

    def _mlp(self, x: GradNode, layer: int) -> GradNode:
        p = self._params
        hidden = silu(add(matmul(x, p[f"w1_{layer}"]), p[f"b1_{layer}"]))
        return add(matmul(hidden, p[f"w2_{layer}"]), p[f"b2_{layer}"])

    def logits(self, sequences: Sequence[Sequence[int]]) -> GradNode:
        """
        Next-token logits at every position of every sequence.

        :param sequences: Token id sequences, each at most max_len long
        :raises ShapeError: No tokens at all
        :raises LengthError: A sequence is longer than max_len
        :return: Node of shape [total tokens, V], rows in sequence order
        """
        lengths = [len(sequence) for sequence in sequences]
        if sum(lengths) == 0:
            raise ShapeError("logits of an empty batch")
        if max(lengths) > self._config.max_len:
            raise LengthError(f"sequence of {max(lengths)} tokens, max length is {self._config.max_len}")
        ids = [int(token) for sequence in sequences for token in sequence]
        positions = [i for length in lengths for i in range(length)]
        x = add(gather(self._params["tok_emb"], ids), gather(self._params["pos_emb"], positions))
        mask = constant(_block_causal_mask([length for length in lengths if length]))
        for layer in range(self._config.n_layers):
            x = add(x, self._attention(x, layer, mask))
            x = add(x, self._mlp(x, layer))
        return add(matmul(x, self._params["w_out"]), self._params["b_out"])


def masked_cross_entropy(logits: GradNode, target_ids: Sequence[int], mask: Sequence[int]) -> GradNode:
    """
    Mean of -log p(target) over the positions whose mask is 1.

    :param logits: Node of shape [N, V]
    :param target_ids: Token expected at each of the N positions
    :param mask: Loss weight flag per position
    :raises ShapeError: Lengths don't match the logits
    :raises MaskError: Every mask entry is 0
    :return: Scalar node
    """
    n, v = logits.shape
    if len(target_ids) != n or len(mask) != n:
        raise ShapeError(f"{n} logit rows for {len(target_ids)} targets and {len(mask)} mask entries")
    count = sum(1 for weight in mask if weight)
    if count == 0:
        raise MaskError("no position in the batch carries loss")
    weights = np.zeros((n, v))
    for row, (target, weight) in enumerate(zip(target_ids, mask)):
        if weight:
            weights[row, int(target)] = 1.0 / count
    return scale(reduce_sum(mul(log_softmax(logits), constant(weights))), -1.0)


def sft_loss(model: PlmModel, batch: Sequence[FormattedPair]) -> GradNode:
    """
    Masked next-token cross-entropy of a batch of formatted pairs.

    Position j predicts token j + 1 and counts when token j + 1 lies in the target or is EOS.

    :param model: Prompt language model
    :param batch: Formatted pairs
    :raises MaskError: Empty batch, or no target position
    :return: Scalar node averaging over target positions
    """
    if not batch:
        raise MaskError("empty batch")
    inputs, targets, mask = [], [], []
    for formatted in batch:
        ids = model.vocab.encode(formatted.tokens)
        inputs.append(ids[:-1])
        targets.extend(ids[1:])
        mask.extend(formatted.mask[1:])
    return masked_cross_entropy(model.logits(inputs), targets, mask)
