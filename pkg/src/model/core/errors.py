"""Exceptions raised throughout the prompt optimizer toolbox."""


class PoacError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(PoacError):
    """Operand shapes don't conform to the rule of a primitive."""


class DomainError(PoacError):
    """Input lies outside the domain of a primitive (log of non-positive, zero-norm normalize)."""


class NumericError(PoacError):
    """A value or gradient became NaN or infinite."""


class VocabError(PoacError):
    """Token missing from the vocabulary, or a token claimed by two partitions."""


class EmptyPromptError(PoacError):
    """Prompt has no tokens left once special tokens are dropped."""


class EmptySceneError(PoacError):
    """Rendering was asked for an empty set of objects."""


class DegenerateSceneError(PoacError):
    """Object signatures cancel out and the scene has no direction."""


class LexiconError(PoacError):
    """Lexicon file violates a concept entry invariant."""


class TemplateError(PoacError):
    """Scene template slots and scene objects don't line up."""


class PoolError(PoacError):
    """Modifier pool can't satisfy the requested draw."""


class RetryableError(PoacError):
    """Remote rewriter was unreachable after every allowed attempt."""


class RejectedRewriteError(PoacError):
    """Remote rewriter answered with a target that breaks prompt pair invariants."""


class RefusedRequestError(PoacError):
    """Remote rewriter refused the request itself (HTTP 4xx); retrying won't help."""


class LengthError(PoacError):
    """Formatted sequence is longer than the model's max length."""


class MaskError(PoacError):
    """No position in the batch carries loss weight."""


class StepError(PoacError):
    """Diffusion step outside the schedule."""


class CheckpointError(PoacError):
    """Checkpoint missing, malformed, or incompatible with the current config."""


class ProtocolError(PoacError):
    """Evaluation rows don't form a valid comparison."""


class ConfigError(PoacError):
    """Run configuration failed validation."""

    def __init__(self, key_path: str, message: str) -> None:
        """
        Attach the dotted key path of the offending setting.

        :param key_path: Dotted path to the offending key (e.g. "plm.d_model")
        :param message: What is wrong with it
        """
        super().__init__(f"{key_path}: {message}")
        self.key_path: str = key_path


class DependencyError(PoacError):
    """A pipeline stage was run before the stage that produces its inputs."""

    def __init__(self, prerequisite: str, missing: str) -> None:
        """
        Name the command that has to run first.

        :param prerequisite: CLI command producing the missing artifact
        :param missing: Path or description of the missing artifact
        """
        super().__init__(f"missing {missing}; run `{prerequisite}` first")
        self.prerequisite: str = prerequisite


class TruncationWarning(UserWarning):
    """Greedy decoding hit max length before emitting EOS."""
