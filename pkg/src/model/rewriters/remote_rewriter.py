"""Module for the HTTP rewriter client, with the template sent to a remote language model."""
import time
from typing import Any

import requests
from loguru import logger

from src.model.core.errors import RefusedRequestError, RejectedRewriteError, RetryableError
from src.model.core.prompt_representations import ConceptEntry, Provenance, Vocabulary, tokenize
from src.model.core.settings import RemoteConfig
from src.model.lexicon.pair_validation import target_violations
from src.model.rewriters.abstract_rewriter import AbstractRewriter, Rewrite
from src.model.rewriters.oracle_rewriter import oracle_rewrite

REWRITE_TEMPLATE: str = (
    "Please rewrite the [Abstract Concept] in the following sentence to a short sentence which includes "
    "a dedicated and concrete scene and also includes concrete objects about [Source Input]"
)


def fill_template(concept: str, source: str) -> str:
    """
    Fill the rewrite instruction.

    :param concept: Abstract concept
    :param source: Source prompt text
    :return: Instruction sent to the remote model
    """
    return REWRITE_TEMPLATE.replace("[Abstract Concept]", concept).replace("[Source Input]", source)


def _post_with_retries(config: RemoteConfig, payload: dict[str, str]) -> Any:
    assert config.endpoint is not None
    last_error: requests.exceptions.RequestException | None = None
    for attempt in range(config.max_attempts):
        try:
            response = requests.post(config.endpoint, json=payload, timeout=config.timeout)
            if 400 <= response.status_code < 500:
                raise RefusedRequestError(f"{config.endpoint} refused the request with HTTP {response.status_code}")
            response.raise_for_status()
            return response.json()
        except requests.exceptions.JSONDecodeError as err:
            raise RejectedRewriteError(f"response isn't JSON: {err}") from err
        except requests.exceptions.RequestException as err:
            last_error = err
            logger.warning(f"Rewrite request {attempt + 1}/{config.max_attempts} failed: {err}")
            if attempt + 1 < config.max_attempts:
                time.sleep(config.backoff_base * 2**attempt)
    raise RetryableError(f"{config.endpoint} unreachable after {config.max_attempts} attempts: {last_error}")


def remote_rewrite(
    client_config: RemoteConfig,
    entry: ConceptEntry,
    source_index: int,
    vocab: Vocabulary,
    scene_index: int = 0,
) -> str:
    """
    Ask a remote model to rewrite a source prompt, and validate the answer.

    Sends {"template", "concept", "source"} and expects {"target"}. Without an endpoint the
    deterministic oracle answers instead.

    :param client_config: Endpoint, timeout and retry settings
    :param entry: Concept entry
    :param source_index: Which source prompt to rewrite
    :param vocab: Vocabulary the answer must stay within
    :param scene_index: Scene the offline oracle fills
    :raises RetryableError: Every attempt failed to reach the endpoint or got a server error
    :raises RefusedRequestError: The endpoint answered with a 4xx status; no retry is made
    :raises RejectedRewriteError: Answer is malformed or breaks the target invariants
    :return: Target prompt text
    """
    if client_config.endpoint is None:
        return " ".join(oracle_rewrite(entry, source_index, scene_index))
    source = " ".join(entry.source_prompts[source_index])
    payload = {"template": fill_template(entry.concept, source), "concept": entry.concept, "source": source}
    answer = _post_with_retries(client_config, payload)
    target = answer.get("target") if isinstance(answer, dict) else None
    if not isinstance(target, str):
        raise RejectedRewriteError(f"response for {source!r} has no target string")
    tokens = tokenize(target)
    problems = target_violations(tokens, vocab)
    if problems:
        raise RejectedRewriteError(f"rewrite of {source!r} rejected: {'; '.join(problems)}")
    return " ".join(tokens)


class RemoteRewriter(AbstractRewriter):
    """Rewriter calling an HTTP endpoint, falling back to the oracle when none is configured."""

    def __init__(self, config: RemoteConfig, vocab: Vocabulary) -> None:
        """
        Hold client settings.

        :param config: Remote client settings
        :param vocab: Vocabulary answers must stay within
        """
        self._config: RemoteConfig = config
        self._vocab: Vocabulary = vocab

    @property
    def offline(self) -> bool:
        """
        Whether requests are answered by the oracle.

        :return: True without an endpoint
        """
        return self._config.endpoint is None

    def rewrite(self, entry: ConceptEntry, source_index: int, scene_index: int) -> Rewrite:
        """
        Rewrite through the endpoint, or with the oracle when offline or when the endpoint refuses the request.

        :param entry: Concept entry
        :param source_index: Source prompt index
        :param scene_index: Scene the oracle fills; the remote model picks its own scene
        :return: Rewrite, with remote provenance unless the oracle wrote it
        """
        try:
            text = remote_rewrite(self._config, entry, source_index, self._vocab, scene_index)
        except RefusedRequestError as err:
            logger.warning(f"Falling back to the oracle for {entry.concept} source {source_index}: {err}")
            return Rewrite(oracle_rewrite(entry, source_index, scene_index), Provenance.ORACLE)
        provenance = Provenance.ORACLE if self.offline else Provenance.REMOTE
        return Rewrite(tuple(text.split()), provenance)
