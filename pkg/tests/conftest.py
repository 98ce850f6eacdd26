import numpy as np
import pytest

from src.model.core.prompt_representations import ConceptEntry, PromptPair
from src.model.core.settings import EpsNetConfig, PlmConfig, WorldConfig
from src.model.denoisers.eps_net import EpsNet
from src.model.diffusion.noise_schedule import NoiseSchedule
from src.model.lexicon.dataset import build_dataset
from src.model.lexicon.lexicon_io import load_lexicon, load_modifiers
from src.model.textworld.world_embedding import WorldEmbedding


@pytest.fixture(autouse=True)
def _no_seed_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("POAC_SEED", raising=False)


@pytest.fixture(scope="session")
def full_lexicon() -> list[ConceptEntry]:
    return load_lexicon()


@pytest.fixture(scope="session")
def modifiers() -> list[str]:
    return load_modifiers()


@pytest.fixture(scope="session")
def lexicon(full_lexicon: list[ConceptEntry]) -> list[ConceptEntry]:
    return full_lexicon[:4]


@pytest.fixture(scope="session")
def full_world(full_lexicon: list[ConceptEntry], modifiers: list[str]) -> WorldEmbedding:
    return WorldEmbedding.from_lexicon(full_lexicon, modifiers, WorldConfig())


@pytest.fixture(scope="session")
def world(lexicon: list[ConceptEntry], modifiers: list[str]) -> WorldEmbedding:
    return WorldEmbedding.from_lexicon(lexicon, modifiers, WorldConfig())


@pytest.fixture(scope="session")
def corpus(lexicon: list[ConceptEntry], modifiers: list[str]) -> list[PromptPair]:
    return build_dataset(lexicon, 0, modifiers).pairs


@pytest.fixture(scope="session")
def full_corpus(full_lexicon: list[ConceptEntry], modifiers: list[str]) -> list[PromptPair]:
    return build_dataset(full_lexicon, 0, modifiers).pairs


@pytest.fixture
def short_schedule() -> NoiseSchedule:
    return NoiseSchedule(np.linspace(0.05, 0.5, 8))


@pytest.fixture
def small_net(world: WorldEmbedding) -> EpsNet:
    return EpsNet(world.dim, EpsNetConfig(hidden=8, time_dim=4, seed=3))


@pytest.fixture
def tiny_plm_config() -> PlmConfig:
    return PlmConfig(d_model=8, n_layers=1, n_heads=2, max_len=32, epochs=2, batch_size=4)
