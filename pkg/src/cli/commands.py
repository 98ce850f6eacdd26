"""
One function per CLI command. Each reads artifacts of earlier stages from the run directory,
writes its own artifacts atomically and records a manifest.
"""
import csv
import io
import json
from argparse import Namespace
from dataclasses import asdict
from pathlib import Path

import numpy as np
from loguru import logger

from src.cli.artifacts import RunManifest, atomic_write_json, atomic_write_text
from src.cli.checkpoint import load_checkpoint, save_checkpoint
from src.cli.run_config import RunConfig
from src.model.core.errors import DependencyError
from src.model.core.prompt_representations import ConceptEntry, PromptPair, tokenize
from src.model.core.settings import ConfigId, EpsNetConfig, PlmConfig
from src.model.denoisers.abstract_denoiser import AbstractDenoiser
from src.model.denoisers.eps_net import EpsNet
from src.model.diffusion.noise_schedule import NoiseSchedule
from src.model.diffusion.pretrainer import pretrain
from src.model.evaluation.evaluator import compare_table, evaluate, report_json, rows_to_csv, split_holdout
from src.model.generators.abstract_image_generator import AbstractImageGenerator
from src.model.generators.diffusion_image_generator import DiffusionImageGenerator
from src.model.lexicon.dataset import build_dataset, corpus_to_jsonl, read_corpus
from src.model.lexicon.lexicon_io import load_lexicon, load_modifiers
from src.model.plm.decoding import rewrite
from src.model.plm.prompt_language_model import PlmModel
from src.model.plm.sft_trainer import sft_train
from src.model.refl.refl_trainer import curve_to_csv, refl_finetune
from src.model.reward.reward_function import RewardFunction, sample_seeds
from src.model.rewriters.abstract_rewriter import AbstractRewriter
from src.model.rewriters.oracle_rewriter import OracleRewriter
from src.model.rewriters.remote_rewriter import RemoteRewriter
from src.model.textworld.world_embedding import WorldEmbedding, aes_score, clip_score, embed_text

PLM_MODULE: str = "plm"
DIFFUSION_MODULE: str = "diffusion"

# Config blocks each artifact depends on
DATA_BLOCKS: tuple[str, ...] = ("world", "lexicon")
PLM_BLOCKS: tuple[str, ...] = (*DATA_BLOCKS, "plm")
DIFFUSION_BLOCKS: tuple[str, ...] = (*DATA_BLOCKS, "schedule", "eps_net", "pretrain")
REFL_BLOCKS: tuple[str, ...] = (*DIFFUSION_BLOCKS, "reward", "refl")

EXIT_OK: int = 0
EXIT_VERDICT_FAILED: int = 1


def _require(path: Path, prerequisite: str) -> Path:
    if not path.is_file():
        raise DependencyError(prerequisite, str(path))
    return path


def _lexicon(config: RunConfig) -> list[ConceptEntry]:
    path = Path(config.paths.lexicon) if config.paths.lexicon else None
    return load_lexicon(path, config.lexicon.max_concepts)


def _modifiers(config: RunConfig) -> list[str]:
    return load_modifiers(Path(config.paths.modifiers) if config.paths.modifiers else None)


def _world(config: RunConfig) -> WorldEmbedding:
    return WorldEmbedding.load(_require(config.paths.world, "build-data"), config.world)


def _corpus(config: RunConfig) -> list[PromptPair]:
    return read_corpus(_require(config.paths.corpus, "build-data"))


def _losses_csv(column: str, values: list[float]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["index", column])
    for index, value in enumerate(values, start=1):
        writer.writerow([index, repr(value)])
    return buffer.getvalue()


def _save_plm(config: RunConfig, model: PlmModel, path: Path) -> None:
    save_checkpoint(
        path,
        PLM_MODULE,
        model.state_dict(),
        config.seed,
        config.block_hash(*PLM_BLOCKS),
        {"plm": asdict(model.config)},
    )


def _load_plm(config: RunConfig, world: WorldEmbedding, force: bool) -> PlmModel:
    path = _require(config.paths.plm_checkpoint, "train-plm")
    checkpoint = load_checkpoint(path, PLM_MODULE, config.block_hash(*PLM_BLOCKS), force)
    plm_config = PlmConfig(**checkpoint.extra["plm"]) if "plm" in checkpoint.extra else config.plm
    return PlmModel(world.vocab, plm_config, config.seed, checkpoint.params)


def _save_denoiser(config: RunConfig, net: EpsNet, path: Path, blocks: tuple[str, ...]) -> None:
    save_checkpoint(
        path,
        DIFFUSION_MODULE,
        net.state_dict(),
        config.seed,
        config.block_hash(*blocks),
        {"dim": net.dim, "eps_net": asdict(net.config)},
    )


def _load_denoiser(config: RunConfig, path: Path, blocks: tuple[str, ...], force: bool) -> EpsNet:
    checkpoint = load_checkpoint(path, DIFFUSION_MODULE, config.block_hash(*blocks), force)
    net_config = EpsNetConfig(**checkpoint.extra["eps_net"]) if "eps_net" in checkpoint.extra else config.eps_net
    net = EpsNet(int(checkpoint.extra.get("dim", config.world.dim)), net_config)
    net.load_state(checkpoint.params)
    return net


def build_data(config: RunConfig, options: Namespace) -> int:
    """
    Build the world and the prompt pair corpus from the lexicon.

    :param config: Run config
    :param options: Parsed command-line options
    :return: Exit code
    """
    manifest = RunManifest("build-data", config.block_hash(*DATA_BLOCKS), config.seed)
    entries = _lexicon(config)
    modifiers = _modifiers(config)
    world = WorldEmbedding.from_lexicon(entries, modifiers, config.world)
    training = split_holdout(entries)[0] if config.eval.holdout else entries
    if len(training) < len(entries):
        logger.info(f"Holding out {len(entries) - len(training)} concepts from the corpus")
    rewriter: AbstractRewriter = (
        RemoteRewriter(config.remote, world.vocab) if config.remote.endpoint else OracleRewriter()
    )
    dataset = build_dataset(
        training, config.lexicon.seed, modifiers, config.lexicon, rewriter, workers=config.remote.workers
    )

    config.paths.root.mkdir(parents=True, exist_ok=True)
    atomic_write_json(config.paths.world, world.to_dict())
    atomic_write_text(config.paths.corpus, corpus_to_jsonl(dataset.pairs))
    summary_path = config.paths.reports / "dataset.json"
    atomic_write_json(summary_path, dataset.summary())
    manifest.add_outputs([config.paths.world, config.paths.corpus, summary_path])
    manifest.extra.update({"pairs": len(dataset.pairs), "rejected": len(dataset.rejected)})
    manifest.write(config.paths.manifests)
    logger.info(f"Wrote {len(dataset.pairs)} pairs to {config.paths.corpus}")
    return EXIT_OK


def train_plm(config: RunConfig, options: Namespace) -> int:
    """
    Fine-tune the prompt language model on the corpus.

    :param config: Run config
    :param options: Parsed command-line options (init_from, progress, force)
    :return: Exit code
    """
    world = _world(config)
    corpus = _corpus(config)
    manifest = RunManifest("train-plm", config.block_hash(*PLM_BLOCKS), config.seed)
    manifest.add_inputs([config.paths.world, config.paths.corpus])
    state = None
    if options.init_from is not None:
        # External weights only need matching names and shapes
        state = load_checkpoint(Path(options.init_from), PLM_MODULE).params
        manifest.add_inputs([Path(options.init_from)])
    model = PlmModel(world.vocab, config.plm, config.seed, state)
    path = config.paths.plm_checkpoint
    result = sft_train(
        model,
        corpus,
        config.plm,
        config.seed,
        on_checkpoint=lambda epoch, trained: _save_plm(config, trained, path),
        progress=options.progress,
    )
    _save_plm(config, model, path)
    curve_path = config.paths.reports / "sft_loss.csv"
    atomic_write_text(curve_path, _losses_csv("loss", result.losses))
    manifest.add_outputs([path, curve_path])
    manifest.extra["final_loss"] = result.losses[-1] if result.losses else None
    manifest.write(config.paths.manifests)
    return EXIT_OK


def pretrain_diffusion(config: RunConfig, options: Namespace) -> int:
    """
    Pretrain the denoiser on rendered scenes of the corpus targets.

    :param config: Run config
    :param options: Parsed command-line options (progress)
    :return: Exit code
    """
    world = _world(config)
    corpus = _corpus(config)
    manifest = RunManifest("pretrain-diffusion", config.block_hash(*DIFFUSION_BLOCKS), config.seed)
    manifest.add_inputs([config.paths.world, config.paths.corpus])
    schedule = NoiseSchedule.from_config(config.schedule)
    net = EpsNet(world.dim, config.eps_net)
    path = config.paths.diffusion_checkpoint

    def on_checkpoint(step: int, trained: AbstractDenoiser) -> None:
        _save_denoiser(config, net, path, DIFFUSION_BLOCKS)

    result = pretrain(net, schedule, corpus, world, config.pretrain, on_checkpoint, options.progress)
    _save_denoiser(config, net, path, DIFFUSION_BLOCKS)
    curve_path = config.paths.reports / "pretrain_loss.csv"
    atomic_write_text(curve_path, _losses_csv("loss", result.losses))
    manifest.add_outputs([path, curve_path])
    manifest.write(config.paths.manifests)
    return EXIT_OK


def refl_finetune_command(config: RunConfig, options: Namespace) -> int:
    """
    Fine-tune the pretrained denoiser on reward feedback.

    :param config: Run config
    :param options: Parsed command-line options (progress, force)
    :return: Exit code
    """
    world = _world(config)
    corpus = _corpus(config)
    source = _require(config.paths.diffusion_checkpoint, "pretrain-diffusion")
    manifest = RunManifest("refl-finetune", config.block_hash(*REFL_BLOCKS), config.seed)
    manifest.add_inputs([config.paths.world, config.paths.corpus, source])
    net = _load_denoiser(config, source, DIFFUSION_BLOCKS, options.force)
    schedule = NoiseSchedule.from_config(config.schedule)
    reward = RewardFunction.for_world(world, config.reward)
    path = config.paths.refl_checkpoint

    def on_checkpoint(step: int, trained: AbstractDenoiser) -> None:
        _save_denoiser(config, net, path, REFL_BLOCKS)

    result = refl_finetune(net, schedule, corpus, world, reward, config.refl, on_checkpoint, options.progress)
    _save_denoiser(config, net, path, REFL_BLOCKS)
    curve_path = config.paths.reports / "refl_curve.csv"
    atomic_write_text(curve_path, curve_to_csv(result.curve))
    manifest.add_outputs([path, curve_path])
    manifest.extra["failed_steps"] = result.failures
    manifest.write(config.paths.manifests)
    return EXIT_OK


def optimize_prompt(config: RunConfig, options: Namespace) -> int:
    """
    Rewrite one prompt with the fine-tuned prompt language model and print it.

    :param config: Run config
    :param options: Parsed command-line options (text, top_k, force)
    :return: Exit code
    """
    world = _world(config)
    model = _load_plm(config, world, options.force)
    top_k = options.top_k if options.top_k is not None else config.plm.top_k
    result = rewrite(model, tokenize(options.text), top_k=top_k, seed=config.seed)
    print(result.text)
    return EXIT_OK


def generate(config: RunConfig, options: Namespace) -> int:
    """
    Sample images for one prompt and report their scores.

    :param config: Run config
    :param options: Parsed command-line options (prompt, n, refl, out, force)
    :return: Exit code
    """
    world = _world(config)
    if options.refl:
        path, blocks = _require(config.paths.refl_checkpoint, "refl-finetune"), REFL_BLOCKS
    else:
        path, blocks = _require(config.paths.diffusion_checkpoint, "pretrain-diffusion"), DIFFUSION_BLOCKS
    net = _load_denoiser(config, path, blocks, options.force)
    generator = DiffusionImageGenerator(net, NoiseSchedule.from_config(config.schedule), world)
    prompt = tokenize(options.prompt)
    images = generator.generate(prompt, sample_seeds(config.seed, options.n))
    text_emb = embed_text(prompt, world)
    clip = [clip_score(text_emb, image) for image in images]
    aes = [aes_score(image, config.reward.gamma) for image in images]
    logger.info(f"{options.n} images: clip={np.mean(clip):.4f} aes={np.mean(aes):.4f}")
    record = {"prompt": prompt, "images": images.tolist(), "clip": clip, "aes": aes}
    if options.out is not None:
        atomic_write_json(Path(options.out), record)
    else:
        print(json.dumps({"prompt": prompt, "clip": float(np.mean(clip)), "aes": float(np.mean(aes))}))
    return EXIT_OK


def evaluate_command(config: RunConfig, options: Namespace) -> int:
    """
    Score the configured pipeline configurations and judge their ordering.

    :param config: Run config
    :param options: Parsed command-line options (force)
    :return: 0 when the verdict passes or no verdict applies, 1 when it fails
    """
    world = _world(config)
    wanted = set(config.eval.configurations)
    schedule = NoiseSchedule.from_config(config.schedule)
    generators: dict[ConfigId, AbstractImageGenerator | None] = {}
    inputs = [config.paths.world]
    if wanted:
        source = _require(config.paths.diffusion_checkpoint, "pretrain-diffusion")
        pretrained = DiffusionImageGenerator(
            _load_denoiser(config, source, DIFFUSION_BLOCKS, options.force), schedule, world
        )
        generators[ConfigId.BASE] = generators[ConfigId.POAC] = pretrained
        inputs.append(source)
    plm = None
    if wanted & {ConfigId.POAC, ConfigId.POAC_REFL}:
        plm = _load_plm(config, world, options.force)
        inputs.append(config.paths.plm_checkpoint)
    if ConfigId.POAC_REFL in wanted:
        source = _require(config.paths.refl_checkpoint, "refl-finetune")
        generators[ConfigId.POAC_REFL] = DiffusionImageGenerator(
            _load_denoiser(config, source, REFL_BLOCKS, options.force), schedule, world
        )
        inputs.append(source)

    manifest = RunManifest("evaluate", config.block_hash(*REFL_BLOCKS, "eval"), config.seed)
    manifest.add_inputs(inputs)
    reward = RewardFunction.for_world(world, config.reward)
    rows = evaluate(plm, generators, _lexicon(config), reward, config.eval)
    csv_path = config.paths.reports / "eval.csv"
    exit_code = EXIT_OK
    if wanted == set(ConfigId):
        table, outcome = compare_table(rows)
        json_path = config.paths.reports / "eval.json"
        atomic_write_json(json_path, report_json(rows))
        manifest.add_outputs([json_path])
        manifest.extra["verdict"] = str(outcome)
        print(table, end="")
        print(outcome)
        exit_code = EXIT_OK if outcome.passed else EXIT_VERDICT_FAILED
    else:
        table = rows_to_csv(rows)
        print(table, end="")
    atomic_write_text(csv_path, table)
    manifest.add_outputs([csv_path])
    manifest.write(config.paths.manifests)
    return exit_code
