"""Training loop, checkpointing, evaluation, prediction, and ablation sweeps.

Everything here is deterministic under a fixed seed on a single worker:
batch order comes from a seeded generator, the model uses no dropout, and
evaluation is pure.  Model selection tracks the best dev Arg-C F1 across
epochs, keeping the earliest epoch on ties.
"""

from __future__ import annotations

import math
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import torch

from .copy_head import CopyConfig
from .data import EventInstance, SplitSpec, split_proportion
from .errors import DataMissing
from .metrics import ScoreReport, gold_prediction, prediction_from_assignment, score
from .model import ModelConfig
from .pipeline import Batch, ExtractionModel, Featurizer, Vocab, resolve_amr_tokens
from .prefix import AMREncoderSpec, AmrTokenizer
from .prompts import Ontology, RoleAssignment, decode_output
from .amr import parse_penman

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class RunConfig:
    """Everything one training run needs besides the data itself.

    The defaults mirror the reference full-scale recipe (lr 1e-5, l=40,
    lambda=1, 60 epochs, batch 4); desk-scale runs override nearly all of
    them, see ``desk_profile``.
    """

    model: ModelConfig
    copy: CopyConfig = CopyConfig()
    amr_spec: AMREncoderSpec = AMREncoderSpec()
    prefix_len: int = 40
    learning_rate: float = 1e-5
    epochs: int = 60
    batch_size: int = 4
    seed: int = 0
    split: SplitSpec = SplitSpec(1.0, 0)
    max_decode_len: int = 48
    clip_norm: float = 1.0
    dataset_path: Optional[str] = None
    ontology_path: Optional[str] = None
    cache_dir: Optional[str] = None
    output_dir: Optional[str] = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def desk_profile(
    vocab_size: int,
    amr_mode: str = "prefix",
    copy_mode: str = "adjusted",
    frozen: bool = False,
    seed: int = 0,
    epochs: int = 60,
    proportion: float = 1.0,
) -> RunConfig:
    """Small-model profile sized for CPU-minutes, not GPU-days."""
    return RunConfig(
        model=ModelConfig(
            d_model=64, n_heads=8, n_enc_layers=3, n_dec_layers=3,
            vocab_size=vocab_size, max_len=256, amr_mode=amr_mode,
        ),
        copy=CopyConfig(mode=copy_mode),
        amr_spec=AMREncoderSpec(
            output_dim=64 if amr_mode == "encoding_concat" else 32, frozen=frozen
        ),
        prefix_len=8,
        learning_rate=5e-4,
        epochs=epochs,
        batch_size=8,
        seed=seed,
        split=SplitSpec(proportion, seed),
    )


@dataclass
class Checkpoint:
    """Self-describing training artifact; reload reproduces outputs bitwise."""

    config: RunConfig
    state_dict: dict
    vocab: dict
    amr_tokenizer: Optional[dict]
    epoch: int
    best_dev_arg_c: float
    version: int = CHECKPOINT_VERSION

    def save(self, path) -> None:
        torch.save(
            {
                "version": self.version,
                "config": self.config,
                "state_dict": self.state_dict,
                "vocab": self.vocab,
                "amr_tokenizer": self.amr_tokenizer,
                "epoch": self.epoch,
                "best_dev_arg_c": self.best_dev_arg_c,
            },
            path,
        )

    @classmethod
    def load(cls, path) -> "Checkpoint":
        try:
            payload = torch.load(path, weights_only=False)
        except FileNotFoundError:
            raise DataMissing(f"no checkpoint at {path}") from None
        if payload.get("version") != CHECKPOINT_VERSION:
            raise ValueError(
                f"checkpoint version {payload.get('version')!r} unsupported "
                f"(expected {CHECKPOINT_VERSION})"
            )
        return cls(
            config=payload["config"],
            state_dict=payload["state_dict"],
            vocab=payload["vocab"],
            amr_tokenizer=payload["amr_tokenizer"],
            epoch=payload["epoch"],
            best_dev_arg_c=payload["best_dev_arg_c"],
        )

    def build(self) -> tuple[ExtractionModel, Vocab]:
        vocab = Vocab.from_dict(self.vocab)
        tokenizer = (
            AmrTokenizer.from_dict(self.amr_tokenizer) if self.amr_tokenizer else None
        )
        model = ExtractionModel(
            self.config.model,
            self.config.copy,
            tokenizer,
            self.config.amr_spec if tokenizer else None,
            prefix_len=self.config.prefix_len,
        )
        model.load_state_dict(self.state_dict)
        model.eval()
        return model, vocab


def build_assets(
    config: RunConfig, instances: Sequence, ontology: Ontology, cache=None
) -> tuple[Vocab, Optional[AmrTokenizer]]:
    """Vocabulary and AMR tokenizer over the full corpus.

    Word inventories stand in for a pretrained subword vocabulary, so they
    are built over all instances (not just the training split): a subword
    model would likewise cover held-out argument strings.
    """
    amr_seqs: list[list[str]] = []
    tokenizer = None
    if config.model.amr_mode != "none":
        amr_seqs = resolve_amr_tokens(instances, cache)
    vocab = Vocab.build(instances, ontology, amr_seqs=amr_seqs)
    if config.model.amr_mode in ("prefix", "encoding_concat"):
        graphs = [parse_penman(inst.amr) if inst.amr else
                  parse_penman(cache.get(inst.doc_id)) for inst in instances]
        tokenizer = AmrTokenizer.from_graphs(graphs, config.amr_spec.variant)
    return vocab, tokenizer


def _batches(
    featurizer: Featurizer,
    instances: Sequence,
    batch_size: int,
    generator: Optional[torch.Generator] = None,
) -> Iterable[Batch]:
    order = list(range(len(instances)))
    if generator is not None:
        order = torch.randperm(len(instances), generator=generator).tolist()
    for i in range(0, len(order), batch_size):
        chunk = [instances[j] for j in order[i : i + batch_size]]
        yield featurizer.collate([featurizer.features(inst) for inst in chunk])


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    loss_history: list[float] = field(default_factory=list)
    dev_history: list[float] = field(default_factory=list)
    seconds: float = 0.0


def train(
    config: RunConfig,
    train_instances: Sequence,
    dev_instances: Sequence,
    ontology: Ontology,
    vocab: Optional[Vocab] = None,
    amr_tokenizer: Optional[AmrTokenizer] = None,
    cache=None,
) -> TrainResult:
    """Train one model; returns the best-dev checkpoint and loss history.

    The training split is drawn from ``train_instances`` per
    ``config.split``; dev is used as-is for per-epoch Arg-C selection.
    Raises :class:`DataMissing` on an empty training set and
    :class:`AMRCacheMiss` (from featurization) listing any passage whose
    graph is unavailable in an AMR-consuming mode.
    """
    started = time.monotonic()
    if not train_instances:
        raise DataMissing("training set is empty")
    if vocab is None or (
        amr_tokenizer is None and config.model.amr_mode in ("prefix", "encoding_concat")
    ):
        built_vocab, built_tok = build_assets(
            config, [*train_instances, *dev_instances], ontology, cache
        )
        vocab = vocab or built_vocab
        amr_tokenizer = amr_tokenizer or built_tok
    if config.model.vocab_size != len(vocab):
        config = replace(config, model=replace(config.model, vocab_size=len(vocab)))

    subset = split_proportion(list(train_instances), config.split)

    torch.manual_seed(config.seed)
    model = ExtractionModel(
        config.model,
        config.copy,
        amr_tokenizer,
        config.amr_spec if config.model.amr_mode in ("prefix", "encoding_concat") else None,
        prefix_len=config.prefix_len,
    )
    featurizer = Featurizer(vocab, ontology, config.model, config.copy, cache)
    if config.model.amr_mode != "none":
        # surface every unparsed passage at once, before any gradient step
        resolve_amr_tokens([*subset, *dev_instances], cache)

    trainable = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(trainable, lr=config.learning_rate)
    shuffler = torch.Generator().manual_seed(config.seed)

    def snapshot(epoch: int, best: float) -> Checkpoint:
        return Checkpoint(
            config=config,
            state_dict={k: v.clone() for k, v in model.state_dict().items()},
            vocab=vocab.to_dict(),
            amr_tokenizer=amr_tokenizer.to_dict() if amr_tokenizer else None,
            epoch=epoch,
            best_dev_arg_c=best,
        )

    best = snapshot(0, -1.0)
    losses: list[float] = []
    dev_curve: list[float] = []
    for epoch in range(1, config.epochs + 1):
        model.train()
        total, steps = 0.0, 0
        for batch in _batches(featurizer, subset, config.batch_size, shuffler):
            opt.zero_grad()
            loss = model.losses(batch).mean()
            loss.backward()
            if config.clip_norm:
                torch.nn.utils.clip_grad_norm_(trainable, config.clip_norm)
            opt.step()
            total += float(loss.detach())
            steps += 1
        losses.append(total / max(steps, 1))

        model.eval()
        if dev_instances:
            report = evaluate_model(model, featurizer, dev_instances, vocab,
                                    config.max_decode_len, config.batch_size)
            dev_f1 = report.arg_c[2]
        else:
            dev_f1 = -math.inf
        dev_curve.append(dev_f1)
        if dev_f1 > best.best_dev_arg_c:
            best = snapshot(epoch, dev_f1)

    if config.epochs == 0 or not dev_instances:
        best = snapshot(config.epochs, best.best_dev_arg_c)
    return TrainResult(best, losses, dev_curve, time.monotonic() - started)


def evaluate_model(
    model: ExtractionModel,
    featurizer: Featurizer,
    instances: Sequence,
    vocab: Vocab,
    max_decode_len: int = 48,
    batch_size: int = 16,
) -> ScoreReport:
    """Greedy decode, template-invert, span-match, and score a split."""
    model.eval()
    predictions = []
    gold = []
    for i in range(0, len(instances), batch_size):
        chunk = instances[i : i + batch_size]
        batch = featurizer.batch(chunk)
        decoded = model.greedy_decode(batch, vocab, max_len=max_decode_len)
        for inst, ids in zip(chunk, decoded):
            template = featurizer.ontology.get(inst.event_type)
            assignment = decode_output(template, vocab.text(ids))
            predictions.append(prediction_from_assignment(inst, assignment))
            gold.append(gold_prediction(inst))
    return score(predictions, gold)


def evaluate(checkpoint: Checkpoint, instances: Sequence, ontology: Ontology,
             cache=None) -> ScoreReport:
    model, vocab = checkpoint.build()
    featurizer = Featurizer(
        vocab, ontology, checkpoint.config.model, checkpoint.config.copy, cache
    )
    return evaluate_model(
        model, featurizer, instances, vocab,
        checkpoint.config.max_decode_len, checkpoint.config.batch_size,
    )


def predict(
    checkpoint: Checkpoint,
    passage: str,
    trigger: str,
    event_type: str,
    ontology: Ontology,
    amr: Optional[str] = None,
    cache=None,
) -> tuple[RoleAssignment, str]:
    """Single-passage inference; returns (assignment, raw generated text).

    The trigger is located by first exact token match.  An empty passage or
    an absent trigger cannot anchor an instance, so the assignment comes
    back empty and degraded without running the model.
    """
    template = ontology.get(event_type)
    tokens = passage.split()
    trig = trigger.split()
    start = next(
        (i for i in range(len(tokens) - len(trig) + 1)
         if tokens[i : i + len(trig)] == trig),
        None,
    ) if trig else None
    if start is None:
        return RoleAssignment.empty(template, degraded=True), ""
    instance = EventInstance(
        doc_id="query",
        tokens=tuple(tokens),
        trigger=(start, start + len(trig), event_type),
        arguments=(),
        amr=amr,
    )
    model, vocab = checkpoint.build()
    featurizer = Featurizer(
        vocab, ontology, checkpoint.config.model, checkpoint.config.copy, cache
    )
    batch = featurizer.batch([instance])
    ids = model.greedy_decode(batch, vocab, checkpoint.config.max_decode_len)[0]
    text = vocab.text(ids)
    return decode_output(template, text), text


AMR_MODES_GRID = ("prefix", "amr_prompt_concat", "encoding_concat", "none")
COPY_MODES_GRID = ("adjusted", "plain", "pure", "off")


@dataclass
class AblationRow:
    amr_mode: str
    copy_mode: str
    frozen: bool
    arg_i_mean: float
    arg_i_std: float
    arg_c_mean: float
    arg_c_std: float
    seeds: tuple[int, ...]


def ablate(
    base: RunConfig,
    train_instances: Sequence,
    dev_instances: Sequence,
    ontology: Ontology,
    seeds: Sequence[int] = (0,),
    amr_modes: Sequence[str] = AMR_MODES_GRID,
    copy_modes: Sequence[str] = COPY_MODES_GRID,
    frozen_options: Sequence[bool] = (False, True),
    cache=None,
) -> list[AblationRow]:
    """Sweep the amr-mode x copy-mode x frozen grid, averaging over seeds."""
    rows = []
    for amr_mode in amr_modes:
        for copy_mode in copy_modes:
            for frozen in frozen_options:
                arg_i, arg_c = [], []
                for seed in seeds:
                    cfg = replace(
                        base,
                        model=replace(base.model, amr_mode=amr_mode,
                                      injection_sites=None),
                        copy=replace(base.copy, mode=copy_mode),
                        amr_spec=replace(
                            base.amr_spec,
                            frozen=frozen,
                            output_dim=base.model.d_model
                            if amr_mode == "encoding_concat"
                            else base.amr_spec.output_dim,
                        ),
                        seed=seed,
                        split=SplitSpec(base.split.proportion, seed),
                    )
                    result = train(cfg, train_instances, dev_instances, ontology,
                                   cache=cache)
                    report = evaluate(result.checkpoint, dev_instances, ontology,
                                      cache=cache)
                    arg_i.append(report.arg_i[2])
                    arg_c.append(report.arg_c[2])
                rows.append(AblationRow(
                    amr_mode, copy_mode, frozen,
                    statistics.mean(arg_i),
                    statistics.stdev(arg_i) if len(arg_i) > 1 else 0.0,
                    statistics.mean(arg_c),
                    statistics.stdev(arg_c) if len(arg_c) > 1 else 0.0,
                    tuple(seeds),
                ))
    return rows


def format_ablation(rows: Sequence[AblationRow]) -> str:
    """Render ablation rows as one aligned comparison table."""
    header = f"{'amr_mode':<18} {'copy':<9} {'frozen':<7} {'Arg-I F1':>13} {'Arg-C F1':>13}"
    lines = [header, "-" * len(header)]
    for r in rows:
        arg_i = f"{r.arg_i_mean:.3f} ±{r.arg_i_std:.3f}"
        arg_c = f"{r.arg_c_mean:.3f} ±{r.arg_c_std:.3f}"
        lines.append(
            f"{r.amr_mode:<18} {r.copy_mode:<9} {str(r.frozen):<7} "
            f"{arg_i:>13} {arg_c:>13}"
        )
    return "\n".join(lines)
