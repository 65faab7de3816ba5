"""Featurization and the fully composed extraction model.

Glue between the standalone pieces: a word-level vocabulary covering
prompts and targets, per-instance feature construction (prompt ids,
shifted target ids, copy masks, linearized AMR), batching, and a module
that chains prefix generation, the transformer, the generation gate, and
the copy mixture into per-step output distributions, training losses,
and greedy decoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import torch
from torch import Tensor, nn

from .amr import linearize, parse_penman
from .copy_head import CopyConfig, GenerationGate, copy_distribution, mix, sequence_losses
from .errors import AMRCacheMiss, ConfigMismatch
from .model import ForwardOutput, ModelConfig, PrefixTransformer
from .prompts import (
    SEPARATOR,
    MULTI_FILLER_JOIN,
    TRIGGER_SLOT,
    EventTemplate,
    Ontology,
    RoleAssignment,
    build_prompt,
    fill_template,
)
from .prefix import AMREncoderSpec, AmrTokenizer, PrefixGenerator


class Vocab:
    """Word-level vocabulary with a fixed block of special tokens.

    Plain whitespace tokens stand in for the subword vocabulary a full-size
    system would use; everything else about the pipeline is agnostic to that
    choice.  The separator used by prompt assembly is itself a special, so
    prompts encode without leaking it into the unknown bucket.
    """

    SPECIALS = ("<pad>", "<bos>", "<eos>", "<unk>", SEPARATOR)

    def __init__(self, words: Iterable[str]):
        extra = sorted(set(words) - set(self.SPECIALS))
        self._tokens = [*self.SPECIALS, *extra]
        self._ids = {t: i for i, t in enumerate(self._tokens)}
        self.pad_id, self.bos_id, self.eos_id, self.unk_id, self.sep_id = range(5)

    @classmethod
    def build(
        cls,
        instances: Sequence,
        ontology: Ontology,
        amr_seqs: Iterable[Sequence[str]] = (),
        extra: Iterable[str] = (),
    ) -> "Vocab":
        """Collect every token the model may read or must be able to write.

        Prompts cover passages, descriptions, and templates; targets are
        filled templates, so passage + template tokens cover them too.  The
        multi-filler join word is always included because targets may need
        it even when no training passage happens to contain it.
        """
        words: set[str] = set()
        for inst in instances:
            words.update(build_prompt(inst, ontology))
        for template in ontology:
            words.update(template.template_text.split())
            words.update(template.description.replace(TRIGGER_SLOT, "").split())
        for seq in amr_seqs:
            words.update(seq)
        words.update(extra)
        words.add(MULTI_FILLER_JOIN.strip())
        return cls(words)

    def __len__(self) -> int:
        return len(self._tokens)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        return [self._ids.get(t, self.unk_id) for t in tokens]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self._tokens[i] for i in ids]

    def text(self, ids: Iterable[int]) -> str:
        """Ids to a display string: stop at <eos>, skip other specials."""
        words = []
        for i in ids:
            if i == self.eos_id:
                break
            if i in (self.pad_id, self.bos_id):
                continue
            words.append(self._tokens[i])
        return " ".join(words)

    def to_dict(self) -> dict:
        return {"tokens": list(self._tokens[len(self.SPECIALS):])}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(d["tokens"])


def gold_assignment(instance, template: EventTemplate) -> RoleAssignment:
    """Gold role assignment with fillers in passage order."""
    fillers: dict[str, list[str]] = {role: [] for role in template.roles}
    for s, e, role in instance.arguments:
        fillers[role].append(" ".join(instance.tokens[s:e]))
    return RoleAssignment.for_template(template, fillers)


def resolve_amr_tokens(instances: Sequence, cache=None) -> list[list[str]]:
    """Linearized AMR tokens per instance, embedded graph first, cache second.

    Raises :class:`AMRCacheMiss` naming every passage that has neither, so a
    failed featurization reports the full precompute worklist at once.
    """
    seqs: list[list[str]] = []
    missing: list[str] = []
    for inst in instances:
        penman = inst.amr
        if penman is None and cache is not None:
            penman = cache.get(inst.doc_id)
        if penman is None:
            missing.append(inst.doc_id)
        else:
            seqs.append(list(linearize(parse_penman(penman))))
    if missing:
        raise AMRCacheMiss(missing)
    return seqs


@dataclass
class Features:
    """One instance, model-ready but not yet padded."""

    src_tokens: list[str]
    src_ids: list[int]
    tgt_ids: list[int]
    copy_span: tuple[int, int]
    amr_tokens: Optional[list[str]]


@dataclass
class Batch:
    src_ids: Tensor    # (B, S) long
    src_mask: Tensor   # (B, S) bool, True on real tokens
    tgt_in: Tensor     # (B, T) long, <bos> + target
    tgt_out: Tensor    # (B, T) long, target + <eos>
    tgt_mask: Tensor   # (B, T) bool, True on real steps
    copy_mask: Tensor  # (B, S) float, 1 on copyable source positions
    amr_seqs: Optional[list[list[str]]]

    def __len__(self) -> int:
        return self.src_ids.shape[0]


class Featurizer:
    """Turns event instances into :class:`Features` under one configuration."""

    def __init__(
        self,
        vocab: Vocab,
        ontology: Ontology,
        model_config: ModelConfig,
        copy_config: CopyConfig,
        cache=None,
    ):
        self.vocab = vocab
        self.ontology = ontology
        self.amr_mode = model_config.amr_mode
        self.copy_span = copy_config.copy_span
        self.cache = cache

    def features(self, instance) -> Features:
        template = self.ontology.get(instance.event_type)
        src_tokens = build_prompt(instance, self.ontology)
        amr_tokens: Optional[list[str]] = None
        if self.amr_mode != "none":
            amr_tokens = resolve_amr_tokens([instance], self.cache)[0]
        if self.amr_mode == "amr_prompt_concat":
            # the graph rides along inside the input sequence itself
            src_tokens = [*src_tokens, SEPARATOR, *amr_tokens]
            amr_tokens = None
        # the source ends with the end token so sequence termination is
        # itself copyable; without it a pure-copy model could never stop
        src_tokens = [*src_tokens, self.vocab.SPECIALS[2]]
        target = fill_template(template, gold_assignment(instance, template))
        if self.copy_span == "passage":
            span = (0, len(instance.tokens))
        else:
            span = (0, len(src_tokens))
        return Features(
            src_tokens=src_tokens,
            src_ids=self.vocab.encode(src_tokens),
            tgt_ids=self.vocab.encode(target.split()),
            copy_span=span,
            amr_tokens=amr_tokens,
        )

    def collate(self, feats: Sequence[Features]) -> Batch:
        if not feats:
            raise ValueError("cannot collate an empty feature list")
        v = self.vocab
        s_max = max(len(f.src_ids) for f in feats)
        t_max = max(len(f.tgt_ids) for f in feats) + 1  # +1 for <bos>/<eos>
        n = len(feats)
        src = torch.full((n, s_max), v.pad_id, dtype=torch.long)
        src_mask = torch.zeros(n, s_max, dtype=torch.bool)
        copy_mask = torch.zeros(n, s_max)
        tgt_in = torch.full((n, t_max), v.pad_id, dtype=torch.long)
        tgt_out = torch.full((n, t_max), v.pad_id, dtype=torch.long)
        tgt_mask = torch.zeros(n, t_max, dtype=torch.bool)
        for i, f in enumerate(feats):
            src[i, : len(f.src_ids)] = torch.tensor(f.src_ids)
            src_mask[i, : len(f.src_ids)] = True
            a, b = f.copy_span
            copy_mask[i, a : min(b, len(f.src_ids))] = 1.0
            steps = len(f.tgt_ids) + 1
            tgt_in[i, :steps] = torch.tensor([v.bos_id, *f.tgt_ids])
            tgt_out[i, :steps] = torch.tensor([*f.tgt_ids, v.eos_id])
            tgt_mask[i, :steps] = True
        amr_seqs = None
        if any(f.amr_tokens is not None for f in feats):
            amr_seqs = [list(f.amr_tokens or ()) for f in feats]
        return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask, copy_mask, amr_seqs)

    def batch(self, instances: Sequence) -> Batch:
        return self.collate([self.features(inst) for inst in instances])


class ExtractionModel(nn.Module):
    """Transformer, AMR prefix generator, and copy gate, trained end to end."""

    def __init__(
        self,
        model_config: ModelConfig,
        copy_config: CopyConfig,
        amr_tokenizer: Optional[AmrTokenizer] = None,
        encoder_spec: Optional[AMREncoderSpec] = None,
        prefix_len: int = 40,
    ):
        super().__init__()
        mode = model_config.amr_mode
        needs_encoder = mode in ("prefix", "encoding_concat")
        if needs_encoder and (amr_tokenizer is None or encoder_spec is None):
            raise ConfigMismatch(
                f"amr_mode={mode!r} needs an AMR tokenizer and encoder spec"
            )
        if mode == "encoding_concat" and encoder_spec.output_dim != model_config.d_model:
            raise ConfigMismatch(
                "encoding_concat appends encoder outputs without projection; "
                f"output_dim {encoder_spec.output_dim} != d_model {model_config.d_model}"
            )
        self.model_config = model_config
        self.copy_config = copy_config
        self.prefix_len = prefix_len if mode == "prefix" else 0
        self.transformer = PrefixTransformer(model_config)
        self.gate = GenerationGate(model_config.d_model)
        self.generator = (
            PrefixGenerator(amr_tokenizer, encoder_spec, model_config, self.prefix_len)
            if needs_encoder
            else None
        )

    def _amr_inputs(self, batch: Batch):
        mode = self.model_config.amr_mode
        prefixes = encodings = amr_mask = None
        if mode in ("prefix", "encoding_concat"):
            if batch.amr_seqs is None:
                raise ConfigMismatch(f"amr_mode={mode!r} requires AMR sequences")
            if mode == "prefix":
                prefixes = self.generator(batch.amr_seqs)
            else:
                encodings, amr_mask = self.generator.encode_amr(batch.amr_seqs)
        return prefixes, encodings, amr_mask

    def _mixture(self, out: ForwardOutput, batch: Batch) -> tuple[Tensor, Tensor]:
        w = self.gate(out.last_hidden, self.copy_config.mode)
        p_gen = torch.softmax(out.logits, dim=-1)
        # (batch, heads, steps, cols) -> (batch, steps, heads, cols)
        weights = out.cross_attention.permute(0, 2, 1, 3)
        p_copy = copy_distribution(
            weights, out.text_cols, key_mask=batch.copy_mask[:, None, :]
        )
        return mix(p_gen, p_copy, w, batch.src_ids), w

    def forward(self, batch: Batch) -> tuple[ForwardOutput, Tensor, Tensor]:
        """Full pipeline; returns (core output, mixed distributions, w_gen)."""
        prefixes, encodings, amr_mask = self._amr_inputs(batch)
        out = self.transformer(
            batch.src_ids,
            batch.tgt_in,
            prefixes=prefixes,
            amr_encodings=encodings,
            src_mask=batch.src_mask,
            amr_mask=amr_mask,
        )
        mixed, w = self._mixture(out, batch)
        return out, mixed, w

    def losses(self, batch: Batch) -> Tensor:
        """Per-sequence training losses, shape (batch,)."""
        _, mixed, w = self.forward(batch)
        return sequence_losses(mixed, batch.tgt_out, w, self.copy_config, batch.tgt_mask)

    @torch.no_grad()
    def greedy_decode(self, batch: Batch, vocab: Vocab, max_len: int = 48) -> list[list[int]]:
        """Argmax decoding under the copy mixture.

        Returns one id list per batch row, without <bos>/<eos>/<pad>.  AMR
        inputs are computed once and reused across steps.
        """
        n = len(batch)
        if max_len <= 0:
            return [[] for _ in range(n)]
        prefixes, encodings, amr_mask = self._amr_inputs(batch)
        ys = torch.full((n, 1), vocab.bos_id, dtype=torch.long)
        finished = torch.zeros(n, dtype=torch.bool)
        for _ in range(max_len):
            out = self.transformer(
                batch.src_ids,
                ys,
                prefixes=prefixes,
                amr_encodings=encodings,
                src_mask=batch.src_mask,
                amr_mask=amr_mask,
            )
            mixed, _ = self._mixture(out, batch)
            step = mixed[:, -1, :].argmax(dim=-1)
            step = torch.where(finished, torch.full_like(step, vocab.pad_id), step)
            ys = torch.cat([ys, step[:, None]], dim=1)
            finished |= step == vocab.eos_id
            if bool(finished.all()):
                break
        results = []
        for row in ys[:, 1:].tolist():
            ids = []
            for i in row:
                if i == vocab.eos_id:
                    break
                if i != vocab.pad_id:
                    ids.append(i)
            results.append(ids)
        return results
