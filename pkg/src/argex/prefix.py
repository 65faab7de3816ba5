"""From linearized AMR to per-block attention prefixes.

Pipeline: tokenize the linearized graph under one of two vocabulary
variants, encode it with a small (optionally frozen) transformer encoder,
let ``l`` learnable query vectors attend over the token representations
through a single attention layer, and map each query output to one row of
every injected block's K and V matrices.  The compressed vector P therefore
has capacity exactly 2 * L * l * d_model and is sliced deterministically:
site order (encoder_self, decoder_cross, decoder_self), then layer, then K
before V.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import torch
from torch import Tensor, nn

from .amr import AMRGraph, LinearizedAMR, linearize
from .errors import CapacityMismatch, EmptyRepresentations, OOVStructureToken
from .model import EncoderLayer, ModelConfig, MultiHeadAttention

VARIANTS = ("concept_aware", "surface")

PAD, UNK, REF = "<pad>", "<unk>", "<ref>"
_STRUCT = ("(", ")", "/")


@dataclass(frozen=True)
class AMREncoderSpec:
    variant: str = "concept_aware"
    frozen: bool = False
    output_dim: int = 64
    n_layers: int = 2
    n_heads: int = 4
    max_len: int = 512

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")


def _split_surface(symbol: str) -> list[str]:
    """Break a concept/constant into surface pieces.

    Sense-tagged predicates keep their tag as a separate piece, so
    "appeal-01" yields ["appeal", "-01"] and the encoder can relate the stem
    to the word "appeal" in running text.
    """
    symbol = symbol.strip('"').lower()
    m = re.fullmatch(r"(.*?)(-\d+)", symbol)
    sense = None
    if m and m.group(1):
        symbol, sense = m.group(1), m.group(2)
    pieces = [p for p in re.split(r"[-\s]+", symbol) if p]
    if sense:
        pieces.append(sense)
    return pieces or [symbol]


def _classify(tokens: Sequence[str]):
    """Yield (kind, token) pairs: struct / relation / var / concept / constant.

    Classification is positional, mirroring the delinearizer: the token
    after "(" is a variable declaration when "/" follows it, otherwise a
    concept; a bare token after a relation is a reference when that name is
    declared somewhere, otherwise a constant.
    """
    declared = {
        tokens[i]
        for i in range(len(tokens) - 1)
        if tokens[i + 1] == "/" and i > 0 and tokens[i - 1] == "("
    }
    expect_concept = False
    for i, tok in enumerate(tokens):
        if tok in ("(", ")"):
            expect_concept = tok == "("
            yield ("struct", tok)
        elif tok == "/":
            expect_concept = True
            yield ("struct", tok)
        elif tok.startswith(":"):
            expect_concept = False
            yield ("relation", tok)
        elif expect_concept:
            expect_concept = False
            if i + 1 < len(tokens) and tokens[i + 1] == "/":
                yield ("var", tok)
            else:
                yield ("concept", tok)
        else:
            yield ("var" if tok in declared else "constant", tok)


class AmrTokenizer:
    """Maps linearized AMR tokens to ids under a fixed inventory.

    Relations are special tokens in both variants and are strict: a relation
    outside the inventory raises :class:`OOVStructureToken`.  Concepts are
    atomic ids in the concept_aware variant and surface pieces in the
    surface variant; unknown ones degrade to ``<unk>``.  All variable tokens
    collapse to ``<ref>`` since their names carry no transferable content.
    """

    def __init__(self, variant: str, relations: Iterable[str], atoms: Iterable[str]):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")
        self.variant = variant
        reserved = {PAD, UNK, REF, *_STRUCT}
        self.relations = tuple(sorted(set(relations) - reserved))
        self.atoms = tuple(sorted(set(atoms) - reserved))
        symbols = [PAD, UNK, REF, *_STRUCT, *self.relations, *self.atoms]
        self._ids = {s: i for i, s in enumerate(symbols)}
        self.pad_id = self._ids[PAD]
        self.unk_id = self._ids[UNK]
        self.ref_id = self._ids[REF]

    @classmethod
    def from_graphs(cls, graphs: Iterable[AMRGraph], variant: str) -> "AmrTokenizer":
        relations: set[str] = set()
        atoms: set[str] = set()
        for g in graphs:
            for kind, tok in _classify(list(linearize(g))):
                if kind == "relation":
                    relations.add(tok)
                elif kind in ("concept", "constant"):
                    if variant == "surface":
                        atoms.update(_split_surface(tok))
                    else:
                        atoms.add(tok.strip('"'))
        return cls(variant, relations, atoms)

    @property
    def vocab_size(self) -> int:
        return len(self._ids)

    def encode(self, seq: LinearizedAMR | Sequence[str]) -> list[int]:
        tokens = list(seq)
        ids: list[int] = []
        for kind, tok in _classify(tokens):
            if kind == "struct":
                ids.append(self._ids[tok])
            elif kind == "relation":
                idx = self._ids.get(tok)
                if idx is None:
                    raise OOVStructureToken(f"relation {tok!r} not in AMR vocabulary")
                ids.append(idx)
            elif kind == "var":
                ids.append(self.ref_id)
            elif self.variant == "surface":
                for piece in _split_surface(tok):
                    ids.append(self._ids.get(piece, self.unk_id))
            else:
                ids.append(self._ids.get(tok.strip('"'), self.unk_id))
        return ids

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "relations": list(self.relations),
            "atoms": list(self.atoms),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AmrTokenizer":
        return cls(d["variant"], d["relations"], d["atoms"])


class AmrEncoder(nn.Module):
    """Small transformer encoder over AMR token ids."""

    def __init__(self, spec: AMREncoderSpec, vocab_size: int):
        super().__init__()
        self.spec = spec
        d = spec.output_dim
        self.tok_emb = nn.Embedding(vocab_size, d)
        self.pos_emb = nn.Embedding(spec.max_len, d)
        self.layers = nn.ModuleList(
            EncoderLayer(d, spec.n_heads) for _ in range(spec.n_layers)
        )
        self.norm = nn.LayerNorm(d)
        if spec.frozen:
            self.requires_grad_(False)

    def forward(self, ids: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        pos = torch.arange(ids.shape[1], device=ids.device)
        x = self.tok_emb(ids) + self.pos_emb(pos)[None, :, :]
        for layer in self.layers:
            x = layer(x, mask=mask)
        return self.norm(x)


@dataclass
class PrefixSet:
    """Per-block K/V prefixes keyed by (site, layer)."""

    blocks: dict[tuple[str, int], tuple[Tensor, Tensor]]
    length: int

    def __post_init__(self):
        for key, (k, v) in self.blocks.items():
            if k.shape != v.shape:
                raise ValueError(f"K/V shapes differ at block {key}: "
                                 f"{tuple(k.shape)} vs {tuple(v.shape)}")
            if k.shape[-2] != self.length:
                raise ValueError(
                    f"block {key} has prefix length {k.shape[-2]}, expected {self.length}"
                )

    def get(self, site: str, layer: int) -> Optional[tuple[Tensor, Tensor]]:
        return self.blocks.get((site, layer))

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def total_scalars(self) -> int:
        return sum(k.numel() + v.numel() for k, v in self.blocks.values())


def disassemble(p: Tensor, config: ModelConfig, batched: Optional[bool] = None) -> PrefixSet:
    """Slice the compressed vector P into a PrefixSet.

    P has shape (l, 2*L*d_model) or (batch, l, 2*L*d_model); each query row
    is read as L consecutive (K row, V row) pairs in canonical block order.
    """
    if batched is None:
        batched = p.dim() == 3
    if p.dim() != (3 if batched else 2):
        raise CapacityMismatch(f"P must be 2D or 3D, got shape {tuple(p.shape)}")
    blocks_meta = config.injected_blocks
    big_l, d = len(blocks_meta), config.d_model
    expected = 2 * big_l * d
    if p.shape[-1] != expected:
        raise CapacityMismatch(
            f"P last dim {p.shape[-1]} != 2*L*d_model = {expected} "
            f"(L={big_l}, d_model={d})"
        )
    l = p.shape[-2]
    if big_l == 0:
        return PrefixSet({}, l)
    shaped = p.reshape(*p.shape[:-1], big_l, 2, d)
    blocks = {}
    for idx, key in enumerate(blocks_meta):
        k = shaped[..., idx, 0, :]
        v = shaped[..., idx, 1, :]
        blocks[key] = (k, v)
    return PrefixSet(blocks, l)


class PrefixCompressor(nn.Module):
    """l learnable queries + one attention layer + per-query output head."""

    def __init__(self, l: int, d_model: int, n_heads: int, n_blocks: int, input_dim: int):
        super().__init__()
        if l < 1:
            raise ValueError("compressor needs at least one query vector")
        self.queries = nn.Parameter(torch.randn(l, d_model) * 0.02)
        self.adapter = (
            nn.Linear(input_dim, d_model) if input_dim != d_model else nn.Identity()
        )
        self.attn = MultiHeadAttention(d_model, n_heads)
        self.out_head = nn.Linear(d_model, 2 * n_blocks * d_model)

    def forward(self, reps: Tensor, mask: Optional[Tensor] = None) -> Tensor:
        if reps.dim() != 3 or reps.shape[1] == 0:
            raise EmptyRepresentations(
                f"expected nonempty (batch, len, dim) representations, "
                f"got shape {tuple(reps.shape)}"
            )
        kv = self.adapter(reps)
        q = self.queries.unsqueeze(0).expand(reps.shape[0], -1, -1)
        ctx, _ = self.attn(q, kv, mask=mask)
        return self.out_head(ctx)


class PrefixGenerator(nn.Module):
    """AMR graphs in, PrefixSet out; the trainable half of prefix tuning."""

    def __init__(
        self,
        tokenizer: AmrTokenizer,
        spec: AMREncoderSpec,
        model_config: ModelConfig,
        l: int,
    ):
        super().__init__()
        if l < 0:
            raise ValueError("prefix length l must be >= 0")
        self.tokenizer = tokenizer
        self.spec = spec
        self.model_config = model_config
        self.l = l
        self.encoder = AmrEncoder(spec, tokenizer.vocab_size)
        self.compressor = (
            PrefixCompressor(
                l,
                model_config.d_model,
                model_config.n_heads,
                model_config.n_injected_blocks,
                spec.output_dim,
            )
            if l > 0 and model_config.n_injected_blocks > 0
            else None
        )

    def _batch_ids(self, seqs: Sequence[Sequence[str]]) -> tuple[Tensor, Tensor]:
        encoded = [self.tokenizer.encode(s) for s in seqs]
        width = max(len(e) for e in encoded)
        ids = torch.full((len(encoded), width), self.tokenizer.pad_id, dtype=torch.long)
        mask = torch.zeros(len(encoded), width, dtype=torch.bool)
        for i, e in enumerate(encoded):
            ids[i, : len(e)] = torch.tensor(e, dtype=torch.long)
            mask[i, : len(e)] = True
        return ids, mask

    def encode_amr(self, seqs: Sequence[Sequence[str]]) -> tuple[Tensor, Tensor]:
        """Token representations (batch, len, dim) and their validity mask."""
        ids, mask = self._batch_ids(seqs)
        return self.encoder(ids, mask), mask

    def forward(self, seqs: Sequence[Sequence[str]]) -> PrefixSet:
        if self.compressor is None:
            return PrefixSet({}, self.l)
        reps, mask = self.encode_amr(seqs)
        p = self.compressor(reps, mask)
        return disassemble(p, self.model_config)
