"""Encoder-decoder transformer with prefix slots in every attention block.

Prefixes are per-block key/value matrices concatenated after the input
projections, so they act as position-free memory slots: attention weighting
changes but output geometry does not.  The forward pass also exposes what
the copy mechanism needs downstream: per-step last decoder hidden states
and last-layer cross-attention weights, together with the column range of
the encoder *text* positions inside those weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import torch
from torch import Tensor, nn

from .errors import ConfigMismatch, ShapeMismatch

if TYPE_CHECKING:
    from .prefix import PrefixSet

VALID_SITES = ("encoder_self", "decoder_cross", "decoder_self")
DEFAULT_SITES = ("encoder_self", "decoder_cross")
AMR_MODES = ("prefix", "amr_prompt_concat", "encoding_concat", "none")


@dataclass(frozen=True)
class ModelConfig:
    d_model: int
    n_heads: int
    n_enc_layers: int
    n_dec_layers: int
    vocab_size: int
    max_len: int = 256
    injection_sites: Optional[tuple[str, ...]] = None
    amr_mode: str = "prefix"

    def __post_init__(self):
        if self.amr_mode not in AMR_MODES:
            raise ValueError(f"amr_mode must be one of {AMR_MODES}, got {self.amr_mode!r}")
        sites = self.injection_sites
        if sites is None:
            sites = DEFAULT_SITES if self.amr_mode == "prefix" else ()
        sites = tuple(sites)
        object.__setattr__(self, "injection_sites", sites)
        if self.d_model % self.n_heads:
            raise ValueError(
                f"d_model {self.d_model} not divisible by n_heads {self.n_heads}"
            )
        unknown = set(sites) - set(VALID_SITES)
        if unknown or len(set(sites)) != len(sites):
            raise ValueError(f"bad injection sites {sites!r}")
        if (len(sites) > 0) != (self.amr_mode == "prefix"):
            raise ValueError(
                "injection_sites must be nonempty exactly when amr_mode == 'prefix'"
            )

    @property
    def injected_blocks(self) -> tuple[tuple[str, int], ...]:
        """(site, layer) pairs in canonical disassembly order."""
        blocks = []
        per_site = {
            "encoder_self": self.n_enc_layers,
            "decoder_cross": self.n_dec_layers,
            "decoder_self": self.n_dec_layers,
        }
        for site in VALID_SITES:
            if site in self.injection_sites:
                blocks.extend((site, layer) for layer in range(per_site[site]))
        return tuple(blocks)

    @property
    def n_injected_blocks(self) -> int:
        return len(self.injected_blocks)


def _as_3d(name: str, t: Tensor) -> Tensor:
    if t.dim() != 3:
        raise ShapeMismatch(f"{name} must be (batch, length, dim), got {tuple(t.shape)}")
    return t


def _expand_mask(mask: Tensor, batch: int, tq: int, tk: int) -> Tensor:
    """Normalize a keep-mask to (batch, 1, tq, tk) bool."""
    if mask.dtype != torch.bool:
        raise ShapeMismatch("mask must be boolean (True = attendable)")
    if mask.dim() == 2 and mask.shape == (batch, tk):
        mask = mask[:, None, None, :]
    elif mask.dim() == 2 and mask.shape == (tq, tk):
        mask = mask[None, None, :, :]
    elif mask.dim() == 3 and mask.shape == (batch, tq, tk):
        mask = mask[:, None, :, :]
    else:
        raise ShapeMismatch(
            f"mask shape {tuple(mask.shape)} not compatible with ({batch}, {tq}, {tk})"
        )
    return mask


def attend_with_prefix(
    queries: Tensor,
    keys: Tensor,
    values: Tensor,
    prefix: Optional[tuple[Tensor, Tensor]] = None,
    mask: Optional[Tensor] = None,
    n_heads: int = 1,
) -> tuple[Tensor, Tensor]:
    """Multi-head scaled dot-product attention over [prefix keys ; keys].

    All tensor arguments are already projected.  Prefix positions are always
    attendable; any mask applies only to the original key positions.  Returns
    (context, attention weights) with weights over ``l + key_len`` columns.
    """
    queries, keys, values = (
        _as_3d("queries", queries), _as_3d("keys", keys), _as_3d("values", values)
    )
    batch, tq, dim = queries.shape
    if keys.shape != values.shape:
        raise ShapeMismatch(
            f"keys {tuple(keys.shape)} and values {tuple(values.shape)} differ"
        )
    if keys.shape[0] != batch or keys.shape[2] != dim:
        raise ShapeMismatch(
            f"keys {tuple(keys.shape)} incompatible with queries {tuple(queries.shape)}"
        )
    if dim % n_heads:
        raise ShapeMismatch(f"dim {dim} not divisible by n_heads {n_heads}")
    tk = keys.shape[1]

    if mask is not None:
        mask = _expand_mask(mask, batch, tq, tk)

    l = 0
    if prefix is not None:
        kp, vp = prefix
        if kp.dim() == 2:
            kp = kp.unsqueeze(0).expand(batch, -1, -1)
        if vp.dim() == 2:
            vp = vp.unsqueeze(0).expand(batch, -1, -1)
        if kp.shape != vp.shape:
            raise ShapeMismatch(
                f"prefix K {tuple(kp.shape)} and V {tuple(vp.shape)} differ"
            )
        if kp.shape[0] != batch or kp.shape[2] != dim:
            raise ShapeMismatch(
                f"prefix shape {tuple(kp.shape)} incompatible with dim {dim}"
            )
        l = kp.shape[1]
        keys = torch.cat([kp, keys], dim=1)
        values = torch.cat([vp, values], dim=1)

    head_dim = dim // n_heads
    q = queries.view(batch, tq, n_heads, head_dim).transpose(1, 2)
    k = keys.view(batch, tk + l, n_heads, head_dim).transpose(1, 2)
    v = values.view(batch, tk + l, n_heads, head_dim).transpose(1, 2)
    scores = q @ k.transpose(-1, -2) / math.sqrt(head_dim)
    if mask is not None:
        keep = torch.cat([mask.new_ones(*mask.shape[:-1], l), mask], dim=-1) if l else mask
        scores = scores.masked_fill(~keep, torch.finfo(scores.dtype).min)
    attn = torch.softmax(scores, dim=-1)
    context = attn @ v
    out = context.transpose(1, 2).reshape(batch, tq, dim)
    return out, attn


class MultiHeadAttention(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.n_heads = n_heads
        self.q_proj = nn.Linear(d_model, d_model)
        self.k_proj = nn.Linear(d_model, d_model)
        self.v_proj = nn.Linear(d_model, d_model)
        self.out_proj = nn.Linear(d_model, d_model)

    def forward(
        self,
        query_input: Tensor,
        kv_input: Tensor,
        prefix: Optional[tuple[Tensor, Tensor]] = None,
        mask: Optional[Tensor] = None,
    ) -> tuple[Tensor, Tensor]:
        out, attn = attend_with_prefix(
            self.q_proj(query_input),
            self.k_proj(kv_input),
            self.v_proj(kv_input),
            prefix=prefix,
            mask=mask,
            n_heads=self.n_heads,
        )
        return self.out_proj(out), attn


class FeedForward(nn.Module):
    def __init__(self, d_model: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_model, 4 * d_model), nn.GELU(), nn.Linear(4 * d_model, d_model)
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.net(x)


class EncoderLayer(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.ffn = FeedForward(d_model)

    def forward(self, x, prefix=None, mask=None):
        h = self.norm1(x)
        attn_out, _ = self.self_attn(h, h, prefix=prefix, mask=mask)
        x = x + attn_out
        return x + self.ffn(self.norm2(x))


class DecoderLayer(nn.Module):
    def __init__(self, d_model: int, n_heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.self_attn = MultiHeadAttention(d_model, n_heads)
        self.norm2 = nn.LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, n_heads)
        self.norm3 = nn.LayerNorm(d_model)
        self.ffn = FeedForward(d_model)

    def forward(self, x, memory, self_prefix=None, cross_prefix=None,
                causal_mask=None, memory_mask=None):
        h = self.norm1(x)
        attn_out, _ = self.self_attn(h, h, prefix=self_prefix, mask=causal_mask)
        x = x + attn_out
        cross_out, cross_attn = self.cross_attn(
            self.norm2(x), memory, prefix=cross_prefix, mask=memory_mask
        )
        x = x + cross_out
        return x + self.ffn(self.norm3(x)), cross_attn


@dataclass
class ForwardOutput:
    """Everything one decoding step family needs downstream.

    ``cross_attention`` covers the last decoder layer only, with columns
    ordered [cross prefix slots ; encoder output]; ``text_cols`` is the
    half-open column range of the encoder *text* positions (prefix slots and
    any appended AMR encodings fall outside it).
    """

    logits: Tensor
    last_hidden: Tensor
    cross_attention: Tensor
    text_cols: tuple[int, int]


class PrefixTransformer(nn.Module):
    """Pre-norm seq2seq transformer accepting per-block K/V prefixes.

    Prefixes bypass both embeddings and positional encoding: they enter as
    ready-made key/value rows inside each injected attention block.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_len, config.d_model)
        self.enc_layers = nn.ModuleList(
            EncoderLayer(config.d_model, config.n_heads)
            for _ in range(config.n_enc_layers)
        )
        self.enc_norm = nn.LayerNorm(config.d_model)
        self.dec_layers = nn.ModuleList(
            DecoderLayer(config.d_model, config.n_heads)
            for _ in range(config.n_dec_layers)
        )
        self.dec_norm = nn.LayerNorm(config.d_model)
        self.lm_head = nn.Linear(config.d_model, config.vocab_size)

    def _embed(self, ids: Tensor) -> Tensor:
        if ids.shape[1] > self.config.max_len:
            raise ShapeMismatch(
                f"sequence length {ids.shape[1]} exceeds max_len {self.config.max_len}"
            )
        pos = torch.arange(ids.shape[1], device=ids.device)
        return self.tok_emb(ids) + self.pos_emb(pos)[None, :, :]

    def _check_mode_inputs(self, prefixes, amr_encodings) -> None:
        mode = self.config.amr_mode
        if mode == "prefix":
            if prefixes is None:
                raise ConfigMismatch("amr_mode='prefix' requires a PrefixSet")
            if amr_encodings is not None:
                raise ConfigMismatch("amr_encodings only valid in encoding_concat mode")
        elif mode == "encoding_concat":
            if amr_encodings is None:
                raise ConfigMismatch("amr_mode='encoding_concat' requires amr_encodings")
            if prefixes is not None:
                raise ConfigMismatch("prefixes only valid in prefix mode")
        else:
            if prefixes is not None:
                raise ConfigMismatch(f"prefixes not accepted in amr_mode={mode!r}")
            if amr_encodings is not None:
                raise ConfigMismatch(f"amr_encodings not accepted in amr_mode={mode!r}")

    def _block_prefix(self, prefixes: Optional["PrefixSet"], site: str, layer: int):
        if prefixes is None or site not in self.config.injection_sites:
            return None
        return prefixes.get(site, layer)

    def encode(self, input_ids: Tensor, prefixes=None, src_mask=None) -> Tensor:
        x = self._embed(input_ids)
        for i, layer in enumerate(self.enc_layers):
            x = layer(x, prefix=self._block_prefix(prefixes, "encoder_self", i),
                      mask=src_mask)
        return self.enc_norm(x)

    def forward(
        self,
        input_ids: Tensor,
        decoder_input_ids: Tensor,
        prefixes: Optional["PrefixSet"] = None,
        amr_encodings: Optional[Tensor] = None,
        src_mask: Optional[Tensor] = None,
        amr_mask: Optional[Tensor] = None,
    ) -> ForwardOutput:
        self._check_mode_inputs(prefixes, amr_encodings)
        memory = self.encode(input_ids, prefixes, src_mask)
        n_text = memory.shape[1]

        memory_mask = src_mask
        if amr_encodings is not None:
            if amr_encodings.dim() != 3 or amr_encodings.shape[2] != self.config.d_model:
                raise ShapeMismatch(
                    f"amr_encodings must be (batch, len, {self.config.d_model})"
                )
            # appended without projection; cross-attention sees text then AMR
            memory = torch.cat([memory, amr_encodings], dim=1)
            if src_mask is not None or amr_mask is not None:
                b = memory.shape[0]
                text_m = src_mask if src_mask is not None else \
                    memory.new_ones(b, n_text, dtype=torch.bool)
                amr_m = amr_mask if amr_mask is not None else \
                    memory.new_ones(b, amr_encodings.shape[1], dtype=torch.bool)
                memory_mask = torch.cat([text_m, amr_m], dim=1)

        t = decoder_input_ids.shape[1]
        causal = torch.tril(
            torch.ones(t, t, dtype=torch.bool, device=decoder_input_ids.device)
        )
        x = self._embed(decoder_input_ids)
        cross_attn = None
        for i, layer in enumerate(self.dec_layers):
            x, cross_attn = layer(
                x,
                memory,
                self_prefix=self._block_prefix(prefixes, "decoder_self", i),
                cross_prefix=self._block_prefix(prefixes, "decoder_cross", i),
                causal_mask=causal,
                memory_mask=memory_mask,
            )
        last_hidden = self.dec_norm(x)
        logits = self.lm_head(last_hidden)

        l_cross = 0
        if prefixes is not None and "decoder_cross" in self.config.injection_sites:
            l_cross = prefixes.length
        return ForwardOutput(
            logits=logits,
            last_hidden=last_hidden,
            cross_attention=cross_attn,
            text_cols=(l_cross, l_cross + n_text),
        )
