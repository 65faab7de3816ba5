"""Adjusted copy mechanism: gate, copy distribution, mixture, and loss.

At each decoding step the output distribution is a convex mixture of the
generator's softmax and a copy distribution read off the last decoder
layer's cross-attention:

    P(t) = w_gen * P_gen(t) + (1 - w_gen) * sum_j p_copy(j) * 1(x_j = t)

Training adds a regularizer pushing w_gen down (copying preferred), giving
loss = NLL + lambda * sum_i w_gen_i.  Four modes cover the ablations:
"adjusted" (mixture + regularizer), "plain" (mixture only), "pure"
(w_gen forced to 0), and "off" (w_gen forced to 1, no copying).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import torch
from torch import Tensor, nn

from .errors import DegenerateMass, ShapeMismatch, ZeroProbabilityGold

COPY_MODES = ("adjusted", "plain", "pure", "off")
COPY_SPANS = ("full", "passage")


@dataclass(frozen=True)
class CopyConfig:
    mode: str = "adjusted"
    lambda_: float = 1.0
    copy_span: str = "full"

    def __post_init__(self):
        if self.mode not in COPY_MODES:
            raise ValueError(f"mode must be one of {COPY_MODES}, got {self.mode!r}")
        if self.lambda_ < 0:
            raise ValueError(f"lambda must be nonnegative, got {self.lambda_}")
        if self.copy_span not in COPY_SPANS:
            raise ValueError(f"copy_span must be one of {COPY_SPANS}")


class GenerationGate(nn.Module):
    """Scalar generate-vs-copy gate from the last decoder hidden state."""

    def __init__(self, d_model: int):
        super().__init__()
        self.proj = nn.Linear(d_model, 1)

    def forward(self, hidden: Tensor, mode: str = "adjusted") -> Tensor:
        if mode == "pure":
            return hidden.new_zeros(hidden.shape[:-1])
        if mode == "off":
            return hidden.new_ones(hidden.shape[:-1])
        return torch.sigmoid(self.proj(hidden)).squeeze(-1)


def copy_distribution(
    weights: Tensor,
    text_cols: tuple[int, int],
    key_mask: Optional[Tensor] = None,
) -> Tensor:
    """Copy distribution over encoder text positions.

    ``weights`` holds attention rows with heads on dim -2 and key columns on
    dim -1 (single step: (heads, columns); batched: (batch, steps, heads,
    columns)).  Heads are averaged, columns outside ``text_cols`` (prefix
    slots, appended AMR encodings) are dropped, ``key_mask`` optionally
    zeroes further positions (padding, non-passage text), and the remainder
    is renormalized.  If nothing remains, the step cannot copy at all and
    :class:`DegenerateMass` is raised.
    """
    mean = weights.mean(dim=-2)
    start, end = text_cols
    text = mean[..., start:end]
    if key_mask is not None:
        if key_mask.shape[-1] != text.shape[-1]:
            raise ShapeMismatch(
                f"key_mask width {key_mask.shape[-1]} != text width {text.shape[-1]}"
            )
        text = text * key_mask
    totals = text.sum(dim=-1, keepdim=True)
    if (totals == 0).any():
        raise DegenerateMass("all cross-attention mass fell outside copyable positions")
    return text / totals


def mix(
    p_gen: Tensor, p_copy: Tensor, w_gen, source_ids: Tensor
) -> Tensor:
    """Eq.-style mixture: w*P_gen + (1-w) * copy mass scattered onto tokens."""
    if not torch.is_tensor(w_gen):
        w_gen = p_gen.new_tensor(w_gen)
    w = w_gen.reshape(*w_gen.shape, 1) if w_gen.dim() < p_gen.dim() else w_gen
    if source_ids.dtype != torch.long:
        raise ShapeMismatch("source_ids must be integer token ids")
    if source_ids.dim() == p_copy.dim() - 1:
        source_ids = source_ids.unsqueeze(-2).expand(p_copy.shape)
    if source_ids.shape != p_copy.shape:
        raise ShapeMismatch(
            f"source_ids {tuple(source_ids.shape)} does not match "
            f"p_copy {tuple(p_copy.shape)}"
        )
    mixed = w * p_gen
    return mixed.scatter_add(-1, source_ids, (1 - w) * p_copy)


@dataclass
class StepDistribution:
    """All per-step distributions; validated so scoring code can trust them."""

    p_gen_dist: Tensor
    p_copy: Tensor
    w_gen: float
    mixed: Tensor

    def __post_init__(self):
        for name in ("p_gen_dist", "p_copy", "mixed"):
            t = getattr(self, name)
            if (t < 0).any():
                raise ValueError(f"{name} has negative entries")
            if abs(float(t.sum()) - 1.0) > 1e-6:
                raise ValueError(f"{name} sums to {float(t.sum())}, not 1")
        if not (0.0 <= self.w_gen <= 1.0):
            raise ValueError(f"w_gen {self.w_gen} outside [0, 1]")

    @classmethod
    def from_parts(
        cls, p_gen: Tensor, p_copy: Tensor, w_gen: float, source_ids: Tensor
    ) -> "StepDistribution":
        mixed = mix(p_gen, p_copy, w_gen, source_ids)
        return cls(p_gen, p_copy, float(w_gen), mixed)


def sequence_losses(
    mixed: Tensor,
    gold: Tensor,
    w_gen: Tensor,
    config: CopyConfig,
    target_mask: Optional[Tensor] = None,
) -> Tensor:
    """Per-sequence loss, summed over real steps.

    mixed: (batch, steps, vocab); gold, w_gen: (batch, steps);
    target_mask: (batch, steps) bool, True on real (non-padding) steps.
    Adjusted mode adds lambda * sum of gate values; the other modes are pure
    NLL under their respective gates.
    """
    if target_mask is None:
        target_mask = torch.ones_like(gold, dtype=torch.bool)
    p_gold = mixed.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
    if (p_gold[target_mask] == 0).any():
        raise ZeroProbabilityGold(
            "a gold token has zero mixed probability; in pure copy mode this "
            "means the target token does not occur in the copyable source"
        )
    safe = torch.where(target_mask, p_gold, torch.ones_like(p_gold))
    nll = -(torch.log(safe) * target_mask).sum(dim=-1)
    if config.mode == "adjusted":
        return nll + config.lambda_ * (w_gen * target_mask).sum(dim=-1)
    return nll


def adjusted_loss(
    steps: Sequence[StepDistribution], gold_tokens: Sequence[int], config: CopyConfig
) -> Tensor:
    """Loss for one decoded sequence from per-step distributions."""
    if len(steps) != len(gold_tokens):
        raise ShapeMismatch(
            f"{len(steps)} step distributions for {len(gold_tokens)} gold tokens"
        )
    if not steps:
        return torch.zeros(())
    mixed = torch.stack([s.mixed for s in steps]).unsqueeze(0)
    gold = torch.tensor(list(gold_tokens), dtype=torch.long).unsqueeze(0)
    w = torch.tensor([s.w_gen for s in steps], dtype=mixed.dtype).unsqueeze(0)
    return sequence_losses(mixed, gold, w, config)[0]
