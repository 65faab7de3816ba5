"""Argument identification / classification scoring.

Generation produces argument *strings*; scoring is over token spans.
:func:`match_spans` resolves each string to its first exact occurrence in
the passage (unresolvable strings count as wrong predictions), then
:func:`score` micro-averages greedy one-to-one matches across the corpus.
Arg-I credits a prediction whose span matches some gold argument; Arg-C
additionally requires the role to match.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Sequence

from .errors import KeyMismatch

if TYPE_CHECKING:
    from .data import EventInstance
    from .prompts import RoleAssignment

Span = tuple[int, int]


@dataclass(frozen=True)
class Prediction:
    """Argument set for one (document, trigger) key.

    Items are (span, role) pairs; a ``None`` span marks a predicted string
    that never matched the passage and can only hurt precision.
    """

    key: str
    items: tuple[tuple[Optional[Span], str], ...]

    def __post_init__(self):
        object.__setattr__(
            self,
            "items",
            tuple(
                (None if span is None else (int(span[0]), int(span[1])), str(role))
                for span, role in self.items
            ),
        )


@dataclass(frozen=True)
class ScoreReport:
    gold: int
    predicted: int
    correct_identification: int
    correct_classification: int

    def __post_init__(self):
        ok = (
            0 <= self.correct_classification <= self.correct_identification
            and self.correct_identification <= min(self.gold, self.predicted)
        )
        if not ok:
            raise ValueError(f"inconsistent counts: {self}")

    @staticmethod
    def _prf(correct: int, predicted: int, gold: int) -> tuple[float, float, float]:
        p = correct / predicted if predicted else 0.0
        r = correct / gold if gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return (p, r, f1)

    @property
    def arg_i(self) -> tuple[float, float, float]:
        return self._prf(self.correct_identification, self.predicted, self.gold)

    @property
    def arg_c(self) -> tuple[float, float, float]:
        return self._prf(self.correct_classification, self.predicted, self.gold)

    def as_dict(self) -> dict:
        pi, ri, fi = self.arg_i
        pc, rc, fc = self.arg_c
        return {
            "counts": {
                "gold": self.gold,
                "predicted": self.predicted,
                "correct_identification": self.correct_identification,
                "correct_classification": self.correct_classification,
            },
            "arg_i": {"precision": pi, "recall": ri, "f1": fi},
            "arg_c": {"precision": pc, "recall": rc, "f1": fc},
        }


def match_spans(predicted: Sequence[str], instance: "EventInstance") -> list[Optional[Span]]:
    """Resolve predicted strings to token spans, first occurrence wins."""
    spans: list[Optional[Span]] = []
    tokens = list(instance.tokens)
    for text in predicted:
        words = text.split()
        found = None
        if words:
            for i in range(len(tokens) - len(words) + 1):
                if tokens[i : i + len(words)] == words:
                    found = (i, i + len(words))
                    break
        spans.append(found)
    return spans


def instance_key(instance: "EventInstance") -> str:
    s, e, etype = instance.trigger
    return f"{instance.doc_id}|{s}:{e}|{etype}"


def gold_prediction(instance: "EventInstance") -> Prediction:
    return Prediction(
        instance_key(instance),
        tuple(((s, e), role) for s, e, role in instance.arguments),
    )


def prediction_from_assignment(
    instance: "EventInstance", assignment: "RoleAssignment"
) -> Prediction:
    """Ground a decoded role assignment in the passage for scoring."""
    strings: list[str] = []
    roles: list[str] = []
    for role, fillers in assignment.fillers.items():
        for text in fillers:
            strings.append(text)
            roles.append(role)
    spans = match_spans(strings, instance)
    return Prediction(instance_key(instance), tuple(zip(spans, roles)))


def _intersection(pred: Counter, gold: Counter) -> int:
    return sum((pred & gold).values())


def score(predictions: Sequence[Prediction], gold: Sequence[Prediction]) -> ScoreReport:
    """Micro-averaged Arg-I / Arg-C counts over aligned keys.

    Matching within a key is one-to-one: each gold item absorbs at most one
    predicted item.  Because a pair either matches exactly or not at all,
    greedy multiset intersection already attains the optimum (the tests
    check this against an exhaustive matcher).
    """
    by_pred = _index(predictions, "prediction")
    by_gold = _index(gold, "gold")
    if set(by_pred) != set(by_gold):
        missing = set(by_gold) - set(by_pred)
        extra = set(by_pred) - set(by_gold)
        raise KeyMismatch(f"keys differ; missing={sorted(missing)} extra={sorted(extra)}")

    n_gold = n_pred = correct_i = correct_c = 0
    for key, gold_items in by_gold.items():
        pred_items = by_pred[key]
        n_gold += len(gold_items)
        n_pred += len(pred_items)
        pred_spans = Counter(s for s, _ in pred_items if s is not None)
        gold_spans = Counter(s for s, _ in gold_items)
        correct_i += _intersection(pred_spans, gold_spans)
        pred_pairs = Counter((s, r) for s, r in pred_items if s is not None)
        gold_pairs = Counter(gold_items)
        correct_c += _intersection(pred_pairs, gold_pairs)
    return ScoreReport(n_gold, n_pred, correct_i, correct_c)


def _index(items: Sequence[Prediction], what: str) -> dict[str, tuple]:
    out: dict[str, tuple] = {}
    for p in items:
        if p.key in out:
            raise KeyMismatch(f"duplicate {what} key {p.key!r}")
        out[p.key] = p.items
    return out
