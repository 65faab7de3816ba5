"""Event ontology, prompt assembly, and template-based output decoding.

The generation model consumes a prompt of the form

    passage <sep> description <sep> template

and emits a filled copy of the template.  Decoding inverts the fill: the
literal pieces of the template act as anchors, and whatever text sits in a
placeholder slot becomes that role's argument list.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Mapping

from .errors import UnknownEventType

if TYPE_CHECKING:
    from .data import EventInstance

#: Marker inside a template description that gets replaced by the trigger text.
TRIGGER_SLOT = "{trigger}"

#: Sentence separator token used when assembling prompts.
SEPARATOR = "<sep>"

#: Joiner for roles with more than one argument.
MULTI_FILLER_JOIN = " and "


@dataclass(frozen=True)
class EventTemplate:
    """Role template for one event type.

    ``placeholders`` pairs each placeholder string with the role it stands
    for, listed in the order the placeholders appear in ``template_text``.
    """

    event_type: str
    description: str
    template_text: str
    placeholders: tuple[tuple[str, str], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "placeholders", tuple((str(p), str(r)) for p, r in self.placeholders)
        )
        roles = [r for _, r in self.placeholders]
        if len(set(roles)) != len(roles):
            raise ValueError(f"duplicate role names in template for {self.event_type!r}")
        if TRIGGER_SLOT not in self.description:
            raise ValueError(
                f"description for {self.event_type!r} lacks the {TRIGGER_SLOT!r} marker"
            )
        spans = []
        for ph, _ in self.placeholders:
            if not ph:
                raise ValueError("empty placeholder string")
            if self.template_text.count(ph) != 1:
                raise ValueError(
                    f"placeholder {ph!r} must occur exactly once in the template "
                    f"for {self.event_type!r}"
                )
            start = self.template_text.find(ph)
            spans.append((start, start + len(ph)))
        if spans != sorted(spans):
            raise ValueError("placeholders must be listed in template order")
        for (_, prev_end), (next_start, _) in zip(spans, spans[1:]):
            if next_start < prev_end:
                raise ValueError("placeholders overlap in template_text")

    @property
    def roles(self) -> tuple[str, ...]:
        return tuple(r for _, r in self.placeholders)

    def literal_segments(self) -> list[str]:
        """Template text split around the placeholders.

        Returns ``len(placeholders) + 1`` pieces; interleaving them with the
        placeholder strings reproduces ``template_text`` exactly.
        """
        segments = []
        pos = 0
        for ph, _ in self.placeholders:
            start = self.template_text.index(ph, pos)
            segments.append(self.template_text[pos:start])
            pos = start + len(ph)
        segments.append(self.template_text[pos:])
        return segments


@dataclass
class RoleAssignment:
    """Mapping role name -> argument strings (empty list = unfilled).

    ``degraded`` marks an assignment recovered from a generation whose anchor
    segments could not be aligned; it is diagnostic only and excluded from
    equality so round-trip comparisons stay value-based.
    """

    fillers: dict[str, list[str]]
    degraded: bool = field(default=False, compare=False)

    @classmethod
    def empty(cls, template: EventTemplate, degraded: bool = False) -> "RoleAssignment":
        return cls({role: [] for role in template.roles}, degraded=degraded)

    @classmethod
    def for_template(
        cls, template: EventTemplate, fillers: Mapping[str, Iterable[str]]
    ) -> "RoleAssignment":
        """Normalize a partial mapping: every declared role present, order kept."""
        unknown = set(fillers) - set(template.roles)
        if unknown:
            raise ValueError(f"roles not declared by template: {sorted(unknown)}")
        return cls({role: list(fillers.get(role, ())) for role in template.roles})


class Ontology:
    """Immutable registry of event templates keyed by event type."""

    def __init__(self, templates: Iterable[EventTemplate]):
        self._by_type: dict[str, EventTemplate] = {}
        for t in templates:
            if t.event_type in self._by_type:
                raise ValueError(f"duplicate event type {t.event_type!r}")
            self._by_type[t.event_type] = t

    def get(self, event_type: str) -> EventTemplate:
        try:
            return self._by_type[event_type]
        except KeyError:
            raise UnknownEventType(f"event type {event_type!r} not in ontology") from None

    def roles_for(self, event_type: str) -> tuple[str, ...]:
        return self.get(event_type).roles

    @property
    def event_types(self) -> tuple[str, ...]:
        return tuple(self._by_type)

    def __contains__(self, event_type: object) -> bool:
        return event_type in self._by_type

    def __iter__(self):
        return iter(self._by_type.values())

    def __len__(self) -> int:
        return len(self._by_type)


def build_prompt(instance: "EventInstance", ontology: Ontology) -> list[str]:
    """Assemble the prompt token sequence for one instance.

    Layout: passage tokens, separator, event description with the trigger
    text substituted for :data:`TRIGGER_SLOT`, separator, template text.
    """
    template = ontology.get(instance.event_type)
    start, end, _ = instance.trigger
    trigger_text = " ".join(instance.tokens[start:end])
    description = template.description.replace(TRIGGER_SLOT, trigger_text)
    tokens = list(instance.tokens)
    tokens.append(SEPARATOR)
    tokens.extend(description.split())
    tokens.append(SEPARATOR)
    tokens.extend(template.template_text.split())
    return tokens


def fill_template(template: EventTemplate, assignment: RoleAssignment) -> str:
    """Replace each placeholder with its fillers joined by " and ".

    Unfilled roles keep the placeholder string verbatim, so an all-empty
    assignment returns ``template_text`` unchanged.
    """
    unknown = set(assignment.fillers) - set(template.roles)
    if unknown:
        raise ValueError(f"roles not declared by template: {sorted(unknown)}")
    segments = template.literal_segments()
    out = [segments[0]]
    for (ph, role), literal in zip(template.placeholders, segments[1:]):
        fillers = assignment.fillers.get(role, [])
        out.append(MULTI_FILLER_JOIN.join(fillers) if fillers else ph)
        out.append(literal)
    return "".join(out)


def decode_output(template: EventTemplate, generated: str) -> RoleAssignment:
    """Invert :func:`fill_template` on model output.

    The literal template segments are matched left to right against the
    generated string (as a whole, so later anchors can push earlier captures
    wider when a filler itself contains anchor-like text).  Captured slots
    become fillers, split on " and "; a slot still holding its placeholder
    string, or holding only whitespace, decodes as unfilled.  If the anchors
    cannot all be aligned the result is all-empty with ``degraded`` set.
    Never raises.
    """
    segments = template.literal_segments()
    pattern = re.escape(segments[0]) + "".join(
        "(.*?)" + re.escape(literal) for literal in segments[1:]
    )
    match = re.fullmatch(pattern, generated, flags=re.DOTALL)
    if match is None:
        return RoleAssignment.empty(template, degraded=True)
    fillers: dict[str, list[str]] = {}
    for (ph, role), captured in zip(template.placeholders, match.groups()):
        if captured == ph or not captured.strip():
            fillers[role] = []
        else:
            fillers[role] = captured.split(MULTI_FILLER_JOIN)
    return RoleAssignment(fillers)


def load_ontology(path) -> Ontology:
    """Read an ontology from a JSON file (list of template records)."""
    with open(path, encoding="utf-8") as fh:
        records = json.load(fh)
    return Ontology(
        EventTemplate(
            event_type=rec["event_type"],
            description=rec["description"],
            template_text=rec["template_text"],
            placeholders=tuple((p, r) for p, r in rec["placeholders"]),
        )
        for rec in records
    )


def save_ontology(ontology: Ontology, path) -> None:
    records = [
        {
            "event_type": t.event_type,
            "description": t.description,
            "template_text": t.template_text,
            "placeholders": [list(pair) for pair in t.placeholders],
        }
        for t in ontology
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(records, fh, indent=2, ensure_ascii=False)
        fh.write("\n")
