"""Dataset schema, loading, proportional splits, and synthetic corpora.

Datasets are line-delimited JSON; ``docs/dataset_format.md`` documents the
record layout with a worked example.  The synthetic generator produces
desk-scale corpora whose stub AMR graphs mirror the gold event structure,
so the full pipeline can run without any licensed data.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .amr import parse_penman, to_penman
from .errors import DataMissing, SchemaError
from .prompts import EventTemplate, Ontology


@dataclass(frozen=True)
class EventInstance:
    """One trigger with its gold arguments over a tokenized passage."""

    doc_id: str
    tokens: tuple[str, ...]
    trigger: tuple[int, int, str]
    arguments: tuple[tuple[int, int, str], ...] = ()
    amr: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(str(t) for t in self.tokens))
        object.__setattr__(self, "trigger", self._span3(self.trigger, "trigger"))
        object.__setattr__(
            self, "arguments", tuple(self._span3(a, "argument") for a in self.arguments)
        )

    def _span3(self, value, kind: str) -> tuple[int, int, str]:
        try:
            start, end, label = value
            start, end, label = int(start), int(end), str(label)
        except (TypeError, ValueError):
            raise SchemaError(f"{kind} must be a (start, end, label) triple, got {value!r}")
        if not (0 <= start < end <= len(self.tokens)):
            raise SchemaError(
                f"{kind} span ({start}, {end}) out of range for {len(self.tokens)} tokens"
            )
        return (start, end, label)

    @property
    def event_type(self) -> str:
        return self.trigger[2]

    def span_text(self, start: int, end: int) -> str:
        return " ".join(self.tokens[start:end])

    @property
    def trigger_text(self) -> str:
        return self.span_text(self.trigger[0], self.trigger[1])


def _instance_from_record(rec: dict, line: int, ontology: Optional[Ontology]) -> EventInstance:
    if not isinstance(rec, dict):
        raise SchemaError("record is not an object", line=line)
    missing = {"doc_id", "tokens", "trigger"} - set(rec)
    if missing:
        raise SchemaError(f"missing fields: {sorted(missing)}", line=line)
    try:
        instance = EventInstance(
            doc_id=str(rec["doc_id"]),
            tokens=tuple(rec["tokens"]),
            trigger=tuple(rec["trigger"]),
            arguments=tuple(tuple(a) for a in rec.get("arguments", ())),
            amr=rec.get("amr"),
        )
    except SchemaError as exc:
        raise SchemaError(str(exc), line=line) from None
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed record: {exc}", line=line) from None
    if ontology is not None:
        if instance.event_type not in ontology:
            raise SchemaError(f"unknown event type {instance.event_type!r}", line=line)
        roles = set(ontology.roles_for(instance.event_type))
        for _, _, role in instance.arguments:
            if role not in roles:
                raise SchemaError(
                    f"role {role!r} not defined for {instance.event_type!r}", line=line
                )
    return instance


def load_dataset(path, ontology: Optional[Ontology] = None) -> list[EventInstance]:
    """Read a JSONL dataset, validating every record.

    When an ontology is supplied, event types and role names are checked
    against it as well.  The first violating record aborts the load with a
    :class:`SchemaError` carrying its 1-based line number.
    """
    path = Path(path)
    if not path.exists():
        raise DataMissing(f"dataset file not found: {path}")
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rec = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", line=lineno) from None
            instances.append(_instance_from_record(rec, lineno, ontology))
    return instances


def save_dataset(instances: Iterable[EventInstance], path) -> None:
    """Write instances as canonical JSONL (stable under load/save cycles)."""
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            rec = {
                "doc_id": inst.doc_id,
                "tokens": list(inst.tokens),
                "trigger": list(inst.trigger),
                "arguments": [list(a) for a in inst.arguments],
            }
            if inst.amr is not None:
                rec["amr"] = inst.amr
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


#: Training proportions studied in the low-resource evaluation.
DECLARED_PROPORTIONS = (0.05, 0.10, 0.20, 0.30, 0.50, 1.0)


@dataclass(frozen=True)
class SplitSpec:
    proportion: float
    seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.proportion <= 1.0):
            raise ValueError(f"proportion must be in (0, 1], got {self.proportion}")


def split_proportion(
    instances: Sequence[EventInstance], spec: SplitSpec
) -> list[EventInstance]:
    """Deterministic uniform subset of size ceil(p * N), in original order.

    Splits with the same seed are nested: the 5% subset is contained in the
    10% subset, and so on, so learning curves compare growing supersets.
    """
    n = len(instances)
    # guard against float dust pushing an exact p*N over the next integer
    k = max(1, math.ceil(spec.proportion * n - 1e-9)) if n else 0
    order = list(range(n))
    random.Random(spec.seed).shuffle(order)
    chosen = set(order[:k])
    return [inst for i, inst in enumerate(instances) if i in chosen]


# --- synthetic corpus -------------------------------------------------------
#
# Passages follow fixed clause patterns whose arguments are drawn from
# combinatorial name pools, so held-out instances contain argument strings
# never seen in training.  Punctuation is a separate token throughout, which
# keeps whitespace tokenization lossless.  Pools deliberately avoid the
# tokens "and" / "in" / placeholder words so template anchors stay unambiguous.

_FIRST = (
    "archer", "baxter", "calla", "dorian", "edda", "farid", "greta", "holt",
    "imani", "jasper", "kira", "lorcan", "mae", "nadia", "orin", "petra",
    "quill", "rosa", "selim", "tova", "umber", "vida", "wren", "xeno",
    "yara", "zeph", "alba", "bruno", "cleo", "darius",
)
_LAST = (
    "ashworth", "blackwood", "carver", "delgado", "ellison", "fontaine",
    "garner", "hollis", "ibarra", "jennings", "keller", "lindqvist",
    "moreau", "novak", "okafor", "pritchard", "quintana", "reyes", "santos",
    "thorne", "ueda", "vance", "whitaker", "xiang", "yates", "zamora",
    "adler", "bishop", "cruz", "duval",
)
_ADJ = (
    "rusty", "golden", "antique", "wooden", "crimson", "marble", "silver",
    "velvet", "ivory", "copper", "amber", "cobalt", "jade", "onyx", "pearl",
)
_NOUN = (
    "lantern", "tractor", "violin", "compass", "ledger", "tapestry",
    "chalice", "sextant", "anvil", "loom", "spyglass", "carriage", "mosaic",
    "turbine", "astrolabe", "quilt", "forge", "obelisk", "samovar", "zither",
)
_CITY = (
    "ashford", "brimley", "calverton", "dunmore", "eastvale", "ferndale",
    "grimsby", "harlow", "ivydale", "jarrow", "kelsey", "larkspur",
    "montrose", "norwood", "oakhurst", "penrith", "quarrytown", "ridgeway",
    "selborne", "thistleford", "underhill", "varnley", "westmere", "yarrow",
)
_DISTRACTORS = (
    ("the", "morning", "was", "quiet", "."),
    ("officials", "declined", "comment", "."),
    ("reporters", "gathered", "outside", "."),
    ("rain", "fell", "over", "the", "harbor", "."),
)
_CLOSERS = (
    ("the", "crowd", "dispersed", "later", "."),
    ("nothing", "else", "happened", "."),
)


@dataclass(frozen=True)
class _EventDef:
    event_type: str
    verb: str
    concept: str
    template_text: str
    # (placeholder, role, AMR relation, filler pool)
    slots: tuple[tuple[str, str, str, str], ...]


_EVENT_DEFS = (
    _EventDef(
        "Commerce:Sell", "sold", "sell-01",
        "somebody sold something in somewhere .",
        (("somebody", "Seller", ":ARG0", "person"),
         ("something", "Item", ":ARG1", "item"),
         ("somewhere", "Place", ":location", "place")),
    ),
    _EventDef(
        "Commerce:Buy", "bought", "buy-01",
        "somebody bought something in somewhere .",
        (("somebody", "Buyer", ":ARG0", "person"),
         ("something", "Item", ":ARG1", "item"),
         ("somewhere", "Place", ":location", "place")),
    ),
    _EventDef(
        "Conflict:Attack", "attacked", "attack-01",
        "somebody attacked someone in somewhere .",
        (("somebody", "Attacker", ":ARG0", "person"),
         ("someone", "Target", ":ARG1", "person"),
         ("somewhere", "Place", ":location", "place")),
    ),
    _EventDef(
        "Contact:Meet", "met", "meet-03",
        "somebody met someone in somewhere .",
        (("somebody", "Participant", ":ARG0", "person"),
         ("someone", "Counterpart", ":ARG1", "person"),
         ("somewhere", "Place", ":location", "place")),
    ),
    _EventDef(
        "Personnel:Hire", "hired", "hire-01",
        "somebody hired someone in somewhere .",
        (("somebody", "Employer", ":ARG0", "person"),
         ("someone", "Employee", ":ARG1", "person"),
         ("somewhere", "Place", ":location", "place")),
    ),
    _EventDef(
        "Justice:Sue", "sued", "sue-01",
        "somebody sued someone in somewhere .",
        (("somebody", "Plaintiff", ":ARG0", "person"),
         ("someone", "Defendant", ":ARG1", "person"),
         ("somewhere", "Place", ":location", "place")),
    ),
    _EventDef(
        "Movement:Visit", "visited", "visit-01",
        "somebody visited somewhere .",
        (("somebody", "Visitor", ":ARG0", "person"),
         ("somewhere", "Place", ":ARG1", "place")),
    ),
    _EventDef(
        "Justice:Appeal", "appealed", "appeal-01",
        "somebody appealed the adjudication from some adjudicator .",
        (("somebody", "Plaintiff", ":ARG0", "person"),
         ("some adjudicator", "Adjudicator", ":ARG2", "org")),
    ),
)


class _VarNamer:
    def __init__(self):
        self.count = 0

    def __call__(self) -> str:
        name = f"v{self.count}"
        self.count += 1
        return name


def _filler(rng: random.Random, pool: str, var: _VarNamer) -> tuple[list[str], str]:
    """Return (passage tokens, AMR subtree) for one argument.

    Name words are capitalized inside the graph, mimicking parser-style
    normalization: a generation-only model reading the graph drifts from the
    lowercase passage, while copying from the input stays exact.
    """
    if pool == "person":
        words = [rng.choice(_FIRST), rng.choice(_LAST)]
        ops = " ".join(f':op{i + 1} "{w.capitalize()}"' for i, w in enumerate(words))
        sub = f"({var()} / person :name ({var()} / name {ops}))"
        return words, sub
    if pool == "place":
        city = rng.choice(_CITY)
        sub = f'({var()} / city :name ({var()} / name :op1 "{city.capitalize()}"))'
        return [city], sub
    if pool == "org":
        city = rng.choice(_CITY)
        sub = f'({var()} / court :name ({var()} / name :op1 "{city.capitalize()}"))'
        return ["the", city, "court"], sub
    if pool == "item":
        noun = rng.choice(_NOUN)
        if rng.random() < 0.6:
            adj = rng.choice(_ADJ)
            sub = f"({var()} / {noun} :mod ({var()} / {adj}))"
            return ["the", adj, noun], sub
        return ["the", noun], f"({var()} / {noun})"
    raise ValueError(f"unknown pool {pool!r}")


def _make_instance(
    rng: random.Random, doc_id: str, edef: _EventDef
) -> tuple[EventInstance, str]:
    tokens: list[str] = []
    if rng.random() < 0.4:
        tokens.extend(rng.choice(_DISTRACTORS))

    var = _VarNamer()
    amr_edges: list[str] = []
    arguments: list[tuple[int, int, str]] = []

    def emit(words: list[str], role: str, sub: str, relation: str) -> None:
        start = len(tokens)
        tokens.extend(words)
        arguments.append((start, start + len(words), role))
        amr_edges.append(f"{relation} {sub}")

    drop_place = rng.random() < 0.3
    trigger: Optional[tuple[int, int, str]] = None

    for position, (_, role, relation, pool) in enumerate(edef.slots):
        if pool == "place" and drop_place:
            continue
        words, sub = _filler(rng, pool, var)
        if position == 0:
            emit(words, role, sub, relation)
            trig_start = len(tokens)
            tokens.append(edef.verb)
            trigger = (trig_start, trig_start + 1, edef.event_type)
            if edef.event_type == "Justice:Appeal":
                tokens.extend(["the", "adjudication", "from"])
        else:
            if pool == "place" and len(edef.slots) == 3:
                tokens.append("in")
            emit(words, role, sub, relation)
            if pool == "item" and rng.random() < 0.25:
                tokens.append("and")
                words2, sub2 = _filler(rng, pool, var)
                emit(words2, role, sub2, relation)

    assert trigger is not None  # slot 0 is never skipped
    tokens.append(".")
    if rng.random() < 0.3:
        tokens.extend(rng.choice(_CLOSERS))

    root = var()
    body = " ".join(amr_edges)
    penman = f"({root} / {edef.concept} {body})" if body else f"({root} / {edef.concept})"
    # normalize through the graph layer; also validates the construction
    penman = to_penman(parse_penman(penman))

    instance = EventInstance(
        doc_id=doc_id,
        tokens=tuple(tokens),
        trigger=trigger,
        arguments=tuple(arguments),
        amr=penman,
    )
    return instance, penman


def _ontology_for(defs: Sequence[_EventDef]) -> Ontology:
    templates = []
    for d in defs:
        label = d.event_type.split(":")[1].lower()
        templates.append(
            EventTemplate(
                event_type=d.event_type,
                description=f"the trigger word {{trigger}} marks a {label} event .",
                template_text=d.template_text,
                placeholders=tuple((ph, role) for ph, role, _, _ in d.slots),
            )
        )
    return Ontology(templates)


def generate_synthetic(
    n: int, seed: int = 0, ontology_size: int = len(_EVENT_DEFS)
) -> tuple[list[EventInstance], Ontology, dict[str, str]]:
    """Generate ``n`` instances plus their ontology and a text -> Penman map.

    The map drives the stub parser backend; each instance also embeds its
    graph in the ``amr`` field so caches can be seeded without any backend.
    Arguments surface verbatim in the passage (zero label noise) and the
    graph has one root edge per gold argument, echoing the trigger-concept /
    role-edge correspondence the prefix encoder is meant to exploit.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (1 <= ontology_size <= len(_EVENT_DEFS)):
        raise ValueError(f"ontology_size must be in [1, {len(_EVENT_DEFS)}]")
    rng = random.Random(seed)
    defs = _EVENT_DEFS[:ontology_size]
    ontology = _ontology_for(defs)
    instances = []
    amr_map: dict[str, str] = {}
    for i in range(n):
        edef = defs[rng.randrange(len(defs))]
        inst, penman = _make_instance(rng, f"syn-{i:04d}", edef)
        instances.append(inst)
        amr_map[" ".join(inst.tokens)] = penman
    return instances, ontology, amr_map
