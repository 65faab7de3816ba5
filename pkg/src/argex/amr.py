"""AMR graph data model, Penman reading/writing, DFS linearization, and AMR-token vocabularies.

Graphs are rooted, directed, labeled: each node is a (variable, concept) pair,
each edge a (source, relation, target) triple whose target is either a declared
variable or a constant literal (quoted string, number, "-", "+", ...). A bare
token in target position refers to a declared variable if one with that name
exists anywhere in the graph, otherwise it is a constant — the same rule Penman
itself uses. Directed cycles are rejected; sharing a node through multiple
incoming edges (reentrancy) is allowed.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Iterator, Sequence

from .errors import EmptyCorpus, MalformedPenman, MalformedSequence

Node = tuple[str, str]          # (variable, concept)
Edge = tuple[str, str, str]     # (source variable, relation, target variable-or-constant)

OPEN, CLOSE, SLASH = "(", ")", "/"
STRUCTURE_TOKENS = (OPEN, CLOSE, SLASH)

_VARIABLE_RE = re.compile(r"^[A-Za-z][A-Za-z0-9_-]*$")


def is_relation_token(token: str) -> bool:
    return token.startswith(":") and len(token) > 1


@dataclass(frozen=True)
class AMRGraph:
    """Immutable rooted directed labeled graph of concepts and relations."""

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    root: str

    def __post_init__(self):
        self.validate()

    @property
    def variables(self) -> frozenset[str]:
        return frozenset(v for v, _ in self.nodes)

    def concept(self, var: str) -> str:
        for v, c in self.nodes:
            if v == var:
                return c
        raise KeyError(var)

    def outgoing(self, var: str) -> list[Edge]:
        return [e for e in self.edges if e[0] == var]

    def validate(self) -> None:
        """Check structural invariants; raises MalformedPenman on violation."""
        variables = [v for v, _ in self.nodes]
        if len(set(variables)) != len(variables):
            raise MalformedPenman("duplicate variable declaration")
        declared = set(variables)
        if self.root not in declared:
            raise MalformedPenman(f"root {self.root!r} is not a declared variable")
        for src, rel, _ in self.edges:
            if src not in declared:
                raise MalformedPenman(f"edge source {src!r} is not a declared variable")
            if not is_relation_token(rel):
                raise MalformedPenman(f"relation {rel!r} does not start with ':'")
        self._check_reachable_acyclic(declared)

    def _check_reachable_acyclic(self, declared: set[str]) -> None:
        children: dict[str, list[str]] = {v: [] for v in declared}
        for src, _, tgt in self.edges:
            if tgt in declared:
                children[src].append(tgt)
        # iterative three-color DFS: detects back edges and counts reachability
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {v: WHITE for v in declared}
        stack: list[tuple[str, Iterator[str]]] = [(self.root, iter(children[self.root]))]
        color[self.root] = GRAY
        while stack:
            var, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[var] = BLACK
                stack.pop()
            elif color[nxt] == GRAY:
                raise MalformedPenman(f"cycle through variable {nxt!r}")
            elif color[nxt] == WHITE:
                color[nxt] = GRAY
                stack.append((nxt, iter(children[nxt])))
        unreachable = [v for v in declared if color[v] == WHITE]
        if unreachable:
            raise MalformedPenman(f"unreachable from root: {sorted(unreachable)}")


@dataclass(frozen=True)
class LinearizedAMR:
    """Depth-first token rendering of a graph."""

    tokens: tuple[str, ...]

    def __iter__(self):
        return iter(self.tokens)

    def __len__(self):
        return len(self.tokens)


class VocabMode(str, Enum):
    RELATIONS_ONLY = "relations_only"
    RELATIONS_AND_CONCEPTS = "relations_and_concepts"


@dataclass(frozen=True)
class AMRVocab:
    special_tokens: tuple[str, ...]
    mode: VocabMode

    def __contains__(self, token: str) -> bool:
        return token in set(self.special_tokens)


# ---------------------------------------------------------------------------
# Penman reading / writing


def _tokenize_penman(text: str) -> list[str]:
    tokens = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            tokens.append(ch)
            i += 1
        elif ch == '"':
            j = i + 1
            while j < n and (text[j] != '"' or text[j - 1] == "\\"):
                j += 1
            if j >= n:
                raise MalformedPenman("unterminated string constant")
            tokens.append(text[i:j + 1])
            i = j + 1
        elif ch == "/":
            tokens.append(SLASH)
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in '()/"':
                j += 1
            tokens.append(text[i:j])
            i = j
    return tokens


class _PenmanReader:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0
        self.nodes: list[Node] = []
        self.raw_edges: list[tuple[str, str, str]] = []

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise MalformedPenman("unexpected end of input (unbalanced parentheses?)")
        self.pos += 1
        return tok

    def read_node(self) -> str:
        if self.take() != OPEN:
            raise MalformedPenman("expected '('")
        var = self.take()
        if var in STRUCTURE_TOKENS or is_relation_token(var):
            raise MalformedPenman(f"expected a variable, got {var!r}")
        if not _VARIABLE_RE.match(var):
            raise MalformedPenman(f"invalid variable name {var!r}")
        if self.take() != SLASH:
            raise MalformedPenman(f"missing '/' concept for variable {var!r}")
        concept = self.take()
        if concept in STRUCTURE_TOKENS or is_relation_token(concept):
            raise MalformedPenman(f"expected a concept after '/', got {concept!r}")
        if any(v == var for v, _ in self.nodes):
            raise MalformedPenman(f"duplicate variable declaration {var!r}")
        self.nodes.append((var, concept))
        while True:
            tok = self.peek()
            if tok == CLOSE:
                self.take()
                return var
            if tok is None:
                raise MalformedPenman("unexpected end of input (unbalanced parentheses?)")
            if not is_relation_token(tok):
                raise MalformedPenman(f"expected a relation or ')', got {tok!r}")
            rel = self.take()
            nxt = self.peek()
            if nxt == OPEN:
                target = self.read_node()
            elif nxt is None or nxt in (CLOSE, SLASH) or is_relation_token(nxt):
                raise MalformedPenman(f"relation {rel!r} has no target")
            else:
                target = self.take()
            self.raw_edges.append((var, rel, target))


def parse_penman(text: str) -> AMRGraph:
    """Parse a Penman s-expression into a graph; reentrancies are preserved."""
    tokens = _tokenize_penman(text)
    if not tokens:
        raise MalformedPenman("empty input")
    reader = _PenmanReader(tokens)
    root = reader.read_node()
    if reader.pos != len(tokens):
        raise MalformedPenman(f"trailing content after graph: {tokens[reader.pos]!r}")
    # targets matching a declared variable are reentrancies (forward references allowed)
    return AMRGraph(nodes=tuple(reader.nodes), edges=tuple(reader.raw_edges), root=root)


def to_penman(graph: AMRGraph) -> str:
    """Serialize a graph to a single-line Penman string (all variables kept)."""
    declared = graph.variables
    expanded: set[str] = set()

    def render(var: str) -> str:
        expanded.add(var)
        parts = [f"({var} / {graph.concept(var)}"]
        for _, rel, tgt in graph.outgoing(var):
            if tgt in declared:
                parts.append(f"{rel} {render(tgt)}" if tgt not in expanded else f"{rel} {tgt}")
            else:
                parts.append(f"{rel} {tgt}")
        return " ".join(parts) + ")"

    return render(graph.root)


def read_penman_file(path) -> list[AMRGraph]:
    """Read blank-line-separated Penman records; '#'-prefixed lines are skipped."""
    graphs = []
    with open(path, encoding="utf-8") as fh:
        block: list[str] = []
        for line in fh:
            if line.startswith("#"):
                continue
            if line.strip():
                block.append(line)
            elif block:
                graphs.append(parse_penman("".join(block)))
                block = []
        if block:
            graphs.append(parse_penman("".join(block)))
    return graphs


def write_penman_file(graphs: Iterable[AMRGraph], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n\n".join(to_penman(g) for g in graphs))
        fh.write("\n")


# ---------------------------------------------------------------------------
# Linearization


def _reference_counts(graph: AMRGraph) -> dict[str, int]:
    counts = {v: 0 for v in graph.variables}
    for _, _, tgt in graph.edges:
        if tgt in counts:
            counts[tgt] += 1
    return counts


def linearize(graph: AMRGraph) -> LinearizedAMR:
    """DFS token rendering from the root, children in edge-declaration order.

    Variable ids are dropped except where a node is referenced again: a node
    with more than one incoming edge (or a re-referenced root) is declared as
    "( var / concept ... )" and every later visit emits the bare variable.
    Constants are emitted verbatim without parentheses.
    """
    declared = graph.variables
    # only shared nodes keep their variable; the root can never be a target
    # (an edge into the root would close a cycle, rejected at validation)
    needs_id = {v for v, n in _reference_counts(graph).items() if n >= 2}
    out: list[str] = []
    expanded: set[str] = set()

    def visit(var: str) -> None:
        expanded.add(var)
        out.append(OPEN)
        if var in needs_id:
            out.extend([var, SLASH])
        out.append(graph.concept(var))
        for _, rel, tgt in graph.outgoing(var):
            out.append(rel)
            if tgt not in declared:
                out.append(tgt)
            elif tgt in expanded:
                out.append(tgt)
            else:
                visit(tgt)
        out.append(CLOSE)

    visit(graph.root)
    return LinearizedAMR(tokens=tuple(out))


class _SequenceReader:
    def __init__(self, tokens: Sequence[str]):
        self.tokens = list(tokens)
        self.pos = 0
        self.nodes: list[Node] = []
        self.edges: list[Edge] = []
        self.declared = self._scan_declared()
        self._fresh = 0

    def _scan_declared(self) -> set[str]:
        found = set()
        for i, tok in enumerate(self.tokens):
            if tok == OPEN and i + 2 < len(self.tokens) and self.tokens[i + 2] == SLASH:
                found.add(self.tokens[i + 1])
        return found

    def fresh_var(self) -> str:
        while True:
            cand = f"x{self._fresh}"
            self._fresh += 1
            if cand not in self.declared:
                self.declared.add(cand)
                return cand

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self):
        tok = self.peek()
        if tok is None:
            raise MalformedSequence("unexpected end of sequence")
        self.pos += 1
        return tok

    def read_node(self) -> str:
        if self.take() != OPEN:
            raise MalformedSequence("expected '('")
        tok = self.take()
        if tok in STRUCTURE_TOKENS or is_relation_token(tok):
            raise MalformedSequence(f"expected a concept, got {tok!r}")
        if self.peek() == SLASH:
            self.take()
            var = tok
            concept = self.take()
            if concept in STRUCTURE_TOKENS or is_relation_token(concept):
                raise MalformedSequence(f"expected a concept after '/', got {concept!r}")
            if any(v == var for v, _ in self.nodes):
                raise MalformedSequence(f"duplicate variable declaration {var!r}")
        else:
            var = self.fresh_var()
            concept = tok
        self.nodes.append((var, concept))
        while True:
            tok = self.peek()
            if tok == CLOSE:
                self.take()
                return var
            if tok is None:
                raise MalformedSequence("unbalanced parentheses")
            if not is_relation_token(tok):
                raise MalformedSequence(f"expected a relation or ')', got {tok!r}")
            rel = self.take()
            nxt = self.peek()
            if nxt == OPEN:
                target = self.read_node()
            elif nxt is None or nxt in (CLOSE, SLASH) or is_relation_token(nxt):
                raise MalformedSequence(f"relation {rel!r} has no target")
            else:
                target = self.take()
            self.edges.append((var, rel, target))


def delinearize(seq: LinearizedAMR | Sequence[str]) -> AMRGraph:
    """Rebuild a graph from a linearized token sequence.

    Bare tokens matching a declared variable become reentrancy references;
    anonymous subtrees get fresh variables, so the result is isomorphic to the
    linearization source up to variable renaming.
    """
    tokens = list(seq.tokens if isinstance(seq, LinearizedAMR) else seq)
    if not tokens:
        raise MalformedSequence("empty sequence")
    reader = _SequenceReader(tokens)
    root = reader.read_node()
    if reader.pos != len(tokens):
        raise MalformedSequence(f"trailing tokens after graph: {tokens[reader.pos]!r}")
    try:
        return AMRGraph(nodes=tuple(reader.nodes), edges=tuple(reader.edges), root=root)
    except MalformedPenman as exc:
        raise MalformedSequence(str(exc)) from exc


# ---------------------------------------------------------------------------
# Vocabulary and isomorphism


def build_vocab(corpus: Iterable[AMRGraph], mode: VocabMode | str) -> AMRVocab:
    mode = VocabMode(mode)
    graphs = list(corpus)
    if not graphs:
        raise EmptyCorpus("cannot build an AMR vocabulary from zero graphs")
    relations: set[str] = set()
    concepts: set[str] = set()
    for g in graphs:
        relations.update(rel for _, rel, _ in g.edges)
        concepts.update(c for _, c in g.nodes)
    tokens = sorted(relations)
    if mode is VocabMode.RELATIONS_AND_CONCEPTS:
        tokens += sorted(concepts)
    return AMRVocab(special_tokens=tuple(tokens), mode=mode)


def canonical_form(graph: AMRGraph) -> tuple:
    """Rename variables in DFS first-visit order and list edges in traversal order.

    Two graphs get equal forms iff they are the same rooted structure up to
    variable renaming (per-source edge order preserved; the interleaving of
    edge declarations across sources is irrelevant, as it is to linearize).
    """
    declared = graph.variables
    rename: dict[str, str] = {}
    order: list[str] = []
    edge_seq: list[Edge] = []

    def visit(var: str) -> None:
        rename[var] = f"n{len(rename)}"
        order.append(var)
        for edge in graph.outgoing(var):
            edge_seq.append(edge)
            tgt = edge[2]
            if tgt in declared and tgt not in rename:
                visit(tgt)

    visit(graph.root)
    nodes = tuple((rename[v], graph.concept(v)) for v in order)
    edges = tuple((rename[s], r, rename.get(t, t)) for s, r, t in edge_seq)
    return nodes, edges


def is_isomorphic(a: AMRGraph, b: AMRGraph) -> bool:
    """Structural equality up to variable renaming (edge order preserved)."""
    return canonical_form(a) == canonical_form(b)
