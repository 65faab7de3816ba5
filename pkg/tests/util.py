"""Shared helpers for the test suite."""

import random

from argex.amr import AMRGraph

CONCEPTS = [
    "want-01", "go-02", "appeal-01", "give-01", "form-01", "order-01",
    "boy", "girl", "city", "country", "court", "district", "government",
    "person", "organization", "thing", "name", "judge",
]
RELATIONS = [":ARG0", ":ARG1", ":ARG2", ":location", ":time", ":mod", ":op1", ":op2"]
CONSTANTS = ['"New"', '"York"', '"Washington"', "5", "2020", "-", "+"]


def make_random_graph(rng: random.Random, max_nodes: int = 12) -> AMRGraph:
    """Random rooted DAG with reentrancies and constant leaves.

    Nodes are v0..v{n-1}; extra low-to-high edges keep the graph acyclic while
    giving later nodes multiple parents (reentrancy).
    """
    n = rng.randint(1, max_nodes)
    nodes = [(f"v{i}", rng.choice(CONCEPTS)) for i in range(n)]
    edges = []
    for i in range(1, n):
        parent = rng.randrange(i)
        edges.append((f"v{parent}", rng.choice(RELATIONS), f"v{i}"))
    for _ in range(rng.randint(0, 3)):
        if n < 2:
            break
        j = rng.randrange(1, n)
        i = rng.randrange(j)
        edges.append((f"v{i}", rng.choice(RELATIONS), f"v{j}"))
    for _ in range(rng.randint(0, 2)):
        i = rng.randrange(n)
        edges.append((f"v{i}", rng.choice(RELATIONS), rng.choice(CONSTANTS)))
    rng.shuffle(edges)
    return AMRGraph(nodes=tuple(nodes), edges=tuple(edges), root="v0")


def oracle_score(predictions, gold):
    """Brute-force twin of metrics.score: exhaustive optimal matching.

    Only usable on small corpora (<= ~6 arguments per instance); the greedy
    production scorer must agree with it exactly.
    """
    from argex.errors import KeyMismatch
    from argex.metrics import ScoreReport

    def index(items):
        out = {}
        for p in items:
            if p.key in out:
                raise KeyMismatch(f"duplicate key {p.key!r}")
            out[p.key] = p.items
        return out

    by_pred, by_gold = index(predictions), index(gold)
    if set(by_pred) != set(by_gold):
        raise KeyMismatch("keys differ")

    def max_matching(pred_items, gold_items, key):
        best = 0

        def rec(i, used, count):
            nonlocal best
            if i == len(pred_items):
                best = max(best, count)
                return
            rec(i + 1, used, count)
            pk = key(pred_items[i])
            if pk is None:
                return
            for j, g in enumerate(gold_items):
                if j not in used and key(g) == pk:
                    rec(i + 1, used | {j}, count + 1)

        rec(0, frozenset(), 0)
        return best

    span_key = lambda item: item[0]
    pair_key = lambda item: item if item[0] is not None else None

    n_gold = n_pred = correct_i = correct_c = 0
    for key in by_gold:
        gold_items, pred_items = by_gold[key], by_pred[key]
        n_gold += len(gold_items)
        n_pred += len(pred_items)
        correct_i += max_matching(pred_items, gold_items, span_key)
        correct_c += max_matching(pred_items, gold_items, pair_key)
    return ScoreReport(n_gold, n_pred, correct_i, correct_c)


def make_random_scoring_case(rng, n_instances=20, max_args=6):
    """Random aligned (predictions, gold) lists exercising every match shape."""
    from argex.metrics import Prediction

    roles = ["Agent", "Patient", "Place", "Instrument"]
    predictions, gold = [], []
    for i in range(n_instances):
        key = f"doc{i}|0:1|T"
        gold_items = []
        for _ in range(rng.randint(0, max_args)):
            s = rng.randrange(8)
            gold_items.append(((s, s + rng.randint(1, 2)), rng.choice(roles)))
        pred_items = []
        for _ in range(rng.randint(0, max_args)):
            shape = rng.random()
            if gold_items and shape < 0.5:
                span, role = gold_items[rng.randrange(len(gold_items))]
                if rng.random() < 0.3:
                    role = rng.choice(roles)
                pred_items.append((span, role))
            elif shape < 0.85:
                s = rng.randrange(8)
                pred_items.append(((s, s + rng.randint(1, 2)), rng.choice(roles)))
            else:
                pred_items.append((None, rng.choice(roles)))
        predictions.append(Prediction(key, tuple(pred_items)))
        gold.append(Prediction(key, tuple(gold_items)))
    return predictions, gold
