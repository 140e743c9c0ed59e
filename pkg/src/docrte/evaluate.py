"""Micro-averaged evaluation for zero-shot relation triplet extraction.

Two task variants share the counting logic: RTE scores (head text, tail
text, relation) predictions by normalized-name matching against gold entity
clusters; RE scores (head index, tail index, relation) predictions exactly.
Matching is greedy one-to-one in prediction order, so a gold label can
absorb at most one prediction.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .docio import load_json, write_json_atomic
from .model import Corpus, Document, EntityKeyError, TripletLabel, normalize_entity_key


class EvaluationError(ValueError):
    pass


@dataclass
class RelationScore:
    precision: float
    recall: float
    f1: float
    support: int

    def to_json(self) -> dict[str, Any]:
        return {"precision": self.precision, "recall": self.recall,
                "f1": self.f1, "support": self.support}


@dataclass
class EvalResult:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    per_relation: dict[str, RelationScore] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "per_relation": {r: s.to_json() for r, s in sorted(self.per_relation.items())},
        }


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision/recall/F1 with the 0/0 -> 0 convention at every level."""
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def _gold_name_keys(doc: Document, entity_index: int) -> set[str]:
    """Normalized names a prediction may use for this entity: canonical + mentions."""
    ent = doc.entities[entity_index]
    keys = {ent.key}
    for m in ent.mentions:
        try:
            keys.add(normalize_entity_key(m.name))
        except EntityKeyError:
            pass
    return keys


def match_triplet(
    pred: tuple[str, str, str], doc: Document, exclude: set[int] | None = None
) -> int | None:
    """Index of the first gold label matching an RTE prediction, else None.

    A prediction (head text, tail text, relation id) matches a gold label
    when the relation id is equal and each predicted name normalizes to the
    gold entity's canonical name or any of its mention names.
    """
    head_text, tail_text, relation = pred
    try:
        head_key = normalize_entity_key(head_text)
        tail_key = normalize_entity_key(tail_text)
    except EntityKeyError:
        return None
    exclude = exclude or set()
    for i, label in enumerate(doc.labels):
        if i in exclude or label.relation != relation:
            continue
        if head_key in _gold_name_keys(doc, label.head) and \
                tail_key in _gold_name_keys(doc, label.tail):
            return i
    return None


class _Counter:
    def __init__(self) -> None:
        self.tp: dict[str, int] = {}
        self.fp: dict[str, int] = {}
        self.fn: dict[str, int] = {}

    def bump(self, bucket: dict[str, int], relation: str) -> None:
        bucket[relation] = bucket.get(relation, 0) + 1

    def result(self) -> EvalResult:
        relations = sorted(set(self.tp) | set(self.fp) | set(self.fn))
        per_relation = {}
        for rel in relations:
            tp, fp, fn = self.tp.get(rel, 0), self.fp.get(rel, 0), self.fn.get(rel, 0)
            p, r, f1 = _prf(tp, fp, fn)
            per_relation[rel] = RelationScore(p, r, f1, support=tp + fn)
        tp, fp, fn = sum(self.tp.values()), sum(self.fp.values()), sum(self.fn.values())
        p, r, f1 = _prf(tp, fp, fn)
        return EvalResult(p, r, f1, tp, fp, fn, per_relation)


def _evaluate(
    predictions: Mapping[str, Sequence[tuple]],
    gold: Corpus,
    unseen: set[str],
    strict_seen: bool,
    matcher,
) -> EvalResult:
    docs = gold.by_id()
    stray = sorted(set(predictions) - set(docs))
    if stray:
        raise EvaluationError(
            f"predictions reference unknown document id(s): {stray[:5]}"
        )
    counter = _Counter()
    for doc_id, doc in docs.items():
        matched: set[int] = set()
        for pred in predictions.get(doc_id, ()):  # prediction order is match order
            relation = pred[2]
            if relation not in unseen:
                if strict_seen:
                    counter.bump(counter.fp, relation)
                continue
            hit = matcher(pred, doc, matched)
            if hit is None:
                counter.bump(counter.fp, relation)
            else:
                matched.add(hit)
                counter.bump(counter.tp, relation)
        for i, label in enumerate(doc.labels):
            if i not in matched:
                counter.bump(counter.fn, label.relation)
    return counter.result()


def evaluate_rte(
    predictions: Mapping[str, Sequence[tuple[str, str, str]]],
    gold: Corpus,
    unseen: Sequence[str] | set[str],
    strict_seen: bool = False,
) -> EvalResult:
    """Score name-based triplet predictions against a gold corpus.

    ``gold`` is expected to carry only unseen-relation labels (the split
    bundle guarantees this for its eval corpora).  Predictions for seen
    relations are ignored by default; with ``strict_seen`` they count as
    false positives.
    """
    return _evaluate(predictions, gold, set(unseen), strict_seen, match_triplet)


def _match_re(pred: tuple[int, int, str], doc: Document, exclude: set[int]) -> int | None:
    head, tail, relation = pred
    n = len(doc.entities)
    if not 0 <= head < n or not 0 <= tail < n:
        raise EvaluationError(
            f"{doc.doc_id}: prediction indexes entity {max(head, tail)} "
            f"but the document has {n} entities"
        )
    for i, label in enumerate(doc.labels):
        if i in exclude:
            continue
        if label.head == head and label.tail == tail and label.relation == relation:
            return i
    return None


def evaluate_re(
    predictions: Mapping[str, Sequence[tuple[int, int, str]]],
    gold: Corpus,
    unseen: Sequence[str] | set[str],
    strict_seen: bool = False,
) -> EvalResult:
    """Score index-based (head, tail, relation) predictions exactly."""
    return _evaluate(predictions, gold, set(unseen), strict_seen, _match_re)


@dataclass
class AggregateResult:
    mean: float
    std: float
    n: int

    def render(self) -> str:
        return f"{self.mean:.1f} ± {self.std:.1f}"


def aggregate_scores(scores: Sequence[float]) -> AggregateResult:
    """Mean and sample standard deviation (N-1) of replicate scores."""
    if not scores:
        raise EvaluationError("cannot aggregate zero replicate scores")
    mean = statistics.mean(scores)
    std = statistics.stdev(scores) if len(scores) > 1 else 0.0
    return AggregateResult(mean=mean, std=std, n=len(scores))


def aggregate(results: Sequence[EvalResult]) -> AggregateResult:
    """Aggregate replicate F1 scores on the 0-100 scale used in reports."""
    return aggregate_scores([r.f1 * 100.0 for r in results])


# ---------------------------------------------------------------------------
# predictions file format: {doc_id: [{"head": ..., "tail": ..., "relation": ...}]}


def load_predictions(path: Path | str) -> dict[str, list[tuple[str, str, str]]]:
    data = load_json(path)
    if not isinstance(data, dict):
        raise EvaluationError(f"{path}: predictions file must be a JSON object")
    out: dict[str, list[tuple[str, str, str]]] = {}
    for doc_id, rows in data.items():
        preds = []
        for row in rows:
            try:
                preds.append((row["head"], row["tail"], row["relation"]))
            except (KeyError, TypeError) as exc:
                raise EvaluationError(
                    f"{path}: bad prediction row for {doc_id!r}: {row!r}"
                ) from exc
        out[doc_id] = preds
    return out


def save_predictions(
    predictions: Mapping[str, Sequence[tuple[str, str, str]]], path: Path | str
) -> None:
    write_json_atomic(
        path,
        {
            doc_id: [{"head": h, "tail": t, "relation": r} for h, t, r in rows]
            for doc_id, rows in sorted(predictions.items())
        },
    )
