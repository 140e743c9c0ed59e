"""Zero-shot relation splits: sample unseen relations, partition corpora.

A split hides ``m`` relation types from training entirely.  Training keeps
only documents whose labels all use seen relations (by default mixed-label
documents are dropped, not stripped), and evaluation keeps documents with at
least one unseen-relation label, with gold restricted to unseen relations.
"""
from __future__ import annotations

import logging
import random
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Sequence

from .docio import load_json, write_json_atomic
from .model import Corpus, Document, RelationRegistry

logger = logging.getLogger(__name__)

MIXED_POLICIES = ("drop", "strip")


class SplitError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    seed: int
    m: int
    unseen: frozenset[str]
    seen: frozenset[str]

    def __post_init__(self) -> None:
        if self.unseen & self.seen:
            raise SplitError("unseen and seen relation sets overlap")
        if len(self.unseen) != self.m:
            raise SplitError(f"m={self.m} but {len(self.unseen)} unseen relations")

    def to_manifest(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "m": self.m,
            "unseen": sorted(self.unseen),
            "seen": sorted(self.seen),
        }

    @classmethod
    def from_manifest(cls, data: dict[str, Any]) -> "SplitSpec":
        return cls(
            seed=int(data["seed"]),
            m=int(data["m"]),
            unseen=frozenset(data["unseen"]),
            seen=frozenset(data["seen"]),
        )


def save_split_spec(spec: SplitSpec, path: Path | str) -> None:
    write_json_atomic(path, spec.to_manifest())


def load_split_spec(path: Path | str) -> SplitSpec:
    return SplitSpec.from_manifest(load_json(path))


def sample_unseen(registry: RelationRegistry, m: int, seed: int) -> SplitSpec:
    """Uniformly sample ``m`` unseen relations without replacement."""
    ids = registry.ids()
    if not 0 < m < len(ids):
        raise SplitError(f"m must be in (0, {len(ids)}), got {m}")
    rng = random.Random(seed)
    unseen = rng.sample(ids, m)
    return SplitSpec(seed=seed, m=m, unseen=frozenset(unseen),
                     seen=frozenset(ids) - frozenset(unseen))


def make_replicates(registry: RelationRegistry, m: int, seeds: Sequence[int]) -> list[SplitSpec]:
    """One split per seed; seeds must be distinct so replicates are too."""
    if len(set(seeds)) != len(seeds):
        raise SplitError(f"replicate seeds must be distinct, got {list(seeds)}")
    return [sample_unseen(registry, m, seed) for seed in seeds]


@dataclass
class SplitBundle:
    spec: SplitSpec
    train: Corpus
    eval_dev: Corpus
    eval_test: Corpus


def _train_view(corpus: Corpus, spec: SplitSpec, mixed_policy: str) -> Corpus:
    kept: list[Document] = []
    for doc in corpus.documents:
        rels = {lb.relation for lb in doc.labels}
        if rels <= spec.seen:
            kept.append(doc)
        elif mixed_policy == "strip":
            seen_labels = [lb for lb in doc.labels if lb.relation in spec.seen]
            # Only genuinely mixed documents survive stripping; a document
            # with no seen-relation label contributes nothing to training.
            if seen_labels:
                kept.append(replace(doc, labels=seen_labels))
        # mixed_policy == "drop": document leaks unseen facts, exclude it
    return Corpus(documents=kept, provenance=corpus.provenance, registry=corpus.registry)


def _eval_view(corpus: Corpus, spec: SplitSpec) -> Corpus:
    kept = []
    for doc in corpus.documents:
        unseen_labels = [lb for lb in doc.labels if lb.relation in spec.unseen]
        if unseen_labels:
            kept.append(replace(doc, labels=unseen_labels))
    return Corpus(documents=kept, provenance=corpus.provenance, registry=corpus.registry)


def apply_split(
    train_src: Corpus,
    dev_src: Corpus,
    test_src: Corpus,
    spec: SplitSpec,
    mixed_policy: str = "drop",
) -> SplitBundle:
    """Partition source corpora according to a split spec.

    ``mixed_policy`` controls training documents that mix seen and unseen
    labels: ``"drop"`` excludes them (the default, avoids any unseen leakage
    through shared documents), ``"strip"`` keeps them with unseen labels
    removed.
    """
    if mixed_policy not in MIXED_POLICIES:
        raise SplitError(f"mixed_policy must be one of {MIXED_POLICIES}, got {mixed_policy!r}")
    bundle = SplitBundle(
        spec=spec,
        train=_train_view(train_src, spec, mixed_policy),
        eval_dev=_eval_view(dev_src, spec),
        eval_test=_eval_view(test_src, spec),
    )
    for name, corpus in (("eval_dev", bundle.eval_dev), ("eval_test", bundle.eval_test)):
        if not corpus.documents:
            logger.warning("split seed=%d m=%d: %s is empty", spec.seed, spec.m, name)
    return bundle
