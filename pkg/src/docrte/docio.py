"""Serialization: canonical JSON, the corpus container format, and converters.

Every artifact the pipeline writes goes through :func:`canonical_dumps` +
:func:`write_text_atomic`, which is what makes reruns byte-identical and lets
stage digests double as change detection.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any

from .model import (
    Corpus,
    Document,
    Entity,
    EntityMention,
    RelationRegistry,
    RelationType,
    TripletLabel,
    validate_corpus,
)

CORPUS_VERSION = 1


class ParseError(ValueError):
    """Raised for malformed input files (JSON syntax or schema violations)."""


class CorpusFormatError(ParseError):
    """Raised when a corpus file's version tag is missing or incompatible."""


# ---------------------------------------------------------------------------
# canonical JSON plumbing


def canonical_dumps(obj: Any) -> str:
    """Serialize to deterministic JSON: sorted keys, stable separators, newline."""
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_text_atomic(path: Path | str, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_json_atomic(path: Path | str, obj: Any) -> None:
    write_text_atomic(path, canonical_dumps(obj))


def load_json(path: Path | str) -> Any:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: malformed JSON at offset {exc.pos}: {exc.msg}") from exc


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def file_digest(path: Path | str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# relation registry


def load_registry(path: Path | str) -> RelationRegistry:
    """Load a relation registry.

    Two layouts are accepted: a flat ``{"P57": "director", ...}`` mapping
    (the common rel_info layout), or a list of
    ``{"id": ..., "name": ..., "description": ...}`` records (optionally under
    a top-level ``"relations"`` key).
    """
    data = load_json(path)
    if isinstance(data, dict) and "relations" in data:
        data = data["relations"]
    if isinstance(data, dict):
        relations = []
        for rid, value in data.items():
            if isinstance(value, dict):
                if "name" not in value:
                    raise ParseError(f"{path}: registry entry {rid!r} has no 'name'")
                relations.append(RelationType(id=rid, name=str(value["name"]),
                                              description=value.get("description")))
            else:
                relations.append(RelationType(id=rid, name=str(value)))
    elif isinstance(data, list):
        relations = []
        for row in data:
            if not isinstance(row, dict) or "id" not in row or "name" not in row:
                raise ParseError(f"{path}: registry rows need 'id' and 'name': {row!r}")
            relations.append(
                RelationType(id=str(row["id"]), name=str(row["name"]),
                             description=row.get("description"))
            )
    else:
        raise ParseError(f"{path}: unrecognized registry layout ({type(data).__name__})")
    return RelationRegistry(relations)


# ---------------------------------------------------------------------------
# canonical corpus format


def _mention_to_json(m: EntityMention) -> dict[str, Any]:
    return {"name": m.name, "sent_id": m.sent_id, "start": m.start, "end": m.end,
            "etype": m.etype}


def _entity_to_json(e: Entity) -> dict[str, Any]:
    return {
        "canonical_name": e.canonical_name,
        "key": e.key,
        "mentions": [_mention_to_json(m) for m in e.mentions],
    }


def _label_to_json(label: TripletLabel) -> dict[str, Any]:
    return {
        "head": label.head,
        "tail": label.tail,
        "relation": label.relation,
        "evidence": list(label.evidence),
        "reason": label.reason,
        "support": list(label.support) if label.support is not None else None,
    }


def document_to_json(doc: Document) -> dict[str, Any]:
    return {
        "doc_id": doc.doc_id,
        "title": doc.title,
        "sentences": [list(sent) for sent in doc.sentences],
        "entities": [_entity_to_json(e) for e in doc.entities],
        "labels": [_label_to_json(lb) for lb in doc.labels],
    }


def document_from_json(row: dict[str, Any]) -> Document:
    try:
        entities = [
            Entity(
                canonical_name=e["canonical_name"],
                mentions=[EntityMention(**m) for m in e["mentions"]],
            )
            for e in row["entities"]
        ]
        labels = [
            TripletLabel(
                head=lb["head"],
                tail=lb["tail"],
                relation=lb["relation"],
                evidence=list(lb.get("evidence") or []),
                reason=lb.get("reason"),
                support=list(lb["support"]) if lb.get("support") is not None else None,
            )
            for lb in row["labels"]
        ]
        return Document(
            doc_id=row["doc_id"],
            title=row["title"],
            sentences=[list(s) for s in row["sentences"]],
            entities=entities,
            labels=labels,
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed document record ({exc!r}): {row.get('doc_id')!r}") from exc


def corpus_to_json(corpus: Corpus) -> dict[str, Any]:
    return {
        "version": CORPUS_VERSION,
        "provenance": corpus.provenance,
        "documents": [document_to_json(d) for d in corpus.documents],
    }


def save_corpus(corpus: Corpus, path: Path | str) -> None:
    write_json_atomic(path, corpus_to_json(corpus))


def load_corpus(path: Path | str, registry: RelationRegistry | None = None) -> Corpus:
    data = load_json(path)
    if not isinstance(data, dict) or "version" not in data:
        raise CorpusFormatError(f"{path}: not a corpus file (missing version tag)")
    if data["version"] != CORPUS_VERSION:
        raise CorpusFormatError(
            f"{path}: corpus version {data['version']!r} is not supported "
            f"(expected {CORPUS_VERSION})"
        )
    corpus = Corpus(
        documents=[document_from_json(row) for row in data["documents"]],
        provenance=data["provenance"],
        registry=registry,
    )
    validate_corpus(corpus, registry)
    return corpus


# ---------------------------------------------------------------------------
# DocRED-style interchange


def load_docred(path: Path | str, registry: RelationRegistry) -> Corpus:
    """Read a DocRED-format JSON array into a human-provenance corpus.

    Expected per-document schema: ``title``, ``sents`` (token lists),
    ``vertexSet`` (list of mention clusters with ``pos`` = [start, end)),
    ``labels`` (``h``/``t`` vertex indices, ``r`` relation id, ``evidence``).
    Titles double as document ids and must be unique.
    """
    data = load_json(path)
    if not isinstance(data, list):
        raise ParseError(f"{path}: expected a top-level JSON array of documents")
    documents = []
    for row in data:
        title = row.get("title")
        if not title:
            raise ParseError(f"{path}: document without title: {row!r}")
        sents = row.get("sents") or []
        entities = []
        for cluster in row.get("vertexSet") or []:
            if not cluster:
                raise ParseError(f"{path}: {title!r} has an empty vertex cluster")
            mentions = []
            for m in cluster:
                start, end = m.get("pos", (None, None))
                sent_id = m.get("sent_id", -1)
                if (
                    not 0 <= sent_id < len(sents)
                    or start is None
                    or not 0 <= start < end <= len(sents[sent_id])
                ):
                    raise ParseError(
                        f"{path}: {title!r} mention {m.get('name')!r} has out-of-range "
                        f"span {m.get('pos')!r} in sentence {sent_id}"
                    )
                mentions.append(
                    EntityMention(name=m["name"], sent_id=sent_id, start=start,
                                  end=end, etype=m.get("type", "MISC"))
                )
            entities.append(Entity(canonical_name=mentions[0].name, mentions=mentions))
        labels = []
        for lb in row.get("labels") or []:
            rel = lb.get("r")
            if rel not in registry:
                raise ParseError(
                    f"{path}: {title!r} uses unknown relation id {rel!r}"
                )
            labels.append(
                TripletLabel(
                    head=lb["h"],
                    tail=lb["t"],
                    relation=rel,
                    evidence=list(lb.get("evidence") or []),
                )
            )
        documents.append(
            Document(doc_id=title, title=title, sentences=[list(s) for s in sents],
                     entities=entities, labels=labels)
        )
    corpus = Corpus(documents=documents, provenance="human", registry=registry)
    validate_corpus(corpus, registry)
    return corpus


def save_docred(corpus: Corpus, path: Path | str) -> None:
    """Write a corpus back out in DocRED layout (reason/support are dropped)."""
    rows = []
    for doc in corpus.documents:
        rows.append(
            {
                "title": doc.title,
                "sents": [list(s) for s in doc.sentences],
                "vertexSet": [
                    [
                        {"name": m.name, "sent_id": m.sent_id,
                         "pos": [m.start, m.end], "type": m.etype}
                        for m in ent.mentions
                    ]
                    for ent in doc.entities
                ],
                "labels": [
                    {"h": lb.head, "t": lb.tail, "r": lb.relation,
                     "evidence": list(lb.evidence)}
                    for lb in doc.labels
                ],
            }
        )
    write_json_atomic(path, rows)
