"""Persistence, splitting, and statistics for conflict-triple datasets.

Datasets are UTF-8 JSONL, one record per line with keys in a fixed order, so
files diff cleanly and round-trip byte-identically. Appends are single-writer
under an advisory lock and flushed line by line.
"""

from __future__ import annotations

import fcntl
import json
import random
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .scene_graph import ConflictType
from .synthesis import ConflictTriple, ReviewStatus, TripleProvenance
from .textmetrics import tokenize

SCHEMA_VERSION = 1


class DatasetError(Exception):
    pass


class DuplicateIdError(DatasetError):
    def __init__(self, record_id: str, line_number: int | None = None):
        location = f" (line {line_number})" if line_number else ""
        super().__init__(f"duplicate record_id {record_id!r}{location}")
        self.record_id = record_id
        self.line_number = line_number


class DatasetParseError(DatasetError):
    def __init__(self, line_number: int, reason: str):
        super().__init__(f"line {line_number}: {reason}")
        self.line_number = line_number
        self.reason = reason


def triple_to_dict(triple: ConflictTriple) -> dict:
    """Serialize with a fixed key order (the on-disk line shape)."""
    return {
        "schema_version": SCHEMA_VERSION,
        "record_id": triple.record_id,
        "image_id": triple.image_id,
        "conflict_type": triple.conflict_type.value,
        "question": triple.question,
        "answer": triple.answer,
        "provenance": {
            "base_question": triple.provenance.base_question,
            "base_answer": triple.provenance.base_answer,
            "components_modified": list(triple.provenance.components_modified),
            "prompts_used": list(triple.provenance.prompts_used),
        },
        "review_status": triple.review_status.value,
        "edited_question": triple.edited_question,
        "edited_answer": triple.edited_answer,
    }


def triple_from_dict(raw: dict) -> ConflictTriple:
    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValueError(f"unrecognized schema_version {version!r}")
    provenance = raw.get("provenance", {})
    return ConflictTriple(
        record_id=str(raw["record_id"]),
        image_id=str(raw["image_id"]),
        conflict_type=ConflictType(raw["conflict_type"]),
        question=raw["question"],
        answer=raw["answer"],
        provenance=TripleProvenance(
            base_question=provenance.get("base_question", ""),
            base_answer=provenance.get("base_answer", ""),
            components_modified=tuple(provenance.get("components_modified", ())),
            prompts_used=tuple(provenance.get("prompts_used", ())),
        ),
        review_status=ReviewStatus(raw.get("review_status", "pending")),
        edited_question=raw.get("edited_question"),
        edited_answer=raw.get("edited_answer"),
    )


def triple_to_line(triple: ConflictTriple) -> str:
    return json.dumps(triple_to_dict(triple), ensure_ascii=False)


@dataclass
class DatasetFile:
    """An ordered collection of triples, optionally bound to a path."""

    records: list[ConflictTriple]
    path: Path | None = None
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        ids = [record.record_id for record in self.records]
        if len(ids) != len(set(ids)):
            raise DatasetError("record_ids must be unique")

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, ConflictTriple]:
        return {record.record_id: record for record in self.records}


def write(dataset: DatasetFile, path: str | Path) -> Path:
    """Write the whole dataset as JSONL (atomically: temp file then rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as handle:
        for record in dataset.records:
            handle.write(triple_to_line(record) + "\n")
        handle.flush()
    tmp.replace(path)
    return path


def append(path: str | Path, triple: ConflictTriple) -> None:
    """Append one record; write-then-flush, guarded by an advisory lock."""
    path = Path(path)
    existing: set[str] = set()
    if path.exists():
        existing = {record.record_id for record in load(path).records}
    if triple.record_id in existing:
        raise DuplicateIdError(triple.record_id)
    with open(path, "a", encoding="utf-8") as handle:
        fcntl.flock(handle.fileno(), fcntl.LOCK_EX)
        try:
            handle.write(triple_to_line(triple) + "\n")
            handle.flush()
        finally:
            fcntl.flock(handle.fileno(), fcntl.LOCK_UN)


def _parse_lines(path: Path) -> tuple[list[ConflictTriple], list[DatasetParseError]]:
    records: list[ConflictTriple] = []
    issues: list[DatasetParseError] = []
    seen: dict[str, int] = {}
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                triple = triple_from_dict(raw)
            except (ValueError, KeyError, TypeError) as exc:
                issues.append(DatasetParseError(line_number, str(exc)))
                continue
            if triple.record_id in seen:
                issues.append(
                    DatasetParseError(
                        line_number,
                        f"duplicate record_id {triple.record_id!r} "
                        f"(first seen line {seen[triple.record_id]})",
                    )
                )
                continue
            seen[triple.record_id] = line_number
            records.append(triple)
    return records, issues


def load(path: str | Path) -> DatasetFile:
    """Load and validate a dataset; the first bad line raises with its number."""
    path = Path(path)
    records, issues = _parse_lines(path)
    if issues:
        raise issues[0]
    return DatasetFile(records=records, path=path)


def load_lenient(path: str | Path) -> tuple[DatasetFile, list[DatasetParseError]]:
    """Load a dataset keeping every parseable line; bad lines are reported."""
    path = Path(path)
    records, issues = _parse_lines(path)
    return DatasetFile(records=records, path=path), issues


@dataclass(frozen=True)
class SplitSpec:
    train_ratio: float
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0 < self.train_ratio < 1:
            raise ValueError("train_ratio must lie strictly between 0 and 1")


def _split_records(
    records: list[ConflictTriple], ratio: float, rng: random.Random
) -> tuple[list[ConflictTriple], list[ConflictTriple]]:
    shuffled = records[:]
    rng.shuffle(shuffled)
    cut = int(len(shuffled) * ratio)
    return shuffled[:cut], shuffled[cut:]


def split(
    dataset: DatasetFile, spec: SplitSpec, *, stratified: bool = False
) -> tuple[DatasetFile, DatasetFile]:
    """Seeded shuffle split: first floor(n * ratio) records go to train.

    Stratified mode applies the same floor rule inside each conflict type, so
    the global train size may differ from floor(n * ratio) by up to the
    number of types.
    """
    if not dataset.records:
        raise DatasetError("cannot split an empty dataset")
    rng = random.Random(spec.seed)
    if not stratified:
        train, test = _split_records(dataset.records, spec.train_ratio, rng)
    else:
        train, test = [], []
        for kind in ConflictType:
            bucket = [r for r in dataset.records if r.conflict_type is kind]
            if not bucket:
                continue
            bucket_train, bucket_test = _split_records(bucket, spec.train_ratio, rng)
            train.extend(bucket_train)
            test.extend(bucket_test)
    return DatasetFile(records=train), DatasetFile(records=test)


@dataclass(frozen=True)
class DatasetStats:
    n: int
    type_counts: dict[str, int]
    type_fractions: dict[str, float]
    review_status_counts: dict[str, int]
    mean_question_tokens: float
    mean_answer_tokens: float
    top_tokens: dict[str, dict[str, list[tuple[str, int]]]]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "type_counts": self.type_counts,
            "type_fractions": self.type_fractions,
            "review_status_counts": self.review_status_counts,
            "mean_question_tokens": self.mean_question_tokens,
            "mean_answer_tokens": self.mean_answer_tokens,
            "top_tokens": {
                kind: {field: [[token, count] for token, count in entries]
                       for field, entries in fields.items()}
                for kind, fields in self.top_tokens.items()
            },
        }

    def to_table(self) -> str:
        lines = [f"records: {self.n}"]
        lines.append("conflict types:")
        for kind in sorted(self.type_counts):
            lines.append(
                f"  {kind:<13} {self.type_counts[kind]:>8} "
                f"({self.type_fractions[kind]:.4f})"
            )
        lines.append("review status:")
        for status in sorted(self.review_status_counts):
            lines.append(f"  {status:<13} {self.review_status_counts[status]:>8}")
        lines.append(f"mean question tokens: {self.mean_question_tokens:.2f}")
        lines.append(f"mean answer tokens:   {self.mean_answer_tokens:.2f}")
        return "\n".join(lines)


def stats(dataset: DatasetFile, *, top_k: int = 20) -> DatasetStats:
    """Exact counts and per-type token frequency tables for a dataset."""
    records = dataset.records
    n = len(records)
    type_counts = {kind.value: 0 for kind in ConflictType}
    status_counts = {status.value: 0 for status in ReviewStatus}
    question_lengths: list[int] = []
    answer_lengths: list[int] = []
    token_counters: dict[str, dict[str, Counter]] = {
        kind.value: {"question": Counter(), "answer": Counter()} for kind in ConflictType
    }
    for record in records:
        kind = record.conflict_type.value
        type_counts[kind] += 1
        status_counts[record.review_status.value] += 1
        question_tokens = tokenize(record.question)
        answer_tokens = tokenize(record.answer)
        question_lengths.append(len(question_tokens))
        answer_lengths.append(len(answer_tokens))
        token_counters[kind]["question"].update(question_tokens)
        token_counters[kind]["answer"].update(answer_tokens)
    fractions = {
        kind: (count / n if n else 0.0) for kind, count in type_counts.items()
    }
    top_tokens = {
        kind: {
            field: sorted(counter.items(), key=lambda item: (-item[1], item[0]))[:top_k]
            for field, counter in fields.items()
        }
        for kind, fields in token_counters.items()
    }
    return DatasetStats(
        n=n,
        type_counts=type_counts,
        type_fractions=fractions,
        review_status_counts=status_counts,
        mean_question_tokens=sum(question_lengths) / n if n else 0.0,
        mean_answer_tokens=sum(answer_lengths) / n if n else 0.0,
        top_tokens=top_tokens,
    )
