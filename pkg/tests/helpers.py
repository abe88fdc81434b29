"""Shared builders and independent oracles used across the test suite.

The oracle implementations here restate the conflict definitions and the
LCS/ROUGE formulas literally (explicit loops and enumeration) so they stay
independent of the library code paths they check.
"""

from __future__ import annotations

import random
from itertools import combinations
from pathlib import Path

from conflictkit.scene_graph import (
    ConflictType,
    ObjectEntity,
    Relationship,
    SceneGraph,
    TextAnalysis,
)
from conflictkit.synthesis import ConflictTriple, TripleProvenance

DATA_DIR = Path(__file__).parent / "data"
FIXTURE_DIR = Path(__file__).parent / "fixtures"

NAME_POOL = ["dog", "cat", "apple", "table", "floor", "sea", "ball", "zebra"]
SCENE_NAME_POOL = NAME_POOL[:6]
ATTRIBUTE_POOL = ["red", "green", "brown"]
PREDICATE_POOL = ["on", "under", "near"]


def make_triple(
    record_id: str,
    *,
    image_id: str | None = None,
    conflict_type: ConflictType = ConflictType.OBJECT,
    question: str | None = None,
    answer: str | None = None,
    **kwargs,
) -> ConflictTriple:
    return ConflictTriple(
        record_id=record_id,
        image_id=image_id or f"img-{record_id}",
        conflict_type=conflict_type,
        question=question or f"Synthesized question {record_id}?",
        answer=answer or f"Answer for {record_id}.",
        provenance=TripleProvenance(
            base_question=f"Base question {record_id}?",
            base_answer=f"Base answer {record_id}.",
        ),
        **kwargs,
    )


def _norm(raw: str) -> str:
    return " ".join(raw.lower().split())


def oracle_object_conflict(text: TextAnalysis, scene: SceneGraph) -> bool:
    scene_names = {_norm(obj.name) for obj in scene.objects}
    for entity in text.objects:
        if _norm(entity.name) not in scene_names:
            return True
    return False


def oracle_attribute_conflict(text: TextAnalysis, scene: SceneGraph) -> bool:
    if oracle_object_conflict(text, scene):
        return False
    for entity in text.objects:
        asserted = {_norm(a) for a in entity.attributes}
        if not asserted:
            continue
        satisfied = False
        for candidate in scene.objects:
            if _norm(candidate.name) != _norm(entity.name):
                continue
            found = {_norm(a) for a in candidate.attributes}
            if asserted.issubset(found):
                satisfied = True
        if not satisfied:
            return True
    return False


def oracle_relationship_conflict(text: TextAnalysis, scene: SceneGraph) -> bool:
    if oracle_object_conflict(text, scene):
        return False
    text_name = {obj.id: _norm(obj.name) for obj in text.objects}
    scene_name = {obj.id: _norm(obj.name) for obj in scene.objects}
    for rel in text.relationships:
        matched = False
        for candidate in scene.relationships:
            if (
                scene_name[candidate.subject_id] == text_name[rel.subject_id]
                and scene_name[candidate.object_id] == text_name[rel.object_id]
                and _norm(candidate.predicate) == _norm(rel.predicate)
            ):
                matched = True
        if not matched:
            return True
    return False


def oracle_classify(text: TextAnalysis, scene: SceneGraph) -> ConflictType | None:
    if oracle_object_conflict(text, scene):
        return ConflictType.OBJECT
    if oracle_attribute_conflict(text, scene):
        return ConflictType.ATTRIBUTE
    if oracle_relationship_conflict(text, scene):
        return ConflictType.RELATIONSHIP
    return None


def random_scene(rng: random.Random) -> SceneGraph:
    n_objects = rng.randint(1, 6)
    objects = tuple(
        ObjectEntity(
            id=f"s{i}",
            name=rng.choice(SCENE_NAME_POOL),
            attributes=frozenset(
                rng.sample(ATTRIBUTE_POOL, rng.randint(0, 3))
            ),
        )
        for i in range(n_objects)
    )
    relationships = []
    for _ in range(rng.randint(0, 6)):
        subject = rng.randrange(n_objects)
        target = rng.randrange(n_objects)
        relationships.append(
            Relationship(f"s{subject}", rng.choice(PREDICATE_POOL), f"s{target}")
        )
    return SceneGraph("img", objects, tuple(relationships))


def random_text_analysis(rng: random.Random, scene: SceneGraph) -> TextAnalysis:
    """Random text assertions biased to overlap the scene's vocabulary."""
    n_objects = rng.randint(0, 4)
    scene_names = [obj.name for obj in scene.objects]
    objects = []
    for i in range(n_objects):
        if scene_names and rng.random() < 0.7:
            name = rng.choice(scene_names)
        else:
            name = rng.choice(NAME_POOL)
        objects.append(
            ObjectEntity(
                id=f"t{i}",
                name=name,
                attributes=frozenset(rng.sample(ATTRIBUTE_POOL, rng.randint(0, 2))),
            )
        )
    relationships = []
    if objects:
        for _ in range(rng.randint(0, 3)):
            subject = rng.randrange(len(objects))
            target = rng.randrange(len(objects))
            relationships.append(
                Relationship(
                    f"t{subject}", rng.choice(PREDICATE_POOL), f"t{target}"
                )
            )
    return TextAnalysis(tuple(objects), tuple(relationships))


def all_subsequences(tokens: tuple[str, ...]) -> set[tuple[str, ...]]:
    found: set[tuple[str, ...]] = set()
    for length in range(len(tokens) + 1):
        for indices in combinations(range(len(tokens)), length):
            found.add(tuple(tokens[i] for i in indices))
    return found


def oracle_lcs(a: tuple[str, ...], b: tuple[str, ...]) -> int:
    common = all_subsequences(a) & all_subsequences(b)
    return max(len(sub) for sub in common)


def oracle_rouge(a: tuple[str, ...], b: tuple[str, ...], beta: float = 1.0):
    """(precision, recall, f) via subsequence enumeration."""
    if not a or not b:
        return 0.0, 0.0, 0.0
    lcs = oracle_lcs(a, b)
    precision = lcs / len(a)
    recall = lcs / len(b)
    denominator = recall + beta**2 * precision
    if denominator == 0:
        return precision, recall, 0.0
    return precision, recall, (1 + beta**2) * recall * precision / denominator
