"""Scene-graph domain types and visual/textual conflict classifiers.

A scene graph holds the annotated content of one image: objects, their
attribute strings, and subject-predicate-object relationships. A
``TextAnalysis`` holds the same kinds of assertions extracted from a
question. The three ``check_*_conflict`` predicates decide whether the text
contradicts the scene at the object, attribute, or relationship level; all
comparisons are name-level and run through :func:`normalize_name`.

Everything here is immutable and pure: same inputs, same outputs, no
dependence on set iteration order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, Sequence


class InvalidNameError(ValueError):
    """A name normalized to the empty string."""


def normalize_name(raw: str, vocabulary: Iterable[str] | None = None) -> str:
    """Normalize a noun/attribute/predicate string for comparison.

    Lowercases, strips surrounding whitespace, and collapses internal runs of
    whitespace to single spaces. A trailing plural ``s`` is removed only when
    the de-pluralized form occurs in *vocabulary*; without a vocabulary the
    word is left untouched.
    """
    name = " ".join(raw.lower().split())
    if not name:
        raise InvalidNameError(f"name {raw!r} is empty after normalization")
    if vocabulary is not None and name.endswith("s"):
        singular = name[:-1]
        vocab = {" ".join(v.lower().split()) for v in vocabulary}
        if singular and singular in vocab:
            name = singular
    return name


class ConflictType(Enum):
    OBJECT = "object"
    ATTRIBUTE = "attribute"
    RELATIONSHIP = "relationship"


@dataclass(frozen=True)
class ObjectEntity:
    """One annotated or asserted object with its attribute strings."""

    id: str
    name: str
    attributes: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(self, "attributes", frozenset(self.attributes))
        if not self.name.strip():
            raise ValueError(f"object {self.id!r} has an empty name")
        if any(not a.strip() for a in self.attributes):
            raise ValueError(f"object {self.id!r} has an empty attribute string")


@dataclass(frozen=True)
class Relationship:
    """Directed subject-predicate-object edge between two objects."""

    subject_id: str
    predicate: str
    object_id: str

    def __post_init__(self) -> None:
        if not self.predicate.strip():
            raise ValueError("relationship predicate must be non-empty")

    @property
    def is_reflexive(self) -> bool:
        """True when subject and object are the same entity (allowed, flagged)."""
        return self.subject_id == self.object_id


def _check_referential_integrity(
    objects: Sequence[ObjectEntity], relationships: Sequence[Relationship]
) -> None:
    ids = [o.id for o in objects]
    if len(ids) != len(set(ids)):
        raise ValueError("object ids must be unique")
    known = set(ids)
    for rel in relationships:
        if rel.subject_id not in known or rel.object_id not in known:
            raise ValueError(
                f"relationship ({rel.subject_id}, {rel.predicate}, {rel.object_id})"
                " references an unknown object id"
            )


@dataclass(frozen=True)
class SceneGraph:
    """All annotated objects and relationships of one image."""

    image_id: str
    objects: tuple[ObjectEntity, ...] = ()
    relationships: tuple[Relationship, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "relationships", tuple(self.relationships))
        _check_referential_integrity(self.objects, self.relationships)

    def object_names(self) -> frozenset[str]:
        return frozenset(normalize_name(o.name) for o in self.objects)

    def attribute_vocabulary(self) -> frozenset[str]:
        return frozenset(
            normalize_name(a) for o in self.objects for a in o.attributes
        )

    def predicate_vocabulary(self) -> frozenset[str]:
        return frozenset(normalize_name(r.predicate) for r in self.relationships)


@dataclass(frozen=True)
class TextAnalysis:
    """Objects and relationships asserted by a piece of text."""

    objects: tuple[ObjectEntity, ...] = ()
    relationships: tuple[Relationship, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "relationships", tuple(self.relationships))
        _check_referential_integrity(self.objects, self.relationships)

    def object_names(self) -> frozenset[str]:
        return frozenset(normalize_name(o.name) for o in self.objects)


def check_object_conflict(text: TextAnalysis, scene: SceneGraph) -> bool:
    """True iff the text mentions an object name absent from the scene."""
    return not text.object_names() <= scene.object_names()


def _scene_attribute_sets(scene: SceneGraph) -> dict[str, list[frozenset[str]]]:
    by_name: dict[str, list[frozenset[str]]] = {}
    for obj in scene.objects:
        attrs = frozenset(normalize_name(a) for a in obj.attributes)
        by_name.setdefault(normalize_name(obj.name), []).append(attrs)
    return by_name


def check_attribute_conflict(text: TextAnalysis, scene: SceneGraph) -> bool:
    """True iff shared objects carry text attributes no scene instance satisfies.

    Requires the text's object names to be a subset of the scene's. A text
    object with a non-empty attribute set conflicts unless some scene object
    of the same name bears a superset of those attributes; with several
    same-name scene instances, one satisfying instance is enough.
    """
    if not text.object_names() <= scene.object_names():
        return False
    scene_attrs = _scene_attribute_sets(scene)
    for obj in text.objects:
        asserted = frozenset(normalize_name(a) for a in obj.attributes)
        if not asserted:
            continue
        instances = scene_attrs.get(normalize_name(obj.name), [])
        if not any(found >= asserted for found in instances):
            return True
    return False


def check_relationship_conflict(text: TextAnalysis, scene: SceneGraph) -> bool:
    """True iff the text asserts a relationship the scene does not contain.

    Requires the text's object names to be a subset of the scene's.
    Relationships compare as ordered (subject name, predicate, object name)
    triples; a text triple with no matching scene triple conflicts, including
    when the scene has no relationship at all between that name pair.
    """
    if not text.object_names() <= scene.object_names():
        return False
    if not text.relationships:
        return False
    text_names = {o.id: normalize_name(o.name) for o in text.objects}
    scene_names = {o.id: normalize_name(o.name) for o in scene.objects}
    scene_triples = {
        (scene_names[r.subject_id], normalize_name(r.predicate), scene_names[r.object_id])
        for r in scene.relationships
    }
    for rel in text.relationships:
        triple = (
            text_names[rel.subject_id],
            normalize_name(rel.predicate),
            text_names[rel.object_id],
        )
        if triple not in scene_triples:
            return True
    return False


def classify_conflict(text: TextAnalysis, scene: SceneGraph) -> ConflictType | None:
    """Classify the conflict between text and scene, or None when consistent.

    Object conflict takes precedence (the other two require the object-subset
    condition to hold); attribute is checked before relationship when both
    apply.
    """
    if check_object_conflict(text, scene):
        return ConflictType.OBJECT
    if check_attribute_conflict(text, scene):
        return ConflictType.ATTRIBUTE
    if check_relationship_conflict(text, scene):
        return ConflictType.RELATIONSHIP
    return None


class SceneGraphFormatError(ValueError):
    """A scene-graph annotation file did not match the documented layout."""


def _object_from_record(record: dict, image_id: str) -> ObjectEntity:
    object_id = record.get("object_id", record.get("id"))
    if object_id is None:
        raise SceneGraphFormatError(f"image {image_id}: object record has no id")
    if "names" in record:
        names = [n for n in record["names"] if str(n).strip()]
        if not names:
            raise SceneGraphFormatError(
                f"image {image_id}: object {object_id} has no usable name"
            )
        name = str(names[0])
    elif "name" in record:
        name = str(record["name"])
    else:
        raise SceneGraphFormatError(
            f"image {image_id}: object {object_id} has no name field"
        )
    attributes = frozenset(
        normalize_name(str(a)) for a in record.get("attributes", []) if str(a).strip()
    )
    return ObjectEntity(id=str(object_id), name=normalize_name(name), attributes=attributes)


def _scene_from_record(record: dict) -> SceneGraph:
    image_id = record.get("image_id", record.get("id"))
    if image_id is None:
        raise SceneGraphFormatError("scene record has no image_id")
    image_id = str(image_id)
    objects = [_object_from_record(obj, image_id) for obj in record.get("objects", [])]
    relationships = []
    for rel in record.get("relationships", []):
        try:
            relationships.append(
                Relationship(
                    subject_id=str(rel["subject_id"]),
                    predicate=normalize_name(str(rel["predicate"])),
                    object_id=str(rel["object_id"]),
                )
            )
        except KeyError as exc:
            raise SceneGraphFormatError(
                f"image {image_id}: relationship record missing {exc}"
            ) from None
    try:
        return SceneGraph(image_id=image_id, objects=tuple(objects), relationships=tuple(relationships))
    except ValueError as exc:
        raise SceneGraphFormatError(f"image {image_id}: {exc}") from None


def iter_scene_graphs(path: str | Path) -> Iterator[SceneGraph]:
    """Parse scene graphs from the documented annotation subset.

    The file is a JSON array of per-image records (a single record is also
    accepted). Each record carries ``image_id``, ``objects`` (``object_id``,
    ``names`` or ``name``, optional ``attributes``), and ``relationships``
    (``subject_id``, ``predicate``, ``object_id``). Unknown fields are
    ignored. See docs/data_formats.md.
    """
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        raise SceneGraphFormatError("scene-graph file must hold a JSON array of images")
    for record in payload:
        yield _scene_from_record(record)


def load_scene_graphs(path: str | Path) -> dict[str, SceneGraph]:
    """Load a scene-graph file into a mapping keyed by image id."""
    graphs: dict[str, SceneGraph] = {}
    for graph in iter_scene_graphs(path):
        if graph.image_id in graphs:
            raise SceneGraphFormatError(f"duplicate image_id {graph.image_id}")
        graphs[graph.image_id] = graph
    return graphs
