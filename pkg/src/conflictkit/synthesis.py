"""Construction pipeline for modality-conflict question/answer triples.

Per image the pipeline samples a base question, detects its scene-grounded
key components, substitutes one component kind to force a conflict, verifies
the conflict by re-detecting components on the generated question, and
generates a reference answer from text alone (no image bytes are ever sent).
All LLM calls go through a gateway provider; with a replay provider the whole
pipeline is a pure function of (inputs, fixtures, seed).
"""

from __future__ import annotations

import json
import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator, Mapping, Sequence

from .gateway import ChatProvider, ChatRequest, ChatResponse, GatewayError, user_request
from .scene_graph import (
    ConflictType,
    ObjectEntity,
    Relationship,
    SceneGraph,
    TextAnalysis,
    classify_conflict,
    normalize_name,
)
from .templates import render

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-4o-mini"


class SynthesisError(Exception):
    """Base class for per-record synthesis failures."""


class NoQuestionsForImageError(SynthesisError):
    """The QA pool holds no base question for the requested image."""


class ComponentParseFailure(SynthesisError):
    """A detection response could not be parsed; carries the raw text."""

    def __init__(self, message: str, raw_text: str):
        super().__init__(message)
        self.raw_text = raw_text


class NoSubstitutableComponentsError(SynthesisError):
    """Detection found nothing that could be substituted."""


class SubstitutionFailureError(SynthesisError):
    """Substitution produced no usable conflicted question."""


class AnswerGenerationError(SynthesisError):
    """Answer generation produced an empty response."""


class ReviewStatus(Enum):
    PENDING = "pending"
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    EDITED = "edited"


@dataclass(frozen=True)
class BaseQuestion:
    """A sampled question/answer pair from the source dataset."""

    image_id: str
    question: str
    answer: str

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.answer.strip():
            raise ValueError("base question and answer must be non-empty")


@dataclass(frozen=True)
class KeyComponents:
    """Scene-grounded components detected in a question.

    ``objects``/``attributes``/``relationships`` are the candidate-filter
    matches against the scene vocabulary; ``extracted`` keeps the raw
    stage-one phrases (normalized) so unmatched mentions stay visible.
    """

    objects: tuple[str, ...] = ()
    attributes: tuple[str, ...] = ()
    relationships: tuple[str, ...] = ()
    extracted: tuple[str, ...] = ()

    def has_any(self) -> bool:
        return bool(self.objects or self.attributes or self.relationships)


@dataclass(frozen=True)
class SubstitutionPlan:
    """Which conflict type to force and which components to replace."""

    conflict_type: ConflictType
    components_to_modify: tuple[str, ...]
    excluded_objects: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.components_to_modify:
            raise ValueError("components_to_modify must be non-empty")
        if (self.conflict_type is ConflictType.OBJECT) != bool(self.excluded_objects):
            raise ValueError(
                "excluded_objects must be populated exactly for object-conflict plans"
            )


@dataclass(frozen=True)
class TripleProvenance:
    base_question: str
    base_answer: str
    components_modified: tuple[str, ...] = ()
    prompts_used: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConflictTriple:
    """One synthesized record: image, conflicted question, reference answer."""

    record_id: str
    image_id: str
    conflict_type: ConflictType
    question: str
    answer: str
    provenance: TripleProvenance
    review_status: ReviewStatus = ReviewStatus.PENDING
    edited_question: str | None = None
    edited_answer: str | None = None

    def __post_init__(self) -> None:
        if not self.question.strip() or not self.answer.strip():
            raise ValueError("question and answer must be non-empty")
        if self.question == self.provenance.base_question:
            raise ValueError("conflicted question must differ from the base question")
        if self.review_status is ReviewStatus.EDITED and not (
            self.edited_question or self.edited_answer
        ):
            raise ValueError("status 'edited' requires at least one edited field")

    def effective_question(self) -> str:
        return self.edited_question or self.question

    def effective_answer(self) -> str:
        return self.edited_answer or self.answer


def load_qa_pool(path: str | Path) -> dict[str, list[BaseQuestion]]:
    """Load the QA pool file (see docs/data_formats.md) keyed by image id."""
    with open(path, encoding="utf-8") as handle:
        payload = json.load(handle)
    if not isinstance(payload, list):
        raise ValueError("QA pool file must hold a JSON array")
    pool: dict[str, list[BaseQuestion]] = {}
    for record in payload:
        if "qas" in record:
            image_id = str(record["image_id"])
            entries = record["qas"]
        else:
            image_id = str(record["image_id"])
            entries = [record]
        for qa in entries:
            pool.setdefault(image_id, []).append(
                BaseQuestion(
                    image_id=image_id,
                    question=str(qa["question"]),
                    answer=str(qa["answer"]),
                )
            )
    return pool


def sample_base_question(
    image_id: str, qa_pool: Mapping[str, Sequence[BaseQuestion]], seed: int
) -> BaseQuestion:
    """Draw one base question uniformly, determined by seed and image id.

    The pool is sorted into a stable order first, and the RNG is keyed on a
    seed string (hashed with SHA-512 by the stdlib), so draws are identical
    across runs and platforms.
    """
    pool = sorted(
        qa_pool.get(str(image_id), ()), key=lambda qa: (qa.question, qa.answer)
    )
    if not pool:
        raise NoQuestionsForImageError(f"no questions for image {image_id!r}")
    rng = random.Random(f"{seed}:{image_id}:sample")
    return pool[rng.randrange(len(pool))]


def _parse_component_list(raw: str) -> tuple[str, ...]:
    """Split a comma-separated detection response into normalized items.

    A bare 'None' means no match and yields the empty tuple; a response with
    no parseable items at all is a ComponentParseFailure.
    """
    stripped = raw.strip()
    if not stripped:
        raise ComponentParseFailure("empty detection response", raw)
    if stripped.strip("'\"`.").lower() == "none":
        return ()
    items: list[str] = []
    for chunk in stripped.replace("\n", ",").split(","):
        chunk = chunk.strip().strip("'\"`")
        if not chunk or chunk.rstrip(".").lower() == "none":
            continue
        normalized = normalize_name(chunk)
        if normalized not in items:
            items.append(normalized)
    if not items:
        raise ComponentParseFailure(f"no components parsed from {raw!r}", raw)
    return tuple(items)


def detect_key_components(
    question: str,
    scene: SceneGraph,
    provider: ChatProvider,
    *,
    model: str = DEFAULT_MODEL,
    tag_prefix: str = "detect",
) -> KeyComponents:
    """Two-stage component detection for one question.

    Stage one extracts the question's subject components; stage two filters
    the extraction against the scene's object, attribute, and predicate
    vocabularies (one call each; a kind with an empty vocabulary is skipped
    and yields no matches).
    """
    extract_prompt = render("detect_extract", question=question)
    extraction = provider.complete(
        user_request(model, extract_prompt, tag=f"{tag_prefix}:extract")
    ).content
    stripped = extraction.strip()
    if not stripped:
        raise ComponentParseFailure("empty extraction response", extraction)
    if stripped.strip("'\"`.").lower() == "none":
        return KeyComponents()
    extracted = _parse_component_list(extraction)

    def filter_against(candidates: frozenset[str], kind: str) -> tuple[str, ...]:
        if not candidates:
            return ()
        prompt = render(
            "detect_filter",
            text=stripped,
            candidate_words=", ".join(sorted(candidates)),
        )
        raw = provider.complete(
            user_request(model, prompt, tag=f"{tag_prefix}:filter-{kind}")
        ).content
        return _parse_component_list(raw) if raw.strip() else ()

    return KeyComponents(
        objects=filter_against(scene.object_names(), "objects"),
        attributes=filter_against(scene.attribute_vocabulary(), "attributes"),
        relationships=filter_against(scene.predicate_vocabulary(), "relationships"),
        extracted=extracted,
    )


def plan_substitution(
    base: BaseQuestion,
    components: KeyComponents,
    scene: SceneGraph,
    seed: int,
    *,
    type_weights: Mapping[str, float] | None = None,
) -> SubstitutionPlan:
    """Pick one conflict type among those with detected components (seeded).

    ``type_weights`` (keys 'object'/'attribute'/'relationship') skews the
    draw; the default is uniform. Object plans exclude every scene object
    name so the substitute cannot reuse scene content.
    """
    available: list[tuple[ConflictType, tuple[str, ...]]] = []
    for conflict_type, detected in (
        (ConflictType.OBJECT, components.objects),
        (ConflictType.ATTRIBUTE, components.attributes),
        (ConflictType.RELATIONSHIP, components.relationships),
    ):
        if not detected:
            continue
        weight = 1.0 if type_weights is None else float(type_weights.get(conflict_type.value, 1.0))
        if weight > 0:
            available.append((conflict_type, detected))
    if not available:
        raise NoSubstitutableComponentsError(
            f"no substitutable components for image {base.image_id!r}"
        )
    rng = random.Random(f"{seed}:{base.image_id}:plan")
    if type_weights is None:
        index = rng.randrange(len(available))
    else:
        weights = [float(type_weights.get(ct.value, 1.0)) for ct, _ in available]
        index = rng.choices(range(len(available)), weights=weights, k=1)[0]
    conflict_type, detected = available[index]
    excluded = (
        tuple(sorted(scene.object_names()))
        if conflict_type is ConflictType.OBJECT
        else ()
    )
    return SubstitutionPlan(conflict_type, detected, excluded)


_SUBSTITUTE_TEMPLATES = {
    ConflictType.OBJECT: "substitute_object",
    ConflictType.ATTRIBUTE: "substitute_attribute",
    ConflictType.RELATIONSHIP: "substitute_relationship",
}


def build_substitution_request(
    plan: SubstitutionPlan,
    base: BaseQuestion,
    *,
    model: str = DEFAULT_MODEL,
    tag: str = "substitute",
) -> ChatRequest:
    """Fill the substitution template matching the plan's conflict type."""
    slots = {"origin_question": base.question}
    joined = ", ".join(plan.components_to_modify)
    if plan.conflict_type is ConflictType.OBJECT:
        slots["objects_to_modify"] = joined
        slots["objects_excluded"] = ", ".join(plan.excluded_objects)
    elif plan.conflict_type is ConflictType.ATTRIBUTE:
        slots["attributes_to_modify"] = joined
    else:
        slots["relationships_to_modify"] = joined
    prompt = render(_SUBSTITUTE_TEMPLATES[plan.conflict_type], **slots)
    return user_request(model, prompt, tag=tag)


def substitute_components(
    plan: SubstitutionPlan,
    base: BaseQuestion,
    provider: ChatProvider,
    *,
    model: str = DEFAULT_MODEL,
    tag: str = "substitute",
) -> str:
    """Generate the conflicted question; must differ from the base question."""
    request = build_substitution_request(plan, base, model=model, tag=tag)
    raw = provider.complete(request).content
    lines = [line.strip() for line in raw.strip().splitlines() if line.strip()]
    if not lines:
        raise SubstitutionFailureError("empty substitution response")
    question = lines[0]
    if question == base.question:
        raise SubstitutionFailureError(
            "substitution returned the base question unchanged"
        )
    return question


@dataclass(frozen=True)
class AnswerContext:
    """Everything the answer-generation prompt needs for one triple."""

    question: str
    conflict_type: ConflictType
    key_component: str
    origin_question: str
    origin_answer: str


def generate_answer(
    context: AnswerContext,
    provider: ChatProvider,
    *,
    model: str = DEFAULT_MODEL,
    tag: str = "answer",
) -> str:
    """Generate the reference answer from text alone (image bytes never sent)."""
    for field_name in ("question", "key_component", "origin_question", "origin_answer"):
        if not getattr(context, field_name).strip():
            raise ValueError(f"answer generation requires non-empty {field_name}")
    prompt = render(
        "generate_answer",
        question=context.question,
        conflict_type=context.conflict_type.value,
        key_component=context.key_component,
        origin_question=context.origin_question,
        origin_answer=context.origin_answer,
    )
    raw = provider.complete(user_request(model, prompt, tag=tag)).content.strip()
    if not raw:
        raise AnswerGenerationError("empty answer response")
    return raw


def text_analysis_from_components(
    components: KeyComponents, scene: SceneGraph
) -> TextAnalysis:
    """Reconstruct the assertions a question makes from flat detected lists.

    Matched object names become text objects; an extracted phrase sharing no
    token with any match is treated as an asserted (likely out-of-scene)
    object. Matched attributes attach to every text object, and each matched
    predicate is paired with a scene edge between detected names when one
    exists, otherwise asserted between the first two distinct names. This
    over-approximates: a spurious conflict just forwards the record to human
    review.
    """
    matched_tokens: set[str] = set()
    for item in components.objects + components.attributes + components.relationships:
        matched_tokens.update(item.split())
    names: list[str] = list(dict.fromkeys(components.objects))
    for phrase in components.extracted:
        if set(phrase.split()) & matched_tokens:
            continue
        if phrase not in names:
            names.append(phrase)
    attributes = frozenset(components.attributes)
    objects = tuple(
        ObjectEntity(id=f"t{index}", name=name, attributes=attributes)
        for index, name in enumerate(names)
    )
    id_by_name = {entity.name: entity.id for entity in objects}
    name_set = set(names)
    scene_name_by_id = {obj.id: normalize_name(obj.name) for obj in scene.objects}
    relationships: list[Relationship] = []
    for predicate in components.relationships:
        witnessed = sorted(
            (scene_name_by_id[rel.subject_id], scene_name_by_id[rel.object_id])
            for rel in scene.relationships
            if normalize_name(rel.predicate) == predicate
            and scene_name_by_id[rel.subject_id] in name_set
            and scene_name_by_id[rel.object_id] in name_set
            and scene_name_by_id[rel.subject_id] != scene_name_by_id[rel.object_id]
        )
        if witnessed:
            subject_name, object_name = witnessed[0]
        else:
            distinct = list(dict.fromkeys(names))
            if len(distinct) < 2:
                continue
            subject_name, object_name = distinct[0], distinct[1]
        relationships.append(
            Relationship(
                subject_id=id_by_name[subject_name],
                predicate=predicate,
                object_id=id_by_name[object_name],
            )
        )
    return TextAnalysis(objects=objects, relationships=tuple(relationships))


def verify_generated_conflict(components: KeyComponents, scene: SceneGraph) -> bool:
    """True iff the re-detected components still conflict with the scene."""
    return classify_conflict(text_analysis_from_components(components, scene), scene) is not None


@dataclass(frozen=True)
class PipelineConfig:
    count: int | None = None
    seed: int = 0
    model: str = DEFAULT_MODEL
    type_weights: Mapping[str, float] | None = None
    jobs: int = 1


@dataclass(frozen=True)
class SkipRecord:
    image_id: str
    stage: str
    reason: str


class _TagRecordingProvider:
    """Wraps a provider to capture the tags of every request sent."""

    def __init__(self, inner: ChatProvider):
        self._inner = inner
        self.tags: list[str] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        self.tags.append(request.request_tag)
        return self._inner.complete(request)


_STAGE_BY_ERROR = (
    (NoQuestionsForImageError, "sample"),
    (ComponentParseFailure, "detect"),
    (NoSubstitutableComponentsError, "plan"),
    (SubstitutionFailureError, "substitute"),
    (AnswerGenerationError, "answer"),
    (GatewayError, "gateway"),
)


def _stage_for(error: Exception) -> str:
    for error_type, stage in _STAGE_BY_ERROR:
        if isinstance(error, error_type):
            return stage
    return "pipeline"


def synthesize_one(
    image_id: str,
    scene: SceneGraph,
    qa_pool: Mapping[str, Sequence[BaseQuestion]],
    provider: ChatProvider,
    config: PipelineConfig,
) -> ConflictTriple | SkipRecord:
    """Run every stage for one image; failures come back as a SkipRecord."""
    capture = _TagRecordingProvider(provider)
    try:
        base = sample_base_question(image_id, qa_pool, config.seed)
        components = detect_key_components(
            base.question, scene, capture, model=config.model, tag_prefix=image_id
        )
        plan = plan_substitution(
            base, components, scene, config.seed, type_weights=config.type_weights
        )
        question = substitute_components(
            plan, base, capture, model=config.model, tag=f"{image_id}:substitute"
        )
        recheck = detect_key_components(
            question, scene, capture, model=config.model, tag_prefix=f"{image_id}:verify"
        )
        verified = classify_conflict(
            text_analysis_from_components(recheck, scene), scene
        )
        if verified is None:
            return SkipRecord(image_id, "verify", "generated question does not conflict")
        answer = generate_answer(
            AnswerContext(
                question=question,
                conflict_type=verified,
                key_component=", ".join(plan.components_to_modify),
                origin_question=base.question,
                origin_answer=base.answer,
            ),
            capture,
            model=config.model,
            tag=f"{image_id}:answer",
        )
    except (SynthesisError, GatewayError, ValueError) as exc:
        return SkipRecord(image_id, _stage_for(exc), str(exc))
    return ConflictTriple(
        record_id=f"{image_id}-0",
        image_id=image_id,
        conflict_type=verified,
        question=question,
        answer=answer,
        provenance=TripleProvenance(
            base_question=base.question,
            base_answer=base.answer,
            components_modified=plan.components_to_modify,
            prompts_used=tuple(capture.tags),
        ),
    )


def run_pipeline(
    scene_graphs: Mapping[str, SceneGraph],
    qa_pool: Mapping[str, Sequence[BaseQuestion]],
    provider: ChatProvider,
    config: PipelineConfig,
    *,
    on_skip: Callable[[SkipRecord], None] | None = None,
) -> Iterator[ConflictTriple]:
    """Yield pending triples image by image, in sorted image-id order.

    Per-record failures are logged and reported through ``on_skip``; they
    never abort the run. At most ``config.count`` triples are emitted.
    """
    image_ids = sorted(scene_graphs)
    emitted = 0

    def handle(outcome: ConflictTriple | SkipRecord) -> ConflictTriple | None:
        if isinstance(outcome, SkipRecord):
            logger.warning(
                "skipping image %s at stage %s: %s",
                outcome.image_id,
                outcome.stage,
                outcome.reason,
            )
            if on_skip is not None:
                on_skip(outcome)
            return None
        return outcome

    if config.jobs <= 1:
        for image_id in image_ids:
            if config.count is not None and emitted >= config.count:
                return
            triple = handle(
                synthesize_one(image_id, scene_graphs[image_id], qa_pool, provider, config)
            )
            if triple is not None:
                emitted += 1
                yield triple
        return

    batch_size = config.jobs * 4
    with ThreadPoolExecutor(max_workers=config.jobs) as pool:
        for start in range(0, len(image_ids), batch_size):
            if config.count is not None and emitted >= config.count:
                return
            batch = image_ids[start : start + batch_size]
            outcomes = pool.map(
                lambda image_id: synthesize_one(
                    image_id, scene_graphs[image_id], qa_pool, provider, config
                ),
                batch,
            )
            for outcome in outcomes:
                if config.count is not None and emitted >= config.count:
                    break
                triple = handle(outcome)
                if triple is not None:
                    emitted += 1
                    yield triple
