"""Metrics and judging for model responses under modality conflict.

Covers the ROUGE-L F-measure, the instruction-wrapping prompt, the
LLM-as-a-judge protocols (hallucination verdict, 0-4 quality rating,
consistency check), the terminal reward contract exposed to external
trainers, and batch aggregation into an evaluation report.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .gateway import ChatProvider, ChatRequest, GatewayError, user_request
from .scene_graph import ConflictType
from .synthesis import ConflictTriple
from .templates import render
from .textmetrics import RougeScore, lcs_length, rouge_l_f, tokenize

__all__ = [
    "tokenize",
    "lcs_length",
    "rouge_l_f",
    "RougeScore",
    "MethodTag",
    "ModelResponse",
    "HallucinationVerdict",
    "QualityRating",
    "EvalReport",
    "apply_pe_prompt",
    "build_hallucination_prompt",
    "parse_hallucination_verdict",
    "build_quality_prompt",
    "parse_quality_rating",
    "build_consistency_prompt",
    "parse_consistency",
    "reward_at_step",
    "evaluate_batch",
    "load_responses",
    "write_report_json",
    "report_to_csv",
    "UnparseableVerdictError",
    "UnparseableRatingError",
    "OutOfRangeRatingError",
    "UnknownRecordError",
]

DEFAULT_JUDGE_MODEL = "gpt-4o"
JUDGE_TEMPERATURE = 0.0


class JudgeParseError(ValueError):
    """A judge response did not contain the mandated output format."""


class UnparseableVerdictError(JudgeParseError):
    pass


class UnparseableRatingError(JudgeParseError):
    pass


class OutOfRangeRatingError(JudgeParseError):
    pass


class UnknownRecordError(KeyError):
    """A response referenced a record_id absent from the dataset."""


class MethodTag(Enum):
    BASE = "base"
    PE = "pe"
    SFT = "sft"
    RL = "rl"
    OTHER = "other"


@dataclass(frozen=True)
class ModelResponse:
    """One externally produced model answer for a dataset record."""

    record_id: str
    model_name: str
    response_text: str
    method_tag: MethodTag = MethodTag.OTHER


@dataclass(frozen=True)
class HallucinationVerdict:
    hallucinated: bool
    rationale: str
    fallback: bool = False


@dataclass(frozen=True)
class QualityRating:
    score: int
    rationale: str

    def __post_init__(self) -> None:
        if not 0 <= self.score <= 4:
            raise ValueError(f"score {self.score} outside 0-4")


def apply_pe_prompt(question: str) -> str:
    """Wrap a question in the check-the-image instruction template.

    Not idempotent by design: wrapping twice nests the instruction.
    """
    if not question.strip():
        raise ValueError("question must be non-empty")
    return render("pe_instruction", question=question)


def build_hallucination_prompt(
    question: str,
    answer: str,
    *,
    model: str = DEFAULT_JUDGE_MODEL,
    tag: str = "judge-hallucination",
) -> ChatRequest:
    if not question.strip() or not answer.strip():
        raise ValueError("question and answer must be non-empty")
    prompt = render("judge_hallucination", question=question, answer=answer)
    return user_request(model, prompt, temperature=JUDGE_TEMPERATURE, tag=tag)


_YES_NO = re.compile(r"\b(yes|no)\b", re.IGNORECASE)
_INTEGER = re.compile(r"-?\d+")


def _rationale_before(lines: Sequence[str], end_index: int) -> str:
    """Text after the last 'Evaluation:' marker, up to the verdict line."""
    marker = "evaluation:"
    for index in range(end_index - 1, -1, -1):
        position = lines[index].lower().find(marker)
        if position >= 0:
            head = lines[index][position + len(marker):]
            return "\n".join([head, *lines[index + 1 : end_index]]).strip()
    return ""


def parse_hallucination_verdict(text: str) -> HallucinationVerdict:
    """Read the yes/no verdict from the last line starting 'Hallucination:'.

    When no verdict line parses, falls back to the first standalone yes/no
    word in the whole text (flagged); with neither present the response is
    unparseable.
    """
    lines = text.splitlines()
    for index in range(len(lines) - 1, -1, -1):
        stripped = lines[index].strip()
        if not stripped.lower().startswith("hallucination:"):
            continue
        match = _YES_NO.search(stripped[len("hallucination:"):])
        if match:
            rationale = _rationale_before(lines, index)
            return HallucinationVerdict(
                hallucinated=match.group(1).lower() == "yes",
                rationale=rationale,
                fallback=not rationale,
            )
        break
    match = _YES_NO.search(text)
    if match is None:
        raise UnparseableVerdictError(f"no hallucination verdict in {text!r}")
    return HallucinationVerdict(
        hallucinated=match.group(1).lower() == "yes", rationale="", fallback=True
    )


def build_quality_prompt(
    question: str,
    answer: str,
    reference: str,
    *,
    model: str = DEFAULT_JUDGE_MODEL,
    tag: str = "judge-quality",
) -> ChatRequest:
    if not question.strip() or not answer.strip() or not reference.strip():
        raise ValueError("question, answer, and reference must be non-empty")
    prompt = render("judge_quality", question=question, answer=answer, reference=reference)
    return user_request(model, prompt, temperature=JUDGE_TEMPERATURE, tag=tag)


def parse_quality_rating(text: str) -> QualityRating:
    """Extract the first integer after the last 'Total rating:' marker (0-4)."""
    lower = text.lower()
    marker = "total rating:"
    position = lower.rfind(marker)
    if position < 0:
        raise UnparseableRatingError(f"no rating marker in {text!r}")
    match = _INTEGER.search(text, position + len(marker))
    if match is None:
        raise UnparseableRatingError(f"no integer after rating marker in {text!r}")
    score = int(match.group())
    if not 0 <= score <= 4:
        raise OutOfRangeRatingError(f"rating {score} outside 0-4")
    eval_position = lower.rfind("evaluation:", 0, position)
    rationale = (
        text[eval_position + len("evaluation:") : position].strip()
        if eval_position >= 0
        else ""
    )
    return QualityRating(score=score, rationale=rationale)


def build_consistency_prompt(
    question: str,
    reference: str,
    model_response: str,
    *,
    model: str = DEFAULT_JUDGE_MODEL,
    tag: str = "judge-consistency",
) -> ChatRequest:
    """Same-meaning check between reference and model response.

    ``model_response`` may be empty: the template instructs the judge to
    answer no for empty sentences.
    """
    if not question.strip() or not reference.strip():
        raise ValueError("question and reference must be non-empty")
    prompt = render(
        "judge_consistency",
        question=question,
        reference_response=reference,
        model_response=model_response,
    )
    return user_request(model, prompt, temperature=JUDGE_TEMPERATURE, tag=tag)


def parse_consistency(text: str) -> bool:
    """Map the first standalone yes/no (case-insensitive) to a boolean."""
    match = _YES_NO.search(text)
    if match is None:
        raise UnparseableVerdictError(f"no yes/no in consistency response {text!r}")
    return match.group(1).lower() == "yes"


def reward_at_step(t: int, final_step: int, consistent: bool) -> int:
    """Terminal reward for step ``t`` of ``final_step`` generation steps.

    Zero before the final step; +1 at the final step when the generated
    answer is consistent with the reference, -1 otherwise.
    """
    if not 1 <= t <= final_step:
        raise ValueError(f"step {t} outside 1..{final_step}")
    if t < final_step:
        return 0
    return 1 if consistent else -1


@dataclass(frozen=True)
class RecordEvaluation:
    record_id: str
    model_name: str
    method_tag: MethodTag
    conflict_type: ConflictType
    rouge: RougeScore
    hallucinated: bool | None = None
    judge_score: int | None = None
    hallucination_error: str | None = None
    quality_error: str | None = None


@dataclass(frozen=True)
class Aggregate:
    n: int
    mean_rouge_l_f: float
    hallu_rate_percent: float
    mean_llm_judge: float
    judged_hallucination: int
    judged_quality: int


def _aggregate(entries: Sequence[RecordEvaluation]) -> Aggregate:
    n = len(entries)
    mean_rouge = sum(e.rouge.f for e in entries) / n if n else 0.0
    verdicts = [e.hallucinated for e in entries if e.hallucinated is not None]
    scores = [e.judge_score for e in entries if e.judge_score is not None]
    hallu_rate = (100.0 * sum(verdicts)) / len(verdicts) if verdicts else 0.0
    mean_judge = sum(scores) / len(scores) if scores else 0.0
    return Aggregate(
        n=n,
        mean_rouge_l_f=mean_rouge,
        hallu_rate_percent=hallu_rate,
        mean_llm_judge=mean_judge,
        judged_hallucination=len(verdicts),
        judged_quality=len(scores),
    )


@dataclass(frozen=True)
class EvalReport:
    n: int
    mean_rouge_l_f: float
    hallu_rate_percent: float
    mean_llm_judge: float
    per_conflict_type: Mapping[str, Aggregate]
    judge_errors: Mapping[str, int]
    records: tuple[RecordEvaluation, ...] = ()

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "mean_rouge_l_f": self.mean_rouge_l_f,
            "hallu_rate_percent": self.hallu_rate_percent,
            "mean_llm_judge": self.mean_llm_judge,
            "per_conflict_type": {
                kind: {
                    "n": agg.n,
                    "mean_rouge_l_f": agg.mean_rouge_l_f,
                    "hallu_rate_percent": agg.hallu_rate_percent,
                    "mean_llm_judge": agg.mean_llm_judge,
                    "judged_hallucination": agg.judged_hallucination,
                    "judged_quality": agg.judged_quality,
                }
                for kind, agg in self.per_conflict_type.items()
            },
            "judge_errors": dict(self.judge_errors),
            "records": [
                {
                    "record_id": entry.record_id,
                    "model_name": entry.model_name,
                    "method_tag": entry.method_tag.value,
                    "conflict_type": entry.conflict_type.value,
                    "rouge_l_f": entry.rouge.f,
                    "rouge_l_precision": entry.rouge.precision,
                    "rouge_l_recall": entry.rouge.recall,
                    "hallucinated": entry.hallucinated,
                    "judge_score": entry.judge_score,
                    "hallucination_error": entry.hallucination_error,
                    "quality_error": entry.quality_error,
                }
                for entry in self.records
            ],
        }


def evaluate_batch(
    dataset: Iterable[ConflictTriple],
    responses: Sequence[ModelResponse],
    judge_provider: ChatProvider,
    *,
    beta: float = 1.0,
    judge_model: str = DEFAULT_JUDGE_MODEL,
) -> EvalReport:
    """Score each response (ROUGE-L, hallucination verdict, quality rating).

    Responses are processed in record-id order, so the report is invariant
    under permutation of the input list. An unresolvable record_id is fatal;
    a judge failure only excludes that record from the affected aggregate and
    is counted in ``judge_errors``.
    """
    by_id = {triple.record_id: triple for triple in dataset}
    seen: set[str] = set()
    for response in responses:
        if response.record_id not in by_id:
            raise UnknownRecordError(response.record_id)
        if response.record_id in seen:
            raise ValueError(f"duplicate response for record {response.record_id!r}")
        seen.add(response.record_id)

    entries: list[RecordEvaluation] = []
    errors = {"hallucination": 0, "quality": 0}
    for response in sorted(responses, key=lambda r: r.record_id):
        record = by_id[response.record_id]
        reference = record.effective_answer()
        question = record.effective_question()
        rouge = rouge_l_f(response.response_text, reference, beta=beta)

        hallucinated: bool | None = None
        hallucination_error: str | None = None
        try:
            request = build_hallucination_prompt(
                question,
                response.response_text,
                model=judge_model,
                tag=f"hallu:{response.record_id}",
            )
            hallucinated = parse_hallucination_verdict(
                judge_provider.complete(request).content
            ).hallucinated
        except (GatewayError, JudgeParseError, ValueError) as exc:
            hallucination_error = str(exc)
            errors["hallucination"] += 1

        judge_score: int | None = None
        quality_error: str | None = None
        try:
            request = build_quality_prompt(
                question,
                response.response_text,
                reference,
                model=judge_model,
                tag=f"quality:{response.record_id}",
            )
            judge_score = parse_quality_rating(
                judge_provider.complete(request).content
            ).score
        except (GatewayError, JudgeParseError, ValueError) as exc:
            quality_error = str(exc)
            errors["quality"] += 1

        entries.append(
            RecordEvaluation(
                record_id=response.record_id,
                model_name=response.model_name,
                method_tag=response.method_tag,
                conflict_type=record.conflict_type,
                rouge=rouge,
                hallucinated=hallucinated,
                judge_score=judge_score,
                hallucination_error=hallucination_error,
                quality_error=quality_error,
            )
        )

    overall = _aggregate(entries)
    per_type = {
        kind.value: _aggregate([e for e in entries if e.conflict_type is kind])
        for kind in ConflictType
        if any(e.conflict_type is kind for e in entries)
    }
    return EvalReport(
        n=overall.n,
        mean_rouge_l_f=overall.mean_rouge_l_f,
        hallu_rate_percent=overall.hallu_rate_percent,
        mean_llm_judge=overall.mean_llm_judge,
        per_conflict_type=per_type,
        judge_errors=errors,
        records=tuple(entries),
    )


def load_responses(path: str | Path) -> list[ModelResponse]:
    """Read a responses JSONL file (one ModelResponse per line)."""
    responses = []
    with open(path, encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                responses.append(
                    ModelResponse(
                        record_id=str(raw["record_id"]),
                        model_name=str(raw.get("model_name", "")),
                        response_text=str(raw.get("response_text", "")),
                        method_tag=MethodTag(raw.get("method_tag", "other")),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{line_number}: bad response record: {exc}") from exc
    return responses


def write_report_json(report: EvalReport, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(
        json.dumps(report.to_dict(), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


def report_to_csv(report: EvalReport) -> str:
    """Aggregate table: one row overall plus one per conflict type."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["scope", "n", "rouge_l_percent", "hallu_rate_percent", "llm_judge"])

    def row(scope: str, agg: Aggregate) -> list[str]:
        return [
            scope,
            str(agg.n),
            f"{agg.mean_rouge_l_f * 100:.2f}",
            f"{agg.hallu_rate_percent:.2f}",
            f"{agg.mean_llm_judge:.2f}",
        ]

    writer.writerow(
        row(
            "overall",
            Aggregate(
                n=report.n,
                mean_rouge_l_f=report.mean_rouge_l_f,
                hallu_rate_percent=report.hallu_rate_percent,
                mean_llm_judge=report.mean_llm_judge,
                judged_hallucination=0,
                judged_quality=0,
            ),
        )
    )
    for kind in ConflictType:
        agg = report.per_conflict_type.get(kind.value)
        if agg is not None:
            writer.writerow(row(kind.value, agg))
    return buffer.getvalue()
