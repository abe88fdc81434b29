"""Deterministic text metrics: tokenization, LCS, and ROUGE-L F-measure."""

from __future__ import annotations

import string
from dataclasses import dataclass


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip surrounding ASCII punctuation."""
    tokens = []
    for raw in text.lower().split():
        token = raw.strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


def lcs_length(a: list[str], b: list[str]) -> int:
    """Length of the longest common subsequence (dynamic programming)."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for item_a in a:
        current = [0]
        for j, item_b in enumerate(b, start=1):
            if item_a == item_b:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f: float


def rouge_l_f(candidate: str, reference: str, beta: float = 1.0) -> RougeScore:
    """LCS-based overlap between a candidate and a reference string.

    Recall is LCS over reference length, precision LCS over candidate length,
    and F the beta-weighted harmonic combination; an empty side scores zero
    across the board.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    candidate_tokens = tokenize(candidate)
    reference_tokens = tokenize(reference)
    if not candidate_tokens or not reference_tokens:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = lcs_length(candidate_tokens, reference_tokens)
    precision = lcs / len(candidate_tokens)
    recall = lcs / len(reference_tokens)
    denominator = recall + beta**2 * precision
    if denominator == 0:
        return RougeScore(precision, recall, 0.0)
    f = (1 + beta**2) * recall * precision / denominator
    return RougeScore(precision, recall, f)
