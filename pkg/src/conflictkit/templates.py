"""Prompt template assets: loading and slot filling.

Templates live as plain-text package data with ``{slot}`` placeholders so
their exact bytes are reviewable and testable independent of code.
"""

from __future__ import annotations

from functools import lru_cache
from importlib import resources


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    """Return the template text (trailing newline stripped, spaces kept)."""
    text = resources.files("conflictkit.prompts").joinpath(f"{name}.txt").read_text("utf-8")
    return text.rstrip("\n")


def render(name: str, **slots: str) -> str:
    """Fill a template's placeholders."""
    return load_template(name).format(**slots)
