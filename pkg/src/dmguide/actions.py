"""Ability-check action inventory.

Labels are plain lowercase strings. Multi-word skills keep their space
("animal handling"), which is also how they are spelled in transcripts.
"""
from __future__ import annotations

import re
from typing import Iterable, Sequence

SKILLS = (
    "acrobatics", "animal handling", "arcana", "athletics", "deception",
    "history", "insight", "intimidation", "investigation", "medicine",
    "nature", "perception", "performance", "persuasion", "religion",
    "sleight of hand", "stealth", "survival",
)
ABILITIES = ("strength", "dexterity", "constitution", "intelligence", "wisdom")

DEFAULT_ACTIONS: tuple[str, ...] = SKILLS + ABILITIES


def validate_action_set(actions: Sequence[str]) -> tuple[str, ...]:
    actions = tuple(a.strip().lower() for a in actions)
    if not actions:
        raise ValueError("action set is empty")
    if len(set(actions)) != len(actions):
        raise ValueError("action set has duplicate labels")
    if any(not a for a in actions):
        raise ValueError("action set has an empty label")
    return actions


def action_pattern(action: str) -> str:
    """Regex source matching `action` as whole words, any whitespace between."""
    return r"\b" + r"\s+".join(re.escape(w) for w in action.split()) + r"\b"


def find_action_mentions(text: str, actions: Iterable[str]) -> list[tuple[int, str]]:
    """All (char offset, action) mentions, sorted by offset then longer name first."""
    hits = []
    for a in actions:
        for m in re.finditer(action_pattern(a), text, flags=re.IGNORECASE):
            hits.append((m.start(), -len(a), a))
    hits.sort()
    return [(pos, a) for pos, _, a in hits]
