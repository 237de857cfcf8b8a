"""Intent mining, the context-only intent generator, and intent -> action mapping."""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .actions import DEFAULT_ACTIONS, action_pattern, find_action_mentions
from .corpus import Episode
from .linmodel import LinearModel, TrainConfig, train_multinomial
from .synth import mined_intent_text
from .textfeat import DEFAULT_DIM, featurize

MINED_TEMPLATE_ID = "mined-v1"
GENERATED_TEMPLATE_ID = "generated-v1"


@dataclass(frozen=True)
class Intent:
    text: str
    template_id: str
    source: str
    intended_action: str | None = None

    def __post_init__(self):
        if not self.text:
            raise ValueError("intent text must be non-empty")
        if self.source not in ("mined", "generated"):
            raise ValueError(f"unknown intent source {self.source!r}")
        if self.source == "mined" and self.intended_action is None:
            raise ValueError("mined intents carry an intended action")


def mine_intent(ep: Episode) -> Intent:
    if ep.guidance_index is None:
        raise ValueError(f"episode {ep.id} has no guidance_index to mine an intent from")
    text = mined_intent_text(ep.player_action, ep.dm_sentences[ep.guidance_index])
    return Intent(text, MINED_TEMPLATE_ID, "mined", ep.player_action)


def with_mined_intent(ep: Episode) -> Episode:
    it = mine_intent(ep)
    return ep.replace(intent_text=it.text, intended_action=it.intended_action)


def context_features(context: str, dim: int = DEFAULT_DIM):
    return featurize([("ctx", context)], dim)


class IntentGenerator:
    """Predicts the intended action from the context alone and phrases it as an intent."""

    def __init__(self, model: LinearModel):
        self.model = model

    def generate(self, context: str) -> Intent:
        action = self.model.predict(context_features(context, self.model.dim))
        return Intent(mined_intent_text(action, None), GENERATED_TEMPLATE_ID, "generated", action)


def train_intent_generator(
    episodes: Sequence[Episode],
    cfg: TrainConfig = TrainConfig(),
    actions: Sequence[str] = DEFAULT_ACTIONS,
    dim: int = DEFAULT_DIM,
) -> IntentGenerator:
    data = [
        (context_features(ep.context_text, dim), ep.intended_action)
        for ep in episodes
        if ep.intent_text and ep.intended_action
    ]
    if not data:
        raise ValueError("no mined intents to train the intent generator on")
    return IntentGenerator(train_multinomial(data, cfg, labels=actions))


def generate_intent(generator: IntentGenerator, context: str) -> Intent:
    return generator.generate(context)


def mask_actions(text: str, actions: Sequence[str]) -> str:
    for a in actions:
        text = re.sub(action_pattern(a), " ", text, flags=re.IGNORECASE)
    return text


def intent_features(text: str, dim: int = DEFAULT_DIM):
    return featurize([("int", text)], dim)


def train_intent_to_action(
    intents: Sequence[tuple[str, str]],
    cfg: TrainConfig = TrainConfig(),
    actions: Sequence[str] = DEFAULT_ACTIONS,
    dim: int = DEFAULT_DIM,
) -> LinearModel:
    """Fallback classifier over (intent text, intended action) pairs.

    Action names are masked out of the training texts so the model learns from
    the remaining wording; texts naming an action never reach the fallback.
    """
    data = [(intent_features(mask_actions(t, actions), dim), a) for t, a in intents]
    if not data:
        raise ValueError("no intents to train on")
    return train_multinomial(data, cfg, labels=actions)


def intent_to_action(intent_text: str, fallback: LinearModel, actions: Sequence[str] | None = None) -> str:
    """Earliest action name mentioned in the text, else the fallback model's argmax."""
    actions = tuple(fallback.labels) if actions is None else tuple(actions)
    hits = find_action_mentions(intent_text, actions)
    if hits:
        return hits[0][1]
    return fallback.predict(intent_features(intent_text, fallback.dim))
