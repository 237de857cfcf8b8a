"""Player models P(action | context, DM utterance)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linmodel
from .actions import DEFAULT_ACTIONS
from .corpus import Episode
from .linmodel import LinearModel, TrainConfig, train_multinomial
from .textfeat import DEFAULT_DIM, featurize

VARIANTS = ("reward", "eval")
VARIANT_SPLITS = {"reward": ("train",), "eval": ("train", "test")}


@dataclass
class PlayerModel:
    model: LinearModel
    variant: str

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")

    @property
    def actions(self) -> tuple[str, ...]:
        return self.model.labels


def player_features(context: str, dm_text: str, dim: int = DEFAULT_DIM):
    return featurize([("ctx", context), ("dm", dm_text)], dim)


def training_split(episodes: Sequence[Episode], variant: str) -> list[Episode]:
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    keep = VARIANT_SPLITS[variant]
    return [ep for ep in episodes if ep.split in keep]


def train_player_model(
    episodes: Sequence[Episode],
    variant: str,
    cfg: TrainConfig = TrainConfig(),
    actions: Sequence[str] = DEFAULT_ACTIONS,
    dim: int = DEFAULT_DIM,
) -> PlayerModel:
    """The reward model sees the train split; the evaluator sees train and test."""
    chosen = training_split(episodes, variant)
    if not chosen:
        raise ValueError(f"no episodes in splits {VARIANT_SPLITS[variant]} for the {variant} player model")
    data = [(player_features(ep.context_text, ep.dm_text, dim), ep.player_action) for ep in chosen]
    return PlayerModel(train_multinomial(data, cfg, labels=actions), variant)


def predict_action(pm: PlayerModel, context: str, dm_text: str) -> tuple[np.ndarray, str]:
    x = player_features(context, dm_text, pm.model.dim)
    probs = pm.model.predict_proba(x)
    return probs, pm.model.labels[int(np.argmax(probs))]


def save_player(pm: PlayerModel, path, meta: dict | None = None) -> None:
    linmodel.save(pm.model, path, {**(meta or {}), "variant": pm.variant})


def load_player(path) -> PlayerModel:
    m = linmodel.load(path)
    if "variant" not in m.meta:
        raise ValueError(f"{path}: player model file lacks a variant header")
    return PlayerModel(m, m.meta["variant"])
