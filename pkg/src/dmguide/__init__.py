"""Teaching-guidance generation for play-by-post tabletop games.

Hashed linear models for inverse-dynamics labeling of DM guidance, intent
mining, player models, a candidate-pool DM policy trained by supervision and
PPO, and the evaluation metrics that compare them.
"""
from .actions import DEFAULT_ACTIONS
from .corpus import Episode, Post, Turn, build_episodes, detect_ability_check
from .linmodel import LinearModel, TrainConfig
from .synth import SynthConfig, generate_corpus
from .textfeat import SparseVector, featurize

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_ACTIONS",
    "Episode",
    "LinearModel",
    "Post",
    "SparseVector",
    "SynthConfig",
    "TrainConfig",
    "Turn",
    "build_episodes",
    "detect_ability_check",
    "featurize",
    "generate_corpus",
]
