"""Inverse-dynamics labeling of DM turns.

Both models look at the *future* player action as well as the DM text:
``identify`` decides whether a DM turn contains guidance, ``extract`` scores
each sentence of the turn and picks the guiding one. Scoring is shared across
sentences, so fields that are constant within a turn (context, action) cancel
in the softmax; the action reaches the extractor through action x sentence
cross features instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .corpus import Episode
from .linmodel import LinearModel, TrainConfig, to_csr, train_choice, train_multinomial
from .textfeat import (
    DEFAULT_DIM, SparseVector, content_tokens, cross_buckets, featurize, field_buckets, token_hashes,
)

GUIDANCE = "guidance"
NO_GUIDANCE = "no_guidance"
BASELINES = ("longest", "last", "similarity")


def identify_features(context: str, dm_text: str, action: str | None, dim: int = DEFAULT_DIM) -> SparseVector:
    return featurize([("ctx", context), ("dm", dm_text), ("act", action or "")], dim)


def sentence_features(sentence: str, action: str | None, dim: int = DEFAULT_DIM) -> SparseVector:
    """Sentence n-grams plus (action, sentence word) crosses when an action is given."""
    buckets = field_buckets("dm", sentence, dim)
    if action:
        words = content_tokens(sentence)
        if words:
            crosses = cross_buckets(token_hashes([action]), token_hashes(words), "act*dm", dim)
            buckets.extend(crosses.ravel().tolist())
    return SparseVector.from_buckets(np.asarray(buckets, dtype=np.int64), dim)


def sentence_matrix(ep: Episode, use_action: bool = True, dim: int = DEFAULT_DIM) -> sp.csr_matrix:
    action = ep.player_action if use_action else None
    return to_csr([sentence_features(s, action, dim) for s in ep.dm_sentences], dim)


@dataclass
class IdmBundle:
    identify: LinearModel
    extract: LinearModel
    threshold: float = 0.5
    use_action: bool = True

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must be in (0, 1)")

    @property
    def dim(self) -> int:
        return self.identify.dim


def guidance_probability(identify: LinearModel, context: str, dm_text: str, action: str | None) -> float:
    p = identify.predict_proba(identify_features(context, dm_text, action, identify.dim))
    return float(p[identify.labels.index(GUIDANCE)])


def train_identify(episodes: Sequence[Episode], cfg: TrainConfig = TrainConfig(), dim: int = DEFAULT_DIM) -> LinearModel:
    """Binary guidance classifier; an episode is positive iff it has a guidance_index."""
    data = [
        (identify_features(ep.context_text, ep.dm_text, ep.player_action, dim),
         GUIDANCE if ep.guidance_index is not None else NO_GUIDANCE)
        for ep in episodes
    ]
    if len({lab for _, lab in data}) < 2:
        raise ValueError("identify training data needs both guidance and no-guidance examples")
    return train_multinomial(data, cfg, labels=(GUIDANCE, NO_GUIDANCE))


def identify_negatives(
    episodes: Sequence[Episode],
    chitchat: Sequence[str],
    rng: np.random.Generator,
    chitchat_per_episode: float = 0.5,
) -> list[Episode]:
    """Guidance-stripped copies of every labeled episode, plus chitchat-only DM turns."""
    out = []
    for ep in episodes:
        if ep.guidance_index is None:
            continue
        rest = [s for i, s in enumerate(ep.dm_sentences) if i != ep.guidance_index]
        if rest:
            out.append(ep.replace(id=ep.id + "-stripped", dm_text=" ".join(rest), dm_sentences=rest,
                                  guidance_index=None, intent_text=None, intended_action=None))
        if chitchat and rng.random() < chitchat_per_episode:
            k = int(rng.integers(1, 3))
            sents = [chitchat[int(i)] for i in rng.choice(len(chitchat), size=k, replace=False)]
            out.append(ep.replace(id=ep.id + "-chat", dm_text=" ".join(sents), dm_sentences=sents,
                                  guidance_index=None, intent_text=None, intended_action=None))
    return out


def train_extract(
    episodes: Sequence[Episode],
    cfg: TrainConfig = TrainConfig(),
    use_action: bool = True,
    dim: int = DEFAULT_DIM,
) -> LinearModel:
    """Shared-weight sentence scorer trained with a softmax over each DM turn."""
    groups = []
    for ep in episodes:
        if ep.guidance_index is None:
            raise ValueError(f"episode {ep.id} has no guidance_index")
        groups.append((sentence_matrix(ep, use_action, dim), ep.guidance_index))
    if not groups:
        raise ValueError("no labeled episodes")
    return train_choice(groups, cfg, dim)


def sentence_scores(extract: LinearModel, ep: Episode, use_action: bool = True) -> np.ndarray:
    return np.asarray(sentence_matrix(ep, use_action, extract.dim) @ extract.W[0])


def extract_index(extract: LinearModel, ep: Episode, use_action: bool = True) -> int:
    if not ep.dm_sentences:
        raise ValueError(f"episode {ep.id} has no DM sentences")
    return int(np.argmax(sentence_scores(extract, ep, use_action)))


def extract_guidance(bundle: IdmBundle, ep: Episode) -> int | None:
    """Index of the guiding sentence, or None when identify says there is no guidance."""
    if not ep.dm_sentences:
        raise ValueError(f"episode {ep.id} has no DM sentences")
    if guidance_probability(bundle.identify, ep.context_text, ep.dm_text, ep.player_action) < bundle.threshold:
        return None
    return extract_index(bundle.extract, ep, bundle.use_action)


def baseline_extract(method: str, ep: Episode, dim: int = DEFAULT_DIM) -> int:
    sents = ep.dm_sentences
    if method not in BASELINES:
        raise ValueError(f"unknown baseline {method!r}; expected one of {BASELINES}")
    if not sents:
        raise ValueError(f"episode {ep.id} has no DM sentences")
    if method == "longest":
        return max(range(len(sents)), key=lambda i: (len(sents[i]), -i))
    if method == "last":
        return len(sents) - 1
    target = featurize([("s", ep.player_text)], dim)
    sims = [featurize([("s", s)], dim).cosine(target) for s in sents]
    return int(np.argmax(sims))


def pseudo_label(bundle: IdmBundle, episodes: Sequence[Episode]) -> list[Episode]:
    """Overwrite guidance labels with IDM predictions; provenance becomes ``idm``.

    Episodes the identifier rejects keep ``guidance_index=None``; callers drop
    them from guidance training sets.
    """
    return [ep.replace(guidance_index=extract_guidance(bundle, ep), provenance="idm") for ep in episodes]


def train_bundle(
    labeled: Sequence[Episode],
    negatives: Sequence[Episode],
    identify_cfg: TrainConfig = TrainConfig(),
    extract_cfg: TrainConfig = TrainConfig(),
    threshold: float = 0.5,
    dim: int = DEFAULT_DIM,
) -> IdmBundle:
    identify = train_identify(list(labeled) + list(negatives), identify_cfg, dim)
    extract = train_extract(labeled, extract_cfg, True, dim)
    return IdmBundle(identify, extract, threshold, True)
