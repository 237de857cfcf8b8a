"""Checks that pair a learned component with the synthetic generator's ground truth.

* :func:`oracle_learnability`: can the player model, the guidance identifier
  and the sentence extractor recover the generator's labels?
* :func:`noncausal_gap`: how much does seeing the future player action help
  the extractor when a DM turn holds two competing guidance sentences?
* :func:`reward_hacking_probe`: does the learned reward model agree with the
  rule-based player it stands in for, on a policy's own outputs?
"""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .config import RunConfig
from .corpus import Episode, episodes_from_dump
from .idm import extract_index, guidance_probability, identify_negatives, train_extract, train_identify
from .player import PlayerModel, predict_action, train_player_model
from .synth import GuidanceTemplate, chitchat_texts, cue_index, default_bank, generate_corpus, rule_player_act
from .textfeat import tokenize


def gold_episodes(cfg: RunConfig, **synth_changes) -> tuple[list[Episode], list[Episode]]:
    """Reconstructed (train, test) episodes of a synthetic corpus, carrying gold labels.

    ``synth_changes`` override fields of the ``[synth]`` section, e.g.
    ``noise=0.0`` or ``mode="ambiguous"``.
    """
    from .pipeline import join_gold, synth_config

    run = dataclasses.replace(cfg, synth=dataclasses.replace(cfg.synth, **synth_changes))
    corpus = generate_corpus(synth_config(run))
    episodes = join_gold(episodes_from_dump(corpus.posts, run.window, run.actions), corpus.gold)
    return [e for e in episodes if e.split == "train"], [e for e in episodes if e.split == "test"]


def cue_lookup_index(ep: Episode, bank: Sequence[GuidanceTemplate] | None = None, action: str | None = None) -> int | None:
    """First DM sentence holding a cue token (of ``action`` only, when given); the generator's own answer."""
    cues = cue_index(default_bank() if bank is None else bank)
    for i, sent in enumerate(ep.dm_sentences):
        if any(tok in cues and (action is None or cues[tok] == action) for tok in tokenize(sent)):
            return i
    return None


def player_accuracy(pm: PlayerModel, episodes: Sequence[Episode]) -> float:
    return float(np.mean([predict_action(pm, ep.context_text, ep.dm_text)[1] == ep.player_action for ep in episodes]))


@dataclass
class Learnability:
    player_accuracy: float  # reward player model, noise-free corpus, test split
    identify_accuracy: float  # guidance vs. stripped/chitchat turns, noise-free corpus, test split
    extract_accuracy: float  # against the gold index, noisy corpus, test split
    extract_oracle_agreement: float  # against the cue-lookup answer on the same episodes
    seconds: float


def oracle_learnability(cfg: RunConfig = RunConfig(), extract_noise: float = 0.1) -> Learnability:
    t0 = time.perf_counter()
    dim = cfg.dim
    train, test = gold_episodes(cfg, noise=0.0)
    pm = train_player_model(train + test, "reward", cfg.stage_train("player_train", "check/player"), cfg.actions, dim)

    rng = np.random.default_rng(cfg.stage_seed("check/identify"))
    pool = chitchat_texts(rng, 200)
    negs_train = identify_negatives(train, pool, rng, cfg.idm.chitchat_per_episode)
    negs_test = identify_negatives(test, pool, rng, cfg.idm.chitchat_per_episode)
    identify = train_identify(train + negs_train, cfg.stage_train("identify_train", "check/identify"), dim)
    decisions = [
        (guidance_probability(identify, ep.context_text, ep.dm_text, ep.player_action) >= cfg.idm.threshold)
        == (ep.guidance_index is not None)
        for ep in test + negs_test
    ]

    train_n, test_n = gold_episodes(cfg, noise=extract_noise)
    extract = train_extract(train_n, cfg.stage_train("extract_train", "check/extract"), True, dim)
    picks = [extract_index(extract, ep) for ep in test_n]
    return Learnability(
        player_accuracy=player_accuracy(pm, test),
        identify_accuracy=float(np.mean(decisions)),
        extract_accuracy=float(np.mean([k == ep.guidance_index for k, ep in zip(picks, test_n)])),
        extract_oracle_agreement=float(np.mean([k == cue_lookup_index(ep) for k, ep in zip(picks, test_n)])),
        seconds=time.perf_counter() - t0,
    )


@dataclass
class NoncausalGap:
    with_action: float
    without_action: float

    @property
    def gap(self) -> float:
        return self.with_action - self.without_action


def noncausal_gap(cfg: RunConfig = RunConfig(), noise: float = 0.0) -> NoncausalGap:
    """Extraction accuracy with and without the future-action field on two-guidance DM turns."""
    train, test = gold_episodes(cfg, noise=noise, mode="ambiguous")
    accs = []
    for use_action in (True, False):
        model = train_extract(train, cfg.stage_train("extract_train", f"check/noncausal/{use_action}"), use_action, cfg.dim)
        accs.append(float(np.mean([extract_index(model, ep, use_action) == ep.guidance_index for ep in test])))
    return NoncausalGap(*accs)


@dataclass
class HackingProbe:
    rule_match: float  # the rule-based player's action on the utterance equals the recorded action
    reward_model_match: float  # the reward player model's action on (context, utterance) does

    @property
    def gap(self) -> float:
        return abs(self.rule_match - self.reward_model_match)


def reward_hacking_probe(
    episodes: Sequence[Episode],
    outputs: Sequence[str],
    pm_reward: PlayerModel,
    bank: Sequence[GuidanceTemplate] | None = None,
    seed: int = 0,
) -> HackingProbe:
    """Action match judged by the noise-free rule player versus by the learned reward model."""
    if len(episodes) != len(outputs):
        raise ValueError(f"{len(episodes)} episodes but {len(outputs)} outputs")
    if not episodes:
        raise ValueError("no episodes to probe")
    bank = default_bank() if bank is None else bank
    cues = cue_index(bank)
    rng = np.random.default_rng(seed)
    rule = [rule_player_act(o, bank, 0.0, rng, pm_reward.actions, cues) == ep.player_action for ep, o in zip(episodes, outputs)]
    learned = [predict_action(pm_reward, ep.context_text, o)[1] == ep.player_action for ep, o in zip(episodes, outputs)]
    return HackingProbe(float(np.mean(rule)), float(np.mean(learned)))
