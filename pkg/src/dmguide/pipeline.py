"""End-to-end training and the seven-variant experiment matrix, run in memory."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .config import RunConfig
from .corpus import Episode, episodes_from_dump
from .dmpolicy import Policy, PoolData, build_pool_data, greedy_outputs, train_ppo, train_supervised
from .evalmetrics import EvalReport, evaluate_outputs
from .idm import identify_negatives, pseudo_label, train_bundle, train_identify
from .intent import mine_intent, train_intent_generator, train_intent_to_action, with_mined_intent
from .linmodel import LinearModel
from .player import PlayerModel, train_player_model
from .synth import SynthConfig, SynthCorpus, chitchat_texts, generate_corpus, mined_intent_text
from .textfeat import Gazetteer

VARIANTS = (
    "Human-Label",
    "IDM-Label",
    "Random-Label",
    "Mined Intent",
    "Gen. Intent",
    "RL+Mined Intent",
    "RL+Gen. Intent",
)


def synth_config(cfg: RunConfig) -> SynthConfig:
    s = cfg.synth
    return SynthConfig(
        n_episodes=s.n_episodes,
        seed=cfg.stage_seed("synth-gen"),
        noise=s.noise,
        filler_sentences=(s.filler_min, s.filler_max),
        mode=s.mode,
        scene_fidelity=s.scene_fidelity,
        actions=cfg.actions,
    )


def join_gold(episodes: Sequence[Episode], gold: Sequence[Episode]) -> list[Episode]:
    """Attach gold labels (guidance, intent, split) to reconstructed episodes with the same id."""
    by_id = {g.id: g for g in gold}
    out = []
    for ep in episodes:
        g = by_id.get(ep.id)
        if g is not None:
            out.append(ep.replace(guidance_index=g.guidance_index, intent_text=g.intent_text,
                                  intended_action=g.intended_action, split=g.split, provenance="human"))
    return out


def unlabeled(ep: Episode) -> Episode:
    return ep.replace(guidance_index=None, intent_text=None, intended_action=None)


def human_subset(train: Sequence[Episode], fraction: float, seed: int) -> list[Episode]:
    rng = np.random.default_rng(seed)
    k = max(1, int(round(fraction * len(train))))
    picks = np.sort(rng.choice(len(train), size=k, replace=False))
    return [train[int(i)] for i in picks]


def random_labels(episodes: Sequence[Episode], seed: int) -> list[Episode]:
    rng = np.random.default_rng(seed)
    return [ep.replace(guidance_index=int(rng.integers(len(ep.dm_sentences))), provenance="random") for ep in episodes]


def matched_steps(cfg, n: int, n_ref: int, cap: int = 400):
    """Stretch ``cfg.epochs`` so a run on ``n`` examples takes as many steps as one on ``n_ref``."""
    epochs = min(cap, max(cfg.epochs, math.ceil(cfg.epochs * n_ref / max(n, 1))))
    return dataclasses.replace(cfg, epochs=epochs)


def mined_or_bare(ep: Episode) -> str:
    """Mined intent text when the episode has a guidance label, else the mention-free form."""
    if ep.guidance_index is not None:
        return mine_intent(ep).text
    return mined_intent_text(ep.player_action, None)


@dataclass
class World:
    """Corpus and the seed-independent models shared by every matrix seed."""

    cfg: RunConfig
    train: list[Episode]  # gold-labeled view
    test: list[Episode]
    pm_reward: PlayerModel
    pm_eval: PlayerModel
    eval_identify: LinearModel
    i2a: LinearModel
    gaz: Gazetteer
    train_pools: PoolData  # implicit-intent pools for every train episode
    test_pools: PoolData


def build_world(cfg: RunConfig, corpus: SynthCorpus | None = None, log: Callable[[str], None] = lambda m: None) -> World:
    corpus = corpus or generate_corpus(synth_config(cfg))
    episodes = episodes_from_dump(corpus.posts, cfg.window, cfg.actions, provenance="human")
    episodes = join_gold(episodes, corpus.gold)  # splits come from the gold sidecar
    train = [ep for ep in episodes if ep.split == "train"]
    test = [ep for ep in episodes if ep.split == "test"]
    log(f"episodes: {len(episodes)} reconstructed ({len(train)} train, {len(test)} test)")

    pm_reward = train_player_model(episodes, "reward", cfg.stage_train("player_train", "train-player/reward"), cfg.actions, cfg.dim)
    pm_eval = train_player_model(episodes, "eval", cfg.stage_train("player_train", "train-player/eval"), cfg.actions, cfg.dim)
    rng = np.random.default_rng(cfg.stage_seed("evaluate/identify"))
    negs = identify_negatives(train, chitchat_texts(rng, 200), rng, cfg.idm.chitchat_per_episode)
    eval_identify = train_identify(list(train) + negs, cfg.stage_train("identify_train", "evaluate/identify"), cfg.dim)
    i2a = train_intent_to_action(
        [(ep.intent_text, ep.intended_action) for ep in train if ep.intent_text],
        cfg.stage_train("i2a_train", "mine-intents/i2a"), cfg.actions, cfg.dim,
    )
    gaz = Gazetteer.from_texts(ep.context_text for ep in train)
    k = cfg.policy.k_distractors
    train_pools = build_pool_data([(ep.context_text, "") for ep in train], None, k, cfg.dim)
    test_pools = build_pool_data([(ep.context_text, "") for ep in test], None, k, cfg.dim)
    log("shared models trained")
    return World(cfg, train, test, pm_reward, pm_eval, eval_identify, i2a, gaz, train_pools, test_pools)


def greedy_from_pools(policy: Policy, pools: PoolData) -> list[str]:
    scores = pools.X @ policy.scorer
    return [pool[int(np.argmax(scores[pools.ptr[g] : pools.ptr[g + 1]]))].text for g, pool in enumerate(pools.pools)]


@dataclass
class SeedRun:
    seed: int
    reports: list[EvalReport]
    outputs: dict = field(default_factory=dict)  # variant -> greedy test utterances
    ppo_logs: dict = field(default_factory=dict)
    policies: dict = field(default_factory=dict)


def run_seed(world: World, seed: int, log: Callable[[str], None] = lambda m: None, keep_policies: bool = False) -> SeedRun:
    cfg = world.cfg
    stage = lambda name: f"{name}/seed{seed}"
    tc = lambda which, name: cfg.stage_train(which, stage(name))
    k, T, dim = cfg.policy.k_distractors, cfg.policy.temperature, cfg.dim

    # labels
    human = human_subset(world.train, cfg.idm.human_fraction, cfg.stage_seed(stage("human-subset")))
    rng = np.random.default_rng(cfg.stage_seed(stage("train-idm")))
    negs = identify_negatives(human, chitchat_texts(rng, 50), rng, cfg.idm.chitchat_per_episode)
    n_ref = len(world.train)
    bundle = train_bundle(
        human, negs,
        matched_steps(tc("identify_train", "train-idm/identify"), len(human), n_ref),
        matched_steps(tc("extract_train", "train-idm/extract"), len(human), n_ref),
        cfg.idm.threshold, dim,
    )
    idm_train = pseudo_label(bundle, [unlabeled(ep) for ep in world.train])
    idm_test = pseudo_label(bundle, [unlabeled(ep) for ep in world.test])
    rnd_train = random_labels([unlabeled(ep) for ep in world.train], cfg.stage_seed(stage("random-label")))
    log(f"seed {seed}: {sum(e.guidance_index is not None for e in idm_train)}/{len(idm_train)} train episodes IDM-labeled")

    # implicit-intent policies share the prebuilt train pools
    pol = {}
    human_ids = {ep.id for ep in human}
    human_view = [ep if ep.id in human_ids else unlabeled(ep) for ep in world.train]
    pol["Human-Label"] = train_supervised(human_view, False, matched_steps(tc("policy_train", "train-dm/human"), len(human), n_ref), None, k, dim, T, world.train_pools)
    pol["IDM-Label"] = train_supervised(idm_train, False, tc("policy_train", "train-dm/idm"), None, k, dim, T, world.train_pools)
    pol["Random-Label"] = train_supervised(rnd_train, False, tc("policy_train", "train-dm/random"), None, k, dim, T, world.train_pools)

    # explicit intents mined from the IDM labels
    mined_train = [with_mined_intent(ep) if ep.guidance_index is not None else ep for ep in idm_train]
    labeled = [ep for ep in mined_train if ep.guidance_index is not None]
    mined_pools = build_pool_data([(ep.context_text, ep.intent_text) for ep in labeled], None, k, dim)
    pol["Mined Intent"] = train_supervised(labeled, True, tc("policy_train", "train-dm/mined"), None, k, dim, T, mined_pools)
    generator = train_intent_generator(labeled, tc("intent_train", "train-intent-gen"), cfg.actions, dim)
    gen_train = [generator.generate(ep.context_text).text for ep in labeled]
    pol["Gen. Intent"] = pol["Mined Intent"]  # trained on mined intents, fed generated ones at test time
    log(f"seed {seed}: supervised policies trained")

    ppo_logs = {}
    ppo = lambda name: dataclasses.replace(cfg.ppo, seed=cfg.stage_seed(stage(name)))
    pol["RL+Mined Intent"], ppo_logs["RL+Mined Intent"] = train_ppo(
        pol["Mined Intent"], labeled, world.pm_reward, world.i2a, ppo("train-dm-rl/mined"), None, k, pools=mined_pools)
    pol["RL+Gen. Intent"], ppo_logs["RL+Gen. Intent"] = train_ppo(
        pol["Gen. Intent"], labeled, world.pm_reward, world.i2a, ppo("train-dm-rl/gen"), None, k, intents=gen_train)
    log(f"seed {seed}: PPO done")

    # evaluation on the test split
    test = world.test
    mined_test = [mined_or_bare(ep) for ep in idm_test]
    gen_test = [generator.generate(ep.context_text).text for ep in test]
    contexts = [ep.context_text for ep in test]
    outputs = {}
    for name in ("Human-Label", "IDM-Label", "Random-Label"):
        outputs[name] = greedy_from_pools(pol[name], world.test_pools)
    for name, intents in (("Mined Intent", mined_test), ("Gen. Intent", gen_test),
                          ("RL+Mined Intent", mined_test), ("RL+Gen. Intent", gen_test)):
        outputs[name] = greedy_outputs(pol[name], contexts, intents, None, k)
    reports = [
        evaluate_outputs(name, test, outputs[name], world.eval_identify, world.pm_eval, world.gaz,
                         cfg.idm.threshold, "test", seed)
        for name in VARIANTS
    ]
    return SeedRun(seed, reports, outputs, ppo_logs, pol if keep_policies else {})


@dataclass
class MatrixResult:
    runs: list[SeedRun]
    seconds: float

    def by_variant(self) -> dict[str, list[EvalReport]]:
        out: dict[str, list[EvalReport]] = {v: [] for v in VARIANTS}
        for run in self.runs:
            for r in run.reports:
                out[r.model_id].append(r)
        return out

    def mean(self, variant: str, metric: str) -> float:
        return float(np.mean([getattr(r, metric) for r in self.by_variant()[variant]]))

    def to_csv(self) -> str:
        metrics = EvalReport.METRICS
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["variant", "seeds", "n", *[f"{m}_mean" for m in metrics], *[f"{m}_sd" for m in metrics]])
        for variant, reps in self.by_variant().items():
            vals = np.array([[getattr(r, m) for m in metrics] for r in reps])
            sd = vals.std(axis=0, ddof=1) if len(reps) > 1 else np.zeros(len(metrics))
            w.writerow([variant, len(reps), reps[0].n, *[f"{x:.4f}" for x in vals.mean(axis=0)], *[f"{x:.4f}" for x in sd]])
        return buf.getvalue()

    def per_seed_csv(self) -> str:
        from .evalmetrics import reports_to_csv

        return reports_to_csv([r for run in self.runs for r in run.reports])

    def table(self) -> str:
        metrics = EvalReport.METRICS
        head = f"{'variant':<16}" + "".join(f"{m:>22}" for m in metrics)
        lines = [head]
        for variant, reps in self.by_variant().items():
            vals = np.array([[getattr(r, m) for m in metrics] for r in reps])
            sd = vals.std(axis=0, ddof=1) if len(reps) > 1 else np.zeros(len(metrics))
            lines.append(f"{variant:<16}" + "".join(f"{f'{m:.3f} +/- {s:.3f}':>22}" for m, s in zip(vals.mean(axis=0), sd)))
        return "\n".join(lines) + "\n"


def run_matrix(
    cfg: RunConfig,
    seeds: int = 3,
    corpus: SynthCorpus | None = None,
    log: Callable[[str], None] = lambda m: None,
    keep_policies: bool = False,
) -> MatrixResult:
    if seeds < 1:
        raise ValueError("seeds must be >= 1")
    t0 = time.perf_counter()
    world = build_world(cfg, corpus, log)
    runs = [run_seed(world, s, log, keep_policies) for s in range(seeds)]
    return MatrixResult(runs, time.perf_counter() - t0)
