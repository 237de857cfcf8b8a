"""Command-line interface: one sub-command per pipeline stage plus the experiment matrix."""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import linmodel
from .config import RunConfig, load_config
from .corpus import (
    Episode,
    assign_splits,
    episodes_from_dump,
    read_episodes,
    read_posts,
    write_episodes,
    write_posts,
)
from .dmpolicy import greedy_outputs, load_policy, log_to_csv, save_policy, train_ppo, train_supervised
from .evalmetrics import evaluate_outputs, reports_to_csv, reports_to_table
from .idm import IdmBundle, identify_negatives, pseudo_label, train_bundle, train_identify
from .intent import IntentGenerator, train_intent_generator, train_intent_to_action, with_mined_intent
from .pipeline import (
    join_gold,
    matched_steps,
    mined_or_bare,
    random_labels,
    human_subset,
    run_matrix,
    synth_config,
    unlabeled,
)
from .player import load_player, save_player, train_player_model
from .synth import SynthCorpus, chitchat_texts, generate_corpus
from .textfeat import Gazetteer

ARTIFACT_VERSION = 1

# artifact file name -> command that produces it
PRODUCERS = {
    "posts.jsonl": "synth-gen",
    "gold.jsonl": "synth-gen",
    "gold_sidecar.jsonl": "synth-gen",
    "parsed_posts.jsonl": "parse",
    "episodes.jsonl": "build-episodes",
    "human.jsonl": "build-episodes",
    "idm_identify.model": "train-idm",
    "idm_extract.model": "train-idm",
    "eval_identify.model": "train-idm",
    "episodes_idm.jsonl": "pseudo-label",
    "episodes_mined.jsonl": "mine-intents",
    "intent2action.model": "mine-intents",
    "intent_gen.model": "train-intent-gen",
    "pm_reward.model": "train-player",
    "pm_eval.model": "train-player",
    "policy_human.policy": "train-dm",
    "policy_idm.policy": "train-dm",
    "policy_random.policy": "train-dm",
    "policy_mined.policy": "train-dm",
    "policy_rl_mined.policy": "train-dm-rl",
    "policy_rl_gen.policy": "train-dm-rl",
}

DM_VARIANTS = ("human", "idm", "random", "mined")
RL_VARIANTS = ("mined", "gen")
EVAL_ROWS = (
    ("Human-Label", "policy_human.policy", None),
    ("IDM-Label", "policy_idm.policy", None),
    ("Random-Label", "policy_random.policy", None),
    ("Mined Intent", "policy_mined.policy", "mined"),
    ("Gen. Intent", "policy_mined.policy", "gen"),
    ("RL+Mined Intent", "policy_rl_mined.policy", "mined"),
    ("RL+Gen. Intent", "policy_rl_gen.policy", "gen"),
)


class CliError(Exception):
    pass


class Workspace:
    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.root = Path(cfg.workdir)

    def path(self, name: str) -> Path:
        return self.root / name

    def need(self, name: str) -> Path:
        p = self.path(name)
        if not p.exists():
            producer = PRODUCERS.get(name, "an earlier stage")
            raise CliError(f"missing {p}; run `dmguide {producer}` first")
        return p

    def meta(self, stage: str | None = None) -> dict:
        return {
            "version": ARTIFACT_VERSION,
            "command": self.command,
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.stage_seed(stage or self.command),
            "n_actions": len(self.cfg.actions),
        }

    def write_meta(self, name: str, stage: str | None = None, **extra) -> None:
        meta = {"artifact": name, **self.meta(stage), **extra}
        self.path(name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def write_text(self, name: str, text: str, stage: str | None = None) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        self.path(name).write_text(text, encoding="utf-8")
        self.write_meta(name, stage)

    def episodes(self, name: str) -> list[Episode]:
        return read_episodes(self.need(name), self.cfg.actions)

    def save_episodes(self, name: str, episodes: Sequence[Episode]) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        write_episodes(episodes, self.path(name), self.cfg.actions)
        self.write_meta(name, count=len(episodes))

    def save_model(self, name: str, model: linmodel.LinearModel, stage: str | None = None) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        linmodel.save(model, self.path(name), self.meta(stage))

    def model(self, name: str) -> linmodel.LinearModel:
        return linmodel.load(self.need(name))


def split(episodes: Sequence[Episode], which: str) -> list[Episode]:
    return [ep for ep in episodes if ep.split == which]


# ---------------------------------------------------------------- commands


def cmd_synth_gen(ws: Workspace, args) -> str:
    corpus = generate_corpus(synth_config(ws.cfg))
    ws.root.mkdir(parents=True, exist_ok=True)
    corpus.write(ws.path("posts.jsonl"), ws.path("gold.jsonl"), ws.path("gold_sidecar.jsonl"))
    for name in ("posts.jsonl", "gold.jsonl", "gold_sidecar.jsonl"):
        ws.write_meta(name, "synth-gen", count=len(corpus.gold) if name != "posts.jsonl" else len(corpus.posts))
    return f"wrote {len(corpus.posts)} posts and {len(corpus.gold)} gold episodes to {ws.root}"


def cmd_parse(ws: Workspace, args) -> str:
    src = Path(args.input) if args.input else ws.need("posts.jsonl")
    if not src.exists():
        raise CliError(f"input file {src} does not exist")
    posts = read_posts(src)
    ws.root.mkdir(parents=True, exist_ok=True)
    write_posts(posts, ws.path("parsed_posts.jsonl"))
    ws.write_meta("parsed_posts.jsonl", count=len(posts))
    return f"parsed {len(posts)} posts"


def _gold_labels(ws: Workspace) -> list[Episode] | None:
    p = ws.path("gold.jsonl")
    return read_episodes(p, ws.cfg.actions) if p.exists() else None


def cmd_build_episodes(ws: Workspace, args) -> str:
    src = ws.path("parsed_posts.jsonl")
    if not src.exists():
        src = ws.need("posts.jsonl")
    episodes = episodes_from_dump(read_posts(src), ws.cfg.window, ws.cfg.actions)
    gold = _gold_labels(ws)
    if gold is not None:
        episodes = join_gold(episodes, gold)
    else:
        episodes = assign_splits(episodes, ws.cfg.stage_seed("build-episodes"))
    train = [ep for ep in split(episodes, "train") if ep.guidance_index is not None]
    human = human_subset(train, ws.cfg.idm.human_fraction, ws.cfg.stage_seed("human-subset")) if train else []
    ws.save_episodes("episodes.jsonl", episodes)
    ws.save_episodes("human.jsonl", human)
    return f"built {len(episodes)} episodes ({len(human)} in the human-labeled subset)"


def cmd_train_idm(ws: Workspace, args) -> str:
    cfg = ws.cfg
    human = ws.episodes("human.jsonl")
    episodes = ws.episodes("episodes.jsonl")
    if not human:
        raise CliError("human.jsonl holds no labeled episodes; the IDM needs human labels")
    n_ref = len(split(episodes, "train"))
    rng = np.random.default_rng(cfg.stage_seed("train-idm"))
    negs = identify_negatives(human, chitchat_texts(rng, 50), rng, cfg.idm.chitchat_per_episode)
    bundle = train_bundle(
        human, negs,
        matched_steps(cfg.stage_train("identify_train", "train-idm/identify"), len(human), n_ref),
        matched_steps(cfg.stage_train("extract_train", "train-idm/extract"), len(human), n_ref),
        cfg.idm.threshold, cfg.dim,
    )
    ws.save_model("idm_identify.model", bundle.identify, "train-idm/identify")
    ws.save_model("idm_extract.model", bundle.extract, "train-idm/extract")
    # the evaluation-time guidance classifier uses every gold-labeled train episode when there are any
    labeled = [ep for ep in split(episodes, "train") if ep.guidance_index is not None]
    if len(labeled) > len(human):
        rng = np.random.default_rng(cfg.stage_seed("evaluate/identify"))
        negs = identify_negatives(labeled, chitchat_texts(rng, 200), rng, cfg.idm.chitchat_per_episode)
        evaluator = train_identify(labeled + negs, cfg.stage_train("identify_train", "evaluate/identify"), cfg.dim)
    else:
        evaluator = bundle.identify
    ws.save_model("eval_identify.model", evaluator, "evaluate/identify")
    return f"trained IDM on {len(human)} human-labeled episodes"


def _bundle(ws: Workspace) -> IdmBundle:
    return IdmBundle(ws.model("idm_identify.model"), ws.model("idm_extract.model"), ws.cfg.idm.threshold, True)


def cmd_pseudo_label(ws: Workspace, args) -> str:
    bundle = _bundle(ws)
    episodes = ws.episodes("episodes.jsonl")
    labeled = pseudo_label(bundle, [unlabeled(ep) for ep in episodes])
    ws.save_episodes("episodes_idm.jsonl", labeled)
    kept = sum(ep.guidance_index is not None for ep in labeled)
    return f"pseudo-labeled {len(labeled)} episodes; {kept} carry a guidance label"


def cmd_mine_intents(ws: Workspace, args) -> str:
    episodes = ws.episodes("episodes_idm.jsonl")
    mined = [with_mined_intent(ep) if ep.guidance_index is not None else ep for ep in episodes]
    ws.save_episodes("episodes_mined.jsonl", mined)
    gold = [ep for ep in split(ws.episodes("episodes.jsonl"), "train") if ep.intent_text]
    pairs = [(ep.intent_text, ep.intended_action) for ep in (gold or [e for e in split(mined, "train") if e.intent_text])]
    if not pairs:
        raise CliError("no intents available to train the intent-to-action fallback")
    i2a = train_intent_to_action(pairs, ws.cfg.stage_train("i2a_train", "mine-intents/i2a"), ws.cfg.actions, ws.cfg.dim)
    ws.save_model("intent2action.model", i2a, "mine-intents/i2a")
    return f"mined {sum(ep.intent_text is not None for ep in mined)} intents"


def _mined_train(ws: Workspace) -> list[Episode]:
    return [ep for ep in split(ws.episodes("episodes_mined.jsonl"), "train") if ep.intent_text]


def cmd_train_intent_gen(ws: Workspace, args) -> str:
    gen = train_intent_generator(_mined_train(ws), ws.cfg.stage_train("intent_train", "train-intent-gen"), ws.cfg.actions, ws.cfg.dim)
    ws.save_model("intent_gen.model", gen.model)
    return "trained the intent generator"


def cmd_train_player(ws: Workspace, args) -> str:
    episodes = ws.episodes("episodes.jsonl")
    meta = ws.meta
    for variant in ("reward", "eval"):
        stage = f"train-player/{variant}"
        pm = train_player_model(episodes, variant, ws.cfg.stage_train("player_train", stage), ws.cfg.actions, ws.cfg.dim)
        save_player(pm, ws.path(f"pm_{variant}.model"), meta(stage))
    return "trained the reward and evaluation player models"


def cmd_train_dm(ws: Workspace, args) -> str:
    cfg = ws.cfg
    variant = args.variant
    stage = f"train-dm/{variant}"
    tc = cfg.stage_train("policy_train", stage)
    k, T, dim = cfg.policy.k_distractors, cfg.policy.temperature, cfg.dim
    if variant == "human":
        data = ws.episodes("human.jsonl")
        tc = matched_steps(tc, len(data), len(split(ws.episodes("episodes.jsonl"), "train")))
        policy = train_supervised(data, False, tc, None, k, dim, T)
    elif variant == "idm":
        policy = train_supervised(split(ws.episodes("episodes_idm.jsonl"), "train"), False, tc, None, k, dim, T)
    elif variant == "random":
        train = [unlabeled(ep) for ep in split(ws.episodes("episodes.jsonl"), "train")]
        policy = train_supervised(random_labels(train, cfg.stage_seed("random-label")), False, tc, None, k, dim, T)
    else:
        policy = train_supervised(_mined_train(ws), True, tc, None, k, dim, T)
    save_policy(policy, ws.path(f"policy_{variant}.policy"), ws.meta(stage))
    return f"trained the {variant} policy"


def cmd_train_dm_rl(ws: Workspace, args) -> str:
    cfg = ws.cfg
    variant = args.variant
    stage = f"train-dm-rl/{variant}"
    pm_reward = load_player(ws.need("pm_reward.model"))
    i2a = ws.model("intent2action.model")
    init = load_policy(ws.need("policy_mined.policy"))
    episodes = _mined_train(ws)
    intents = None
    if variant == "gen":
        gen = IntentGenerator(ws.model("intent_gen.model"))
        intents = [gen.generate(ep.context_text).text for ep in episodes]
    ppo = dataclasses.replace(cfg.ppo, seed=cfg.stage_seed(stage))
    policy, log = train_ppo(init, episodes, pm_reward, i2a, ppo, None, cfg.policy.k_distractors, intents)
    save_policy(policy, ws.path(f"policy_rl_{variant}.policy"), ws.meta(stage))
    ws.write_text(f"ppo_{variant}.csv", log_to_csv(log), stage)
    return f"PPO finished; last mean reward {log[-1]['mean_reward']:.3f}" if log else "PPO ran zero iterations"


def cmd_evaluate(ws: Workspace, args) -> str:
    cfg = ws.cfg
    identify = ws.model("eval_identify.model")
    pm_eval = load_player(ws.need("pm_eval.model"))
    episodes = ws.episodes("episodes.jsonl")
    test = split(episodes, "test")
    if not test:
        raise CliError("no test-split episodes to evaluate on")
    gaz = Gazetteer.from_texts(ep.context_text for ep in split(episodes, "train"))
    idm_by_id = {ep.id: ep for ep in ws.episodes("episodes_idm.jsonl")}
    mined = [mined_or_bare(idm_by_id.get(ep.id, unlabeled(ep))) for ep in test]
    generated = None
    contexts = [ep.context_text for ep in test]
    reports = []
    wanted = set(args.variants) if args.variants else None
    for name, fname, intent_kind in EVAL_ROWS:
        if wanted is not None and name not in wanted:
            continue
        if not ws.path(fname).exists():
            if wanted is not None:
                ws.need(fname)
            continue
        policy = load_policy(ws.path(fname))
        if intent_kind == "gen" and generated is None:
            gen = IntentGenerator(ws.model("intent_gen.model"))
            generated = [gen.generate(c).text for c in contexts]
        intents = {"mined": mined, "gen": generated}.get(intent_kind, [""] * len(test))
        outputs = greedy_outputs(policy, contexts, intents, None, cfg.policy.k_distractors)
        reports.append(evaluate_outputs(name, test, outputs, identify, pm_eval, gaz, cfg.idm.threshold, "test", cfg.seed))
    if not reports:
        raise CliError("no trained policies found; run `dmguide train-dm` first")
    ws.write_text("report.csv", reports_to_csv(reports), "evaluate")
    ws.write_text("report.txt", reports_to_table(reports), "evaluate")
    return reports_to_table(reports).rstrip()


def _load_corpus(ws: Workspace) -> SynthCorpus | None:
    if ws.path("posts.jsonl").exists() and ws.path("gold.jsonl").exists():
        return SynthCorpus(read_posts(ws.path("posts.jsonl")), read_episodes(ws.path("gold.jsonl"), ws.cfg.actions))
    return None


def cmd_matrix(ws: Workspace, args) -> str:
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else (lambda m: None)
    result = run_matrix(ws.cfg, args.seeds, _load_corpus(ws), log)
    ws.write_text("matrix.csv", result.to_csv(), "matrix")
    ws.write_text("matrix_per_seed.csv", result.per_seed_csv(), "matrix")
    ws.write_text("matrix.txt", result.table(), "matrix")
    return result.table().rstrip()


COMMANDS = {
    "synth-gen": (cmd_synth_gen, "generate a synthetic corpus with gold labels"),
    "parse": (cmd_parse, "validate a post dump (JSON Lines) into the workspace"),
    "build-episodes": (cmd_build_episodes, "reconstruct episodes and pick the human-labeled subset"),
    "train-idm": (cmd_train_idm, "train the inverse dynamics labeler on human labels"),
    "pseudo-label": (cmd_pseudo_label, "label every episode with the IDM"),
    "mine-intents": (cmd_mine_intents, "turn IDM labels into intents; train the intent-to-action fallback"),
    "train-intent-gen": (cmd_train_intent_gen, "train the context-only intent generator"),
    "train-player": (cmd_train_player, "train the reward and evaluation player models"),
    "train-dm": (cmd_train_dm, "train a supervised DM policy"),
    "train-dm-rl": (cmd_train_dm_rl, "fine-tune the intent policy with PPO"),
    "evaluate": (cmd_evaluate, "score trained policies on the test split"),
    "matrix": (cmd_matrix, "run all seven variants over several seeds"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmguide", description=__doc__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI file with run settings")
    common.add_argument("--workdir", help="artifact directory (overrides run.workdir)")
    common.add_argument("--seed", type=int, help="global seed (overrides run.seed)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value; repeatable")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "parse":
            p.add_argument("--input", help="post dump to read (default: the workspace posts.jsonl)")
        elif name == "train-dm":
            p.add_argument("--variant", choices=DM_VARIANTS, required=True)
        elif name == "train-dm-rl":
            p.add_argument("--variant", choices=RL_VARIANTS, required=True)
        elif name == "evaluate":
            p.add_argument("--variants", nargs="*", help="variant names to score (default: every trained policy)")
        elif name == "matrix":
            p.add_argument("--seeds", type=int, default=3)
            p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = list(args.overrides)
    if args.workdir:
        overrides.append(f"run.workdir={args.workdir}")
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    try:
        cfg = load_config(args.config, overrides)
        ws = Workspace(cfg, args.command)
        message = COMMANDS[args.command][0](ws, args)
    except (CliError, ValueError, OSError) as exc:
        print(f"dmguide {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(message)
    return 0


if __name__ == "__main__":
    sys.exit(main())
