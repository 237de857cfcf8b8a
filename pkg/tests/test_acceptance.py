"""The nine acceptance criteria, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary
(``pytest tests/test_acceptance.py -v``). Criteria 3, 4, 5 and 9 share one
``matrix --seeds 3`` run on the default 5k-episode corpus; criterion 9 runs it a
second time to check bit-reproducibility.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import sys
import time
from collections import defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ACCEPTANCE
from dmguide.cli import main
from dmguide.config import RunConfig
from dmguide.dmpolicy import PpoConfig, ppo_update
from dmguide.evalmetrics import bleu, entity_overlap, lcs_length, rouge_l
from dmguide.experiments import noncausal_gap, oracle_learnability, reward_hacking_probe
from dmguide.linmodel import grad_check, segment_softmax, softmax
from dmguide.pipeline import build_world, run_seed
from dmguide.textfeat import extract_entities

pytestmark = pytest.mark.slow

CFG = RunConfig()
MATRIX_BUDGET_S = 300.0


def record(k: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, f"criterion {k}: {detail}"


# ------------------------------------------------------------- criterion 1


def test_criterion_1_oracle_learnability():
    r = oracle_learnability(CFG, extract_noise=0.1)
    ok = r.player_accuracy >= 0.95 and r.identify_accuracy >= 0.95 and r.extract_accuracy >= 0.90 and r.seconds < 120
    record(1, ok, f"PM-reward {r.player_accuracy:.3f} (>=0.95), identify {r.identify_accuracy:.3f} (>=0.95), "
                  f"extract {r.extract_accuracy:.3f} (>=0.90, cue oracle {r.extract_oracle_agreement:.3f}), "
                  f"{r.seconds:.0f}s (<120s)")


# ------------------------------------------------------------- criterion 2


def test_criterion_2_noncausal_advantage():
    g = noncausal_gap(CFG, noise=0.0)
    record(2, g.gap >= 0.25, f"with action {g.with_action:.3f}, without {g.without_action:.3f}, gap {100 * g.gap:.1f} pts (>=25)")


# ------------------------------------------------------ shared matrix run


@pytest.fixture(scope="module")
def matrix_runs(tmp_path_factory):
    out = []
    for name in ("first", "second"):
        d = tmp_path_factory.mktemp(f"matrix-{name}")
        t0 = time.perf_counter()
        code = main(["matrix", "--seeds", "3", "--workdir", str(d)])
        out.append((d, code, time.perf_counter() - t0))
    return out


def per_seed(matrix_runs):
    d, code, _ = matrix_runs[0]
    assert code == 0, "matrix command failed"
    rows = list(csv.DictReader(io.StringIO((d / "matrix_per_seed.csv").read_text())))
    table = defaultdict(dict)  # variant -> seed -> row
    for r in rows:
        table[r["model_id"]][int(r["seed"])] = {k: float(v) for k, v in r.items() if k not in ("model_id", "split")}
    return table


def mean_of(table, variant, metric):
    return float(np.mean([row[metric] for row in table[variant].values()]))


# ------------------------------------------------------------- criterion 3


def test_criterion_3_label_quality_ordering(matrix_runs):
    t = per_seed(matrix_runs)
    parts, ok = [], True
    for metric in ("action_match_rate", "guidance_rate"):
        r, h, i = (mean_of(t, v, metric) for v in ("Random-Label", "Human-Label", "IDM-Label"))
        ok &= r <= h <= i
        parts.append(f"{metric}: random {r:.3f} <= human {h:.3f} <= idm {i:.3f}")
    gap = mean_of(t, "IDM-Label", "action_match_rate") - mean_of(t, "Random-Label", "action_match_rate")
    ok &= gap >= 0.10
    record(3, ok, "; ".join(parts) + f"; idm-random action gap {100 * gap:.1f} pts (>=10)")


# ------------------------------------------------------------- criterion 4


def test_criterion_4_intent_effect(matrix_runs):
    t = per_seed(matrix_runs)
    mined, implicit = mean_of(t, "Mined Intent", "guidance_rate"), mean_of(t, "IDM-Label", "guidance_rate")
    rel = mined / implicit - 1.0 if implicit > 0 else math.inf
    record(4, rel >= 0.15, f"guidance mined {mined:.3f} vs implicit {implicit:.3f}: +{100 * rel:.1f}% (>=15%)")


# ------------------------------------------------------------- criterion 5


def test_criterion_5_tom_rl_effect(matrix_runs):
    t = per_seed(matrix_runs)
    seeds = sorted(t["Mined Intent"])
    improves = []
    for rl, init in (("RL+Mined Intent", "Mined Intent"), ("RL+Gen. Intent", "Gen. Intent")):
        for s in seeds:
            improves.append(t[rl][s]["action_match_rate"] > t[init][s]["action_match_rate"])
    supervised = ("Human-Label", "IDM-Label", "Random-Label", "Mined Intent", "Gen. Intent")
    best_name = max(supervised, key=lambda v: mean_of(t, v, "star_rate"))
    best, rl_gen = mean_of(t, best_name, "star_rate"), mean_of(t, "RL+Gen. Intent", "star_rate")
    ok = all(improves) and rl_gen >= 1.5 * best
    record(5, ok, f"RL beats its init on {sum(improves)}/{len(improves)} (variant, seed) pairs (need all); "
                  f"star RL+Gen {rl_gen:.3f} vs 1.5 x {best_name} {best:.3f} = {1.5 * best:.3f}")


# ------------------------------------------------------------- criterion 6


def test_criterion_6_numerical_correctness():
    from test_dmpolicy import random_batch, near_kink
    from test_linmodel import random_problem
    from dmguide.dmpolicy import Policy, ppo_grad, ppo_objective

    worst_cls = max(grad_check(*random_problem(s), eps=1e-5, l2=1e-3, n_coords=150, seed=s) for s in range(10))

    worst_ppo = 0.0
    cfg = PpoConfig(clip=0.2, value_coef=0.5, entropy_coef=0.05)
    for s in range(20):
        pol, batch = random_batch(s)
        if near_kink(pol, batch, cfg):
            continue
        gs, _, _, _ = ppo_grad(pol, batch, cfg)
        for j in range(pol.dim):
            e = np.zeros(pol.dim)
            e[j] = 1e-6
            num = (ppo_objective(Policy(pol.scorer + e, pol.value, pol.value_bias, pol.temperature), batch, cfg)
                   - ppo_objective(Policy(pol.scorer - e, pol.value, pol.value_bias, pol.temperature), batch, cfg)) / 2e-6
            worst_ppo = max(worst_ppo, abs(gs[j] - num) / max(abs(gs[j]) + abs(num), 1e-6))

    worst_reinforce = 0.0
    for s in range(10):
        pol, batch = random_batch(s, perturb=0.0)
        Xd = batch.X.toarray()
        expected = np.zeros(pol.dim)
        for g in range(len(batch.chosen)):
            rows = Xd[batch.ptr[g]:batch.ptr[g + 1]]
            p = softmax(rows @ pol.scorer / pol.temperature)
            expected += batch.advantages[g] * (Xd[batch.chosen[g]] - p @ rows) / pol.temperature
        expected /= len(batch.chosen)
        cfg1 = PpoConfig(clip=math.inf, epochs_per_batch=1, value_coef=0.0, entropy_coef=0.0, learning_rate=0.1)
        before = pol.scorer.copy()
        ppo_update(pol, batch, cfg1)
        worst_reinforce = max(worst_reinforce, float(np.max(np.abs((pol.scorer - before) / 0.1 - expected))))

    rng = np.random.default_rng(0)
    worst_sum = 0.0
    for _ in range(200):
        sizes = rng.integers(1, 8, size=int(rng.integers(1, 6)))
        ptr = np.concatenate([[0], np.cumsum(sizes)])
        z = rng.normal(scale=30, size=ptr[-1])
        p, _ = segment_softmax(z, ptr)
        worst_sum = max(worst_sum, float(np.max(np.abs(np.add.reduceat(p, ptr[:-1]) - 1.0))))
        worst_sum = max(worst_sum, abs(float(softmax(z).sum()) - 1.0))

    from dmguide.dmpolicy import RewardRecord, Candidate
    binary = True
    try:
        RewardRecord("e", Candidate("x", "t"), "stealth", "perception", 1)
        binary = False
    except ValueError:
        pass

    ok = worst_cls < 1e-4 and worst_ppo < 1e-4 and worst_reinforce <= 1e-6 and worst_sum <= 1e-9 and binary
    record(6, ok, f"classifier grad err {worst_cls:.1e}, PPO grad err {worst_ppo:.1e} (<1e-4); "
                  f"REINFORCE diff {worst_reinforce:.1e} (<=1e-6); softmax sum err {worst_sum:.1e} (<=1e-9); "
                  f"reward binary {binary}")


# ------------------------------------------------------------- criterion 7


def test_criterion_7_metric_fixtures():
    fixtures = [
        bleu("x y z", "x y z") == 1.0,
        bleu("alpha beta", "gamma delta") == 0.0,
        abs(bleu("the the the", "the cat", max_n=1) - 1 / 3) < 1e-12,
        lcs_length("a b c d".split(), "a c b d".split()) == 3,
        abs(rouge_l("a b c d", "a c b d") - 0.75) < 1e-12,
        rouge_l("same words", "same words") == 1.0,
        rouge_l("", "ref") == 0.0,
        extract_entities("The goblins attack.") == set(),
        entity_overlap("You meet Gundren near Phandalin.", "Ask Gundren about it.") == 1.0,
        entity_overlap("You meet Gundren near Phandalin.", "They speak of Waterdeep.") == 0.0,
        entity_overlap("You meet Gundren near Phandalin.", "Ask Gundren about Waterdeep.") == 0.5,
    ]

    @given(st.text(alphabet="abcdefgh XYZ.,", min_size=1).filter(lambda s: any(c.isalpha() for c in s)))
    @settings(max_examples=300, deadline=None)
    def identities(x):
        assert abs(bleu(x, x) - 1.0) < 1e-12
        assert rouge_l(x, x) == 1.0

    try:
        identities()
        ident_ok = True
    except AssertionError:
        ident_ok = False
    record(7, all(fixtures) and ident_ok,
           f"{sum(fixtures)}/{len(fixtures)} hand fixtures exact; metric(x,x)=1 over random strings: {ident_ok}")


# ------------------------------------------------------------- criterion 8


def test_criterion_8_reward_hacking_bound():
    cfg = dataclasses.replace(CFG, synth=dataclasses.replace(CFG.synth, noise=0.0))
    world = build_world(cfg)
    run = run_seed(world, 0)
    parts, ok = [], True
    for variant in ("RL+Mined Intent", "RL+Gen. Intent"):
        probe = reward_hacking_probe(world.test, run.outputs[variant], world.pm_reward)
        ok &= probe.gap <= 0.10
        parts.append(f"{variant}: rule {probe.rule_match:.3f} vs PM-reward {probe.reward_model_match:.3f} "
                     f"(gap {100 * probe.gap:.1f} pts)")
    record(8, ok, "; ".join(parts) + " (<=10 pts)")


# ------------------------------------------------------------- criterion 9


def test_criterion_9_determinism_and_scale(matrix_runs):
    (d1, c1, s1), (d2, c2, _) = matrix_runs
    names = sorted(p.name for p in d1.iterdir())
    identical = c1 == c2 == 0 and names == sorted(p.name for p in d2.iterdir()) and all(
        (d1 / n).read_bytes() == (d2 / n).read_bytes() for n in names)
    rows = list(csv.DictReader(io.StringIO((d1 / "matrix.csv").read_text()))) if c1 == 0 else []
    ok = identical and s1 < MATRIX_BUDGET_S and len(rows) == 7
    record(9, ok, f"matrix --seeds 3 took {s1:.0f}s (<{MATRIX_BUDGET_S:.0f}s), {len(rows)} variant rows, "
                  f"rerun byte-identical: {identical}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
