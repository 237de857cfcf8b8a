import math
from collections import Counter
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmguide.config import RunConfig
from dmguide.evalmetrics import (
    REPORT_NOTE, EvalReport, action_match_rate, bleu, entity_overlap, evaluate_model, evaluate_outputs,
    guidance_rate, lcs_length, reports_to_csv, reports_to_table, rouge_l, star_rate,
)
from dmguide.idm import identify_negatives, train_identify
from dmguide.player import predict_action, train_player_model
from dmguide.synth import CHITCHAT, default_bank
from dmguide.textfeat import Gazetteer, extract_entities, tokenize

CFG = RunConfig()
token_text = st.lists(st.sampled_from(["the", "cat", "sat", "on", "a", "mat", "dog"]), max_size=10).map(" ".join)


# -------------------------------------------------------------------- BLEU


def test_bleu_identity():
    assert bleu("you notice some movements in the bushes", "you notice some movements in the bushes") == 1.0


def test_bleu_disjoint():
    assert bleu("alpha beta gamma", "delta epsilon") == 0.0


def test_bleu_unigram_clipping():
    assert bleu("the the the", "the cat", max_n=1) == pytest.approx(1 / 3, abs=1e-12)


def test_bleu_empty_candidate():
    assert bleu("", "the cat") == 0.0


def test_bleu_brevity_penalty():
    # every candidate n-gram matches; only the length ratio r/c = 4/2 is penalized
    assert bleu("the cat", "the cat sat down", max_n=1) == pytest.approx(math.exp(1 - 2), abs=1e-12)


def bleu_oracle(cand, ref, max_n=4):
    c, r = cand.split(), ref.split()
    if not c:
        return 0.0
    precisions = []
    for n in range(1, max_n + 1):
        cg = Counter(zip(*[c[i:] for i in range(n)]))
        rg = Counter(zip(*[r[i:] for i in range(n)]))
        hit = sum((cg & rg).values())
        tot = sum(cg.values())
        precisions.append((hit + (n > 1)) / (tot + (n > 1)) if tot + (n > 1) else 0.0)
    if min(precisions) == 0:
        return 0.0
    bp = 1.0 if len(c) >= len(r) else math.exp(1 - len(r) / len(c))
    return bp * math.prod(precisions) ** (1 / max_n)


@given(token_text, token_text)
def test_bleu_matches_counter_oracle(c, r):
    assert bleu(c, r) == pytest.approx(bleu_oracle(c, r), abs=1e-12)


# ------------------------------------------------------------------- ROUGE


def test_rouge_hand_lcs():
    assert lcs_length("a b c d".split(), "a c b d".split()) == 3
    assert rouge_l("a b c d", "a c b d") == pytest.approx(0.75)


def test_rouge_boundaries():
    assert rouge_l("same words here", "same words here") == 1.0
    assert rouge_l("", "something") == 0.0
    assert rouge_l("", "") == 1.0


def lcs_oracle(a, b):
    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(a) or j == len(b):
            return 0
        return go(i + 1, j + 1) + 1 if a[i] == b[j] else max(go(i + 1, j), go(i, j + 1))
    return go(0, 0)


@given(token_text, token_text)
def test_lcs_matches_recursive_oracle(a, b):
    assert lcs_length(tuple(a.split()), tuple(b.split())) == lcs_oracle(tuple(a.split()), tuple(b.split()))


@given(token_text.filter(lambda t: t.strip()), token_text)
def test_metrics_identity_and_range(x, y):
    assert bleu(x, x) == pytest.approx(1.0)
    assert rouge_l(x, x) == 1.0
    assert 0.0 <= bleu(x, y) <= 1.0 and 0.0 <= rouge_l(x, y) <= 1.0
    assert rouge_l(x, y) == pytest.approx(rouge_l(y, x))


# ---------------------------------------------------------------- entities

CTX = "You meet Gundren near Phandalin."


def test_entity_overlap_fixtures():
    assert extract_entities(CTX) == {"Gundren", "Phandalin"}
    assert entity_overlap(CTX, "Ask Gundren about it.") == 1.0
    assert entity_overlap(CTX, "They speak of Waterdeep.") == 0.0
    assert entity_overlap(CTX, "Ask Gundren about Waterdeep.") == 0.5
    assert entity_overlap(CTX, "nothing named here.") == 1.0


ctx_names = ["Gundren", "Phandalin", "Sildar"]
far_names = ["Waterdeep", "Luskan", "Candlekeep"]


@given(st.lists(st.sampled_from(ctx_names + far_names), min_size=1, max_size=5, unique=True), st.data())
def test_removing_foreign_entity_never_lowers_overlap(names, data):
    context = "You travel with " + ", ".join(ctx_names) + "."
    gaz = Gazetteer(frozenset(ctx_names + far_names))
    output = "We saw " + ", ".join(names) + "."
    foreign = [n for n in names if n in far_names]
    if not foreign:
        return
    drop = data.draw(st.sampled_from(foreign))
    kept = [n for n in names if n != drop]
    shorter = "We saw " + ", ".join(kept) + "." if kept else "We saw nobody."
    assert entity_overlap(context, shorter, gaz) >= entity_overlap(context, output, gaz)


# -------------------------------------------------------------------- star


def test_star_fixtures():
    assert star_rate([(True, True, 1.0)] * 4) == 1.0
    assert star_rate([(True, False, 1.0)] * 4) == 0.0
    flags = [(True, True, True), (True, False, True), (False, True, True), (True, True, False)]
    assert star_rate(flags) == 0.25
    assert star_rate([(True, True, 0.49), (True, True, 0.5)]) == 0.5


# ------------------------------------------------------------- model-based


@pytest.fixture(scope="module")
def evaluators(clean_episodes, split_episodes):
    train, _ = split_episodes
    negs = identify_negatives(train, list(CHITCHAT), np.random.default_rng(0))
    identify = train_identify(train + negs, CFG.identify_train)
    pm_eval = train_player_model(clean_episodes, "eval", CFG.player_train)
    return identify, pm_eval


def test_guidance_rate_templates_vs_chitchat(evaluators, split_episodes):
    identify, _ = evaluators
    _, test = split_episodes
    templates = [t.fill("Sildar Hallwinter", "Phandalin") for t in default_bank()]
    assert guidance_rate(templates, identify) >= 0.9
    assert guidance_rate([c.format(far="Waterdeep") for c in CHITCHAT], identify) <= 0.1
    with pytest.raises(ValueError):
        guidance_rate([], identify)


def test_action_match_on_gold_sentences_tracks_pm_accuracy(evaluators, split_episodes):
    _, pm_eval = evaluators
    _, test = split_episodes
    rate = action_match_rate(test, [e.guidance_sentence for e in test], pm_eval)
    own = np.mean([predict_action(pm_eval, e.context_text, e.dm_text)[1] == e.player_action for e in test])
    assert abs(rate - own) <= 0.05


def test_constant_output_without_context_hits_base_rate(evaluators, split_episodes):
    _, pm_eval = evaluators
    _, test = split_episodes
    blank = [e.replace(context=[e.context[0].__class__("DM", "dm", "")]) for e in test]
    const = "The weather holds."
    predicted = predict_action(pm_eval, "", const)[1]
    base = np.mean([e.player_action == predicted for e in test])
    assert action_match_rate(blank, [const] * len(blank), pm_eval) == pytest.approx(base)


def test_action_match_length_mismatch(evaluators, split_episodes):
    with pytest.raises(ValueError):
        action_match_rate(split_episodes[1][:3], ["x"], evaluators[1])


def test_report_identity_row_and_determinism(evaluators, split_episodes):
    identify, pm_eval = evaluators
    _, test = split_episodes
    gold = [e.guidance_sentence for e in test]
    a = evaluate_model(gold, test, identify, pm_eval, model_id="gold")
    b = evaluate_model(gold, test, identify, pm_eval, model_id="gold")
    assert a == b
    assert a.bleu4 == pytest.approx(1.0) and a.rouge_l == 1.0
    for m in EvalReport.METRICS:
        assert 0.0 <= getattr(a, m) <= 1.0
    csv_text = reports_to_csv([a])
    assert csv_text.splitlines()[0].startswith("model_id,split,seed,n,bleu4")
    assert reports_to_table([a]).startswith("# " + REPORT_NOTE)


def test_report_invariants():
    with pytest.raises(ValueError):
        EvalReport("m", "test", 0, 0, 0, 0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        EvalReport("m", "test", 0, 1, 1.5, 0, 0, 0, 0, 0)
