import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from dmguide.actions import DEFAULT_ACTIONS
from dmguide.corpus import episodes_from_dump, read_episodes, read_posts
from dmguide.synth import (
    CHITCHAT, FILLER, GuidanceTemplate, SynthConfig, cue_index, default_bank, generate_corpus,
    rule_player_act,
)
from dmguide.textfeat import split_sentences, tokenize

BANK = default_bank()
CUES = cue_index(BANK)


def test_bank_shape():
    assert len(BANK) == 46
    assert {t.action for t in BANK} == set(DEFAULT_ACTIONS)
    assert len({t.id for t in BANK}) == 46
    for t in BANK:
        assert len(split_sentences(t.fill("Sildar Hallwinter", "Phandalin"))) == 1
        assert set(t.cue_tokens) <= set(tokenize(t.pattern))


def test_cue_tokens_disjoint_across_actions():
    owners = {}
    for t in BANK:
        for c in t.cue_tokens:
            owners.setdefault(c, set()).add(t.action)
    assert all(len(a) == 1 for a in owners.values())


def test_stock_sentences_carry_no_cues():
    for s in FILLER + CHITCHAT:
        assert not set(tokenize(s)) & set(CUES), s


def test_template_requires_cues():
    with pytest.raises(ValueError):
        GuidanceTemplate("x", "stealth", "Hide.", ())


def test_shared_cue_rejected():
    a = GuidanceTemplate("a", "stealth", "Shadows.", ("shadow",))
    b = GuidanceTemplate("b", "perception", "Shadows.", ("shadow",))
    with pytest.raises(ValueError):
        cue_index([a, b])


def test_bushes_example_is_perception():
    rng = np.random.default_rng(0)
    assert rule_player_act("You notice some movements in the bushes", BANK, 0.0, rng) == "perception"


def test_shaken_example_is_persuasion():
    rng = np.random.default_rng(0)
    assert rule_player_act("The guard seems a bit shaken to hear your words", BANK, 0.0, rng) == "persuasion"


def test_earliest_cue_wins():
    rng = np.random.default_rng(0)
    text = "A heavy boulder sits here. You notice movements in the bushes."
    assert rule_player_act(text, BANK, 0.0, rng) == "athletics"


def test_full_noise_is_uniform():
    rng = np.random.default_rng(123)
    draws = [rule_player_act("You notice movements in the bushes", BANK, 1.0, rng, DEFAULT_ACTIONS, CUES)
             for _ in range(10_000)]
    counts = np.array([draws.count(a) for a in DEFAULT_ACTIONS])
    assert chisquare(counts).pvalue > 1e-3


def test_no_cue_is_uniform_random_action():
    rng = np.random.default_rng(5)
    seen = {rule_player_act("Nothing to see here.", BANK, 0.0, rng, DEFAULT_ACTIONS, CUES) for _ in range(2000)}
    assert seen == set(DEFAULT_ACTIONS)


def test_deterministic_byte_identical(tmp_path):
    cfg = SynthConfig(n_episodes=50, seed=4, noise=0.2)
    for d in ("a", "b"):
        (tmp_path / d).mkdir()
        generate_corpus(cfg).write(tmp_path / d / "posts.jsonl", tmp_path / d / "gold.jsonl", tmp_path / d / "side.jsonl")
    for f in ("posts.jsonl", "gold.jsonl", "side.jsonl"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert len(read_episodes(tmp_path / "a" / "gold.jsonl")) == 50
    assert len(read_posts(tmp_path / "a" / "posts.jsonl")) > 50


def test_exact_episode_count():
    assert len(generate_corpus(SynthConfig(n_episodes=100, seed=2)).gold) == 100


def test_ambiguous_mode_two_guidance_sentences():
    corpus = generate_corpus(SynthConfig(n_episodes=100, seed=3, mode="ambiguous"))
    filled = set()
    for ep in corpus.gold:
        hits = [s for s in ep.dm_sentences if set(tokenize(s)) & set(CUES)]
        assert len(hits) == 2
        actions = {CUES[next(t for t in tokenize(s) if t in CUES)] for s in hits}
        assert len(actions) == 2
        assert ep.guidance_sentence in hits
        filled.add(ep.guidance_index)
    assert len(filled) > 1


def test_bank_with_one_action_rejected():
    bank = [t for t in BANK if t.action == "stealth"]
    with pytest.raises(ValueError):
        generate_corpus(SynthConfig(n_episodes=5), bank)


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(n_episodes=0)
    with pytest.raises(ValueError):
        SynthConfig(noise=1.5)
    with pytest.raises(ValueError):
        SynthConfig(mode="weird")


@given(st.integers(0, 2 ** 63 - 1), st.sampled_from(["plain", "ambiguous"]))
@settings(max_examples=10, deadline=None)
def test_oracle_consistency_and_reconstruction(seed, mode):
    corpus = generate_corpus(SynthConfig(n_episodes=40, seed=seed, noise=0.0, mode=mode))
    rng = np.random.default_rng(0)
    for ep in corpus.gold:
        assert rule_player_act(ep.dm_text, BANK, 0.0, rng, DEFAULT_ACTIONS, CUES) == ep.intended_action == ep.player_action
        ep.validate(DEFAULT_ACTIONS)
    rebuilt = {e.id: e for e in episodes_from_dump(corpus.posts)}
    assert len(rebuilt) >= 0.95 * 40
    for ep in corpus.gold:
        if ep.id in rebuilt:
            assert rebuilt[ep.id].dm_text == ep.dm_text
            assert rebuilt[ep.id].player_action == ep.player_action


def test_noise_rate_matches_configuration():
    corpus = generate_corpus(SynthConfig(n_episodes=2000, seed=9, noise=0.3))
    mismatch = np.mean([e.player_action != e.intended_action for e in corpus.gold])
    # random acts land on the intended action 1/23 of the time
    assert mismatch == pytest.approx(0.3 * 22 / 23, abs=0.035)


def test_dm_post_length_near_ten_sentences(clean_episodes):
    mean = np.mean([len(e.dm_sentences) for e in clean_episodes])
    assert 6 <= mean <= 10
