"""Shared fixtures: small seeded synthetic corpora and their reconstructed episodes."""
from __future__ import annotations

import pytest

from dmguide.corpus import episodes_from_dump
from dmguide.pipeline import join_gold
from dmguide.synth import SynthConfig, generate_corpus


def gold_view(corpus):
    return join_gold(episodes_from_dump(corpus.posts), corpus.gold)


@pytest.fixture(scope="session")
def clean_corpus():
    """1500 noise-free episodes: the rule player always follows the guidance cue."""
    return generate_corpus(SynthConfig(n_episodes=1500, seed=11, noise=0.0))


@pytest.fixture(scope="session")
def clean_episodes(clean_corpus):
    return gold_view(clean_corpus)


@pytest.fixture(scope="session")
def split_episodes(clean_episodes):
    train = [e for e in clean_episodes if e.split == "train"]
    test = [e for e in clean_episodes if e.split != "train"]
    return train, test


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
