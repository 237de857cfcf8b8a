"""Labeling guidance after the fact from the player's reaction.

Trains the identify/extract pair on a small labeled subset, then labels a
hand-written DM post and compares extraction with the unsupervised baselines.
"""
import numpy as np

from dmguide.config import RunConfig
from dmguide.corpus import Episode, Turn, episodes_from_dump
from dmguide.experiments import gold_episodes
from dmguide.idm import BASELINES, baseline_extract, extract_guidance, extract_index, identify_negatives, train_bundle
from dmguide.synth import CHITCHAT, SynthConfig

cfg = RunConfig()
train, test = gold_episodes(cfg, n_episodes=1500, noise=0.1)
negs = identify_negatives(train, list(CHITCHAT), np.random.default_rng(0))
bundle = train_bundle(train, negs, cfg.identify_train, cfg.extract_train)

post = ("A dwarf named Gundren Rockseeker has hired you to transport a wagonload of provisions to the "
        "rough-and-tumble settlement of Phandalin... You all notice some movements in the bushes nearby the road...")
ep = Episode("demo", [Turn("DM", "dm", "The road is long.")], post, "Clint",
             "There might be something hiding there, let's go take a look. Clint makes a perception check. 16",
             "perception")
idx = extract_guidance(bundle, ep)
print("guidance sentence:", None if idx is None else ep.dm_sentences[idx])

print("\nextraction accuracy on held-out episodes")
print(f"  learned extractor: {np.mean([extract_index(bundle.extract, e) == e.guidance_index for e in test]):.3f}")
for method in BASELINES:
    acc = np.mean([baseline_extract(method, e) == e.guidance_index for e in test])
    print(f"  {method:>10} baseline: {acc:.3f}")
