"""A tour of the synthetic play-by-post world.

Generates a small corpus, prints one reconstructed episode with its hidden
gold labels, and shows how the rule-based player reacts to guidance.
"""
import numpy as np

from dmguide.corpus import episodes_from_dump
from dmguide.synth import SynthConfig, default_bank, generate_corpus, rule_player_act

corpus = generate_corpus(SynthConfig(n_episodes=200, seed=3, noise=0.1))
print(f"{len(corpus.posts)} posts, {len(corpus.gold)} gold episode records")

episodes = episodes_from_dump(corpus.posts)
ep = episodes[0]
gold = next(g for g in corpus.gold if g.id == ep.id)
print("\ncontext:")
for turn in ep.context:
    print(f"  [{turn.role}] {turn.speaker}: {turn.text}")
print("DM post, one sentence per line:")
for i, s in enumerate(ep.dm_sentences):
    print(f"  {i}: {s}")
print(f"player reply: {ep.player_text!r}  -> action {ep.player_action}")
print(f"gold: guidance sentence {gold.guidance_index}, intended action {gold.intended_action}, split {gold.split}")

bank = default_bank()
print(f"\nguidance bank: {len(bank)} templates")
for text in ("You notice some movements in the bushes.", "The guard seems a bit shaken to hear your words.",
             "The rain keeps falling."):
    # noise 0: act on the earliest cue, or pick uniformly when there is none
    print(f"  rule player on {text!r}: {rule_player_act(text, bank, 0.0, np.random.default_rng(0))}")
