"""From labeled guidance to intents, and predicting intents from context alone."""
from dmguide.config import RunConfig
from dmguide.experiments import gold_episodes
from dmguide.intent import generate_intent, mine_intent, train_intent_generator, with_mined_intent

cfg = RunConfig()
train, test = gold_episodes(cfg, n_episodes=1500, noise=0.1)
print("mined intent:", mine_intent(train[0]).text)

generator = train_intent_generator([with_mined_intent(e) for e in train], cfg.intent_train)
hits = sum(generate_intent(generator, e.context_text).intended_action == e.intended_action for e in test)
print(f"generated intent names the intended action on {hits}/{len(test)} held-out episodes")
print("example:", generate_intent(generator, test[0].context_text).text)
