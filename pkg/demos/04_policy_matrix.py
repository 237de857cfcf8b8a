"""Train all seven DM policy variants for one seed on a reduced world and print the report.

With 1500 episodes the models are undertrained. Guidance rates sit below the
near-ceiling values of the default 5k-episode world, and PPO with the default
step size can move the generated-intent policy away from guidance. Compare
with ``dmguide matrix`` at full scale.
"""
import dataclasses

from dmguide.config import RunConfig
from dmguide.evalmetrics import reports_to_table
from dmguide.pipeline import build_world, run_seed

cfg = RunConfig()
cfg = dataclasses.replace(cfg, synth=dataclasses.replace(cfg.synth, n_episodes=1500),
                          ppo=dataclasses.replace(cfg.ppo, iterations=20))
world = build_world(cfg)
run = run_seed(world, 0)
print(reports_to_table(run.reports))
