"""Run configuration: one INI file with a section per stage, plus command-line overrides."""
from __future__ import annotations

import configparser
import dataclasses
import hashlib
from dataclasses import dataclass
from typing import Sequence

from .actions import DEFAULT_ACTIONS, validate_action_set
from .dmpolicy import PpoConfig
from .linmodel import TrainConfig
from .textfeat import DEFAULT_DIM, fnv1a_64


@dataclass(frozen=True)
class SynthSection:
    n_episodes: int = 5000
    noise: float = 0.1
    mode: str = "plain"
    filler_min: int = 4
    filler_max: int = 12
    scene_fidelity: float = 0.9


@dataclass(frozen=True)
class IdmSection:
    threshold: float = 0.5
    human_fraction: float = 0.05
    chitchat_per_episode: float = 0.5
    use_action: bool = True


@dataclass(frozen=True)
class PolicySection:
    k_distractors: int = 4
    temperature: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    workdir: str = "run"
    dim: int = DEFAULT_DIM
    window: int = 20
    actions: tuple[str, ...] = DEFAULT_ACTIONS
    synth: SynthSection = SynthSection()
    idm: IdmSection = IdmSection()
    policy: PolicySection = PolicySection()
    identify_train: TrainConfig = TrainConfig(learning_rate=3.0, epochs=20)
    extract_train: TrainConfig = TrainConfig(learning_rate=10.0, epochs=20)
    player_train: TrainConfig = TrainConfig(learning_rate=20.0, epochs=40, l2=1e-5)
    intent_train: TrainConfig = TrainConfig(learning_rate=10.0, epochs=10)
    i2a_train: TrainConfig = TrainConfig(learning_rate=10.0, epochs=5)
    policy_train: TrainConfig = TrainConfig(learning_rate=10.0, epochs=5)
    ppo: PpoConfig = PpoConfig(learning_rate=30.0, value_coef=0.01, iterations=60)

    def __post_init__(self):
        validate_action_set(self.actions)
        if self.dim < 2 or self.dim & (self.dim - 1):
            raise ValueError("dim must be a power of two")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0.0 < self.idm.human_fraction <= 1.0:
            raise ValueError("idm.human_fraction must be in (0, 1]")
        if not 0.0 < self.idm.threshold < 1.0:
            raise ValueError("idm.threshold must be in (0, 1)")
        if self.policy.k_distractors < 0 or not self.policy.temperature > 0:
            raise ValueError("policy.k_distractors must be >= 0 and temperature > 0")
        s = self.synth
        if s.n_episodes < 1 or not 0 <= s.noise <= 1 or not 1 <= s.filler_min <= s.filler_max or s.mode not in ("plain", "ambiguous"):
            raise ValueError("invalid [synth] section")

    def stage_seed(self, stage: str) -> int:
        """Seed for one pipeline stage, derived from the global seed and the stage name."""
        return fnv1a_64(f"{self.seed}/{stage}") & ((1 << 63) - 1)

    def stage_train(self, name: str, stage: str) -> TrainConfig:
        return dataclasses.replace(getattr(self, name), seed=self.stage_seed(stage))

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["run"] = {k: _render(getattr(self, k)) for k in _TOP_LEVEL}
        for sec in _SECTIONS:
            cp[sec] = {f.name: _render(getattr(getattr(self, sec), f.name)) for f in dataclasses.fields(getattr(self, sec))}
        lines = []
        for sec in cp.sections():
            lines.append(f"[{sec}]")
            lines += [f"{k} = {v}" for k, v in cp[sec].items()]
            lines.append("")
        return "\n".join(lines)

    def hash(self) -> str:
        """Fingerprint of every setting that can change results (the output directory cannot)."""
        canonical = dataclasses.replace(self, workdir="")
        return hashlib.sha256(canonical.to_ini().encode("utf-8")).hexdigest()[:16]


_TOP_LEVEL = ("seed", "workdir", "dim", "window", "actions")
_SECTIONS = tuple(
    f.name for f in dataclasses.fields(RunConfig) if dataclasses.is_dataclass(f.default)
)


def _render(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(map(str, v))
    return repr(v) if isinstance(v, float) else str(v)


def _coerce(text: str, like, key: str):
    text = text.strip()
    try:
        if isinstance(like, bool):
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        if isinstance(like, int):
            return int(text)
        if isinstance(like, float):
            return float(text)
        if isinstance(like, tuple):
            return tuple(x.strip() for x in text.split(",") if x.strip())
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {text!r} as {type(like).__name__}") from None
    return text


def _apply(cfg: RunConfig, section: str, key: str, value: str) -> RunConfig:
    if section == "run":
        if key not in _TOP_LEVEL:
            raise ValueError(f"unknown config key run.{key}")
        return dataclasses.replace(cfg, **{key: _coerce(value, getattr(cfg, key), f"run.{key}")})
    if section not in _SECTIONS:
        raise ValueError(f"unknown config section [{section}]")
    sub = getattr(cfg, section)
    names = {f.name for f in dataclasses.fields(sub)}
    if key not in names:
        raise ValueError(f"unknown config key {section}.{key}")
    new_sub = dataclasses.replace(sub, **{key: _coerce(value, getattr(sub, key), f"{section}.{key}")})
    return dataclasses.replace(cfg, **{section: new_sub})


def load_config(path: str | None = None, overrides: Sequence[str] = ()) -> RunConfig:
    """Defaults, then the INI file (if any), then ``section.key=value`` overrides."""
    cfg = RunConfig()
    if path:
        cp = configparser.ConfigParser(interpolation=None)
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
        for sec in cp.sections():
            for key, value in cp[sec].items():
                cfg = _apply(cfg, sec, key, value)
    for item in overrides:
        lhs, sep, value = item.partition("=")
        section, dot, key = lhs.strip().partition(".")
        if not sep or not dot:
            raise ValueError(f"override {item!r} must look like section.key=value")
        cfg = _apply(cfg, section, key.strip(), value)
    return cfg
