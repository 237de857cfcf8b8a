"""Candidate-pool DM guidance policy: supervised training and PPO with a theory-of-mind reward."""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import linmodel
from .corpus import Episode
from .intent import intent_to_action
from .linmodel import ChoiceBatch, LinearModel, TrainConfig, segment_softmax, to_csr, train_choice
from .player import PlayerModel, predict_action
from .synth import CHITCHAT, ENTITIES, FAR_PLACES, PLACES, GuidanceTemplate, default_bank
from .textfeat import (
    DEFAULT_DIM,
    SparseVector,
    content_tokens,
    cross_buckets,
    featurize,
    field_buckets,
    fnv1a_64,
    token_hashes,
)


@dataclass(frozen=True)
class Candidate:
    text: str
    template_id: str
    action_hint: str | None = None


# ------------------------------------------------------------------ candidates


@lru_cache(maxsize=4096)
def _name_re(name: str) -> re.Pattern:
    return re.compile(r"(?<!\w)" + re.escape(name) + r"(?!\w)")


def earliest_name(text: str, pool: Sequence[str]) -> str:
    """Pool member mentioned earliest in ``text`` (longer name wins a tie); ``pool[0]`` if none."""
    best = None
    for name in pool:
        m = _name_re(name).search(text)
        if m and (best is None or (m.start(), -len(name)) < best[0]):
            best = ((m.start(), -len(name)), name)
    return best[1] if best else pool[0]


def gen_candidates(
    context: str,
    intent: str | None = None,
    bank: Sequence[GuidanceTemplate] | None = None,
    k_distractors: int = 4,
    entity_pool: Sequence[str] = ENTITIES,
    place_pool: Sequence[str] = PLACES,
) -> list[Candidate]:
    """One candidate per template, filled from the context, then chitchat distractors.

    The pool does not depend on ``intent``; the argument is accepted so callers
    can treat pool construction as a function of the full state.
    """
    bank = default_bank() if bank is None else bank
    if not bank:
        raise ValueError("template bank is empty")
    if k_distractors < 0:
        raise ValueError("k_distractors must be >= 0")
    entity = earliest_name(context, entity_pool)
    place = earliest_name(context, place_pool)
    pool = list(_filled_bank(tuple(bank), entity, place))
    rng = np.random.default_rng(fnv1a_64(context))
    picks = rng.choice(len(CHITCHAT), size=k_distractors, replace=k_distractors > len(CHITCHAT))
    for i in picks:
        far = FAR_PLACES[int(rng.integers(len(FAR_PLACES)))]
        pool.append(Candidate(CHITCHAT[int(i)].format(far=far), f"chitchat-{int(i) + 1}"))
    return pool


@lru_cache(maxsize=1024)
def _filled_bank(bank: tuple[GuidanceTemplate, ...], entity: str, place: str) -> tuple[Candidate, ...]:
    return tuple(Candidate(t.fill(entity, place), t.id, t.action) for t in bank)


# -------------------------------------------------------------------- features


@lru_cache(maxsize=65536)
def _gram_block(text: str, dim: int) -> np.ndarray:
    return np.asarray(field_buckets("cand", text, dim), dtype=np.int64)


@lru_cache(maxsize=65536)
def _token_hash_block(text: str) -> np.ndarray:
    return token_hashes(content_tokens(text))


def candidate_rows(context: str, intent: str, pool: Sequence[Candidate], dim: int = DEFAULT_DIM) -> sp.csr_matrix:
    rows, cols, vals = _candidate_coo(context, intent, pool, dim)
    return sp.coo_matrix((vals, (rows, cols)), shape=(len(pool), dim)).tocsr()


def _candidate_coo(context: str, intent: str, pool: Sequence[Candidate], dim: int):
    """Feature rows for every candidate in ``pool`` given the state (context, intent).

    Each row holds up to three unit-norm blocks: candidate n-grams, context words
    crossed with the candidate's template id, and intent words crossed with the
    template id. Un-crossed context and intent features would be identical for
    every candidate in a pool and cancel in the softmax, so they are omitted.
    The row is scaled so its overall norm is 1.
    """
    K = len(pool)
    ctx_h = _token_hash_block(context)
    int_h = _token_hash_block(intent) if intent else np.zeros(0, dtype=np.uint64)
    keys = token_hashes([c.template_id for c in pool])
    grams = [_gram_block(c.text, dim) for c in pool]
    g_len = np.array([len(g) for g in grams], dtype=np.int64)
    n_blocks = (g_len > 0).astype(np.float64) + (len(ctx_h) > 0) + (len(int_h) > 0)
    row_scale = np.divide(1.0, np.sqrt(n_blocks), out=np.zeros(K), where=n_blocks > 0)
    rows = [np.repeat(np.arange(K), g_len)]
    cols = [np.concatenate(grams) if K else np.zeros(0, np.int64)]
    vals = [np.repeat(row_scale / np.sqrt(np.maximum(g_len, 1)), g_len)]
    for hashes, salt in ((ctx_h, "ctx*cand"), (int_h, "int*cand")):
        if len(hashes):
            rows.append(np.repeat(np.arange(K), len(hashes)))
            cols.append(cross_buckets(hashes, keys, salt, dim).T.ravel())
            vals.append(np.repeat(row_scale / math.sqrt(len(hashes)), len(hashes)))
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)


def value_features(context: str, intent: str, dim: int = DEFAULT_DIM) -> SparseVector:
    return featurize([("ctx", context), ("int", intent or "")], dim)


# ---------------------------------------------------------------------- policy


@dataclass
class Policy:
    scorer: np.ndarray
    value: np.ndarray
    value_bias: float = 0.0
    temperature: float = 1.0
    with_intent: bool = True
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scorer = np.asarray(self.scorer, dtype=np.float64)
        self.value = np.asarray(self.value, dtype=np.float64)
        if self.scorer.shape != self.value.shape or self.scorer.ndim != 1:
            raise ValueError("scorer and value must be vectors of the same dimension")
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not (np.all(np.isfinite(self.scorer)) and np.all(np.isfinite(self.value)) and math.isfinite(self.value_bias)):
            raise ValueError("policy weights must be finite")

    @classmethod
    def zeros(cls, dim: int = DEFAULT_DIM, with_intent: bool = True, temperature: float = 1.0) -> "Policy":
        return cls(np.zeros(dim), np.zeros(dim), 0.0, temperature, with_intent)

    @property
    def dim(self) -> int:
        return self.scorer.shape[0]

    def copy(self) -> "Policy":
        return Policy(self.scorer.copy(), self.value.copy(), self.value_bias, self.temperature, self.with_intent, dict(self.meta))

    def state_intent(self, intent: str | None) -> str:
        return (intent or "") if self.with_intent else ""

    def rows(self, context: str, intent: str | None, pool: Sequence[Candidate]) -> sp.csr_matrix:
        return candidate_rows(context, self.state_intent(intent), pool, self.dim)

    def probabilities(self, context: str, intent: str | None, pool: Sequence[Candidate]) -> np.ndarray:
        if not pool:
            raise ValueError("candidate pool is empty")
        return linmodel.softmax((self.rows(context, intent, pool) @ self.scorer) / self.temperature)

    def greedy(self, context: str, intent: str | None, pool: Sequence[Candidate]) -> Candidate:
        return pool[int(np.argmax(self.probabilities(context, intent, pool)))]

    def state_value(self, context: str, intent: str | None) -> float:
        return float(value_features(context, self.state_intent(intent), self.dim).dot(self.value) + self.value_bias)


def policy_sample(
    policy: Policy, context: str, intent: str | None, pool: Sequence[Candidate], rng: np.random.Generator
) -> tuple[Candidate, float]:
    """Sample a candidate from softmax(scores / T); returns it with its exact log-probability."""
    if not pool:
        raise ValueError("candidate pool is empty")
    p = policy.probabilities(context, intent, pool)
    k = int(rng.choice(len(pool), p=p))
    return pool[k], float(np.log(p[k]))


def save_policy(policy: Policy, path, meta: dict | None = None) -> None:
    head = {**policy.meta, **(meta or {}), "temperature": repr(policy.temperature), "with_intent": str(policy.with_intent).lower()}
    scorer = LinearModel(policy.scorer[None, :], np.zeros(1), ("score",))
    value = LinearModel(policy.value[None, :], np.array([policy.value_bias]), ("value",))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("policy v1\n")
        fh.write("[scorer]\n" + linmodel.dumps(scorer, head))
        fh.write("[value]\n" + linmodel.dumps(value))


def load_policy(path) -> Policy:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if not text.startswith("policy v1\n"):
        raise ValueError(f"{path}: not a policy file")
    try:
        _, rest = text.split("[scorer]\n", 1)
        s_text, v_text = rest.split("[value]\n", 1)
    except ValueError:
        raise ValueError(f"{path}: policy file is missing a section") from None
    scorer, value = linmodel.loads(s_text), linmodel.loads(v_text)
    meta = dict(scorer.meta)
    temperature = float(meta.pop("temperature", 1.0))
    with_intent = meta.pop("with_intent", "true") == "true"
    return Policy(scorer.W[0], value.W[0], float(value.b[0]), temperature, with_intent, meta)


# ------------------------------------------------------------------ pool data


@dataclass
class PoolData:
    """Candidate rows for many states stacked in one CSR matrix.

    ``ptr[g]:ptr[g+1]`` are state g's rows. Serves as a group source for
    :func:`linmodel.train_choice` once ``gold`` is set.
    """

    X: sp.csr_matrix
    ptr: np.ndarray
    pools: list[list[Candidate]]
    contexts: list[str]
    intents: list[str]
    gold: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return len(self.pools)

    def rows_of(self, indices) -> tuple[sp.csr_matrix, np.ndarray]:
        indices = np.asarray(indices, dtype=np.int64)
        starts, ends = self.ptr[indices], self.ptr[indices + 1]
        sizes = ends - starts
        rows = np.repeat(starts - np.concatenate(([0], np.cumsum(sizes)[:-1])), sizes) + np.arange(sizes.sum())
        sub_ptr = np.concatenate(([0], np.cumsum(sizes)))
        return self.X[rows], sub_ptr

    def batch(self, indices) -> ChoiceBatch:
        if self.gold is None:
            raise ValueError("pool data has no gold labels")
        X, ptr = self.rows_of(indices)
        return ChoiceBatch(X, ptr, ptr[:-1] + self.gold[np.asarray(indices, dtype=np.int64)])


def build_pool_data(
    states: Sequence[tuple[str, str]],
    bank: Sequence[GuidanceTemplate] | None = None,
    k_distractors: int = 4,
    dim: int = DEFAULT_DIM,
) -> PoolData:
    """Candidate pools and feature rows for a list of (context, intent) states."""
    bank = default_bank() if bank is None else bank
    pools, rows, cols, vals = [], [], [], []
    offset = 0
    for context, intent in states:
        pool = gen_candidates(context, intent, bank, k_distractors)
        pools.append(pool)
        r, c, v = _candidate_coo(context, intent, pool, dim)
        rows.append(r + offset)
        cols.append(c)
        vals.append(v)
        offset += len(pool)
    sizes = np.array([len(p) for p in pools], dtype=np.int64)
    ptr = np.concatenate(([0], np.cumsum(sizes)))
    if pools:
        X = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(offset, dim)).tocsr()
    else:
        X = sp.csr_matrix((0, dim))
    return PoolData(X, ptr, pools, [c for c, _ in states], [i for _, i in states])


@lru_cache(maxsize=65536)
def _sentence_vector(text: str, dim: int) -> SparseVector:
    return featurize([("s", text)], dim)


@lru_cache(maxsize=8192)
def _pool_matrix(texts: tuple[str, ...], dim: int) -> sp.csr_matrix:
    return to_csr([_sentence_vector(t, dim) for t in texts], dim)


def gold_candidate(pool: Sequence[Candidate], sentence: str, dim: int = DEFAULT_DIM) -> int:
    """Index of the pool member most cosine-similar to ``sentence`` (ties -> lowest index).

    Sentence vectors are unit-norm (or all-zero, with cosine 0), so the cosine
    is a plain dot product.
    """
    if not pool:
        raise ValueError("empty candidate pool")
    sims = _pool_matrix(tuple(c.text for c in pool), dim) @ _sentence_vector(sentence, dim).to_dense()
    return int(np.argmax(sims))


# ------------------------------------------------------------------ supervised


class LabeledView:
    """A subset of a :class:`PoolData`'s groups with a gold candidate per group."""

    def __init__(self, data: PoolData, groups: np.ndarray, gold: np.ndarray):
        self.data, self.groups, self.gold = data, np.asarray(groups, dtype=np.int64), np.asarray(gold, dtype=np.int64)
        self.dim = data.dim

    def __len__(self) -> int:
        return len(self.groups)

    def batch(self, indices) -> ChoiceBatch:
        indices = np.asarray(indices, dtype=np.int64)
        X, ptr = self.data.rows_of(self.groups[indices])
        return ChoiceBatch(X, ptr, ptr[:-1] + self.gold[indices])


def train_supervised(
    episodes: Sequence[Episode],
    with_intent: bool,
    cfg: TrainConfig = TrainConfig(),
    bank: Sequence[GuidanceTemplate] | None = None,
    k_distractors: int = 4,
    dim: int = DEFAULT_DIM,
    temperature: float = 1.0,
    pools: PoolData | None = None,
) -> Policy:
    """Cross-entropy over candidate pools, targeting the candidate closest to the labeled sentence.

    Episodes without a guidance label are skipped. With ``with_intent`` the
    episode's ``intent_text`` enters the state; otherwise the intent field is
    empty. ``pools`` may hold prebuilt rows, one group per episode in order,
    built from the same states; it lets several label sets share one build.
    """
    labeled = [i for i, ep in enumerate(episodes) if ep.guidance_index is not None]
    if not labeled:
        raise ValueError("no labeled episodes to train the policy on")
    if pools is None:
        states = [(episodes[i].context_text, (episodes[i].intent_text or "") if with_intent else "") for i in labeled]
        pools = build_pool_data(states, bank, k_distractors, dim)
        groups = np.arange(len(labeled))
    else:
        if len(pools) != len(episodes) or pools.dim != dim:
            raise ValueError("prebuilt pools must align with the episodes and feature dimension")
        groups = np.asarray(labeled)
    gold = [
        gold_candidate(pools.pools[g], episodes[i].dm_sentences[episodes[i].guidance_index], dim)
        for g, i in zip(groups, labeled)
    ]
    if any(len(pools.pools[g]) == 0 for g in groups):
        raise ValueError("empty candidate pool")
    model = train_choice(LabeledView(pools, groups, np.array(gold)), cfg, dim)
    policy = Policy(model.W[0].copy(), np.zeros(dim), 0.0, temperature, with_intent)
    policy.train_losses = model.train_losses
    return policy


# ------------------------------------------------------------------------ PPO


@dataclass(frozen=True)
class PpoConfig:
    clip: float = 0.2
    epochs_per_batch: int = 4
    batch_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    iterations: int = 60
    learning_rate: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.clip > 0:
            raise ValueError("clip epsilon must be > 0")
        if self.epochs_per_batch < 1:
            raise ValueError("epochs_per_batch must be >= 1")
        if self.batch_size < 1 or self.iterations < 0:
            raise ValueError("batch_size must be >= 1 and iterations >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")


@dataclass(frozen=True)
class RewardRecord:
    episode_id: str
    candidate: Candidate
    predicted_action: str
    intended_action: str
    reward: int

    def __post_init__(self):
        if self.reward != int(self.predicted_action == self.intended_action):
            raise ValueError("reward must be 1 exactly when the predicted action matches the intended one")


def compute_reward(
    intent: str,
    context: str,
    utterance: Candidate | str,
    pm_reward: PlayerModel,
    i2a: LinearModel,
    episode_id: str = "",
) -> RewardRecord:
    cand = utterance if isinstance(utterance, Candidate) else Candidate(utterance, "")
    _, predicted = predict_action(pm_reward, context, cand.text)
    intended = intent_to_action(intent, i2a)
    return RewardRecord(episode_id, cand, predicted, intended, int(predicted == intended))


@dataclass
class PpoBatch:
    """One batch of single-step episodes collected under the old policy."""

    X: sp.csr_matrix  # candidate rows for all states
    ptr: np.ndarray
    chosen: np.ndarray  # absolute row index of each sampled candidate
    old_logp: np.ndarray
    rewards: np.ndarray
    advantages: np.ndarray
    V: sp.csr_matrix  # value-head state features, one row per state


def _objective_parts(scorer, value, value_bias, temperature, batch: PpoBatch, cfg: PpoConfig):
    z = (batch.X @ scorer) / temperature
    probs, lognorm = segment_softmax(z, batch.ptr)
    logp = z[batch.chosen] - lognorm
    ratio = np.exp(logp - batch.old_logp)
    adv = batch.advantages
    clipped = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip)
    surr = np.minimum(ratio * adv, clipped * adv)
    v = batch.V @ value + value_bias
    err = batch.rewards - v
    logp_all = z - np.repeat(lognorm, np.diff(batch.ptr))
    plogp = probs * logp_all
    ent = -np.add.reduceat(plogp, batch.ptr[:-1])
    return dict(z=z, probs=probs, logp_all=logp_all, ratio=ratio, surr=surr, err=err, ent=ent)


def ppo_objective(policy: Policy, batch: PpoBatch, cfg: PpoConfig) -> float:
    """Mean over samples of clipped surrogate - value_coef * (r - V)^2 + entropy_coef * H."""
    p = _objective_parts(policy.scorer, policy.value, policy.value_bias, policy.temperature, batch, cfg)
    return float(np.mean(p["surr"] - cfg.value_coef * p["err"] ** 2 + cfg.entropy_coef * p["ent"]))


def ppo_grad(policy: Policy, batch: PpoBatch, cfg: PpoConfig):
    """Gradient of :func:`ppo_objective` w.r.t. (scorer, value, value_bias), plus diagnostics."""
    T = policy.temperature
    p = _objective_parts(policy.scorer, policy.value, policy.value_bias, T, batch, cfg)
    n = len(batch.chosen)
    sizes = np.diff(batch.ptr)
    adv, ratio = batch.advantages, p["ratio"]
    # the min() follows the unclipped branch unless the ratio left the trust region
    # in the direction the advantage rewards
    active = np.where(adv >= 0, ratio <= 1.0 + cfg.clip, ratio >= 1.0 - cfg.clip)
    coef = np.where(active, ratio * adv, 0.0)  # d surr / d logpi(a)
    # d logpi(a) / dz_j = [j == a] - p_j;  dH / dz_j = -p_j (log p_j + H)
    g = -p["probs"] * np.repeat(coef, sizes)
    g[batch.chosen] += coef
    g += cfg.entropy_coef * (-p["probs"] * (p["logp_all"] + np.repeat(p["ent"], sizes)))
    g_scorer = (batch.X.T @ g) / (n * T)
    g_err = 2.0 * cfg.value_coef * p["err"] / n
    g_value = batch.V.T @ g_err
    g_bias = float(g_err.sum())
    stats = dict(
        surrogate=float(np.mean(p["surr"])),
        value_loss=float(np.mean(p["err"] ** 2)),
        entropy=float(np.mean(p["ent"])),
    )
    return np.asarray(g_scorer).ravel(), np.asarray(g_value).ravel(), g_bias, stats


def collect_batch(
    policy: Policy,
    data: PoolData,
    indices: np.ndarray,
    reward_fn: Callable[[int, Candidate], int],
    rng: np.random.Generator,
) -> PpoBatch:
    X, ptr = data.rows_of(indices)
    z = (X @ policy.scorer) / policy.temperature
    probs, lognorm = segment_softmax(z, ptr)
    chosen, old_logp, rewards = [], [], []
    for g, idx in enumerate(indices):
        p = probs[ptr[g] : ptr[g + 1]]
        k = int(rng.choice(len(p), p=p / p.sum()))
        chosen.append(ptr[g] + k)
        old_logp.append(z[ptr[g] + k] - lognorm[g])
        rewards.append(reward_fn(int(idx), data.pools[idx][k]))
    V = linmodel.to_csr([value_features(data.contexts[i], data.intents[i], policy.dim) for i in indices], policy.dim)
    rewards = np.asarray(rewards, dtype=np.float64)
    advantages = rewards - (V @ policy.value + policy.value_bias)
    return PpoBatch(X, ptr, np.asarray(chosen), np.asarray(old_logp), rewards, advantages, V)


def ppo_update(policy: Policy, batch: PpoBatch, cfg: PpoConfig) -> dict:
    """K full-batch gradient-ascent steps on the PPO objective (in place)."""
    stats = {}
    for _ in range(cfg.epochs_per_batch):
        gs, gv, gb, stats = ppo_grad(policy, batch, cfg)
        policy.scorer += cfg.learning_rate * gs
        policy.value += cfg.learning_rate * gv
        policy.value_bias += cfg.learning_rate * gb
        if not (math.isfinite(stats["surrogate"]) and math.isfinite(stats["value_loss"]) and np.all(np.isfinite(policy.scorer))):
            raise FloatingPointError(
                f"PPO produced a non-finite value (surrogate={stats['surrogate']}, value_loss={stats['value_loss']}); "
                "lower the learning rate"
            )
    return stats


LOG_FIELDS = ("iteration", "mean_reward", "surrogate", "value_loss", "entropy")


def train_ppo(
    policy: Policy,
    episodes: Sequence[Episode],
    pm_reward: PlayerModel,
    i2a: LinearModel,
    cfg: PpoConfig = PpoConfig(),
    bank: Sequence[GuidanceTemplate] | None = None,
    k_distractors: int = 4,
    intents: Sequence[str] | None = None,
    pools: PoolData | None = None,
) -> tuple[Policy, list[dict]]:
    """Fine-tune ``policy`` with PPO; each episode is a single step (pick one utterance).

    ``intents`` overrides the episodes' stored intent texts (e.g. generated
    intents); episodes without an intent are skipped. ``pools`` may hold
    prebuilt rows aligned with ``episodes`` for the same states. Returns the
    trained copy and one log row per iteration.
    """
    texts = list(intents) if intents is not None else [ep.intent_text or "" for ep in episodes]
    if len(texts) != len(episodes):
        raise ValueError("intents must align with episodes")
    keep = np.array([i for i, t in enumerate(texts) if t], dtype=np.int64)
    if not len(keep):
        raise ValueError("PPO needs episodes carrying intents")
    if pools is None:
        data = build_pool_data(
            [(ep.context_text, policy.state_intent(t)) for ep, t in zip(episodes, texts)], bank, k_distractors, policy.dim
        )
    elif len(pools) != len(episodes) or pools.dim != policy.dim:
        raise ValueError("prebuilt pools must align with the episodes and policy dimension")
    else:
        data = pools
    targets = {int(i): intent_to_action(texts[i], i2a) for i in keep}

    def reward_fn(i: int, cand: Candidate) -> int:
        _, predicted = predict_action(pm_reward, episodes[i].context_text, cand.text)
        return int(predicted == targets[i])

    policy = policy.copy()
    rng = np.random.default_rng(cfg.seed)
    log = []
    for it in range(cfg.iterations):
        idx = keep[rng.choice(len(keep), size=min(cfg.batch_size, len(keep)), replace=False)]
        batch = collect_batch(policy, data, idx, reward_fn, rng)
        stats = ppo_update(policy, batch, cfg)
        log.append({"iteration": it, "mean_reward": float(batch.rewards.mean()), **stats})
    return policy, log


def log_to_csv(log: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=LOG_FIELDS, lineterminator="\n")
    w.writeheader()
    for row in log:
        w.writerow({k: (f"{row[k]:.6g}" if isinstance(row[k], float) else row[k]) for k in LOG_FIELDS})
    return buf.getvalue()


def greedy_outputs(
    policy: Policy,
    contexts: Sequence[str],
    intents: Sequence[str | None],
    bank: Sequence[GuidanceTemplate] | None = None,
    k_distractors: int = 4,
) -> list[str]:
    """Argmax candidate text per state (ties -> lowest pool index)."""
    if len(contexts) != len(intents):
        raise ValueError("contexts and intents differ in length")
    data = build_pool_data([(c, policy.state_intent(i)) for c, i in zip(contexts, intents)], bank, k_distractors, policy.dim)
    scores = data.X @ policy.scorer
    return [pool[int(np.argmax(scores[data.ptr[g] : data.ptr[g + 1]]))].text for g, pool in enumerate(data.pools)]
