"""Automatic evaluation: fluency proxies, groundedness, goal fulfillment and the star rate."""
from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .corpus import Episode
from .idm import GUIDANCE, identify_features
from .linmodel import LinearModel
from .player import PlayerModel, predict_action
from .textfeat import Gazetteer, extract_entities, tokenize

STAR_OVERLAP = 0.5


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate: str, reference: str, max_n: int = 4) -> float:
    """Sentence BLEU: clipped n-gram precisions (add-one smoothing for n >= 2) and brevity penalty."""
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        c_counts, r_counts = _ngram_counts(cand, n), _ngram_counts(ref, n)
        matched = sum(min(c, r_counts[g]) for g, c in c_counts.items())
        total = max(len(cand) - n + 1, 0)
        if n >= 2:
            matched, total = matched + 1, total + 1
        if matched == 0:
            return 0.0
        log_p += math.log(matched / total)
    bp = math.exp(min(0.0, 1.0 - len(ref) / len(cand)))
    return bp * math.exp(log_p / max_n)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> float:
    """LCS-based F1 over tokens."""
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand and not ref:
        return 1.0
    if not cand or not ref:
        return 0.0
    lcs = lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    p, r = lcs / len(cand), lcs / len(ref)
    return 2 * p * r / (p + r)


def entity_overlap(context: str, output: str, gaz: Gazetteer = Gazetteer()) -> float:
    """Share of the output's entities that also occur in the context (1.0 when it names none)."""
    e_out = extract_entities(output, gaz)
    if not e_out:
        return 1.0
    return len(e_out & extract_entities(context, gaz)) / len(e_out)


def guidance_flags(contexts: Sequence[str], outputs: Sequence[str], identify: LinearModel, threshold: float = 0.5) -> list[bool]:
    """IDM-Identify decision per output, with no future action available at evaluation time."""
    g = identify.labels.index(GUIDANCE)
    return [
        bool(identify.predict_proba(identify_features(c, o, None, identify.dim))[g] >= threshold)
        for c, o in zip(contexts, outputs)
    ]


def guidance_rate(
    outputs: Sequence[str],
    identify: LinearModel,
    contexts: Sequence[str] | None = None,
    threshold: float = 0.5,
) -> float:
    if not outputs:
        raise ValueError("no outputs to score")
    contexts = [""] * len(outputs) if contexts is None else contexts
    if len(contexts) != len(outputs):
        raise ValueError("contexts and outputs differ in length")
    return float(np.mean(guidance_flags(contexts, outputs, identify, threshold)))


def action_match_flags(episodes: Sequence[Episode], outputs: Sequence[str], pm_eval: PlayerModel) -> list[bool]:
    if len(episodes) != len(outputs):
        raise ValueError(f"{len(episodes)} episodes but {len(outputs)} outputs")
    return [predict_action(pm_eval, ep.context_text, o)[1] == ep.player_action for ep, o in zip(episodes, outputs)]


def action_match_rate(episodes: Sequence[Episode], outputs: Sequence[str], pm_eval: PlayerModel) -> float:
    flags = action_match_flags(episodes, outputs, pm_eval)
    if not flags:
        raise ValueError("no outputs to score")
    return float(np.mean(flags))


def star_rate(flags: Sequence[tuple[bool, bool, float]]) -> float:
    """Fraction of samples with guidance, an action match, and entity overlap >= 0.5.

    Each flag triple is (guidance, action_match, overlap); a boolean third
    element is read as "overlap threshold met".
    """
    if not flags:
        return 0.0
    return float(np.mean([bool(g) and bool(a) and float(o) >= STAR_OVERLAP for g, a, o in flags]))


@dataclass
class EvalReport:
    model_id: str
    split: str
    seed: int
    n: int
    bleu4: float
    rouge_l: float
    entity_overlap_mean: float
    guidance_rate: float
    action_match_rate: float
    star_rate: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a report needs at least one sample")
        for name in ("bleu4", "rouge_l", "entity_overlap_mean", "guidance_rate", "action_match_rate", "star_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    METRICS = ("bleu4", "rouge_l", "entity_overlap_mean", "guidance_rate", "action_match_rate", "star_rate")


REPORT_NOTE = "star = guidance AND action match AND entity overlap >= 0.5 (groundedness stands in for human fluency ratings)"


def evaluate_outputs(
    model_id: str,
    episodes: Sequence[Episode],
    outputs: Sequence[str],
    identify: LinearModel,
    pm_eval: PlayerModel,
    gaz: Gazetteer = Gazetteer(),
    threshold: float = 0.5,
    split: str = "test",
    seed: int = 0,
) -> EvalReport:
    """Score one output utterance per episode against the episode's labeled guidance and action."""
    if len(episodes) != len(outputs):
        raise ValueError(f"{len(episodes)} episodes but {len(outputs)} outputs")
    if not episodes:
        raise ValueError("no episodes to evaluate")
    contexts = [ep.context_text for ep in episodes]
    refs = [ep.guidance_sentence or ep.dm_text for ep in episodes]
    guid = guidance_flags(contexts, outputs, identify, threshold)
    match = action_match_flags(episodes, outputs, pm_eval)
    overlap = [entity_overlap(c, o, gaz) for c, o in zip(contexts, outputs)]
    return EvalReport(
        model_id=model_id,
        split=split,
        seed=seed,
        n=len(episodes),
        bleu4=float(np.mean([bleu(o, r) for o, r in zip(outputs, refs)])),
        rouge_l=float(np.mean([rouge_l(o, r) for o, r in zip(outputs, refs)])),
        entity_overlap_mean=float(np.mean(overlap)),
        guidance_rate=float(np.mean(guid)),
        action_match_rate=float(np.mean(match)),
        star_rate=star_rate(list(zip(guid, match, overlap))),
    )


def evaluate_model(
    policy,
    episodes: Sequence[Episode],
    identify: LinearModel,
    pm_eval: PlayerModel,
    gaz: Gazetteer = Gazetteer(),
    intents: Sequence[str] | None = None,
    model_id: str = "policy",
    threshold: float = 0.5,
    bank=None,
    k_distractors: int = 4,
    seed: int = 0,
) -> EvalReport:
    """Greedy-decode ``policy`` on each episode and score the outputs.

    ``policy`` may also be a plain list of output strings (e.g. a label set's
    guiding sentences), which are scored as given.
    """
    if isinstance(policy, (list, tuple)):
        outputs = list(policy)
    else:
        from .dmpolicy import greedy_outputs

        texts = list(intents) if intents is not None else [ep.intent_text or "" for ep in episodes]
        outputs = greedy_outputs(policy, [ep.context_text for ep in episodes], texts, bank, k_distractors)
    return evaluate_outputs(model_id, episodes, outputs, identify, pm_eval, gaz, threshold, seed=seed)


def _fmt(v) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def reports_to_csv(reports: Sequence[EvalReport]) -> str:
    names = [f.name for f in fields(EvalReport)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in reports:
        w.writerow([_fmt(getattr(r, k)) for k in names])
    return buf.getvalue()


def reports_to_table(reports: Sequence[EvalReport]) -> str:
    cols = ["model_id", "n", *EvalReport.METRICS]
    rows = [[_fmt(asdict(r)[c]) for c in cols] for r in reports]
    widths = [max(len(c), *(len(row[i]) for row in rows)) if rows else len(c) for i, c in enumerate(cols)]
    line = lambda cells: "  ".join(x.ljust(w) for x, w in zip(cells, widths))
    out = [f"# {REPORT_NOTE}", line(cols), line(["-" * w for w in widths])]
    out += [line(r) for r in rows]
    return "\n".join(out) + "\n"
