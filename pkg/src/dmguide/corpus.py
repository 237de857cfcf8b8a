"""Forum post dumps to teacher/student episodes.

A thread is a list of :class:`Post` in ``seq`` order. Every player post that
makes an ability check is an action turn; the DM turn that addressed that
player (by name mention or reply) within the look-back window becomes the
guidance candidate, and the turns before it become the dialogue context.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

from .actions import DEFAULT_ACTIONS
from .textfeat import fnv1a_64, split_sentences

ROLES = ("dm", "player")
SPLITS = ("train", "valid", "test")
PROVENANCES = ("human", "idm", "random", "synthetic")
TRIGGER_WORDS = ("check", "roll", "rolls", "rolling")
TRIGGER_DISTANCE = 4

__all__ = [
    "Post", "AbilityCheckEvent", "Turn", "Episode", "split_sentences",
    "detect_ability_check", "build_episodes", "split_threads", "assign_splits",
    "read_posts", "write_posts", "read_episodes", "write_episodes", "FormatError",
]


class FormatError(ValueError):
    """A JSON Lines record that cannot be read, or breaks a type invariant."""


@dataclass(frozen=True)
class Post:
    id: str
    author: str
    role: str
    text: str
    seq: int
    reply_to: str | None = None
    name_mentions: tuple[str, ...] = ()

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"post {self.id}: role must be one of {ROLES}, got {self.role!r}")
        object.__setattr__(self, "name_mentions", tuple(self.name_mentions))


@dataclass(frozen=True)
class AbilityCheckEvent:
    action: str
    char_offset: int
    roll: int | None = None


@dataclass(frozen=True)
class Turn:
    speaker: str
    role: str
    text: str


@dataclass
class Episode:
    id: str
    context: list[Turn]
    dm_text: str
    player_name: str
    player_text: str
    player_action: str
    dm_sentences: list[str] = field(default_factory=list)
    guidance_index: int | None = None
    intent_text: str | None = None
    intended_action: str | None = None
    split: str = "train"
    provenance: str = "human"

    def __post_init__(self):
        if not self.dm_sentences:
            self.dm_sentences = split_sentences(self.dm_text)
        self.context = [t if isinstance(t, Turn) else Turn(*t) for t in self.context]

    def validate(self, actions: Sequence[str] | None = None) -> None:
        where = f"episode {self.id}"
        if not self.context:
            raise ValueError(f"{where}: context must hold at least one turn")
        if self.guidance_index is not None and not 0 <= self.guidance_index < len(self.dm_sentences):
            raise ValueError(
                f"{where}: guidance_index {self.guidance_index} out of range for {len(self.dm_sentences)} sentences"
            )
        if not self.player_action:
            raise ValueError(f"{where}: missing player_action")
        if actions is not None:
            for a in (self.player_action, self.intended_action):
                if a is not None and a not in actions:
                    raise ValueError(f"{where}: action {a!r} not in the action set")
        if self.split not in SPLITS:
            raise ValueError(f"{where}: split must be one of {SPLITS}")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"{where}: provenance must be one of {PROVENANCES}")
        for t in self.context:
            if t.role not in ROLES:
                raise ValueError(f"{where}: context role {t.role!r}")

    @property
    def context_text(self) -> str:
        return "\n".join(t.text for t in self.context)

    @property
    def guidance_sentence(self) -> str | None:
        if self.guidance_index is None:
            return None
        return self.dm_sentences[self.guidance_index]

    def replace(self, **changes) -> "Episode":
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["context"] = list(self.context)
        d["dm_sentences"] = list(self.dm_sentences)
        d.update(changes)
        return Episode(**d)


# ------------------------------------------------------------------ parsing


_WORD_RE = re.compile(r"[^\W_]+")


def detect_ability_check(
    text: str,
    action_set: Sequence[str] = DEFAULT_ACTIONS,
    synonyms: Mapping[str, str] | None = None,
) -> AbilityCheckEvent | None:
    """First action name within four tokens of check/roll/rolls/rolling.

    The roll is the first integer 1..20 after the matched action name.
    ``synonyms`` maps extra surface words onto action labels.
    """
    if not action_set:
        raise ValueError("action_set is empty")
    words = [(m.group(0).lower(), m.start(), m.end()) for m in _WORD_RE.finditer(text)]
    triggers = [i for i, (w, _, _) in enumerate(words) if w in TRIGGER_WORDS]
    if not triggers:
        return None
    names = [(a, a.split()) for a in action_set]
    names += [(a, s.lower().split()) for s, a in (synonyms or {}).items()]
    best = None
    for label, parts in names:
        n = len(parts)
        for i in range(len(words) - n + 1):
            if any(words[i + k][0] != parts[k] for k in range(n)):
                continue
            first, last = i, i + n - 1
            near = any(
                (t > last and t - last <= TRIGGER_DISTANCE) or (t < first and first - t <= TRIGGER_DISTANCE)
                for t in triggers
            )
            if near:
                cand = (words[first][1], -n, label, words[last][2])
                if best is None or cand < best:
                    best = cand
                break
    if best is None:
        return None
    start, _, label, end = best
    roll = None
    for m in re.finditer(r"\d+", text[end:]):
        v = int(m.group(0))
        if 1 <= v <= 20:
            roll = v
            break
    return AbilityCheckEvent(action=label, char_offset=start, roll=roll)


def split_threads(posts: Sequence[Post]) -> list[list[Post]]:
    """Cut a flat post dump into threads wherever ``seq`` fails to increase."""
    threads: list[list[Post]] = []
    for p in posts:
        if not threads or p.seq <= threads[-1][-1].seq:
            threads.append([])
        threads[-1].append(p)
    return threads


def build_episodes(
    posts: Sequence[Post],
    window: int = 20,
    action_set: Sequence[str] = DEFAULT_ACTIONS,
    synonyms: Mapping[str, str] | None = None,
    provenance: str = "human",
) -> list[Episode]:
    """Reconstruct one episode per ability-check post of a single thread.

    The DM turn is the nearest DM post within ``window`` turns before the check
    that names the player or replies to one of their posts. Failing that, it is
    the nearest earlier DM post (any distance) that does not reply to another
    player. A DM post with nothing before it cannot anchor an episode, since the
    context would be empty. Context is the up-to-``window`` turns preceding the
    DM turn.
    """
    if window < 0:
        raise ValueError("window must be >= 0")
    by_id = {p.id: p for p in posts}
    for a, b in zip(posts, posts[1:]):
        if b.seq <= a.seq:
            raise ValueError(f"posts not sorted by seq at {b.id}")
    episodes = []
    for j, post in enumerate(posts):
        if post.role != "player":
            continue
        event = detect_ability_check(post.text, action_set, synonyms)
        if event is None:
            continue
        dm_idx = _pick_dm_turn(posts, j, window, by_id)
        if dm_idx is None:
            continue
        dm = posts[dm_idx]
        context = [Turn(p.author, p.role, p.text) for p in posts[max(0, dm_idx - window) : dm_idx]]
        episodes.append(
            Episode(
                id=f"ep-{post.id}",
                context=context,
                dm_text=dm.text,
                player_name=post.author,
                player_text=post.text,
                player_action=event.action,
                provenance=provenance,
            )
        )
    return episodes


def episodes_from_dump(
    posts: Sequence[Post],
    window: int = 20,
    action_set: Sequence[str] = DEFAULT_ACTIONS,
    synonyms: Mapping[str, str] | None = None,
    provenance: str = "human",
) -> list[Episode]:
    """:func:`build_episodes` over every thread of a flat post dump."""
    out: list[Episode] = []
    for thread in split_threads(posts):
        out.extend(build_episodes(thread, window, action_set, synonyms, provenance))
    return out


def _replies_to_author(p: Post, by_id: Mapping[str, Post]) -> str | None:
    if p.reply_to is None or p.reply_to not in by_id:
        return None
    return by_id[p.reply_to].author


def _pick_dm_turn(posts, j, window, by_id) -> int | None:
    player = posts[j].author
    for i in range(j - 1, max(-1, j - window - 1), -1):
        p = posts[i]
        if p.role == "dm" and i > 0:
            if player in p.name_mentions or _replies_to_author(p, by_id) == player:
                return i
    for i in range(j - 1, 0, -1):
        p = posts[i]
        if p.role != "dm":
            continue
        target = p.reply_to and by_id.get(p.reply_to)
        if target and target.role == "player" and target.author != player:
            continue
        return i
    return None


def assign_splits(
    episodes: Iterable[Episode],
    seed: int = 0,
    fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> list[Episode]:
    """Deterministic id-hashed train/valid/test assignment."""
    if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError("split fractions must be non-negative and sum to 1")
    out = []
    for ep in episodes:
        u = (fnv1a_64(f"{seed}:{ep.id}") >> 11) / float(1 << 53)
        split = "train" if u < fractions[0] else "valid" if u < fractions[0] + fractions[1] else "test"
        out.append(ep.replace(split=split))
    return out


# -------------------------------------------------------------- JSON Lines

_POST_KEYS = {"id", "author", "role", "text", "reply_to", "name_mentions", "seq"}
_EPISODE_KEYS = {f.name for f in fields(Episode)}


def post_to_dict(p: Post) -> dict:
    d = {"id": p.id, "author": p.author, "role": p.role, "text": p.text, "seq": p.seq}
    if p.reply_to is not None:
        d["reply_to"] = p.reply_to
    d["name_mentions"] = list(p.name_mentions)
    return d


def episode_to_dict(ep: Episode) -> dict:
    d = {}
    for f in fields(Episode):
        v = getattr(ep, f.name)
        if v is None:
            continue
        if f.name == "context":
            v = [{"speaker": t.speaker, "role": t.role, "text": t.text} for t in v]
        d[f.name] = v
    return d


def episode_from_dict(d: Mapping, where: str = "") -> Episode:
    unknown = set(d) - _EPISODE_KEYS
    if unknown:
        raise FormatError(f"{where}unknown episode fields {sorted(unknown)}")
    try:
        ctx = [Turn(t["speaker"], t["role"], t["text"]) for t in d["context"]]
        return Episode(**{**d, "context": ctx})
    except (KeyError, TypeError) as e:
        raise FormatError(f"{where}bad episode record: {e}") from None


def _iter_json_lines(path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise FormatError(f"{path}:{n}: malformed JSON ({e.msg})") from None
            if not isinstance(rec, dict):
                raise FormatError(f"{path}:{n}: expected a JSON object")
            yield n, rec


def read_posts(path) -> list[Post]:
    out = []
    for n, rec in _iter_json_lines(path):
        unknown = set(rec) - _POST_KEYS
        if unknown:
            raise FormatError(f"{path}:{n}: unknown post fields {sorted(unknown)}")
        try:
            out.append(Post(**{**rec, "name_mentions": tuple(rec.get("name_mentions", ()))}))
        except (TypeError, ValueError) as e:
            raise FormatError(f"{path}:{n}: {e}") from None
    return out


def write_posts(posts: Iterable[Post], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in posts:
            fh.write(json.dumps(post_to_dict(p), ensure_ascii=False) + "\n")


def read_episodes(path, actions: Sequence[str] | None = None) -> list[Episode]:
    out = []
    for n, rec in _iter_json_lines(path):
        ep = episode_from_dict(rec, where=f"{path}:{n}: ")
        try:
            ep.validate(actions)
        except ValueError as e:
            raise FormatError(str(e)) from None
        out.append(ep)
    return out


def write_episodes(episodes: Iterable[Episode], path, actions: Sequence[str] | None = None) -> None:
    episodes = list(episodes)
    for ep in episodes:
        ep.validate(actions)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for ep in episodes:
            fh.write(json.dumps(episode_to_dict(ep), ensure_ascii=False) + "\n")
