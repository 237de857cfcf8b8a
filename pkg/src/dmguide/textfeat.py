"""Tokenization, hashed n-gram features and heuristic entity extraction.

Every model in the package sees text through :func:`featurize`: field-prefixed
unigrams and bigrams hashed with 64-bit FNV-1a into ``dim`` buckets, counts
summed, then L2-normalized. Hashing is over UTF-8 bytes, so vectors are
identical across processes and platforms.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

DEFAULT_DIM = 2 ** 15

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF

_TOKEN_RE = re.compile(r"[^\W_]+")
# boundary: terminal punctuation run (plus closing quotes/brackets), whitespace, uppercase
_BOUNDARY_RE = re.compile(r"(?<=[.!?])([\"'”’)\]]*)\s+(?=[\"'“‘(\[]?[A-Z])")

STOPWORDS = frozenset(
    """a an the and or but of to in on at by for with from as is are was were be
    been being it its this that these those you your yours i me my we our us he
    him his she her they them their there here so if then than do does did have
    has had will would can could should may might must not no all some any each
    into onto over under up down out off about just very too also what which who
    whom whose when where why how s ll d t re ve m""".split()
)


@lru_cache(maxsize=1 << 20)
def fnv1a_64(text: str) -> int:
    h = FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


def split_sentences(text: str) -> list[str]:
    """Split on ``.``/``!``/``?`` runs followed by whitespace and an uppercase letter.

    A run such as ``...`` stays attached to the sentence it ends. Text without a
    qualifying boundary is returned as a single sentence.
    """
    text = text.strip()
    if not text:
        return []
    out = []
    start = 0
    for m in _BOUNDARY_RE.finditer(text):
        end = m.start() + len(m.group(1))
        out.append(text[start:end])
        start = m.end()
    out.append(text[start:])
    return [s for s in out if s]


def tokenize(text: str) -> list[str]:
    """Lowercased word tokens; punctuation is a separator and is dropped."""
    return [t.lower() for t in _TOKEN_RE.findall(text)]


def tokenize_cased(text: str) -> list[tuple[str, int]]:
    """Original-case tokens with their character offsets."""
    return [(m.group(0), m.start()) for m in _TOKEN_RE.finditer(text)]


def content_tokens(text: str) -> list[str]:
    """Unique non-stopword lowercase tokens in first-seen order."""
    seen: dict[str, None] = {}
    for t in tokenize(text):
        if t not in STOPWORDS and t not in seen:
            seen[t] = None
    return list(seen)


@dataclass(frozen=True, eq=False)
class SparseVector:
    indices: np.ndarray
    values: np.ndarray
    dim: int = DEFAULT_DIM

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise ValueError("indices and values must be 1-d arrays of equal length")
        if idx.size:
            if idx[0] < 0 or idx[-1] >= self.dim or np.any(np.diff(idx) <= 0):
                raise ValueError("indices must be strictly increasing within [0, dim)")
        if not np.all(np.isfinite(val)):
            raise ValueError("non-finite feature value")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    @classmethod
    def zeros(cls, dim: int = DEFAULT_DIM) -> "SparseVector":
        return cls(np.zeros(0, np.int64), np.zeros(0), dim)

    @classmethod
    def from_buckets(cls, buckets: np.ndarray, dim: int, normalize: bool = True) -> "SparseVector":
        """Accumulate a multiset of bucket ids into a (normalized) count vector."""
        if len(buckets) == 0:
            return cls.zeros(dim)
        idx, counts = np.unique(np.asarray(buckets, dtype=np.int64), return_counts=True)
        val = counts.astype(np.float64)
        if normalize:
            val /= np.sqrt(np.dot(val, val))
        return cls(idx, val, dim)

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SparseVector)
            and self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.sqrt(np.dot(self.values, self.values)))

    def dot(self, other: "SparseVector") -> float:
        common, ia, ib = np.intersect1d(self.indices, other.indices, assume_unique=True, return_indices=True)
        return float(np.dot(self.values[ia], other.values[ib]))

    def cosine(self, other: "SparseVector") -> float:
        na, nb = self.norm(), other.norm()
        if na == 0.0 or nb == 0.0:
            return 0.0
        return self.dot(other) / (na * nb)

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.indices] = self.values
        return out


def ngrams(tokens: Sequence[str]) -> list[str]:
    return list(tokens) + [f"{a}_{b}" for a, b in zip(tokens, tokens[1:])]


def _check_dim(dim: int) -> None:
    if dim <= 0 or dim & (dim - 1):
        raise ValueError(f"feature dimension must be a power of two, got {dim}")


def field_buckets(prefix: str, text: str, dim: int) -> list[int]:
    mask = dim - 1
    return [fnv1a_64(f"{prefix}:{g}") & mask for g in ngrams(tokenize(text))]


def featurize(fields: Iterable[tuple[str, str]], dim: int = DEFAULT_DIM, normalize: bool = True) -> SparseVector:
    """Hash ``prefix:gram`` unigram and bigram features of every field into one vector."""
    _check_dim(dim)
    buckets: list[int] = []
    for prefix, text in fields:
        buckets.extend(field_buckets(prefix, text, dim))
    return SparseVector.from_buckets(np.asarray(buckets, dtype=np.int64), dim, normalize)


def token_hashes(tokens: Sequence[str]) -> np.ndarray:
    return np.fromiter((fnv1a_64(t) for t in tokens), dtype=np.uint64, count=len(tokens))


def cross_buckets(left: np.ndarray, right: np.ndarray, salt: str, dim: int) -> np.ndarray:
    """Bucket ids for every (left token, right token) pair, shape ``(len(left), len(right))``.

    Pair hashes are an FNV-style mix of the two token hashes and a salt, so
    ``salt`` plays the role of a field prefix.
    """
    s = np.uint64(fnv1a_64(salt))
    p = np.uint64(FNV_PRIME)
    with np.errstate(over="ignore"):
        a = (left.astype(np.uint64) ^ s) * p
        h = (a[:, None] ^ right.astype(np.uint64)[None, :]) * p
        h ^= h >> np.uint64(29)
    return (h & np.uint64(dim - 1)).astype(np.int64)


@dataclass(frozen=True)
class Gazetteer:
    names: frozenset = frozenset()

    def __post_init__(self):
        cleaned = frozenset(n.strip() for n in self.names if n and n.strip())
        object.__setattr__(self, "names", cleaned)

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "Gazetteer":
        """Harvest non-sentence-initial capitalized runs from a corpus."""
        names: set[str] = set()
        for t in texts:
            for sent in split_sentences(t):
                names.update(" ".join(run) for run, initial in _capitalized_runs(sent) if not initial)
        return cls(frozenset(names))

    def add(self, *names: str) -> "Gazetteer":
        return Gazetteer(self.names | frozenset(names))

    def __contains__(self, name: str) -> bool:
        return name in self.names


_NOT_NAMES = frozenset({"I", "DM", "OOC"})


def _capitalized(tok: str) -> bool:
    return tok[:1].isupper() and tok not in _NOT_NAMES


def _capitalized_runs(sent: str) -> list[tuple[list[str], bool]]:
    """Maximal runs of adjacent capitalized tokens, each flagged if it opens the sentence."""
    toks = tokenize_cased(sent)
    runs = []
    i = 0
    while i < len(toks):
        if not _capitalized(toks[i][0]):
            i += 1
            continue
        j = i
        while j + 1 < len(toks) and _capitalized(toks[j + 1][0]) and _adjacent(sent, toks[j], toks[j + 1]):
            j += 1
        runs.append(([t for t, _ in toks[i : j + 1]], i == 0))
        i = j + 1
    return runs


def extract_entities(text: str, gaz: Gazetteer = Gazetteer()) -> set[str]:
    """Capitalized runs not at sentence start, plus gazetteer hits.

    A run opening a sentence is capitalized anyway, so its first word is
    dropped and the remainder forms an entity; the leading words count only
    when they form a known name (the longest gazetteer prefix). The remainder
    is kept even then, so enlarging the gazetteer never removes an entity.
    """
    found: set[str] = set()
    for sent in split_sentences(text):
        for run, initial in _capitalized_runs(sent):
            if not initial:
                found.add(" ".join(run))
                continue
            k = next((k for k in range(len(run), 0, -1) if " ".join(run[:k]) in gaz), 0)
            if k:
                found.add(" ".join(run[:k]))
            rest = run[1:]
            if rest:
                found.add(" ".join(rest))
    for name in gaz.names:
        if name in text and _name_regex(name).search(text):
            found.add(name)
    return found


@lru_cache(maxsize=1 << 16)
def _name_regex(name: str) -> re.Pattern:
    return re.compile(r"(?<!\w)" + re.escape(name) + r"(?!\w)")


def _adjacent(sent: str, a: tuple[str, int], b: tuple[str, int]) -> bool:
    # runs break on punctuation ("Clint, Vi") but not on plain spaces
    gap = sent[a[1] + len(a[0]) : b[1]]
    return gap.strip() == ""
