"""Linear models trained by plain mini-batch gradient descent.

Two losses share one weight container:

* multinomial logistic regression over ``K`` labels
  (mean cross-entropy + ``l2/2 * ||W||^2``, bias unregularized);
* a listwise "choice" loss where a single weight row scores every item of a
  group and the group is normalized with a softmax (``K == 1``).

Inputs are sparse rows (:class:`~dmguide.textfeat.SparseVector` or CSR);
weights are dense.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
import scipy.sparse as sp

from .textfeat import SparseVector

FORMAT_TAG = "linmodel"
FORMAT_VERSION = "v1"


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    l2: float = 1e-4
    epochs: int = 20
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


class LinearModel:
    """``K x D`` weights, ``K`` biases and the ordered output labels."""

    def __init__(self, W: np.ndarray, b: np.ndarray, labels: Sequence[str], meta: dict | None = None):
        W = np.asarray(W, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        labels = tuple(str(x) for x in labels)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("W must be K x D and b must have K entries")
        if len(labels) != W.shape[0] or len(set(labels)) != len(labels) or not labels:
            raise ValueError("labels must be K >= 1 unique strings")
        if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
            raise ValueError("non-finite weights")
        self.W = W
        self.b = b
        self.labels = labels
        self.meta = dict(meta or {})
        self.train_losses: list[float] = []

    @classmethod
    def zeros(cls, labels: Sequence[str], dim: int) -> "LinearModel":
        return cls(np.zeros((len(labels), dim)), np.zeros(len(labels)), labels)

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def K(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "LinearModel":
        m = LinearModel(self.W.copy(), self.b.copy(), self.labels, self.meta)
        m.train_losses = list(self.train_losses)
        return m

    def same_weights(self, other: "LinearModel") -> bool:
        return (
            self.labels == other.labels
            and np.array_equal(self.W, other.W)
            and np.array_equal(self.b, other.b)
        )

    def logits(self, x: SparseVector) -> np.ndarray:
        if x.dim != self.dim:
            raise ValueError(f"dimension mismatch: vector has {x.dim}, model has {self.dim}")
        return self.W[:, x.indices] @ x.values + self.b

    def logits_batch(self, X: sp.csr_matrix) -> np.ndarray:
        if X.shape[1] != self.dim:
            raise ValueError(f"dimension mismatch: rows have {X.shape[1]}, model has {self.dim}")
        return np.asarray(X @ self.W.T) + self.b

    def predict_proba(self, x: SparseVector) -> np.ndarray:
        return softmax(self.logits(x))

    def predict_index(self, x: SparseVector) -> int:
        return int(np.argmax(self.logits(x)))  # first max wins

    def predict(self, x: SparseVector) -> str:
        return self.labels[self.predict_index(x)]

    def predict_batch(self, X: sp.csr_matrix) -> list[str]:
        return [self.labels[i] for i in np.argmax(self.logits_batch(X), axis=1)]


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def to_csr(vectors: Sequence[SparseVector], dim: int | None = None) -> sp.csr_matrix:
    if dim is None:
        if not vectors:
            raise ValueError("cannot infer dimension of an empty batch")
        dim = vectors[0].dim
    for v in vectors:
        if v.dim != dim:
            raise ValueError(f"dimension mismatch: {v.dim} != {dim}")
    indptr = np.zeros(len(vectors) + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([v.nnz for v in vectors])
    if vectors:
        indices = np.concatenate([v.indices for v in vectors])
        data = np.concatenate([v.values for v in vectors])
    else:
        indices, data = np.zeros(0, np.int64), np.zeros(0)
    return sp.csr_matrix((data, indices, indptr), shape=(len(vectors), dim))


# ---------------------------------------------------------------- multinomial


def multinomial_loss_grad(W, b, X: sp.csr_matrix, y: np.ndarray, l2: float):
    """Mean cross-entropy + l2/2 ||W||^2 and its gradient w.r.t. (W, b)."""
    n = X.shape[0]
    Z = np.asarray(X @ W.T) + b
    Z -= Z.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(Z).sum(axis=1))
    P = np.exp(Z - logZ[:, None])
    loss = float(np.mean(logZ - Z[np.arange(n), y])) + 0.5 * l2 * float(np.sum(W * W))
    G = P
    G[np.arange(n), y] -= 1.0
    G /= n
    gW = np.asarray((X.T @ G).T) + l2 * W
    gb = G.sum(axis=0)
    return loss, gW, gb


def _label_indices(labels_seq, label_set) -> np.ndarray:
    pos = {lab: i for i, lab in enumerate(label_set)}
    try:
        return np.array([pos[lab] for lab in labels_seq], dtype=np.int64)
    except KeyError as e:
        raise ValueError(f"label {e.args[0]!r} not in the label set") from None


def train_multinomial(
    data: Sequence[tuple[SparseVector, str]],
    cfg: TrainConfig = TrainConfig(),
    labels: Sequence[str] | None = None,
    init: LinearModel | None = None,
) -> LinearModel:
    """Fit softmax regression by shuffled mini-batch gradient descent.

    ``labels`` fixes the output order; by default it is the sorted set of
    labels seen in ``data``. Per-epoch mean loss (evaluated on the full data
    before the first and after every epoch) is kept in ``train_losses``.
    """
    if not data:
        raise ValueError("training data is empty")
    vectors = [x for x, _ in data]
    if labels is None:
        labels = sorted({lab for _, lab in data})
    X = to_csr(vectors)
    if not np.all(np.isfinite(X.data)):
        raise ValueError("non-finite feature value")
    y = _label_indices([lab for _, lab in data], labels)
    if init is not None:
        if tuple(labels) != init.labels or init.dim != X.shape[1]:
            raise ValueError("init model does not match labels/dimension")
        W, b = init.W.copy(), init.b.copy()
    else:
        W, b = np.zeros((len(labels), X.shape[1])), np.zeros(len(labels))

    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    losses = [multinomial_loss_grad(W, b, X, y, cfg.l2)[0]]
    lr, decay = cfg.learning_rate, 1.0 - cfg.learning_rate * cfg.l2
    if decay <= 0:
        raise ValueError("learning_rate * l2 must be below 1")
    # W is kept as scale * V so weight decay costs O(1) per step and each
    # update only touches the feature columns present in the batch.
    V, scale = W, 1.0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            Xb = X[rows]
            cols = np.unique(Xb.indices)
            Xs = sp.csr_matrix((Xb.data, np.searchsorted(cols, Xb.indices), Xb.indptr), shape=(len(rows), len(cols)))
            Z = np.asarray(Xs @ V[:, cols].T) * scale + b
            Z -= Z.max(axis=1, keepdims=True)
            G = np.exp(Z)
            G /= G.sum(axis=1, keepdims=True)
            G[np.arange(len(rows)), y[rows]] -= 1.0
            G /= len(rows)
            scale *= decay
            V[:, cols] -= (lr / scale) * np.asarray((Xs.T @ G).T)
            b -= lr * G.sum(axis=0)
            if scale < 1e-6:
                V *= scale
                scale = 1.0
        W = V * scale
        V, scale = W, 1.0
        losses.append(multinomial_loss_grad(W, b, X, y, cfg.l2)[0])
        if not math.isfinite(losses[-1]):
            raise FloatingPointError("training loss became non-finite; lower the learning rate")
    model = LinearModel(W, b, labels)
    model.train_losses = losses
    return model


def accuracy(model: LinearModel, data: Sequence[tuple[SparseVector, str]]) -> float:
    if not data:
        raise ValueError("no data")
    preds = model.predict_batch(to_csr([x for x, _ in data], model.dim))
    return float(np.mean([p == lab for p, (_, lab) in zip(preds, data)]))


# ------------------------------------------------------------------ listwise


@dataclass
class ChoiceBatch:
    """Stacked item rows of several groups; ``ptr[g]:ptr[g+1]`` are group g's rows."""

    X: sp.csr_matrix
    ptr: np.ndarray
    gold: np.ndarray  # absolute row index of each group's gold item

    @classmethod
    def from_groups(cls, groups: Sequence[tuple[sp.csr_matrix, int]]) -> "ChoiceBatch":
        sizes = np.array([g.shape[0] for g, _ in groups], dtype=np.int64)
        if np.any(sizes == 0):
            raise ValueError("empty choice group")
        ptr = np.zeros(len(groups) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum(sizes)
        gold = np.array([ptr[i] + gi for i, (_, gi) in enumerate(groups)], dtype=np.int64)
        for (g, gi) in groups:
            if not 0 <= gi < g.shape[0]:
                raise ValueError(f"gold index {gi} outside group of {g.shape[0]}")
        return cls(sp.vstack([g for g, _ in groups], format="csr"), ptr, gold)


class GroupSource(Protocol):
    """Anything that can serve batches of choice groups by index."""

    dim: int

    def __len__(self) -> int: ...

    def batch(self, indices) -> ChoiceBatch: ...


def segment_softmax(scores: np.ndarray, ptr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-group softmax probabilities and log-normalizers."""
    starts = ptr[:-1]
    mx = np.maximum.reduceat(scores, starts)
    sizes = np.diff(ptr)
    shifted = scores - np.repeat(mx, sizes)
    e = np.exp(shifted)
    tot = np.add.reduceat(e, starts)
    probs = e / np.repeat(tot, sizes)
    return probs, mx + np.log(tot)


def choice_loss_grad(w: np.ndarray, batch: ChoiceBatch, l2: float):
    """Mean over groups of -log softmax(gold) + l2/2 ||w||^2, and its gradient."""
    s = batch.X @ w
    probs, lognorm = segment_softmax(s, batch.ptr)
    n = len(batch.ptr) - 1
    loss = float(np.mean(lognorm - s[batch.gold])) + 0.5 * l2 * float(w @ w)
    g = probs.copy()
    g[batch.gold] -= 1.0
    grad = (batch.X.T @ g) / n + l2 * w
    return loss, grad


def train_choice(
    groups: Sequence[tuple[sp.csr_matrix, int]] | "GroupSource",
    cfg: TrainConfig = TrainConfig(),
    dim: int | None = None,
    init: np.ndarray | None = None,
) -> LinearModel:
    """Fit a shared-weight item scorer with a softmax over each group.

    ``groups`` is either a list of ``(item rows, gold index)`` pairs or any
    object with ``__len__`` and ``batch(indices) -> ChoiceBatch`` (used to
    build features lazily for large candidate pools).
    """
    source = groups if hasattr(groups, "batch") else ListGroups(groups)
    n = len(source)
    if n == 0:
        raise ValueError("no training groups")
    dim = dim or source.dim
    w = np.zeros(dim) if init is None else np.asarray(init, dtype=np.float64).copy()
    rng = np.random.default_rng(cfg.seed)
    losses = []
    full = np.arange(n)
    eval_loss = lambda: _chunked_choice_loss(w, source, full, cfg.l2)
    losses.append(eval_loss())
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            _, g = choice_loss_grad(w, source.batch(order[start : start + cfg.batch_size]), cfg.l2)
            w -= cfg.learning_rate * g
        losses.append(eval_loss())
        if not math.isfinite(losses[-1]):
            raise FloatingPointError("training loss became non-finite; lower the learning rate")
    model = LinearModel(w[None, :], np.zeros(1), ("score",))
    model.train_losses = losses
    return model


def _chunked_choice_loss(w, source, idx, l2, chunk=512) -> float:
    total = 0.0
    for s in range(0, len(idx), chunk):
        part = idx[s : s + chunk]
        loss, _ = choice_loss_grad(w, source.batch(part), 0.0)
        total += loss * len(part)
    return total / len(idx) + 0.5 * l2 * float(w @ w)


class ListGroups:
    def __init__(self, groups: Sequence[tuple[sp.csr_matrix, int]]):
        self.groups = list(groups)
        self.dim = self.groups[0][0].shape[1] if self.groups else 0

    def __len__(self) -> int:
        return len(self.groups)

    def batch(self, indices) -> ChoiceBatch:
        return ChoiceBatch.from_groups([self.groups[i] for i in indices])


# ------------------------------------------------------------ gradient check


def grad_check(
    model: LinearModel,
    data: Sequence[tuple[SparseVector, str]],
    eps: float = 1e-5,
    l2: float = 1e-4,
    n_coords: int = 100,
    seed: int = 0,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Coordinates are drawn from the weights touched by the data's features and
    from the biases, at least ``n_coords`` of them (with replacement when the
    support is smaller). Relative error is ``|a - n| / max(|a| + |n|, 1e-8)``.
    """
    if not data:
        raise ValueError("grad_check needs at least one datum")
    X = to_csr([x for x, _ in data], model.dim)
    y = _label_indices([lab for _, lab in data], model.labels)
    W, b = model.W.copy(), model.b.copy()
    _, gW, gb = multinomial_loss_grad(W, b, X, y, l2)
    rng = np.random.default_rng(seed)
    cols = np.unique(X.indices)
    coords = []
    for _ in range(n_coords):
        if cols.size and rng.random() < 0.9:
            coords.append(("W", int(rng.integers(model.K)), int(rng.choice(cols))))
        else:
            coords.append(("b", int(rng.integers(model.K)), 0))
    worst = 0.0
    for kind, k, j in coords:
        arr = W if kind == "W" else b
        key = (k, j) if kind == "W" else k
        old = arr[key]
        arr[key] = old + eps
        lp = multinomial_loss_grad(W, b, X, y, l2)[0]
        arr[key] = old - eps
        lm = multinomial_loss_grad(W, b, X, y, l2)[0]
        arr[key] = old
        num = (lp - lm) / (2 * eps)
        ana = gW[k, j] if kind == "W" else gb[k]
        worst = max(worst, abs(ana - num) / max(abs(ana) + abs(num), 1e-8))
    return worst


# --------------------------------------------------------------- persistence


def dumps(model: LinearModel, meta: dict | None = None) -> str:
    """Text form: header, optional ``# key=value`` lines, labels, K weight rows, bias row."""
    lines = [f"{FORMAT_TAG} {FORMAT_VERSION} {model.K} {model.dim}"]
    for k, v in sorted({**model.meta, **(meta or {})}.items()):
        lines.append(f"# {k}={v}")
    lines.append(json.dumps(list(model.labels)))
    for row in model.W:
        lines.append(" ".join("%.17g" % x for x in row))
    lines.append(" ".join("%.17g" % x for x in model.b))
    return "\n".join(lines) + "\n"


def loads(text: str) -> LinearModel:
    return _parse(iter(text.splitlines()))


def _parse(lines) -> LinearModel:
    header = next(lines, "").split()
    if len(header) != 4 or header[0] != FORMAT_TAG or header[1] != FORMAT_VERSION:
        raise ValueError(f"not a {FORMAT_TAG} {FORMAT_VERSION} file: {' '.join(header)!r}")
    K, D = int(header[2]), int(header[3])
    meta = {}
    line = next(lines)
    while line.startswith("#"):
        key, _, val = line[1:].strip().partition("=")
        meta[key] = val
        line = next(lines)
    labels = json.loads(line)
    W = np.array([np.array(next(lines).split(), dtype=np.float64) for _ in range(K)])
    b = np.array(next(lines).split(), dtype=np.float64)
    if W.shape != (K, D) or b.shape != (K,):
        raise ValueError("weight block does not match header dimensions")
    return LinearModel(W, b, labels, meta)


def save(model: LinearModel, path, meta: dict | None = None) -> None:
    Path(path).write_text(dumps(model, meta))


def load(path) -> LinearModel:
    return loads(Path(path).read_text())
