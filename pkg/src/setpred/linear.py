"""Multinomial softmax models over sparse features.

One weight vector per class (or per child, for tree node classifiers),
an explicit bias, L2 regularization with inverse strength C, and a
full-batch Adam optimizer. The objective is

    sum_i [logsumexp(s_i) - s_i[y_i]] + (1 / (2C)) * ||W||^2

with s_i = W x_i + b; the bias is not regularized. Training stops when
the relative objective decrease between epochs falls below eps_l, or
after max_epochs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy import sparse
from scipy.special import logsumexp

from .data import Dataset, SparseVector
from .errors import DegenerateDataWarning, DimensionMismatch, InvalidParams

if TYPE_CHECKING:
    from .labeltree import LabelTree


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    """Max-shifted softmax; rows sum to one."""
    z = scores - scores.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


@dataclass
class LinearModel:
    weights: np.ndarray  # (K, D)
    bias: np.ndarray  # (K,)
    meta: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def n_features(self) -> int:
        return self.weights.shape[1]

    def predict_scores(self, x) -> np.ndarray:
        """Raw scores w_c . x + b_c; consumers normalize as needed."""
        if isinstance(x, SparseVector):
            if x.indices.size and x.indices[-1] >= self.n_features:
                raise DimensionMismatch(
                    f"feature index {int(x.indices[-1])} >= dimension {self.n_features}"
                )
            return self.weights[:, x.indices] @ x.values + self.bias
        if sparse.issparse(x):
            return self.predict_scores_batch(x)[0]
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise DimensionMismatch(
                f"vector has dimension {x.shape[-1]}, model has {self.n_features}"
            )
        return self.weights @ x + self.bias

    def predict_scores_batch(self, X) -> np.ndarray:
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(
                f"matrix has dimension {X.shape[1]}, model has {self.n_features}"
            )
        return np.asarray(X @ self.weights.T) + self.bias

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.predict_scores(x))

    def predict_proba_batch(self, X) -> np.ndarray:
        return softmax(self.predict_scores_batch(X), axis=1)


def _loss_and_grad(W, b, X, y_onehot, C):
    """Objective and gradients; kept separate for finite-difference checks."""
    scores = np.asarray(X @ W.T) + b
    ce = logsumexp(scores, axis=1) - scores[np.arange(scores.shape[0]), np.argmax(y_onehot, axis=1)]
    loss = ce.sum() + 0.5 / C * np.square(W).sum()
    P = softmax(scores, axis=1)
    R = P - y_onehot
    grad_W = np.asarray((X.T @ R).T) + W / C
    grad_b = R.sum(axis=0)
    return loss, grad_W, grad_b


def train_flat(
    data: Dataset,
    C: float = 100.0,
    eps_l: float = 1e-4,
    seed: int = 0,
    max_epochs: int = 200,
    lr: float = 0.5,
    batch_size: int | None = None,
) -> LinearModel:
    """Train a K-class softmax model; deterministic under the seed.

    Classes with no training examples keep a zero weight vector and a
    smoothed log-prior bias; a DegenerateDataWarning is emitted.
    """
    if data.n_classes < 2:
        raise InvalidParams("training needs at least 2 classes")
    if C <= 0:
        raise InvalidParams("C must be positive")
    K, D, n = data.n_classes, data.n_features, data.n_examples
    counts = np.bincount(data.y, minlength=K)
    missing = np.flatnonzero(counts == 0)
    if missing.size:
        warnings.warn(
            f"classes {missing.tolist()} have no training examples; "
            "they receive prior-only parameters",
            DegenerateDataWarning,
            stacklevel=2,
        )

    y_onehot = np.zeros((n, K))
    y_onehot[np.arange(n), data.y] = 1.0
    X = data.X.tocsr()

    W = np.zeros((K, D))
    b = np.zeros(K)
    mW = np.zeros_like(W)
    vW = np.zeros_like(W)
    mb = np.zeros_like(b)
    vb = np.zeros_like(b)
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8

    rng = np.random.default_rng(seed)
    prev_loss = None
    step = 0
    for epoch in range(max_epochs):
        if batch_size is None or batch_size >= n:
            batches = [slice(None)]
        else:
            order = rng.permutation(n)
            batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
        for rows in batches:
            loss, gW, gb = _loss_and_grad(W, b, X[rows], y_onehot[rows], C)
            step += 1
            mW = beta1 * mW + (1 - beta1) * gW
            vW = beta2 * vW + (1 - beta2) * gW * gW
            mb = beta1 * mb + (1 - beta1) * gb
            vb = beta2 * vb + (1 - beta2) * gb * gb
            corr1 = 1 - beta1**step
            corr2 = 1 - beta2**step
            W -= lr * (mW / corr1) / (np.sqrt(vW / corr2) + adam_eps)
            b -= lr * (mb / corr1) / (np.sqrt(vb / corr2) + adam_eps)
        epoch_loss, _, _ = _loss_and_grad(W, b, X, y_onehot, C)
        if prev_loss is not None:
            if abs(prev_loss - epoch_loss) / max(abs(prev_loss), 1.0) < eps_l:
                break
        prev_loss = epoch_loss

    if missing.size:
        W[missing] = 0.0
        b[missing] = np.log(1.0 / (n + K))
    return LinearModel(W, b, meta={"C": C, "eps_l": eps_l, "seed": seed})


def prune_weights(model: LinearModel, eta: float) -> LinearModel:
    """Zero all weights with magnitude below eta; bias is untouched."""
    if eta < 0:
        raise InvalidParams("eta must be non-negative")
    W = np.where(np.abs(model.weights) < eta, 0.0, model.weights)
    meta = dict(model.meta)
    meta["prune_eta"] = eta
    return LinearModel(W, model.bias.copy(), meta=meta)


def weight_sparsity(model: LinearModel) -> float:
    """Fraction of exactly-zero weights."""
    return float(np.mean(model.weights == 0.0))


@dataclass
class TreeNodeModels:
    """Per-internal-node child classifiers for a label tree.

    Nodes whose routed training data cannot support a classifier (no
    rows, or a single distinct child target) carry a constant empirical
    child distribution instead of a model.
    """

    tree: "LabelTree"
    models: dict[int, LinearModel]
    constants: dict[int, np.ndarray]

    def child_dist(self, node: int, x) -> np.ndarray:
        if node in self.constants:
            return self.constants[node]
        return self.models[node].predict_proba(x)

    def covers(self, node: int) -> bool:
        return node in self.models or node in self.constants


def train_tree_nodes(
    data: Dataset,
    tree: "LabelTree",
    C: float = 100.0,
    eps_l: float = 1e-4,
    seed: int = 0,
    max_epochs: int = 200,
    lr: float = 0.5,
) -> TreeNodeModels:
    """Train a softmax over children at every internal node.

    Each node sees only the examples whose class lies in its subtree,
    so the total work per example is proportional to its path length.
    """
    tree.validate()
    if data.n_classes != tree.n_classes:
        raise InvalidParams(
            f"tree covers {tree.n_classes} classes, data has {data.n_classes}"
        )
    subtree_classes = tree.subtree_classes()
    models: dict[int, LinearModel] = {}
    constants: dict[int, np.ndarray] = {}
    class_to_child: dict[int, np.ndarray] = {}
    for node in tree.internal_nodes():
        lookup = np.full(data.n_classes, -1, dtype=np.int64)
        for j, child in enumerate(tree.children[node]):
            lookup[sorted(subtree_classes[child])] = j
        class_to_child[node] = lookup

    for node in tree.internal_nodes():
        lookup = class_to_child[node]
        targets = lookup[data.y]
        rows = np.flatnonzero(targets >= 0)
        n_children = len(tree.children[node])
        if rows.size == 0:
            constants[node] = np.full(n_children, 1.0 / n_children)
            continue
        t = targets[rows]
        if np.unique(t).size < 2:
            freq = np.bincount(t, minlength=n_children).astype(np.float64)
            constants[node] = freq / freq.sum()
            continue
        sub = Dataset(data.X[rows], t, n_children)
        models[node] = train_flat(
            sub, C=C, eps_l=eps_l, seed=seed, max_epochs=max_epochs, lr=lr
        )
    return TreeNodeModels(tree, models, constants)
