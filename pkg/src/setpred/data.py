"""Sparse datasets: svmlight-style IO and synthetic generators.

Class labels found in files may be arbitrary integers; they are remapped
to dense ids 0..K-1 and the mapping travels with the Dataset (and is
persisted in model bundles) so train/test splits stay aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    InvalidParams,
    NonMonotoneIndices,
    ParseError,
)


@dataclass(frozen=True)
class SparseVector:
    """Sorted (index, value) pairs; indices strictly increasing."""

    indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        val = np.asarray(self.values, dtype=np.float64)
        if idx.shape != val.shape or idx.ndim != 1:
            raise InvalidParams("indices and values must be 1-d and aligned")
        if idx.size and (np.any(idx < 0) or np.any(np.diff(idx) <= 0)):
            raise InvalidParams("indices must be non-negative and strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", val)

    def to_dense(self, dim: int) -> np.ndarray:
        out = np.zeros(dim)
        out[self.indices] = self.values
        return out


@dataclass
class Dataset:
    """Examples as a CSR matrix plus dense labels 0..K-1."""

    X: sparse.csr_matrix
    y: np.ndarray
    n_classes: int
    label_map: dict[int, int] | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_examples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    def example(self, i: int) -> tuple[SparseVector, int]:
        row = self.X.getrow(i)
        return SparseVector(row.indices.astype(np.int64), row.data), int(self.y[i])

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(
            self.X[rows], self.y[rows], self.n_classes, self.label_map, dict(self.meta)
        )


def read_svmlight(
    path,
    index_base: int = 1,
    n_features: int | None = None,
    label_map: dict[int, int] | None = None,
    n_classes: int | None = None,
) -> Dataset:
    """Parse ``label idx:val idx:val ...`` lines into a Dataset.

    Indices on each line must be strictly increasing; failures report
    the offending 1-based line number. Pass the training set's
    ``n_features``/``label_map`` when reading a test split so both share
    a feature space and label ids.
    """
    if index_base not in (0, 1):
        raise InvalidParams("index_base must be 0 or 1")
    labels: list[int] = []
    indptr = [0]
    col_idx: list[int] = []
    values: list[float] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            try:
                label = int(float(tokens[0]))
                if float(tokens[0]) != label:
                    raise ValueError
            except ValueError:
                raise ParseError(f"line {lineno}: bad label {tokens[0]!r}") from None
            prev = -1
            for tok in tokens[1:]:
                idx_s, _, val_s = tok.partition(":")
                try:
                    idx = int(idx_s) - index_base
                    val = float(val_s)
                except ValueError:
                    raise ParseError(f"line {lineno}: bad feature {tok!r}") from None
                if idx < 0:
                    raise ParseError(f"line {lineno}: index below base in {tok!r}")
                if idx <= prev:
                    raise NonMonotoneIndices(
                        f"line {lineno}: indices not strictly increasing at {tok!r}"
                    )
                prev = idx
                col_idx.append(idx)
                values.append(val)
            labels.append(label)
            indptr.append(len(col_idx))

    dim_seen = max(col_idx) + 1 if col_idx else 0
    if n_features is None:
        n_features = dim_seen
    elif dim_seen > n_features:
        raise ParseError(
            f"feature index {dim_seen - 1} exceeds declared dimension {n_features}"
        )
    if label_map is None:
        label_map = {lab: i for i, lab in enumerate(sorted(set(labels)))}
    unknown = set(labels) - set(label_map)
    if unknown:
        raise ParseError(f"labels {sorted(unknown)} not present in label map")
    y = np.array([label_map[lab] for lab in labels], dtype=np.int64)
    X = sparse.csr_matrix(
        (np.array(values), np.array(col_idx, dtype=np.int64), np.array(indptr)),
        shape=(len(labels), n_features),
    )
    if n_classes is None:
        n_classes = len(label_map)
    return Dataset(X, y, n_classes, label_map=dict(label_map))


def write_svmlight(dataset: Dataset, path, index_base: int = 1) -> None:
    """Inverse of read_svmlight; emits original labels when a map exists."""
    if index_base not in (0, 1):
        raise InvalidParams("index_base must be 0 or 1")
    inverse = None
    if dataset.label_map is not None:
        inverse = {v: k for k, v in dataset.label_map.items()}
    X = dataset.X.tocsr()
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(dataset.n_examples):
            label = int(dataset.y[i])
            if inverse is not None:
                label = inverse[label]
            start, end = X.indptr[i], X.indptr[i + 1]
            feats = " ".join(
                f"{int(j) + index_base}:{v:.17g}"
                for j, v in zip(X.indices[start:end], X.data[start:end])
            )
            fh.write(f"{label} {feats}".rstrip() + "\n")


# --- synthetic generators -------------------------------------------------


def gaussian_blobs(
    n_classes: int,
    n_features: int,
    n_examples: int,
    seed: int,
    sep: float = 3.0,
    noise: float = 1.0,
) -> tuple[Dataset, np.ndarray]:
    """Spherical Gaussian class blobs; returns the dataset and centers.

    With equal spherical covariance the true posterior is a linear
    softmax in x, so a multinomial logistic model is well specified for
    this generator. Larger ``sep`` separates the blobs further.
    """
    if n_classes < 2:
        raise InvalidParams("need at least 2 classes")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, sep, size=(n_classes, n_features))
    y = rng.integers(0, n_classes, size=n_examples)
    X = centers[y] + rng.normal(0.0, noise, size=(n_examples, n_features))
    ds = Dataset(
        sparse.csr_matrix(X),
        y.astype(np.int64),
        n_classes,
        label_map={i: i for i in range(n_classes)},
        meta={"kind": "gaussian_blobs", "sep": sep, "noise": noise, "seed": seed},
    )
    return ds, centers


def blob_posterior(centers: np.ndarray, noise: float, X) -> np.ndarray:
    """Exact class posterior of the blob generator (uniform class prior)."""
    dense = X.toarray() if sparse.issparse(X) else np.atleast_2d(X)
    logits = -0.5 * (
        np.square(dense).sum(axis=1, keepdims=True)
        - 2.0 * dense @ centers.T
        + np.square(centers).sum(axis=1)
    ) / (noise * noise)
    logits -= logits.max(axis=1, keepdims=True)
    p = np.exp(logits)
    return p / p.sum(axis=1, keepdims=True)


def dirichlet_dists(
    n_classes: int, n_draws: int, seed: int, alpha: float = 1.0
) -> np.ndarray:
    """Random normalized distributions, one per row."""
    if n_classes < 2:
        raise InvalidParams("need at least 2 classes")
    rng = np.random.default_rng(seed)
    return rng.dirichlet(np.full(n_classes, alpha), size=n_draws)


def synth_generate(kind: str, n_classes: int, n_features: int, n_examples: int, seed: int, **kw):
    """Dispatcher used by the CLI; see gaussian_blobs / dirichlet_dists."""
    if kind == "gaussian_blobs":
        ds, _ = gaussian_blobs(n_classes, n_features, n_examples, seed, **kw)
        return ds
    if kind == "dirichlet_dists":
        return dirichlet_dists(n_classes, n_examples, seed, **kw)
    raise InvalidParams(f"unknown synthetic kind {kind!r}")
