"""Class providers: iterators over classes in decreasing probability order.

A provider supports two operations. init_prediction(x) prepares the
stream for one query; get_next_class() returns the next (class_id, mass)
pair with non-increasing masses, or None once all classes are out. Each
provider instance serves one in-flight query; separate queries use
separate instances (or re-init) and may run in parallel.
"""

from __future__ import annotations

from typing import Protocol, runtime_checkable

import numpy as np

from .inference import ClassDist
from .linear import LinearModel, softmax


@runtime_checkable
class ClassProvider(Protocol):
    num_classes: int

    def init_prediction(self, x) -> None: ...

    def get_next_class(self) -> tuple[int, float] | None: ...


class SortedDistProvider:
    """Perfect provider over an explicit distribution (testing, oracles)."""

    def __init__(self, dist: ClassDist):
        self.dist = dist
        self.num_classes = len(dist)
        self._ids: np.ndarray | None = None
        self._masses: np.ndarray | None = None
        self._cursor = 0

    def init_prediction(self, x=None) -> None:
        self._ids, self._masses = self.dist.sorted_desc()
        self._cursor = 0

    def get_next_class(self):
        if self._ids is None:
            self.init_prediction()
        if self._cursor >= self.num_classes:
            return None
        i = self._cursor
        self._cursor += 1
        return int(self._ids[i]), float(self._masses[i])


class FullProvider:
    """Exact provider: scores every class once, sorts, then streams.

    Masses are the softmax probabilities when normalize is set, else
    max-shifted exponentials of the raw scores. Both orderings are
    identical; the unnormalized mode merely skips the partition sum.
    """

    def __init__(self, model: LinearModel, normalize: bool = True):
        self.model = model
        self.normalize = normalize
        self.num_classes = model.n_classes
        self._ids: np.ndarray | None = None
        self._masses: np.ndarray | None = None
        self._cursor = 0

    def init_prediction(self, x) -> None:
        scores = self.model.predict_scores(x)
        if self.normalize:
            masses = softmax(scores)
        else:
            masses = np.exp(scores - scores.max())
        order = np.lexsort((np.arange(self.num_classes), -masses))
        self._ids = order
        self._masses = masses[order]
        self._cursor = 0

    def get_next_class(self):
        if self._masses is None:
            raise RuntimeError("init_prediction was not called")
        if self._cursor >= self.num_classes:
            return None
        i = self._cursor
        self._cursor += 1
        return int(self._ids[i]), float(self._masses[i])
