"""Bayes-optimal set-valued inference over conditional class distributions.

Only the K nested prefix sets of the probability-sorted classes can be
optimal, so the search is a line search over prefix sizes. For utility
sequences that are strictly decreasing and (1/x)-convex, the prefix
utility curve is unimodal and the loop may stop at the first strict
decrease; other sequences require scanning all K prefixes
(force_full_scan). The exhaustive subset oracle and the regret checker
live here as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyPrediction,
    InvalidParams,
    NonMonotoneProvider,
    NonPositiveG,
    ProviderExhaustedEarly,
    SizeOutOfRange,
    ThetaOutOfRange,
    UniverseMismatch,
    UniverseTooLarge,
)
from .utility import (
    UtilitySpec,
    eval_g,
    g_table,
    is_one_over_x_convex,
    is_strictly_decreasing,
)

MAX_BRUTE_FORCE_CLASSES = 22


@dataclass(frozen=True, eq=False)
class ClassDist:
    """A (possibly unnormalized) distribution over class ids."""

    ids: np.ndarray
    masses: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        masses = np.asarray(self.masses, dtype=np.float64)
        if ids.shape != masses.shape or ids.ndim != 1 or ids.size == 0:
            raise InvalidParams("ids and masses must be aligned non-empty 1-d arrays")
        if np.unique(ids).size != ids.size:
            raise InvalidParams("class ids must be unique")
        if masses.min() < 0.0:
            raise InvalidParams("masses must be non-negative")
        if self.normalized and abs(masses.sum() - 1.0) > 1e-9:
            raise InvalidParams(f"masses sum to {masses.sum()}, expected 1")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "masses", masses)

    @classmethod
    def from_masses(cls, masses, normalized: bool = True) -> "ClassDist":
        masses = np.asarray(masses, dtype=np.float64)
        return cls(np.arange(masses.size), masses, normalized)

    @classmethod
    def from_dict(cls, mapping: dict[int, float], normalized: bool = True) -> "ClassDist":
        ids = np.array(sorted(mapping), dtype=np.int64)
        return cls(ids, np.array([mapping[i] for i in ids]), normalized)

    def __len__(self) -> int:
        return self.ids.size

    def sorted_desc(self) -> tuple[np.ndarray, np.ndarray]:
        """Ids and masses by decreasing mass; ties by ascending id."""
        order = np.lexsort((self.ids, -self.masses))
        return self.ids[order], self.masses[order]

    def scaled(self, factor: float) -> "ClassDist":
        return ClassDist(self.ids, self.masses * factor, normalized=False)


@dataclass(frozen=True)
class PredictionSet:
    """An ordered class set with its cumulative mass and expected utility."""

    classes: tuple[int, ...]
    cum_mass: float
    utility_value: float | None = None
    steps_queried: int = 0

    def __post_init__(self):
        if not self.classes:
            raise EmptyPrediction("prediction set must be non-empty")

    def __len__(self) -> int:
        return len(self.classes)

    def __contains__(self, class_id: int) -> bool:
        return class_id in self.classes


def expected_utility(dist: ClassDist, pred, spec: UtilitySpec) -> float:
    """g(|pred|) times the mass the distribution puts on the set.

    Ids absent from the distribution contribute zero mass.
    """
    pred = list(pred)
    if not pred:
        raise EmptyPrediction("prediction set must be non-empty")
    member = np.isin(dist.ids, np.asarray(pred, dtype=np.int64))
    return eval_g(spec, len(pred)) * float(dist.masses[member].sum())


_early_stop_cache: dict[tuple[UtilitySpec, int], bool] = {}


def _early_stop_supported(spec: UtilitySpec, k: int) -> bool:
    key = (spec, k)
    cached = _early_stop_cache.get(key)
    if cached is None:
        try:
            cached = is_strictly_decreasing(spec, k) if k >= 2 else True
            if cached and k >= 3:
                cached = is_one_over_x_convex(spec, k)
        except NonPositiveG:
            cached = False
        _early_stop_cache[key] = cached
    return cached


def svbop(provider, spec: UtilitySpec, x=None, *, force_full_scan: bool = False) -> PredictionSet:
    """Generic set-valued Bayes-optimal prediction loop.

    Streams classes from the provider in decreasing probability order,
    tracks the best prefix set seen, and (by default) stops at the first
    strict utility decrease. Ties go to the larger set. Early stopping
    is refused for utility sequences that are not strictly decreasing
    and (1/x)-convex; pass force_full_scan to scan all K prefixes
    instead.
    """
    k = provider.num_classes
    if spec.kind == "reject":
        raise InvalidParams(
            "reject utility is undefined between sizes 1 and K; "
            "use gen_reject with a tiny beta instead"
        )
    if not force_full_scan and not _early_stop_supported(spec, k):
        raise InvalidParams(
            f"utility {spec} is not strictly decreasing and (1/x)-convex; "
            "early stopping would be unsound (set force_full_scan=True)"
        )

    provider.init_prediction(x)
    classes: list[int] = []
    cum = 0.0
    best_size = 0
    best_mass = 0.0
    best_util = 0.0
    steps = 0
    last_mass = math.inf
    while True:
        item = provider.get_next_class()
        if item is None:
            break
        c, mass = item
        steps += 1
        if mass > last_mass + 1e-12 * last_mass:
            raise NonMonotoneProvider(
                f"mass increased from {last_mass} to {mass} at step {steps}"
            )
        last_mass = mass
        classes.append(c)
        cum += mass
        util = cum * eval_g(spec, len(classes))
        if util >= best_util:
            best_util = util
            best_size = len(classes)
            best_mass = cum
        elif not force_full_scan:
            break
    if steps == 0:
        raise ProviderExhaustedEarly("provider returned no classes")
    return PredictionSet(tuple(classes[:best_size]), best_mass, best_util, steps)


def prefix_utility_curve(dist: ClassDist, spec: UtilitySpec) -> np.ndarray:
    """Expected utility of every mass-sorted prefix set, sizes 1..K."""
    _, masses = dist.sorted_desc()
    return np.cumsum(masses) * g_table(spec, len(dist))


def brute_force_bayes(dist: ClassDist, spec: UtilitySpec) -> PredictionSet:
    """Exhaustive maximizer over all non-empty subsets (the oracle).

    Guarded to at most 22 classes. Among equal-utility subsets the one
    with the larger cumulative mass wins, then the smallest sorted id
    tuple; the returned classes are listed by decreasing mass.
    """
    K = len(dist)
    if K > MAX_BRUTE_FORCE_CLASSES:
        raise UniverseTooLarge(f"{K} classes exceed the 2^{MAX_BRUTE_FORCE_CLASSES} guard")
    ids = np.sort(dist.ids)
    mass_of = dict(zip(dist.ids.tolist(), dist.masses.tolist()))
    bit_mass = np.array([mass_of[i] for i in ids])

    n = 1 << K
    subset_mass = np.zeros(n)
    subset_size = np.zeros(n, dtype=np.int8)
    all_masks = np.arange(n)
    for i in range(K):
        has = (all_masks >> i) & 1
        subset_mass += has * bit_mass[i]
        subset_size += has.astype(np.int8)

    g = np.concatenate(([0.0], g_table(spec, K)))
    util = g[subset_size] * subset_mass
    util[0] = -np.inf
    best_util = util.max()
    tied = np.flatnonzero(util == best_util)
    if tied.size > 1:
        best_mass = subset_mass[tied].max()
        tied = tied[subset_mass[tied] == best_mass]
    if tied.size > 1:
        key = min(tied, key=lambda m: tuple(int(ids[i]) for i in range(K) if (m >> i) & 1))
        tied = np.array([key])
    mask = int(tied[0])

    members = [int(ids[i]) for i in range(K) if (mask >> i) & 1]
    members.sort(key=lambda c: (-mass_of[c], c))
    return PredictionSet(tuple(members), float(subset_mass[mask]), float(best_util))


def top_s_predict(dist: ClassDist, s: int) -> PredictionSet:
    """The s highest-mass classes; ties broken by ascending id."""
    if not 1 <= s <= len(dist):
        raise SizeOutOfRange(f"s={s} outside 1..{len(dist)}")
    ids, masses = dist.sorted_desc()
    return PredictionSet(tuple(int(i) for i in ids[:s]), float(masses[:s].sum()))


def threshold_predict(dist: ClassDist, theta: float) -> PredictionSet:
    """Smallest prefix whose cumulative mass reaches theta.

    theta = 1 returns every class: that is the exact answer whenever
    all masses are positive, and it sidesteps the float ambiguity of
    partial sums that round to 1 while tail mass remains.
    """
    if not 0.0 <= theta <= 1.0:
        raise ThetaOutOfRange(f"theta={theta} outside [0, 1]")
    ids, masses = dist.sorted_desc()
    cum = np.cumsum(masses)
    if theta >= 1.0:
        s = len(dist)
    else:
        hits = np.flatnonzero(cum >= theta - 1e-12)
        s = int(hits[0]) + 1 if hits.size else len(dist)
    return PredictionSet(tuple(int(i) for i in ids[:s]), float(cum[s - 1]))


def compute_regret(
    true_dist: ClassDist, est_dist: ClassDist, spec: UtilitySpec
) -> tuple[float, float]:
    """Utility lost by optimizing the estimate instead of the truth.

    Returns (regret, l1) where l1 is the total absolute estimation
    error. The regret is mathematically bounded by 2 * l1; that bound
    is asserted here. Sub-float-precision negatives (exact ties across
    two arithmetic paths) are clamped to zero.
    """
    if set(true_dist.ids.tolist()) != set(est_dist.ids.tolist()):
        raise UniverseMismatch("distributions cover different class universes")
    best_true = brute_force_bayes(true_dist, spec)
    best_est = brute_force_bayes(est_dist, spec)
    u_star = expected_utility(true_dist, best_true.classes, spec)
    u_est = expected_utility(true_dist, best_est.classes, spec)
    regret = u_star - u_est

    order = np.argsort(true_dist.ids)
    order_est = np.argsort(est_dist.ids)
    l1 = float(np.abs(true_dist.masses[order] - est_dist.masses[order_est]).sum())

    assert regret >= -1e-12, f"oracle regret came out negative: {regret}"
    regret = max(regret, 0.0)
    assert regret <= 2.0 * l1 + 1e-12, f"regret {regret} exceeds 2*l1 = {2 * l1}"
    return regret, l1
