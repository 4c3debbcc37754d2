"""Set-based utility functions driven by a cardinality sequence g(s).

A prediction set of size s containing the true class is rewarded g(s);
a set missing the true class is rewarded 0. Members of the family are
identified by a kind plus a small parameter record:

    precision      g(s) = 1/s
    recall         g(s) = 1
    fbeta          g(s) = (1 + beta^2) / (s + beta^2)
    credal         g(s) = delta/s - gamma/s^2
    exponential    g(s) = 1 - exp(-delta/s)
    logarithmic    g(s) = log(1 + 1/s)          (natural log)
    reject         g(1) = 1, g(K) = 1 - alpha, undefined elsewhere
    gen_reject     g(s) = 1 - alpha * ((s-1)/(K-1))^beta

The sequence property checkers in this module gate which inference
algorithms are sound for a given spec: strictly decreasing plus
(1/x)-convex enables early stopping, and domination of precision
(g(s) >= 1/s) is what makes non-singleton optima possible at all.

All sequence comparisons use a relative tolerance of 1e-12, and
within-tolerance equality satisfies non-strict inequalities. That way
precision, for which the (1/x)-convexity condition holds with exact
equality, passes the checker despite floating-point evaluation.

The reject kind is only defined at sizes 1 and K, so the generic
inference loop refuses it. If a smooth stand-in is needed, use
gen_reject with a tiny exponent (beta = 1e-6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    InvalidParams,
    NonPositiveG,
    NotNormalized,
    SizeOutOfRange,
    UndefinedAtSize,
    EmptyPrediction,
)

REL_TOL = 1e-12

KINDS = frozenset(
    {
        "precision",
        "recall",
        "fbeta",
        "credal",
        "exponential",
        "logarithmic",
        "reject",
        "gen_reject",
    }
)

# Horizon for the numeric range check of credal specs constructed
# without an explicit K. No closed-form parameter region is known,
# so admissibility is verified pointwise on integer sizes.
_CREDAL_CHECK_HORIZON = 1000


@dataclass(frozen=True)
class UtilitySpec:
    """Immutable utility description; safe to share across threads."""

    kind: str
    beta: float | None = None
    delta: float | None = None
    gamma: float | None = None
    alpha: float | None = None
    k: int | None = None
    rescaled: bool = False

    def __post_init__(self):
        _validate(self)

    def __str__(self):
        parts = []
        for name in ("beta", "delta", "gamma", "alpha"):
            value = getattr(self, name)
            if value is not None:
                parts.append(f"{name}={value:g}")
        if self.k is not None and self.kind in ("reject", "gen_reject"):
            parts.append(f"k={self.k}")
        body = self.kind + (":" + ",".join(parts) if parts else "")
        return body + ("|rescaled" if self.rescaled else "")


def precision() -> UtilitySpec:
    return UtilitySpec("precision")


def recall() -> UtilitySpec:
    return UtilitySpec("recall")


def fbeta(beta: float, k: int | None = None) -> UtilitySpec:
    return UtilitySpec("fbeta", beta=float(beta), k=k)


def credal(delta: float, gamma: float, k: int | None = None) -> UtilitySpec:
    return UtilitySpec("credal", delta=float(delta), gamma=float(gamma), k=k)


def exponential(delta: float, k: int | None = None) -> UtilitySpec:
    return UtilitySpec("exponential", delta=float(delta), k=k)


def logarithmic(k: int | None = None) -> UtilitySpec:
    return UtilitySpec("logarithmic", k=k)


def reject(alpha: float, k: int) -> UtilitySpec:
    return UtilitySpec("reject", alpha=float(alpha), k=k)


def gen_reject(alpha: float, beta: float, k: int) -> UtilitySpec:
    return UtilitySpec("gen_reject", alpha=float(alpha), beta=float(beta), k=k)


def normalized(spec: UtilitySpec) -> UtilitySpec:
    """Return a copy whose sequence is divided by g(1).

    Required before dominates_precision for the exponential and
    logarithmic kinds, whose raw g(1) differs from 1.
    """
    g1 = _raw_g(spec, 1)
    if g1 <= 0.0:
        raise NonPositiveG(f"cannot rescale: g(1) = {g1}")
    return replace(spec, rescaled=True)


def _validate(spec: UtilitySpec) -> None:
    if spec.kind not in KINDS:
        raise InvalidParams(f"unknown utility kind {spec.kind!r}")
    if spec.k is not None and spec.k < 1:
        raise InvalidParams("k must be a positive integer")

    kind = spec.kind
    if kind == "fbeta":
        if spec.beta is None or spec.beta <= 0:
            raise InvalidParams("fbeta requires beta > 0")
    elif kind == "credal":
        if spec.delta is None or spec.gamma is None:
            raise InvalidParams("credal requires delta and gamma")
        if spec.delta <= 0 or spec.gamma < 0:
            raise InvalidParams("credal requires delta > 0 and gamma >= 0")
        horizon = spec.k if spec.k is not None else _CREDAL_CHECK_HORIZON
        s = np.arange(1, horizon + 1, dtype=np.float64)
        g = spec.delta / s - spec.gamma / s**2
        if g.min() < -REL_TOL or g.max() > 1.0 + REL_TOL:
            raise InvalidParams(
                f"credal(delta={spec.delta}, gamma={spec.gamma}) leaves [0, 1] "
                f"on sizes 1..{horizon}"
            )
    elif kind == "exponential":
        if spec.delta is None or spec.delta <= 0:
            raise InvalidParams("exponential requires delta > 0")
    elif kind == "reject":
        if spec.k is None or spec.k < 2:
            raise InvalidParams("reject requires k >= 2")
        if spec.alpha is None or not 0 < spec.alpha < 1:
            raise InvalidParams("reject requires alpha in (0, 1)")
    elif kind == "gen_reject":
        if spec.k is None or spec.k < 2:
            raise InvalidParams("gen_reject requires k >= 2")
        if spec.alpha is None or not 0 < spec.alpha <= 1:
            raise InvalidParams("gen_reject requires alpha in (0, 1]")
        if spec.beta is None or spec.beta <= 0:
            raise InvalidParams("gen_reject requires beta > 0")


def _raw_g(spec: UtilitySpec, s: int) -> float:
    kind = spec.kind
    if kind == "precision":
        return 1.0 / s
    if kind == "recall":
        return 1.0
    if kind == "fbeta":
        b2 = spec.beta * spec.beta
        return (1.0 + b2) / (s + b2)
    if kind == "credal":
        return spec.delta / s - spec.gamma / (s * s)
    if kind == "exponential":
        return 1.0 - math.exp(-spec.delta / s)
    if kind == "logarithmic":
        return math.log(1.0 + 1.0 / s)
    if kind == "reject":
        if s == 1:
            return 1.0
        if s == spec.k:
            return 1.0 - spec.alpha
        raise UndefinedAtSize(f"reject utility undefined at size {s} (K={spec.k})")
    if kind == "gen_reject":
        return 1.0 - spec.alpha * ((s - 1) / (spec.k - 1)) ** spec.beta
    raise InvalidParams(f"unknown utility kind {kind!r}")


def eval_g(spec: UtilitySpec, s: int) -> float:
    """Value of the cardinality sequence at integer size s.

    Validation guarantees the sequence lies in [0, 1] up to rounding;
    the tolerance-sized spill of the closed forms is clamped away here
    (2.2 - 1.2 already exceeds 1 by one ulp).
    """
    if s < 1 or (spec.k is not None and s > spec.k):
        raise SizeOutOfRange(f"size {s} outside 1..{spec.k}")
    value = _raw_g(spec, s)
    if spec.rescaled:
        value /= _raw_g(spec, 1)
    return min(max(value, 0.0), 1.0)


def g_table(spec: UtilitySpec, k: int) -> np.ndarray:
    """Precomputed [g(1), ..., g(k)] for hot loops.

    Values are produced by the same code path as eval_g, so the table
    is bit-identical to on-demand evaluation.
    """
    return np.array([eval_g(spec, s) for s in range(1, k + 1)])


def eval_u(spec: UtilitySpec, true_class: int, pred) -> float:
    """Realized utility of a predicted class set for one example."""
    classes = list(pred)
    if not classes:
        raise EmptyPrediction("prediction set must be non-empty")
    if true_class not in classes:
        return 0.0
    return eval_g(spec, len(classes))


# --- sequence property checkers -----------------------------------------


def _le(a: float, b: float) -> bool:
    """a <= b within relative tolerance."""
    return a <= b + REL_TOL * max(abs(a), abs(b), 1.0)


def _lt(a: float, b: float) -> bool:
    """a < b strictly, beyond tolerance."""
    return a < b - REL_TOL * max(abs(a), abs(b), 1.0)


def is_strictly_decreasing(spec: UtilitySpec, k: int) -> bool:
    if k < 2:
        raise InvalidParams("strict-decrease check needs k >= 2")
    g = [eval_g(spec, s) for s in range(1, k + 1)]
    return all(_lt(g[s + 1], g[s]) for s in range(k - 1))


def is_one_over_x_convex(spec: UtilitySpec, k: int) -> bool:
    """Convexity of the reciprocal sequence, the early-stopping condition."""
    if k < 3:
        raise InvalidParams("(1/x)-convexity check needs k >= 3")
    g = [eval_g(spec, s) for s in range(1, k + 1)]
    if min(g) <= 0.0:
        raise NonPositiveG("g(s) must be positive to take reciprocals")
    r = [1.0 / v for v in g]
    return all(_le(r[s + 1], 0.5 * (r[s] + r[s + 2])) for s in range(k - 2))


def is_concave(spec: UtilitySpec, k: int) -> bool:
    if k < 3:
        raise InvalidParams("concavity check needs k >= 3")
    g = [eval_g(spec, s) for s in range(1, k + 1)]
    return all(_le(0.5 * (g[s] + g[s + 2]), g[s + 1]) for s in range(k - 2))


def dominates_precision(spec: UtilitySpec, k: int) -> bool:
    """Whether g(s) >= 1/s on 2..k. Requires a spec with g(1) = 1."""
    if k < 2:
        raise InvalidParams("domination check needs k >= 2")
    g1 = eval_g(spec, 1)
    if abs(g1 - 1.0) > REL_TOL:
        raise NotNormalized(
            f"g(1) = {g1}; rescale with normalized() before checking domination"
        )
    return all(_le(1.0 / s, eval_g(spec, s)) for s in range(2, k + 1))


def gen_reject_admissible_region(k: int) -> tuple[float, float]:
    """Largest alpha and smallest beta keeping gen_reject above precision.

    alpha_max = (k-1)/k and beta_min = log_{1/(k-1)}(k/2) + 1. Any
    gen_reject spec with alpha <= alpha_max and beta >= beta_min
    satisfies dominates_precision. Both bounds tend to 1 and 0 as k
    grows.
    """
    if k < 3:
        raise InvalidParams("admissible region needs k >= 3")
    alpha_max = (k - 1) / k
    beta_min = 1.0 - math.log(k / 2.0) / math.log(k - 1.0)
    return alpha_max, beta_min


# --- CLI-facing parsing ---------------------------------------------------

_KIND_ALIASES = {"genreject": "gen_reject", "f1": "fbeta", "log": "logarithmic"}

_PARAM_FIELDS = {"beta", "delta", "gamma", "alpha", "k"}


def parse_utility(text: str, k: int | None = None) -> UtilitySpec:
    """Parse ``kind[:param=value,...]``, e.g. ``fbeta:beta=1``.

    A trailing class count known from the data can be supplied through
    ``k`` and is used when the string does not set one.
    """
    head, _, tail = text.strip().partition(":")
    kind = _KIND_ALIASES.get(head.lower(), head.lower())
    if kind not in KINDS:
        raise InvalidParams(f"unknown utility kind {head!r}")
    params: dict[str, float | int] = {}
    if tail:
        for item in tail.split(","):
            name, _, raw = item.partition("=")
            name = name.strip().lower()
            if not raw or name not in _PARAM_FIELDS:
                raise InvalidParams(f"bad utility parameter {item!r}")
            params[name] = int(raw) if name == "k" else float(raw)
    if kind == "fbeta" and head.lower() == "f1":
        params.setdefault("beta", 1.0)
    params.setdefault("k", k)
    return UtilitySpec(kind=kind, **params)
