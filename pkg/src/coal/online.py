"""Streaming cost regressors with closed-form sensitivity and cost ranges.

The exact learner refits a constrained least-squares problem per label per
round; this module is the cheap streaming stand-in. Each label keeps a linear
regressor plus per-feature squared-gradient accumulators. An update with
importance weight w moves the prediction toward the observed cost by a factor
that integrates a per-feature adaptive step size:

    D(w)   = sum_k 2 (sqrt(G_k + w x_k^2) - sqrt(G_k))
    resid' = resid * exp(-2 * base_rate * D(w))

with the weight vector moving along x / ||x||^2 by the residual change, and
G_k growing by w x_k^2. Composing an update of weight a then b from the same
point equals one update of weight a+b exactly (decay factors multiply,
accumulators add), so importance-weight splitting is invariant to float
rounding rather than to first order.

The sensitivity of the prediction to an infinitesimal update toward target t
has the closed form  2 * base_rate * |g(x) - t| * sum_k x_k^2 / sqrt(G_k),
which is the exact w-derivative of the update above at w = 0. Fresh features
(G_k = 0) make it effectively unbounded, forcing the cost range to [0, 1]
until the direction has been explored; the accumulator is floored at 1e-12
inside the sum to keep the arithmetic finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost_range import CostInterval

ACCUM_FLOOR = 1e-12
WEIGHT_SEARCH_TOL = 1e-6


@dataclass
class OnlineRegressor:
    """Linear predictor with per-feature squared-gradient accumulators."""

    weights: np.ndarray
    accumulators: np.ndarray
    base_rate: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.accumulators = np.asarray(self.accumulators, dtype=np.float64)
        if self.weights.shape != self.accumulators.shape or self.weights.ndim != 1:
            raise ValueError("weights and accumulators must be 1-d arrays of equal length")
        if np.any(self.accumulators < 0):
            raise ValueError("accumulators must be nonnegative")
        if self.base_rate <= 0:
            raise ValueError("base_rate must be positive")

    @classmethod
    def zeros(cls, dim, base_rate):
        return cls(np.zeros(dim), np.zeros(dim), base_rate)

    @property
    def dim(self):
        return int(self.weights.size)

    def raw(self, x):
        return x.dot(self.weights)

    def predict(self, x):
        return min(1.0, max(0.0, self.raw(x)))


@dataclass(frozen=True)
class SensitivityQuery:
    """A probe point and the cost target the prediction would move toward."""

    features: object  # SparseVector
    target: float

    def __post_init__(self):
        if not 0.0 <= self.target <= 1.0:
            raise ValueError("target must lie in [0, 1]")


def online_update(regressor, x, cost, weight):
    """Apply one importance-weighted observation in place; returns regressor.

    Negative weights are accepted only as the analytic continuation used by
    derivative checks, and only while every touched accumulator stays
    positive; operational callers pass weight >= 0.
    """
    if not math.isfinite(weight):
        raise ValueError("weight must be finite")
    if weight == 0.0 or x.nnz == 0:
        return regressor
    idx = x.indices
    val = x.values
    acc = regressor.accumulators[idx]
    grown = acc + weight * val * val
    if weight < 0 and np.any(grown <= 0):
        raise ValueError("negative weight would empty an accumulator")
    d_int = 2.0 * float(np.sum(np.sqrt(grown) - np.sqrt(acc)))
    residual = regressor.raw(x) - cost
    shrink = residual * (1.0 - math.exp(-2.0 * regressor.base_rate * d_int))
    regressor.weights[idx] -= val * (shrink / float(val @ val))
    regressor.accumulators[idx] = grown
    return regressor


def sensitivity(regressor, x, target):
    """Derivative of the prediction per unit importance weight toward target."""
    if x.nnz == 0:
        return 0.0
    acc = np.maximum(regressor.accumulators[x.indices], ACCUM_FLOOR)
    scale = float(np.sum(x.values * x.values / np.sqrt(acc)))
    return 2.0 * regressor.base_rate * abs(regressor.raw(x) - target) * scale


def _break_even(p_sq_gap, s, delta, cap):
    """Largest w in (0, cap] with w * (p_sq_gap - (edge - w s)^2 ...) <= delta.

    Callers pass the side-specific objective through p_sq_gap/s/cap; the
    objective is w * (base - (base_root - w*s)^2) which increases on the
    bracket, so bisection applies. Saturates at cap when even the bracket end
    stays within delta.
    """
    # scalar helper kept for the public per-label op; vectorized twin below
    base_root = math.sqrt(p_sq_gap)

    def objective(w):
        return w * (p_sq_gap - (base_root - w * s) ** 2)

    if objective(cap) <= delta:
        return cap
    lo, hi = 0.0, cap
    while hi - lo > WEIGHT_SEARCH_TOL:
        mid = (lo + hi) / 2.0
        if objective(mid) <= delta:
            lo = mid
        else:
            hi = mid
    return lo


def approx_cost_range(regressor, x, delta):
    """Cost interval reachable within risk budget delta around the prediction.

    Each side asks how far the prediction could move toward 0 (resp. 1)
    before the weighted squared-error increase of the move exceeds delta;
    the move per importance weight w is w * sensitivity.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    p = regressor.predict(x)
    lo, hi = p, p
    s_lo = sensitivity(regressor, x, 0.0)
    if s_lo > 0 and p > 0:
        w = _break_even(p * p, s_lo, delta, p / s_lo)
        lo = p - w * s_lo
    s_hi = sensitivity(regressor, x, 1.0)
    if s_hi > 0 and p < 1:
        w = _break_even((1.0 - p) ** 2, s_hi, delta, (1.0 - p) / s_hi)
        hi = p + w * s_hi
    return CostInterval(lo=max(0.0, lo), hi=min(1.0, hi), tol=0.0)


def batch_cost_ranges(weight_rows, accum_rows, base_rate, x, deltas):
    """approx_cost_range for K regressors sharing one point, in lockstep.

    weight_rows/accum_rows are (K, dim); deltas broadcasts over labels.
    Returns (lo, hi) arrays; agrees with the per-label op to within the
    weight-search tolerance on each endpoint.
    """
    idx, val = x.indices, x.values
    k = weight_rows.shape[0]
    deltas = np.broadcast_to(np.asarray(deltas, dtype=np.float64), (k,))
    if idx.size == 0:
        p = np.zeros(k)
        return p.copy(), p.copy()
    raw = weight_rows[:, idx] @ val
    p = np.clip(raw, 0.0, 1.0)
    acc = np.maximum(accum_rows[:, idx], ACCUM_FLOOR)
    scale = (val * val / np.sqrt(acc)).sum(axis=1)
    s_lo = 2.0 * base_rate * np.abs(raw - 0.0) * scale
    s_hi = 2.0 * base_rate * np.abs(raw - 1.0) * scale

    def solve_side(gap_root, s):
        # roots of w * (gap_root^2 - (gap_root - w s)^2) = delta on (0, cap]
        live = (s > 0) & (gap_root > 0)
        w = np.zeros(k)
        if not np.any(live):
            return w
        cap = np.where(live, gap_root / np.where(live, s, 1.0), 0.0)
        gap_sq = gap_root * gap_root

        def objective(wv):
            return wv * (gap_sq - (gap_root - wv * s) ** 2)

        saturated = live & (objective(cap) <= deltas)
        w[saturated] = cap[saturated]
        active = live & ~saturated
        lo = np.zeros(k)
        hi = cap.copy()
        span = np.where(active, cap, 0.0)
        steps = int(math.ceil(math.log2(max(float(span.max()), WEIGHT_SEARCH_TOL) / WEIGHT_SEARCH_TOL))) + 1
        for _ in range(steps):
            mid = (lo + hi) / 2.0
            ok = objective(mid) <= deltas
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        w[active] = lo[active]
        return w

    w_lo = solve_side(p, s_lo)
    w_hi = solve_side(1.0 - p, s_hi)
    return np.maximum(p - w_lo * s_lo, 0.0), np.minimum(p + w_hi * s_hi, 1.0)
