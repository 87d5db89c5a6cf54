"""Norm-bounded weighted least squares and per-label query history.

The learner keeps, for every label, the queried (round, features, cost)
triples plus a ledger of per-round empirical-risk bounds. Regressors are
linear with an L2 norm bound; fitting solves

    min_g  sum_i w_i (g(x_i) - c_i)^2   s.t.  ||g||_2 <= bound

via ridge-regularized normal equations, radial projection, and an exact
KKT-path refinement when the ball constraint is active.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass

import numpy as np

RIDGE = 1e-12


@dataclass(frozen=True, eq=False)
class LinearRegressor:
    """Linear predictor with an enforced L2 norm bound on the weights."""

    weights: np.ndarray
    norm_bound: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if self.norm_bound < 0:
            raise ValueError("norm bound must be nonnegative")
        n = float(np.linalg.norm(w))
        if n > self.norm_bound + 1e-8:
            raise ValueError(f"weight norm {n} exceeds bound {self.norm_bound}")

    @property
    def dim(self):
        return int(self.weights.size)


@dataclass(frozen=True)
class WeightedPoint:
    """A regression target with nonnegative importance weight."""

    features: object  # SparseVector
    cost: float
    weight: float

    def __post_init__(self):
        if not math.isfinite(self.weight) or self.weight < 0:
            raise ValueError("point weight must be finite and nonnegative")
        if not math.isfinite(self.cost) or not 0.0 <= self.cost <= 1.0:
            raise ValueError("point cost must lie in [0, 1]")


def raw_prediction(regressor, x):
    """Unclamped linear prediction; used inside risks and the MW solver."""
    return x.dot(regressor.weights)


def predict(regressor, x):
    """Predicted cost, clamped to [0, 1]."""
    return min(1.0, max(0.0, raw_prediction(regressor, x)))


def solve_bounded_least_squares(gram, moment, bound, ridge=RIDGE):
    """argmin_w w'Gw - 2 b'w subject to ||w|| <= bound.

    Normal equations with a tiny ridge; if the unconstrained solution leaves
    the ball, project radially, take a few projected-gradient steps, and
    refine with the exact KKT path (eigendecomposition plus bisection on the
    Lagrange multiplier). Returns the candidate with the best objective.
    """
    d = gram.shape[0]
    if d == 0:
        return np.zeros(0)
    h = (gram + gram.T) / 2.0 + ridge * np.eye(d)
    try:
        w = np.linalg.solve(h, moment)
    except np.linalg.LinAlgError:
        w = np.linalg.lstsq(h, moment, rcond=None)[0]
    norm = np.linalg.norm(w)
    if norm <= bound or bound == 0:
        return w if bound else np.zeros(d)

    def objective(v):
        return float(v @ h @ v - 2.0 * (moment @ v))

    candidates = [w * (bound / norm)]
    lam, q = np.linalg.eigh(h)
    step = 1.0 / max(lam[-1], ridge)
    v = candidates[0]
    for _ in range(50):
        v = v - step * 2.0 * (h @ v - moment)
        n = np.linalg.norm(v)
        if n > bound:
            v = v * (bound / n)
    candidates.append(v)
    # exact active-constraint solution: w(mu) = (H + mu I)^-1 b with
    # ||w(mu)|| = bound; ||w(mu)||^2 is strictly decreasing in mu >= 0
    beta = q.T @ moment
    lo, hi = 0.0, float(np.linalg.norm(beta)) / bound + 1.0
    for _ in range(200):
        mid = (lo + hi) / 2.0
        if np.sum((beta / (lam + mid)) ** 2) > bound * bound:
            lo = mid
        else:
            hi = mid
    candidates.append(q @ (beta / (lam + (lo + hi) / 2.0)))
    return min(candidates, key=objective)


def fit_weighted(points, bound, dim=None):
    """Weighted norm-bounded least-squares fit over WeightedPoints.

    dim fixes the ambient dimension; when omitted it is inferred from the
    largest feature index present. No points (or all-zero weights) gives the
    zero regressor.
    """
    if dim is None:
        dim = max((p.features.max_index for p in points), default=-1) + 1
    gram = np.zeros((dim, dim))
    moment = np.zeros(dim)
    for p in points:
        if p.weight == 0.0:
            continue
        x = p.features.to_dense(dim)
        gram += p.weight * np.outer(x, x)
        moment += p.weight * p.cost * x
    return LinearRegressor(solve_bounded_least_squares(gram, moment, bound), bound)


@dataclass(frozen=True)
class LedgerEntry:
    """Risk budget recorded after a round: ERM risk, radius, their sum."""

    round: int
    erm_risk: float
    delta: float
    delta_tilde: float


class LabelState:
    """Query history and risk ledger for a single label.

    Keeps the queried (round, features, cost) triples in round order along
    with cumulative second-moment sums, so the empirical risk of any weight
    vector on any prefix is a single quadratic form. The ledger holds one
    entry per completed round from round 2 on; rounds strictly increase.
    """

    def __init__(self, label, dim):
        self.label = label
        self.dim = dim
        self.points = []  # (round, SparseVector, cost)
        self.rounds = []
        self.ledger = []
        self._cum_gram = [np.zeros((dim, dim))]
        self._cum_moment = [np.zeros(dim)]
        self._cum_sq = [0.0]
        # earliest ledger entry per distinct point count: the binding
        # constraint of each no-query stretch (later rounds only relax it)
        self._dedup = []

    @property
    def n_points(self):
        return len(self.points)

    def append_point(self, round_i, x, cost):
        if self.rounds and round_i <= self.rounds[-1]:
            raise ValueError("query rounds must be strictly increasing")
        if not 0.0 <= cost <= 1.0:
            raise ValueError(f"cost {cost} outside [0, 1]")
        self.points.append((round_i, x, cost))
        self.rounds.append(round_i)
        xd = x.to_dense(self.dim)
        self._cum_gram.append(self._cum_gram[-1] + np.outer(xd, xd))
        self._cum_moment.append(self._cum_moment[-1] + cost * xd)
        self._cum_sq.append(self._cum_sq[-1] + cost * cost)

    def n_points_before(self, round_j):
        """How many queried points lie in rounds < round_j."""
        return bisect.bisect_left(self.rounds, round_j)

    def prefix_sums(self, count):
        return self._cum_gram[count], self._cum_moment[count], self._cum_sq[count]

    def risk_of_weights(self, weights, round_j):
        """Empirical risk of raw predictions on the prefix before round_j."""
        if round_j <= 1:
            return 0.0
        k = self.n_points_before(round_j)
        if k == 0:
            return 0.0
        g, h, s = self.prefix_sums(k)
        val = float(weights @ g @ weights - 2.0 * (h @ weights) + s)
        return max(val, 0.0) / (round_j - 1)

    def erm_weights(self, round_j, bound):
        """Bounded least-squares weights for the prefix before round_j."""
        k = self.n_points_before(round_j)
        g, h, _ = self.prefix_sums(k)
        return solve_bounded_least_squares(g, h, bound)

    def append_ledger(self, round_j, erm_risk, delta):
        if self.ledger and round_j <= self.ledger[-1].round:
            raise ValueError("ledger rounds must be strictly increasing")
        if erm_risk < 0 or delta < 0:
            raise ValueError("risk and radius must be nonnegative")
        entry = LedgerEntry(round_j, erm_risk, delta, erm_risk + delta)
        self.ledger.append(entry)
        count = self.n_points_before(round_j)
        if count > 0 and (not self._dedup or count > self._dedup[-1][1]):
            self._dedup.append((round_j, count, entry.delta_tilde, delta))
        return entry

    def constraint_view(self):
        """Deduplicated ledger constraints as (rounds, counts, budgets, radii)."""
        if not self._dedup:
            empty = np.empty(0)
            return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), empty, empty
        r, c, dt, dl = zip(*self._dedup)
        return (
            np.array(r, dtype=np.int64),
            np.array(c, dtype=np.int64),
            np.array(dt, dtype=np.float64),
            np.array(dl, dtype=np.float64),
        )

    def prefix_stack(self, counts):
        """Stacked cumulative sums for several prefixes at once."""
        g = np.stack([self._cum_gram[c] for c in counts]) if len(counts) else np.zeros(
            (0, self.dim, self.dim)
        )
        h = np.stack([self._cum_moment[c] for c in counts]) if len(counts) else np.zeros(
            (0, self.dim)
        )
        s = np.array([self._cum_sq[c] for c in counts])
        return g, h, s


def empirical_risk(regressor, state, round_i):
    """Average squared loss of raw predictions over rounds before round_i.

    Normalized by (round_i - 1) regardless of how many of those rounds were
    queried for this label; rounds 0 and 1 have zero risk by convention.
    """
    return state.risk_of_weights(regressor.weights, round_i)
