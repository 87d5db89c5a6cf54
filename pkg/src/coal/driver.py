"""The round loop: overlapping cost ranges decide which labels to query.

Each round i the learner sees a point, computes a per-label achievable-cost
interval, keeps the candidate labels whose interval is not dominated (its low
end does not exceed the smallest high end), and queries the candidates whose
interval is still wider than the round threshold psi_i = 1 / sqrt(i). Queried
costs extend each label's history; the risk ledger then gains one entry per
label with the refit empirical risk plus the next round's radius.

Two modes share the loop: "exact" computes intervals from the ledger via the
bisection solver, "online" from streaming regressors' closed-form ranges.
Baseline policies reuse the same state machinery with different query rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cost_range import (
    DEFAULT_NORM_BOUND,
    DEFAULT_SETTINGS,
    CostInterval,
    RangeProblem,
    _bisect_cost,
    radius,
)
from .data import QueryLog
from .oracle import LabelState, LinearRegressor
from .online import OnlineRegressor, batch_cost_ranges, online_update

POLICIES = ("coal", "passive", "allornone", "nodom")
MODES = ("exact", "online")


class ContractError(RuntimeError):
    """The observe step was fed costs inconsistent with its decision."""


def psi(round_i):
    """Query-width threshold for a 1-based round."""
    return 1.0 / math.sqrt(round_i)


@dataclass(frozen=True)
class QueryDecision:
    """What one round decided: intervals, candidate labels, labels to query.

    nondominated is always the overlap candidate set (labels whose interval
    low end does not exceed the smallest interval high end); to_query follows
    the active policy. Labels are 1-based.
    """

    round: int
    intervals: tuple
    nondominated: tuple
    to_query: tuple
    psi: float


class LearnerState:
    """Mutable state of one learner run over a stream.

    Holds per-label query histories and ledgers, the exact-mode regressors,
    the online weight/accumulator matrices, the query log, and the round
    counter (1-based: round = processed examples + 1).
    """

    def __init__(
        self,
        k,
        dim,
        schedule,
        policy="coal",
        mode="exact",
        base_rate=0.5,
        norm_bound=DEFAULT_NORM_BOUND,
        settings=DEFAULT_SETTINGS,
        track_exact_ledger=None,
    ):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}")
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if k < 2:
            raise ValueError("need at least two labels")
        self.k = k
        self.dim = dim
        self.schedule = schedule
        self.policy = policy
        self.mode = mode
        self.base_rate = base_rate
        self.norm_bound = norm_bound
        self.settings = settings
        self.track_exact_ledger = (
            (mode == "exact") if track_exact_ledger is None else track_exact_ledger
        )
        self.round = 1
        self.labels = [LabelState(y, dim) for y in range(1, k + 1)]
        self.erms = [LinearRegressor(np.zeros(dim), norm_bound) for _ in range(k)]
        self.online_weights = np.zeros((k, dim))
        self.online_accumulators = np.zeros((k, dim))
        self.log = QueryLog(k)

    def online_regressor(self, label):
        """View-backed streaming regressor for one label; mutations stick."""
        return OnlineRegressor(
            self.online_weights[label - 1],
            self.online_accumulators[label - 1],
            self.base_rate,
        )

    def predicted_costs(self, x):
        """Current clamped cost predictions, one per label."""
        if self.mode == "online":
            if x.nnz == 0:
                return np.zeros(self.k)
            raw = self.online_weights[:, x.indices] @ x.values
        else:
            raw = np.array([x.dot(g.weights) for g in self.erms])
        return np.clip(raw, 0.0, 1.0)


def _decide(policy, los, his, threshold):
    """Candidate set and query set from interval ends (0-based arrays)."""
    min_hi = his.min()
    nondominated = np.flatnonzero(los <= min_hi)
    wide = np.flatnonzero(his - los > threshold)
    if policy == "passive":
        to_query = np.arange(los.size)
    elif policy == "nodom":
        to_query = wide
    else:
        overlap_query = (
            np.intersect1d(nondominated, wide) if nondominated.size > 1 else np.empty(0, int)
        )
        if policy == "coal":
            to_query = overlap_query
        else:  # allornone
            to_query = np.arange(los.size) if overlap_query.size else np.empty(0, int)
    return nondominated, to_query


def process_example(state, x):
    """Compute intervals and the query decision for the current round."""
    i = state.round
    threshold = psi(i)
    if state.policy == "passive" and state.mode == "exact":
        # passive ignores intervals; skip the solver work
        intervals = tuple(CostInterval(0.0, 1.0, 1.0) for _ in range(state.k))
    elif state.mode == "exact":
        delta_i = radius(i, state.schedule)
        tol = threshold / 4.0
        intervals = []
        for label_state in state.labels:
            problem = RangeProblem(x, label_state, state.norm_bound)
            lo = _bisect_cost(
                0, problem, tol, i, delta_i, state.schedule.kappa, state.settings
            )
            hi = _bisect_cost(
                1, problem, tol, i, delta_i, state.schedule.kappa, state.settings
            )
            intervals.append(CostInterval(lo.value, hi.value, max(lo.tol, hi.tol)))
        intervals = tuple(intervals)
    else:
        delta_i = radius(i, state.schedule)
        lo, hi = batch_cost_ranges(
            state.online_weights,
            state.online_accumulators,
            state.base_rate,
            x,
            delta_i,
        )
        intervals = tuple(
            CostInterval(float(l), float(h), 0.0) for l, h in zip(lo, hi)
        )

    los = np.array([iv.lo for iv in intervals])
    his = np.array([iv.hi for iv in intervals])
    nondominated, to_query = _decide(state.policy, los, his, threshold)
    return QueryDecision(
        round=i,
        intervals=intervals,
        nondominated=tuple(int(y) + 1 for y in nondominated),
        to_query=tuple(int(y) + 1 for y in to_query),
        psi=threshold,
    )


def observe_costs(state, x, decision, costs):
    """Fold queried costs into the state and close the round.

    Appends query history for each queried label, records the query log,
    refreshes the exact regressors and the risk ledger (when tracked), and
    advances the round counter. Raises ContractError if the decision is stale
    or a queried cost is unobserved.
    """
    if decision.round != state.round:
        raise ContractError(
            f"decision from round {decision.round} applied at round {state.round}"
        )
    for y in decision.to_query:
        if not costs.is_observed(y):
            raise ContractError(f"label {y} was queried but its cost is unobserved")

    i = state.round
    for y in decision.to_query:
        c = costs.cost_of(y)
        state.labels[y - 1].append_point(i, x, c)
        if state.mode == "online":
            online_update(state.online_regressor(y), x, c, 1.0)
    state.log.record(decision.to_query)

    if state.track_exact_ledger:
        delta_next = radius(i + 1, state.schedule)
        for idx, label_state in enumerate(state.labels):
            weights = label_state.erm_weights(i + 1, state.norm_bound)
            state.erms[idx] = LinearRegressor(weights, state.norm_bound)
            risk = label_state.risk_of_weights(weights, i + 1)
            label_state.append_ledger(i + 1, risk, delta_next)

    state.round += 1
    return state


def predict_label(state, x):
    """Label with the smallest predicted cost; ties go to the smallest label."""
    return int(np.argmin(state.predicted_costs(x))) + 1
