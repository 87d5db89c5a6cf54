import math

import numpy as np
import pytest

from coal.cost_range import (
    CostInterval,
    MwConfig,
    MwSettings,
    RadiusSchedule,
    RangeProblem,
    cost_interval,
    eps_bound,
    max_cost,
    min_cost,
    mw_config_for,
    mw_feasibility,
    mw_iterations,
    radius,
    separation_oracle,
)
from coal.data import sparse_vector
from coal.oracle import LabelState, fit_weighted, WeightedPoint
from coal.synthetic import brute_force_cost_range

X1 = sparse_vector([(0, 1.0)])


def single_point_state(cost=0.3, budget_risk=0.0, delta=0.04, dim=1):
    """One queried point at x=[1] plus one ledger constraint at round 2."""
    state = LabelState(1, dim=dim)
    state.append_point(1, X1, cost)
    state.append_ledger(2, budget_risk, delta)
    return state


# ---------------------------------------------------------------- radii


def test_radius_round_one_theory():
    sched = RadiusSchedule(n=100, d=4, k=2, delta_prob=0.01, kappa=3.0)
    assert radius(1, sched) == 3.0


def test_radius_theory_saturates_at_kappa():
    # the concentration term is far above 1 at this scale
    sched = RadiusSchedule(n=100, d=4, k=2, delta_prob=0.01, kappa=3.0)
    assert eps_bound(100, 4, 2, 0.01) == pytest.approx(12188.30261145533)
    assert radius(2, sched) == 3.0


def test_radius_mellow_evaluates_prefix_eps():
    sched = RadiusSchedule(
        n=10**6, d=1, k=2, delta_prob=0.01, mode="mellow", mellowness=0.01
    )
    assert radius(101, sched) == pytest.approx(0.7415198993547679, rel=1e-12)
    assert math.isinf(radius(1, sched))


def test_radius_rejects_round_zero():
    sched = RadiusSchedule(n=10, d=1, k=2, delta_prob=0.01)
    with pytest.raises(ValueError):
        radius(0, sched)


def test_schedule_validation():
    with pytest.raises(ValueError):
        RadiusSchedule(n=10, d=1, k=2, delta_prob=0.5)  # delta above 1/e
    with pytest.raises(ValueError):
        RadiusSchedule(n=10, d=1, k=2, delta_prob=0.01, kappa=1.5)  # theory floor
    RadiusSchedule(n=10, d=1, k=2, delta_prob=0.01, kappa=1.5, mode="mellow")


def test_radius_nonincreasing_after_round_one():
    sched = RadiusSchedule(n=10**7, d=3, k=4, delta_prob=0.05, kappa=3.0)
    vals = [radius(i, sched) for i in range(2, 200)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- config


def test_mw_config_eta_formula():
    cfg = mw_config_for(5, 100, rho=3.0)
    assert cfg.t == 100
    assert cfg.eta == pytest.approx(0.12686362411795196, rel=1e-12)
    assert cfg.rho == 3.0


def test_mw_config_floors_t_to_keep_eta_small():
    cfg = mw_config_for(100, 1, rho=3.0)
    assert cfg.t == 19  # ceil(4 log 100)
    assert cfg.eta == pytest.approx(0.4923183707824639, rel=1e-12)
    assert cfg.eta <= 0.5


def test_mw_config_validation():
    with pytest.raises(ValueError):
        MwConfig(t=0, eta=0.1, rho=3.0)
    with pytest.raises(ValueError):
        MwConfig(t=10, eta=0.6, rho=3.0)
    with pytest.raises(ValueError):
        MwConfig(t=10, eta=0.1, rho=0.0)


def test_mw_iterations_formula_and_cap():
    assert mw_iterations(3, 2.0, 0.5) == 799
    assert mw_iterations(3, 0.001, 0.1) == 2000  # capped
    assert mw_iterations(3, math.inf, 0.5) == 1  # vacuous radius
    custom = MwSettings(t_max=50)
    assert mw_iterations(3, 0.001, 0.1, custom) == 50


def test_cost_interval_invariants():
    CostInterval(0.2, 0.1, tol=0.06)  # inverted within 2*tol is allowed
    with pytest.raises(ValueError):
        CostInterval(0.5, 0.1, tol=0.01)
    with pytest.raises(ValueError):
        CostInterval(-0.1, 0.5, tol=0.0)
    with pytest.raises(ValueError):
        CostInterval(0.1, 1.5, tol=0.0)
    assert CostInterval(0.25, 0.75, 0.0).width == pytest.approx(0.5)


# ------------------------------------------------------- separation oracle


def test_separation_objective_only_fits_target():
    state = single_point_state()
    g = separation_oracle([1.0, 0.0], 1, X1, state, bound=10.0)
    assert (X1.dot(g.weights) - 1.0) ** 2 == pytest.approx(0.0, abs=1e-9)


def test_separation_single_round_recovers_erm():
    state = single_point_state()
    g = separation_oracle([0.0, 1.0], 1, X1, state, bound=10.0)
    erm = state.erm_weights(2, 10.0)
    assert np.allclose(g.weights, erm, atol=1e-8)


def test_separation_mixed_weights_match_normal_equations():
    # objective: mu0 (g - 1)^2 + mu1 (g - 0.3)^2 on scalar g (x = [1])
    state = single_point_state(cost=0.3)
    mu0, mu1 = 0.25, 2.0
    g = separation_oracle([mu0, mu1], 1, X1, state, bound=10.0)
    expected = (mu0 * 1.0 + mu1 * 0.3) / (mu0 + mu1)
    assert g.weights[0] == pytest.approx(expected, abs=1e-9)


def test_separation_oracle_aggregates_nested_prefixes():
    # two ledger entries; the round-1 point is inside both prefixes
    state = LabelState(1, dim=1)
    state.append_point(1, X1, 0.2)
    state.append_ledger(2, 0.0, 0.5)
    state.append_point(2, X1, 0.8)
    state.append_ledger(3, 0.09, 0.5)
    mu = [0.5, 1.0, 3.0]
    g = separation_oracle(mu, 0, X1, state, bound=10.0)
    # hand-built normal equations over the same weighted squared losses:
    # mu0 (g-0)^2 + mu1/(2-1) (g-0.2)^2 + mu2/(3-1) [(g-0.2)^2 + (g-0.8)^2]
    w_fake, w1, w2 = mu[0], mu[1] / 1.0, mu[2] / 2.0
    num = w1 * 0.2 + w2 * (0.2 + 0.8)
    den = w_fake + w1 + 2 * w2
    assert g.weights[0] == pytest.approx(num / den, abs=1e-9)


def test_separation_oracle_validates_mu():
    state = single_point_state()
    with pytest.raises(ValueError):
        separation_oracle([1.0], 1, X1, state)
    with pytest.raises(ValueError):
        separation_oracle([1.0, -0.5], 1, X1, state)


def test_separation_all_zero_mu_returns_zero_regressor():
    state = single_point_state()
    g = separation_oracle([0.0, 0.0], 1, X1, state, bound=10.0)
    assert not g.weights.any()


# --------------------------------------------------------- mw feasibility


def test_mw_empty_ledger_is_feasible():
    state = LabelState(1, dim=1)
    cfg = mw_config_for(1, 50, rho=3.0)
    res = mw_feasibility(1.0, 1, X1, state, cfg, bound=10.0)
    assert res.feasible
    assert res.iterations == 1  # no adversary to play against
    assert res.value_averages[0] == pytest.approx(0.0, abs=1e-9)


def test_mw_pinned_class_reports_infeasible():
    # version space pins g(x) to ~0.2; (g-1)^2 <= 0 is hopeless
    state = single_point_state(cost=0.2, delta=1e-6)
    cfg = mw_config_for(2, 2000, rho=3.0)
    res = mw_feasibility(0.0, 1, X1, state, cfg, bound=10.0)
    assert not res.feasible
    assert res.certificate_value >= res.threshold + 1e-9
    assert res.weights.size == 2


def test_mw_feasible_guess_never_certified():
    # guess far above the true optimum: must come back feasible
    state = single_point_state(cost=0.2, delta=0.01)
    cfg = mw_config_for(2, 500, rho=3.0)
    res = mw_feasibility(0.9, 1, X1, state, cfg, bound=10.0)
    assert res.feasible


def test_mw_average_violations_within_theorem_slack():
    rng = np.random.default_rng(5)
    settings = MwSettings(early_stop=False)
    for _ in range(10):
        state = LabelState(1, dim=2)
        for j in range(4):
            pairs = [(0, 1.0), (1, float(rng.normal()))]
            state.append_point(j + 1, sparse_vector(pairs), float(rng.uniform()))
        state.append_ledger(5, 0.0, float(rng.uniform(0.3, 1.0)))
        probe = sparse_vector([(0, 1.0), (1, float(rng.normal()))])
        t_budget = 400
        cfg = mw_config_for(2, t_budget, rho=3.0)
        res = mw_feasibility(1.0, 1, probe, state, cfg, bound=2.0, settings=settings)
        assert res.feasible
        bound = 2.0 * cfg.rho * math.sqrt(math.log(2) / cfg.t)
        assert res.violations.max(initial=0.0) <= bound + 1e-12
        assert res.iterations == cfg.t


def test_mw_keep_iterates_flag():
    state = single_point_state(cost=0.2, delta=0.5)
    cfg = mw_config_for(2, 40, rho=3.0)
    res = mw_feasibility(
        0.9, 1, X1, state, cfg, bound=10.0, settings=MwSettings(keep_iterates=True, early_stop=False)
    )
    assert res.feasible
    assert len(res.iterates) == res.iterations
    mean = np.mean([g.weights for g in res.iterates], axis=0)
    assert np.allclose(mean, res.regressor.weights, atol=1e-12)


# ------------------------------------------------------------ max / min


def test_round_one_interval_is_everything():
    state = LabelState(1, dim=1)
    hi = max_cost(X1, state, tol=0.2, round_i=1, delta_i=3.0)
    lo = min_cost(X1, state, tol=0.2, round_i=1, delta_i=3.0)
    assert hi.value == pytest.approx(1.0, abs=1e-9)
    assert lo.value == pytest.approx(0.0, abs=1e-9)


def test_constant_class_interval_anchor():
    # (g - 0.3)^2 <= 0.04 confines predictions at x=[1] to [0.1, 0.5]
    state = single_point_state(cost=0.3, budget_risk=0.0, delta=0.04)
    settings = MwSettings(t_max=20000)
    hi = max_cost(X1, state, tol=0.05, round_i=2, delta_i=0.04, settings=settings)
    lo = min_cost(X1, state, tol=0.05, round_i=2, delta_i=0.04, settings=settings)
    # sound side: never inside the true range
    assert hi.value >= 0.5 - 1e-9
    assert lo.value <= 0.1 + 1e-9
    # accurate side: within the requested tol plus the realized solver slack
    assert hi.value <= 0.5 + 0.05 + hi.mw_slack
    assert lo.value >= 0.1 - 0.05 - lo.mw_slack
    assert hi.bracket_hi - hi.bracket_lo <= 0.05**2 / 2


def test_bracket_tightness_contract():
    state = single_point_state()
    est = max_cost(X1, state, tol=0.3, round_i=2, delta_i=0.04)
    assert est.bracket_hi - est.bracket_lo <= 0.3**2 / 2
    assert est.guesses >= 1
    assert est.tol >= math.sqrt(est.bracket_hi - est.bracket_lo)


def test_cost_interval_combines_both_ends():
    state = single_point_state()
    iv = cost_interval(X1, state, tol=0.2, round_i=2, delta_i=0.04)
    assert 0.0 <= iv.lo <= iv.hi <= 1.0
    assert iv.tol > 0.0


def test_interval_sandwich_against_grid():
    rng = np.random.default_rng(17)
    grid = np.linspace(-2.0, 2.0, 4001)[:, None]  # constant class, bound 2
    for _ in range(5):
        state = LabelState(1, dim=1)
        n = int(rng.integers(1, 4))
        for j in range(n):
            state.append_point(j + 1, X1, float(rng.uniform(0.2, 0.8)))
        erm = state.erm_weights(n + 1, 2.0)
        risk = state.risk_of_weights(erm, n + 1)
        delta = float(rng.uniform(0.05, 0.5))
        state.append_ledger(n + 1, risk, delta)
        truth = brute_force_cost_range(grid, state, X1)
        assert truth is not None
        est_hi = max_cost(X1, state, tol=0.25, round_i=n + 1, delta_i=delta, bound=2.0)
        est_lo = min_cost(X1, state, tol=0.25, round_i=n + 1, delta_i=delta, bound=2.0)
        step = 4.0 / 4000
        assert truth.hi <= est_hi.value + 1e-9
        assert est_hi.value <= truth.hi + est_hi.tol + step
        assert est_lo.value <= truth.lo + 1e-9
        assert est_lo.value >= truth.lo - est_lo.tol - step


def test_space_below_zero_saturates_min():
    # every consistent prediction at the probe is near -0.8, so all clamped
    # costs are 0; the distance search alone would report |p| instead
    state = single_point_state(cost=0.8, delta=0.01)
    probe = sparse_vector([(0, -1.0)])
    settings = MwSettings(t_max=4000)
    lo = min_cost(probe, state, tol=0.05, round_i=2, delta_i=0.01, bound=2.0, settings=settings)
    hi = max_cost(probe, state, tol=0.05, round_i=2, delta_i=0.01, bound=2.0, settings=settings)
    assert lo.value == 0.0
    assert hi.value <= 0.1


def test_space_above_one_saturates_max():
    # every consistent prediction at the probe is near 1.35, so all clamped
    # costs are 1
    state = single_point_state(cost=0.9, delta=0.01)
    probe = sparse_vector([(0, 1.5)])
    settings = MwSettings(t_max=4000)
    hi = max_cost(probe, state, tol=0.05, round_i=2, delta_i=0.01, bound=2.0, settings=settings)
    lo = min_cost(probe, state, tol=0.05, round_i=2, delta_i=0.01, bound=2.0, settings=settings)
    assert hi.value == 1.0
    assert lo.value >= 0.9


def test_nesting_across_rounds():
    # adding a constraint can only shrink the version space
    state = LabelState(1, dim=1)
    state.append_point(1, X1, 0.4)
    state.append_ledger(2, 0.0, 0.3)
    before = cost_interval(X1, state, tol=0.1, round_i=2, delta_i=0.3)
    state.append_point(2, X1, 0.5)
    erm = state.erm_weights(3, 10.0)
    state.append_ledger(3, state.risk_of_weights(erm, 3), 0.15)
    after = cost_interval(X1, state, tol=0.1, round_i=3, delta_i=0.15)
    assert after.lo >= before.lo - after.tol
    assert after.hi <= before.hi + after.tol


def test_infeasibility_soundness_against_grid():
    # whenever a guess is certified infeasible, no grid regressor beats it
    state = single_point_state(cost=0.3, delta=0.04)
    problem = RangeProblem(X1, state, bound=2.0)
    cfg = mw_config_for(2, 500, rho=3.0)
    grid = np.linspace(-2.0, 2.0, 4001)
    feasible = np.abs(grid - 0.3) <= math.sqrt(0.04) + 1e-12
    best = ((grid[feasible] - 1.0) ** 2).min()
    for guess in np.linspace(0.0, 1.0, 21):
        res = problem.run(guess, 1, cfg)
        if not res.feasible:
            assert guess < best + 1e-9
