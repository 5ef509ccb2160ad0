import math

import numpy as np
import pytest

from ot_mmc.core import Cycle, col_marginals, hellinger_imbalance, row_marginals
from ot_mmc.kernel import LogScaledMatrix, dual_objective, materialize
from ot_mmc.oracles import brute_force_mmc, karp_mmc
from ot_mmc.osborne import (
    OsborneConfig,
    choose_coordinate,
    decompose_circulation,
    extract_cycle_greedy,
    mmc_lower_bound,
    offdiagonal_sums,
    osborne_update,
    parse_strategy,
    run_osborne,
    solve_mmc,
)

# off-diagonal part [[., 2], [8, .]] with a negligible diagonal
TWO_BY_TWO = np.array([[50.0, -math.log(2)], [-math.log(8), 50.0]])


def balancing(C, eta=1.0, x=None):
    M = LogScaledMatrix.initial(np.asarray(C, float), eta, mode="balancing")
    return M if x is None else M.with_potentials(np.asarray(x, float))


def strategies():
    return [("cyclic", None), ("random", 7), ("greedy", None)]


def test_update_example():
    M = balancing(TWO_BY_TWO)
    P0 = materialize(M)
    M1 = osborne_update(M, 0)
    P1 = materialize(M1)
    np.testing.assert_allclose([P1[0, 1], P1[1, 0]], [4.0, 4.0], rtol=1e-14)
    drop = P0.sum() - P1.sum()
    assert drop == pytest.approx(hellinger_imbalance([2.0], [8.0]), rel=1e-12)
    assert drop == pytest.approx(2.0, rel=1e-12)
    np.testing.assert_array_equal(np.diag(P1), np.diag(P0))


def test_update_fixed_point_and_idempotent():
    rng = np.random.default_rng(0)
    M = balancing(rng.uniform(size=(4, 4)), 2.0)
    M1 = osborne_update(M, 2)
    M2 = osborne_update(M1, 2)
    np.testing.assert_allclose(M2.x, M1.x, atol=1e-14)
    rho, gamma = offdiagonal_sums(M1)
    assert rho[2] == pytest.approx(gamma[2], rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_update_balances_geometric_mean(seed):
    rng = np.random.default_rng(seed)
    M = balancing(rng.uniform(size=(5, 5)), 1.5, rng.normal(size=5))
    i = int(rng.integers(5))
    rho, gamma = offdiagonal_sums(M)
    rho1, gamma1 = offdiagonal_sums(osborne_update(M, i))
    assert rho1[i] == pytest.approx(math.sqrt(rho[i] * gamma[i]), rel=1e-12)
    assert gamma1[i] == pytest.approx(math.sqrt(rho[i] * gamma[i]), rel=1e-12)
    np.testing.assert_array_equal(np.delete(osborne_update(M, i).x, i), np.delete(M.x, i))


def test_update_needs_two_vertices():
    with pytest.raises(ValueError):
        osborne_update(balancing([[1.0]]), 0)


def test_choose_coordinate():
    M = balancing(np.random.default_rng(1).uniform(size=(3, 3)))
    cfg = OsborneConfig(eta=1.0, strategy="cyclic")
    assert [choose_coordinate(M, cfg, s) for s in range(6)] == [0, 1, 2, 0, 1, 2]
    greedy = OsborneConfig(eta=1.0)
    assert choose_coordinate(balancing(TWO_BY_TWO), greedy, 0) == 0
    assert choose_coordinate(balancing(np.ones((3, 3))), greedy, 0) == 0
    rnd = OsborneConfig(eta=1.0, strategy="random", seed=5)
    draws = [choose_coordinate(M, rnd, s) for s in range(20)]
    assert draws == [choose_coordinate(M, rnd, s) for s in range(20)]
    assert set(draws) <= {0, 1, 2}


def test_parse_strategy():
    assert parse_strategy("greedy") == ("greedy", None)
    assert parse_strategy("random:42") == ("random", 42)
    with pytest.raises(ValueError):
        parse_strategy("random")
    with pytest.raises(ValueError):
        parse_strategy("sideways")


def test_run_symmetric_needs_no_updates():
    rng = np.random.default_rng(2)
    A = rng.uniform(size=(5, 5))
    _, report = run_osborne(A + A.T, OsborneConfig(eta=3.0))
    assert report.iterations == 0 and report.converged


def test_run_two_by_two_one_update():
    M, report = run_osborne(TWO_BY_TWO, OsborneConfig(eta=1.0, imbalance_tolerance=1e-14))
    assert report.iterations == 1
    P = materialize(M)
    assert P[0, 1] == pytest.approx(P[1, 0], rel=1e-14)


@pytest.mark.parametrize("strategy, seed", strategies())
def test_dual_ascent_and_mass_drop(strategy, seed):
    C = np.random.default_rng(0).uniform(size=(6, 6))
    eta = 2.0
    _, report = run_osborne(C, OsborneConfig(eta=eta, imbalance_tolerance=1e-10,
                                             strategy=strategy, seed=seed))
    assert report.converged
    duals = report.dual_trace()
    assert np.all(np.diff(duals) >= -1e-12)
    for prev, rec in zip(report.trace, report.trace[1:]):
        S0 = math.exp(prev.extra["log_mass"])
        S1 = math.exp(rec.extra["log_mass"])
        h = (math.exp(rec.extra["log_rho"] / 2) - math.exp(rec.extra["log_gamma"] / 2)) ** 2
        assert S0 - S1 == pytest.approx(h, rel=1e-8, abs=1e-13)
        gain = -math.log(1 - h / S0) / eta
        assert rec.dual - prev.dual == pytest.approx(gain, rel=1e-8, abs=1e-13)


def test_diagonal_invariance():
    rng = np.random.default_rng(3)
    M = balancing(rng.uniform(size=(4, 4)), 2.0)
    d0 = np.diag(materialize(M))
    for i in [0, 3, 1, 2, 0]:
        M = osborne_update(M, i)
        np.testing.assert_allclose(np.diag(materialize(M)), d0, rtol=1e-13)


def test_shift_invariance():
    rng = np.random.default_rng(4)
    C = rng.uniform(size=(4, 4))
    x = rng.normal(size=4)
    P = materialize(balancing(C, 2.0, x))
    np.testing.assert_allclose(materialize(balancing(C, 2.0, x + 3.3)), P, rtol=1e-12)
    assert mmc_lower_bound(C, x + 3.3) == pytest.approx(mmc_lower_bound(C, x), abs=1e-14)
    assert extract_cycle_greedy(C, x + 3.3) == extract_cycle_greedy(C, x)


def test_lower_bound_examples():
    C = np.array([[5.0, 1.0], [2.0, 7.0]])
    assert mmc_lower_bound(C, np.zeros(2)) == 1.0
    assert mmc_lower_bound(C, np.zeros(2)) <= brute_force_mmc(C)[0] == 1.5


def test_greedy_cycle_examples():
    assert extract_cycle_greedy([[4.0]], [0.0]) == Cycle((0,))
    C = np.array([[5.0, 1.0], [2.0, 7.0]])
    cyc = extract_cycle_greedy(C, np.zeros(2))
    assert cyc == Cycle((0, 1)) and cyc.mean_cost(C) == 1.5


@pytest.mark.parametrize("seed", range(100))
def test_bracket_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    C = rng.normal(size=(n, n))
    x = rng.normal(size=n)
    exact = brute_force_mmc(C)[0]
    assert mmc_lower_bound(C, x) <= exact + 1e-12
    assert extract_cycle_greedy(C, x).mean_cost(C) >= exact - 1e-12


def test_decompose_examples():
    sigma = Cycle((0, 2, 1))
    out = decompose_circulation(sigma.to_matrix(3))
    assert len(out) == 1 and out[0][1] == sigma
    assert out[0][0] == pytest.approx(1.0)
    out = decompose_circulation(np.eye(2) / 2)
    assert sorted((c.vertices, w) for w, c in out) == [((0,), 0.5), ((1,), 0.5)]
    out = decompose_circulation([[0, 0.5], [0.5, 0]])
    assert out == [(1.0, Cycle((0, 1)))]
    with pytest.raises(ValueError, match="circulation"):
        decompose_circulation([[0, 1.0], [0, 0]])


def random_circulation(rng, n, k):
    weights = rng.dirichlet(np.ones(k))
    P = np.zeros((n, n))
    for w in weights:
        size = int(rng.integers(1, n + 1))
        P += w * Cycle(tuple(rng.permutation(n)[:size])).to_matrix(n)
    return P


@pytest.mark.parametrize("seed", range(20))
def test_decompose_reconstructs(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7))
    P = random_circulation(rng, n, int(rng.integers(1, 6)))
    C = rng.normal(size=(n, n))
    parts = decompose_circulation(P)
    Q = sum(w * c.to_matrix(n) for w, c in parts)
    np.testing.assert_allclose(Q, P, atol=1e-9)
    assert len(parts) <= np.count_nonzero(P)
    best = min(c.mean_cost(C) for _, c in parts)
    assert best <= float(np.sum(P * C)) / P.sum() + 1e-12


def test_solve_mmc_constant():
    report = solve_mmc(np.full((4, 4), 0.7), 0.05)
    assert report.value == 0.7
    assert report.upper_bound - report.lower_bound == 0


def test_solve_mmc_two_by_two():
    C = np.array([[5.0, 1.0], [2.0, 7.0]])
    report = solve_mmc(C, 0.1)
    assert report.lower_bound <= 1.5 <= report.upper_bound
    assert report.certificate == Cycle((0, 1))
    assert report.converged


def test_solve_mmc_uniform_12_seed3():
    C = np.random.default_rng(3).uniform(size=(12, 12))
    report = solve_mmc(C, 0.05)
    exact = karp_mmc(C)[0]
    assert abs(report.value - exact) <= 0.05
    assert report.lower_bound <= exact <= report.upper_bound


def test_solve_mmc_self_loop_wins():
    C = np.full((3, 3), 2.0)
    C[1, 1] = -1.0
    report = solve_mmc(C, 0.05)
    assert report.certificate == Cycle((1,)) and report.value == -1.0


def test_solve_mmc_single_vertex():
    report = solve_mmc([[3.5]], 0.1)
    assert report.value == 3.5 and report.certificate == Cycle((0,))


@pytest.mark.parametrize("strategy, seed", strategies())
def test_solve_mmc_all_strategies(strategy, seed):
    C = np.random.default_rng(11).uniform(size=(8, 8))
    report = solve_mmc(C, 0.05, strategy=strategy, seed=seed)
    exact = karp_mmc(C)[0]
    assert report.lower_bound - 1e-12 <= exact <= report.upper_bound + 1e-12
