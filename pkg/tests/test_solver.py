import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from conftest import random_game
from pickoff import kernel as kn
from pickoff import solver as so

S = so.START_INDEX


def matrix_game(payoff):
    """One agency state whose every action pair ends the game with a payoff.

    Rewards sit on edges, so each action pair leads to its own transient
    state whose exit edge carries the payoff.
    """
    payoff = np.asarray(payoff, float)
    L, P = payoff.shape
    n = 2 + L * P
    rows = np.zeros((n, L, P, n))
    reward = np.full((n, n), np.nan)
    term = n - 1
    for a in range(L):
        for b in range(P):
            mid = 1 + a * P + b
            rows[0, a, b, mid] = 1.0
            reward[0, mid] = 0.0
            rows[mid, :, :, term] = 1.0
            reward[mid, term] = payoff[a, b]
    rows[term, :, :, term] = 1.0
    reward[term, term] = 0.0
    return kn.from_dense(rows, reward, term, agency=np.array([0]))


def test_matrix_game_value_and_policies():
    # row minima 0, 1, 0: the runner's maximin action is the second one
    k = matrix_game([[0, 5], [1, 2], [3, 0]])
    V, rep = so.value_iteration(k, tol=1e-14)
    assert V[0] == pytest.approx(1.0, abs=1e-12)
    runner, pitcher = so.extract_equilibrium_policies(V, k)
    assert runner.lead_idx[0] == 1
    assert list(pitcher.action_idx[0]) == [0, 0, 1]
    assert np.allclose(so.brute_force_maximin(k), V, atol=1e-12)


def test_ties_prefer_short_leads_and_pitches():
    k = matrix_game([[1, 1], [1, 1]])
    V, _ = so.value_iteration(k)
    runner, pitcher = so.extract_equilibrium_policies(V, k)
    assert runner.lead_idx[0] == 0
    assert np.all(pitcher.action_idx == 0)


def test_self_loop_fixed_point():
    # stay with probability 1/2 scoring one run, else end: V = 0.5 (1 + V) = 1
    rows = np.zeros((2, 1, 1, 2))
    rows[0, 0, 0] = (0.5, 0.5)
    rows[1, 0, 0, 1] = 1.0
    reward = np.array([[1.0, 0.0], [np.nan, 0.0]])
    k = kn.from_dense(rows, reward, 1, agency=np.array([], dtype=np.intp))
    V, rep = so.value_iteration(k, tol=1e-13)
    assert V[0] == pytest.approx(1.0, abs=1e-12)
    assert rep.converged and rep.rate == pytest.approx(0.5, abs=1e-6)


def test_uniqueness_from_any_start():
    k = random_game(np.random.default_rng(12), n_states=6, n_leads=3)
    V0, _ = so.value_iteration(k, tol=1e-13)
    rng = np.random.default_rng(0)
    for _ in range(5):
        v0 = rng.uniform(-50, 50, k.n_states)
        v0[k.terminal] = 0.0
        V, _ = so.value_iteration(k, tol=1e-13, v0=v0)
        assert np.allclose(V, V0, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(hst.integers(0, 2**32 - 1))
def test_vi_matches_brute_force(seed):
    k = random_game(np.random.default_rng(seed))
    V, _ = so.value_iteration(k, tol=1e-14, max_iters=10_000)
    assert np.allclose(V, so.brute_force_maximin(k), atol=1e-9)


@settings(max_examples=20, deadline=None)
@given(hst.integers(0, 2**32 - 1))
def test_pi_matches_vi(seed):
    k = random_game(np.random.default_rng(seed))
    V, _ = so.value_iteration(k, tol=1e-14, max_iters=10_000)
    V_pi, runner, pitcher, rep = so.policy_iteration(k, tol=1e-13)
    assert np.allclose(V, V_pi, atol=1e-9)
    assert np.all(np.diff(rep.extra["round_values"]) >= -1e-9)
    # the returned pair attains the value
    assert np.allclose(so.evaluate_policy_pair(runner, pitcher, k, method="linear"), V, atol=1e-9)


def test_equilibrium_pair_attains_value(truth_two, truth_vi):
    V, _, runner, pitcher = truth_vi
    lin = so.evaluate_policy_pair(runner, pitcher, truth_two, method="linear")
    it = so.evaluate_policy_pair(runner, pitcher, truth_two, tol=1e-13)
    assert np.allclose(lin, it, atol=1e-10)
    assert np.abs(lin - V).max() < 1e-8


def test_no_profitable_deviation(truth_two, truth_vi):
    V, _, runner, pitcher = truth_vi
    # pitcher best response against the equilibrium runner gives the same value
    _, Vbr = so.pitcher_best_response(runner, truth_two)
    assert np.abs(Vbr - V).max() < 1e-8
    # any single-state change of lead cannot help the runner
    _, q = truth_two.backup(V)
    worst_case = q.min(axis=2)
    chosen = worst_case[np.arange(len(runner.lead_idx)), runner.lead_idx]
    assert np.all(worst_case.max(axis=1) - chosen <= 1e-12)


def test_tolerance_ordering(truth_two, truth_vi):
    V_loose, rep = so.value_iteration(truth_two, tol=1e-4)
    assert abs(V_loose[S] - truth_vi[0][S]) <= 1e-3
    assert rep.iterations < truth_vi[1].iterations
    # the reported bound holds
    assert np.abs(V_loose - truth_vi[0]).max() <= rep.error_bound


def test_non_convergence(truth_two):
    V, rep = so.value_iteration(truth_two, max_iters=3)
    assert not rep.converged and rep.iterations == 3
    with pytest.raises(so.NonConvergenceError) as exc:
        so.value_iteration(truth_two, max_iters=3, raise_on_failure=True)
    V_partial, rep_partial = exc.value.partial
    assert np.array_equal(V_partial, V)


def test_value_vector_checks(truth_two):
    V = np.ones(truth_two.n_states)
    with pytest.raises(ValueError):
        so.extract_equilibrium_policies(V, truth_two)
    with pytest.raises(ValueError):
        so.bellman_maximin_update(np.zeros(3), truth_two)


def test_one_player(truth_one, truth_two, truth_one_player):
    V1, runner, rep = truth_one_player
    assert rep.converged
    assert runner.lead_values().shape == (108,)
    with pytest.raises(ValueError):
        so.solve_one_player(truth_two)
    sol = so.solve(truth_one)
    assert sol.pitcher is None
    assert np.allclose(sol.values, V1, atol=1e-9)


def test_evaluate_mixed_interpolates(truth_two, truth_vi):
    runner = truth_vi[2]
    never = so.evaluate_mixed(truth_two, runner.lead_idx, np.zeros(108))
    pitch_only = so.evaluate_policy_pair(
        runner, so.PitcherPolicy(np.zeros((108, 201), dtype=np.intp), truth_two.pitcher_actions),
        truth_two, method="linear")
    assert np.allclose(never, pitch_only, atol=1e-12)


def test_solution_round_trip(truth_two, tmp_path):
    sol = so.solve(truth_two, "vi")
    path = tmp_path / "sol.json"
    so.save_solution(sol, path, include_time=False)
    again = so.load_solution(path)
    assert np.array_equal(again.values, sol.values)
    assert again.runner == sol.runner
    assert again.pitcher == sol.pitcher
    assert again.report.iterations == sol.report.iterations
    assert again.start_value() == sol.start_value()
    so.save_solution(again, tmp_path / "again.json", include_time=False)
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()
    with pytest.raises(ValueError):
        so.solve(truth_two, "newton")
