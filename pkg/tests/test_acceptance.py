"""Acceptance criteria 1-10, one test each.

Each test prints ``criterion N PASS|FAIL`` and the verdicts are repeated in
the pytest terminal summary.  Run just this file with::

    pytest tests/test_acceptance.py -v
"""

import time

import numpy as np
import pytest

from conftest import random_game, self_loop_game
from pickoff import builder as bd
from pickoff import cli
from pickoff import kernel as kn
from pickoff import outcomes as om
from pickoff import plays as pl
from pickoff import report as rp
from pickoff import simulate as sm
from pickoff import solver as so
from pickoff import states as st
from pickoff import synthetic as syn

S = so.START_INDEX


def test_criterion_01_brute_force_equivalence(criterion):
    with criterion(1, "value iteration equals exhaustive max-min on random small games") as c:
        rng = np.random.default_rng(20240601)
        t0 = time.perf_counter()
        worst, games = 0.0, 0
        for _ in range(30):
            k = random_game(rng)
            assert k.n_states <= 6 and k.n_leads <= 3 and k.n_pitcher == 2
            V, rep = so.value_iteration(k, tol=1e-14, max_iters=10_000)
            assert rep.converged
            B = so.brute_force_maximin(k)
            worst = max(worst, float(np.max(np.abs(V - B))))
            games += 1
        elapsed = time.perf_counter() - t0
        c.detail = f"{games} games, max |VI - brute| = {worst:.2e}, {elapsed:.1f} s"
        assert worst <= 1e-9
        assert elapsed < 10


def test_criterion_02_vi_equals_pi(criterion, truth_two, truth_vi):
    with criterion(2, "value iteration and policy iteration agree on the full kernel") as c:
        V_vi = truth_vi[0]
        t0 = time.perf_counter()
        V_pi, _, _, rep = so.policy_iteration(truth_two)
        elapsed = time.perf_counter() - t0
        rounds = np.array(rep.extra["round_values"])
        gap = float(np.max(np.abs(V_vi - V_pi)))
        c.detail = (f"{truth_two.n_states} states x {truth_two.n_leads} leads, max gap {gap:.1e}, "
                    f"{rep.extra['rounds']} rounds, {elapsed:.1f} s")
        assert truth_two.n_states == 869 and truth_two.n_leads == 201
        assert gap <= 1e-8
        # policy_iteration itself raises on any state-wise decrease above 1e-9
        assert np.all(np.diff(rounds) >= -1e-9)
        assert elapsed < 300


def test_criterion_03_dp_mc_cross_oracle(criterion, truth_two, truth_vi):
    with criterion(3, "Monte Carlo covers the DP start value within 3 SE") as c:
        V, _, runner, pitcher = truth_vi
        t0 = time.perf_counter()
        res = sm.monte_carlo_value(truth_two, runner, pitcher, 1_000_000, seed=2024)
        elapsed = time.perf_counter() - t0
        z = (res.mean - V[S]) / res.se
        c.detail = f"DP {V[S]:.4f}, MC {res.mean:.4f} +/- {res.se:.4f} (z = {z:+.2f}), {elapsed:.1f} s"
        assert res.covers(V[S], 3.0)
        assert res.truncated == 0
        assert elapsed < 120


def test_criterion_04_geometric_convergence(criterion, truth_two, truth_vi):
    with criterion(4, "fitted VI decay rate within rho^(1/m) + 0.05") as c:
        rep = truth_vi[1]
        h = truth_two.halting
        bound = h.rho ** (1.0 / h.m)
        c.detail = f"rate {rep.rate:.4f} vs rho^(1/m) = {bound:.4f} (m = {h.m}, rho = {h.rho:.2e})"
        assert np.isfinite(rep.rate)
        assert rep.rate <= bound + 0.05


def test_criterion_05_dominance_chain(criterion, model_set, truth_one, truth_vi, truth_one_player):
    with criterion(5, "one-player >= two-player >= behavioural value") as c:
        V2 = truth_vi[0]
        V1 = truth_one_player[0]
        cfg = syn.GeneratorConfig(model_set=model_set)
        Vb = so.evaluate_mixed(truth_one, syn.behavioural_lead_index(cfg), None)
        c.detail = f"{V1[S]:.4f} >= {V2[S]:.4f} >= {Vb[S]:.4f}"
        assert V1[S] - V2[S] >= -1e-9
        assert V2[S] - Vb[S] >= -1e-9


def test_criterion_06_two_foot_rule_direction(criterion, model_set, truth_one_player):
    with criterion(6, "one-player lead non-decreasing in d, mean increment in (0, 5) ft") as c:
        # the shipped fixture makes pickoff attempts rarer after each disengagement
        fixed = model_set.po_attempt.fixed
        assert fixed["diseng_1"] < 0 and fixed["diseng_2"] < fixed["diseng_1"]
        rep = rp.two_foot_rule_report(truth_one_player[1])
        c.detail = (f"min increment {rep.increments.min():+.1f} ft, "
                    f"mean increment {rep.mean_increment:+.2f} ft")
        assert rep.non_decreasing
        assert 0 < rep.mean_increment < 5


def test_criterion_07_normalization(criterion, model_set, corpus, truth_two, truth_one):
    with criterion(7, "outcome distributions and kernel rows sum to 1") as c:
        rng = np.random.default_rng(77)
        k_est = bd.build_kernel(corpus, model_set)
        kernels = [truth_two, truth_one, k_est]
        runners = ["R-fast", "R-none", None]
        pitchers = ["P-ace", "P-slow", None]
        worst_out = worst_row = 0.0
        n_probes = 10_000
        for _ in range(n_probes):
            ctx = om.PlayContext(
                balls=int(rng.integers(4)), strikes=int(rng.integers(3)),
                outs=int(rng.integers(3)), disengagements=int(rng.integers(3)),
                runner_id=runners[rng.integers(3)], pitcher_id=pitchers[rng.integers(3)],
                sprint_speed=float(rng.uniform(23, 31)), arm_strength=float(rng.uniform(70, 95)),
            )
            lead = float(rng.uniform(0, 20))
            if rng.random() < 0.5:
                action = st.PitcherAction.PICKOFF if rng.random() < 0.5 else st.PitcherAction.PITCH
                dist = om.outcome_distribution_two_player(model_set, ctx, lead, action)
            else:
                dist = om.outcome_distribution_one_player(model_set, ctx, lead)
            assert np.all(dist >= 0)
            worst_out = max(worst_out, abs(float(dist.sum()) - 1.0))

            k = kernels[rng.integers(len(kernels))]
            s = int(rng.integers(k.n_states))
            row = k.row(s, int(rng.integers(k.n_leads)), int(rng.integers(k.n_pitcher)))
            assert np.all(row >= 0)
            worst_row = max(worst_row, abs(float(row.sum()) - 1.0))
        c.detail = f"{n_probes} probes, outcome error {worst_out:.1e}, row error {worst_row:.1e}"
        assert worst_out <= 1e-12
        assert worst_row <= 1e-10


def test_criterion_08_pipeline_closure(criterion, model_set, corpus, truth_vi, tmp_path):
    with criterion(8, "generate -> ingest -> estimate -> assemble -> solve closes within 0.01") as c:
        path = tmp_path / "plays.csv"
        pl.save_plays(corpus, path)
        plays = pl.ingest_plays(path)
        assert len(plays) == len(corpus)
        Q = bd.estimate_pooled_frequencies(plays)
        k = bd.assemble_two_player_kernel(Q, model_set)
        V, rep = so.value_iteration(k)
        diff = float(V[S] - truth_vi[0][S])
        c.detail = f"estimated {V[S]:.4f} vs ground truth {truth_vi[0][S]:.4f} (diff {diff:+.4f})"
        assert rep.converged
        assert abs(diff) <= 0.01


def test_criterion_09_third_disengagement(criterion, model_set, corpus):
    with criterion(9, "failed pickoff at d = 2 advances the runner and resets d") as c:
        k = bd.build_kernel(corpus, model_set)
        r = st.RunnerOutcome.PICKOFF_FAIL
        checked = 0
        for i, s in enumerate(k.agency):
            p = st.state_of(int(s))
            if p.disengagements != 2:
                continue
            target = st.index(st.Play(st.BaseState(0, 1, 0), p.count, 0, p.outs))
            comp = k.components[i, r]
            assert comp[target] == 1.0
            assert np.count_nonzero(comp) == 1
            checked += 1
        c.detail = f"{checked} agency states at d = 2"
        assert checked == 36


def test_criterion_10_halting_refusal(criterion, tmp_path):
    with criterion(10, "a non-halting kernel is refused everywhere (exit code 4)") as c:
        k = self_loop_game()
        k1 = self_loop_game(one_player=True)
        assert k.halting.rho == 1.0 and k1.halting.rho == 1.0
        runner = so.RunnerPolicy(np.array([1]), k.leads, k.agency)
        pitcher = so.PitcherPolicy(np.array([[1, 1]]), k.pitcher_actions)
        entry_points = [
            lambda: so.value_iteration(k),
            lambda: so.policy_iteration(k),
            lambda: so.solve(k, "vi"),
            lambda: so.solve(k, "pi"),
            lambda: so.solve_one_player(k1),
            lambda: so.bellman_maximin_update(np.zeros(3), k),
            lambda: so.evaluate_policy_pair(runner, pitcher, k),
            lambda: so.evaluate_mixed(k, runner.lead_idx, np.array([0.5])),
            lambda: so.pitcher_best_response(runner, k),
            lambda: so.brute_force_maximin(k),
            lambda: sm.monte_carlo_value(k, runner, pitcher, 10),
        ]
        for call in entry_points:
            with pytest.raises(kn.InvalidKernelError):
                call()

        kpath = tmp_path / "loop.json"
        kn.save_kernel(k, kpath)
        codes = [
            cli.main(["solve", "--kernel", str(kpath), "--method", m, "--out", str(tmp_path / "s.json")])
            for m in ("vi", "pi")
        ]
        sol = so.Solution(np.zeros(3), runner, pitcher,
                          so.SolveReport("vi", 0, 0.0, True, np.zeros(0)))
        so.save_solution(sol, tmp_path / "sol.json")
        codes.append(cli.main(["simulate", "--kernel", str(kpath), "--solution",
                               str(tmp_path / "sol.json"), "--innings", "10"]))
        c.detail = f"{len(entry_points)} library entry points raise; CLI exit codes {codes}"
        assert codes == [cli.EXIT_INVALID_KERNEL] * 3
        assert not (tmp_path / "s.json").exists()
