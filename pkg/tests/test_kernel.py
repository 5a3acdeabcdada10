import numpy as np
import pytest

from conftest import random_game, self_loop_game
from pickoff import kernel as kn
from pickoff import states as st


def test_persistence_round_trip(truth_two, tmp_path):
    path = tmp_path / "k.json"
    kn.save_kernel(truth_two, path)
    k = kn.load_kernel(path)
    assert k.mode == truth_two.mode
    assert k.pitcher_actions == truth_two.pitcher_actions
    assert np.array_equal(k.leads, truth_two.leads)
    assert np.array_equal(k.weights, truth_two.weights)
    assert np.array_equal(k.components, truth_two.components)
    assert (k.base != truth_two.base).nnz == 0
    V = np.random.default_rng(0).uniform(0, 2, k.n_states)
    V[k.terminal] = 0
    a, qa = k.backup(V)
    b, qb = truth_two.backup(V)
    assert np.array_equal(a, b) and np.array_equal(qa, qb)
    # saving is deterministic
    kn.save_kernel(k, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_load_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2")
    with pytest.raises(kn.InvalidKernelError):
        kn.load_kernel(bad)
    bad.write_text('{"format": "something-else"}')
    with pytest.raises(kn.InvalidKernelError):
        kn.load_kernel(bad)


def test_rows_and_policy_matrix_agree():
    k = random_game(np.random.default_rng(4), n_states=5, n_leads=3)
    rows, r = k.action_rows()
    lead = np.array([2, 0, 1, 1])
    pitch = np.array([0, 1, 1, 0])
    P, rv = k.policy_matrix(lead, pitch)
    for i, s in enumerate(k.agency):
        assert np.allclose(P.toarray()[s], k.row(s, lead[i], pitch[i]))
        assert np.allclose(P.toarray()[s], rows[i, lead[i], pitch[i]])
        assert rv[s] == pytest.approx(r[i, lead[i], pitch[i]])
    assert np.allclose(P.sum(axis=1), 1)


def test_row_checks():
    n = 3
    rows = np.zeros((n, 1, 2, n))
    rows[:, :, :, 2] = 1.0
    reward = np.zeros((n, n))
    kn.from_dense(rows, reward, 2, agency=np.array([0, 1]))
    short = rows.copy()
    short[0, 0, 1, 2] = 0.9
    with pytest.raises(kn.InvalidKernelError, match="sum"):
        kn.from_dense(short, reward, 2, agency=np.array([0, 1]))
    neg = rows.copy()
    neg[0, 0, 0] = (-0.1, 0.1, 1.0)
    with pytest.raises(kn.InvalidKernelError):
        kn.from_dense(neg, reward, 2, agency=np.array([0, 1]))
    forbidden = reward.copy()
    forbidden[0, 2] = np.nan
    with pytest.raises(kn.InvalidKernelError, match="inadmissible"):
        kn.from_dense(rows, forbidden, 2, agency=np.array([0, 1]))
    leaky = rows.copy()
    leaky[2, 0, 0] = (1.0, 0.0, 0.0)
    with pytest.raises(kn.InvalidKernelError):
        kn.from_dense(leaky, reward, 2, agency=np.array([0, 1]))


def test_halting_report():
    k = random_game(np.random.default_rng(8), n_states=4, n_leads=2, halt=0.3)
    h = k.halting
    assert h.m == k.n_states and 0 <= h.rho <= 0.7 ** h.m + 1e-12
    assert h.solvable
    k.require_solvable()
    # rho is monotone in the horizon
    assert kn.validate_halting(k, 1).rho >= kn.validate_halting(k, 2).rho >= kn.validate_halting(k, 4).rho
    with pytest.raises(ValueError):
        kn.validate_halting(k, 0)


def test_self_loop_is_refused():
    k = self_loop_game()
    assert k.halting.rho == 1.0 and not k.halting.solvable
    with pytest.raises(kn.InvalidKernelError):
        k.require_solvable()


def test_synthetic_kernel_halts(truth_two, truth_one):
    for k in (truth_two, truth_one):
        h = k.halting
        assert h.m == st.N_STATES
        assert h.rho < 1e-50
        assert h.value_bound(k.max_reward) < np.inf
