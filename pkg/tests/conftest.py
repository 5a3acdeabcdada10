import contextlib

import numpy as np
import pytest

from pickoff import kernel as kn
from pickoff import solver as so
from pickoff import synthetic as syn

# acceptance criteria verdicts, printed in the terminal summary
_CRITERIA = {}


class _Verdict:
    def __init__(self, number, title):
        self.number, self.title, self.detail = number, title, ""


@pytest.fixture
def criterion():
    """Context manager recording PASS/FAIL for one acceptance criterion."""

    @contextlib.contextmanager
    def record(number, title):
        v = _Verdict(number, title)
        ok = False
        try:
            yield v
            ok = True
        finally:
            _CRITERIA[number] = (title, ok, v.detail)
            print(_line(number, title, ok, v.detail))

    return record


def _line(number, title, ok, detail):
    text = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}"
    return text + (f"  [{detail}]" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_line(n, *_CRITERIA[n]))


# -- shared synthetic fixtures ----------------------------------------------------


@pytest.fixture(scope="session")
def model_set():
    return syn.synthetic_model_set()


@pytest.fixture(scope="session")
def truth_two(model_set):
    return syn.ground_truth_kernel(model_set)


@pytest.fixture(scope="session")
def truth_one(model_set):
    return syn.ground_truth_kernel(model_set, mode="one-player")


@pytest.fixture(scope="session")
def truth_vi(truth_two):
    V, rep = so.value_iteration(truth_two)
    runner, pitcher = so.extract_equilibrium_policies(V, truth_two)
    return V, rep, runner, pitcher


@pytest.fixture(scope="session")
def truth_one_player(truth_one):
    return so.solve_one_player(truth_one)


@pytest.fixture(scope="session")
def corpus():
    """A 100,000-inning synthetic play log (seed 0)."""
    return syn.generate_synthetic_plays(syn.GeneratorConfig(innings=100_000, seed=0))


# -- small games ---------------------------------------------------------------------


def random_game(rng, n_states=None, n_leads=None, halt=0.2):
    """A random game with every non-terminal state an agency state.

    Each row sends at least ``halt`` of its mass to the terminal state (the
    last index), so the game halts under every policy pair.
    """
    n = n_states or int(rng.integers(2, 7))
    L = n_leads or int(rng.integers(1, 4))
    rows = np.zeros((n, L, 2, n))
    for s in range(n - 1):
        for a in range(L):
            for b in range(2):
                p = rng.dirichlet(np.ones(n)) * (1 - halt)
                p[-1] += halt
                # sprinkle exact zeros so supports differ
                drop = rng.random(n - 1) < 0.3
                p[:-1][drop] = 0.0
                rows[s, a, b] = p / p.sum()
    rows[n - 1, :, :, n - 1] = 1.0
    reward = rng.uniform(0, 1, (n, n))
    reward[n - 1] = 0.0
    return kn.from_dense(rows, reward, n - 1, agency=np.arange(n - 1))


def self_loop_game(one_player=False):
    """Three states; the long lead met by a pickoff throw loops forever.

    State 0: lead index 0 ends the inning; lead index 1 scores a run with the
    pitch but returns to state 0 with no progress when the pitcher throws
    over.  State 1 is an ordinary transient state, 2 is terminal.
    """
    P = 1 if one_player else 2
    rows = np.zeros((3, 2, P, 3))
    rows[0, 0, :, 1] = 1.0
    rows[0, 1, 0, 2] = 1.0
    if P == 2:
        rows[0, 1, 1, 0] = 1.0
    else:
        rows[0, 1, 0, :] = (1.0, 0.0, 0.0)
    rows[1, :, :, 2] = 1.0
    rows[2, :, :, 2] = 1.0
    reward = np.array([[0.0, 0.0, 1.0], [np.nan, np.nan, 0.0], [np.nan, np.nan, 0.0]])
    return kn.from_dense(rows, reward, 2, agency=np.array([0]))
