"""Solvers for the undiscounted maximin game and its one-player reduction.

Values are expected runs over the rest of the inning.  The runner moves
first (chooses a lead), the pitcher responds (pickoff or pitch), so the
optimality operator is

    (T V)(s) = max_lead min_pitcher sum_s' p(s' | s, lead, a_P) [r(s, s') + V(s')]

at agency states and a plain expectation elsewhere.  Every entry point
refuses kernels that fail the halting check.

Ties are broken deterministically: the runner takes the shortest lead among
maximizers and the pitcher pitches unless a pickoff is strictly better.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import states as st
from .kernel import InvalidKernelError, TransitionKernel

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITERS = 100_000
TIE_TOL = 1e-12
SOLUTION_FORMAT = "pickoff-solution"


class NonConvergenceError(RuntimeError):
    """Iteration limit reached; ``partial`` holds the last iterate and report."""

    def __init__(self, msg, partial=None):
        super().__init__(msg)
        self.partial = partial


class InvariantError(RuntimeError):
    """A property guaranteed by the theory failed beyond numerical tolerance."""


# -- policies and reports -------------------------------------------------


@dataclass(frozen=True)
class RunnerPolicy:
    """Lead index per agency state; states without agency take no action."""

    lead_idx: np.ndarray  # (k,)
    leads: np.ndarray  # (L,) lead values of the kernel grid
    agency: np.ndarray  # (k,) state indices

    def lead_of(self, s: int) -> Optional[float]:
        pos = np.flatnonzero(self.agency == s)
        if len(pos) == 0:
            return None
        return float(self.leads[self.lead_idx[pos[0]]])

    def action(self, s: int):
        lead = self.lead_of(s)
        return st.NO_AGENCY if lead is None else st.Lead(lead)

    def lead_values(self) -> np.ndarray:
        return self.leads[self.lead_idx]

    def __eq__(self, other):
        return isinstance(other, RunnerPolicy) and np.array_equal(self.lead_idx, other.lead_idx)

    __hash__ = None


@dataclass(frozen=True)
class PitcherPolicy:
    """Pitcher action index for every (agency state, grid lead) pair.

    Indices refer to the kernel's ``pitcher_actions`` (for the baseball
    kernel 0 = pitch, 1 = pickoff).
    """

    action_idx: np.ndarray  # (k, L)
    actions: tuple

    def at(self, i: int, lead_idx: int):
        return self.actions[self.action_idx[i, lead_idx]]

    def along(self, runner: RunnerPolicy) -> np.ndarray:
        """Actions taken on the path of ``runner``, shape ``(k,)``."""
        return self.action_idx[np.arange(len(runner.lead_idx)), runner.lead_idx]

    def __eq__(self, other):
        return isinstance(other, PitcherPolicy) and np.array_equal(self.action_idx, other.action_idx)

    __hash__ = None


@dataclass
class SolveReport:
    method: str
    iterations: int
    residual: float
    converged: bool
    history: np.ndarray = field(repr=False)
    rate: float = float("nan")
    error_bound: float = float("nan")
    halting_m: int = 0
    halting_rho: float = float("nan")
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_dict(self, include_time=True) -> dict:
        doc = {
            "method": self.method,
            "iterations": self.iterations,
            "residual": self.residual,
            "converged": self.converged,
            "rate": None if np.isnan(self.rate) else self.rate,
            "error_bound": None if not np.isfinite(self.error_bound) else self.error_bound,
            "halting": {"m": self.halting_m, "rho": self.halting_rho},
            "history": [float(x) for x in self.history],
            "extra": self.extra,
        }
        if include_time:
            doc["wall_time"] = self.wall_time
        return doc


@dataclass
class Solution:
    values: np.ndarray
    runner: RunnerPolicy
    pitcher: Optional[PitcherPolicy]
    report: SolveReport
    kernel_meta: dict = field(default_factory=dict)

    def start_value(self) -> float:
        return float(self.values[START_INDEX]) if len(self.values) == st.N_STATES else float(self.values[0])


START_INDEX = st.index(st.play((0, 0, 0), (0, 0)))


# -- helpers -----------------------------------------------------------------


def _check_values(V, k: TransitionKernel):
    V = np.asarray(V, dtype=float)
    if V.shape != (k.n_states,):
        raise ValueError(f"value vector has shape {V.shape}, expected ({k.n_states},)")
    if V[k.terminal] != 0.0:
        raise ValueError("the terminal value must be exactly 0")
    return V


def _first_within(x, tol, best, axis):
    """Index of the first entry within ``tol`` of ``best`` along ``axis``."""
    return np.argmax(np.abs(x - np.expand_dims(best, axis)) <= tol, axis=axis)


def greedy_pitcher(q: np.ndarray, tie_tol: float = TIE_TOL, current=None) -> np.ndarray:
    """Argmin over the pitcher axis of ``q`` (k, L, P); ties go to index 0.

    With ``current`` given, the current action is kept whenever it is
    within ``tie_tol`` of the minimum.
    """
    best = q.min(axis=2)
    idx = _first_within(q, tie_tol, best, axis=2)
    if current is not None:
        cur_q = np.take_along_axis(q, current[..., None], axis=2)[..., 0]
        idx = np.where(cur_q <= best + tie_tol, current, idx)
    return idx


def greedy_runner(m: np.ndarray, tie_tol: float = TIE_TOL, current=None) -> np.ndarray:
    """Argmax over leads of ``m`` (k, L); ties go to the shortest lead."""
    best = m.max(axis=1)
    idx = _first_within(m, tie_tol, best, axis=1)
    if current is not None:
        cur = m[np.arange(len(m)), current]
        idx = np.where(cur >= best - tie_tol, current, idx)
    return idx


def _fit_rate(history, tol):
    """Geometric decay rate of the residuals from a log-linear fit of the tail."""
    h = np.asarray(history, dtype=float)
    floor = max(tol * 1e-3, 1e-300)
    idx = np.flatnonzero(h > floor)
    if len(idx) < 4:
        return float("nan")
    idx = idx[len(idx) // 2:]
    if len(idx) < 3:
        return float("nan")
    slope = np.polyfit(idx, np.log(h[idx]), 1)[0]
    return float(np.exp(slope))


def _report(method, k, history, tol, t0, converged, **extra):
    rep = k.halting
    residual = float(history[-1]) if len(history) else 0.0
    bound = rep.m * residual / (1.0 - rep.rho) if rep.rho < 1 else float("inf")
    return SolveReport(
        method=method,
        iterations=len(history),
        residual=residual,
        converged=converged,
        history=np.asarray(history),
        rate=_fit_rate(history, tol),
        error_bound=bound,
        halting_m=rep.m,
        halting_rho=rep.rho,
        wall_time=time.perf_counter() - t0,
        extra=extra,
    )


# -- Bellman operators -------------------------------------------------------


def bellman_maximin_update(V, k: TransitionKernel) -> np.ndarray:
    """One application of the maximin optimality operator."""
    k.require_solvable()
    V = _check_values(V, k)
    return _maximin(V, k)


def _maximin(V, k):
    plain, q = k.backup(V)
    out = plain
    if len(k.agency):
        out[k.agency] = q.min(axis=2).max(axis=1)
    out[k.terminal] = 0.0
    return out


def _iterate(op, V, k, tol, max_iters, method):
    t0 = time.perf_counter()
    history = []
    converged = False
    for _ in range(max_iters):
        new = op(V)
        diff = float(np.max(np.abs(new - V)))
        history.append(diff)
        V = new
        if diff < tol:
            converged = True
            break
    return V, _report(method, k, history, tol, t0, converged)


def value_iteration(k: TransitionKernel, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                    v0=None, raise_on_failure: bool = False):
    """Iterate the maximin operator from ``v0`` (default 0) to a fixed point.

    Stops when successive iterates differ by less than ``tol`` in the sup
    norm.  The report carries the residual history, the fitted geometric
    rate and the bound ``m * residual / (1 - rho)`` on the distance to the
    fixed point.  When ``max_iters`` is hit the report says
    ``converged=False`` (or :class:`NonConvergenceError` is raised).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    k.require_solvable()
    V = np.zeros(k.n_states) if v0 is None else _check_values(v0, k).copy()
    V, rep = _iterate(lambda v: _maximin(v, k), V, k, tol, max_iters, "vi")
    if not rep.converged:
        log.warning("value iteration stopped after %d sweeps (residual %.3g)", rep.iterations, rep.residual)
        if raise_on_failure:
            raise NonConvergenceError("value iteration did not converge", (V, rep))
    return V, rep


def extract_equilibrium_policies(V, k: TransitionKernel, tie_tol: float = TIE_TOL):
    """Greedy maximin policies with respect to ``V``.

    The pitcher's reply is computed at every grid lead, not only the one the
    runner picks.
    """
    V = _check_values(V, k)
    _, q = k.backup(V)
    pitcher = greedy_pitcher(q, tie_tol)
    m = np.take_along_axis(q, pitcher[..., None], axis=2)[..., 0]
    runner = greedy_runner(m, tie_tol)
    return (
        RunnerPolicy(runner, k.leads, k.agency),
        PitcherPolicy(pitcher, k.pitcher_actions),
    )


# -- policy evaluation -------------------------------------------------------


def _pair_matrix(k, runner: RunnerPolicy, pitcher_path):
    return k.policy_matrix(runner.lead_idx, pitcher_path)


def _linear_solve(P, r, terminal):
    n = P.shape[0]
    keep = np.ones(n, bool)
    keep[terminal] = False
    A = sp.identity(int(keep.sum()), format="csc") - P[keep][:, keep].tocsc()
    V = np.zeros(n)
    V[keep] = spla.spsolve(A, r[keep])
    return V


def evaluate_policy_pair(runner: RunnerPolicy, pitcher: PitcherPolicy, k: TransitionKernel,
                         tol: float = DEFAULT_TOL, method: str = "iterate",
                         max_iters: int = DEFAULT_MAX_ITERS) -> np.ndarray:
    """Value of a fixed policy pair.

    ``method="iterate"`` applies the evaluation operator from 0 until the
    sup-norm change is below ``tol``; ``method="linear"`` solves
    ``(I - P) V = r`` directly.
    """
    k.require_solvable()
    path = pitcher.along(runner) if pitcher is not None else np.zeros(len(k.agency), dtype=np.intp)
    P, r = _pair_matrix(k, runner, path)
    return _evaluate(P, r, k, tol, method, max_iters)


def _evaluate(P, r, k, tol, method, max_iters=DEFAULT_MAX_ITERS):
    if method == "linear":
        return _linear_solve(P, r, k.terminal)
    if method != "iterate":
        raise ValueError(f"unknown evaluation method {method!r}")
    V = np.zeros(k.n_states)
    for _ in range(max_iters):
        new = r + P @ V
        new[k.terminal] = 0.0
        if np.max(np.abs(new - V)) < tol:
            return new
        V = new
    raise NonConvergenceError("policy evaluation did not converge", V)


def evaluate_mixed(k: TransitionKernel, lead_idx, pickoff_prob) -> np.ndarray:
    """Value when the pitcher picks off with probability ``pickoff_prob`` per agency state.

    Used for behavioural policies, which randomize.  ``k`` must be a
    two-player kernel (pitch = 0, pickoff = 1) or a one-player kernel with
    ``pickoff_prob`` ignored.
    """
    k.require_solvable()
    lead_idx = np.asarray(lead_idx, dtype=np.intp)
    P0, r0 = k.policy_matrix(lead_idx, np.zeros(len(k.agency), dtype=np.intp))
    if k.n_pitcher == 1:
        return _linear_solve(P0, r0, k.terminal)
    P1, r1 = k.policy_matrix(lead_idx, np.ones(len(k.agency), dtype=np.intp))
    w = np.zeros(k.n_states)
    w[k.agency] = pickoff_prob
    W = sp.diags(w)
    P = (sp.identity(k.n_states) - W) @ P0 + W @ P1
    r = (1 - w) * r0 + w * r1
    return _linear_solve(P.tocsr(), r, k.terminal)


# -- pitcher best response and policy iteration ------------------------------


def _runner_q(V, k, runner: RunnerPolicy):
    """Q-values at the runner's chosen lead, shape ``(k, P)``."""
    _, q = k.backup(V)
    return q[np.arange(len(k.agency)), runner.lead_idx]


def pitcher_best_response(runner: RunnerPolicy, k: TransitionKernel, tol: float = DEFAULT_TOL,
                          max_iters: int = DEFAULT_MAX_ITERS, tie_tol: float = TIE_TOL):
    """Pitcher's best reply to a fixed runner policy and the resulting value.

    Value iteration on ``T_pi_R`` (min over the pitcher at the runner's
    lead) gives a near-optimal reply, which is then polished by exact
    policy-iteration steps with sparse linear solves.  The returned policy
    also lists the greedy reply at leads the runner does not use.
    """
    k.require_solvable()
    rows = np.arange(len(k.agency))

    def op(V):
        plain, q = k.backup(V)
        out = plain
        out[k.agency] = q[rows, runner.lead_idx].min(axis=1)
        out[k.terminal] = 0.0
        return out

    V, rep = _iterate(op, np.zeros(k.n_states), k, tol, max_iters, "best-response")
    if not rep.converged:
        raise NonConvergenceError("best-response iteration did not converge", (V, rep))
    path = greedy_pitcher(_runner_q(V, k, runner)[:, None, :], tie_tol)[:, 0]
    for _ in range(100):
        P, r = k.policy_matrix(runner.lead_idx, path)
        V = _linear_solve(P, r, k.terminal)
        new = greedy_pitcher(_runner_q(V, k, runner)[:, None, :], tie_tol, path[:, None])[:, 0]
        if np.array_equal(new, path):
            break
        path = new
    _, q = k.backup(V)
    full = greedy_pitcher(q, tie_tol)
    full[rows, runner.lead_idx] = path
    return PitcherPolicy(full, k.pitcher_actions), V


def policy_iteration(k: TransitionKernel, tol: float = DEFAULT_TOL, max_iters: int = 1000,
                     runner0: Optional[RunnerPolicy] = None, tie_tol: float = TIE_TOL,
                     monotone_tol: float = 1e-9):
    """Runner-side policy iteration with pitcher best responses.

    Each round evaluates the current runner policy against the pitcher's
    best reply, then lets the runner improve greedily.  The round values
    must not decrease (beyond ``monotone_tol``); a decrease raises
    :class:`InvariantError`.  Stops when the runner policy repeats or no
    state improves by ``tol`` or more.

    Returns ``(V, runner, pitcher, report)``; ``report.extra['round_values']``
    holds the start-state value of each round.
    """
    k.require_solvable()
    t0 = time.perf_counter()
    if runner0 is None:
        runner0 = RunnerPolicy(np.zeros(len(k.agency), dtype=np.intp), k.leads, k.agency)
    runner = runner0
    history, rounds = [], []
    prev = None
    converged = False
    for _ in range(max_iters):
        pitcher, V = pitcher_best_response(runner, k, tol, tie_tol=tie_tol)
        rounds.append(V.copy())
        if prev is not None:
            drop = float(np.max(prev - V))
            if drop > monotone_tol:
                raise InvariantError(f"policy-iteration values decreased by {drop:.3g}")
            gain = float(np.max(V - prev))
            history.append(max(gain, 0.0))
            if gain < tol:
                converged = True
                break
        _, q = k.backup(V)
        m = q.min(axis=2)
        new_idx = greedy_runner(m, tie_tol, runner.lead_idx)
        if np.array_equal(new_idx, runner.lead_idx):
            history.append(0.0)
            converged = True
            break
        runner = RunnerPolicy(new_idx, k.leads, k.agency)
        prev = V
    rep = _report("pi", k, history, tol, t0, converged,
                  round_values=[float(v[START_INDEX]) if len(v) > START_INDEX else float(v[0]) for v in rounds])
    rep.extra["rounds"] = len(rounds)
    return V, runner, pitcher, rep


# -- one-player reduction -----------------------------------------------------


def solve_one_player(k_one: TransitionKernel, tol: float = DEFAULT_TOL, max_iters: int = DEFAULT_MAX_ITERS,
                     tie_tol: float = TIE_TOL):
    """Max-only value iteration for a kernel with a single pitcher "action"."""
    if k_one.n_pitcher != 1:
        raise ValueError("solve_one_player needs a one-player kernel (single pitcher action)")
    V, rep = value_iteration(k_one, tol, max_iters)
    rep.method = "one-player-vi"
    runner, _ = extract_equilibrium_policies(V, k_one, tie_tol)
    return V, runner, rep


def solve(k: TransitionKernel, method: str = "vi", tol: float = DEFAULT_TOL,
          max_iters: int = DEFAULT_MAX_ITERS) -> Solution:
    """Solve any kernel and package the result."""
    if method == "vi":
        V, rep = value_iteration(k, tol, max_iters)
        runner, pitcher = extract_equilibrium_policies(V, k)
    elif method == "pi":
        V, runner, pitcher, rep = policy_iteration(k, tol, max_iters=min(max_iters, 1000))
    else:
        raise ValueError(f"unknown method {method!r}")
    if k.n_pitcher == 1:
        pitcher = None
    return Solution(V, runner, pitcher, rep, dict(k.metadata, mode=k.mode))


# -- brute force ---------------------------------------------------------------


def brute_force_maximin(k: TransitionKernel, max_pairs: int = 5_000_000) -> np.ndarray:
    """State-wise ``max_pi_R min_pi_P V^{pi_R, pi_P}`` by exhaustive enumeration.

    Only the pitcher's choices at the lead each runner policy actually uses
    can change the value, so for each runner policy the enumeration runs
    over ``P**k`` pitcher decisions on that path; the result equals the
    enumeration over full pitcher policies.  Meant for small games.
    """
    k.require_solvable()
    n, K, L, P = k.n_states, len(k.agency), k.n_leads, k.n_pitcher
    if L ** K * P ** K > max_pairs:
        raise ValueError("game too large for exhaustive enumeration")
    keep = np.ones(n, bool)
    keep[k.terminal] = False
    idx = np.flatnonzero(keep)
    rows, rew = k.action_rows()
    base = k.base.toarray()
    base_r = k.base_reward
    paths = np.array(list(itertools.product(range(P), repeat=K)), dtype=np.intp).reshape(-1, K)
    agent = np.arange(K)[None, :]
    mats = np.broadcast_to(base, (len(paths), n, n)).copy()
    r = np.broadcast_to(base_r, (len(paths), n)).copy()
    best = np.full(n, -np.inf)
    for lead_idx in itertools.product(range(L), repeat=K):
        lead = np.array(lead_idx, dtype=np.intp)[None, :]
        mats[:, k.agency] = rows[agent, lead, paths]
        r[:, k.agency] = rew[agent, lead, paths]
        A = np.eye(len(idx)) - mats[:, idx][:, :, idx]
        vals = np.linalg.solve(A, r[:, idx, None])[..., 0]
        full = np.zeros((len(paths), n))
        full[:, idx] = vals
        best = np.maximum(best, full.min(axis=0))
    best[k.terminal] = 0.0
    return best


# -- persistence ---------------------------------------------------------------


def _rle(seq):
    out = []
    for x in seq:
        if out and out[-1][0] == x:
            out[-1][1] += 1
        else:
            out.append([x, 1])
    return out


def _unrle(runs):
    return [x for x, n in runs for _ in range(n)]


def _action_name(a):
    return a.name if hasattr(a, "name") else str(a)


def solution_to_dict(sol: Solution, include_time: bool = True) -> dict:
    states = st.enumerate_states() if len(sol.values) == st.N_STATES else None
    agency = sol.runner.agency
    per_state = []
    pos = {int(s): i for i, s in enumerate(agency)}
    for s, v in enumerate(sol.values):
        entry = {"state": s, "value": float(v)}
        if states is not None:
            entry["label"] = repr(states[s])
        if s in pos:
            i = pos[s]
            entry["lead"] = float(sol.runner.leads[sol.runner.lead_idx[i]])
            entry["lead_idx"] = int(sol.runner.lead_idx[i])
            if sol.pitcher is not None:
                names = [_action_name(sol.pitcher.actions[a]) for a in sol.pitcher.action_idx[i]]
                entry["pitcher"] = _rle(names)
        per_state.append(entry)
    return {
        "format": SOLUTION_FORMAT,
        "version": 1,
        "state_order": st.state_order_hash(),
        "kernel": sol.kernel_meta,
        "leads": [float(x) for x in sol.runner.leads],
        "agency": [int(s) for s in agency],
        "pitcher_actions": None if sol.pitcher is None else [_action_name(a) for a in sol.pitcher.actions],
        "states": per_state,
        "report": sol.report.to_dict(include_time),
    }


def solution_from_dict(doc: dict) -> Solution:
    if doc.get("format") != SOLUTION_FORMAT:
        raise ValueError("not a solution file")
    values = np.array([e["value"] for e in doc["states"]])
    agency = np.array(doc["agency"], dtype=np.intp)
    leads = np.array(doc["leads"])
    by_state = {e["state"]: e for e in doc["states"]}
    lead_idx = np.array([by_state[s]["lead_idx"] for s in agency], dtype=np.intp)
    runner = RunnerPolicy(lead_idx, leads, agency)
    pitcher = None
    if doc.get("pitcher_actions"):
        names = doc["pitcher_actions"]
        acts = tuple(st.PitcherAction[a] if a in st.PitcherAction.__members__ else a for a in names)
        idx = np.array([[names.index(a) for a in _unrle(by_state[s]["pitcher"])] for s in agency], dtype=np.intp)
        pitcher = PitcherPolicy(idx, acts)
    r = doc["report"]
    rep = SolveReport(
        method=r["method"], iterations=r["iterations"], residual=r["residual"],
        converged=r["converged"], history=np.array(r["history"]),
        rate=float("nan") if r["rate"] is None else r["rate"],
        error_bound=float("inf") if r["error_bound"] is None else r["error_bound"],
        halting_m=r["halting"]["m"], halting_rho=r["halting"]["rho"],
        wall_time=r.get("wall_time", 0.0), extra=r.get("extra", {}),
    )
    return Solution(values, runner, pitcher, rep, doc.get("kernel", {}))


def save_solution(sol: Solution, path, include_time: bool = True) -> None:
    with open(path, "w") as fh:
        json.dump(solution_to_dict(sol, include_time), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_solution(path) -> Solution:
    with open(path) as fh:
        return solution_from_dict(json.load(fh))


__all__ = [
    "InvalidKernelError", "NonConvergenceError", "InvariantError",
    "RunnerPolicy", "PitcherPolicy", "SolveReport", "Solution",
    "bellman_maximin_update", "value_iteration", "extract_equilibrium_policies",
    "pitcher_best_response", "policy_iteration", "evaluate_policy_pair", "evaluate_mixed",
    "solve_one_player", "solve", "brute_force_maximin",
    "save_solution", "load_solution", "solution_to_dict", "solution_from_dict",
]
