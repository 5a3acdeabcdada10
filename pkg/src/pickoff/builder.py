"""Pooled transition frequencies and kernel assembly.

Agency states (a lone runner on first) decompose their transition through
the runner outcome ``r``: the outcome models give ``P(r | s, a_R, a_P)`` and
an empirical table ``Q`` gives ``P(s' | s, r)``.  ``Q`` pools plays across
the starting disengagement count ``d``, so a play is summarized by its
reduced successor (bases, count, outs, or the runs on an inning-ending
play) together with the kind of change to ``d``:

``KEEP``
    ``d' = d`` (balls, strikes, fouls, caught stealing).
``INC``
    ``d' = d + 1`` (a pickoff attempt; capped at 2, see below).
``RESET``
    ``d' = 0`` (the plate appearance ended or a runner advanced).

Reconstructing ``d'`` from the kind of change, rather than from the raw
difference ``d' - d``, keeps pooled rows inside the state space.  The one
transition that cannot be pooled is a failed pickoff at ``d = 2``: the
runner is awarded second base, so those plays are excluded from ``Q`` and
the successor is fixed to ``((0,1,0), c, 0, o)``.

States without agency use the empirical next-state frequencies of the full
state directly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import outcomes as om
from . import states as st
from .kernel import TransitionKernel
from .plays import AGENCY_B, FIELDS, RUNNERS, PlayLog, play_index
from .states import PitcherAction, RunnerOutcome

log = logging.getLogger(__name__)

KEEP, INC, RESET = 0, 1, 2
CHANGE_NAMES = ("KEEP", "INC", "RESET")
N_REDUCED = 292  # 288 (bases, count, outs) + 4 penultimate
N_OUTCOMES = 5
TWO_PLAYER_ACTIONS = (PitcherAction.PITCH, PitcherAction.PICKOFF)

# columns of the transition code table
_NB, _DB, _DS, _NEWPA, _DO, _CLS, _PEN = range(7)


class AssemblyError(RuntimeError):
    """An empty frequency cell had no usable fallback."""


def reduced_index(b_idx, balls, strikes, outs):
    return ((np.asarray(b_idx) * 4 + balls) * 3 + strikes) * 3 + outs


def reduced_of(s) -> int:
    """Reduced index of a play or penultimate state (``d`` dropped)."""
    if isinstance(s, st.Penultimate):
        return 288 + s.runs
    if not isinstance(s, st.Play):
        raise TypeError(f"no reduced index for {s!r}")
    b = s.bases.b1 * 4 + s.bases.b2 * 2 + s.bases.b3
    return int(reduced_index(b, s.count.balls, s.count.strikes, s.outs))


def classify_change(pre_idx, post_idx, outcome):
    """Kind of disengagement change for each play (vectorized).

    Inning-ending plays are labelled ``KEEP``; their ``d`` is irrelevant.
    """
    pre = FIELDS[pre_idx]
    post = FIELDS[post_idx]
    is_pen = np.asarray(post_idx) >= st.PENULTIMATE_OFFSET
    d0, d1 = pre[:, 3], post[:, 3]
    outcome = np.asarray(outcome)
    pickoff = (outcome == RunnerOutcome.PICKOFF_SUCCESS) | (outcome == RunnerOutcome.PICKOFF_FAIL)
    new_pa = (post[:, 1] == 0) & (post[:, 2] == 0) & (d1 == 0)
    advanced = (post[:, 0] != pre[:, 0]) & (post[:, 4] == pre[:, 4])
    reset = (d1 == 0) & ((d0 > 0) | new_pa | advanced)
    cls = np.where(pickoff, np.where(d1 == 0, RESET, INC), np.where(reset, RESET, KEEP))
    return np.where(is_pen, KEEP, cls)


def encode_transitions(pre_idx, post_idx, outcome):
    """Relative description of each play, independent of the source ``d``.

    Columns: next bases, ball and strike increments, new-plate-appearance
    flag, outs added, kind of ``d`` change, and runs for inning-ending
    plays (-1 otherwise).  Applying a code to its own source state gives
    back the observed successor.
    """
    pre = FIELDS[pre_idx]
    post = FIELDS[post_idx]
    post_idx = np.asarray(post_idx)
    is_pen = post_idx >= st.PENULTIMATE_OFFSET
    n = len(pre)
    code = np.zeros((n, 7), dtype=np.int64)
    new_pa = (post[:, 1] == 0) & (post[:, 2] == 0) & (post[:, 3] == 0)
    code[:, _NB] = np.where(is_pen, 0, post[:, 0])
    code[:, _NEWPA] = np.where(is_pen, 0, new_pa)
    code[:, _DB] = np.where(is_pen | new_pa, 0, post[:, 1] - pre[:, 1])
    code[:, _DS] = np.where(is_pen | new_pa, 0, post[:, 2] - pre[:, 2])
    code[:, _DO] = np.where(is_pen, 3 - pre[:, 4], post[:, 4] - pre[:, 4])
    code[:, _CLS] = classify_change(pre_idx, post_idx, outcome)
    code[:, _PEN] = np.where(is_pen, post_idx - st.PENULTIMATE_OFFSET, -1)
    return code


def apply_codes(codes, b, balls, strikes, d, outs):
    """Successor index of each code applied at a play state; -1 if invalid.

    A code is invalid at the target when the count or outs it implies fall
    outside the state space or the implied runs are inadmissible.  Also
    returns a mask of codes whose ``INC`` was capped at ``d = 2``.
    """
    codes = np.asarray(codes).reshape(-1, 7)
    pen = codes[:, _PEN]
    o2 = outs + codes[:, _DO]
    nb1 = np.where(codes[:, _NEWPA] == 1, 0, balls + codes[:, _DB])
    ns1 = np.where(codes[:, _NEWPA] == 1, 0, strikes + codes[:, _DS])
    cls = codes[:, _CLS]
    d2 = np.select([cls == KEEP, cls == INC], [d, min(d + 1, 2)], 0)
    capped = (cls == INC) & (d == 2) & (pen < 0)
    ok = (o2 <= 2) & (nb1 >= 0) & (nb1 <= 3) & (ns1 >= 0) & (ns1 <= 2)
    nxt = play_index(codes[:, _NB], np.clip(nb1, 0, 3), np.clip(ns1, 0, 2), d2, np.clip(o2, 0, 2))
    # runs for play successors follow the offensive-player count
    new_pa = (nb1 == 0) & (ns1 == 0) & (d2 == 0)
    runs = RUNNERS[b] + outs - RUNNERS[codes[:, _NB]] - o2 + new_pa
    ok &= (runs >= 0) & (runs <= st.MAX_RUNS_PER_PLAY)
    out = np.where(ok, nxt, -1)
    out = np.where(pen >= 0, np.where(o2 >= 3, st.PENULTIMATE_OFFSET + pen, -1), out)
    return out, capped & (out >= 0)


@dataclass
class _CodeCounts:
    codes: np.ndarray  # (K, 7) distinct transition codes
    agency: np.ndarray  # (12 counts, 3 outs, 5 outcomes, K) at bases (1,0,0)
    no_agency: np.ndarray  # (8 bases, 12 counts, 3 d, 3 outs, K)


class PooledFrequencyTable:
    """Empirical ``Q`` plus the full-state table for states without agency.

    Built by :func:`estimate_pooled_frequencies`.  The agency part is keyed
    by ``(reduced state, runner outcome)`` and pools over ``d``; the
    no-agency part is keyed by the full state.
    """

    def __init__(self, counts: _CodeCounts, n_plays: int, n_excluded: int = 0):
        self._c = counts
        self.n_plays = n_plays
        self.n_excluded = n_excluded

    @property
    def codes(self) -> np.ndarray:
        return self._c.codes

    # -- the Q table proper -------------------------------------------

    def _agency_counts(self, s_red: int, r: int) -> np.ndarray:
        b, balls, strikes, o = _unreduce(s_red)
        if b != AGENCY_B:
            raise KeyError(f"reduced state {s_red} has no runner-on-first agency")
        return self._c.agency[balls * 3 + strikes, o, int(r)]

    def count(self, s_red: int, r) -> int:
        return int(self._agency_counts(s_red, r).sum())

    def is_empty(self, s_red: int, r) -> bool:
        return self.count(s_red, r) == 0

    def distribution(self, s_red: int, r) -> Optional[dict]:
        """``{(reduced next, change kind): frequency}``; None if the cell is empty."""
        cnt = self._agency_counts(s_red, r)
        total = cnt.sum()
        if total == 0:
            return None
        b, balls, strikes, o = _unreduce(s_red)
        out = {}
        for j in np.flatnonzero(cnt):
            key = _reduced_successor(self.codes[j], balls, strikes, o)
            out[key] = out.get(key, 0.0) + cnt[j] / total
        return out

    def e_distribution(self, s_red: int, r, d: int) -> Optional[dict]:
        """Distribution over ``(reduced next, e = d' - d)`` at starting ``d``."""
        dist = self.distribution(s_red, r)
        if dist is None:
            return None
        out = {}
        for (nxt, cls), p in dist.items():
            if nxt >= 288:
                e = 0
            else:
                e = {KEEP: 0, INC: min(d + 1, 2) - d, RESET: -d}[cls]
            out[(nxt, e)] = out.get((nxt, e), 0.0) + p
        return out

    def no_agency_count(self, s: int) -> int:
        return int(self._no_agency_counts(s).sum())

    def _no_agency_counts(self, s: int) -> np.ndarray:
        b, balls, strikes, d, o = FIELDS[s]
        return self._c.no_agency[b, balls * 3 + strikes, d, o]

    # -- successor rows with fallbacks --------------------------------

    def _row_from_counts(self, cnt, target, n_states):
        b, balls, strikes, d, o = target
        nz = np.flatnonzero(cnt)
        if len(nz) == 0:
            return None, 0
        succ, capped = apply_codes(self.codes[nz], b, balls, strikes, d, o)
        w = cnt[nz].astype(float)
        keep = succ >= 0
        if not keep.any():
            return None, 0
        row = np.bincount(succ[keep], weights=w[keep], minlength=n_states)
        return row / row.sum(), int(capped.sum())

    def agency_row(self, s: int, r, n_states: int = st.N_STATES, allow_deterministic=True):
        """``P(s' | s, r)`` at an agency state and the fallback level used.

        Levels: ``exact`` cell, ``pooled_count`` (over counts at the same
        outs), ``pooled_count_outs``, then ``deterministic`` for pickoff and
        steal outcomes.  Raises :class:`AssemblyError` when all fail.
        """
        target = FIELDS[s]
        b, balls, strikes, d, o = target
        r = int(r)
        ag = self._c.agency
        levels = (
            ("exact", ag[balls * 3 + strikes, o, r]),
            ("pooled_count", ag[:, o, r].sum(axis=0)),
            ("pooled_count_outs", ag[:, :, r].sum(axis=(0, 1))),
        )
        for name, cnt in levels:
            row, capped = self._row_from_counts(cnt, target, n_states)
            if row is not None:
                if capped:
                    log.debug("state %d outcome %d: %d pickoff increments capped at d=2", s, r, capped)
                return row, name
        if allow_deterministic and r != RunnerOutcome.NO_ACTION:
            row = np.zeros(n_states)
            row[deterministic_successor(st.state_of(s), RunnerOutcome(r))] = 1.0
            return row, "deterministic"
        raise AssemblyError(
            f"no data for state {st.state_of(s)!r} with runner outcome "
            f"{RunnerOutcome(r).code} and no fallback applies"
        )

    def no_agency_row(self, s: int, n_states: int = st.N_STATES, fallback=None):
        """Empirical successor row of a play state without agency.

        Levels: ``exact`` full state, ``pooled_d``, ``pooled_count``,
        ``pooled_count_outs``, then the optional ``fallback(state)`` callable
        returning a dense row.
        """
        target = FIELDS[s]
        b, balls, strikes, d, o = target
        na = self._c.no_agency
        c = balls * 3 + strikes
        levels = (
            ("exact", na[b, c, d, o]),
            ("pooled_d", na[b, c, :, o].sum(axis=0)),
            ("pooled_count", na[b, :, :, o].sum(axis=(0, 1))),
            ("pooled_count_outs", na[b].sum(axis=(0, 1, 2))),
        )
        for name, cnt in levels:
            row, _ = self._row_from_counts(cnt, target, n_states)
            if row is not None:
                return row, name
        if fallback is not None:
            row = np.asarray(fallback(st.state_of(s)), dtype=float)
            return row, "fallback"
        raise AssemblyError(f"no data for no-agency state {st.state_of(s)!r}")


def _unreduce(s_red: int):
    o = s_red % 3
    strikes = (s_red // 3) % 3
    balls = (s_red // 9) % 4
    b = s_red // 36
    return b, balls, strikes, o


def _reduced_successor(code, balls, strikes, outs):
    if code[_PEN] >= 0:
        return 288 + int(code[_PEN]), int(code[_CLS])
    if code[_NEWPA]:
        nb, ns = 0, 0
    else:
        nb, ns = balls + code[_DB], strikes + code[_DS]
    return int(reduced_index(code[_NB], nb, ns, outs + code[_DO])), int(code[_CLS])


def deterministic_successor(s: st.Play, r: RunnerOutcome):
    """Base-running consequence of a pickoff or steal outcome, all else fixed.

    Used only when no play in the corpus informs the cell.
    """
    b, c, d, o = s.bases, s.count, s.disengagements, s.outs
    if r in (RunnerOutcome.STEAL_SUCCESS, RunnerOutcome.STEAL_FAIL) and c == (0, 0) and d == 0:
        # a 0-0 count with d = 0 would read as a new plate appearance and
        # credit a phantom run, so the pitch the steal came on is a strike
        c = st.Count(0, 1)
    if r == RunnerOutcome.PICKOFF_SUCCESS:
        if o == 2:
            return st.index(st.Penultimate(0))
        return st.index(st.Play(st.EMPTY_BASES, c, min(d + 1, 2), o + 1))
    if r == RunnerOutcome.PICKOFF_FAIL:
        if d == 2:
            return st.index(third_disengagement_successor(s))
        return st.index(st.Play(b, c, d + 1, o))
    if r == RunnerOutcome.STEAL_SUCCESS:
        return st.index(st.Play(st.BaseState(0, 1, 0), c, d, o))
    if r == RunnerOutcome.STEAL_FAIL:
        if o == 2:
            return st.index(st.Penultimate(0))
        return st.index(st.Play(st.EMPTY_BASES, c, d, o + 1))
    raise ValueError("the no-action outcome has no deterministic consequence")


def third_disengagement_successor(s: st.Play) -> st.Play:
    """A failed third pickoff advances the runner; ``d`` resets, count and outs stay."""
    if not (s.has_agency and s.disengagements == 2):
        raise ValueError(f"the third-disengagement rule does not apply at {s!r}")
    return st.Play(st.BaseState(0, 1, 0), s.count, 0, s.outs)


def estimate_pooled_frequencies(plays: PlayLog) -> PooledFrequencyTable:
    """Tabulate ``Q`` and the no-agency frequencies from a play log.

    Failed pickoffs at ``d = 2`` are left out of ``Q`` because their
    successor is fixed by rule rather than estimated.
    """
    if len(plays) == 0:
        raise ValueError("no plays to tabulate")
    pre = FIELDS[plays.pre]
    agency = pre[:, 0] == AGENCY_B
    forced = agency & (plays.outcome == RunnerOutcome.PICKOFF_FAIL) & (pre[:, 3] == 2)
    use = ~forced
    codes = encode_transitions(plays.pre[use], plays.post[use], plays.outcome[use])
    # every code column lies in [-4, 11]; pack them into one integer key
    packed = ((codes + 4) * (16 ** np.arange(7))).sum(axis=1)
    keys, first, inv = np.unique(packed, return_index=True, return_inverse=True)
    uniq = codes[first]
    inv = inv.ravel()
    K = len(uniq)
    pre_u = pre[use]
    ag_u = agency[use]
    c_idx = pre_u[:, 1] * 3 + pre_u[:, 2]

    ag_key = ((c_idx[ag_u] * 3 + pre_u[ag_u, 4]) * N_OUTCOMES + plays.outcome[use][ag_u]) * K + inv[ag_u]
    ag_counts = np.bincount(ag_key, minlength=12 * 3 * N_OUTCOMES * K).reshape(12, 3, N_OUTCOMES, K)

    na = ~ag_u
    na_key = (((pre_u[na, 0] * 12 + c_idx[na]) * 3 + pre_u[na, 3]) * 3 + pre_u[na, 4]) * K + inv[na]
    na_counts = np.bincount(na_key, minlength=8 * 12 * 3 * 3 * K).reshape(8, 12, 3, 3, K)
    return PooledFrequencyTable(_CodeCounts(uniq, ag_counts, na_counts), len(plays), int(forced.sum()))


# -- assembly ----------------------------------------------------------


def _base_and_components(Q, no_agency_fallback, strict_n=False):
    """Shared pieces of both assemblies: no-agency rows and outcome rows."""
    n = st.N_STATES
    agency = st.agency_indices()
    base = np.zeros((n, n))
    levels = {}
    for s in range(st.N_PLAY_STATES):
        if FIELDS[s, 0] == AGENCY_B:
            continue
        base[s], lvl = Q.no_agency_row(s, n, no_agency_fallback)
        levels[lvl] = levels.get(lvl, 0) + 1
    base[st.PENULTIMATE_OFFSET:, st.TERMINAL_INDEX] = 1.0

    comps = np.zeros((len(agency), N_OUTCOMES, n))
    for i, s in enumerate(agency):
        state = st.state_of(s)
        for r in RunnerOutcome:
            if r == RunnerOutcome.PICKOFF_FAIL and state.disengagements == 2:
                comps[i, r, st.index(third_disengagement_successor(state))] = 1.0
                lvl = "third_disengagement"
            else:
                comps[i, r], lvl = Q.agency_row(s, r, n)
            levels[lvl] = levels.get(lvl, 0) + 1
    return base, agency, comps, levels


def _outcome_probs(ms, ctx, grid):
    """Per agency state, the four model probabilities over the grid: ``(k, 4, L)``."""
    leads = grid.values
    agency = st.agency_indices()
    out = np.empty((len(agency), 4, len(leads)))
    for i, s in enumerate(agency):
        p = st.state_of(s)
        c = ctx.at(p.count.balls, p.count.strikes, p.outs, p.disengagements)
        probs = om.outcome_probabilities(ms, c, leads)
        out[i, 0] = probs["po_attempt"]
        out[i, 1] = probs["po_success"]
        out[i, 2] = probs["sb_attempt"]
        out[i, 3] = probs["sb_success"]
    return out


def assemble_kernel(
    Q: PooledFrequencyTable,
    ms: om.ModelSet,
    ctx: Optional[om.PlayContext] = None,
    grid: st.LeadGrid = st.DEFAULT_GRID,
    mode: str = "two-player",
    no_agency_fallback: Optional[Callable] = None,
    metadata: Optional[dict] = None,
) -> TransitionKernel:
    """Assemble a two-player or one-player kernel from ``Q``.

    Two-player rows are ``sum_r P(r | s, lead, a_P) P(s' | s, r)`` with the
    pitcher's choice in the weights (index 0 = pitch, 1 = pickoff).  The
    one-player rows draw the pickoff at the modelled attempt rate instead,
    leaving a single pitcher "action".
    """
    base, agency, comps, levels = _base_and_components(Q, no_agency_fallback)
    for lvl in ("pooled_count", "pooled_count_outs", "deterministic", "fallback"):
        if levels.get(lvl):
            log.info("%d rows used the %s fallback", levels[lvl], lvl)
    meta = {"fallback_levels": dict(sorted(levels.items())), "plays": Q.n_plays}
    meta.update(metadata or {})
    return assemble_from_rows(base, comps, ms, ctx, grid, mode, meta)


def assemble_from_rows(base, comps, ms, ctx=None, grid=st.DEFAULT_GRID, mode="two-player", metadata=None):
    """Kernel from no-agency rows ``base`` and per-outcome rows ``comps``.

    ``comps[i, r]`` is ``P(s' | s, r)`` at the ``i``-th agency state; the
    outcome models supply the mixing weights.
    """
    if mode not in ("two-player", "one-player"):
        raise ValueError(f"unknown mode {mode!r}")
    ctx = ctx or om.PlayContext()
    probs = _outcome_probs(ms, ctx, grid)
    phi, phi_s, psi, psi_s = (probs[:, j] for j in range(4))
    if mode == "two-player":
        weights = np.stack(
            [om.compose_two_player(phi_s, psi, psi_s, False), om.compose_two_player(phi_s, psi, psi_s, True)],
            axis=2,
        )
        actions = TWO_PLAYER_ACTIONS
    else:
        weights = om.compose_one_player(phi, phi_s, psi, psi_s)[:, :, None, :]
        actions = (PitcherAction.NO_AGENCY,)
    meta = {
        "grid": str(grid),
        "state_order": st.state_order_hash(),
        "ignore_disengagements": ms.ignore_disengagements,
    }
    meta.update(metadata or {})
    return TransitionKernel(
        base, st.agency_indices(), comps, weights, st.reward_matrix(), st.TERMINAL_INDEX,
        mode=mode, leads=grid.values, pitcher_actions=actions, metadata=meta,
    )


def assemble_two_player_kernel(Q, ms, ctx=None, grid=st.DEFAULT_GRID, **kw) -> TransitionKernel:
    return assemble_kernel(Q, ms, ctx, grid, mode="two-player", **kw)


def assemble_one_player_kernel(Q, ms, ctx=None, grid=st.DEFAULT_GRID, **kw) -> TransitionKernel:
    return assemble_kernel(Q, ms, ctx, grid, mode="one-player", **kw)


def build_kernel(plays: PlayLog, ms, mode="two-player", ctx=None, grid=st.DEFAULT_GRID, **kw):
    """Estimate ``Q`` from ``plays`` and assemble in one call."""
    return assemble_kernel(estimate_pooled_frequencies(plays), ms, ctx, grid, mode=mode, **kw)
