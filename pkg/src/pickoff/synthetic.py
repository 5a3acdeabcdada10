"""A synthetic baseball world with known transition probabilities.

Real lead-distance data are not public, so end-to-end tests run on play
logs drawn from this world.  The world has:

* a pitch-level plate-appearance model (ball, strike, foul, ball in play)
  whose probabilities depend on the count;
* simple base-running rules for balls in play (double plays, sacrifice
  flies, runners taking extra bases on hits);
* the runner game at (1,0,0): the outcome models of a :class:`ModelSet`
  decide pickoffs and steals, with the pickoff attempt drawn at the modelled
  rate and the lead drawn around a behavioural mean that grows with ``d``.

:func:`world_rows` gives the exact ``P(s' | s)`` for states without agency
and ``P(s' | s, r)`` at agency states, so the ground-truth kernel is exact
rather than estimated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional

import numpy as np

from . import outcomes as om
from . import states as st
from .builder import assemble_from_rows
from .kernel import TransitionKernel
from .plays import PlayLog
from .states import Penultimate, Play, RunnerOutcome

BLOCK_INNINGS = 4096


@dataclass(frozen=True)
class WorldRules:
    """Pitch and ball-in-play probabilities of the synthetic world."""

    ball: float = 0.37
    strike: float = 0.28
    foul: float = 0.17
    in_play: float = 0.18
    # in-play outcome mix: out, single, double, triple, home run
    bip: tuple = (0.66, 0.23, 0.065, 0.005, 0.04)
    double_play: float = 0.25  # on an out with a runner on first and < 2 outs
    sac_fly: float = 0.35  # runner on third scores on an out with < 2 outs
    # runner on second on a single: scores, thrown out at home, holds at third
    single_from_second: tuple = (0.55, 0.05, 0.40)
    double_from_first_scores: float = 0.40
    steal_pitch_ball: float = 0.40  # the pitch on a steal attempt is a ball

    def __post_init__(self):
        for name, vals in (
            ("pitch", (self.ball, self.strike, self.foul, self.in_play)),
            ("bip", self.bip),
            ("single_from_second", self.single_from_second),
        ):
            if min(vals) < 0 or abs(sum(vals) - 1.0) > 1e-12:
                raise ValueError(f"{name} probabilities must be non-negative and sum to 1")

    def pitch_probs(self, balls: int, strikes: int):
        """(ball, strike, foul, in play) at a count.

        Pitchers throw more strikes when behind; hitters protect with two
        strikes, turning strikes into fouls.
        """
        ball, strike, foul, bip = self.ball, self.strike, self.foul, self.in_play
        shift = 0.03 * (balls - strikes)
        ball -= shift
        strike += shift
        if strikes == 2:
            foul += 0.06
            strike -= 0.06
        return np.array([ball, strike, foul, bip])


DEFAULT_RULES = WorldRules()


def _state(bases, count, d, outs, runs):
    """Play state, or the penultimate state once three outs are recorded."""
    if outs >= 3:
        return Penultimate(min(runs, 3))
    return Play(st.BaseState(*bases), st.Count(*count), d, outs)


def _new_pa(bases, outs, runs):
    return _state(bases, (0, 0), 0, outs, runs)


def _walk(bases):
    b1, b2, b3 = bases
    runs = int(b1 and b2 and b3)
    return (1, int(b2 or b1), int(b3 or (b1 and b2))), runs


def _in_play(bases, outs, rules: WorldRules):
    """Distribution of plate-appearance endings on a ball in play."""
    b1, b2, b3 = bases
    p_out, p1, p2, p3, phr = rules.bip
    out = []
    # outs
    if outs < 2 and b1:
        out.append((p_out * rules.double_play, _new_pa((0, b2, b3), outs + 2, 0)))
        p_single_out = p_out * (1 - rules.double_play)
    else:
        p_single_out = p_out
    if outs < 2 and b3:
        out.append((p_single_out * rules.sac_fly, _new_pa((b1, b2, 0), outs + 1, 1)))
        out.append((p_single_out * (1 - rules.sac_fly), _new_pa(bases, outs + 1, 0)))
    else:
        out.append((p_single_out, _new_pa(bases, outs + 1, 0)))
    # single: batter to first, runner on first to second, runner on third scores
    if b2:
        score, thrown, hold = rules.single_from_second
        out.append((p1 * score, _new_pa((1, b1, 0), outs, b3 + 1)))
        out.append((p1 * thrown, _new_pa((1, b1, 0), outs + 1, b3)))
        out.append((p1 * hold, _new_pa((1, b1, 1), outs, b3)))
    else:
        out.append((p1, _new_pa((1, b1, 0), outs, b3)))
    # double
    if b1:
        q = rules.double_from_first_scores
        out.append((p2 * q, _new_pa((0, 1, 0), outs, b2 + b3 + 1)))
        out.append((p2 * (1 - q), _new_pa((0, 1, 1), outs, b2 + b3)))
    else:
        out.append((p2, _new_pa((0, 1, 0), outs, b2 + b3)))
    out.append((p3, _new_pa((0, 0, 1), outs, b1 + b2 + b3)))
    out.append((phr, _new_pa((0, 0, 0), outs, b1 + b2 + b3 + 1)))
    return out


def _pitch(s: Play, rules: WorldRules):
    """Successor distribution of an ordinary pitch with no runner event."""
    bases, (balls, strikes), d, o = tuple(s.bases), tuple(s.count), s.disengagements, s.outs
    pb, ps, pf, pip = rules.pitch_probs(balls, strikes)
    out = []
    if balls == 3:
        nb, runs = _walk(bases)
        out.append((pb, _new_pa(nb, o, runs)))
    else:
        out.append((pb, _state(bases, (balls + 1, strikes), d, o, 0)))
    if strikes == 2:
        out.append((ps, _new_pa(bases, o + 1, 0)))
        out.append((pf, _state(bases, (balls, strikes), d, o, 0)))
    else:
        out.append((ps + pf, _state(bases, (balls, strikes + 1), d, o, 0)))
    out += [(pip * p, t) for p, t in _in_play(bases, o, rules)]
    return out


def _steal_pitch(bases, count, d, outs, rules: WorldRules):
    """The pitch thrown during a steal: a ball or a strike, never contact."""
    balls, strikes = count
    pb = rules.steal_pitch_ball
    out = []
    if balls == 3:
        nb, runs = _walk(bases)
        out.append((pb, _new_pa(nb, outs, runs)))
    else:
        out.append((pb, _state(bases, (balls + 1, strikes), d, outs, 0)))
    if strikes == 2:
        out.append((1 - pb, _new_pa(bases, outs + 1, 0)))
    else:
        out.append((1 - pb, _state(bases, (balls, strikes + 1), d, outs, 0)))
    return out


def _runner_event(s: Play, r: RunnerOutcome, rules: WorldRules):
    c, d, o = tuple(s.count), s.disengagements, s.outs
    if r == RunnerOutcome.PICKOFF_SUCCESS:
        return [(1.0, _state((0, 0, 0), c, min(d + 1, 2), o + 1, 0))]
    if r == RunnerOutcome.PICKOFF_FAIL:
        if d == 2:
            return [(1.0, Play(st.BaseState(0, 1, 0), s.count, 0, o))]
        return [(1.0, Play(s.bases, s.count, d + 1, o))]
    if r == RunnerOutcome.STEAL_SUCCESS:
        return _steal_pitch((0, 1, 0), c, 0, o, rules)
    if r == RunnerOutcome.STEAL_FAIL:
        if o == 2:
            return [(1.0, Penultimate(0))]
        return _steal_pitch((0, 0, 0), c, d, o + 1, rules)
    return _pitch(s, rules)


def _dense(pairs):
    row = np.zeros(st.N_STATES)
    for p, t in pairs:
        row[st.index(t)] += p
    return row


@lru_cache(maxsize=8)
def world_rows(rules: WorldRules = DEFAULT_RULES):
    """Exact rows of the world: ``(base (n, n), comps (108, 5, n))``.

    ``base`` holds states without agency (penultimate and terminal rows
    included); ``comps[i, r]`` is ``P(s' | s, r)`` at the ``i``-th agency state.
    """
    n = st.N_STATES
    base = np.zeros((n, n))
    agency = st.agency_indices()
    comps = np.zeros((len(agency), 5, n))
    pos = {int(s): i for i, s in enumerate(agency)}
    for i, s in enumerate(st.enumerate_states()):
        if isinstance(s, Play):
            if i in pos:
                for r in RunnerOutcome:
                    comps[pos[i], r] = _dense(_runner_event(s, r, rules))
            else:
                base[i] = _dense(_pitch(s, rules))
        else:
            base[i, st.TERMINAL_INDEX] = 1.0
    base.setflags(write=False)
    comps.setflags(write=False)
    return base, comps


def ground_truth_kernel(ms: om.ModelSet, mode="two-player", grid=st.DEFAULT_GRID,
                        rules: WorldRules = DEFAULT_RULES, ctx=None) -> TransitionKernel:
    base, comps = world_rows(rules)
    return assemble_from_rows(base, comps, ms, ctx, grid, mode, {"source": "synthetic-world"})


# -- fixture coefficients ----------------------------------------------


def synthetic_model_set() -> om.ModelSet:
    """The shipped fixture: pickoff attempts fall with each disengagement."""
    text = resources.files("pickoff.data").joinpath("synthetic_coeffs.json").read_text()
    return om.ModelSet.from_dict(json.loads(text))


# -- generator -------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorConfig:
    """Settings for :func:`generate_synthetic_plays`.

    Leads are drawn per play from a normal around ``lead_mean[d]`` with
    standard deviation ``lead_sd`` and rounded to the grid.  The pitcher
    attempts a pickoff at the modelled rate at that lead; steals and
    pickoff successes follow the same models.
    """

    innings: int = 100_000
    seed: int = 0
    model_set: Optional[om.ModelSet] = None
    rules: WorldRules = DEFAULT_RULES
    lead_mean: tuple = (8.0, 8.8, 9.6)
    lead_sd: float = 1.0
    grid: st.LeadGrid = st.DEFAULT_GRID
    ctx: om.PlayContext = field(default_factory=om.PlayContext)
    max_plays: int = 10_000

    def __post_init__(self):
        if self.innings < 1:
            raise ValueError("innings must be positive")
        if len(self.lead_mean) != 3 or self.lead_sd < 0:
            raise ValueError("lead_mean needs one value per disengagement count")

    @property
    def models(self) -> om.ModelSet:
        return self.model_set if self.model_set is not None else synthetic_model_set()


def behavioural_lead_index(cfg: GeneratorConfig) -> np.ndarray:
    """Grid index of the mean behavioural lead at each agency state."""
    agency = st.agency_indices()
    return np.array(
        [cfg.grid.index_of(cfg.lead_mean[st.state_of(s).disengagements]) for s in agency]
    )


def _sampling_tables(rows):
    """Padded successor / cumulative-probability tables for fast sampling."""
    rows = np.asarray(rows)
    width = max(1, int((rows > 0).sum(axis=1).max()))
    succ = np.zeros((len(rows), width), dtype=np.int64)
    cdf = np.ones((len(rows), width))
    for i, row in enumerate(rows):
        nz = np.flatnonzero(row)
        if len(nz) == 0:
            continue
        succ[i, : len(nz)] = nz
        succ[i, len(nz):] = nz[-1]
        c = np.cumsum(row[nz])
        cdf[i, : len(nz)] = c / c[-1]
    return succ, cdf


def sample_rows(succ, cdf, keys, u):
    """Draw one successor per key using uniforms ``u``."""
    j = (cdf[keys] < u[:, None]).sum(axis=1)
    j = np.minimum(j, succ.shape[1] - 1)
    return succ[keys, j]


def generate_synthetic_plays(cfg: GeneratorConfig) -> PlayLog:
    """Simulate ``cfg.innings`` innings and return their plays in game order.

    Innings are processed in fixed blocks of 4096; block ``j`` draws from
    ``SeedSequence(seed).spawn``'s ``j``-th Philox stream, so the corpus
    depends only on the seed and inning count.
    """
    ms = cfg.models
    base, comps = world_rows(cfg.rules)
    agency = st.agency_indices()
    pos = np.full(st.N_STATES, -1)
    pos[agency] = np.arange(len(agency))
    # keys: 5 * state + outcome (outcome 4 for states without agency)
    keyed = np.zeros((st.N_STATES * 5, st.N_STATES))
    keyed[4::5] = base
    for i, s in enumerate(agency):
        keyed[5 * s: 5 * s + 5] = comps[i]
    succ, cdf = _sampling_tables(keyed)

    leads = cfg.grid.values
    outcome_cdf = np.empty((len(agency), len(leads), 5))
    for i, s in enumerate(agency):
        p = st.state_of(s)
        ctx = cfg.ctx.at(p.count.balls, p.count.strikes, p.outs, p.disengagements)
        outcome_cdf[i] = np.cumsum(om.outcome_distribution_one_player(ms, ctx, leads), axis=1)
    mean_lead = np.array([cfg.lead_mean[st.state_of(s).disengagements] for s in agency])

    n_blocks = -(-cfg.innings // BLOCK_INNINGS)
    seeds = np.random.SeedSequence(cfg.seed).spawn(n_blocks)
    parts = []
    for j in range(n_blocks):
        n = min(BLOCK_INNINGS, cfg.innings - j * BLOCK_INNINGS)
        rng = np.random.Generator(np.random.Philox(seeds[j]))
        parts.append(_generate_block(n, j * BLOCK_INNINGS, rng, cfg, succ, cdf, pos, outcome_cdf, mean_lead))
    cols = [np.concatenate([p[k] for p in parts]) for k in range(6)]
    inning, step, pre, post, outcome, lead = cols
    order = np.lexsort((step, inning))
    n = len(order)
    sprint = cfg.ctx.sprint_speed or ms.covariate_means.get("sprint_speed")
    arm = cfg.ctx.arm_strength or ms.covariate_means.get("arm_strength")
    outcome = outcome[order]
    pickoff = np.where(outcome < 0, -1, outcome <= RunnerOutcome.PICKOFF_FAIL)
    return PlayLog(
        pre[order], post[order], outcome, lead[order], pickoff,
        np.full(n, cfg.ctx.runner_id or "", dtype=object),
        np.full(n, cfg.ctx.pitcher_id or "", dtype=object),
        np.full(n, cfg.ctx.catcher_id or "", dtype=object),
        np.full(n, np.nan if sprint is None else float(sprint)),
        np.full(n, np.nan if arm is None else float(arm)),
    )


def _generate_block(n, offset, rng, cfg, succ, cdf, pos, outcome_cdf, mean_lead):
    start = st.index(st.play((0, 0, 0), (0, 0)))
    inning = np.arange(offset, offset + n)
    s = np.full(n, start)
    out = {k: [] for k in ("inning", "step", "pre", "post", "outcome", "lead")}
    grid = cfg.grid
    for step in range(cfg.max_plays):
        if len(s) == 0:
            break
        i = pos[s]
        ag = i >= 0
        r = np.full(len(s), 4)
        lead = np.full(len(s), np.nan)
        if ag.any():
            z = rng.standard_normal(ag.sum())
            want = mean_lead[i[ag]] + cfg.lead_sd * z
            li = np.clip(np.rint((want - grid.lo) / grid.step), 0, len(grid) - 1).astype(np.int64)
            u = rng.random(ag.sum())
            r[ag] = (outcome_cdf[i[ag], li] < u[:, None]).sum(axis=1).clip(max=4)
            lead[ag] = grid.values[li]
        nxt = sample_rows(succ, cdf, 5 * s + r, rng.random(len(s)))
        out["inning"].append(inning)
        out["step"].append(np.full(len(s), step))
        out["pre"].append(s)
        out["post"].append(nxt)
        out["outcome"].append(np.where(ag, r, -1))
        out["lead"].append(lead)
        live = nxt < st.PENULTIMATE_OFFSET
        s, inning = nxt[live], inning[live]
    return tuple(np.concatenate(out[k]) for k in ("inning", "step", "pre", "post", "outcome", "lead"))
