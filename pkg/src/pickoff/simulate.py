"""Monte Carlo inning rollouts, an oracle independent of dynamic programming.

Rollouts run many innings in lockstep.  Innings are grouped into fixed
blocks of 65536; block ``j`` draws from the ``j``-th child of
``SeedSequence(seed)`` through a Philox generator, so results depend only
on the seed and the inning count, never on the thread count.  Per-block
sums of runs and squared runs are integers, which makes the aggregation
exact and order-independent.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from . import states as st
from .kernel import TransitionKernel
from .solver import PitcherPolicy, RunnerPolicy
from .synthetic import _sampling_tables

log = logging.getLogger(__name__)

PLAY_CAP = 10_000
BLOCK = 65_536
TRUNCATION_ALARM = 1e-6
START = st.index(st.play((0, 0, 0), (0, 0)))


@dataclass(frozen=True)
class RolloutResult:
    mean: float
    se: float
    n: int
    max_plays: int
    truncated: int

    @property
    def suspicious(self) -> bool:
        """Truncation rate above 1e-6 suggests the kernel may not halt."""
        return self.truncated > TRUNCATION_ALARM * self.n

    def covers(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.se

    def to_dict(self) -> dict:
        return asdict(self)


class _Chain:
    """Sampling tables for a fixed Markov chain with per-edge rewards."""

    def __init__(self, P, reward):
        P = P.toarray() if hasattr(P, "toarray") else np.asarray(P)
        self.succ, self.cdf = _sampling_tables(P)
        r = np.nan_to_num(np.asarray(reward, float), nan=0.0)
        self.rew = np.take_along_axis(r, self.succ, axis=1).astype(np.int64)
        if not np.allclose(np.take_along_axis(r, self.succ, axis=1), self.rew):
            raise ValueError("rollouts need integer rewards")


def policy_chain(k: TransitionKernel, runner: RunnerPolicy, pitcher: PitcherPolicy = None, pickoff_prob=None):
    """Transition matrix of ``k`` under a policy pair.

    ``pickoff_prob`` (per agency state) randomizes a two-player pitcher
    instead of ``pitcher``.
    """
    k.require_solvable()
    if pickoff_prob is not None and k.n_pitcher == 2:
        P0, _ = k.policy_matrix(runner.lead_idx, np.zeros(len(k.agency), dtype=np.intp))
        P1, _ = k.policy_matrix(runner.lead_idx, np.ones(len(k.agency), dtype=np.intp))
        w = np.zeros(k.n_states)
        w[k.agency] = pickoff_prob
        return (1 - w)[:, None] * P0.toarray() + w[:, None] * P1.toarray()
    path = pitcher.along(runner) if pitcher is not None else np.zeros(len(k.agency), dtype=np.intp)
    P, _ = k.policy_matrix(runner.lead_idx, path)
    return P.toarray()


def simulate_inning(k: TransitionKernel, runner: RunnerPolicy, pitcher: PitcherPolicy, rng,
                    start: int = START, cap: int = PLAY_CAP, return_path: bool = False):
    """Runs scored in one sampled inning (and optionally the visited states)."""
    chain = _Chain(policy_chain(k, runner, pitcher), k.reward)
    s, runs, path = start, 0, [start]
    for _ in range(cap):
        if s == k.terminal:
            break
        j = int((chain.cdf[s] < rng.random()).sum())
        j = min(j, chain.succ.shape[1] - 1)
        runs += int(chain.rew[s, j])
        s = int(chain.succ[s, j])
        path.append(s)
    return (runs, path) if return_path else runs


def _block(chain, terminal, start, n, seed_seq, cap):
    rng = np.random.Generator(np.random.Philox(seed_seq))
    s = np.full(n, start, dtype=np.int64)
    runs = np.zeros(n, dtype=np.int64)
    plays = np.zeros(n, dtype=np.int64)
    live = np.arange(n)
    for _ in range(cap):
        if len(live) == 0:
            break
        cur = s[live]
        u = rng.random(len(live))
        j = np.minimum((chain.cdf[cur] < u[:, None]).sum(axis=1), chain.succ.shape[1] - 1)
        runs[live] += chain.rew[cur, j]
        s[live] = chain.succ[cur, j]
        plays[live] += 1
        live = live[s[live] != terminal]
    return int(runs.sum()), int((runs * runs).sum()), int(plays.max(initial=0)), len(live)


def monte_carlo_chain(P, reward, terminal, n, seed=0, start=START, threads=None, cap=PLAY_CAP) -> RolloutResult:
    """Mean runs per inning of a Markov chain with transition matrix ``P``."""
    if n < 1:
        raise ValueError("n must be at least 1")
    chain = _Chain(P, reward)
    n_blocks = -(-n // BLOCK)
    seeds = np.random.SeedSequence(seed).spawn(n_blocks)
    sizes = [min(BLOCK, n - j * BLOCK) for j in range(n_blocks)]
    threads = threads or int(os.environ.get("PICKOFF_THREADS", "1"))
    args = [(chain, terminal, start, sizes[j], seeds[j], cap) for j in range(n_blocks)]
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(lambda a: _block(*a), args))
    else:
        parts = [_block(*a) for a in args]
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    mean = total / n
    var = (total_sq - total * total / n) / (n - 1) if n > 1 else 0.0
    res = RolloutResult(
        mean=mean,
        se=math.sqrt(max(var, 0.0) / n),
        n=n,
        max_plays=max(p[2] for p in parts),
        truncated=sum(p[3] for p in parts),
    )
    if res.suspicious:
        log.warning("%d of %d innings hit the %d-play cap; the kernel may not halt", res.truncated, n, cap)
    return res


def monte_carlo_value(k: TransitionKernel, runner: RunnerPolicy, pitcher: PitcherPolicy, n: int,
                      seed: int = 0, threads=None, pickoff_prob=None, cap: int = PLAY_CAP) -> RolloutResult:
    """Estimate the start-of-inning value of a policy pair from ``n`` rollouts."""
    P = policy_chain(k, runner, pitcher, pickoff_prob)
    return monte_carlo_chain(P, k.reward, k.terminal, n, seed, START if k.n_states == st.N_STATES else 0,
                             threads, cap)


def empirical_policy(plays, k: TransitionKernel):
    """Observed behaviour as a policy pair on ``k``.

    The runner takes the mean recorded lead at each agency state (nearest
    grid point); the pitcher throws over at the observed per-state rate.
    States never seen in ``plays`` use the pooled means over all agency
    plays.  Returns ``(RunnerPolicy, pickoff_prob)``.
    """
    agency = k.agency
    lead_ok = ~np.isnan(plays.lead)
    po_ok = plays.pickoff >= 0
    if not lead_ok.any():
        raise ValueError("no recorded leads in the play log")
    mean_lead = float(plays.lead[lead_ok].mean())
    mean_po = float(plays.pickoff[po_ok].mean()) if po_ok.any() else 0.0
    n = k.n_states
    lead_sum = np.bincount(plays.pre[lead_ok], plays.lead[lead_ok], minlength=n)
    lead_n = np.bincount(plays.pre[lead_ok], minlength=n)
    po_sum = np.bincount(plays.pre[po_ok], plays.pickoff[po_ok].astype(float), minlength=n)
    po_n = np.bincount(plays.pre[po_ok], minlength=n)
    leads = np.where(lead_n[agency] > 0, lead_sum[agency] / np.maximum(lead_n[agency], 1), mean_lead)
    pickoff = np.where(po_n[agency] > 0, po_sum[agency] / np.maximum(po_n[agency], 1), mean_po)
    idx = np.abs(k.leads[None, :] - leads[:, None]).argmin(axis=1)
    return RunnerPolicy(idx, k.leads, agency), pickoff
