"""Transition kernels for the runner/pitcher game.

A kernel is stored in factored form.  States without agency have a single
sparse successor row (``base``).  Each agency state ``i`` owns ``C``
component rows ``components[i, c]`` (for the baseball game, one per runner
outcome) and mixing weights ``weights[i, lead, pitcher_action, c]``, so the
successor distribution for an action pair is
``weights[i, l, a] @ components[i]``.  A generic game with arbitrary rows
is expressed with one-hot weights.

Halting (the inning ends with positive probability within ``m`` plays under
every policy pair) is checked by :func:`validate_halting`; solvers refuse
kernels that fail it.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import states as st

log = logging.getLogger(__name__)

KERNEL_FORMAT = "pickoff-kernel"
KERNEL_VERSION = 1
ROW_TOL = 1e-10
UNSOLVABLE_RHO = 1.0 - 1e-12


class InvalidKernelError(ValueError):
    """Kernel violates a structural invariant or fails the halting check."""


@dataclass(frozen=True)
class HaltingReport:
    m: int
    rho: float
    per_state: np.ndarray = field(repr=False)

    @property
    def solvable(self) -> bool:
        return self.rho < UNSOLVABLE_RHO

    def value_bound(self, max_reward: float) -> float:
        """Uniform bound ``m * max r / (1 - rho)`` on any policy value."""
        if not self.solvable:
            return float("inf")
        return self.m * max_reward / (1.0 - self.rho)

    def worst_states(self, k=5):
        order = np.argsort(-self.per_state, kind="stable")[:k]
        return [(int(i), float(self.per_state[i])) for i in order]


class TransitionKernel:
    """Factored kernel; see module docstring for the layout.

    Parameters
    ----------
    base : (n, n) sparse matrix
        Successor rows of states without agency.  Rows of agency states
        must be empty.
    agency : (k,) int array
        State indices where players choose actions.
    components : (k, C, n) array
    weights : (k, L, P, C) array
    reward : (n, n) array
        ``reward[s, s']``; NaN marks pairs that must carry no probability.
    terminal : int
        Absorbing state whose value is pinned to zero.
    """

    def __init__(
        self,
        base,
        agency,
        components,
        weights,
        reward,
        terminal,
        *,
        mode="generic",
        leads=None,
        pitcher_actions=None,
        metadata=None,
        check=True,
    ):
        self.base = sp.csr_matrix(base, dtype=float)
        self.agency = np.asarray(agency, dtype=np.intp)
        self.components = np.asarray(components, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.reward = np.asarray(reward, dtype=float)
        self.terminal = int(terminal)
        self.mode = mode
        if self.weights.ndim != 4:
            raise InvalidKernelError("weights must have shape (k, L, P, C)")
        k, L, P, C = self.weights.shape
        n = self.base.shape[0]
        if self.components.size == 0:
            self.components = self.components.reshape(k, C, n)
        self.leads = np.arange(L, dtype=float) if leads is None else np.asarray(leads, float)
        if pitcher_actions is None:
            pitcher_actions = tuple(range(P))
        self.pitcher_actions = tuple(pitcher_actions)
        self.metadata = dict(metadata or {})
        for a in (self.components, self.weights, self.reward, self.leads):
            a.setflags(write=False)
        if check:
            self._check_shapes()
            self.check_rows()

    # -- shape ---------------------------------------------------------

    @property
    def n_states(self) -> int:
        return self.base.shape[0]

    @property
    def n_leads(self) -> int:
        return self.weights.shape[1]

    @property
    def n_pitcher(self) -> int:
        return self.weights.shape[2]

    @cached_property
    def agency_pos(self) -> np.ndarray:
        """Map state index -> position in ``agency`` (or -1)."""
        pos = np.full(self.n_states, -1, dtype=np.intp)
        pos[self.agency] = np.arange(len(self.agency))
        return pos

    def has_agency(self, s: int) -> bool:
        return self.agency_pos[s] >= 0

    def _check_shapes(self):
        n = self.n_states
        k = len(self.agency)
        if self.base.shape != (n, n) or self.reward.shape != (n, n):
            raise InvalidKernelError("base and reward must be square and agree")
        if self.components.shape[0] != k or self.components.shape[2] != n:
            raise InvalidKernelError(f"components shape {self.components.shape} vs k={k}, n={n}")
        if self.weights.shape[0] != k or self.weights.shape[3] != self.components.shape[1]:
            raise InvalidKernelError("weights and components disagree")
        if len(self.leads) != self.n_leads or len(self.pitcher_actions) != self.n_pitcher:
            raise InvalidKernelError("action labels do not match weight shape")
        if not 0 <= self.terminal < n or self.has_agency(self.terminal):
            raise InvalidKernelError("terminal must be a no-agency state")
        if len(np.unique(self.agency)) != k:
            raise InvalidKernelError("duplicate agency states")

    # -- rows ----------------------------------------------------------

    def row(self, s: int, lead: int = 0, pitcher: int = 0) -> np.ndarray:
        """Dense successor distribution for state ``s`` under an action pair."""
        i = self.agency_pos[s]
        if i < 0:
            return self.base.getrow(s).toarray().ravel()
        return self.weights[i, lead, pitcher] @ self.components[i]

    def check_rows(self, tol: float = ROW_TOL):
        """Raise unless every row is a probability vector with scored support."""
        if self.base.nnz and self.base.data.min() < 0:
            raise InvalidKernelError("negative base probability")
        if np.any(self.components < 0) or np.any(self.weights < 0):
            raise InvalidKernelError("negative component probability or weight")
        sums = np.asarray(self.base.sum(axis=1)).ravel()
        no_agency = self.agency_pos < 0
        bad = np.flatnonzero(no_agency & (np.abs(sums - 1.0) > tol))
        if len(bad):
            raise InvalidKernelError(f"rows {bad[:5].tolist()} do not sum to 1")
        if np.any(sums[self.agency] != 0):
            raise InvalidKernelError("agency states must not carry base rows")
        csum = self.components.sum(axis=2)
        if np.any(np.abs(csum - 1.0) > tol):
            i, c = np.argwhere(np.abs(csum - 1.0) > tol)[0]
            raise InvalidKernelError(
                f"component {c} of state {self.agency[i]} sums to {float(csum[i, c]):.12g}"
            )
        wsum = self.weights.sum(axis=3)
        if np.any(np.abs(wsum - 1.0) > tol):
            raise InvalidKernelError("mixing weights do not sum to 1")
        t = self.terminal
        if abs(self.base[t, t] - 1.0) > tol or self.reward[t, t] != 0:
            raise InvalidKernelError("terminal state must be absorbing with zero reward")
        nan_r = np.isnan(self.reward)
        rows, cols = self.base.nonzero()
        if np.any(nan_r[rows, cols]):
            raise InvalidKernelError("probability mass on an inadmissible transition")
        comp_support = self.components > 0
        if np.any(comp_support & nan_r[self.agency][:, None, :]):
            raise InvalidKernelError("component mass on an inadmissible transition")

    # -- expectations --------------------------------------------------

    @cached_property
    def _safe_reward(self) -> np.ndarray:
        return np.nan_to_num(self.reward, nan=0.0)

    @cached_property
    def base_reward(self) -> np.ndarray:
        """Expected one-step reward of each base row."""
        b = self.base.tocoo()
        out = np.zeros(self.n_states)
        np.add.at(out, b.row, b.data * self._safe_reward[b.row, b.col])
        return out

    @cached_property
    def component_reward(self) -> np.ndarray:
        """Expected one-step reward of each component row, shape ``(k, C)``."""
        r = self._safe_reward[self.agency]
        return np.einsum("kcn,kn->kc", self.components, r)

    @property
    def max_reward(self) -> float:
        r = self.reward[~np.isnan(self.reward)]
        return float(r.max()) if r.size else 0.0

    def backup(self, values: np.ndarray, with_reward: bool = True):
        """One-step lookahead ``E[r + V(s')]``.

        Returns ``(plain, q)``: ``plain`` has the value of the base row for
        every state (meaningless at agency states) and ``q`` has shape
        ``(k, L, P)`` holding each action pair's value at agency states.
        """
        plain = self.base @ values
        comp = np.einsum("kcn,n->kc", self.components, values)
        if with_reward:
            plain = plain + self.base_reward
            comp = comp + self.component_reward
        q = self.weights @ comp[:, None, :, None]
        return plain, q[..., 0]

    def policy_matrix(self, lead_idx, pitcher_idx):
        """Sparse transition matrix and reward vector under a fixed policy pair.

        ``lead_idx[i]`` / ``pitcher_idx[i]`` give the chosen actions at the
        ``i``-th agency state.
        """
        k = len(self.agency)
        lead_idx = np.asarray(lead_idx, dtype=np.intp)
        pitcher_idx = np.asarray(pitcher_idx, dtype=np.intp)
        w = self.weights[np.arange(k), lead_idx, pitcher_idx]  # (k, C)
        rows = np.einsum("kc,kcn->kn", w, self.components)
        r = self.base_reward.copy()
        r[self.agency] = np.einsum("kc,kc->k", w, self.component_reward)
        # agency rows of ``base`` are empty, so scattering the chosen rows in
        # by a selection matrix is an exact overwrite
        select = sp.csr_matrix((np.ones(k), (self.agency, np.arange(k))), shape=(self.n_states, k))
        P = self.base + select @ sp.csr_matrix(rows)
        return P.tocsr(), r

    def action_rows(self):
        """Dense rows and expected rewards of every action pair at agency states.

        Returns ``(rows, r)`` with shapes ``(k, L, P, n)`` and ``(k, L, P)``.
        """
        rows = np.einsum("klpc,kcn->klpn", self.weights, self.components)
        r = np.einsum("klpc,kc->klp", self.weights, self.component_reward)
        return rows, r

    # -- validation ----------------------------------------------------

    @cached_property
    def halting(self) -> HaltingReport:
        # m = n decides whether any policy pair can avoid absorption forever
        return validate_halting(self, self.n_states)

    def require_solvable(self):
        rep = self.halting
        if not rep.solvable:
            raise InvalidKernelError(
                f"kernel fails the halting check (rho={rep.rho} at m={rep.m}); "
                f"worst states {rep.worst_states(3)}"
            )
        return rep


def validate_halting(kernel: TransitionKernel, m: int) -> HaltingReport:
    """Worst-case probability of the game still running after ``m`` plays.

    Runs ``rho_j(s) = max_{a_R, a_P} sum_{s' != terminal} p(s'|s, a) rho_{j-1}(s')``
    from ``rho_0 = 1`` off the terminal state.  Maximizing over both players'
    actions stage by stage covers every deterministic Markov policy pair.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    rho = np.ones(kernel.n_states)
    rho[kernel.terminal] = 0.0
    for _ in range(m):
        plain, q = kernel.backup(rho, with_reward=False)
        new = plain
        if len(kernel.agency):
            new[kernel.agency] = q.max(axis=(1, 2))
        new[kernel.terminal] = 0.0
        rho = np.minimum(new, 1.0)
    return HaltingReport(m=m, rho=float(rho.max()), per_state=rho)


# -- persistence -------------------------------------------------------


def _sparse_rows(mat: sp.csr_matrix, rows):
    out = []
    for s in rows:
        lo, hi = mat.indptr[s], mat.indptr[s + 1]
        if hi > lo:
            idx = mat.indices[lo:hi]
            order = np.argsort(idx)
            out.append([int(s), idx[order].tolist(), mat.data[lo:hi][order].tolist()])
    return out


def kernel_to_dict(k: TransitionKernel) -> dict:
    comps = []
    for i in range(len(k.agency)):
        comps.append(
            [[np.flatnonzero(c).tolist(), c[c > 0].tolist()] for c in k.components[i]]
        )
    support = k.base.toarray() > 0
    if len(k.agency):
        support[k.agency] |= k.components.sum(axis=1) > 0
    rr, cc = np.nonzero(support)
    return {
        "format": KERNEL_FORMAT,
        "version": KERNEL_VERSION,
        "mode": k.mode,
        "n_states": k.n_states,
        "terminal": k.terminal,
        "leads": k.leads.tolist(),
        "pitcher_actions": [getattr(a, "name", a) for a in k.pitcher_actions],
        "metadata": k.metadata,
        "agency": k.agency.tolist(),
        "base_rows": _sparse_rows(k.base, range(k.n_states)),
        "components": comps,
        "weights": k.weights.tolist(),
        "reward": [rr.tolist(), cc.tolist(), k.reward[rr, cc].tolist()],
    }


def kernel_from_dict(doc: dict) -> TransitionKernel:
    if doc.get("format") != KERNEL_FORMAT:
        raise InvalidKernelError("not a kernel file")
    if doc.get("version") != KERNEL_VERSION:
        raise InvalidKernelError(f"unsupported kernel version {doc.get('version')}")
    n = doc["n_states"]
    rows, cols, vals = [], [], []
    for s, idx, p in doc["base_rows"]:
        rows += [s] * len(idx)
        cols += idx
        vals += p
    base = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    agency = np.array(doc["agency"], dtype=np.intp)
    weights = np.array(doc["weights"], dtype=float)
    C = weights.shape[3] if weights.ndim == 4 else 1
    comps = np.zeros((len(agency), C, n))
    for i, per_c in enumerate(doc["components"]):
        for c, (idx, p) in enumerate(per_c):
            comps[i, c, idx] = p
    reward = np.full((n, n), np.nan)
    rr, cc, rv = doc["reward"]
    reward[rr, cc] = rv
    pitcher = tuple(
        st.PitcherAction[a] if isinstance(a, str) and a in st.PitcherAction.__members__ else a
        for a in doc["pitcher_actions"]
    )
    return TransitionKernel(
        base, agency, comps, weights, reward, doc["terminal"],
        mode=doc["mode"], leads=doc["leads"], pitcher_actions=pitcher,
        metadata=doc.get("metadata", {}),
    )


def save_kernel(k: TransitionKernel, path) -> None:
    with open(path, "w") as fh:
        json.dump(kernel_to_dict(k), fh, separators=(",", ":"), sort_keys=True)
        fh.write("\n")


def load_kernel(path) -> TransitionKernel:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvalidKernelError(f"{path}: {exc}") from None
    return kernel_from_dict(doc)


def from_dense(
    rows: np.ndarray,
    reward: np.ndarray,
    terminal: int,
    agency: Optional[np.ndarray] = None,
    **kw,
) -> TransitionKernel:
    """Kernel from explicit rows ``rows[s, lead, pitcher, s']``.

    States not listed in ``agency`` use ``rows[s, 0, 0]``.  Convenient for
    small hand-built or random games.
    """
    rows = np.asarray(rows, dtype=float)
    n, L, P, _ = rows.shape
    if agency is None:
        agency = np.array([s for s in range(n) if s != terminal], dtype=np.intp)
    agency = np.asarray(agency, dtype=np.intp)
    base = np.zeros((n, n))
    mask = np.ones(n, bool)
    mask[agency] = False
    base[mask] = rows[mask, 0, 0]
    comps = rows[agency].reshape(len(agency), L * P, n)
    weights = np.zeros((len(agency), L, P, L * P))
    for a in range(L):
        for b in range(P):
            weights[:, a, b, a * P + b] = 1.0
    return TransitionKernel(base, agency, comps, weights, reward, terminal, **kw)
