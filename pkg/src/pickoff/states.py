"""State space, action spaces and run accounting for the pickoff game.

A play state is ``(bases, count, disengagements, outs)``.  Besides the 864
play states there are four penultimate states that remember how many runs
scored on the final play of the inning, and one absorbing terminal state.

States are indexed in a fixed canonical order: play states lexicographically
over (bases, balls, strikes, disengagements, outs), then ``Penultimate(0..3)``,
then ``TERMINAL`` at index 868.  Every file format in the package uses this
index.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
from dataclasses import dataclass
from decimal import Decimal
from functools import cached_property, lru_cache
from typing import NamedTuple, Union

import numpy as np

N_PLAY_STATES = 864
N_STATES = 869
PENULTIMATE_OFFSET = N_PLAY_STATES
TERMINAL_INDEX = N_STATES - 1
MAX_RUNS_PER_PLAY = 4


class BaseState(NamedTuple):
    b1: int
    b2: int
    b3: int


class Count(NamedTuple):
    balls: int
    strikes: int


RUNNER_ON_FIRST = BaseState(1, 0, 0)
EMPTY_BASES = BaseState(0, 0, 0)
ALL_BASES = tuple(BaseState(*b) for b in itertools.product((0, 1), repeat=3))
ALL_COUNTS = tuple(Count(b, s) for b in range(4) for s in range(3))


@dataclass(frozen=True)
class Play:
    bases: BaseState
    count: Count
    disengagements: int
    outs: int

    def __post_init__(self):
        bases = BaseState(*(int(x) for x in self.bases))
        count = Count(*(int(x) for x in self.count))
        if any(x not in (0, 1) for x in bases):
            raise ValueError(f"base flags must be 0/1, got {tuple(self.bases)}")
        if not (0 <= count.balls <= 3 and 0 <= count.strikes <= 2):
            raise ValueError(f"invalid count {tuple(self.count)}")
        if self.disengagements not in (0, 1, 2):
            raise ValueError(f"disengagements must be 0..2, got {self.disengagements}")
        if self.outs not in (0, 1, 2):
            raise ValueError(f"outs must be 0..2, got {self.outs}")
        object.__setattr__(self, "bases", bases)
        object.__setattr__(self, "count", count)

    @property
    def has_agency(self) -> bool:
        return self.bases == RUNNER_ON_FIRST


@dataclass(frozen=True)
class Penultimate:
    runs: int

    def __post_init__(self):
        if self.runs not in (0, 1, 2, 3):
            raise ValueError(f"penultimate runs must be 0..3, got {self.runs}")

    has_agency = False


class _Terminal:
    _instance = None
    has_agency = False

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TERMINAL"

    def __reduce__(self):
        return (_Terminal, ())


TERMINAL = _Terminal()

GameState = Union[Play, Penultimate, _Terminal]


def play(bases, count, disengagements: int = 0, outs: int = 0) -> Play:
    """Shorthand constructor accepting plain tuples."""
    return Play(BaseState(*bases), Count(*count), disengagements, outs)


def _play_index(p: Play) -> int:
    b = p.bases.b1 * 4 + p.bases.b2 * 2 + p.bases.b3
    return (((b * 4 + p.count.balls) * 3 + p.count.strikes) * 3 + p.disengagements) * 3 + p.outs


def enumerate_states() -> list:
    """All 869 states in canonical order, ``TERMINAL`` last."""
    return list(_STATES)


def index(s) -> int:
    if isinstance(s, Play):
        return _play_index(s)
    if isinstance(s, Penultimate):
        return PENULTIMATE_OFFSET + s.runs
    if s is TERMINAL:
        return TERMINAL_INDEX
    raise TypeError(f"not a game state: {s!r}")


def state_of(i: int):
    if not 0 <= i < N_STATES:
        raise IndexError(f"state index {i} out of range")
    return _STATES[i]


def _build_states():
    states = [
        Play(b, c, d, o)
        for b in ALL_BASES
        for c in ALL_COUNTS
        for d in range(3)
        for o in range(3)
    ]
    states += [Penultimate(k) for k in range(4)]
    states.append(TERMINAL)
    return tuple(states)


_STATES = _build_states()


def state_order_hash() -> str:
    """Digest of the canonical ordering, stored in file headers."""
    text = "\n".join(repr(s) for s in _STATES)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def agency_indices() -> np.ndarray:
    """Indices of the 108 play states with only first base occupied."""
    return np.array([i for i, s in enumerate(_STATES) if s.has_agency], dtype=np.intp)


def runners_on_base(b) -> int:
    return int(b[0]) + int(b[1]) + int(b[2])


class InadmissibleTransition(ValueError):
    """Raised when a (state, next state) pair cannot occur in the game."""


def reward(s, s_next) -> int:
    """Runs scored on the transition ``s -> s_next``.

    Between play states the runs are inferred by counting offensive players
    (runners plus outs) before and after, crediting the batter when the next
    state opens a fresh plate appearance (0-0 count, no disengagements).
    """
    if s is TERMINAL:
        raise InadmissibleTransition("no transition leaves the terminal state")
    if s_next is TERMINAL:
        return 0
    if isinstance(s, Penultimate):
        raise InadmissibleTransition(f"{s!r} can only move to TERMINAL, not {s_next!r}")
    if isinstance(s_next, Penultimate):
        return s_next.runs
    new_pa = s_next.count == (0, 0) and s_next.disengagements == 0
    runs = (
        runners_on_base(s.bases) + s.outs
        - runners_on_base(s_next.bases) - s_next.outs
        + int(new_pa)
    )
    if not 0 <= runs <= MAX_RUNS_PER_PLAY:
        raise InadmissibleTransition(f"{s!r} -> {s_next!r} implies {runs} runs")
    return runs


def reward_matrix() -> np.ndarray:
    """Dense ``(869, 869)`` reward table; NaN marks inadmissible pairs.

    ``TERMINAL -> TERMINAL`` is 0 so the absorbing self-loop can be scored.
    Returns a fresh copy of a cached table.
    """
    return _reward_table().copy()


@lru_cache(maxsize=1)
def _reward_table() -> np.ndarray:
    plays = _STATES[:N_PLAY_STATES]
    g_o = np.array([runners_on_base(p.bases) + p.outs for p in plays])
    new_pa = np.array([p.count == (0, 0) and p.disengagements == 0 for p in plays])
    out = np.full((N_STATES, N_STATES), np.nan)
    runs = g_o[:, None] - g_o[None, :] + new_pa[None, :]
    runs = np.where((runs >= 0) & (runs <= MAX_RUNS_PER_PLAY), runs, np.nan)
    out[:N_PLAY_STATES, :N_PLAY_STATES] = runs
    out[:N_PLAY_STATES, PENULTIMATE_OFFSET:TERMINAL_INDEX] = np.arange(4)
    out[:TERMINAL_INDEX + 1, TERMINAL_INDEX] = 0.0
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LeadGrid:
    """Discretized lead distances ``lo, lo+step, ..., hi`` in feet."""

    lo: float = 0.0
    hi: float = 20.0
    step: float = 0.1

    def __post_init__(self):
        if self.step <= 0 or self.hi < self.lo:
            raise ValueError(f"bad grid {self}")
        if self.lo < 0 or self.hi > 20:
            raise ValueError("lead grid must lie within [0, 20] feet")
        n = (self.hi - self.lo) / self.step
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"step {self.step} does not divide [{self.lo}, {self.hi}]")

    @cached_property
    def values(self) -> np.ndarray:
        # exact decimal multiples, rounded once, so 0.1 * 3 prints as 0.3
        lo, step = Decimal(repr(self.lo)), Decimal(repr(self.step))
        n = int(round((self.hi - self.lo) / self.step)) + 1
        vals = np.array([float(lo + k * step) for k in range(n)])
        vals.setflags(write=False)
        return vals

    def __len__(self):
        return len(self.values)

    def index_of(self, lead: float) -> int:
        """Index of the grid point nearest to ``lead``."""
        k = int(round((lead - self.lo) / self.step))
        return min(max(k, 0), len(self) - 1)

    @classmethod
    def parse(cls, text: str) -> "LeadGrid":
        lo, hi, step = (float(x) for x in text.split(":"))
        return cls(lo, hi, step)

    def __str__(self):
        return f"{self.lo:g}:{self.hi:g}:{self.step:g}"


DEFAULT_GRID = LeadGrid()


@dataclass(frozen=True)
class Lead:
    feet: float

    def __post_init__(self):
        if not 0.0 <= self.feet <= 20.0:
            raise ValueError(f"lead must lie in [0, 20] feet, got {self.feet}")


class _NoAgency:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_AGENCY"

    def __reduce__(self):
        return (_NoAgency, ())


NO_AGENCY = _NoAgency()
RunnerAction = Union[Lead, _NoAgency]


class PitcherAction(enum.Enum):
    PITCH = 0
    PICKOFF = 1
    NO_AGENCY = 2


class RunnerOutcome(enum.IntEnum):
    """Outcome of a play for the runner on first, in kernel column order."""

    PICKOFF_SUCCESS = 0
    PICKOFF_FAIL = 1
    STEAL_SUCCESS = 2
    STEAL_FAIL = 3
    NO_ACTION = 4

    @property
    def code(self) -> str:
        return _OUTCOME_CODES[self]

    @classmethod
    def from_code(cls, code: str) -> "RunnerOutcome":
        return _CODE_OUTCOMES[code]


_OUTCOME_CODES = {
    RunnerOutcome.PICKOFF_SUCCESS: "PO_SUCCESS",
    RunnerOutcome.PICKOFF_FAIL: "PO_FAIL",
    RunnerOutcome.STEAL_SUCCESS: "SB_SUCCESS",
    RunnerOutcome.STEAL_FAIL: "SB_FAIL",
    RunnerOutcome.NO_ACTION: "NONE",
}
_CODE_OUTCOMES = {v: k for k, v in _OUTCOME_CODES.items()}


def runner_actions(s, grid: LeadGrid = DEFAULT_GRID) -> tuple:
    if isinstance(s, Play) and s.has_agency:
        return tuple(Lead(float(x)) for x in grid.values)
    return (NO_AGENCY,)


def pitcher_actions(s, a_r) -> tuple:
    if isinstance(a_r, Lead):
        if not (isinstance(s, Play) and s.has_agency):
            raise ValueError(f"a lead is not a legal runner action in {s!r}")
        return (PitcherAction.PICKOFF, PitcherAction.PITCH)
    return (PitcherAction.NO_AGENCY,)
