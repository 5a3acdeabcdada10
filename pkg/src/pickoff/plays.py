"""Play-by-play records: CSV schema, validation and a columnar container.

One row per play (a pitch or a pickoff attempt).  Columns::

    pre_b1 pre_b2 pre_b3 pre_balls pre_strikes pre_diseng pre_outs
    post_b1 post_b2 post_b3 post_balls post_strikes post_diseng post_outs
    inning_end runs_on_play runner_outcome lead_ft pickoff_attempt
    runner_id pitcher_id catcher_id sprint_speed arm_strength

``inning_end=1`` rows leave the ``post_*`` fields as ``NA`` and give the
runs scored on the final play in ``runs_on_play``.  ``runner_outcome`` is
one of ``PO_SUCCESS PO_FAIL SB_SUCCESS SB_FAIL NONE`` when only first base
is occupied before the play and ``NA`` otherwise; the same holds for
``lead_ft``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np
import pandas as pd

from . import states as st
from .states import RunnerOutcome

STATE_FIELDS = ("b1", "b2", "b3", "balls", "strikes", "diseng", "outs")
COLUMNS = (
    [f"pre_{f}" for f in STATE_FIELDS]
    + [f"post_{f}" for f in STATE_FIELDS]
    + [
        "inning_end", "runs_on_play", "runner_outcome", "lead_ft", "pickoff_attempt",
        "runner_id", "pitcher_id", "catcher_id", "sprint_speed", "arm_strength",
    ]
)
NA_TOKENS = ("", "NA", "na", "NaN", "nan")
OUTCOME_CODES = ("PO_SUCCESS", "PO_FAIL", "SB_SUCCESS", "SB_FAIL", "NONE")

# per-state field table: (b_idx, balls, strikes, d, outs); -1 for non-play states
FIELDS = np.full((st.N_STATES, 5), -1, dtype=np.int64)
for _i, _s in enumerate(st.enumerate_states()):
    if isinstance(_s, st.Play):
        b = _s.bases
        FIELDS[_i] = (b.b1 * 4 + b.b2 * 2 + b.b3, _s.count.balls, _s.count.strikes,
                      _s.disengagements, _s.outs)
RUNNERS = np.array([st.runners_on_base(b) for b in st.ALL_BASES])
AGENCY_B = 4  # bases index of (1, 0, 0)


class PlayDataError(ValueError):
    """Malformed play-by-play input; ``errors`` lists ``(line, message)``."""

    def __init__(self, errors):
        self.errors = list(errors)
        head = "; ".join(f"line {ln}: {msg}" for ln, msg in self.errors[:10])
        more = f" (+{len(self.errors) - 10} more)" if len(self.errors) > 10 else ""
        super().__init__(f"{len(self.errors)} invalid play rows: {head}{more}")


@dataclass(frozen=True)
class PlayRecord:
    pre: st.Play
    post: object  # Play or Penultimate
    runner_outcome: Optional[RunnerOutcome]
    lead: Optional[float]
    pickoff_attempt: Optional[bool]
    runner_id: Optional[str] = None
    pitcher_id: Optional[str] = None
    catcher_id: Optional[str] = None
    sprint_speed: Optional[float] = None
    arm_strength: Optional[float] = None

    @property
    def runs(self) -> int:
        return st.reward(self.pre, self.post)


def play_index(b_idx, balls, strikes, d, outs):
    return (((np.asarray(b_idx) * 4 + balls) * 3 + strikes) * 3 + d) * 3 + outs


class PlayLog:
    """Validated plays in game order, stored column-wise.

    ``pre`` / ``post`` hold canonical state indices (``post`` may be a
    penultimate state), ``outcome`` holds :class:`RunnerOutcome` codes or -1,
    ``pickoff`` is 1/0/-1 and missing floats are NaN.
    """

    def __init__(self, pre, post, outcome, lead, pickoff, runner_id=None,
                 pitcher_id=None, catcher_id=None, sprint_speed=None, arm_strength=None):
        n = len(pre)
        self.pre = np.asarray(pre, dtype=np.int64)
        self.post = np.asarray(post, dtype=np.int64)
        self.outcome = np.asarray(outcome, dtype=np.int64)
        self.lead = np.asarray(lead, dtype=float)
        self.pickoff = np.asarray(pickoff, dtype=np.int64)

        def ids(x):
            return np.full(n, "", dtype=object) if x is None else np.asarray(x, dtype=object)

        def floats(x):
            return np.full(n, np.nan) if x is None else np.asarray(x, dtype=float)

        self.runner_id, self.pitcher_id, self.catcher_id = ids(runner_id), ids(pitcher_id), ids(catcher_id)
        self.sprint_speed, self.arm_strength = floats(sprint_speed), floats(arm_strength)

    def __len__(self):
        return len(self.pre)

    def subset(self, mask) -> "PlayLog":
        return PlayLog(
            self.pre[mask], self.post[mask], self.outcome[mask], self.lead[mask],
            self.pickoff[mask], self.runner_id[mask], self.pitcher_id[mask],
            self.catcher_id[mask], self.sprint_speed[mask], self.arm_strength[mask],
        )

    def records(self) -> Iterator[PlayRecord]:
        states = st.enumerate_states()
        for i in range(len(self)):
            o = int(self.outcome[i])

            def opt(x):
                return None if x == "" else str(x)

            yield PlayRecord(
                pre=states[self.pre[i]],
                post=states[self.post[i]],
                runner_outcome=None if o < 0 else RunnerOutcome(o),
                lead=None if np.isnan(self.lead[i]) else float(self.lead[i]),
                pickoff_attempt=None if self.pickoff[i] < 0 else bool(self.pickoff[i]),
                runner_id=opt(self.runner_id[i]),
                pitcher_id=opt(self.pitcher_id[i]),
                catcher_id=opt(self.catcher_id[i]),
                sprint_speed=None if np.isnan(self.sprint_speed[i]) else float(self.sprint_speed[i]),
                arm_strength=None if np.isnan(self.arm_strength[i]) else float(self.arm_strength[i]),
            )

    @classmethod
    def from_records(cls, records) -> "PlayLog":
        records = list(records)
        return cls(
            [st.index(r.pre) for r in records],
            [st.index(r.post) for r in records],
            [-1 if r.runner_outcome is None else int(r.runner_outcome) for r in records],
            [np.nan if r.lead is None else r.lead for r in records],
            [-1 if r.pickoff_attempt is None else int(r.pickoff_attempt) for r in records],
            [r.runner_id or "" for r in records],
            [r.pitcher_id or "" for r in records],
            [r.catcher_id or "" for r in records],
            [np.nan if r.sprint_speed is None else r.sprint_speed for r in records],
            [np.nan if r.arm_strength is None else r.arm_strength for r in records],
        )

    def runs(self) -> np.ndarray:
        """Runs scored on each play."""
        pre = FIELDS[self.pre]
        post = FIELDS[self.post]
        is_pen = (self.post >= st.PENULTIMATE_OFFSET) & (self.post < st.TERMINAL_INDEX)
        new_pa = (post[:, 1] == 0) & (post[:, 2] == 0) & (post[:, 3] == 0)
        runs = RUNNERS[pre[:, 0]] + pre[:, 4] - RUNNERS[post[:, 0]] - post[:, 4] + new_pa
        return np.where(is_pen, self.post - st.PENULTIMATE_OFFSET, runs)


def _text(values) -> np.ndarray:
    """Format a numeric column, formatting each distinct value once."""
    uniq, inv = np.unique(np.asarray(values, dtype=float), return_inverse=True)
    labels = np.array(["NA" if np.isnan(x) else f"{x:.10g}" for x in uniq], dtype=object)
    return labels[inv.reshape(-1)]


def _state_columns(fields, prefix, missing=None):
    b = fields[:, 0]
    raw = [b >> 2, (b >> 1) & 1, b & 1, fields[:, 1], fields[:, 2], fields[:, 3], fields[:, 4]]
    if missing is not None:
        raw = [np.where(missing, np.nan, v) for v in raw]
    return {f"{prefix}_{f}": _text(v) for f, v in zip(STATE_FIELDS, raw)}


def plays_columns(log: PlayLog) -> dict:
    """The log as text columns in the file schema, keyed by column name."""
    is_end = log.post >= st.PENULTIMATE_OFFSET
    cols = _state_columns(FIELDS[log.pre], "pre")
    cols.update(_state_columns(FIELDS[log.post], "post", missing=is_end))
    cols["inning_end"] = _text(is_end.astype(int))
    cols["runs_on_play"] = _text(np.where(is_end, log.post - st.PENULTIMATE_OFFSET, np.nan))
    codes = np.array(OUTCOME_CODES + ("NA",), dtype=object)
    cols["runner_outcome"] = codes[np.where(log.outcome < 0, 5, log.outcome)]
    cols["lead_ft"] = _text(np.round(log.lead, 1))
    cols["pickoff_attempt"] = _text(np.where(log.pickoff < 0, np.nan, log.pickoff))
    for name in ("runner_id", "pitcher_id", "catcher_id"):
        v = np.asarray(getattr(log, name), dtype=object)
        cols[name] = np.where(v == "", "NA", v)
    cols["sprint_speed"] = _text(log.sprint_speed)
    cols["arm_strength"] = _text(log.arm_strength)
    return cols


def write_plays(log: PlayLog, fh) -> None:
    """Write ``log`` as CSV to an open text file."""
    cols = plays_columns(log)
    fh.write(",".join(COLUMNS) + "\n")
    rows = zip(*(cols[c] for c in COLUMNS))
    chunk = 100_000
    while True:
        lines = [",".join(r) for _, r in zip(range(chunk), rows)]
        if not lines:
            break
        fh.write("\n".join(lines) + "\n")


def save_plays(log: PlayLog, path) -> None:
    with open(path, "w", newline="") as fh:
        write_plays(log, fh)


def _read_frame(source) -> pd.DataFrame:
    # numeric columns parse natively; anything unparsable stays as text and
    # is reported row by row in _Checker.numbers
    text = {c: str for c in ("runner_outcome", "runner_id", "pitcher_id", "catcher_id")}
    kw = dict(dtype=text, keep_default_na=False, na_values=list(NA_TOKENS), skipinitialspace=True)
    try:
        if isinstance(source, str) and "\n" in source:
            return pd.read_csv(io.StringIO(source), **kw)
        return pd.read_csv(source, **kw)
    except pd.errors.EmptyDataError:
        raise PlayDataError([(1, "empty file")]) from None
    except pd.errors.ParserError as exc:
        raise PlayDataError([(0, f"malformed CSV: {exc}")]) from None


class _Checker:
    """Vectorized column parsing that collects ``(line, message)`` errors."""

    def __init__(self, df):
        self.df = df
        self.n = len(df)
        self.errors = []

    def bad(self, mask, msg):
        for i in np.flatnonzero(mask):
            self.errors.append((int(i) + 2, msg))

    def numbers(self, name):
        col = self.df[name]
        if pd.api.types.is_numeric_dtype(col.dtype):
            vals = col.to_numpy(dtype=float)
            return vals, np.isnan(vals)
        raw = col.astype(object)
        na = raw.isna().to_numpy()
        text = raw.where(~na, "").astype(str).str.strip()
        na |= text.isin(NA_TOKENS).to_numpy()
        vals = pd.to_numeric(text.where(~na), errors="coerce").to_numpy(dtype=float)
        bad = ~na & np.isnan(vals)
        for i in np.flatnonzero(bad):
            self.errors.append((int(i) + 2, f"{name}={text.iloc[i]!r} is not a number"))
        return vals, na

    def ints(self, name, lo, hi, allow_na=False):
        vals, na = self.numbers(name)
        ok = ~np.isnan(vals)
        frac = ok & (vals != np.round(vals))
        self.bad(frac, f"{name} is not an integer")
        rng = ok & ~frac & ((vals < lo) | (vals > hi))
        for i in np.flatnonzero(rng):
            self.errors.append((int(i) + 2, f"{name}={int(vals[i])} outside {lo}..{hi}"))
        if not allow_na:
            self.bad(na, f"{name} is missing")
        out = np.where(ok & ~frac, vals, -1).astype(np.int64)
        return out, na


def ingest_plays(source, missing_lead: str = "drop") -> PlayLog:
    """Parse and validate a play-by-play CSV (path, file object or text).

    Rows at first-base-only states without a lead are dropped by default
    (``missing_lead="drop"``) or given the mean observed lead
    (``missing_lead="impute"``).  All violations are collected and raised
    together as :class:`PlayDataError` with 1-based line numbers (the
    header is line 1).
    """
    if missing_lead not in ("drop", "impute"):
        raise ValueError("missing_lead must be 'drop' or 'impute'")
    df = _read_frame(source)
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise PlayDataError([(1, f"missing columns {missing}")])
    chk = _Checker(df)
    limits = {"b1": 1, "b2": 1, "b3": 1, "balls": 3, "strikes": 2, "diseng": 2, "outs": 2}
    pre = {f: chk.ints(f"pre_{f}", 0, limits[f])[0] for f in STATE_FIELDS}
    end, _ = chk.ints("inning_end", 0, 1)
    is_end = end == 1
    post = {}
    for f in STATE_FIELDS:
        post[f], na = chk.ints(f"post_{f}", 0, limits[f], allow_na=True)
        chk.bad(~is_end & na, f"post_{f} is missing")
        chk.bad(is_end & ~na, f"post_{f} given on an inning-ending play")
    runs_on_play, runs_na = chk.ints("runs_on_play", 0, 3, allow_na=True)
    chk.bad(is_end & runs_na, "runs_on_play is missing on an inning-ending play")

    raw = df["runner_outcome"].fillna("")
    known = raw.isin(OUTCOME_CODES).to_numpy()
    na_outcome = raw.isin(NA_TOKENS).to_numpy()
    for i in np.flatnonzero(~known & ~na_outcome):
        chk.errors.append((int(i) + 2, f"runner_outcome={raw.iloc[i]!r} unknown"))
    lookup = {c: j for j, c in enumerate(OUTCOME_CODES)}
    outcome = raw.map(lookup).fillna(-1).to_numpy(dtype=np.int64)
    lead, _ = chk.numbers("lead_ft")
    pickoff, _ = chk.ints("pickoff_attempt", 0, 1, allow_na=True)
    speed, _ = chk.numbers("sprint_speed")
    arm, _ = chk.numbers("arm_strength")
    chk.bad(speed <= 0, "sprint_speed must be positive")
    chk.bad(arm <= 0, "arm_strength must be positive")
    chk.bad((lead < 0) | (lead > 20), "lead_ft outside [0, 20]")

    def ids(name):
        t = df[name].fillna("").to_numpy(dtype=object)
        t[np.isin(t, NA_TOKENS)] = ""
        return t

    if chk.errors:
        raise PlayDataError(sorted(chk.errors))

    pre_b = pre["b1"] * 4 + pre["b2"] * 2 + pre["b3"]
    pre_idx = play_index(pre_b, pre["balls"], pre["strikes"], pre["diseng"], pre["outs"])
    post_b = post["b1"] * 4 + post["b2"] * 2 + post["b3"]
    post_idx = np.where(
        is_end,
        st.PENULTIMATE_OFFSET + np.maximum(runs_on_play, 0),
        play_index(post_b, post["balls"], post["strikes"], post["diseng"], post["outs"]),
    )
    log = PlayLog(pre_idx, post_idx, outcome, lead, pickoff, ids("runner_id"),
                  ids("pitcher_id"), ids("catcher_id"), speed, arm)
    errors = validate_log(log, require_lead=False)
    if errors:
        raise PlayDataError(errors)

    agency = pre_b == AGENCY_B
    no_lead = agency & np.isnan(lead)
    if no_lead.any():
        if missing_lead == "drop":
            log = log.subset(~no_lead)
        else:
            fill = np.nanmean(lead[agency]) if np.any(agency & ~no_lead) else 10.0
            log.lead[no_lead] = round(float(fill), 1)
    return log


def validate_log(log: PlayLog, require_lead: bool = True):
    """Semantic checks shared by ingestion and generated logs.

    Returns a list of ``(line, message)``; line numbers assume a header row.
    """
    errors = []
    pre = FIELDS[log.pre]
    post = FIELDS[log.post]
    is_end = log.post >= st.PENULTIMATE_OFFSET
    agency = pre[:, 0] == AGENCY_B

    def bad(mask, msg):
        errors.extend((int(i) + 2, msg) for i in np.flatnonzero(mask))

    if np.any(pre[:, 0] < 0):
        bad(pre[:, 0] < 0, "pre-play state must be a play state")
    has_outcome = log.outcome >= 0
    bad(agency & ~has_outcome, "runner_outcome required with only first base occupied")
    bad(~agency & has_outcome, "runner_outcome given without a lone runner on first")
    has_lead = ~np.isnan(log.lead)
    bad(~agency & has_lead, "lead_ft given without a lone runner on first")
    if require_lead:
        bad(agency & ~has_lead, "lead_ft missing with a lone runner on first")
    is_po = (log.outcome == RunnerOutcome.PICKOFF_SUCCESS) | (log.outcome == RunnerOutcome.PICKOFF_FAIL)
    bad(has_outcome & (log.pickoff >= 0) & (log.pickoff != is_po), "pickoff_attempt contradicts runner_outcome")
    bad(~agency & (log.pickoff == 1), "pickoff attempt without a lone runner on first")

    play_post = ~is_end
    bad(play_post & (post[:, 4] < pre[:, 4]), "outs decreased")
    runs = log.runs()
    bad(play_post & ((runs < 0) | (runs > st.MAX_RUNS_PER_PLAY)), "bases/outs arithmetic implies impossible runs")
    # disengagements only move by a pickoff (+1, capped at 2) or a reset to 0
    d0, d1 = pre[:, 3], post[:, 3]
    inc_ok = is_po & (d1 == np.minimum(d0 + 1, 2))
    bad(play_post & (d1 != d0) & (d1 != 0) & ~inc_ok, "disengagement count changed without a pickoff")
    return errors
