import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from pickoff import plays as pl
from pickoff import states as st
from pickoff import synthetic as syn

HEADER = ",".join(pl.COLUMNS)


@pytest.fixture(scope="module")
def small_log():
    return syn.generate_synthetic_plays(syn.GeneratorConfig(innings=300, seed=11))


def _csv(log):
    buf = io.StringIO()
    pl.write_plays(log, buf)
    return buf.getvalue()


def _row(pre, post=None, runs=None, outcome="NA", lead="NA", pickoff="NA", ids=("NA", "NA", "NA"),
         speed="27", arm="82"):
    def fields(p):
        return [*map(str, p.bases), str(p.count.balls), str(p.count.strikes), str(p.disengagements), str(p.outs)]

    post_fields = fields(post) if post is not None else ["NA"] * 7
    end = "1" if post is None else "0"
    return ",".join([*fields(pre), *post_fields, end, "NA" if runs is None else str(runs),
                     outcome, lead, pickoff, *ids, speed, arm])


def _logs_equal(a, b):
    for name in ("pre", "post", "outcome", "lead", "pickoff", "sprint_speed", "arm_strength"):
        assert np.array_equal(getattr(a, name), getattr(b, name), equal_nan=True), name
    for name in ("runner_id", "pitcher_id", "catcher_id"):
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_csv_round_trip(small_log, tmp_path):
    text = _csv(small_log)
    assert text.splitlines()[0] == HEADER
    _logs_equal(pl.ingest_plays(text), small_log)
    path = tmp_path / "plays.csv"
    pl.save_plays(small_log, path)
    assert path.read_text() == text
    _logs_equal(pl.ingest_plays(path), small_log)


@settings(max_examples=25, deadline=None)
@given(hst.integers(0, 4000), hst.integers(1, 500), hst.integers(1, 7))
def test_round_trip_of_random_slices(small_log, start, length, step):
    sub = small_log.subset(np.arange(start, min(start + length * step, len(small_log)), step))
    if len(sub) == 0:
        return
    _logs_equal(pl.ingest_plays(_csv(sub)), sub)


def test_records_round_trip(small_log):
    sub = small_log.subset(np.arange(len(small_log)) < 200)
    _logs_equal(pl.PlayLog.from_records(sub.records()), sub)


def test_runs_match_state_rewards(small_log):
    runs = small_log.runs()
    for i, rec in enumerate(small_log.records()):
        assert runs[i] == rec.runs
        if i > 2000:
            break


def test_generated_log_is_valid(small_log):
    assert pl.validate_log(small_log, require_lead=True) == []


def test_minimal_file():
    a = st.play((1, 0, 0), (0, 0))
    b = st.play((1, 0, 0), (0, 0), 1)
    text = "\n".join([HEADER, _row(a, b, outcome="PO_FAIL", lead="11.5", pickoff="1", ids=("R1", "P1", "C1")),
                      _row(st.play((0, 0, 0), (1, 1), 0, 2), None, runs=1)]) + "\n"
    log = pl.ingest_plays(text)
    assert len(log) == 2
    assert log.post[1] == st.index(st.Penultimate(1))
    assert log.runner_id[0] == "R1" and log.runner_id[1] == ""
    assert log.lead[0] == 11.5 and np.isnan(log.lead[1])
    assert list(log.runs()) == [0, 1]


def test_errors_collected_with_line_numbers():
    a = st.play((1, 0, 0), (0, 0))
    good = _row(a, st.play((1, 0, 0), (0, 1)), outcome="NONE", lead="10", pickoff="0")
    rows = [
        good,
        good.replace(",NONE,", ",STEAL,"),  # line 3: unknown outcome
        good,
        "x" + good[1:],  # line 5: not a number
        good.replace(",27,82", ",-3,82"),  # line 6: bad sprint speed
    ]
    with pytest.raises(pl.PlayDataError) as exc:
        pl.ingest_plays("\n".join([HEADER, *rows]) + "\n")
    lines = sorted({ln for ln, _ in exc.value.errors})
    assert lines == [3, 5, 6]
    assert "line 3" in str(exc.value)


def test_semantic_errors():
    a = st.play((1, 0, 0), (0, 0))
    rows = [
        # outcome given without a lone runner on first
        _row(st.play((1, 1, 0), (0, 0)), st.play((1, 1, 0), (1, 0)), outcome="NONE"),
        # disengagements cannot rise without a pickoff
        _row(a, st.play((1, 0, 0), (0, 1), 1), outcome="NONE", lead="10", pickoff="0"),
        # pickoff flag contradicts the outcome
        _row(a, st.play((1, 0, 0), (0, 0), 1), outcome="PO_FAIL", lead="10", pickoff="0"),
        # outs cannot decrease
        _row(st.play((0, 0, 0), (0, 0), 0, 1), st.play((0, 0, 0), (0, 0), 0, 0)),
    ]
    with pytest.raises(pl.PlayDataError) as exc:
        pl.ingest_plays("\n".join([HEADER, *rows]) + "\n")
    assert sorted({ln for ln, _ in exc.value.errors}) == [2, 3, 4, 5]


def test_inning_end_requires_na_post_fields():
    bad = _row(st.play((0, 0, 0), (0, 0)), st.play((0, 0, 0), (0, 1)), runs=0).replace(",0,0,NA,NA,", ",1,0,NA,NA,")
    with pytest.raises(pl.PlayDataError, match="inning-ending"):
        pl.ingest_plays(HEADER + "\n" + bad + "\n")


def test_missing_columns():
    with pytest.raises(pl.PlayDataError, match="missing columns"):
        pl.ingest_plays("pre_b1,pre_b2\n0,0\n")
    with pytest.raises(pl.PlayDataError):
        pl.ingest_plays(io.StringIO(""))


def test_missing_lead_policy():
    a = st.play((1, 0, 0), (0, 0))
    rows = [
        _row(a, st.play((1, 0, 0), (0, 1)), outcome="NONE", lead="10", pickoff="0"),
        _row(a, st.play((1, 0, 0), (1, 0)), outcome="NONE", lead="NA", pickoff="0"),
        _row(a, st.play((1, 0, 0), (0, 1)), outcome="NONE", lead="12", pickoff="0"),
    ]
    text = "\n".join([HEADER, *rows]) + "\n"
    assert len(pl.ingest_plays(text)) == 2
    imputed = pl.ingest_plays(text, missing_lead="impute")
    assert len(imputed) == 3 and imputed.lead[1] == 11.0
    with pytest.raises(ValueError):
        pl.ingest_plays(text, missing_lead="guess")
