import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as hst

from pickoff import outcomes as om
from pickoff.states import PitcherAction

probs = hst.floats(0.0, 1.0)


def test_eval_logistic_by_hand(model_set):
    ctx = om.PlayContext(balls=2, strikes=1, outs=1, disengagements=1, pitcher_id="P-ace")
    m = model_set.po_attempt
    f = m.fixed
    eta = m.intercept + 2 * f["balls"] + f["strikes"] + f["outs"] + f["diseng_1"] + 0.4 + 10 * f["lead"]
    assert om.eval_logistic(m, ctx, 10.0, model_set) == pytest.approx(1 / (1 + math.exp(-eta)), rel=1e-12)


def test_centered_covariates(model_set):
    m = model_set.sb_attempt
    slow = om.eval_logistic(m, om.PlayContext(sprint_speed=25.0), None, model_set)
    mean = om.eval_logistic(m, om.PlayContext(), None, model_set)
    fast = om.eval_logistic(m, om.PlayContext(sprint_speed=29.0), None, model_set)
    assert slow < mean < fast
    assert mean == pytest.approx(1 / (1 + math.exp(-m.intercept)))


def test_unknown_player_sits_at_prior_mean(model_set):
    a = om.eval_logistic(model_set.sb_attempt, om.PlayContext(runner_id="nobody"), None, model_set)
    b = om.eval_logistic(model_set.sb_attempt, om.PlayContext(), None, model_set)
    assert a == b


def test_lead_argument_checked(model_set):
    with pytest.raises(ValueError):
        om.eval_logistic(model_set.po_success, om.PlayContext(), None, model_set)
    with pytest.raises(ValueError):
        om.eval_logistic(model_set.sb_attempt, om.PlayContext(), 5.0, model_set)
    with pytest.raises(ValueError):
        om.eval_logistic(model_set.po_success, om.PlayContext(), -1.0, model_set)


def test_probabilities_are_clamped(model_set):
    low = om.LogisticModel("po_success", -40.0, {"lead": 0.0})
    high = om.LogisticModel("po_success", 40.0, {"lead": 0.0})
    assert om.eval_logistic(low, om.PlayContext(), 0.0, model_set) == om.PROB_FLOOR
    assert om.eval_logistic(high, om.PlayContext(), 0.0, model_set) == 1 - om.PROB_FLOOR


@given(probs, probs, probs, hst.booleans())
def test_two_player_distribution_sums_to_one(ps, sa, ss, pickoff):
    d = om.compose_two_player(ps, sa, ss, pickoff)
    assert np.all(d >= 0)
    assert abs(d.sum() - 1) <= 1e-12
    # a pitch never produces a pickoff outcome and vice versa
    if pickoff:
        assert d[2:].sum() == 0
    else:
        assert d[:2].sum() == 0


@given(probs, probs, probs, probs)
def test_one_player_distribution_mixes_two_player(pa, ps, sa, ss):
    d = om.compose_one_player(pa, ps, sa, ss)
    mix = pa * om.compose_two_player(ps, sa, ss, True) + (1 - pa) * om.compose_two_player(ps, sa, ss, False)
    assert np.allclose(d, mix, atol=1e-15)
    assert abs(d.sum() - 1) <= 1e-12


def test_distributions_vectorize_over_leads(model_set):
    leads = np.linspace(0, 20, 201)
    ctx = om.PlayContext(balls=1, strikes=2, outs=2, disengagements=2)
    d = om.outcome_distribution_two_player(model_set, ctx, leads, PitcherAction.PICKOFF)
    assert d.shape == (201, 5)
    assert np.allclose(d.sum(axis=1), 1, atol=1e-12)
    # longer leads make a pickoff more likely to succeed
    assert np.all(np.diff(d[:, 0]) >= 0)
    with pytest.raises(ValueError):
        om.outcome_distribution_two_player(model_set, ctx, 5.0, PitcherAction.NO_AGENCY)


def test_model_set_round_trip(model_set, tmp_path):
    path = tmp_path / "coeffs.json"
    om.save_model_set(model_set, path)
    again = om.load_model_set(path)
    assert again.to_dict() == model_set.to_dict()


@pytest.mark.parametrize("mutate, message", [
    (lambda d: d.pop("po_success"), "missing blocks"),
    (lambda d: d["po_attempt"]["fixed"].pop("lead"), "fixed terms mismatch"),
    (lambda d: d["po_success"]["fixed"].update(balls=0.1), "fixed terms mismatch"),
    (lambda d: d["po_attempt"]["re_sd"].update(runner=0.2), "no random effect"),
    (lambda d: d["sb_attempt"]["re_sd"].update(runner=-1.0), "negative sd"),
    (lambda d: d.update(extra=1), "unknown top-level"),
])
def test_bad_coefficient_files(model_set, mutate, message):
    doc = json.loads(json.dumps(model_set.to_dict()))
    mutate(doc)
    with pytest.raises(om.CoefficientError, match=message):
        om.ModelSet.from_dict(doc)


def test_unparsable_coefficient_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(om.CoefficientError):
        om.load_model_set(path)


def test_percentile_profiles(model_set):
    median = om.percentile_profile(model_set, "battery", 0.5)
    assert all(v == 0.0 for v in median.values())
    strong = om.percentile_profile(model_set, "battery", 0.9)
    weak = om.percentile_profile(model_set, "battery", 0.1)
    # a strong battery suppresses steal attempts and picks off more
    assert strong[("sb_attempt", "pitcher")] < 0 < weak[("sb_attempt", "pitcher")]
    assert strong[("po_success", "pitcher")] > 0
    fast = om.percentile_profile(model_set, "runner", 0.9)
    ctx_fast = om.PlayContext(effects=fast)
    ctx_slow = om.PlayContext(effects=om.percentile_profile(model_set, "runner", 0.1))
    m = model_set.sb_success
    assert om.eval_logistic(m, ctx_fast, 10.0, model_set) > om.eval_logistic(m, ctx_slow, 10.0, model_set)
    with pytest.raises(ValueError):
        om.percentile_profile(model_set, "runner", 1.0)
    with pytest.raises(ValueError):
        om.percentile_profile(model_set, "umpire", 0.5)


def test_effects_override_player_lookup(model_set):
    ctx = om.PlayContext(runner_id="R-fast", effects={("sb_attempt", "runner"): 0.0})
    plain = om.PlayContext()
    m = model_set.sb_attempt
    assert om.eval_logistic(m, ctx, None, model_set) == om.eval_logistic(m, plain, None, model_set)


def test_ignore_disengagements(model_set):
    ms = model_set.with_(ignore_disengagements=True)
    a = om.eval_logistic(ms.po_attempt, om.PlayContext(disengagements=2), 10.0, ms)
    b = om.eval_logistic(ms.po_attempt, om.PlayContext(disengagements=0), 10.0, ms)
    assert a == b


def test_invalid_context():
    with pytest.raises(ValueError):
        om.PlayContext(balls=4)
    with pytest.raises(ValueError):
        om.PlayContext(sprint_speed=0.0)
