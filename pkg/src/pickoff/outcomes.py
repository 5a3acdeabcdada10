"""Mixed-effects logistic outcome models for the runner on first.

Four models are evaluated (fitting happens elsewhere, coefficients arrive
as JSON):

``po_attempt``   probability the pitcher attempts a pickoff
``po_success``   probability a pickoff attempt retires the runner
``sb_attempt``   probability the runner attempts a steal on a pitch (no lead term)
``sb_success``   probability a steal attempt succeeds

They combine into a five-way distribution over
:class:`~pickoff.states.RunnerOutcome`, either conditional on the pitcher's
choice (two-player game) or with the pickoff decision drawn from
``po_attempt`` (one-player reduction).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import NormalDist
from types import MappingProxyType
from typing import Mapping, Optional

import numpy as np

from .states import PitcherAction

PROB_FLOOR = 1e-9

MODEL_KINDS = ("po_attempt", "po_success", "sb_attempt", "sb_success")
ROLES = ("runner", "pitcher", "catcher")

# fixed terms and random-effect roles each model kind carries
MODEL_TERMS = {
    "po_attempt": frozenset({"balls", "strikes", "outs", "diseng_1", "diseng_2", "lead"}),
    "po_success": frozenset({"lead"}),
    "sb_attempt": frozenset(
        {"balls", "strikes", "outs", "diseng_1", "diseng_2", "sprint_speed", "arm_strength"}
    ),
    "sb_success": frozenset({"lead", "sprint_speed", "arm_strength"}),
}
MODEL_ROLES = {
    "po_attempt": frozenset({"pitcher"}),
    "po_success": frozenset({"pitcher"}),
    "sb_attempt": frozenset(ROLES),
    "sb_success": frozenset(ROLES),
}

# sign that makes a positive effect favor the given role, per model
_FAVORS = {
    ("po_attempt", "pitcher"): +1,
    ("po_success", "pitcher"): +1,
    ("sb_attempt", "runner"): +1,
    ("sb_attempt", "pitcher"): -1,
    ("sb_attempt", "catcher"): -1,
    ("sb_success", "runner"): +1,
    ("sb_success", "pitcher"): -1,
    ("sb_success", "catcher"): -1,
}


class CoefficientError(ValueError):
    """Malformed or inconsistent coefficient file."""


def _frozen(d):
    return MappingProxyType(dict(d))


@dataclass(frozen=True)
class LogisticModel:
    kind: str
    intercept: float
    fixed: Mapping[str, float]
    re_sd: Mapping[str, float] = field(default_factory=dict)
    re: Mapping[str, Mapping[str, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise CoefficientError(f"unknown model kind {self.kind!r}")
        terms = set(self.fixed)
        if terms != MODEL_TERMS[self.kind]:
            missing = MODEL_TERMS[self.kind] - terms
            extra = terms - MODEL_TERMS[self.kind]
            raise CoefficientError(
                f"{self.kind}: fixed terms mismatch (missing {sorted(missing)}, "
                f"unexpected {sorted(extra)})"
            )
        for role, sd in self.re_sd.items():
            if role not in MODEL_ROLES[self.kind]:
                raise CoefficientError(f"{self.kind}: no random effect for role {role!r}")
            if not sd >= 0:
                raise CoefficientError(f"{self.kind}: negative sd for {role}")
        for role in self.re:
            if role not in MODEL_ROLES[self.kind]:
                raise CoefficientError(f"{self.kind}: no random effect for role {role!r}")
        object.__setattr__(self, "fixed", _frozen(self.fixed))
        object.__setattr__(self, "re_sd", _frozen(self.re_sd))
        object.__setattr__(
            self, "re", _frozen({r: _frozen(v) for r, v in self.re.items()})
        )

    @property
    def has_lead(self) -> bool:
        return "lead" in self.fixed


@dataclass(frozen=True)
class PlayContext:
    """Everything besides the lead that the outcome models condition on.

    ``effects`` optionally pins random effects per ``(model kind, role)``,
    overriding the player-id lookup; :func:`percentile_profile` builds it.
    Missing sprint speed / arm strength fall back to the league means in
    the coefficient file.
    """

    balls: int = 0
    strikes: int = 0
    outs: int = 0
    disengagements: int = 0
    runner_id: Optional[str] = None
    pitcher_id: Optional[str] = None
    catcher_id: Optional[str] = None
    sprint_speed: Optional[float] = None
    arm_strength: Optional[float] = None
    effects: Optional[Mapping[tuple, float]] = None

    def __post_init__(self):
        if not (0 <= self.balls <= 3 and 0 <= self.strikes <= 2):
            raise ValueError(f"invalid count {self.balls}-{self.strikes}")
        if self.outs not in (0, 1, 2) or self.disengagements not in (0, 1, 2):
            raise ValueError("outs and disengagements must be in 0..2")
        for name in ("sprint_speed", "arm_strength"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")

    def at(self, balls, strikes, outs, disengagements) -> "PlayContext":
        return replace(
            self, balls=balls, strikes=strikes, outs=outs, disengagements=disengagements
        )

    def player(self, role: str) -> Optional[str]:
        return getattr(self, f"{role}_id")


@dataclass(frozen=True)
class ModelSet:
    po_attempt: LogisticModel
    po_success: LogisticModel
    sb_attempt: LogisticModel
    sb_success: LogisticModel
    covariate_means: Mapping[str, float]
    covariate_convention: str = "raw"
    ignore_disengagements: bool = False

    def __post_init__(self):
        for kind in MODEL_KINDS:
            if getattr(self, kind).kind != kind:
                raise CoefficientError(f"slot {kind} holds a {getattr(self, kind).kind} model")
        if set(self.covariate_means) != {"sprint_speed", "arm_strength"}:
            raise CoefficientError("covariate_means needs sprint_speed and arm_strength")
        if self.covariate_convention not in ("raw", "centered"):
            raise CoefficientError(
                f"covariate_convention must be 'raw' or 'centered', got {self.covariate_convention!r}"
            )
        object.__setattr__(self, "covariate_means", _frozen(self.covariate_means))

    def model(self, kind: str) -> LogisticModel:
        return getattr(self, kind)

    def with_(self, **changes) -> "ModelSet":
        return replace(self, **changes)

    # -- serialization -------------------------------------------------

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelSet":
        allowed = set(MODEL_KINDS) | {"covariate_means", "covariate_convention"}
        unknown = set(doc) - allowed
        if unknown:
            raise CoefficientError(f"unknown top-level keys: {sorted(unknown)}")
        missing = [k for k in MODEL_KINDS + ("covariate_means",) if k not in doc]
        if missing:
            raise CoefficientError(f"missing blocks: {missing}")
        models = {}
        for kind in MODEL_KINDS:
            block = doc[kind]
            if not isinstance(block, dict):
                raise CoefficientError(f"{kind} must be an object")
            extra = set(block) - {"intercept", "fixed", "re_sd", "re"}
            if extra:
                raise CoefficientError(f"{kind}: unknown keys {sorted(extra)}")
            if "intercept" not in block or "fixed" not in block:
                raise CoefficientError(f"{kind}: intercept and fixed are required")
            models[kind] = LogisticModel(
                kind=kind,
                intercept=float(block["intercept"]),
                fixed={k: float(v) for k, v in block["fixed"].items()},
                re_sd={k: float(v) for k, v in block.get("re_sd", {}).items()},
                re={
                    role: {str(h): float(g) for h, g in table.items()}
                    for role, table in block.get("re", {}).items()
                },
            )
        means = doc["covariate_means"]
        return cls(
            **models,
            covariate_means={k: float(v) for k, v in means.items()},
            covariate_convention=doc.get("covariate_convention", "raw"),
        )

    def to_dict(self) -> dict:
        doc = {}
        for kind in MODEL_KINDS:
            m = self.model(kind)
            doc[kind] = {
                "intercept": m.intercept,
                "fixed": dict(sorted(m.fixed.items())),
                "re_sd": dict(sorted(m.re_sd.items())),
                "re": {r: dict(sorted(t.items())) for r, t in sorted(m.re.items())},
            }
        doc["covariate_means"] = dict(sorted(self.covariate_means.items()))
        doc["covariate_convention"] = self.covariate_convention
        return doc


def load_model_set(path) -> ModelSet:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise CoefficientError(f"{path}: {exc}") from None
    return ModelSet.from_dict(doc)


def save_model_set(ms: ModelSet, path) -> None:
    Path(path).write_text(json.dumps(ms.to_dict(), indent=2) + "\n")


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _covariate(ms: Optional[ModelSet], name: str, value):
    if value is None:
        if ms is None:
            raise ValueError(f"{name} missing and no league mean available")
        value = ms.covariate_means[name]
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")
    if ms is not None and ms.covariate_convention == "centered":
        return value - ms.covariate_means[name]
    return value


def linear_predictor(model: LogisticModel, ctx: PlayContext, lead=None, ms: ModelSet = None):
    """Log-odds of the model's event; vectorized over ``lead``."""
    if model.has_lead and lead is None:
        raise ValueError(f"{model.kind} needs a lead distance")
    if not model.has_lead and lead is not None:
        raise ValueError(f"{model.kind} does not depend on lead distance")
    f = model.fixed
    eta = model.intercept
    if "balls" in f:
        eta += f["balls"] * ctx.balls + f["strikes"] * ctx.strikes + f["outs"] * ctx.outs
        if not (ms is not None and ms.ignore_disengagements) and ctx.disengagements:
            eta += f[f"diseng_{ctx.disengagements}"]
    if "sprint_speed" in f:
        eta += f["sprint_speed"] * _covariate(ms, "sprint_speed", ctx.sprint_speed)
        eta += f["arm_strength"] * _covariate(ms, "arm_strength", ctx.arm_strength)
    for role in MODEL_ROLES[model.kind]:
        if ctx.effects is not None and (model.kind, role) in ctx.effects:
            eta += ctx.effects[(model.kind, role)]
        else:
            # unknown players sit at the random-effect prior mean
            eta += model.re.get(role, {}).get(ctx.player(role), 0.0)
    if lead is not None:
        lead = np.asarray(lead, dtype=float)
        if np.any(lead < 0):
            raise ValueError("lead distance must be non-negative")
        eta = eta + f["lead"] * lead
    return eta


def eval_logistic(model: LogisticModel, ctx: PlayContext, lead=None, ms: ModelSet = None):
    """Inverse-logit of the linear predictor, clamped to ``[1e-9, 1 - 1e-9]``."""
    p = _sigmoid(linear_predictor(model, ctx, lead, ms))
    p = np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return float(p) if np.ndim(p) == 0 else p


def outcome_probabilities(ms: ModelSet, ctx: PlayContext, lead) -> dict:
    """The four component probabilities at ``lead`` (scalar or array)."""
    return {
        "po_attempt": eval_logistic(ms.po_attempt, ctx, lead, ms),
        "po_success": eval_logistic(ms.po_success, ctx, lead, ms),
        "sb_attempt": eval_logistic(ms.sb_attempt, ctx, None, ms),
        "sb_success": eval_logistic(ms.sb_success, ctx, lead, ms),
    }


def compose_two_player(po_success, sb_attempt, sb_success, pickoff):
    """Outcome vector(s) given the pitcher's choice.

    ``pickoff`` is a bool (or bool array broadcasting against the others).
    Returns an array with the five outcomes on the last axis.
    """
    po_success, sb_attempt, sb_success = np.broadcast_arrays(
        np.asarray(po_success, float), np.asarray(sb_attempt, float), np.asarray(sb_success, float)
    )
    a = np.broadcast_to(np.asarray(pickoff, float), po_success.shape)
    return np.stack(
        [
            a * po_success,
            a * (1.0 - po_success),
            (1.0 - a) * sb_attempt * sb_success,
            (1.0 - a) * sb_attempt * (1.0 - sb_success),
            (1.0 - a) * (1.0 - sb_attempt),
        ],
        axis=-1,
    )


def compose_one_player(po_attempt, po_success, sb_attempt, sb_success):
    """Outcome vector(s) with the pickoff drawn at rate ``po_attempt``."""
    phi = np.asarray(po_attempt, float)[..., None]
    return phi * compose_two_player(po_success, sb_attempt, sb_success, True) + (
        1.0 - phi
    ) * compose_two_player(po_success, sb_attempt, sb_success, False)


def outcome_distribution_two_player(ms, ctx, lead, pitcher_action) -> np.ndarray:
    if pitcher_action not in (PitcherAction.PICKOFF, PitcherAction.PITCH):
        raise ValueError(f"pitcher must pick off or pitch, got {pitcher_action}")
    p = outcome_probabilities(ms, ctx, lead)
    return compose_two_player(
        p["po_success"], p["sb_attempt"], p["sb_success"],
        pitcher_action is PitcherAction.PICKOFF,
    )


def outcome_distribution_one_player(ms, ctx, lead) -> np.ndarray:
    p = outcome_probabilities(ms, ctx, lead)
    return compose_one_player(p["po_attempt"], p["po_success"], p["sb_attempt"], p["sb_success"])


_BATTERY = ("pitcher", "catcher")


def percentile_profile(ms: ModelSet, role: str, q: float) -> dict:
    """Random effects for a hypothetical player at quantile ``q`` of skill.

    Returns ``{(model kind, role): effect}``, usable as
    ``PlayContext.effects``.  Effects are signed so that a higher ``q``
    always helps the role: a strong battery attempts and converts more
    pickoffs and suppresses steal attempts and steal success.
    ``role="battery"`` moves pitcher and catcher together.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile must lie in (0, 1), got {q}")
    roles = _BATTERY if role == "battery" else (role,)
    if any(r not in ROLES for r in roles):
        raise ValueError(f"unknown role {role!r}")
    z = NormalDist().inv_cdf(q)
    out = {}
    for kind in MODEL_KINDS:
        model = ms.model(kind)
        for r in roles:
            if r in model.re_sd:
                # keep exact zeros at the median
                out[(kind, r)] = 0.0 if z == 0 else _FAVORS[(kind, r)] * z * model.re_sd[r]
    if not out:
        raise ValueError(f"no random-effect sd for {role!r} in this model set")
    return out


def merge_effects(*profiles) -> dict:
    merged = {}
    for p in profiles:
        merged.update(p)
    return merged


def logit(p: float) -> float:
    return math.log(p / (1.0 - p))
