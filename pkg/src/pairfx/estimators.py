"""Plug-in, Model 1 and Model 2 AIPW estimators of E[Y^{a,b}] and their contrasts.

Every estimator is an average over pairs of a per-pair score ``s_i`` (the
mean of the Twin 1 and Twin 2 terms).  The point estimate solves
``sum_i w_i (s_i - beta) = 0`` and the influence values are ``s_i - beta``.
"""
from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .basis import BasisSpec, Linear
from .dale import JointPropensity
from .data import PairedDataset
from .errors import Collinear, MixedModels, SchemaMismatch, ZeroPropensity
from .regression import DEFAULT_CLIP, NuisanceFit, clip_probabilities, fit_linear, predict


class DegenerateCellWarning(UserWarning):
    """No twin was observed with the target exposure pattern."""


@dataclass(frozen=True)
class EstimandSpec:
    """A linear combination ``sum_k w_k E[Y^{a_k, b_k}]``."""

    terms: tuple[tuple[float, int, int], ...]
    name: str = ""

    def __post_init__(self):
        terms = tuple((float(w), int(a), int(b)) for w, a, b in self.terms)
        if not terms:
            raise ValueError("an estimand needs at least one term")
        for w, a, b in terms:
            if a not in (0, 1) or b not in (0, 1) or not np.isfinite(w):
                raise ValueError(f"invalid estimand term {(w, a, b)}")
        object.__setattr__(self, "terms", terms)
        if not self.name:
            object.__setattr__(self, "name", " ".join(f"{w:+g}*E[Y^{a}{b}]" for w, a, b in terms))

    @classmethod
    def mean(cls, a: int, b: int) -> "EstimandSpec":
        return cls(((1.0, a, b),), f"mean:{a},{b}")

    @classmethod
    def contrast(cls, terms: Sequence[tuple[float, int, int]], name: str = "") -> "EstimandSpec":
        return cls(tuple(terms), name)

    @property
    def is_mean(self) -> bool:
        return len(self.terms) == 1 and self.terms[0][0] == 1.0

    @property
    def patterns(self) -> tuple[tuple[int, int], ...]:
        return tuple((a, b) for _, a, b in self.terms)

    @classmethod
    def parse(cls, text: str) -> "EstimandSpec":
        """``mean:a,b``, ``spillover`` or ``main``."""
        text = text.strip()
        if text == "spillover":
            return SPILLOVER
        if text == "main":
            return MAIN
        m = re.fullmatch(r"mean:([01]),([01])", text)
        if m:
            return cls.mean(int(m.group(1)), int(m.group(2)))
        raise ValueError(f"unknown estimand {text!r} (expected mean:a,b, spillover, main or ctc)")


SPILLOVER = EstimandSpec(((1.0, 0, 0), (-1.0, 0, 1)), "spillover")
MAIN = EstimandSpec(((1.0, 0, 0), (-1.0, 1, 0)), "main")


@dataclass(frozen=True, eq=False)
class EffectEstimate:
    estimand: EstimandSpec
    model: str
    point: float
    if_values: np.ndarray = field(repr=False)
    weights: np.ndarray | None = field(default=None, repr=False)
    diagnostics: Mapping[str, object] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.if_values)

    @property
    def if_variance(self) -> float:
        """``sum(if^2) / n^2`` (frequency-weighted when weights are present)."""
        if self.weights is None:
            return float(np.sum(self.if_values ** 2) / self.n ** 2)
        w = self.weights
        return float(np.sum(w * self.if_values ** 2) / np.sum(w) ** 2)

    @property
    def se(self) -> float:
        return float(np.sqrt(self.if_variance))


def _weighted_estimate(scores, ds, estimand, model, diagnostics):
    w = ds.weights
    point = float(np.mean(scores) if w is None else np.sum(w * scores) / np.sum(w))
    if not np.isfinite(point):
        raise ZeroPropensity(f"{model} estimate of {estimand.name} is not finite")
    return EffectEstimate(estimand, model, point, scores - point, w, diagnostics)


def _outcome_means(ds: PairedDataset, outcome_fit: NuisanceFit, a: int, b: int):
    mu = predict(outcome_fit, ds.stacked, {"a_own": a, "a_cotwin": b})
    return mu[:ds.n], mu[ds.n:]


def _aipw_term(indicator, prob, resid, clip, model):
    """``1{pattern} / prob * resid``; zero where the pattern was not observed."""
    prob = clip_probabilities(prob, clip)
    if np.any(indicator & (prob <= 0)):
        raise ZeroPropensity(f"{model}: an observed exposure pattern has propensity 0")
    out = np.zeros_like(resid)
    out[indicator] = resid[indicator] / prob[indicator]
    return out


def _check_degenerate(ind1, ind2, a, b, model):
    if not (ind1.any() or ind2.any()):
        warnings.warn(f"{model}: no twin observed with exposure pattern ({a},{b}); "
                      "estimate reduces to the plug-in", DegenerateCellWarning, stacklevel=3)
        return True
    return False


def estimate_plugin(ds: PairedDataset, outcome_fit: NuisanceFit, a: int, b: int) -> EffectEstimate:
    """Outcome-regression (g-formula) estimate of ``E[Y^{a,b}]``."""
    mu1, mu2 = _outcome_means(ds, outcome_fit, a, b)
    return _weighted_estimate((mu1 + mu2) / 2, ds, EstimandSpec.mean(a, b), "PLUGIN", {})


def estimate_m1(ds: PairedDataset, outcome_fit: NuisanceFit, joint: JointPropensity, a: int, b: int,
                clip: float = DEFAULT_CLIP) -> EffectEstimate:
    """Model 1 AIPW estimate of ``E[Y^{a,b}]`` with a joint exposure-pattern propensity."""
    if len(joint) != ds.n:
        raise SchemaMismatch("joint propensity table does not match the dataset")
    mu1, mu2 = _outcome_means(ds, outcome_fit, a, b)
    p1, p2 = joint.twin_probability(a, b)
    ind1 = (ds.a1 == a) & (ds.a2 == b)
    ind2 = (ds.a2 == a) & (ds.a1 == b)
    degenerate = _check_degenerate(ind1, ind2, a, b, "M1")
    t1 = _aipw_term(ind1, p1, ds.y1 - mu1, clip, "M1") + mu1
    t2 = _aipw_term(ind2, p2, ds.y2 - mu2, clip, "M1") + mu2
    return _weighted_estimate((t1 + t2) / 2, ds, EstimandSpec.mean(a, b), "M1",
                              {"degenerate_cell": degenerate})


def _bernoulli(p1, value):
    return p1 if value == 1 else 1.0 - p1


def estimate_m2(ds: PairedDataset, outcome_fit: NuisanceFit, own_propensity: NuisanceFit,
                cotwin_propensity: NuisanceFit, a: int, b: int,
                clip: float = DEFAULT_CLIP) -> EffectEstimate:
    """Model 2 AIPW estimate of ``E[Y^{a,b}]``.

    The weight for twin ``j`` is ``P(A_j=a | C, X_j) * P(A_{3-j}=b | C, X_j)``:
    both factors condition on the index twin's own covariates.  The second
    factor comes from ``cotwin_propensity``, a stacked fit of ``a_cotwin``.
    """
    rows = ds.stacked
    pi_own = _bernoulli(clip_probabilities(predict(own_propensity, rows), clip), a)
    theta = _bernoulli(clip_probabilities(predict(cotwin_propensity, rows), clip), b)
    weight = pi_own * theta
    mu1, mu2 = _outcome_means(ds, outcome_fit, a, b)
    ind1 = (ds.a1 == a) & (ds.a2 == b)
    ind2 = (ds.a2 == a) & (ds.a1 == b)
    degenerate = _check_degenerate(ind1, ind2, a, b, "M2")
    t1 = _aipw_term(ind1, weight[:ds.n], ds.y1 - mu1, 0.0, "M2") + mu1
    t2 = _aipw_term(ind2, weight[ds.n:], ds.y2 - mu2, 0.0, "M2") + mu2
    return _weighted_estimate((t1 + t2) / 2, ds, EstimandSpec.mean(a, b), "M2",
                              {"degenerate_cell": degenerate})


def contrast(estimates: Sequence[EffectEstimate], weights: Sequence[float],
             estimand: EstimandSpec | None = None) -> EffectEstimate:
    """Weighted sum of estimates from the same model on the same data."""
    if len(estimates) != len(weights) or not estimates:
        raise ValueError("need one weight per estimate")
    models = {e.model for e in estimates}
    if len(models) != 1:
        raise MixedModels(f"cannot combine estimates from models {sorted(models)}")
    n = {e.n for e in estimates}
    if len(n) != 1:
        raise MixedModels("estimates come from datasets of different sizes")
    if estimand is None:
        terms = []
        for e, w in zip(estimates, weights):
            terms += [(w * tw, a, b) for tw, a, b in e.estimand.terms]
        estimand = EstimandSpec(tuple(terms))
    point = float(sum(w * e.point for e, w in zip(estimates, weights)))
    ifv = sum(w * e.if_values for e, w in zip(estimates, weights))
    diag = {"components": [e.estimand.name for e in estimates]}
    return EffectEstimate(estimand, models.pop(), point, np.asarray(ifv, float),
                          estimates[0].weights, diag)


def estimate_contrast(estimand: EstimandSpec, estimate_mean) -> EffectEstimate:
    """Evaluate ``estimate_mean(a, b)`` for each term of ``estimand`` and combine."""
    if estimand.is_mean:
        _, a, b = estimand.terms[0]
        return estimate_mean(a, b)
    parts = [estimate_mean(a, b) for _, a, b in estimand.terms]
    return contrast(parts, [w for w, _, _ in estimand.terms], estimand)


@dataclass(frozen=True, eq=False)
class BetweenWithinFit:
    """Co-twin-control regression ``y ~ b0 + bW a_own + bB a_bar + g'X_own + d'X_cotwin``."""

    beta0: float
    beta_W: float
    beta_B: float
    gamma: Mapping[str, float]
    delta: Mapping[str, float]
    fit: NuisanceFit = field(repr=False)


def fit_ctc(ds: PairedDataset, covariates: BasisSpec | Sequence[str] | None = None) -> BetweenWithinFit:
    """Between-within regression on stacked rows; ``beta_W`` is the co-twin-control effect.

    ``covariates`` is either a basis over row columns or a list of individual
    covariate names, each entered for the twin and (as ``cotwin_<name>``) the co-twin.
    """
    if covariates is None:
        covariates = ds.x_names
    if not isinstance(covariates, BasisSpec):
        names = list(covariates)
        covariates = BasisSpec(tuple(Linear(v) for v in names)
                               + tuple(Linear(f"cotwin_{v}") for v in names))
    w = ds.pair_weights
    if not np.any((ds.a1 != ds.a2) & (w > 0)):
        raise Collinear("no exposure-discordant pairs: a_own and a_bar are collinear")
    basis = BasisSpec((Linear("a_own"), Linear("a_bar")) + covariates.terms, intercept=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error", category=UserWarning)
        try:
            fit = fit_linear(ds.stacked, "y_own", basis)
        except UserWarning as exc:
            raise Collinear(f"between-within design is rank deficient: {exc}") from None
    coef = dict(zip(fit.labels, fit.coefficients.tolist()))
    gamma = {k: v for k, v in coef.items() if k not in ("(intercept)", "a_own", "a_bar")
             and not k.startswith("cotwin_")}
    delta = {k: v for k, v in coef.items() if k.startswith("cotwin_")}
    return BetweenWithinFit(coef["(intercept)"], coef["a_own"], coef["a_bar"], gamma, delta, fit)
