"""Model configuration and the end-to-end estimation recipe.

A :class:`Pipeline` re-fits every nuisance model (including the cross-ratio
MLE) on whatever dataset it is called with, which is what the bootstrap and
the Monte Carlo harness need.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping

import numpy as np

from .basis import BasisSpec, Categorical, Linear
from .dale import (DEFAULT_TERMS, CrossRatioModel, JointPropensity, empirical_joint_propensity,
                   fit_cross_ratio, joint_propensity)
from .data import PairedDataset
from .estimators import (EffectEstimate, EstimandSpec, estimate_contrast, estimate_m1, estimate_m2,
                         estimate_plugin, fit_ctc)
from .regression import DEFAULT_CLIP, NuisanceFit, fit_linear, fit_logistic, require_converged

MODELS = ("PLUGIN", "M1", "M2")


@dataclass(frozen=True)
class ModelConfig:
    """Bases for each nuisance regression, all evaluated on stacked rows.

    ``outcome_m1`` may use co-twin covariates; ``outcome_m2`` must use only
    shared and own covariates (plus ``a_own``/``a_cotwin``).  ``cotwin_propensity``
    models ``a_cotwin`` given shared and own covariates.
    """

    outcome_m1: BasisSpec
    propensity: BasisSpec
    cotwin_propensity: BasisSpec
    outcome_m2: BasisSpec | None = None
    cross_ratio_terms: tuple[str, ...] = DEFAULT_TERMS
    ctc_terms: tuple[str, ...] | None = None
    clip: float = DEFAULT_CLIP
    joint_model: str = "dale"

    def __post_init__(self):
        if self.joint_model not in ("dale", "empirical"):
            raise ValueError(f"joint_model must be 'dale' or 'empirical', got {self.joint_model!r}")
        object.__setattr__(self, "cross_ratio_terms", tuple(self.cross_ratio_terms))
        if self.ctc_terms is not None:
            object.__setattr__(self, "ctc_terms", tuple(self.ctc_terms))
        if self.outcome_m2 is None:
            object.__setattr__(self, "outcome_m2", self.outcome_m1)

    def to_dict(self) -> dict:
        d = {"outcome_m1": self.outcome_m1.to_dict(), "outcome_m2": self.outcome_m2.to_dict(),
             "propensity": self.propensity.to_dict(),
             "cotwin_propensity": self.cotwin_propensity.to_dict(),
             "cross_ratio_terms": list(self.cross_ratio_terms), "clip": self.clip,
             "joint_model": self.joint_model}
        if self.ctc_terms is not None:
            d["ctc_terms"] = list(self.ctc_terms)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(outcome_m1=BasisSpec.from_dict(d["outcome_m1"]),
                   outcome_m2=BasisSpec.from_dict(d["outcome_m2"]) if "outcome_m2" in d else None,
                   propensity=BasisSpec.from_dict(d["propensity"]),
                   cotwin_propensity=BasisSpec.from_dict(d["cotwin_propensity"]),
                   cross_ratio_terms=tuple(d.get("cross_ratio_terms", DEFAULT_TERMS)),
                   ctc_terms=tuple(d["ctc_terms"]) if "ctc_terms" in d else None,
                   clip=float(d.get("clip", DEFAULT_CLIP)),
                   joint_model=d.get("joint_model", "dale"))

    @classmethod
    def load(cls, path) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def with_clip(self, clip: float) -> "ModelConfig":
        return replace(self, clip=clip)


def saturated_config(shared: tuple[str, ...], individual: tuple[str, ...],
                     cross_ratio_terms: tuple[str, ...] = ()) -> ModelConfig:
    """Saturated bases for fully discrete covariates (used for exact cross-checks).

    The outcome model has a separate mean for every (covariate cell, a_own, a_cotwin);
    the propensity models are saturated in (shared, own) covariates and the
    joint propensity is the empirical pattern frequency in each pair cell.
    """
    own_cells = tuple(shared) + tuple(individual)
    both_cells = own_cells + tuple(f"cotwin_{v}" for v in individual)
    exposure = ("a_own", "a_cotwin")
    return ModelConfig(
        outcome_m1=BasisSpec((Categorical(both_cells + exposure),)),
        outcome_m2=BasisSpec((Categorical(own_cells + exposure),)),
        propensity=BasisSpec((Categorical(own_cells),)) if own_cells else BasisSpec(()),
        cotwin_propensity=BasisSpec((Categorical(own_cells),)) if own_cells else BasisSpec(()),
        cross_ratio_terms=tuple(cross_ratio_terms), clip=0.0, joint_model="empirical")


@dataclass(frozen=True, eq=False)
class Nuisances:
    outcome_m1: NuisanceFit | None = None
    outcome_m2: NuisanceFit | None = None
    propensity: NuisanceFit | None = None
    cotwin_propensity: NuisanceFit | None = None
    cross_ratio: CrossRatioModel | None = None
    joint: JointPropensity | None = field(default=None, repr=False)


def fit_nuisances(ds: PairedDataset, config: ModelConfig, models=MODELS) -> Nuisances:
    """Fit the nuisance models needed by ``models`` on the stacked rows of ``ds``."""
    rows = ds.stacked
    models = set(models)
    out: dict = {}
    if models & {"PLUGIN", "M1"}:
        out["outcome_m1"] = fit_linear(rows, "y_own", config.outcome_m1)
    if "M2" in models:
        out["outcome_m2"] = (out["outcome_m1"] if config.outcome_m2 == config.outcome_m1
                             and "outcome_m1" in out else fit_linear(rows, "y_own", config.outcome_m2))
    if models & {"M1", "M2"}:
        out["propensity"] = require_converged(fit_logistic(rows, "a_own", config.propensity))
    if "M1" in models and config.joint_model == "empirical":
        out["joint"] = empirical_joint_propensity(ds)
    elif "M1" in models:
        # a term that is constant in this sample (e.g. zygosity within MZ pairs) is aliased with the intercept
        terms = tuple(t for t in config.cross_ratio_terms if np.ptp(ds.shared(t)) > 0)
        out["cross_ratio"] = fit_cross_ratio(ds, out["propensity"], terms)
        out["joint"] = joint_propensity(ds, out["propensity"], out["cross_ratio"])
    if "M2" in models:
        out["cotwin_propensity"] = require_converged(
            fit_logistic(rows, "a_cotwin", config.cotwin_propensity))
    return Nuisances(**out)


def estimate(ds: PairedDataset, nuisances: Nuisances, model: str, estimand: EstimandSpec,
             clip: float = DEFAULT_CLIP) -> EffectEstimate:
    if model == "PLUGIN":
        return estimate_contrast(estimand, lambda a, b: estimate_plugin(ds, nuisances.outcome_m1, a, b))
    if model == "M1":
        return estimate_contrast(estimand, lambda a, b: estimate_m1(
            ds, nuisances.outcome_m1, nuisances.joint, a, b, clip))
    if model == "M2":
        return estimate_contrast(estimand, lambda a, b: estimate_m2(
            ds, nuisances.outcome_m2, nuisances.propensity, nuisances.cotwin_propensity, a, b, clip))
    raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


def ctc_covariates(ds: PairedDataset, config: ModelConfig) -> BasisSpec:
    names = config.ctc_terms if config.ctc_terms is not None else ds.x_names
    return BasisSpec(tuple(Linear(v) for v in names) + tuple(Linear(f"cotwin_{v}") for v in names))


@dataclass(frozen=True)
class Pipeline:
    """Picklable full re-fit recipe: ``pipeline(ds)`` returns the point estimate.

    ``model`` is one of PLUGIN, M1, M2 or CTC (the between-within ``beta_W``;
    ``estimand`` is ignored for CTC).
    """

    model: str
    estimand: EstimandSpec
    config: ModelConfig

    def run(self, ds: PairedDataset) -> EffectEstimate | float:
        if self.model == "CTC":
            return fit_ctc(ds, ctc_covariates(ds, self.config)).beta_W
        nuis = fit_nuisances(ds, self.config, (self.model,))
        return estimate(ds, nuis, self.model, self.estimand, self.config.clip)

    def __call__(self, ds: PairedDataset) -> float:
        out = self.run(ds)
        return float(out if isinstance(out, float) else out.point)
