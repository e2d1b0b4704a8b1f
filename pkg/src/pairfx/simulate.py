"""Data-generating mechanisms and the Monte Carlo evaluation harness.

Two mechanisms share an outcome model and a marginal exposure model:

* ``DGM1`` draws ``(A1, A2)`` jointly from the two margins and a covariate
  dependent cross-ratio (so exposures are associated within pairs beyond the
  covariates, and the product-of-margins model is wrong);
* ``DGM2`` draws ``A1`` and ``A2`` independently given covariates.

Outcomes are bivariate normal around the outcome model, with variance 8 and a
within-pair covariance that is larger for MZ than for DZ pairs.
"""
from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .basis import BasisSpec, Interaction, Linear
from .dale import joint_table
from .data import ColumnSpec, PairedDataset, SchemaSpec, load_dataset
from .errors import REPLICATE_FAILURES, TooManyFailedReplicates
from .estimators import SPILLOVER, EstimandSpec
from .inference import (MAX_FAILURE_FRACTION, BootstrapPlan, bootstrap_ci, wald_ci)
from .pipeline import ModelConfig, Pipeline, estimate, fit_nuisances

FIXTURES = resources.files("pairfx") / "fixtures"


def fixture_path(name: str) -> Path:
    return Path(str(FIXTURES / name))


# ---------------------------------------------------------------- predictors

@dataclass(frozen=True)
class Monomial:
    """``coef * prod_k (column_k - shift_k)``."""

    vars: tuple[str, ...]
    coef: float
    shift: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(self.vars))
        shift = tuple(float(s) for s in self.shift) or (0.0,) * len(self.vars)
        if len(shift) != len(self.vars):
            raise ValueError("one shift per variable")
        object.__setattr__(self, "shift", shift)

    def evaluate(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        out = self.coef
        for v, s in zip(self.vars, self.shift):
            out = out * (np.asarray(columns[v], float) - s)
        return out


@dataclass(frozen=True)
class LinearPredictor:
    intercept: float
    terms: tuple[Monomial, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def evaluate(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        n = len(next(iter(columns.values())))
        out = np.full(n, float(self.intercept))
        for t in self.terms:
            out = out + t.evaluate(columns)
        return out

    @property
    def variables(self) -> set[str]:
        return {v for t in self.terms for v in t.vars}

    def to_dict(self) -> dict:
        terms = []
        for t in self.terms:
            d = {"vars": list(t.vars), "coef": t.coef}
            if any(t.shift):
                d["shift"] = list(t.shift)
            terms.append(d)
        return {"intercept": self.intercept, "terms": terms}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinearPredictor":
        return cls(float(d.get("intercept", 0.0)),
                   tuple(Monomial(tuple(t["vars"]), float(t["coef"]), tuple(t.get("shift", ())))
                         for t in d.get("terms", [])))


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class DgmConfig:
    """A data-generating mechanism over a resampled covariate bank.

    ``outcome`` is evaluated on stacked-row columns (shared, own, ``cotwin_*``,
    ``a_own``, ``a_cotwin``); ``propensity`` is the logit of ``P(A_own=1)`` on
    shared and own columns; ``cross_ratio`` maps ``"intercept"`` and shared
    0/1 columns to coefficients of ``log psi`` (ignored by DGM2).
    """

    kind: str
    outcome: LinearPredictor
    propensity: LinearPredictor
    cross_ratio: Mapping[str, float] = field(default_factory=dict)
    n: int = 500
    noise_variance: float = 8.0
    sigma_mz: float = 3.5
    sigma_dz: float = 1.0
    seed: int = 0
    bank: str | None = None

    def __post_init__(self):
        if self.kind not in ("DGM1", "DGM2"):
            raise ValueError(f"kind must be DGM1 or DGM2, got {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        for s in (self.sigma_mz, self.sigma_dz):
            if self.noise_variance ** 2 - s ** 2 <= 0:
                raise ValueError("outcome covariance matrix is not positive definite")
        object.__setattr__(self, "cross_ratio", dict(self.cross_ratio))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "n": self.n, "seed": self.seed, "bank": self.bank,
                "noise_variance": self.noise_variance, "sigma_mz": self.sigma_mz,
                "sigma_dz": self.sigma_dz, "outcome": self.outcome.to_dict(),
                "propensity": self.propensity.to_dict(), "cross_ratio": dict(self.cross_ratio)}

    @classmethod
    def from_dict(cls, d: Mapping) -> "DgmConfig":
        return cls(kind=d["kind"], outcome=LinearPredictor.from_dict(d["outcome"]),
                   propensity=LinearPredictor.from_dict(d["propensity"]),
                   cross_ratio=d.get("cross_ratio", {}), n=int(d.get("n", 500)),
                   noise_variance=float(d.get("noise_variance", 8.0)),
                   sigma_mz=float(d.get("sigma_mz", 3.5)), sigma_dz=float(d.get("sigma_dz", 1.0)),
                   seed=int(d.get("seed", 0)), bank=d.get("bank"))

    @classmethod
    def load(cls, path) -> "DgmConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_preset(name: str) -> DgmConfig:
    """``dgm1`` or ``dgm2`` from the shipped fixtures."""
    return DgmConfig.load(fixture_path(f"{name.lower()}.json"))


def default_schema() -> SchemaSpec:
    return SchemaSpec.load(fixture_path("schema.json"))


def default_model_config() -> ModelConfig:
    return ModelConfig.load(fixture_path("model_config.json"))


_BANKS: dict[str, PairedDataset] = {}


def load_bank(config: DgmConfig | None = None) -> PairedDataset:
    """The covariate bank named by ``config.bank`` (default: the shipped synthetic file)."""
    path = str(fixture_path("mtfs_like.csv") if config is None or config.bank is None else config.bank)
    if path not in _BANKS:
        _BANKS[path] = load_dataset(path, default_schema())
    return _BANKS[path]


# ---------------------------------------------------------------- generation

def _columns(ds: PairedDataset, a1, a2, own: int) -> dict[str, np.ndarray]:
    x_own, x_cot = (ds.x1, ds.x2) if own == 1 else (ds.x2, ds.x1)
    a_own, a_cot = (a1, a2) if own == 1 else (a2, a1)
    cols = {name: ds.c[:, k] for k, name in enumerate(ds.c_names)}
    for k, name in enumerate(ds.x_names):
        cols[name] = x_own[:, k]
        cols[f"cotwin_{name}"] = x_cot[:, k]
    n = ds.n
    cols["a_own"] = np.broadcast_to(np.asarray(a_own, float), (n,))
    cols["a_cotwin"] = np.broadcast_to(np.asarray(a_cot, float), (n,))
    return cols


def exposure_margins(config: DgmConfig, ds: PairedDataset):
    """``(P(A1=1 | C, X1), P(A2=1 | C, X2))`` under the configured exposure model."""
    return (expit(config.propensity.evaluate(_columns(ds, 0, 0, 1))),
            expit(config.propensity.evaluate(_columns(ds, 0, 0, 2))))


def log_cross_ratio(config: DgmConfig, ds: PairedDataset) -> np.ndarray:
    out = np.full(ds.n, float(config.cross_ratio.get("intercept", 0.0)))
    for name, coef in config.cross_ratio.items():
        if name != "intercept":
            out = out + coef * ds.shared(name)
    return out


def exposure_table(config: DgmConfig, ds: PairedDataset) -> np.ndarray:
    """True ``P(A1=a, A2=b | C, X1, X2)`` for every pair, shape ``(n, 2, 2)``."""
    p1, p2 = exposure_margins(config, ds)
    psi = np.exp(log_cross_ratio(config, ds)) if config.kind == "DGM1" else np.ones(ds.n)
    return joint_table(1 - p1, 1 - p2, psi)


def outcome_means(config: DgmConfig, ds: PairedDataset, a1, a2):
    """Outcome-model means of Twin 1 and Twin 2 at pair exposures ``(A1, A2) = (a1, a2)``."""
    return (config.outcome.evaluate(_columns(ds, a1, a2, 1)),
            config.outcome.evaluate(_columns(ds, a1, a2, 2)))


def potential_outcome_means(config: DgmConfig, ds: PairedDataset, a: int, b: int):
    """Means of ``Y_1^{a,b}`` and ``Y_2^{a,b}`` (own exposure ``a``, co-twin ``b``)."""
    return outcome_means(config, ds, a, b)[0], outcome_means(config, ds, b, a)[1]


def draw_exposures_and_outcomes(config: DgmConfig, covariates: PairedDataset,
                                rng: np.random.Generator, pair_ids=None) -> PairedDataset:
    n = covariates.n
    table = exposure_table(config, covariates).reshape(n, 4)
    u = rng.random(n)
    pattern = np.minimum((u[:, None] > np.cumsum(table, axis=1)).sum(axis=1), 3)
    a1, a2 = pattern // 2, pattern % 2
    mu1, mu2 = outcome_means(config, covariates, a1, a2)
    z = rng.standard_normal((n, 2))
    sigma = np.where(covariates.is_mz, config.sigma_mz, config.sigma_dz)
    v = config.noise_variance
    # Cholesky of [[v, s], [s, v]]
    y1 = mu1 + math.sqrt(v) * z[:, 0]
    y2 = mu2 + sigma / math.sqrt(v) * z[:, 0] + np.sqrt(v - sigma ** 2 / v) * z[:, 1]
    ids = covariates.pair_ids if pair_ids is None else pair_ids
    return covariates.replace(pair_ids=ids, a1=a1, a2=a2, y1=y1, y2=y2, weights=None)


def generate(config: DgmConfig, replicate_index: int, bank: PairedDataset | None = None) -> PairedDataset:
    """Replicate ``replicate_index``: ``n`` pairs resampled from the bank, then exposures and outcomes.

    Deterministic in ``(config.seed, replicate_index)``.
    """
    bank = load_bank(config) if bank is None else bank
    rng = np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(replicate_index,)))
    idx = rng.integers(0, bank.n, size=config.n)
    covs = bank.replace(pair_ids=[f"r{replicate_index}-{k}" for k in range(config.n)],
                        c=bank.c[idx], x1=bank.x1[idx], x2=bank.x2[idx], a1=bank.a1[idx],
                        a2=bank.a2[idx], y1=bank.y1[idx], y2=bank.y2[idx], weights=None)
    return draw_exposures_and_outcomes(config, covs, rng)


def true_value(config: DgmConfig, estimand: EstimandSpec, bank: PairedDataset | None = None) -> float:
    """Exact ``sum_k w_k E[Y^{a_k,b_k}]``: the bank average of the outcome model at forced exposures.

    Pairs are resampled uniformly from the bank, so the bank is the covariate
    population and the average is exact.
    """
    bank = load_bank(config) if bank is None else bank
    total = 0.0
    for w, a, b in estimand.terms:
        mu1, mu2 = potential_outcome_means(config, bank, a, b)
        total += w * float(np.mean((mu1 + mu2) / 2))
    return total


# ---------------------------------------------------------------- synthetic bank

def bank_schema() -> SchemaSpec:
    return SchemaSpec(
        shared=(ColumnSpec("parent_alcohol"), ColumnSpec("parent_drug"),
                ColumnSpec("parent_occupation"), ColumnSpec("age"),
                ColumnSpec("sex", "categorical", ("F", "M")),
                ColumnSpec("zygosity", "categorical", ("DZ", "MZ"))),
        individual=(ColumnSpec("academic_motivation"), ColumnSpec("externalizing"),
                    ColumnSpec("parent_conflict")))


def synthetic_covariates(n: int = 500, seed: int = 20240501) -> PairedDataset:
    """Synthetic pair covariates with the MTFS-like schema (placeholders for a, y).

    Parent abuse severities are log-normal and correlated, occupation is a
    1..6 level, sex (pair level) is Bernoulli(0.5), zygosity is MZ with
    probability 0.63, and the individual covariates correlate 0.5 within pairs.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, 4))
    alcohol = np.exp(0.5 * z[:, 0])
    drug = np.exp(0.5 * (0.3 * z[:, 0] + math.sqrt(1 - 0.09) * z[:, 1]))
    occupation = np.clip(np.round(3 + 1.2 * z[:, 2]), 1, 6)
    age = np.round(14.8 + 0.5 * z[:, 3], 2)
    sex = (rng.random(n) < 0.5).astype(float)
    mz = (rng.random(n) < 0.63).astype(float)
    corr = np.array([[1.0, 0.5], [0.5, 1.0]])
    draws = rng.multivariate_normal([0, 0], corr, size=(n, 3))  # (n, covariate, twin)
    motivation = draws[:, 0, :]
    externalizing = np.exp(0.6 * draws[:, 1, :])
    conflict = draws[:, 2, :]
    x = np.stack([motivation, externalizing, conflict], axis=1)  # (n, covariate, twin)
    schema = bank_schema()
    return PairedDataset(pair_ids=[f"P{i + 1:04d}" for i in range(n)],
                         c=np.column_stack([np.round(alcohol, 4), np.round(drug, 4), occupation, age, sex, mz]),
                         x1=np.round(x[:, :, 0], 4), x2=np.round(x[:, :, 1], 4),
                         a1=np.zeros(n), a2=np.zeros(n), y1=np.zeros(n), y2=np.zeros(n),
                         c_names=schema.shared_names, x_names=schema.individual_names,
                         zygosity_column=schema.zygosity_column, schema=schema)


def synthetic_dataset(config: DgmConfig, n: int = 500, seed: int = 20240501) -> PairedDataset:
    """Synthetic covariates with exposures and outcomes drawn once from ``config``."""
    covs = synthetic_covariates(n, seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    ds = draw_exposures_and_outcomes(config, covs, rng)
    return ds.replace(y1=np.round(ds.y1, 4), y2=np.round(ds.y2, 4))


# ---------------------------------------------------------------- recipes

@dataclass(frozen=True)
class MisspecKnob:
    """Swap a correct basis for the impoverished one; never affects data generation."""

    wrong_propensity: bool = False
    wrong_outcome: bool = False

    @property
    def suffix(self) -> str:
        if self.wrong_propensity and self.wrong_outcome:
            return "wr.both"
        if self.wrong_propensity:
            return "wr.prop"
        if self.wrong_outcome:
            return "wr.outc"
        return ""


WRONG_OUTCOME = BasisSpec((Linear("a_own"), Linear("a_cotwin"), Interaction(("a_own", "a_cotwin")),
                           Linear("parent_occupation")))
WRONG_PROPENSITY = BasisSpec((Linear("age"),))


def misspecify(config: ModelConfig, knob: MisspecKnob) -> ModelConfig:
    if knob.wrong_outcome:
        config = replace(config, outcome_m1=WRONG_OUTCOME, outcome_m2=WRONG_OUTCOME)
    if knob.wrong_propensity:
        config = replace(config, propensity=WRONG_PROPENSITY, cotwin_propensity=WRONG_PROPENSITY)
    return config


@dataclass(frozen=True)
class EstimatorRecipe:
    model: str
    knob: MisspecKnob = MisspecKnob()
    bootstrap: bool = True
    label: str = ""

    @property
    def name(self) -> str:
        if self.label:
            return self.label
        base = {"M1": "beta1", "M2": "beta2"}.get(self.model, self.model.lower())
        return f"{base}_{self.knob.suffix}" if self.knob.suffix else base

    def model_config(self, base: ModelConfig) -> ModelConfig:
        return misspecify(base, self.knob)

    def to_dict(self) -> dict:
        return {"model": self.model, "wrong_propensity": self.knob.wrong_propensity,
                "wrong_outcome": self.knob.wrong_outcome, "bootstrap": self.bootstrap,
                "label": self.name}

    @classmethod
    def from_dict(cls, d: Mapping) -> "EstimatorRecipe":
        return cls(d["model"], MisspecKnob(bool(d.get("wrong_propensity")), bool(d.get("wrong_outcome"))),
                   bool(d.get("bootstrap", True)), d.get("label", ""))


def _row(model, prop=False, outc=False, boot=True):
    return EstimatorRecipe(model, MisspecKnob(prop, outc), boot)


PRESETS = {
    "table3": ("dgm1", (_row("M1"), _row("M1", prop=True), _row("M1", outc=True),
                        _row("M1", prop=True, outc=True), _row("M2"))),
    "table4": ("dgm2", (_row("M1"), _row("M2"), _row("M2", prop=True), _row("M2", outc=True),
                        _row("M2", prop=True, outc=True))),
}


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class RowStats:
    name: str
    bias: float
    variance: float
    if_variance: float
    wald_coverage: float
    boot_variance: float | None
    boot_coverage: float | None
    replicates: int
    failures: int = 0
    points: tuple[float, ...] = field(default=(), repr=False)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("name", "bias", "variance", "if_variance", "wald_coverage",
                                           "boot_variance", "boot_coverage", "replicates", "failures")}
        d["points"] = list(self.points)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "RowStats":
        d = dict(d)
        d["points"] = tuple(d.get("points", ()))
        return cls(**d)


@dataclass(frozen=True)
class MonteCarloReport:
    dgm: str
    n: int
    R: int
    B: int
    seed: int
    estimand: str
    truth: float
    truth_method: str
    rows: tuple[RowStats, ...]

    def row(self, name: str) -> RowStats:
        return next(r for r in self.rows if r.name == name)

    def to_dict(self) -> dict:
        return {"dgm": self.dgm, "n": self.n, "R": self.R, "B": self.B, "seed": self.seed,
                "estimand": self.estimand, "truth": self.truth, "truth_method": self.truth_method,
                "rows": [r.to_dict() for r in self.rows]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "MonteCarloReport":
        return cls(d["dgm"], int(d["n"]), int(d["R"]), int(d["B"]), int(d["seed"]), d["estimand"],
                   float(d["truth"]), d["truth_method"], tuple(RowStats.from_dict(r) for r in d["rows"]))

    def render_table(self) -> str:
        def fmt(v, pct=False):
            if v is None:
                return "-"
            return f"{v:.1f}" if pct else f"{v:.3f}"
        head = ["Estimator", "Bias", "Var", "IF-Var Est", "Wald Cov'g", "Btstp-Var Est", "Btstp Cov'g"]
        body = [[r.name, fmt(r.bias), fmt(r.variance), fmt(r.if_variance),
                 fmt(r.wald_coverage, True), fmt(r.boot_variance), fmt(r.boot_coverage, True)]
                for r in self.rows]
        widths = [max(len(row[k]) for row in [head] + body) for k in range(len(head))]
        line = lambda cells: "  ".join(c.ljust(w) if k == 0 else c.rjust(w)
                                       for k, (c, w) in enumerate(zip(cells, widths)))
        title = (f"{self.dgm}: {self.estimand}, n={self.n}, R={self.R}, B={self.B}, "
                 f"truth={self.truth:.3f}")
        return "\n".join([title, line(head)] + [line(b) for b in body]) + "\n"


@dataclass(frozen=True)
class _Job:
    config: DgmConfig
    recipes: tuple[EstimatorRecipe, ...]
    model_config: ModelConfig
    estimand: EstimandSpec
    B: int
    level: float
    truth: float


def _replicate(args):
    job, r = args
    ds = generate(job.config, r)
    out = []
    for k, recipe in enumerate(job.recipes):
        mc = recipe.model_config(job.model_config)
        try:
            nuis = fit_nuisances(ds, mc, (recipe.model,))
            est = estimate(ds, nuis, recipe.model, job.estimand, mc.clip)
        except REPLICATE_FAILURES:
            out.append(None)
            continue
        ci = wald_ci(est, job.level)
        rec = [est.point, est.if_variance, ci.covers(job.truth), None, None]
        if recipe.bootstrap and job.B > 0:
            plan = BootstrapPlan(job.B, seed=job.config.seed, workers=1)
            plan = replace(plan, seed=int(np.random.SeedSequence(
                job.config.seed, spawn_key=(r, k)).generate_state(1)[0]))
            try:
                boot = bootstrap_ci(ds, Pipeline(recipe.model, job.estimand, mc), plan, job.level)
                rec[3], rec[4] = boot.variance, boot.ci.covers(job.truth)
            except (TooManyFailedReplicates,):
                pass
        out.append(rec)
    return out


def run_monte_carlo(config: DgmConfig, recipes: Sequence[EstimatorRecipe], R: int, B: int = 0,
                    model_config: ModelConfig | None = None, estimand: EstimandSpec = SPILLOVER,
                    level: float = 0.95, workers: int = 1) -> MonteCarloReport:
    """Simulate ``R`` datasets and score every recipe against the exact truth.

    Replicate ``r`` uses the stream ``(config.seed, r)``; the report does not
    depend on ``workers``.  A recipe whose nuisance fit fails on more than 5%
    of replicates raises TooManyFailedReplicates.
    """
    if R < 1:
        raise ValueError("R must be at least 1")
    recipes = tuple(recipes)
    model_config = default_model_config() if model_config is None else model_config
    truth = true_value(config, estimand)
    job = _Job(config, recipes, model_config, estimand, B, level, truth)
    tasks = [(job, r) for r in range(R)]
    nworkers = (os.cpu_count() or 1) if workers == 0 else max(1, workers)
    if nworkers == 1:
        results = [_replicate(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            results = list(pool.map(_replicate, tasks, chunksize=max(1, R // (8 * nworkers))))
    rows = []
    for k, recipe in enumerate(recipes):
        recs = [res[k] for res in results if res[k] is not None]
        failures = R - len(recs)
        if failures > MAX_FAILURE_FRACTION * R or not recs:
            raise TooManyFailedReplicates(failures, R)
        pts = np.array([x[0] for x in recs])
        boots = [x for x in recs if x[3] is not None]
        rows.append(RowStats(
            name=recipe.name, bias=float(pts.mean() - truth),
            variance=float(pts.var(ddof=1)) if len(pts) > 1 else 0.0,
            if_variance=float(np.mean([x[1] for x in recs])),
            wald_coverage=100.0 * float(np.mean([x[2] for x in recs])),
            boot_variance=float(np.mean([x[3] for x in boots])) if boots else None,
            boot_coverage=100.0 * float(np.mean([x[4] for x in boots])) if boots else None,
            replicates=len(recs), failures=failures, points=tuple(pts.tolist())))
    return MonteCarloReport(config.kind, config.n, R, B, config.seed, estimand.name, truth,
                            "bank average of the outcome model at forced exposures", tuple(rows))
