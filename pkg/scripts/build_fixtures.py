"""Regenerate the JSON/CSV fixtures shipped in src/pairfx/fixtures.

    python3 scripts/build_fixtures.py

The DGM coefficients are chosen by hand (not fitted to any real data): the
true spillover effect is about -1.5 and the main effect about -2.1.  Every
DGM mean function lies in the span of the shipped "correct" bases.
"""
from __future__ import annotations

import json
from pathlib import Path

from pairfx.basis import BasisSpec, Interaction, Linear, Spline, Tensor
from pairfx.data import write_dataset
from pairfx.pipeline import ModelConfig
from pairfx.simulate import DgmConfig, LinearPredictor, Monomial, bank_schema, synthetic_dataset

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "pairfx" / "fixtures"
AGE0 = 14.8


def m(coef, *vars, shift=()):
    return Monomial(tuple(vars), coef, tuple(shift))


OUTCOME = LinearPredictor(9.0, (
    m(0.8, "parent_alcohol"), m(0.4, "parent_drug"),
    m(-0.15, "parent_alcohol", "parent_alcohol"),
    m(0.3, "parent_alcohol", "parent_drug"),
    m(0.2, "parent_occupation"), m(0.8, "sex_M"), m(0.3, "zygosity_MZ"),
    m(-0.6, "academic_motivation"), m(0.3, "sex_M", "academic_motivation"),
    m(0.5, "parent_conflict"), m(0.25, "parent_conflict", "parent_conflict"),
    m(0.1, "age", shift=(AGE0,)),
    m(1.4, "a_own"), m(0.4, "parent_alcohol", "a_own"), m(0.5, "sex_M", "a_own"),
    m(1.2, "a_cotwin"), m(0.5, "zygosity_MZ", "a_cotwin"),
    m(-0.5, "a_own", "a_cotwin"),
))

PROPENSITY = LinearPredictor(-2.3, (
    m(0.5, "parent_alcohol"), m(0.3, "parent_drug"),
    m(0.2, "parent_alcohol", "parent_drug"),
    m(0.6, "externalizing"), m(-0.5, "academic_motivation"), m(0.5, "parent_conflict"),
    m(0.25, "parent_alcohol", "parent_conflict"),
    m(0.4, "age", shift=(AGE0,)), m(0.3, "age", "age", shift=(AGE0, AGE0)),
))

CROSS_RATIO = {"intercept": 0.6, "zygosity_MZ": 0.8, "sex_M": 0.2}

OUTCOME_BASIS = BasisSpec((
    Spline("parent_alcohol"), Spline("parent_drug"),
    Tensor(("parent_alcohol", "parent_drug"), degree=2, num_knots=0),
    Linear("parent_occupation"), Linear("sex_M"), Linear("zygosity_MZ"),
    Linear("academic_motivation"), Interaction(("sex_M", "academic_motivation")),
    Spline("parent_conflict"), Linear("age"),
    Linear("a_own"), Interaction(("parent_alcohol", "a_own")), Interaction(("sex_M", "a_own")),
    Linear("a_cotwin"), Interaction(("zygosity_MZ", "a_cotwin")), Interaction(("a_own", "a_cotwin")),
))

# Unpenalized cubic tensors quasi-separate in the sparse high-alcohol corner at
# n=500, so the propensity interactions use bilinear (degree 1) tensors.
PROPENSITY_BASIS = BasisSpec((
    Linear("parent_alcohol"), Linear("parent_drug"),
    Tensor(("parent_alcohol", "parent_drug"), degree=1, num_knots=0),
    Linear("externalizing"), Linear("academic_motivation"), Linear("parent_conflict"),
    Tensor(("parent_alcohol", "parent_conflict"), degree=1, num_knots=0), Spline("age"),
))

# response a_cotwin: P(co-twin exposed | C, own X); the same terms in the index twin's covariates
COTWIN_PROPENSITY_BASIS = PROPENSITY_BASIS

MODEL_CONFIG = ModelConfig(outcome_m1=OUTCOME_BASIS, outcome_m2=OUTCOME_BASIS,
                           propensity=PROPENSITY_BASIS, cotwin_propensity=COTWIN_PROPENSITY_BASIS,
                           cross_ratio_terms=("zygosity_MZ", "sex_M"),
                           ctc_terms=("academic_motivation", "externalizing", "parent_conflict"))

DGM1 = DgmConfig("DGM1", OUTCOME, PROPENSITY, CROSS_RATIO, n=500, seed=1)
DGM2 = DgmConfig("DGM2", OUTCOME, PROPENSITY, {}, n=500, seed=2)


def write_json(name, obj):
    (FIXTURES / name).write_text(json.dumps(obj, indent=2) + "\n")


def build_dgm_fixtures():
    FIXTURES.mkdir(parents=True, exist_ok=True)
    write_json("schema.json", bank_schema().to_dict())
    write_json("model_config.json", MODEL_CONFIG.to_dict())
    DGM1.save(FIXTURES / "dgm1.json")
    DGM2.save(FIXTURES / "dgm2.json")
    write_dataset(synthetic_dataset(DGM1), FIXTURES / "mtfs_like.csv")


def build_world_fixtures():
    from pairfx.oracle import shipped_worlds, world_to_dict
    out = FIXTURES / "worlds"
    out.mkdir(parents=True, exist_ok=True)
    for name, world in shipped_worlds().items():
        write_json(f"worlds/{name}.json", world_to_dict(world))


if __name__ == "__main__":
    build_dgm_fixtures()
    build_world_fixtures()
