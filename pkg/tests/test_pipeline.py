import numpy as np
import pytest

from pairfx.basis import BasisSpec, Linear
from pairfx.data import subset_by_zygosity
from pairfx.estimators import SPILLOVER, EstimandSpec
from pairfx.pipeline import MODELS, ModelConfig, Pipeline, estimate, fit_nuisances, saturated_config
from pairfx.simulate import default_model_config, generate, load_preset


def test_model_config_round_trip(tmp_path):
    cfg = default_model_config()
    again = ModelConfig.from_dict(cfg.to_dict())
    assert again == cfg
    p = tmp_path / "m.json"
    p.write_text(__import__("json").dumps(cfg.with_clip(0.05).to_dict()))
    assert ModelConfig.load(p).clip == 0.05
    with pytest.raises(ValueError):
        ModelConfig(BasisSpec(()), BasisSpec(()), BasisSpec(()), joint_model="copula")


def test_outcome_m2_defaults_to_m1():
    b = BasisSpec((Linear("a_own"),))
    assert ModelConfig(b, BasisSpec(()), BasisSpec(())).outcome_m2 == b


@pytest.mark.filterwarnings("ignore::pairfx.regression.RankDeficiencyWarning")
def test_subgroup_fit_drops_constant_cross_ratio_terms():
    ds = generate(load_preset("dgm1"), 3)
    mz = subset_by_zygosity(ds, "MZ")
    nuis = fit_nuisances(mz, default_model_config(), ("M1",))
    assert nuis.cross_ratio.terms == ("sex_M",)
    assert np.isfinite(estimate(mz, nuis, "M1", SPILLOVER).point)


def test_pipeline_run_and_call_agree():
    ds = generate(load_preset("dgm2"), 4)
    for model in MODELS:
        pipe = Pipeline(model, SPILLOVER, default_model_config())
        assert pipe(ds) == pipe.run(ds).point
    ctc = Pipeline("CTC", SPILLOVER, default_model_config())
    assert isinstance(ctc.run(ds), float)
    with pytest.raises(ValueError):
        Pipeline("M3", SPILLOVER, default_model_config())(ds)


def test_saturated_config_uses_empirical_joint():
    cfg = saturated_config(("c",), ("x",))
    assert cfg.joint_model == "empirical" and cfg.clip == 0
    assert "cotwin_x" in cfg.outcome_m1.variables and "cotwin_x" not in cfg.outcome_m2.variables
