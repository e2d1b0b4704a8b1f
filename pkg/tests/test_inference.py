import numpy as np
import pytest

from pairfx.basis import BasisSpec, Linear
from pairfx.errors import TooManyFailedReplicates, ZeroPropensity
from pairfx.estimators import SPILLOVER, EffectEstimate, EstimandSpec
from pairfx.inference import (BootstrapPlan, ConfidenceInterval, bootstrap_ci, percentile_interval,
                              resample_pairs, subgroup_difference, wald_ci, z_quantile)
from pairfx.pipeline import ModelConfig, Pipeline

from conftest import random_pairs

LINEAR = BasisSpec((Linear("z"), Linear("x"), Linear("a_own"), Linear("a_cotwin")))
PLUGIN = Pipeline("PLUGIN", SPILLOVER, ModelConfig(LINEAR, BasisSpec(()), BasisSpec(())))


def est(ifv, point=0.0):
    return EffectEstimate(SPILLOVER, "M1", point, np.asarray(ifv, float))


def test_z_quantile():
    assert z_quantile(0.95) == pytest.approx(1.959963984540054, abs=1e-12)
    assert z_quantile(0.9) == pytest.approx(1.6448536269514722, abs=1e-12)


def test_wald_zero_influence_is_degenerate():
    ci = wald_ci(est(np.zeros(10), 3.0))
    assert (ci.lower, ci.upper) == (3.0, 3.0)


def test_wald_hand_arithmetic():
    ci = wald_ci(est([1, -1, 2, -2]))
    assert ci.se == pytest.approx(np.sqrt(10) / 4, abs=1e-12)
    assert ci.upper == pytest.approx(1.5495, abs=1e-4) and ci.lower == pytest.approx(-1.5495, abs=1e-4)
    assert ci.method == "wald_if"


def test_wald_width_shrinks_with_duplication(rng):
    ds = random_pairs(rng, 100)
    mean00 = Pipeline("PLUGIN", EstimandSpec.mean(0, 0), PLUGIN.config)
    e = mean00.run(ds)
    e2 = mean00.run(ds.take(np.r_[np.arange(100), np.arange(100)]))
    w1 = wald_ci(e).upper - wald_ci(e).lower
    w2 = wald_ci(e2).upper - wald_ci(e2).lower
    assert w1 / w2 == pytest.approx(np.sqrt(2), rel=1e-6)


def test_interval_validation():
    with pytest.raises(ValueError):
        ConfidenceInterval(1.0, 0.0)
    with pytest.raises(ValueError):
        ConfidenceInterval(0.0, 1.0, level=1.0)
    with pytest.raises(ValueError):
        BootstrapPlan(B=0)


def test_percentile_nearest_rank():
    v = np.arange(1, 201, dtype=float)[::-1]
    # floor(0.025*200) = 5, ceil(0.975*200) = 195
    assert percentile_interval(v, 0.95) == (5.0, 195.0)
    assert percentile_interval([7.0], 0.95) == (7.0, 7.0)


def test_single_replicate(rng):
    ds = random_pairs(rng, 80)
    res = bootstrap_ci(ds, PLUGIN, BootstrapPlan(B=1, seed=4))
    assert res.ci.lower == res.ci.upper == res.replicates[0]
    assert res.ci.method == "percentile_bootstrap" and res.ci.num_bootstrap == 1


def test_bootstrap_is_deterministic_and_worker_independent(rng):
    ds = random_pairs(rng, 80)
    a = bootstrap_ci(ds, PLUGIN, BootstrapPlan(B=40, seed=9))
    b = bootstrap_ci(ds, PLUGIN, BootstrapPlan(B=40, seed=9))
    c = bootstrap_ci(ds, PLUGIN, BootstrapPlan(B=40, seed=9, workers=2))
    np.testing.assert_array_equal(a.replicates, b.replicates)
    np.testing.assert_array_equal(a.replicates, c.replicates)
    assert a.ci == b.ci == c.ci
    d = bootstrap_ci(ds, PLUGIN, BootstrapPlan(B=40, seed=10))
    assert not np.array_equal(a.replicates, d.replicates)


def test_resample_keeps_pairs_intact(rng):
    ds = random_pairs(rng, 30)
    rs = resample_pairs(ds, np.random.default_rng(0))
    assert rs.n == ds.n
    lookup = {p: i for i, p in enumerate(ds.pair_ids)}
    for k, pid in enumerate(rs.pair_ids):
        i = lookup[pid.split("#")[0]]
        assert rs.y1[k] == ds.y1[i] and rs.y2[k] == ds.y2[i] and rs.a2[k] == ds.a2[i]


class Flaky:
    """Fails on a fixed fraction of calls."""

    def __init__(self, every):
        self.every = every

    def __call__(self, ds):
        if int(ds.y1.sum() * 1e6) % self.every == 0:
            raise ZeroPropensity("synthetic failure")
        return float(ds.y1.mean())


def test_failed_replicates_are_counted_then_capped(rng):
    ds = random_pairs(rng, 60)
    ok = bootstrap_ci(ds, Flaky(1000), BootstrapPlan(B=100, seed=1))
    assert ok.failures <= 5 and len(ok.replicates) == 100 - ok.failures
    with pytest.raises(TooManyFailedReplicates):
        bootstrap_ci(ds, Flaky(2), BootstrapPlan(B=100, seed=1))


def twinned_strata(ds):
    n = ds.n
    mz = ds.replace(c=np.column_stack([np.ones(n), ds.c[:, 1:]]))
    dz = ds.replace(c=np.column_stack([np.zeros(n), ds.c[:, 1:]]),
                    pair_ids=[f"d{p}" for p in ds.pair_ids])
    both = mz.take(np.arange(n))
    return both.replace(pair_ids=list(mz.pair_ids) + list(dz.pair_ids),
                        c=np.vstack([mz.c, dz.c]), x1=np.vstack([ds.x1, ds.x1]), x2=np.vstack([ds.x2, ds.x2]),
                        a1=np.r_[ds.a1, ds.a1], a2=np.r_[ds.a2, ds.a2], y1=np.r_[ds.y1, ds.y1],
                        y2=np.r_[ds.y2, ds.y2])


def test_identical_subgroups_give_zero_difference(rng):
    ds = twinned_strata(random_pairs(rng, 120))
    point, res = subgroup_difference(ds, PLUGIN, BootstrapPlan(B=200, seed=3))
    assert point == 0.0
    assert res.ci.lower < 0 < res.ci.upper


def test_subgroup_difference_covers_zero_when_effects_are_equal(rng):
    covered, reps = 0, 40
    for _ in range(reps):
        ds = random_pairs(rng, 160)
        _, res = subgroup_difference(ds, PLUGIN, BootstrapPlan(B=100, seed=int(rng.integers(1 << 30))))
        covered += res.ci.covers(0.0)
    assert covered / reps >= 0.85
