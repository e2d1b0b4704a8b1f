import itertools
import json

import numpy as np
import pytest

from pairfx.errors import (ModelAssumptionViolated, NoDiscordantMass, PositivityViolation,
                           WorldValidationError)
from pairfx.estimators import EstimandSpec
from pairfx.oracle import (MAX_ATOMS, PATTERNS, Atom, DiscreteWorld, assumption_profile, ctc_effect,
                           expand_world, g_formula, load_world, no_interference_ctc,
                           population_estimate, shipped_world_paths, shipped_worlds, target,
                           true_mean_po, verify_world, world_from_dict, world_to_dict)
from pairfx.pipeline import estimate, fit_nuisances, saturated_config

WORLDS = shipped_worlds()
INDEP = ((0.25, 0.25), (0.25, 0.25))


def const_world(y=3.0):
    table = ((y, y), (y, y))
    return DiscreteWorld("const", (Atom(1.0, 0, (), (), (), INDEP, table, table),))


def confounded8():
    """u drives both exposure and outcome; nothing about u is measured."""
    atoms = []
    for u, x1, x2 in itertools.product((0, 1), repeat=3):
        p = (0.3 if u else 0.7) * (0.6 if x1 == x2 else 0.4) / 2
        e = 0.9 if u else 0.2
        exp = ((1 - e) ** 2, (1 - e) * e), ((1 - e) * e, e ** 2)
        y = lambda x: tuple(tuple(1 + 2 * u + x + 1.5 * a - 0.5 * b for b in (0, 1)) for a in (0, 1))
        atoms.append(Atom(p, u, (), (x1,), (x2,), exp, y(x1), y(x2)))
    return DiscreteWorld("confounded8", atoms, (), ("x",))


def test_truth_of_constant_and_linear_worlds():
    w = const_world()
    assert all(true_mean_po(w, j, a, b) == 3.0 for j in (1, 2) for a, b in PATTERNS)
    lin = confounded8()
    # E[1 + 2u + x + 1.5a - 0.5b] with P(u=1)=0.3, P(x=1)=0.5
    assert target(lin, 1, 0) == pytest.approx(1 + 0.6 + 0.5 + 1.5, abs=1e-12)
    assert target(lin, 0, 1) == pytest.approx(1 + 0.6 + 0.5 - 0.5, abs=1e-12)


def test_enumeration_matches_sampling():
    w = confounded8()
    rng = np.random.default_rng(7)
    n = 10_000_000
    atom = rng.choice(len(w.atoms), size=n, p=w.P)
    pat = (rng.random(n)[:, None] > np.cumsum(w.E.reshape(-1, 4), axis=1)[atom]).sum(1)
    a1, a2 = pat // 2, pat % 2
    y1 = w.Y[0][atom, a1, a2]
    # naive contrast of observed means is biased by u; the g-formula only adjusts for x
    sel = (a1 == 1) & (a2 == 0)
    x1 = np.array([at.x1[0] for at in w.atoms])[atom]
    x2 = np.array([at.x2[0] for at in w.atoms])[atom]
    strata = x1 * 2 + x2
    g = 0.0
    for s in range(4):
        m = strata == s
        g += m.mean() * y1[m & sel].mean()
    se = y1[sel].std() / np.sqrt(sel.sum())
    assert abs(g - g_formula(w, 1, 1, 0)) < 3 * se
    assert abs(g_formula(w, 1, 1, 0) - true_mean_po(w, 1, 1, 0)) > 0.1


def test_g_formula_identity_and_confounding_gap():
    w = WORLDS["identified"]
    for j in (1, 2):
        for a, b in PATTERNS:
            assert g_formula(w, j, a, b) == pytest.approx(true_mean_po(w, j, a, b), abs=1e-12)
    c = WORLDS["confounded"]
    assert max(abs(g_formula(c, 1, a, b) - true_mean_po(c, 1, a, b)) for a, b in PATTERNS) > 0.01


def test_positivity_violation_names_the_cell():
    w = WORLDS["positivity_violation"]
    with pytest.raises(PositivityViolation) as err:
        for a, b in PATTERNS:
            g_formula(w, 1, a, b)
    assert err.value.pattern in PATTERNS


def test_ctc_identity_gap_and_no_interference():
    lhs, rhs = ctc_effect(WORLDS["symmetric"])
    assert lhs == pytest.approx(rhs, abs=1e-12)
    lhs, rhs = ctc_effect(WORLDS["asymmetric"])
    assert abs(lhs - rhs) > 0.01
    w = WORLDS["no_interference"]
    assert ctc_effect(w)[0] == pytest.approx(no_interference_ctc(w), abs=1e-12)
    with pytest.raises(ModelAssumptionViolated):
        no_interference_ctc(WORLDS["symmetric"])


def test_ctc_requires_discordant_pairs():
    never = ((0.5, 0.0), (0.0, 0.5))
    y = ((0.0, 1.0), (2.0, 3.0))
    w = DiscreteWorld("concordant", (Atom(1.0, 0, (), (), (), never, y, y),))
    with pytest.raises(NoDiscordantMass):
        ctc_effect(w)


@pytest.mark.parametrize("name,est", [("identified", "M1"), ("model2", "M1"), ("model2", "M2")])
def test_population_double_robustness(name, est):
    w = WORLDS[name]
    for spec in ("exact", "wrong_outcome", "wrong_propensity"):
        for a, b in PATTERNS:
            assert population_estimate(w, est, spec, a, b) == pytest.approx(target(w, a, b), abs=1e-10)
    gap = max(abs(population_estimate(w, est, "wrong_both", a, b) - target(w, a, b)) for a, b in PATTERNS)
    assert gap > 0.01


def test_population_estimate_refuses_unmet_assumptions():
    with pytest.raises(ModelAssumptionViolated):
        population_estimate(WORLDS["confounded"], "M1", "exact", 0, 0)
    with pytest.raises(ModelAssumptionViolated):
        population_estimate(WORLDS["identified"], "M2", "exact", 0, 0)
    with pytest.raises(ValueError):
        population_estimate(WORLDS["identified"], "M1", "roughly", 0, 0)


def test_assumption_profiles():
    assert assumption_profile(WORLDS["model2"]) == dict.fromkeys(assumption_profile(WORLDS["model2"]), True)
    assert not assumption_profile(WORLDS["confounded"])["A1"]
    assert not assumption_profile(WORLDS["positivity_violation"])["A2"]
    assert not assumption_profile(WORLDS["asymmetric"])["C4"]
    assert not assumption_profile(WORLDS["identified"])["A4"]


def test_validation_names_the_world(tmp_path):
    d = world_to_dict(WORLDS["symmetric"])
    d["atoms"][0]["p"] -= 0.1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    with pytest.raises(WorldValidationError, match="symmetric"):
        load_world(path)
    path.write_text("{not json")
    with pytest.raises(WorldValidationError):
        load_world(path)
    atom = Atom(1 / (MAX_ATOMS + 1), 0, (), (), (), INDEP, ((0, 0), (0, 0)), ((0, 0), (0, 0)))
    with pytest.raises(WorldValidationError, match="atoms"):
        DiscreteWorld("huge", (atom,) * (MAX_ATOMS + 1))


def test_json_round_trip_and_shipped_files():
    for path in shipped_world_paths():
        w = load_world(path)
        assert world_to_dict(world_from_dict(world_to_dict(w))) == world_to_dict(w)
        assert world_to_dict(w) == world_to_dict(WORLDS[w.name])


def test_every_shipped_world_verifies():
    results = [r for w in WORLDS.values() for r in verify_world(w)]
    assert len(results) >= 10
    assert all(r.passed for r in results), [r for r in results if not r.passed]


@pytest.mark.parametrize("name,model", [("identified", "M1"), ("identified", "PLUGIN"),
                                        ("model2", "M1"), ("model2", "M2")])
def test_estimators_on_expanded_world_recover_truth(name, model):
    w = WORLDS[name]
    ds = expand_world(w)
    nuis = fit_nuisances(ds, saturated_config(w.c_names, w.x_names), models=(model,))
    for a, b in PATTERNS:
        got = estimate(ds, nuis, model, EstimandSpec.mean(a, b)).point
        assert got == pytest.approx(target(w, a, b), abs=1e-10)
