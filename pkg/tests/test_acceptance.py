"""End-to-end acceptance checks, one test per criterion.

Each test prints a ``PASS k: ...`` or ``FAIL k: ...`` line, and the lines are
repeated in the terminal summary.  The Monte Carlo criteria take minutes;
``PAIRFX_THREADS`` sets the worker count (default: all CPUs).
"""
import os
import time

import numpy as np
from pairfx.dale import cross_ratio, joint_table
from pairfx.estimators import SPILLOVER, EstimandSpec
from pairfx.oracle import (PATTERNS, assumption_profile, ctc_effect, expand_world,
                           g_formula, population_estimate, shipped_worlds, target, true_mean_po)
from pairfx.pipeline import MODELS, Pipeline, estimate, fit_nuisances, saturated_config
from pairfx.simulate import PRESETS, default_model_config, EstimatorRecipe, generate, load_preset, run_monte_carlo

WORKERS = int(os.environ.get("PAIRFX_THREADS", "0"))
WORLDS = shipped_worlds()


def test_1_oracle_identification(verdict):
    t0 = time.perf_counter()
    worst, gap = 0.0, 0.0
    for w in WORLDS.values():
        prof = assumption_profile(w)
        if prof["A1"] and prof["A2"] and prof["A3"]:
            worst = max(worst, max(abs(g_formula(w, j, a, b) - true_mean_po(w, j, a, b))
                                   for j in (1, 2) for a, b in PATTERNS))
    c = WORLDS["confounded"]
    gap = max(abs(g_formula(c, j, a, b) - true_mean_po(c, j, a, b)) for j in (1, 2) for a, b in PATTERNS)
    ctc_ok = [abs(l - r) for l, r in (ctc_effect(w) for w in WORLDS.values()
                                      if all(assumption_profile(w)[k] for k in ("C1", "C2", "C3", "C4")))]
    l, r = ctc_effect(WORLDS["asymmetric"])
    secs = time.perf_counter() - t0
    ok = worst <= 1e-12 and gap > 0.01 and max(ctc_ok) <= 1e-12 and abs(l - r) > 0.01 and secs < 5
    verdict(1, ok, f"g-formula max err {worst:.1e}, confounded gap {gap:.3f}, "
                   f"CTC max err {max(ctc_ok):.1e} over {len(ctc_ok)} worlds, C4-violating gap {abs(l - r):.3f}, "
                   f"{secs:.2f}s")


def test_2_population_double_robustness(verdict):
    t0 = time.perf_counter()
    cases = [("identified", "M1"), ("model2", "M1"), ("model2", "M2")]
    worst, gap = 0.0, np.inf
    for name, est in cases:
        w = WORLDS[name]
        for a, b in PATTERNS:
            for spec in ("wrong_outcome", "wrong_propensity"):
                worst = max(worst, abs(population_estimate(w, est, spec, a, b) - target(w, a, b)))
        gap = min(gap, max(abs(population_estimate(w, est, "wrong_both", a, b) - target(w, a, b))
                           for a, b in PATTERNS))
    secs = time.perf_counter() - t0
    verdict(2, worst <= 1e-10 and gap > 0.01 and secs < 5,
            f"max error with one nuisance wrong {worst:.1e}, smallest wrong-both gap {gap:.3f}, {secs:.2f}s")


def test_3_sampling_double_robustness(verdict):
    t0 = time.perf_counter()
    recipes = PRESETS["table3"][1][:4]
    rep = run_monte_carlo(load_preset("dgm1"), recipes, R=1000, workers=WORKERS)
    secs = time.perf_counter() - t0
    rows = {r.name: r for r in rep.rows}
    consistent = {k: abs(rows[k].bias) < 3 * np.sqrt(rows[k].variance / rep.R)
                  for k in ("beta1", "beta1_wr.prop", "beta1_wr.outc")}
    largest = max(rows, key=lambda k: abs(rows[k].bias)) == "beta1_wr.both"
    detail = ", ".join(f"{k} bias {r.bias:+.4f} (3se {3 * np.sqrt(r.variance / rep.R):.4f})"
                       for k, r in rows.items())
    verdict(3, all(consistent.values()) and largest, f"{detail}; {secs:.0f}s")


def test_4_coverage(verdict):
    t0 = time.perf_counter()
    out, ok = [], True
    for dgm, model in (("dgm1", "M1"), ("dgm2", "M2")):
        rep = run_monte_carlo(load_preset(dgm), [EstimatorRecipe(model)], R=500, B=200, workers=WORKERS)
        row = rep.rows[0]
        ok &= 92 <= row.boot_coverage <= 98 and 90 <= row.wald_coverage <= 97
        ok &= row.wald_coverage <= row.boot_coverage + 1
        out.append(f"{dgm} {row.name}: bootstrap {row.boot_coverage:.1f}%, Wald {row.wald_coverage:.1f}%")
    secs = time.perf_counter() - t0
    verdict(4, ok, f"{'; '.join(out)}; {secs / 60:.1f} min")


def test_5_efficiency_ordering(verdict):
    t0 = time.perf_counter()
    rep = run_monte_carlo(load_preset("dgm2"), [EstimatorRecipe("M1"), EstimatorRecipe("M2")],
                          R=2000, workers=WORKERS)
    v1, v2 = rep.row("beta1").variance, rep.row("beta2").variance
    secs = time.perf_counter() - t0
    verdict(5, v2 <= 1.02 * v1, f"var(beta2) {v2:.4f} vs var(beta1) {v1:.4f} (ratio {v2 / v1:.3f}); {secs:.0f}s")


def test_6_if_variance_calibration(verdict):
    t0 = time.perf_counter()
    rep = run_monte_carlo(load_preset("dgm1"), [EstimatorRecipe("M1")], R=2000, workers=WORKERS)
    row = rep.rows[0]
    ratio = row.if_variance / row.variance
    secs = time.perf_counter() - t0
    verdict(6, 0.75 <= ratio <= 1.05,
            f"mean IF variance {row.if_variance:.4f} / empirical {row.variance:.4f} = {ratio:.3f}; {secs:.0f}s")


def test_7_dale_solver(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240607)
    n = 10_000
    f1, f2 = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
    psi = 10 ** rng.uniform(-3, 3, n)
    t = joint_table(f1, f2, psi)
    p00 = t[:, 0, 0]
    in_bounds = np.all(p00 >= np.maximum(0, f1 + f2 - 1) - 1e-15) and np.all(p00 <= np.minimum(f1, f2) + 1e-15)
    psi_err = np.max(np.abs(cross_ratio(t) / psi - 1))
    indep = np.max(np.abs(joint_table(f1, f2, 1.0)[:, 0, 0] - f1 * f2))
    anchor = joint_table(0.5, 0.5, 2.0)[0, 0]
    secs = time.perf_counter() - t0
    ok = in_bounds and psi_err <= 1e-8 and indep <= 1e-12 and abs(anchor - 0.292893) <= 1e-6 and secs < 5
    verdict(7, ok, f"bounds ok {in_bounds}, max relative psi error {psi_err:.1e}, independence error "
                   f"{indep:.1e}, F00(0.5,0.5,2) = {anchor:.6f}, {secs:.2f}s")


def test_8_estimating_equation_and_symmetry(verdict):
    t0 = time.perf_counter()
    cfg = default_model_config()
    mean_err = swap_err = 0.0
    for r in range(100):
        ds = generate(load_preset("dgm1" if r % 2 else "dgm2"), 1000 + r)
        for model in MODELS:
            pipe = Pipeline(model, SPILLOVER, cfg)
            est = pipe.run(ds)
            mean_err = max(mean_err, abs(est.if_values.mean()))
            swap_err = max(swap_err, abs(pipe(ds.swap_labels()) - est.point))
    secs = time.perf_counter() - t0
    verdict(8, mean_err <= 1e-10 and swap_err <= 1e-10 and secs < 60,
            f"max |mean IF| {mean_err:.1e}, max label-swap difference {swap_err:.1e} "
            f"over 100 datasets x {len(MODELS)} models, {secs:.1f}s")


def test_9_saturated_equivalence(verdict):
    t0 = time.perf_counter()
    worst = 0.0
    for name, models in (("model2", ("PLUGIN", "M1", "M2")), ("identified", ("PLUGIN", "M1"))):
        w = WORLDS[name]
        ds = expand_world(w)
        nuis = fit_nuisances(ds, saturated_config(w.c_names, w.x_names), models=models)
        for model in models:
            for a, b in PATTERNS:
                got = estimate(ds, nuis, model, EstimandSpec.mean(a, b)).point
                worst = max(worst, abs(got - target(w, a, b)))
    secs = time.perf_counter() - t0
    verdict(9, worst <= 1e-10 and secs < 10, f"max |estimate - truth| {worst:.1e} on expanded worlds, {secs:.2f}s")
