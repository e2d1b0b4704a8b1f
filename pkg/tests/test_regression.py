import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from pairfx.basis import BasisSpec, Categorical, Interaction, Linear, Spline, Tensor
from pairfx.errors import BothClassesRequired, RankDeficient, SchemaMismatch, Separation
from pairfx.regression import (PropensityClipConfig, RankDeficiencyWarning, clip_probabilities,
                               fit_linear, fit_logistic, predict)

from conftest import random_pairs

LIN_X = BasisSpec((Linear("x"),))


def test_exact_line():
    x = np.linspace(-1, 3, 20)
    fit = fit_linear({"x": x, "y": 2 + 3 * x}, "y", LIN_X)
    np.testing.assert_allclose(fit.coefficients, [2, 3], atol=1e-10)
    assert fit.deviance < 1e-18
    assert fit.coef("x") == pytest.approx(3)


def test_constant_response():
    x = np.arange(10.0)
    fit = fit_linear({"x": x, "y": np.full(10, 5.0)}, "y", LIN_X)
    np.testing.assert_allclose(fit.coefficients, [5, 0], atol=1e-12)


def test_least_squares_matches_normal_equations(rng):
    n = 50
    cols = {"u": rng.normal(size=n), "v": rng.uniform(size=n), "y": rng.normal(size=n)}
    basis = BasisSpec((Linear("u"), Linear("v"), Interaction(("u", "v"))))
    fit = fit_linear(cols, "y", basis)
    X = np.column_stack([np.ones(n), cols["u"], cols["v"], cols["u"] * cols["v"]])
    oracle = np.linalg.inv(X.T @ X) @ X.T @ cols["y"]
    np.testing.assert_allclose(fit.coefficients, oracle, atol=1e-8)


def test_prediction_arithmetic():
    x = np.linspace(0, 1, 5)
    fit = fit_linear({"x": x, "y": 2 + 3 * x}, "y", LIN_X)
    assert predict(fit, {"x": np.array([4.0])})[0] == pytest.approx(14)
    np.testing.assert_allclose(predict(fit, {"x": x}), 2 + 3 * x)


def test_collinear_column_dropped_with_warning(rng):
    x = rng.normal(size=30)
    cols = {"x": x, "x2": 2 * x, "y": 1 + x}
    with pytest.warns(RankDeficiencyWarning):
        fit = fit_linear(cols, "y", BasisSpec((Linear("x"), Linear("x2"))))
    assert fit.dropped == ("x2",)
    np.testing.assert_allclose(predict(fit, cols), 1 + x, atol=1e-10)


def test_too_few_rows_or_no_columns():
    with pytest.raises(RankDeficient):
        fit_linear({"y": np.ones(3)}, "y", BasisSpec((), intercept=False))


def test_unknown_column():
    with pytest.raises(SchemaMismatch):
        fit_linear({"y": np.ones(3)}, "y", LIN_X)
    x = np.arange(4.0)
    fit = fit_linear({"x": x, "y": x}, "y", LIN_X)
    with pytest.raises(SchemaMismatch):
        predict(fit, {"x": x}, {"a_own": 1})


def test_logistic_intercept_only():
    y = np.r_[np.ones(25), np.zeros(25)]
    fit = fit_logistic({"y": y}, "y", BasisSpec(()))
    assert fit.converged
    assert abs(fit.coefficients[0]) < 1e-10
    np.testing.assert_allclose(predict(fit, {"y": y}), 0.5)


def test_logistic_separation():
    x = np.linspace(-1, 1, 40)
    with pytest.raises(Separation):
        fit_logistic({"x": x, "y": (x > 0).astype(float)}, "y", LIN_X)


def test_logistic_needs_both_classes():
    with pytest.raises(BothClassesRequired):
        fit_logistic({"x": np.arange(5.0), "y": np.zeros(5)}, "y", LIN_X)


def test_logistic_matches_direct_likelihood_maximization(rng):
    n = 200
    x = rng.normal(size=n)
    y = rng.binomial(1, 1 / (1 + np.exp(-(0.4 - 1.1 * x)))).astype(float)
    fit = fit_logistic({"x": x, "y": y}, "y", LIN_X)

    def negloglik(b):
        eta = b[0] + b[1] * x
        return np.sum(np.logaddexp(0, eta) - y * eta)

    res = optimize.minimize(negloglik, np.zeros(2), method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 20000})
    np.testing.assert_allclose(fit.coefficients, res.x, atol=1e-6)
    p = predict(fit, {"x": x})
    score = np.array([np.sum(y - p), np.sum(x * (y - p))])
    assert np.linalg.norm(score) < 1e-6 * n


def test_override_changes_logit_by_coefficient(rng):
    ds = random_pairs(rng, n=300)
    rows = ds.stacked
    fit = fit_logistic(rows, "a_cotwin", BasisSpec((Linear("z"), Linear("a_own"))))
    p1 = predict(fit, rows, {"a_own": 1})
    p0 = predict(fit, rows, {"a_own": 0})
    logit = lambda p: np.log(p / (1 - p))
    np.testing.assert_allclose(logit(p1) - logit(p0), fit.coef("a_own"), atol=1e-9)


def test_label_swap_leaves_coefficients_unchanged(rng):
    ds = random_pairs(rng, n=150)
    basis = BasisSpec((Spline("x"), Linear("cotwin_x"), Linear("a_own"), Linear("a_cotwin"),
                       Interaction(("a_own", "a_cotwin"))))
    f = fit_linear(ds.stacked, "y_own", basis)
    g = fit_linear(ds.swap_labels().stacked, "y_own", basis)
    np.testing.assert_allclose(f.coefficients, g.coefficients, atol=1e-10)
    lb = BasisSpec((Linear("z"), Spline("x", degree=2, num_knots=2)))
    f = fit_logistic(ds.stacked, "a_own", lb)
    g = fit_logistic(ds.swap_labels().stacked, "a_own", lb)
    np.testing.assert_allclose(f.coefficients, g.coefficients, atol=1e-10)


def test_spline_basis_deterministic_and_quantile_knots(rng):
    x = rng.normal(size=400)
    spec = BasisSpec((Spline("x", degree=3, num_knots=5),))
    a = spec.freeze({"x": x})
    b = spec.freeze({"x": x.copy()})
    np.testing.assert_array_equal(a.design({"x": x}), b.design({"x": x}))
    # intercept + (5 interior + 3 + 1) - 1 dropped B-spline
    assert a.n_columns == 1 + 8
    # the retained B-splines plus the dropped one sum to one, so rows sum to at most 1
    assert np.all(a.design({"x": x})[:, 1:].sum(1) <= 1 + 1e-12)


def test_tensor_and_categorical_terms(rng):
    u, v = rng.uniform(size=100), rng.uniform(size=100)
    spec = BasisSpec((Tensor(("u", "v"), degree=1, num_knots=0),))
    X = spec.freeze({"u": u, "v": v}).design({"u": u, "v": v})
    scaled = lambda t: (t - t.min()) / (t.max() - t.min())
    np.testing.assert_allclose(X[:, 1], scaled(u) * scaled(v), atol=1e-12)
    g = np.array([0, 1, 2, 1, 0, 2] * 5, float)
    y = np.array([1.0, 4.0, -2.0])[g.astype(int)]
    fit = fit_linear({"g": g, "y": y}, "y", BasisSpec((Categorical("g"),)))
    np.testing.assert_allclose(predict(fit, {"g": g}), y, atol=1e-12)


def test_basis_json_round_trip():
    spec = BasisSpec((Linear("a"), Interaction(("a", "b")), Spline("c", 2, 3, "uniform"),
                      Tensor(("a", "c"), 1, 0), Categorical(("a", "b"))))
    assert BasisSpec.from_dict(spec.to_dict()) == spec


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=1, max_size=30),
       st.floats(0, 0.49))
def test_clipped_probabilities_stay_inside(p, eps):
    out = PropensityClipConfig(eps).apply(np.array(p))
    assert np.all(out >= eps) and np.all(out <= 1 - eps)


def test_clip_config_validation():
    with pytest.raises(ValueError):
        PropensityClipConfig(0.5)
    np.testing.assert_array_equal(clip_probabilities([0.0, 1.0], 0), [0.0, 1.0])
