"""Outcome (least squares) and propensity (logistic IRLS) regressions.

Both are fit on stacked twin-level rows, so one coefficient vector serves
Twin 1 and Twin 2 alike.  Columns that are linearly dependent on earlier
columns are dropped (their coefficient is reported as 0) and recorded in
``NuisanceFit.dropped``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import linalg
from scipy.special import expit

from .basis import BasisSpec, FrozenBasis
from .errors import (BothClassesRequired, NonConvergence, RankDeficient, SchemaMismatch,
                     Separation, TooFewRows)

DEFAULT_CLIP = 0.01
MAX_ITER = 100
TOL = 1e-8
SEPARATION_THRESHOLD = 30.0
_PROB_FLOOR = 1e-12


class RankDeficiencyWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PropensityClipConfig:
    epsilon: float = DEFAULT_CLIP

    def __post_init__(self):
        if not 0 <= self.epsilon < 0.5:
            raise ValueError("clipping epsilon must lie in [0, 0.5)")

    def apply(self, p):
        return clip_probabilities(p, self.epsilon)


def clip_probabilities(p, epsilon: float = DEFAULT_CLIP):
    if epsilon == 0:
        return np.asarray(p, dtype=float)
    return np.clip(p, epsilon, 1 - epsilon)


@dataclass(frozen=True, eq=False)
class NuisanceFit:
    basis: BasisSpec
    frozen: FrozenBasis = field(repr=False)
    link: str
    response: str
    coefficients: np.ndarray
    converged: bool
    iterations: int
    deviance: float
    dropped: tuple[str, ...] = ()

    @property
    def labels(self) -> tuple[str, ...]:
        return self.frozen.labels

    def coef(self, label: str) -> float:
        return float(self.coefficients[self.frozen.labels.index(label)])

    def linear_predictor(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        return self.frozen.design(columns) @ self.coefficients


def _columns(rows) -> Mapping[str, np.ndarray]:
    return rows if isinstance(rows, Mapping) else rows.columns


def _weights(rows, n):
    w = None if isinstance(rows, Mapping) else getattr(rows, "weights", None)
    return np.ones(n) if w is None else np.asarray(w, float)


def _independent_columns(X: np.ndarray, rtol: float = 1e-9) -> np.ndarray:
    """Indices of columns not in the span of the columns before them (unpivoted QR)."""
    if X.shape[1] == 0:
        return np.arange(0)
    r = linalg.qr(X, mode="r", check_finite=False)[0]
    d = np.zeros(X.shape[1])
    k = min(r.shape)
    d[:k] = np.abs(np.diag(r))[:k]
    # |R_kk| is the distance of column k from the span of columns 0..k-1
    return np.flatnonzero(d > rtol * np.linalg.norm(X, axis=0))


def _prepare(rows, response, basis):
    cols = _columns(rows)
    if response not in cols:
        raise SchemaMismatch(f"response column {response!r} not present")
    frozen = basis.freeze(cols)
    X = frozen.design(cols)
    y = np.asarray(cols[response], dtype=float)
    w = _weights(rows, len(y))
    keep_rows = w > 0
    if not keep_rows.any():
        raise TooFewRows("no rows with positive weight")
    sw = np.sqrt(w)
    keep = _independent_columns(X[keep_rows] * sw[keep_rows, None])
    if keep.size == 0:
        raise RankDeficient("design matrix has rank 0")
    if keep_rows.sum() < keep.size:
        raise TooFewRows(f"{keep_rows.sum()} rows for {keep.size} basis columns")
    dropped = tuple(frozen.labels[i] for i in range(X.shape[1]) if i not in set(keep.tolist()))
    if dropped:
        warnings.warn(f"dropped {len(dropped)} collinear basis column(s): {', '.join(dropped[:5])}",
                      RankDeficiencyWarning, stacklevel=3)
    return frozen, X, y, w, keep, dropped


def fit_linear(rows, response: str, basis: BasisSpec) -> NuisanceFit:
    """Weighted least squares on the basis expansion; deviance is the residual sum of squares."""
    frozen, X, y, w, keep, dropped = _prepare(rows, response, basis)
    sw = np.sqrt(w)
    Xk = X[:, keep] * sw[:, None]
    beta_k, _, rank, _ = linalg.lstsq(Xk, y * sw, check_finite=False, lapack_driver="gelsy")
    if rank < keep.size:
        raise RankDeficient(f"design has rank {rank} < {keep.size} after dropping columns")
    beta = np.zeros(X.shape[1])
    beta[keep] = beta_k
    resid = y - X @ beta
    return NuisanceFit(basis, frozen, "identity", response, beta, True, 1,
                       float(np.sum(w * resid ** 2)), dropped)


def _bernoulli_deviance(y, p, w):
    p = np.clip(p, 1e-300, 1 - 1e-16)
    return float(-2 * np.sum(w * (y * np.log(p) + (1 - y) * np.log1p(-p))))


def fit_logistic(rows, response: str, basis: BasisSpec, max_iter: int = MAX_ITER,
                 tol: float = TOL, separation_threshold: float = SEPARATION_THRESHOLD) -> NuisanceFit:
    """Bernoulli maximum likelihood by iteratively reweighted least squares.

    Newton steps are halved while the deviance increases.  ``converged`` is
    true iff the largest coefficient change fell below ``tol`` within
    ``max_iter`` iterations.

    Raises
    ------
    BothClassesRequired
        The response (restricted to positive weights) is not 0/1 with both classes.
    Separation
        A coefficient exceeded ``separation_threshold`` in absolute value.
    """
    cols = _columns(rows)
    if response not in cols:
        raise SchemaMismatch(f"response column {response!r} not present")
    y_raw = np.asarray(cols[response], float)
    w_raw = _weights(rows, len(y_raw))
    pos = w_raw > 0
    if np.any((y_raw != 0) & (y_raw != 1)) or len(np.unique(y_raw[pos])) < 2:
        raise BothClassesRequired(f"{response!r} must be binary with both classes present")
    frozen, X, y, w, keep, dropped = _prepare(rows, response, basis)
    Xk = X[:, keep]
    beta_k = np.zeros(keep.size)
    eta = np.zeros(len(y))
    p = expit(eta)
    dev = _bernoulli_deviance(y, p, w)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        wt = w * p * (1 - p)
        score = Xk.T @ (w * (y - p))
        info = (Xk * wt[:, None]).T @ Xk
        try:
            step = linalg.solve(info, score, assume_a="pos", check_finite=False)
        except (linalg.LinAlgError, ValueError):
            step = linalg.lstsq(info, score, check_finite=False)[0]
        if not np.all(np.isfinite(step)):
            raise Separation(f"{response!r}: information matrix became singular")
        for _ in range(30):
            cand = beta_k + step
            eta_c = Xk @ cand
            p_c = expit(eta_c)
            dev_c = _bernoulli_deviance(y, p_c, w)
            if dev_c <= dev + 1e-12 * (1 + abs(dev)):
                break
            step = step / 2
        beta_k, eta, p, dev = cand, eta_c, p_c, dev_c
        if np.max(np.abs(beta_k)) > separation_threshold:
            raise Separation(f"{response!r}: coefficients diverge (|coef| > {separation_threshold:g}); "
                             "the maximum likelihood estimate does not exist")
        if np.max(np.abs(step)) < tol:
            converged = True
            break
    beta = np.zeros(X.shape[1])
    beta[keep] = beta_k
    return NuisanceFit(basis, frozen, "logit", response, beta, converged, it, dev, dropped)


def require_converged(fit: NuisanceFit) -> NuisanceFit:
    if not fit.converged:
        raise NonConvergence(f"{fit.response!r}: IRLS did not converge in {fit.iterations} iterations")
    return fit


def override_columns(rows, overrides: Mapping[str, float] | None) -> Mapping[str, np.ndarray]:
    """Row columns with counterfactual values substituted (``a_bar`` follows the exposures)."""
    cols = _columns(rows)
    if not overrides:
        return cols
    cols = dict(cols)
    n = len(next(iter(cols.values())))
    for k, v in overrides.items():
        if k not in cols:
            raise SchemaMismatch(f"override for unknown column {k!r}")
        cols[k] = np.broadcast_to(np.asarray(v, float), (n,))
    if "a_bar" in cols and ({"a_own", "a_cotwin"} & set(overrides)) and "a_bar" not in overrides:
        cols["a_bar"] = (cols["a_own"] + cols["a_cotwin"]) / 2
    return cols


def predict(fit: NuisanceFit, rows, overrides: Mapping[str, float] | None = None) -> np.ndarray:
    """Fitted means on ``rows``, optionally at forced exposure values."""
    eta = fit.linear_predictor(override_columns(rows, overrides))
    if fit.link == "identity":
        return eta
    return np.clip(expit(eta), _PROB_FLOOR, 1 - _PROB_FLOOR)
