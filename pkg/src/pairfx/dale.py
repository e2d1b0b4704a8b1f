"""Joint exposure-pattern probabilities from two margins and a cross-ratio.

For margins ``f1 = P(A1=0)``, ``f2 = P(A2=0)`` and cross-ratio
``psi = F00 F11 / (F01 F10)``, the (0,0) cell solves

    (psi - 1) F^2 - s F + psi f1 f2 = 0,   s = 1 + (f1 + f2)(psi - 1).

Only one root lies in the Frechet-Hoeffding bounds; it is computed here as

    F = 2 psi f1 f2 / (s + sqrt(s^2 - 4 psi (psi - 1) f1 f2)),

which is the usual "minus" root rewritten without the cancellation near
``psi = 1`` (where it reduces to ``f1 f2``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import PairedDataset
from .errors import NonConvergence, NoValidRoot, SchemaError
from .regression import NuisanceFit, predict

DEFAULT_TERMS = ("zygosity_MZ", "sex_M")
_BOUND_TOL = 1e-9


def frechet_bounds(f1_0, f2_0):
    f1_0, f2_0 = np.asarray(f1_0, float), np.asarray(f2_0, float)
    return np.maximum(0.0, f1_0 + f2_0 - 1.0), np.minimum(f1_0, f2_0)


def _discriminant(f1_0, f2_0, psi):
    s = 1.0 + (f1_0 + f2_0) * (psi - 1.0)
    return s, np.sqrt(np.maximum(s * s - 4.0 * psi * (psi - 1.0) * f1_0 * f2_0, 0.0))


def quadratic_roots(f1_0, f2_0, psi):
    """Both roots ``(valid, rejected)`` of the cross-ratio quadratic.

    The rejected root is ``inf`` when ``psi == 1`` (the quadratic is linear).
    """
    f1_0, f2_0, psi = np.broadcast_arrays(*(np.asarray(v, float) for v in (f1_0, f2_0, psi)))
    s, root = _discriminant(f1_0, f2_0, psi)
    valid = 2.0 * psi * f1_0 * f2_0 / (s + root)
    with np.errstate(divide="ignore", invalid="ignore"):
        other = np.where(psi == 1.0, np.inf, (s + root) / (2.0 * (psi - 1.0)))
    return valid, other


def dale_cell(f1_0, f2_0, psi):
    """``F(0,0)`` for margins ``P(A1=0)``, ``P(A2=0)`` and cross-ratio ``psi``.

    Accepts scalars or broadcastable arrays; returns the same shape.
    """
    f1a, f2a, psia = (np.asarray(v, float) for v in (f1_0, f2_0, psi))
    if np.any(psia < 0) or np.any((f1a < 0) | (f1a > 1)) or np.any((f2a < 0) | (f2a > 1)):
        raise ValueError("margins must lie in [0, 1] and psi must be non-negative")
    f1a, f2a, psia = np.broadcast_arrays(f1a, f2a, psia)
    s, root = _discriminant(f1a, f2a, psia)
    with np.errstate(divide="ignore", invalid="ignore"):
        cell = np.where(s + root > 0, 2.0 * psia * f1a * f2a / (s + root), 0.0)
        # s < 0 only when psi < 1; the conjugate form avoids cancelling s + root
        cell = np.where(s < 0, (root - s) / (2.0 * (1.0 - psia)), cell)
    lo, hi = frechet_bounds(f1a, f2a)
    if np.any(cell < lo - _BOUND_TOL) or np.any(cell > hi + _BOUND_TOL) or not np.all(np.isfinite(cell)):
        raise NoValidRoot("no root of the cross-ratio equation lies within the Frechet bounds")
    cell = np.clip(cell, lo, hi)
    return float(cell) if cell.ndim == 0 else cell


def joint_table(f1_0, f2_0, psi) -> np.ndarray:
    """Cell probabilities ``p[..., a1, a2]`` with the given margins and cross-ratio."""
    f1a, f2a, psia = np.broadcast_arrays(*(np.asarray(v, float) for v in (f1_0, f2_0, psi)))
    p00 = np.asarray(dale_cell(f1a, f2a, psia))
    # every cell is the (0,0) cell of a relabelled table, so small cells keep full
    # relative precision instead of being formed by subtraction
    with np.errstate(divide="ignore"):
        inv = np.where(psia > 0, 1.0 / psia, np.inf)
    table = np.empty(p00.shape + (2, 2))
    table[..., 0, 0] = p00
    table[..., 0, 1] = np.where(np.isfinite(inv), dale_cell(f1a, 1.0 - f2a, np.where(np.isfinite(inv), inv, 1.0)),
                                np.minimum(f1a, 1.0 - f2a))
    table[..., 1, 0] = np.where(np.isfinite(inv), dale_cell(1.0 - f1a, f2a, np.where(np.isfinite(inv), inv, 1.0)),
                                np.minimum(1.0 - f1a, f2a))
    table[..., 1, 1] = dale_cell(1.0 - f1a, 1.0 - f2a, psia)
    return np.clip(table, 0.0, 1.0)


def cross_ratio(table) -> np.ndarray:
    t = np.asarray(table, float)
    return t[..., 0, 0] * t[..., 1, 1] / (t[..., 0, 1] * t[..., 1, 0])


@dataclass(frozen=True)
class JointPropensity:
    """Per-pair 2x2 exposure-pattern probabilities ``table[i, a1, a2]``."""

    table: np.ndarray
    psi: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.table, float)
        if t.ndim != 3 or t.shape[1:] != (2, 2):
            raise ValueError("joint propensity table must have shape (n, 2, 2)")
        if np.any(t < -1e-12) or np.any(np.abs(t.sum(axis=(1, 2)) - 1) > 1e-9):
            raise ValueError("each pair's cell probabilities must be non-negative and sum to 1")
        object.__setattr__(self, "table", t)

    def __len__(self):
        return len(self.table)

    def twin_probability(self, a: int, b: int):
        """``P(own=a, cotwin=b | C, X1, X2)`` for Twin 1 and for Twin 2."""
        return self.table[:, a, b], self.table[:, b, a]


@dataclass(frozen=True)
class CrossRatioModel:
    """``log psi_i = alpha_0 + sum_k alpha_k z_ik`` over pair-level covariates ``terms``."""

    alpha: np.ndarray
    terms: tuple[str, ...] = DEFAULT_TERMS
    converged: bool = True
    iterations: int = 0
    loglik: float = float("nan")

    def design(self, ds: PairedDataset) -> np.ndarray:
        return _cross_ratio_design(ds, self.terms)

    def psi(self, ds: PairedDataset) -> np.ndarray:
        return np.exp(self.design(ds) @ self.alpha)


def _cross_ratio_design(ds: PairedDataset, terms: Sequence[str]) -> np.ndarray:
    cols = [np.ones(ds.n)]
    for t in terms:
        if t not in ds.c_names:
            raise SchemaError(f"cross-ratio term {t!r} is not a shared covariate")
        cols.append(ds.shared(t))
    return np.column_stack(cols)


def margins_from_fit(ds: PairedDataset, margin_fit: NuisanceFit):
    """``(P(A1=0 | C, X1), P(A2=0 | C, X2))`` from a stacked fit of ``P(A_own = 1)``."""
    p = predict(margin_fit, ds.stacked)
    return 1.0 - p[:ds.n], 1.0 - p[ds.n:]


def _resolve_margins(ds, margins):
    if isinstance(margins, NuisanceFit):
        return margins_from_fit(ds, margins)
    if len(margins) == 2 and all(isinstance(m, NuisanceFit) for m in margins):
        f1 = margins_from_fit(ds, margins[0])[0]
        f2 = margins_from_fit(ds, margins[1])[1]
        return f1, f2
    f1, f2 = margins
    return np.asarray(f1, float), np.asarray(f2, float)


def _loglik_parts(alpha, Z, f1, f2, a1, a2, w):
    psi = np.exp(Z @ alpha)
    tab = joint_table(f1, f2, psi)
    p_obs = tab[np.arange(len(a1)), a1, a2]
    s, root = _discriminant(f1, f2, psi)
    # dF00/dpsi = p01 p10 / sqrt(D); d/d(log psi) multiplies by psi
    dF = tab[:, 0, 1] * tab[:, 1, 0] / np.where(root > 0, root, 1.0) * psi
    sign = np.where(a1 == a2, 1.0, -1.0)
    with np.errstate(divide="ignore"):
        ll = float(np.sum(w * np.log(p_obs)))
    score = Z.T @ (w * sign * dF / p_obs)
    inv_sum = (1 / tab).sum(axis=(1, 2))
    info = (Z * (w * dF ** 2 * inv_sum)[:, None]).T @ Z
    return ll, score, info


def fit_cross_ratio(ds: PairedDataset, margins, terms: Sequence[str] = DEFAULT_TERMS,
                    max_iter: int = 100, tol: float = 1e-8) -> CrossRatioModel:
    """Maximum likelihood for the log-linear cross-ratio with the margins held fixed.

    Fisher scoring with step halving; converged when the score norm is below ``tol``.

    Parameters
    ----------
    margins
        A stacked ``P(A_own=1)`` fit, a pair of fits (Twin 1, Twin 2), or a
        pair of arrays ``(P(A1=0), P(A2=0))``.
    """
    f1, f2 = _resolve_margins(ds, margins)
    if np.any((f1 <= 0) | (f1 >= 1) | (f2 <= 0) | (f2 >= 1)):
        raise ValueError("margins must lie strictly inside (0, 1)")
    terms = tuple(terms)
    Z = _cross_ratio_design(ds, terms)
    a1, a2, w = ds.a1, ds.a2, ds.pair_weights
    alpha = np.zeros(Z.shape[1])
    ll, score, info = _loglik_parts(alpha, Z, f1, f2, a1, a2, w)
    for it in range(1, max_iter + 1):
        if np.linalg.norm(score) < tol:
            return CrossRatioModel(alpha, terms, True, it - 1, ll)
        try:
            step = np.linalg.solve(info, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, score, rcond=None)[0]
        for _ in range(40):
            cand = alpha + step
            if np.max(np.abs(cand)) < 50:
                ll_c, score_c, info_c = _loglik_parts(cand, Z, f1, f2, a1, a2, w)
                if ll_c >= ll - 1e-12 * (1 + abs(ll)):
                    break
            step = step / 2
        else:
            break
        alpha, ll, score, info = cand, ll_c, score_c, info_c
    if np.linalg.norm(score) < tol:
        return CrossRatioModel(alpha, terms, True, max_iter, ll)
    raise NonConvergence(f"cross-ratio MLE did not converge (score norm {np.linalg.norm(score):.3g})")


def joint_propensity(ds: PairedDataset, margins, model: CrossRatioModel) -> JointPropensity:
    """Dale joint propensity for every pair."""
    f1, f2 = _resolve_margins(ds, margins)
    psi = model.psi(ds)
    return JointPropensity(joint_table(f1, f2, psi), psi)


def empirical_joint_propensity(ds: PairedDataset) -> JointPropensity:
    """Saturated joint propensity: weighted pattern frequencies within each (C, X1, X2) cell.

    Only sensible for discrete covariates; used for exact cross-checks.
    """
    keys = np.hstack([ds.c, ds.x1, ds.x2])
    _, cell = np.unique(keys, axis=0, return_inverse=True)
    cell = cell.ravel()
    w = ds.pair_weights
    counts = np.zeros((cell.max() + 1, 2, 2))
    np.add.at(counts, (cell, ds.a1, ds.a2), w)
    counts /= counts.sum(axis=(1, 2), keepdims=True)
    return JointPropensity(counts[cell])
