"""Basis expansions for the nuisance regressions.

Smooth terms are fixed-knot B-splines with interior knots at data quantiles;
tensor terms are row-wise products of two marginal spline bases.  The first
B-spline of each marginal basis is dropped so that a spline term never
duplicates the intercept (the B-splines sum to one).

A :class:`BasisSpec` is the declarative recipe.  Calling :meth:`BasisSpec.freeze`
on the fitting data fixes knots and category levels, giving a
:class:`FrozenBasis` that evaluates identically on any later rows.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.interpolate import BSpline

from .errors import SchemaMismatch


@dataclass(frozen=True)
class Linear:
    name: str

    @property
    def variables(self):
        return (self.name,)


@dataclass(frozen=True)
class Interaction:
    """Product of raw columns, e.g. ``sex_M * a_own``."""

    names: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 2:
            raise ValueError("an interaction needs at least two columns")

    @property
    def variables(self):
        return self.names


@dataclass(frozen=True)
class Spline:
    name: str
    degree: int = 3
    num_knots: int = 5
    knots: str = "quantile"

    def __post_init__(self):
        if self.degree < 1 or self.num_knots < 0:
            raise ValueError("spline degree must be >= 1 and num_knots >= 0")
        if self.knots not in ("quantile", "uniform"):
            raise ValueError(f"unknown knot placement rule {self.knots!r}")

    @property
    def variables(self):
        return (self.name,)


@dataclass(frozen=True)
class Tensor:
    """Smooth interaction: products of two marginal spline bases."""

    names: tuple[str, str]
    degree: int = 3
    num_knots: int = 1

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) != 2:
            raise ValueError("a tensor term takes exactly two columns")

    @property
    def variables(self):
        return self.names


@dataclass(frozen=True)
class Categorical:
    """Indicators of the joint levels of one or more columns (first level is reference)."""

    names: tuple[str, ...]

    def __post_init__(self):
        if isinstance(self.names, str):
            object.__setattr__(self, "names", (self.names,))
        object.__setattr__(self, "names", tuple(self.names))

    @property
    def variables(self):
        return self.names


Term = Linear | Interaction | Spline | Tensor | Categorical

_TERM_TYPES = {"linear": Linear, "interaction": Interaction, "spline": Spline,
               "tensor": Tensor, "categorical": Categorical}


def term_to_dict(t: Term) -> dict:
    kind = next(k for k, v in _TERM_TYPES.items() if isinstance(t, v))
    d = {"type": kind}
    if isinstance(t, (Linear, Spline)):
        d["name"] = t.name
    else:
        d["names"] = list(t.names)
    if isinstance(t, (Spline, Tensor)):
        d.update(degree=t.degree, num_knots=t.num_knots)
    if isinstance(t, Spline):
        d["knots"] = t.knots
    return d


def term_from_dict(d: Mapping) -> Term:
    d = dict(d)
    kind = d.pop("type")
    try:
        cls = _TERM_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown basis term type {kind!r}") from None
    if "names" in d:
        d["names"] = tuple(d["names"])
    return cls(**d)


@dataclass(frozen=True)
class BasisSpec:
    terms: tuple[Term, ...]
    intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    @property
    def variables(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for t in self.terms:
            for v in t.variables:
                seen[v] = None
        return tuple(seen)

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "terms": [term_to_dict(t) for t in self.terms]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "BasisSpec":
        return cls(terms=tuple(term_from_dict(t) for t in d.get("terms", [])),
                   intercept=bool(d.get("intercept", True)))

    def freeze(self, columns: Mapping[str, np.ndarray]) -> "FrozenBasis":
        _check_columns(self.variables, columns)
        states = [_freeze_term(t, columns) for t in self.terms]
        labels = (["(intercept)"] if self.intercept else []) + [l for s in states for l in s.labels]
        return FrozenBasis(self, tuple(states), tuple(labels))


def _check_columns(names: Sequence[str], columns: Mapping) -> None:
    missing = [v for v in names if v not in columns]
    if missing:
        raise SchemaMismatch(f"basis refers to unknown columns {missing}")


def _spline_knots(x: np.ndarray, degree: int, num_knots: int, rule: str = "quantile"):
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi <= lo:
        return None
    probs = np.linspace(0, 1, num_knots + 2)[1:-1]
    interior = np.quantile(x, probs) if rule == "quantile" else lo + probs * (hi - lo)
    interior = np.unique(interior[(interior > lo) & (interior < hi)])
    return np.concatenate([np.repeat(lo, degree + 1), interior, np.repeat(hi, degree + 1)])


def _spline_eval(x: np.ndarray, t: np.ndarray | None, degree: int) -> np.ndarray:
    if t is None:
        return np.zeros((len(x), 0))
    x = np.clip(x, t[0], t[-1])
    full = BSpline.design_matrix(x, t, degree).toarray()
    return full[:, 1:]


@dataclass(frozen=True, eq=False)
class _State:
    term: Term
    labels: tuple[str, ...]
    knots: tuple = ()
    levels: tuple = ()
    # spline blocks of read-only columns, keyed by array identity (predictions
    # at several forced exposures re-evaluate the same covariate columns)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def evaluate(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        t = self.term
        if isinstance(t, (Spline, Tensor)):
            arrays = [columns[v] for v in t.variables]
            if all(isinstance(a, np.ndarray) and not a.flags.writeable for a in arrays):
                key = tuple(id(a) for a in arrays)
                hit = self._cache.get(key)
                if hit is not None and all(x is y for x, y in zip(hit[0], arrays)):
                    return hit[1]
                block = self._evaluate(columns)
                block.flags.writeable = False
                if len(self._cache) > 8:
                    self._cache.clear()
                self._cache[key] = (arrays, block)
                return block
        return self._evaluate(columns)

    def _evaluate(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        t = self.term
        if isinstance(t, Linear):
            return np.asarray(columns[t.name], dtype=float)[:, None]
        if isinstance(t, Interaction):
            out = np.ones(len(columns[t.names[0]]))
            for v in t.names:
                out = out * columns[v]
            return out[:, None]
        if isinstance(t, Spline):
            return _spline_eval(np.asarray(columns[t.name], float), self.knots[0], t.degree)
        if isinstance(t, Tensor):
            b1 = _spline_eval(np.asarray(columns[t.names[0]], float), self.knots[0], t.degree)
            b2 = _spline_eval(np.asarray(columns[t.names[1]], float), self.knots[1], t.degree)
            return (b1[:, :, None] * b2[:, None, :]).reshape(len(b1), -1)
        # categorical
        keys = np.column_stack([np.asarray(columns[v], float) for v in t.names])
        out = np.zeros((len(keys), len(self.levels) - 1))
        matched = np.zeros(len(keys), dtype=bool)
        for k, lvl in enumerate(self.levels):
            hit = np.all(keys == np.asarray(lvl), axis=1)
            matched |= hit
            if k > 0:
                out[:, k - 1] = hit
        if not matched.all():
            bad = tuple(keys[np.flatnonzero(~matched)[0]])
            raise SchemaMismatch(f"level {bad} of {t.names} was not seen when the basis was fit")
        return out


def _freeze_term(t: Term, columns) -> _State:
    if isinstance(t, Linear):
        return _State(t, (t.name,))
    if isinstance(t, Interaction):
        return _State(t, (":".join(t.names),))
    if isinstance(t, Spline):
        knots = _spline_knots(np.asarray(columns[t.name], float), t.degree, t.num_knots, t.knots)
        k = 0 if knots is None else len(knots) - t.degree - 2
        return _State(t, tuple(f"s({t.name})[{i}]" for i in range(k)), knots=(knots,))
    if isinstance(t, Tensor):
        ks = tuple(_spline_knots(np.asarray(columns[v], float), t.degree, t.num_knots) for v in t.names)
        dims = [0 if k is None else len(k) - t.degree - 2 for k in ks]
        labels = tuple(f"ti({t.names[0]},{t.names[1]})[{i},{j}]"
                       for i in range(dims[0]) for j in range(dims[1]))
        return _State(t, labels, knots=ks)
    keys = np.column_stack([np.asarray(columns[v], float) for v in t.names])
    levels = tuple(tuple(r) for r in np.unique(keys, axis=0).tolist())
    labels = tuple(f"{'*'.join(t.names)}={lvl}" for lvl in levels[1:])
    return _State(t, labels, levels=levels)


@dataclass(frozen=True)
class FrozenBasis:
    spec: BasisSpec
    states: tuple[_State, ...]
    labels: tuple[str, ...]

    @property
    def n_columns(self) -> int:
        return len(self.labels)

    def design(self, columns: Mapping[str, np.ndarray]) -> np.ndarray:
        _check_columns(self.spec.variables, columns)
        n = len(next(iter(columns.values())))
        blocks = [np.ones((n, 1))] if self.spec.intercept else []
        blocks += [s.evaluate(columns) for s in self.states]
        return np.hstack(blocks) if blocks else np.zeros((n, 0))
