"""Exact computations on small discrete worlds.

A world is a finite list of atoms ``(prob, u, c, x1, x2, exposure, y1, y2)``:
``exposure[a1][a2]`` is ``P(A1=a1, A2=a2 | atom)`` and ``y_j[a][b]`` is the
potential outcome of twin ``j`` when it has exposure ``a`` and its co-twin
``b``.  ``u`` is unmeasured; ``(c, x1, x2)`` are the measured covariates.  The
shared factor in the co-twin-control conditions is ``(u, c)``: measured
shared covariates are part of what twins share.
Observed outcomes are read off the potential-outcome tables at the realized
exposures, so consistency holds by construction.

Everything here is an exact finite sum, so identification formulas and
population-level double robustness can be checked with no sampling error.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import PairedDataset
from .errors import (ModelAssumptionViolated, NoDiscordantMass, PositivityViolation,
                     WorldValidationError)

MAX_ATOMS = 64
PROB_TOL = 1e-9
EXACT_TOL = 1e-12
GAP = 0.01
ASSUMPTIONS = ("A1", "A2", "A3", "A4", "A5", "A6", "C1", "C2", "C3", "C4")
NUISANCE_SPECS = ("exact", "wrong_outcome", "wrong_propensity", "wrong_both")
PATTERNS = ((0, 0), (0, 1), (1, 0), (1, 1))


@dataclass(frozen=True)
class Atom:
    prob: float
    u: float
    c: tuple[float, ...]
    x1: tuple[float, ...]
    x2: tuple[float, ...]
    exposure: tuple[tuple[float, float], tuple[float, float]]
    y1: tuple[tuple[float, float], tuple[float, float]]
    y2: tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True, eq=False)
class DiscreteWorld:
    name: str
    atoms: tuple[Atom, ...]
    c_names: tuple[str, ...] = ()
    x_names: tuple[str, ...] = ()
    declared: Mapping[str, bool] = field(default_factory=dict)
    expect: Mapping[str, bool] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        atoms = tuple(self.atoms)
        object.__setattr__(self, "atoms", atoms)
        if not atoms or len(atoms) > MAX_ATOMS:
            raise WorldValidationError(f"world {self.name!r}: needs 1..{MAX_ATOMS} atoms, got {len(atoms)}")
        p = np.array([a.prob for a in atoms], float)
        if np.any(p < 0) or abs(p.sum() - 1) > PROB_TOL:
            raise WorldValidationError(
                f"world {self.name!r}: atom probabilities must be non-negative and sum to 1 "
                f"(sum is {p.sum():.12g})")
        for k, a in enumerate(atoms):
            e = np.asarray(a.exposure, float)
            if e.shape != (2, 2) or np.any(e < 0) or abs(e.sum() - 1) > PROB_TOL:
                raise WorldValidationError(
                    f"world {self.name!r}: atom {k} exposure distribution must be a 2x2 table summing to 1")
            for y in (a.y1, a.y2):
                if np.asarray(y, float).shape != (2, 2):
                    raise WorldValidationError(f"world {self.name!r}: atom {k} outcome table must be 2x2")
            if len(a.c) != len(self.c_names) or len(a.x1) != len(self.x_names) or len(a.x2) != len(self.x_names):
                raise WorldValidationError(f"world {self.name!r}: atom {k} covariates do not match the names")
        unknown = set(self.declared) - set(ASSUMPTIONS)
        if unknown:
            raise WorldValidationError(f"world {self.name!r}: unknown assumptions {sorted(unknown)}")

    # array views -------------------------------------------------------
    @property
    def P(self):
        return np.array([a.prob for a in self.atoms], float)

    @property
    def E(self):
        return np.array([a.exposure for a in self.atoms], float)

    @property
    def Y(self):
        """``Y[j-1][atom, a, b]``."""
        return (np.array([a.y1 for a in self.atoms], float), np.array([a.y2 for a in self.atoms], float))

    def keys(self, what: str) -> list[tuple]:
        """Per-atom grouping keys: ``L`` = (c, x1, x2), ``U`` = (u, c, x1, x2),
        ``own1`` = (c, x1), ``own2`` = (c, x2)."""
        out = []
        for a in self.atoms:
            out.append({"L": (a.c, a.x1, a.x2), "U": (a.u, a.c, a.x1, a.x2),
                        "own1": (a.c, a.x1), "own2": (a.c, a.x2)}[what])
        return out


def _groups(keys) -> dict:
    out: dict = {}
    for i, k in enumerate(keys):
        out.setdefault(k, []).append(i)
    return {k: np.array(v) for k, v in out.items()}


def _pattern(j: int, a: int, b: int) -> tuple[int, int]:
    """(A1, A2) at which twin ``j`` has own exposure ``a`` and co-twin exposure ``b``."""
    return (a, b) if j == 1 else (b, a)


# ---------------------------------------------------------------- truths

def true_mean_po(world: DiscreteWorld, j: int, a: int, b: int) -> float:
    return float(world.P @ world.Y[j - 1][:, a, b])


def target(world: DiscreteWorld, a: int, b: int) -> float:
    """``E[Y^{a,b}]`` averaged over the two twin labels."""
    return (true_mean_po(world, 1, a, b) + true_mean_po(world, 2, a, b)) / 2


def g_formula(world: DiscreteWorld, j: int, a: int, b: int) -> float:
    """``E[E[Y_j | A_j=a, A_{3-j}=b, C, X1, X2]]`` under the observed law."""
    P, E, Y = world.P, world.E, world.Y[j - 1][:, a, b]
    p1, p2 = _pattern(j, a, b)
    total = 0.0
    for key, idx in _groups(world.keys("L")).items():
        mass = P[idx].sum()
        if mass <= 0:
            continue
        w = P[idx] * E[idx, p1, p2]
        if w.sum() <= 0:
            raise PositivityViolation(cell={"c": key[0], "x1": key[1], "x2": key[2]}, pattern=(p1, p2))
        total += mass * float(w @ Y[idx]) / w.sum()
    return total


def ctc_effect(world: DiscreteWorld) -> tuple[float, float]:
    """``(lhs, rhs)`` of the co-twin-control identity among discordant pairs with ``X1 = X2``.

    lhs = E[Y^{1,0} - Y^{0,1} | A1 != A2, X1 = X2] (averaged over twin labels);
    rhs = E[Y_own | own=1, cotwin=0, X1=X2] - E[Y_own | own=0, cotwin=1, X1=X2]
    from the observed law, pooling both twins.
    """
    same = np.array([a.x1 == a.x2 for a in world.atoms])
    P, E = world.P * same, world.E
    Y1, Y2 = world.Y
    d10, d01 = P * E[:, 1, 0], P * E[:, 0, 1]
    D = float(d10.sum() + d01.sum())
    if D <= 0:
        raise NoDiscordantMass(f"world {world.name!r}: no discordant pairs with X1 = X2")
    disc = d10 + d01
    lhs = 0.5 * float(disc @ (Y1[:, 1, 0] - Y1[:, 0, 1]) + disc @ (Y2[:, 1, 0] - Y2[:, 0, 1])) / D
    exposed = float(d10 @ Y1[:, 1, 0] + d01 @ Y2[:, 1, 0]) / D
    unexposed = float(d01 @ Y1[:, 0, 1] + d10 @ Y2[:, 0, 1]) / D
    return lhs, exposed - unexposed


def no_interference_ctc(world: DiscreteWorld) -> float:
    """``E[Y^1 - Y^0 | A1 != A2, X1 = X2]`` for worlds whose outcomes ignore the co-twin's exposure."""
    Y1, Y2 = world.Y
    for Y in (Y1, Y2):
        if not (np.allclose(Y[:, 1, 0], Y[:, 1, 1], rtol=0, atol=EXACT_TOL)
                and np.allclose(Y[:, 0, 1], Y[:, 0, 0], rtol=0, atol=EXACT_TOL)):
            raise ModelAssumptionViolated(f"world {world.name!r} has interference")
    same = np.array([a.x1 == a.x2 for a in world.atoms])
    disc = world.P * same * (world.E[:, 0, 1] + world.E[:, 1, 0])
    if disc.sum() <= 0:
        raise NoDiscordantMass(f"world {world.name!r}: no discordant pairs with X1 = X2")
    return 0.5 * float(disc @ (Y1[:, 1, 1] - Y1[:, 0, 0] + Y2[:, 1, 1] - Y2[:, 0, 0])) / disc.sum()


# ---------------------------------------------------------------- assumption checks

def _independent(joint: np.ndarray, mass: float) -> bool:
    """``joint[i, k]`` (unnormalized) factorizes."""
    if mass <= 0:
        return True
    p = joint / mass
    return bool(np.allclose(p, np.outer(p.sum(1), p.sum(0)), rtol=0, atol=1e-12))


def _outcome_exposure_independent(world: DiscreteWorld, key: str) -> bool:
    P, E = world.P, world.E
    for idx in _groups(world.keys(key)).values():
        mass = P[idx].sum()
        for Y in world.Y:
            for a, b in PATTERNS:
                vals = np.unique(Y[idx, a, b])
                joint = np.array([[float(np.sum(P[idx] * (Y[idx, a, b] == v) * E[idx, p1, p2]))
                                   for p1, p2 in PATTERNS] for v in vals])
                if not _independent(joint, mass):
                    return False
    return True


def _positive(world: DiscreteWorld, key: str) -> bool:
    P, E = world.P, world.E
    for idx in _groups(world.keys(key)).values():
        if P[idx].sum() <= 0:
            continue
        cells = (P[idx, None, None] * E[idx]).sum(axis=0)
        if np.any(cells <= 0):
            return False
    return True


def _conditional(values_by_atom, weights, groups):
    return {k: float(weights[idx] @ values_by_atom[idx]) / weights[idx].sum()
            for k, idx in groups.items() if weights[idx].sum() > 0}


def _depends_only_on_own(world: DiscreteWorld, values, j: int) -> bool:
    """Conditional means of ``values`` given L equal those given (C, X_j)."""
    P = world.P
    by_L = _groups(world.keys("L"))
    by_own = _groups(world.keys(f"own{j}"))
    own_mean = _conditional(values, P, by_own)
    for key, idx in by_L.items():
        if P[idx].sum() <= 0:
            continue
        m = float(P[idx] @ values[idx]) / P[idx].sum()
        own_key = (key[0], key[j])
        if abs(m - own_mean[own_key]) > EXACT_TOL:
            return False
    return True


def _a4(world):
    E = world.E
    return all(_depends_only_on_own(world, E[:, 1, :].sum(1) if j == 1 else E[:, :, 1].sum(1), j)
               for j in (1, 2))


def _a5(world):
    # distribution of Y_j^{a,b} given L must not depend on X_{3-j}
    for j in (1, 2):
        Y = world.Y[j - 1]
        for a, b in PATTERNS:
            for v in np.unique(Y[:, a, b]):
                if not _depends_only_on_own(world, (Y[:, a, b] == v).astype(float), j):
                    return False
    return True


def _a6(world):
    P, E = world.P, world.E
    for idx in _groups(world.keys("L")).values():
        joint = (P[idx, None, None] * E[idx]).sum(axis=0)
        if not _independent(joint, P[idx].sum()):
            return False
    return True


def _c4(world):
    for a, b in PATTERNS:
        d1: dict = {}
        d2: dict = {}
        for at in world.atoms:
            k1 = (at.u, at.c, at.x1, at.x2, at.y1[a][b])
            k2 = (at.u, at.c, at.x2, at.x1, at.y2[a][b])
            d1[k1] = d1.get(k1, 0.0) + at.prob
            d2[k2] = d2.get(k2, 0.0) + at.prob
        for k in set(d1) | set(d2):
            if abs(d1.get(k, 0.0) - d2.get(k, 0.0)) > EXACT_TOL:
                return False
    return True


def assumption_profile(world: DiscreteWorld) -> dict[str, bool]:
    """Which assumptions the world satisfies, computed exactly."""
    return {"A1": _outcome_exposure_independent(world, "L"), "A2": _positive(world, "L"),
            "A3": True, "A4": _a4(world), "A5": _a5(world), "A6": _a6(world),
            "C1": _outcome_exposure_independent(world, "U"), "C2": True,
            "C3": _positive(world, "U"), "C4": _c4(world)}


# ---------------------------------------------------------------- population estimators

def _cond_outcome(world, j, a, b, key):
    """Per-atom ``E[Y_j | A_j=a, A_{3-j}=b, key]``."""
    P, E, Y = world.P, world.E, world.Y[j - 1][:, a, b]
    p1, p2 = _pattern(j, a, b)
    w = P * E[:, p1, p2]
    out = np.zeros(len(P))
    for idx in _groups(world.keys(key)).values():
        if w[idx].sum() > 0:
            out[idx] = float(w[idx] @ Y[idx]) / w[idx].sum()
    return out


def _cond_prob(world, weights_by_atom, key):
    P = world.P
    out = np.zeros(len(P))
    for idx in _groups(world.keys(key)).values():
        if P[idx].sum() > 0:
            out[idx] = float(P[idx] @ weights_by_atom[idx]) / P[idx].sum()
    return out


def population_estimate(world: DiscreteWorld, estimator: str, nuisance: str, a: int, b: int) -> float:
    """Probability limit of the M1 or M2 estimator of ``E[Y^{a,b}]`` (twin-averaged).

    Nuisances are the true conditional functions under the observed law, or
    fixed wrong ones: outcome predictor 0, joint propensity 1/4, margins 1/2.
    """
    if nuisance not in NUISANCE_SPECS:
        raise ValueError(f"nuisance must be one of {NUISANCE_SPECS}")
    prof = assumption_profile(world)
    need = ("A1", "A2", "A3") if estimator == "M1" else ("A1", "A2", "A3", "A4", "A5", "A6")
    if estimator not in ("M1", "M2"):
        raise ValueError("estimator must be M1 or M2")
    missing = [k for k in need if not prof[k]]
    if missing:
        raise ModelAssumptionViolated(f"{estimator} requires {', '.join(missing)} in world {world.name!r}")
    wrong_mu = nuisance in ("wrong_outcome", "wrong_both")
    wrong_pi = nuisance in ("wrong_propensity", "wrong_both")
    P, E = world.P, world.E
    total = 0.0
    for j in (1, 2):
        Y = world.Y[j - 1][:, a, b]
        p1, p2 = _pattern(j, a, b)
        if estimator == "M1":
            mu = np.zeros(len(P)) if wrong_mu else _cond_outcome(world, j, a, b, "L")
            pi = np.full(len(P), 0.25) if wrong_pi else _cond_prob(world, E[:, p1, p2], "L")
        else:
            own = f"own{j}"
            mu = np.zeros(len(P)) if wrong_mu else _cond_outcome(world, j, a, b, own)
            own_exp = E[:, 1, :].sum(1) if j == 1 else E[:, :, 1].sum(1)
            cot_exp = E[:, :, 1].sum(1) if j == 1 else E[:, 1, :].sum(1)
            if wrong_pi:
                pi = np.full(len(P), 0.25)
            else:
                pa = _cond_prob(world, own_exp, own)
                pb = _cond_prob(world, cot_exp, own)
                pi = (pa if a == 1 else 1 - pa) * (pb if b == 1 else 1 - pb)
        # E[ 1{pattern}/pi (Y - mu) + mu ], the indicator integrated against the exposure law
        total += float(P @ (E[:, p1, p2] / pi * (Y - mu) + mu))
    return total / 2


# ---------------------------------------------------------------- datasets

def expand_world(world: DiscreteWorld) -> PairedDataset:
    """The observed law as a frequency-weighted dataset: one pair per (atom, exposure pattern)."""
    ids, c, x1, x2, a1, a2, y1, y2, w = [], [], [], [], [], [], [], [], []
    for k, at in enumerate(world.atoms):
        for p, q in PATTERNS:
            wt = at.prob * at.exposure[p][q]
            if wt <= 0:
                continue
            ids.append(f"{k}-{p}{q}")
            c.append(at.c)
            x1.append(at.x1)
            x2.append(at.x2)
            a1.append(p)
            a2.append(q)
            y1.append(at.y1[p][q])
            y2.append(at.y2[q][p])
            w.append(wt)
    zyg = "zygosity_MZ" if "zygosity_MZ" in world.c_names else None
    return PairedDataset(pair_ids=ids, c=c, x1=x1, x2=x2, a1=a1, a2=a2, y1=y1, y2=y2,
                         c_names=world.c_names, x_names=world.x_names, zygosity_column=zyg,
                         weights=w)


# ---------------------------------------------------------------- serialization

def world_to_dict(world: DiscreteWorld) -> dict:
    return {"name": world.name, "description": world.description,
            "c_names": list(world.c_names), "x_names": list(world.x_names),
            "declared": dict(world.declared), "expect": dict(world.expect),
            "atoms": [{"p": a.prob, "u": a.u, "c": list(a.c), "x1": list(a.x1), "x2": list(a.x2),
                       "exposure": [list(r) for r in a.exposure],
                       "y1": [list(r) for r in a.y1], "y2": [list(r) for r in a.y2]}
                      for a in world.atoms]}


def world_from_dict(d: Mapping) -> DiscreteWorld:
    name = d.get("name", "<unnamed>")
    try:
        atoms = tuple(Atom(float(a["p"]), float(a.get("u", 0)), tuple(map(float, a.get("c", []))),
                           tuple(map(float, a.get("x1", []))), tuple(map(float, a.get("x2", []))),
                           tuple(tuple(map(float, r)) for r in a["exposure"]),
                           tuple(tuple(map(float, r)) for r in a["y1"]),
                           tuple(tuple(map(float, r)) for r in a["y2"]))
                      for a in d["atoms"])
    except (KeyError, TypeError, ValueError) as exc:
        raise WorldValidationError(f"world {name!r}: malformed atom ({exc})") from None
    return DiscreteWorld(name, atoms, tuple(d.get("c_names", [])), tuple(d.get("x_names", [])),
                         dict(d.get("declared", {})), dict(d.get("expect", {})), d.get("description", ""))


def load_world(path) -> DiscreteWorld:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise WorldValidationError(f"{path}: not valid JSON ({exc})") from None
    d.setdefault("name", Path(path).stem)
    return world_from_dict(d)


# ---------------------------------------------------------------- verification

@dataclass(frozen=True)
class CheckResult:
    world: str
    check: str
    passed: bool
    detail: str = ""


def _check(world, name, ok, detail=""):
    return CheckResult(world.name, name, bool(ok), detail)


def verify_world(world: DiscreteWorld) -> list[CheckResult]:
    """Run every identity or counterexample check that the world's declarations call for."""
    out = []
    prof = assumption_profile(world)
    mismatched = {k: prof[k] for k, v in world.declared.items() if prof[k] != v}
    out.append(_check(world, "declared assumptions", not mismatched,
                      f"computed {mismatched}" if mismatched else ""))
    cells = [(j, a, b) for j in (1, 2) for a, b in PATTERNS]
    if prof["A2"]:
        gaps = [abs(g_formula(world, *t) - true_mean_po(world, *t)) for t in cells]
        if prof["A1"]:
            out.append(_check(world, "g-formula identifies E[Y^ab]", max(gaps) <= EXACT_TOL,
                              f"max gap {max(gaps):.3g}"))
        elif world.expect.get("g_formula_gap"):
            out.append(_check(world, "g-formula gap under confounding", max(gaps) > GAP,
                              f"max gap {max(gaps):.3g}"))
    else:
        try:
            for t in cells:
                g_formula(world, *t)
            raised = False
        except PositivityViolation:
            raised = True
        out.append(_check(world, "positivity violation detected", raised))
    c_ok = prof["C1"] and prof["C3"] and prof["C4"]
    if c_ok or world.expect.get("ctc_gap"):
        lhs, rhs = ctc_effect(world)
        if c_ok:
            out.append(_check(world, "CTC identity", abs(lhs - rhs) <= EXACT_TOL,
                              f"lhs {lhs:.6g} rhs {rhs:.6g}"))
        else:
            out.append(_check(world, "CTC gap without label symmetry", abs(lhs - rhs) > GAP,
                              f"lhs {lhs:.6g} rhs {rhs:.6g}"))
    if world.expect.get("no_interference"):
        lhs, _ = ctc_effect(world)
        out.append(_check(world, "CTC equals the no-interference effect",
                          abs(lhs - no_interference_ctc(world)) <= EXACT_TOL))
    for est, need in (("M1", ("A1", "A2")), ("M2", ("A1", "A2", "A4", "A5", "A6"))):
        if not all(prof[k] for k in need):
            continue
        worst = max(abs(population_estimate(world, est, spec, a, b) - target(world, a, b))
                    for spec in ("exact", "wrong_outcome", "wrong_propensity") for a, b in PATTERNS)
        out.append(_check(world, f"{est} double robustness", worst <= 1e-10, f"max error {worst:.3g}"))
        if world.expect.get("dr_gap"):
            gap = max(abs(population_estimate(world, est, "wrong_both", a, b) - target(world, a, b))
                      for a, b in PATTERNS)
            out.append(_check(world, f"{est} wrong-both gap", gap > GAP, f"max gap {gap:.3g}"))
    return out


# ---------------------------------------------------------------- shipped worlds

def _symmetric_atoms(base, exposure, outcome):
    """Atoms over ``base`` = [(prob, u, c, x1, x2)], with label-symmetric mechanisms.

    ``exposure(u, c, x1, x2)`` returns the 2x2 table; ``outcome(u, c, x_own, x_cot, a, b)``
    is used for both twins, so the world is symmetric whenever ``base`` and
    ``exposure`` are.
    """
    atoms = []
    for p, u, c, x1, x2 in base:
        e = exposure(u, c, x1, x2)
        y1 = tuple(tuple(float(outcome(u, c, x1, x2, a, b)) for b in (0, 1)) for a in (0, 1))
        y2 = tuple(tuple(float(outcome(u, c, x2, x1, a, b)) for b in (0, 1)) for a in (0, 1))
        atoms.append(Atom(float(p), float(u), (float(c),), (float(x1),), (float(x2),),
                          tuple(tuple(float(v) for v in r) for r in e), y1, y2))
    return tuple(atoms)


def _table(p1, p2, lor=0.0):
    """2x2 table with margins ``P(A1=1)=p1``, ``P(A2=1)=p2`` and log cross-ratio ``lor``."""
    from .dale import joint_table
    t = joint_table(1 - p1, 1 - p2, np.exp(lor))
    return t.tolist()


def _base(pu_given_c, px):
    """(prob, u, c, x1, x2) over binary u, c, x1, x2 with x1, x2 exchangeable given c."""
    out = []
    for c, u, x1, x2 in itertools.product((0, 1), repeat=4):
        pc = 0.5
        pu = pu_given_c[c] if u == 1 else 1 - pu_given_c[c]
        out.append((pc * pu * px[c][x1][x2], u, c, x1, x2))
    return out


# P(x1, x2 | c): exchangeable and positively associated
_PX = {0: [[0.4, 0.1], [0.1, 0.4]], 1: [[0.2, 0.15], [0.15, 0.5]]}
_PU = {0: 0.3, 1: 0.6}


def _outcome_interference(u, c, x_own, x_cot, a, b):
    return 1.0 + 2.0 * u + 0.5 * c + 1.0 * x_own + 0.5 * x_cot + 1.5 * a - 1.0 * b + 0.75 * a * b + 1.0 * u * a


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-v))


def shipped_worlds() -> dict[str, DiscreteWorld]:
    cn, xn = ("c",), ("x",)
    worlds = {}

    def exp_measured(u, c, x1, x2):
        # depends on both twins' covariates and has within-pair association: Model 1 only
        p1 = _sigmoid(-0.5 + 0.8 * c + 0.7 * x1 + 0.4 * x2)
        p2 = _sigmoid(-0.5 + 0.8 * c + 0.7 * x2 + 0.4 * x1)
        return _table(p1, p2, 0.9)

    worlds["identified"] = DiscreteWorld(
        "identified", _symmetric_atoms(_base(_PU, _PX), exp_measured, _outcome_interference), cn, xn,
        {"A1": True, "A2": True, "A3": True, "A4": False, "A5": False, "A6": False,
         "C1": True, "C3": True, "C4": True},
        {"dr_gap": True},
        "Exposures depend on measured covariates only; interference and cross-twin effects present.")

    def exp_confounded(u, c, x1, x2):
        p1 = _sigmoid(-1.0 + 2.0 * u + 0.5 * c + 0.7 * x1)
        p2 = _sigmoid(-1.0 + 2.0 * u + 0.5 * c + 0.7 * x2)
        return _table(p1, p2, 0.5)

    worlds["confounded"] = DiscreteWorld(
        "confounded", _symmetric_atoms(_base(_PU, _PX), exp_confounded, _outcome_interference), cn, xn,
        {"A1": False, "A2": True, "C1": True, "C3": True, "C4": True},
        {"g_formula_gap": True},
        "A shared unmeasured factor drives exposures and outcomes: the g-formula is biased, "
        "the co-twin-control identity still holds.")

    def exp_shared_u(u, c, x1, x2):
        p1 = _sigmoid(-0.5 + 1.5 * u + 0.6 * x1 - 0.3 * x2)
        p2 = _sigmoid(-0.5 + 1.5 * u + 0.6 * x2 - 0.3 * x1)
        return _table(p1, p2, -0.4)

    worlds["symmetric"] = DiscreteWorld(
        "symmetric", _symmetric_atoms(_base(_PU, _PX), exp_shared_u, _outcome_interference), cn, xn,
        {"C1": True, "C2": True, "C3": True, "C4": True, "A1": False},
        {}, "Label-symmetric world with shared unmeasured confounding (C1-C4).")

    def outcome_asym(u, c, x_own, x_cot, a, b):
        return _outcome_interference(u, c, x_own, x_cot, a, b)

    base = _base(_PU, _PX)
    atoms = []
    for p, u, c, x1, x2 in base:
        e = _table(_sigmoid(-1.0 + 2.5 * u + 0.5 * x1), _sigmoid(-0.5 - 1.0 * u + 0.5 * x2), 0.3)
        y1 = tuple(tuple(outcome_asym(u, c, x1, x2, a, b) + 2.0 * u * a for b in (0, 1)) for a in (0, 1))
        y2 = tuple(tuple(outcome_asym(u, c, x2, x1, a, b) - 1.0 * u for b in (0, 1)) for a in (0, 1))
        atoms.append(Atom(p, float(u), (float(c),), (float(x1),), (float(x2),),
                          tuple(tuple(r) for r in e), y1, y2))
    worlds["asymmetric"] = DiscreteWorld(
        "asymmetric", tuple(atoms), cn, xn, {"C1": True, "C3": True, "C4": False},
        {"ctc_gap": True}, "Twin 1 and Twin 2 differ systematically (labels not random): C4 fails.")

    def outcome_no_int(u, c, x_own, x_cot, a, b):
        return 1.0 + 2.0 * u + 0.5 * c + 1.0 * x_own + 0.5 * x_cot + 1.5 * a + 1.0 * u * a

    worlds["no_interference"] = DiscreteWorld(
        "no_interference", _symmetric_atoms(_base(_PU, _PX), exp_shared_u, outcome_no_int), cn, xn,
        {"C1": True, "C3": True, "C4": True},
        {"no_interference": True},
        "Outcomes ignore the co-twin's exposure: the CTC effect is the usual exposure effect.")

    def exp_model2(u, c, x1, x2):
        p1 = _sigmoid(-0.4 + 0.9 * c + 0.8 * x1)
        p2 = _sigmoid(-0.4 + 0.9 * c + 0.8 * x2)
        return _table(p1, p2, 0.0)

    def outcome_model2(u, c, x_own, x_cot, a, b):
        return 1.0 + 2.0 * u + 0.5 * c + 1.0 * x_own + 1.5 * a - 1.0 * b + 0.75 * a * b + 1.0 * x_own * b

    worlds["model2"] = DiscreteWorld(
        "model2", _symmetric_atoms(_base(_PU, _PX), exp_model2, outcome_model2), cn, xn,
        {"A1": True, "A2": True, "A3": True, "A4": True, "A5": True, "A6": True,
         "C1": True, "C3": True, "C4": True},
        {"dr_gap": True},
        "Satisfies A1-A6: exposures independent given covariates, no cross-twin covariate effects.")

    def exp_positivity(u, c, x1, x2):
        if c == 1 and x1 == 1 and x2 == 1:
            return [[0.0, 0.0], [0.0, 1.0]]
        return exp_measured(u, c, x1, x2)

    worlds["positivity_violation"] = DiscreteWorld(
        "positivity_violation", _symmetric_atoms(_base(_PU, _PX), exp_positivity, _outcome_interference),
        cn, xn, {"A2": False}, {},
        "Pairs with c=1, x1=x2=1 are always both exposed: positivity fails.")
    return worlds


def shipped_world_paths() -> list[Path]:
    from importlib import resources
    root = Path(str(resources.files("pairfx") / "fixtures" / "worlds"))
    return sorted(root.glob("*.json"))
