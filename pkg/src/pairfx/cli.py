"""``pairfx`` command line: estimate, simulate, verify, gen-data, render.

Exit codes: 0 success, 1 runtime or statistical failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

from . import oracle
from .data import PairedDataset, load_dataset, subset_by_zygosity, write_dataset
from .errors import PairFxError
from .estimators import EstimandSpec, fit_ctc
from .inference import BootstrapPlan, bootstrap_ci, subgroup_difference, wald_ci
from .pipeline import ModelConfig, Pipeline, ctc_covariates, estimate, fit_nuisances
from .regression import RankDeficiencyWarning
from .simulate import (PRESETS, DgmConfig, EstimatorRecipe, MonteCarloReport, default_model_config,
                       fixture_path, generate, load_preset, run_monte_carlo)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
STRATA = ("All", "MZ", "DZ")
CI_CHOICES = ("wald", "bootstrap", "both", "none")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- argument types

def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def _non_negative_int(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {v}")
    return v


def _level(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError("level must lie in (0, 1)")
    return v


def _estimand_list(text: str) -> tuple[str, ...]:
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    if not names:
        raise argparse.ArgumentTypeError("no estimand given")
    for n in names:
        if n != "ctc":
            try:
                EstimandSpec.parse(n)
            except ValueError as exc:
                raise argparse.ArgumentTypeError(str(exc)) from None
    return names


def _single_estimand(text: str) -> str:
    try:
        EstimandSpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    return text


def _existing_file(text: str) -> Path:
    p = Path(text)
    if not p.is_file():
        raise argparse.ArgumentTypeError(f"no such file: {text}")
    return p


def _resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("PAIRFX_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"PAIRFX_SEED must be an integer, got {env!r}") from None


def _fmt(v) -> str:
    return "-" if v is None else f"{v:.3f}"


def _write_outputs(prefix: str | None, payload: dict, text: str, fmt: str = "both") -> None:
    sys.stdout.write(text)
    if prefix is None:
        return
    if prefix.endswith((".json", ".txt")):  # `--out report.json` names the pair report.json/report.txt
        prefix = prefix.rsplit(".", 1)[0]
    if fmt in ("json", "both"):
        Path(f"{prefix}.json").write_text(json.dumps(payload, indent=2) + "\n")
    if fmt in ("text", "both"):
        Path(f"{prefix}.txt").write_text(text)


# ---------------------------------------------------------------- estimate

@dataclass(frozen=True)
class AnalysisConfig:
    data: Path
    schema: Path
    model_config: Path
    estimands: tuple[str, ...]
    models: tuple[str, ...]
    ci: str
    B: int
    level: float
    subgroups: bool
    seed: int
    threads: int
    out: str | None
    format: str

    @classmethod
    def from_args(cls, args) -> "AnalysisConfig":
        models = ("M1", "M2") if args.model == "both" else (args.model,)
        cells = len(models) * len([e for e in args.estimand if e != "ctc"])
        subgroups = args.subgroups if args.subgroups is not None else cells > 1
        return cls(Path(args.data) if args.data else fixture_path("mtfs_like.csv"),
                   Path(args.schema) if args.schema else fixture_path("schema.json"),
                   Path(args.config) if args.config else fixture_path("model_config.json"),
                   args.estimand, models, args.ci, args.bootstrap_reps, args.level, subgroups,
                   _resolve_seed(args.seed), args.threads, args.out, args.format)


def _interval_dict(ci) -> dict | None:
    return None if ci is None else {"lower": ci.lower, "upper": ci.upper, "method": ci.method,
                                    "level": ci.level, "failures": ci.failures}


def _strata(ds: PairedDataset, subgroups: bool) -> list[tuple[str, PairedDataset]]:
    if not subgroups:
        return [("All", ds)]
    return [(s, ds if s == "All" else subset_by_zygosity(ds, s)) for s in STRATA]


def run_analysis(cfg: AnalysisConfig) -> dict:
    ds = load_dataset(cfg.data, cfg.schema)
    mc = ModelConfig.load(cfg.model_config)
    plan = BootstrapPlan(cfg.B, cfg.seed, cfg.threads)
    want_wald = cfg.ci in ("wald", "both")
    want_boot = cfg.ci in ("bootstrap", "both")
    effects = [e for e in cfg.estimands if e != "ctc"]
    cells, ctc = [], []
    for stratum, sub in _strata(ds, cfg.subgroups):
        nuis = fit_nuisances(sub, mc, cfg.models) if effects else None
        for model in cfg.models:
            for name in effects:
                spec = EstimandSpec.parse(name)
                est = estimate(sub, nuis, model, spec, mc.clip)
                cell = {"stratum": stratum, "model": model, "estimand": name, "point": est.point,
                        "se": est.se, "n_pairs": sub.n,
                        "wald": _interval_dict(wald_ci(est, cfg.level)) if want_wald else None,
                        "bootstrap": None}
                if want_boot:
                    cell["bootstrap"] = _interval_dict(
                        bootstrap_ci(sub, Pipeline(model, spec, mc), plan, cfg.level).ci)
                cells.append(cell)
        if "ctc" in cfg.estimands:
            fit = fit_ctc(sub, ctc_covariates(sub, mc))
            entry = {"stratum": stratum, "point": fit.beta_W, "n_pairs": sub.n, "bootstrap": None}
            if want_boot:
                entry["bootstrap"] = _interval_dict(
                    bootstrap_ci(sub, Pipeline("CTC", EstimandSpec.parse("spillover"), mc), plan, cfg.level).ci)
            ctc.append(entry)
    differences = []
    if cfg.subgroups and effects:
        for model in cfg.models:
            for name in effects:
                pipe = Pipeline(model, EstimandSpec.parse(name), mc)
                if want_boot:
                    point, res = subgroup_difference(ds, pipe, plan, cfg.level)
                    interval = _interval_dict(res.ci)
                else:
                    point, interval = pipe(subset_by_zygosity(ds, "MZ")) - pipe(subset_by_zygosity(ds, "DZ")), None
                differences.append({"model": model, "estimand": name, "point": point, "bootstrap": interval})
    return {"kind": "estimate", "data": str(cfg.data), "n_pairs": ds.n, "seed": cfg.seed,
            "level": cfg.level, "ci": cfg.ci, "num_bootstrap": cfg.B if want_boot else None,
            "models": list(cfg.models), "estimands": list(cfg.estimands),
            "cells": cells, "ctc": ctc, "mz_minus_dz": differences}


def _cell_text(cell) -> str:
    if cell is None:
        return ""
    out = _fmt(cell["point"])
    iv = cell.get("bootstrap") or cell.get("wald")
    if iv is not None:
        out += f" ({_fmt(iv['lower'])}, {_fmt(iv['upper'])})"
    return out


def render_estimate(report: dict) -> str:
    effects = [e for e in report["estimands"] if e != "ctc"]
    has_ctc = "ctc" in report["estimands"]
    head = ["Stratum", "Model"] + effects + (["CTC"] if has_ctc else [])
    lookup = {(c["stratum"], c["model"], c["estimand"]): c for c in report["cells"]}
    ctc = {c["stratum"]: c for c in report["ctc"]}
    strata = list(dict.fromkeys([c["stratum"] for c in report["cells"]] + list(ctc)))
    body = []
    for s in strata:
        for k, model in enumerate(report["models"] if effects else [""]):
            row = [s if k == 0 else "", model] + [_cell_text(lookup.get((s, model, e))) for e in effects]
            if has_ctc:
                row.append(_cell_text(ctc.get(s)) if k == 0 else "")
            body.append(row)
    diffs = {(d["model"], d["estimand"]): d for d in report.get("mz_minus_dz", [])}
    if diffs:
        for k, model in enumerate(report["models"]):
            row = ["MZ-DZ" if k == 0 else "", model] + [_cell_text(diffs.get((model, e))) for e in effects]
            body.append(row + ([""] if has_ctc else []))
    widths = [max(len(r[k]) for r in [head] + body) for k in range(len(head))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in [head] + body]
    ci = {"wald": "Wald", "bootstrap": "percentile bootstrap", "both": "percentile bootstrap",
          "none": "none"}[report["ci"]]
    title = f"Effect estimates: {report['n_pairs']} pairs, intervals: {ci} ({100 * report['level']:g}%)"
    return "\n".join([title] + lines) + "\n"


def cmd_estimate(args) -> int:
    cfg = AnalysisConfig.from_args(args)
    for p in (cfg.data, cfg.schema, cfg.model_config):
        if not p.is_file():
            raise UsageError(f"no such file: {p}")
    with warnings.catch_warnings():
        # subgroup fits drop zygosity columns, which is expected
        warnings.simplefilter("ignore", RankDeficiencyWarning)
        report = run_analysis(cfg)
    _write_outputs(cfg.out, report, render_estimate(report), cfg.format)
    return EXIT_OK


# ---------------------------------------------------------------- simulate

def cmd_simulate(args) -> int:
    if args.preset:
        dgm_name, recipes = PRESETS[args.preset] if args.preset in PRESETS else (args.preset, None)
        config = load_preset(dgm_name)
    else:
        config = DgmConfig.load(args.config)
        recipes = None
    if recipes is None:
        recipes = PRESETS["table3" if config.kind == "DGM1" else "table4"][1]
    if args.models:
        recipes = tuple(EstimatorRecipe(m) for m in args.models.split(","))
    overrides = {}
    if args.seed is not None or "PAIRFX_SEED" in os.environ:
        overrides["seed"] = _resolve_seed(args.seed)
    if args.n is not None:
        overrides["n"] = args.n
    if overrides:
        config = DgmConfig.from_dict({**config.to_dict(), **overrides})
    mc = ModelConfig.load(args.model_config) if args.model_config else default_model_config()
    report = run_monte_carlo(config, recipes, args.reps, args.bootstrap_reps, mc,
                             EstimandSpec.parse(args.estimand), args.level, args.threads)
    payload = {"kind": "simulate", **report.to_dict()}
    _write_outputs(args.out, payload, report.render_table())
    return EXIT_OK


# ---------------------------------------------------------------- verify

def cmd_verify(args) -> int:
    paths = [Path(p) for p in args.world] if args.world else oracle.shipped_world_paths()
    if not paths:
        print("no fixture worlds found", file=sys.stderr)
        return EXIT_FAILURE
    failed = 0
    for p in paths:
        try:
            world = oracle.load_world(p)
            results = oracle.verify_world(world)
        except PairFxError as exc:
            print(f"FAIL {p.stem}: {type(exc).__name__}: {exc}")
            failed += 1
            continue
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.world}: {r.check}" + (f" ({r.detail})" if r.detail else ""))
            failed += not r.passed
    print(f"{failed} failed" if failed else "all checks passed")
    return EXIT_FAILURE if failed else EXIT_OK


# ---------------------------------------------------------------- gen-data / render

def cmd_gen_data(args) -> int:
    config = load_preset(args.preset) if args.preset else DgmConfig.load(args.config)
    overrides = {}
    if args.seed is not None or "PAIRFX_SEED" in os.environ:
        overrides["seed"] = _resolve_seed(args.seed)
    if args.n is not None:
        overrides["n"] = args.n
    if overrides:
        config = DgmConfig.from_dict({**config.to_dict(), **overrides})
    ds = generate(config, args.replicate)
    write_dataset(ds, args.out)
    print(f"wrote {ds.n} pairs to {args.out}")
    return EXIT_OK


def cmd_render(args) -> int:
    try:
        report = json.loads(Path(args.report).read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.report} is not valid JSON ({exc})") from None
    kind = report.get("kind")
    if kind == "estimate":
        text = render_estimate(report)
    elif kind == "simulate":
        text = MonteCarloReport.from_dict({k: v for k, v in report.items() if k != "kind"}).render_table()
    else:
        raise UsageError(f"{args.report} is not a pairfx report")
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pairfx", description="Main and spillover effects in twin pairs.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="RNG seed (default: $PAIRFX_SEED, else 0)")
        p.add_argument("--threads", type=_non_negative_int, default=1,
                       help="worker processes (0 = all CPUs); results do not depend on it")

    p = sub.add_parser("estimate", help="estimate effects on a paired dataset")
    p.add_argument("data", nargs="?", help="pair-level CSV (default: the shipped synthetic dataset)")
    p.add_argument("--schema", help="schema JSON (default: shipped schema)")
    p.add_argument("--config", help="model configuration JSON (default: shipped config)")
    p.add_argument("--model", choices=("M1", "M2", "both"), default="both")
    p.add_argument("--estimand", type=_estimand_list, default=("spillover", "main", "ctc"),
                   help="comma-separated: spillover, main, ctc, mean:a,b")
    p.add_argument("--ci", choices=CI_CHOICES, default="wald")
    p.add_argument("--boot-reps", "--bootstrap-reps", "-B", dest="bootstrap_reps", type=_positive_int, default=1000)
    p.add_argument("--level", type=_level, default=0.95)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--subgroups", dest="subgroups", action="store_true", default=None,
                   help="also estimate within MZ and DZ pairs (default when more than one cell is requested)")
    g.add_argument("--no-subgroups", dest="subgroups", action="store_false")
    p.add_argument("--out", help="output prefix; writes PREFIX.json and PREFIX.txt")
    p.add_argument("--format", choices=("json", "text", "both"), default="both")
    common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run a Monte Carlo study")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=_existing_file, help="DGM configuration JSON")
    src.add_argument("--preset", choices=tuple(PRESETS) + ("dgm1", "dgm2"))
    p.add_argument("--reps", type=_positive_int, required=True)
    p.add_argument("--boot-reps", "--bootstrap-reps", "-B", dest="bootstrap_reps", type=_non_negative_int, default=0)
    p.add_argument("--n", type=_positive_int, default=None, help="pairs per dataset")
    p.add_argument("--estimand", default="spillover", type=_single_estimand)
    p.add_argument("--models", help="comma-separated models instead of the preset rows")
    p.add_argument("--model-config", type=_existing_file)
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--out", help="output prefix; writes PREFIX.json and PREFIX.txt")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the exact identification checks on fixture worlds")
    p.add_argument("--world", action="append", help="world JSON (repeatable; default: every shipped world)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("gen-data", help="write one simulated dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", type=_existing_file)
    src.add_argument("--preset", choices=("dgm1", "dgm2"))
    p.add_argument("--replicate", type=_non_negative_int, default=0)
    p.add_argument("--n", type=_positive_int, default=None)
    p.add_argument("--out", required=True)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("render", help="re-render the text table of a JSON report")
    p.add_argument("report", type=_existing_file)
    p.add_argument("--out")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (PairFxError, ValueError, OSError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
