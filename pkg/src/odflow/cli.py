"""Command-line pipeline: fit, evaluate, sync, gen.

Reproduces the experimental protocol on user or synthetic data: per-day
(or pooled) model fits, CPC / Information Gain scoring with a two-period
split, relative-improvement summaries, and synchronicity analysis of an
aggregated flow series against a reference series.

Exit codes: 0 success, 1 internal or fit failure, 2 user-input error.
Identical inputs, flags, and seeds produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DomainError, FitError, IngestError, MetricError, OdflowError
from .fitting import FitReport, fit_cgm, fit_gravity
from .geo import (
    DailyFlowMatrix,
    StringencyPanel,
    ZoneRegistry,
    aggregate_total,
    distance_matrix,
    load_flows,
    load_stringency,
    load_zones,
    write_flows,
    write_stringency,
    write_zones,
)
from .metrics import DailyScore, cpc, information_gain, mean_relative_improvement, sync_report
from .models import (
    CgmParams,
    DecayKind,
    GravityParams,
    MODEL_NAMES,
    RadiationDenominator,
    model_decay,
    model_family,
    normalize_to_total,
    opportunity_matrix,
    predict_cgm,
    predict_gravity,
    predict_radiation,
)
from .synthgen import SynthConfig, generate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_USER = 2

DEFAULT_MODELS = ("gravity-exp", "gravity-pow", "radiation")
DEFAULT_WINDOWS = (5, 10, 15, 20, 25)
CGM_BASELINES = ("radiation", "gravity-pow", "gravity-exp")

SCORES_HEADER = ["date", "model", "cpc", "ig"]
REFERENCE_HEADER = ["date", "value"]


@dataclass(frozen=True)
class RunConfig:
    """Everything one fit/evaluate run needs, resolved from flags."""

    zones_path: str
    flows_path: str
    stringency_path: str | None
    models: tuple[str, ...]
    direction: str
    split_date: dt.date | None
    normalize_totals: bool
    radiation_denominator: RadiationDenominator
    pooled: bool
    out_dir: Path
    seed: int | None
    workers: int
    params_path: str | None = None
    improvement_convention: str = "mean-of-ratios"

    def __post_init__(self):
        if not self.models:
            raise ConfigError("model list must not be empty")
        for model in self.models:
            if model not in MODEL_NAMES:
                raise ConfigError(f"unknown model {model!r}; choose from {MODEL_NAMES}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


# ---------------------------------------------------------------------------
# shared pipeline pieces

def _require_stringency(cfg: RunConfig) -> None:
    if any(model_family(m) == "cgm" for m in cfg.models) and not cfg.stringency_path:
        wanted = [m for m in cfg.models if model_family(m) == "cgm"]
        raise ConfigError(
            f"model(s) {', '.join(wanted)} need a stringency file; pass --stringency"
        )


def _load_run_inputs(cfg: RunConfig):
    registry = load_zones(cfg.zones_path)
    panel = load_flows(cfg.flows_path, registry, direction=cfg.direction)
    if not panel:
        raise ConfigError(f"{cfg.flows_path}: no flow rows")
    stringency = load_stringency(cfg.stringency_path) if cfg.stringency_path else None
    return registry, panel, stringency, distance_matrix(registry)


def default_split_date(dates: Sequence[dt.date]) -> dt.date:
    """16th panel day; midpoint for panels shorter than 16 days."""
    if len(dates) >= 16:
        return dates[15]
    return dates[len(dates) // 2]


def _resolve_split(cfg: RunConfig, dates: Sequence[dt.date]) -> dt.date:
    if cfg.split_date is None:
        return default_split_date(dates)
    if not dates[0] < cfg.split_date <= dates[-1]:
        raise ConfigError(
            f"--split-date {cfg.split_date.isoformat()} must fall inside the "
            f"panel range ({dates[0].isoformat()} .. {dates[-1].isoformat()}]"
        )
    return cfg.split_date


def _run_tasks(tasks, worker, workers: int) -> dict:
    """Apply `worker` to every task, in a pool, gathering deterministically."""
    if workers <= 1:
        return {task: worker(task) for task in tasks}
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(worker, tasks))
    return dict(zip(tasks, results))


def _params_to_dict(params) -> dict:
    if params is None:
        return {}
    if isinstance(params, GravityParams):
        return {"scale": params.scale, "beta": params.beta,
                "decay": params.decay.value}
    if isinstance(params, CgmParams):
        return {"epsilon": params.epsilon, "alpha": params.alpha,
                "beta": params.beta, "gamma": params.gamma,
                "delta1": params.delta1, "delta2": params.delta2,
                "decay": params.decay.value, "decay_rate": params.decay_rate}
    raise TypeError(f"unknown params type {type(params)!r}")


def _params_from_dict(model: str, raw: dict):
    decay = model_decay(model)
    family = model_family(model)
    try:
        if family == "gravity":
            return GravityParams(scale=float(raw["scale"]),
                                 beta=float(raw["beta"]), decay=decay)
        if family == "cgm":
            return CgmParams(
                epsilon=float(raw["epsilon"]), alpha=float(raw["alpha"]),
                beta=float(raw["beta"]), gamma=float(raw["gamma"]),
                delta1=float(raw["delta1"]), delta2=float(raw["delta2"]),
                decay=decay, decay_rate=float(raw.get("decay_rate", 1.0)))
    except (KeyError, ValueError, TypeError) as exc:
        raise ConfigError(f"bad stored params for {model}: {exc}") from None
    return None


def _fit_one(model: str, matrices, dist, registry, stringency) -> FitReport | None:
    family = model_family(model)
    if family == "radiation":
        return None
    if family == "gravity":
        return fit_gravity(matrices, dist, registry.populations, model_decay(model))
    return fit_cgm(matrices, dist, registry, stringency, model_decay(model))


def _fit_records(cfg: RunConfig, registry, panel, stringency, dist) -> list[dict]:
    tasks = []
    for model in cfg.models:
        if model_family(model) == "radiation":
            tasks.append((model, None))
        elif cfg.pooled:
            tasks.append((model, None))
        else:
            tasks.extend((model, matrix.date) for matrix in panel)
    by_date = {matrix.date: matrix for matrix in panel}

    def worker(task):
        model, date = task
        if model_family(model) == "radiation":
            return None
        matrices = panel if date is None else [by_date[date]]
        return _fit_one(model, matrices, dist, registry, stringency)

    results = _run_tasks(tasks, worker, cfg.workers)
    records = []
    for task in tasks:
        model, date = task
        report = results[task]
        record = {
            "model": model,
            "date": date.isoformat() if date else None,
            "params": _params_to_dict(report.params if report else None),
        }
        if report is not None:
            record["converged"] = report.converged
            record["iterations"] = report.iterations
            record["objective"] = report.objective
            if report.dispersion is not None:
                record["dispersion"] = report.dispersion
        records.append(record)
    return records


# ---------------------------------------------------------------------------
# subcommands

def cmd_fit(cfg: RunConfig) -> int:
    _require_stringency(cfg)
    registry, panel, stringency, dist = _load_run_inputs(cfg)
    records = _fit_records(cfg, registry, panel, stringency, dist)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "direction": cfg.direction,
        "pooled": cfg.pooled,
        "fits": records,
    }
    _write_json(cfg.out_dir / "params.json", payload)
    return EXIT_OK


def _stored_params(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    try:
        records = payload["fits"]
    except (TypeError, KeyError):
        raise ConfigError(f"{path}: missing 'fits' list") from None
    index = {}
    for record in records:
        index[(record["model"], record.get("date"))] = record.get("params", {})
    return index


def _lookup_params(index: dict, model: str, date: dt.date):
    for key in ((model, date.isoformat()), (model, None)):
        if key in index:
            return _params_from_dict(model, index[key])
    raise ConfigError(
        f"no stored parameters for model {model!r} on {date.isoformat()}"
    )


def cmd_evaluate(cfg: RunConfig) -> int:
    _require_stringency(cfg)
    registry, panel, stringency, dist = _load_run_inputs(cfg)
    dates = [matrix.date for matrix in panel]
    split = _resolve_split(cfg, dates)
    by_date = {matrix.date: matrix for matrix in panel}
    stored = _stored_params(cfg.params_path) if cfg.params_path else None

    needs_opportunity = any(model_family(m) == "radiation" for m in cfg.models)
    opportunity = opportunity_matrix(registry, dist) if needs_opportunity else None

    tasks = [(model, date) for model in cfg.models for date in dates]

    def worker(task):
        model, date = task
        observed = by_date[date]
        family = model_family(model)
        if family == "radiation":
            predicted = predict_radiation(registry, observed.outflows(),
                                          opportunity, cfg.radiation_denominator)
        else:
            if stored is not None:
                params = _lookup_params(stored, model, date)
            else:
                matrices = panel if cfg.pooled else [observed]
                params = _fit_one(model, matrices, dist, registry, stringency).params
            if family == "gravity":
                predicted = predict_gravity(registry, dist, params)
                if cfg.normalize_totals:
                    predicted = normalize_to_total(predicted, observed.total())
            else:
                predicted = predict_cgm(registry, dist, params, stringency, date)
        return DailyScore(date=date, model=model,
                          cpc=cpc(predicted, observed.counts),
                          ig=information_gain(observed.counts, predicted))

    results = _run_tasks(tasks, worker, cfg.workers)
    scores = [results[(model, date)] for date in dates for model in cfg.models]

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_scores(cfg.out_dir / "scores.csv", scores)
    summary = summarize_scores(
        scores, split,
        models=cfg.models,
        convention=cfg.improvement_convention,
    )
    summary["direction"] = cfg.direction
    summary["normalize_totals"] = cfg.normalize_totals
    summary["radiation_denominator"] = cfg.radiation_denominator.value
    _write_json(cfg.out_dir / "summary.json", summary)
    return EXIT_OK


def summarize_scores(scores: Sequence[DailyScore], split: dt.date, *,
                     models: Sequence[str],
                     convention: str = "mean-of-ratios") -> dict:
    """Aggregate per-day scores into the summary.json structure.

    Per model: mean/max/min CPC, mean CPC before and from the split date,
    mean IG. Plus the mean relative CPC improvement of every CGM variant
    over radiation and the two gravity variants (when present).
    """
    per_model: dict[str, dict] = {}
    series: dict[str, list[float]] = {}
    for model in models:
        daily = [s for s in scores if s.model == model]
        cpcs = [s.cpc for s in daily]
        p1 = [s.cpc for s in daily if s.date < split]
        p2 = [s.cpc for s in daily if s.date >= split]
        per_model[model] = {
            "mean_cpc": _mean(cpcs),
            "max_cpc": max(cpcs) if cpcs else None,
            "min_cpc": min(cpcs) if cpcs else None,
            "mean_cpc_p1": _mean(p1),
            "mean_cpc_p2": _mean(p2),
            "mean_ig": _mean([s.ig for s in daily]),
        }
        series[model] = cpcs
    improvements: dict[str, dict] = {}
    for model in models:
        if model_family(model) != "cgm":
            continue
        block = {}
        for baseline in CGM_BASELINES:
            if baseline in series:
                block[baseline] = mean_relative_improvement(
                    series[model], series[baseline], convention=convention)
        if block:
            improvements[model] = block
    return {
        "split_date": split.isoformat(),
        "improvement_convention": convention,
        "models": per_model,
        "relative_improvement": improvements,
    }


def cmd_sync(cfg: RunConfig, reference_path: str, focus: str,
             windows: Sequence[int]) -> int:
    registry = load_zones(cfg.zones_path)
    panel = load_flows(cfg.flows_path, registry, direction=cfg.direction)
    if not panel:
        raise ConfigError(f"{cfg.flows_path}: no flow rows")
    direction = cfg.direction if cfg.direction in ("incoming", "outgoing") else "incoming"
    aggregated = aggregate_total(panel, registry, focus, direction)
    reference = _load_reference(reference_path)
    common = sorted(set(aggregated) & set(reference))
    if not common:
        raise ConfigError("no overlapping dates between flows and reference series")
    flow_series = [aggregated[d] for d in common]
    ref_series = [reference[d] for d in common]
    report = sync_report(ref_series, flow_series, windows)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    payload = {
        "rho_g": report.rho_g,
        "local": [
            {"w": stats.w, "mean": _nan_to_none(stats.mean),
             "median": _nan_to_none(stats.median)}
            for stats in report.local
        ],
        "focus": focus,
        "direction": direction,
        "dates": [d.isoformat() for d in (common[0], common[-1])],
        "points": len(common),
    }
    _write_json(cfg.out_dir / "sync.json", payload)
    return EXIT_OK


def cmd_gen(config_path: str | None, out_dir: Path, seed: int | None) -> int:
    cfg = SynthConfig.from_file(config_path) if config_path else SynthConfig()
    if seed is not None:
        cfg = dataclasses.replace(cfg, seed=seed)
    result = generate(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_zones(out_dir / "zones.csv", result.registry)
    write_flows(out_dir / "flows.csv", result.flows, result.registry)
    write_stringency(out_dir / "stringency.csv", result.stringency)
    truth = {
        "model": cfg.model,
        "params": _params_to_dict(result.truth),
        "noise": cfg.noise,
        "dispersion": cfg.dispersion if cfg.noise == "negative_binomial" else None,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
    }
    if cfg.model == "radiation":
        truth["trips_per_capita"] = cfg.trips_per_capita
    _write_json(out_dir / "truth.json", truth)
    return EXIT_OK


# ---------------------------------------------------------------------------
# I/O helpers

def _mean(values) -> float | None:
    return float(np.mean(values)) if len(values) else None


def _nan_to_none(value: float):
    return None if math.isnan(value) else value


def _fmt_float(value: float) -> str:
    return repr(float(value))


def _write_scores(path, scores: Sequence[DailyScore]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SCORES_HEADER)
        for score in scores:
            writer.writerow([score.date.isoformat(), score.model,
                             _fmt_float(score.cpc), _fmt_float(score.ig)])


def _write_json(path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_reference(path) -> dict[dt.date, float]:
    series: dict[dt.date, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != REFERENCE_HEADER:
            raise IngestError(
                f"{path}: expected header {','.join(REFERENCE_HEADER)!r}, got {header}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise IngestError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                date = dt.date.fromisoformat(row[0])
                value = float(row[1])
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from None
            if date in series:
                raise IngestError(f"{path}:{lineno}: duplicate date {row[0]}")
            series[date] = value
    return series


# ---------------------------------------------------------------------------
# argument parsing

def _parse_models(raw: str) -> tuple[str, ...]:
    models = tuple(m.strip() for m in raw.split(",") if m.strip())
    return models


def _parse_date(raw: str) -> dt.date:
    try:
        return dt.date.fromisoformat(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"bad date {raw!r} (expected YYYY-MM-DD)") from None


def _parse_windows(raw: str) -> tuple[int, ...]:
    try:
        windows = tuple(int(w) for w in raw.split(",") if w.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad window list {raw!r}") from None
    if not windows:
        raise argparse.ArgumentTypeError("window list must not be empty")
    return windows


def _add_shared(sub: argparse.ArgumentParser, *, needs_flows: bool = True) -> None:
    if needs_flows:
        sub.add_argument("--zones", help="zones CSV (id,name,population,lat,lon)")
        sub.add_argument("--flows", help="flows CSV (date,origin,destination,count)")
        sub.add_argument("--stringency", help="stringency CSV (date,zone,si); required for CGM models")
        sub.add_argument("--models", type=_parse_models, default=DEFAULT_MODELS,
                         metavar="M1,M2,...",
                         help=f"comma-separated subset of {','.join(MODEL_NAMES)} "
                              f"(default: {','.join(DEFAULT_MODELS)})")
        sub.add_argument("--direction", choices=["incoming", "outgoing", "full"],
                         default="full", help="direction tag of the flow matrices")
        sub.add_argument("--split-date", type=_parse_date,
                         help="P1/P2 boundary date (default: 16th panel day)")
        sub.add_argument("--normalize-totals", action=argparse.BooleanOptionalAction,
                         default=True,
                         help="rescale gravity predictions to the day's observed total")
        sub.add_argument("--radiation-denominator", choices=["canonical", "paper"],
                         default="canonical",
                         help="first radiation denominator factor: (m_i+s) or printed (m_j+s)")
        sub.add_argument("--pooled", action="store_true",
                         help="fit once over the whole panel instead of per day")
        sub.add_argument("--config", help="JSON file of flag defaults (flags win on conflict)")
    sub.add_argument("--out", help="output directory")
    sub.add_argument("--seed", type=int, help="RNG seed (consumed by gen)")
    sub.add_argument("--workers", type=int, default=1,
                     help="parallel fit/evaluate workers (default 1)")


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(
        prog="odflow",
        description="Origin-destination mobility flow modeling pipeline",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry = {}

    fit = subs.add_parser("fit", help="fit model parameters; writes params.json")
    _add_shared(fit)
    registry["fit"] = fit

    evaluate = subs.add_parser(
        "evaluate", help="score models per day; writes scores.csv and summary.json")
    _add_shared(evaluate)
    evaluate.add_argument("--params", help="params.json from a previous fit (default: fit inline)")
    evaluate.add_argument("--improvement-convention",
                          choices=["mean-of-ratios", "ratio-of-means"],
                          default="mean-of-ratios",
                          help="how mean relative CPC improvements are averaged")
    registry["evaluate"] = evaluate

    sync = subs.add_parser(
        "sync", help="synchronicity of aggregated flows vs a reference series; writes sync.json")
    sync.add_argument("--zones", help="zones CSV")
    sync.add_argument("--flows", help="flows CSV")
    sync.add_argument("--reference", help="reference series CSV (date,value)")
    sync.add_argument("--focus", help="zone id whose flows are aggregated")
    sync.add_argument("--direction", choices=["incoming", "outgoing"],
                      default="incoming", help="aggregation direction")
    sync.add_argument("--windows", type=_parse_windows,
                      default=DEFAULT_WINDOWS, metavar="W1,W2,...",
                      help="sliding window sizes (default 5,10,15,20,25)")
    sync.add_argument("--config", help="JSON file of flag defaults (flags win on conflict)")
    _add_shared(sync, needs_flows=False)
    registry["sync"] = sync

    gen = subs.add_parser("gen", help="generate a synthetic dataset; writes CSVs and truth.json")
    gen.add_argument("--config", help="SynthConfig JSON (default: built-in config)")
    _add_shared(gen, needs_flows=False)
    registry["gen"] = gen

    return parser, registry


def _merge_config_defaults(parser, subparser, argv, args):
    """Reparse with config-file values as defaults so flags win."""
    with open(args.config, encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: config must be a JSON object")
    dests = {action.dest: action for action in subparser._actions}
    defaults = {}
    for key, value in raw.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest in ("config", "help"):
            raise ConfigError(f"{args.config}: unknown config key {key!r}")
        action = dests[dest]
        if action.type is not None and isinstance(value, str):
            value = action.type(value)
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require_flags(args, *names) -> None:
    missing = [f"--{name}" for name in names if getattr(args, name, None) is None]
    if missing:
        raise ConfigError(f"missing required flag(s): {', '.join(missing)}")


def _run_config_from(args) -> RunConfig:
    return RunConfig(
        zones_path=args.zones,
        flows_path=args.flows,
        stringency_path=args.stringency,
        models=tuple(args.models),
        direction=args.direction,
        split_date=args.split_date,
        normalize_totals=args.normalize_totals,
        radiation_denominator=RadiationDenominator(args.radiation_denominator),
        pooled=args.pooled,
        out_dir=Path(args.out),
        seed=args.seed,
        workers=args.workers,
        params_path=getattr(args, "params", None),
        improvement_convention=getattr(args, "improvement_convention",
                                       "mean-of-ratios"),
    )


def main(argv=None) -> int:
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command != "gen" and getattr(args, "config", None):
            args = _merge_config_defaults(
                parser, subparsers[args.command],
                argv if argv is not None else sys.argv[1:], args)
        if args.command == "fit":
            _require_flags(args, "zones", "flows", "out")
            return cmd_fit(_run_config_from(args))
        if args.command == "evaluate":
            _require_flags(args, "zones", "flows", "out")
            return cmd_evaluate(_run_config_from(args))
        if args.command == "sync":
            _require_flags(args, "zones", "flows", "reference", "focus", "out")
            cfg = RunConfig(
                zones_path=args.zones, flows_path=args.flows,
                stringency_path=None, models=DEFAULT_MODELS,
                direction=args.direction, split_date=None,
                normalize_totals=True,
                radiation_denominator=RadiationDenominator.CANONICAL,
                pooled=False, out_dir=Path(args.out), seed=args.seed,
                workers=args.workers,
            )
            return cmd_sync(cfg, args.reference, args.focus, args.windows)
        if args.command == "gen":
            _require_flags(args, "out")
            return cmd_gen(args.config, Path(args.out), args.seed)
        parser.error(f"unknown command {args.command!r}")
    except (IngestError, ConfigError, FileNotFoundError, NotADirectoryError,
            IsADirectoryError, KeyError) as exc:
        message = exc.args[0] if exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return EXIT_USER
    except (FitError, MetricError, DomainError, OdflowError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
