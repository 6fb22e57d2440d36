"""Command-line entry point: simulate | fit | cv | study.

Configuration comes from an optional JSON document plus overriding flags;
unknown config keys are rejected before anything runs.  Exit codes:
0 success, 2 configuration error, 3 numerical failure.  Study outputs are
recomputed from scratch on every invocation; there is no checkpointing or
resume support.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import BandwidthGrid, epanechnikov, make_weight
from .curves import ParamCurve
from .estimator import DegenerateWindowError, fit_curve, localfit_to_csv
from .experiments import ExperimentConfig, model_preset, run_study, write_study_outputs
from .likelihood import DomainError, objective_for
from .processes import Innovation, SimulatedSeries, series_from_csv, series_to_csv, simulate
from .selection import (
    DegenerateBiasError,
    info_field,
    plugin_components,
    report_to_csv,
    report_to_json,
    select_bandwidth,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

_CONFIG_KEYS = {
    "model", "curves", "n", "reps", "grid", "seed", "workers", "out",
    "misspecified", "innovation", "bandwidth", "input",
}


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    model: str = "a"
    curves: Optional[dict] = None
    n: int = 200
    reps: int = 20
    grid: tuple[float, float, int] = (0.01, 0.99, 40)
    seed: int = 1
    workers: int = 1
    out: str = "out"
    misspecified: bool = False
    innovation: str = "gaussian"
    bandwidth: Optional[float] = None
    input: Optional[str] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls()
        for key, value in raw.items():
            if key == "grid":
                value = _parse_grid(value)
            setattr(cfg, key, value)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["grid"] = list(self.grid)
        return d

    def validate(self) -> None:
        if self.model not in ("a", "b", "c", "d"):
            raise ConfigError(f"config key 'model' must be a, b, c or d; got {self.model!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise ConfigError(f"config key 'n' must be a positive integer; got {self.n!r}")
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ConfigError(f"config key 'reps' must be a positive integer; got {self.reps!r}")
        lo, hi, count = self.grid
        if not (0.0 < lo <= hi < 1.0 and int(count) >= 2):
            raise ConfigError(f"config key 'grid' must be MIN:MAX:POINTS inside (0,1); got {self.grid!r}")
        try:
            Innovation(self.innovation)
        except ValueError:
            raise ConfigError(f"config key 'innovation' must be one of "
                              f"gaussian, uniform, exponential, pareto; got {self.innovation!r}") from None
        if self.misspecified and self.model not in ("b", "c"):
            raise ConfigError("config key 'misspecified' requires model b or c")
        if self.seed < 0:
            raise ConfigError("config key 'seed' must be nonnegative")
        if self.workers < 1:
            raise ConfigError("config key 'workers' must be at least 1")


def _parse_grid(value) -> tuple[float, float, int]:
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 3:
            raise ConfigError(f"grid must be MIN:MAX:POINTS, got {value!r}")
        return (float(parts[0]), float(parts[1]), int(parts[2]))
    if isinstance(value, (list, tuple)) and len(value) == 3:
        return (float(value[0]), float(value[1]), int(value[2]))
    raise ConfigError(f"grid must be MIN:MAX:POINTS, got {value!r}")


def _load_config(args) -> RunConfig:
    raw = {}
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config document must be a JSON object")
    for key in ("model", "n", "reps", "seed", "workers", "out", "innovation", "bandwidth", "input"):
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    if getattr(args, "grid", None) is not None:
        raw["grid"] = args.grid
    if getattr(args, "misspecified", False):
        raw["misspecified"] = True
    return RunConfig.from_dict(raw)


def _resolve_curve(cfg: RunConfig):
    spec, curve = model_preset(cfg.model, Innovation(cfg.innovation))
    if cfg.curves is None:
        return spec, curve
    if not isinstance(cfg.curves, dict):
        raise ConfigError("config key 'curves' must be an object")
    if "preset" in cfg.curves:
        name = str(cfg.curves["preset"]).replace("model-", "")
        return model_preset(name, Innovation(cfg.innovation))
    if "table" in cfg.curves:
        table = cfg.curves["table"]
        try:
            us = np.asarray(table["u"], dtype=float)
            values = np.asarray(table["values"], dtype=float)
        except (KeyError, TypeError) as exc:
            raise ConfigError("curve table needs 'u' and 'values' arrays") from exc
        custom = ParamCurve.from_table(us, values)
        if custom.dim != spec.p:
            raise ConfigError(f"curve table has dimension {custom.dim}, model needs {spec.p}")
        return spec, custom
    raise ConfigError("config key 'curves' must contain 'preset' or 'table'")


def _obtain_series(cfg: RunConfig):
    spec, curve = _resolve_curve(cfg)
    if cfg.input is not None:
        path = Path(cfg.input)
        if not path.exists():
            raise ConfigError(f"input series file not found: {path}")
        values = series_from_csv(path)
        return spec, None, values
    series = simulate(spec, curve, cfg.n, cfg.seed)
    return spec, curve, series


def _outdir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(cfg: RunConfig) -> int:
    spec, curve = _resolve_curve(cfg)
    series = simulate(spec, curve, cfg.n, cfg.seed)
    out = _outdir(cfg)
    series_to_csv(series, out / "series.csv")
    print(f"wrote {out / 'series.csv'} (n={cfg.n}, seed={cfg.seed})")
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    if cfg.bandwidth is None:
        raise ConfigError("fit needs a bandwidth (config key 'bandwidth' or --bandwidth)")
    if not 0.0 < cfg.bandwidth < 1.0:
        raise ConfigError(f"bandwidth must lie in (0, 1); got {cfg.bandwidth}")
    spec, _, series = _obtain_series(cfg)
    fit_spec = spec
    if cfg.misspecified:
        from .processes import Family, ModelSpec
        fit_spec = ModelSpec(Family.TVAR, 1, ((-0.99, 0.99), (0.05, 5.0)),
                             Innovation(cfg.innovation))
    obj = objective_for(fit_spec)
    weight = make_weight(0.05, 0.95)
    fit = fit_curve(obj, series, epanechnikov(), cfg.bandwidth, weight)
    out = _outdir(cfg)
    localfit_to_csv(fit, out / "fit.csv")
    print(f"wrote {out / 'fit.csv'} ({len(fit)} points at h={cfg.bandwidth})")
    return EXIT_OK


def cmd_cv(cfg: RunConfig, want_plugin: bool = False) -> int:
    spec, curve, series = _obtain_series(cfg)
    kernel = epanechnikov()
    weight = make_weight(0.05, 0.95)
    grid = BandwidthGrid.log_spaced(*cfg.grid[:2], int(cfg.grid[2]))
    fit_spec = spec
    truth = curve
    if cfg.misspecified:
        from .processes import Family, ModelSpec
        from .selection import misspecified_target
        fit_spec = ModelSpec(Family.TVAR, 1, ((-0.99, 0.99), (0.05, 5.0)),
                             Innovation(cfg.innovation))
        truth = misspecified_target(spec.family, curve) if curve is not None else None
    obj = objective_for(fit_spec)
    h0 = v0 = b0 = None
    if want_plugin:
        if curve is None or cfg.misspecified:
            raise DegenerateBiasError("plug-in bandwidth needs the true generating curve")
        comp = plugin_components(spec, curve, kernel, weight, cfg.n, seed=cfg.seed)
        h0, v0, b0 = comp.h0, comp.v0, comp.b0
    v_field = None
    if truth is not None:
        n = series.n if isinstance(series, SimulatedSeries) else len(series)
        support = weight.support_indices(n) / n
        v_field = info_field(fit_spec, truth, support, seed=cfg.seed)
    report = select_bandwidth(obj, series, kernel, weight, grid,
                              truth=truth, v_field=v_field, h_0=h0, v0=v0, b0=b0)
    out = _outdir(cfg)
    report_to_csv(report, out / "selection.csv")
    report_to_json(report, out / "summary.json")
    print(f"wrote {out / 'selection.csv'} and summary.json (h_hat={report.h_hat!r})")
    return EXIT_OK


def cmd_study(cfg: RunConfig) -> int:
    config = ExperimentConfig(model=cfg.model, n=cfg.n, reps=cfg.reps, grid=cfg.grid,
                              base_seed=cfg.seed, innovation=cfg.innovation,
                              misspecified=cfg.misspecified)
    study = run_study(config, workers=cfg.workers)
    out = _outdir(cfg)
    write_study_outputs(study, out)
    print(f"wrote study outputs to {out} "
          f"({study.aggregates['n_success']}/{cfg.reps} replications succeeded)")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lscv",
        description="Cross-validated bandwidth selection for locally stationary time series models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, description in (
        ("simulate", "simulate a series and write it as CSV"),
        ("fit", "fit the parameter curve at a fixed bandwidth"),
        ("cv", "run cross-validation bandwidth selection"),
        ("study", "run the Monte Carlo study"),
    ):
        p = sub.add_parser(name, help=description)
        p.add_argument("--config", type=str, default=None, help="JSON config document")
        p.add_argument("--seed", type=int, default=None, help="base seed (64-bit)")
        p.add_argument("--workers", type=int, default=None, help="parallel workers (study)")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--model", choices=("a", "b", "c", "d"), default=None)
        p.add_argument("--n", type=int, default=None, help="series length")
        p.add_argument("--reps", type=int, default=None, help="number of replications")
        p.add_argument("--grid", type=str, default=None, help="bandwidth grid MIN:MAX:POINTS")
        p.add_argument("--misspecified", action="store_true",
                       help="fit a tvAR(1) objective to model (b)/(c) data")
        p.add_argument("--innovation", choices=("gaussian", "uniform", "exponential", "pareto"),
                       default=None)
        if name == "fit":
            p.add_argument("--bandwidth", type=float, default=None, help="bandwidth h in (0, 1)")
        if name == "cv":
            p.add_argument("--plugin", action="store_true",
                           help="also compute the plug-in bandwidth h0")
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "fit":
            return cmd_fit(cfg)
        if args.command == "cv":
            return cmd_cv(cfg, want_plugin=getattr(args, "plugin", False))
        if args.command == "study":
            return cmd_study(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateBiasError, DegenerateWindowError, DomainError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
