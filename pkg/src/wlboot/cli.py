"""
Command-line interface.

Subcommands: ``simulate``, ``contaminate``, ``fit``, ``forecast`` and
``experiment``. Data and output paths go to stdout; logs, including the fully
resolved configuration of every run, go to stderr. Every subcommand accepts
``--config FILE`` with ``key = value`` lines named like the long flags;
explicit flags win over file values.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure. Errors
are also reported as a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bootstrap import bootstrap_forecast, interval_from_draws, normal_quantile_interval
from .config import (
    ESTIMATOR_ALIASES,
    FIT_DEFAULTS,
    SCENARIO_DEFAULTS,
    ConfigError,
    fit_config_from,
    format_config,
    list_presets,
    model_from_config,
    parse_vector,
    read_config,
    resolve_scenario_file,
    scenario_from_config,
)
from .contamination import OutlierPlan, contaminate_ao, contaminate_io, draw_positions
from .estimation import EstimationError, WeightedFit, fit
from .evaluation import run_scenario
from .process import InnovationSource, SimulationError, _check_finite, generate_path, select_order_aic
from .series import SeriesMatrix, TransformSpec, apply_transform, load_csv, save_csv

log = logging.getLogger("wlboot")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

_INPUT_DEFAULTS = {"header": "true", "time-column": "false", "transform": "none"}


class UsageError(Exception):
    """Bad command-line usage; reported with exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _emit_error("usage_error", message)
        sys.exit(EXIT_INPUT)


def _emit_error(kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")


# ---------------------------------------------------------------------------
# Config resolution


def _flag_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _resolve(args, keys, defaults: dict[str, str]) -> dict[str, str]:
    """Defaults < config file < explicit flags, restricted to ``keys``."""
    file_cfg = read_config(args.config) if getattr(args, "config", None) else {}
    unknown = sorted(set(file_cfg) - set(keys))
    if unknown:
        raise ConfigError(f"unknown keys for '{args.command}': {', '.join(unknown)}")
    out = {k: defaults[k] for k in keys if k in defaults}
    out.update(file_cfg)
    for k in keys:
        v = getattr(args, k.replace("-", "_"), None)
        if v is not None:
            out[k] = _flag_value(v)
    log.info("resolved config for '%s':\n%s", args.command, format_config(out).rstrip())
    return out


def _bool(cfg, key) -> bool:
    v = cfg[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {cfg[key]!r}")


def _int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {cfg[key]!r}") from None


def _float(cfg, key) -> float:
    try:
        return float(cfg[key])
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {cfg[key]!r}") from None


def _seed(cfg) -> int:
    """The configured seed, or fresh entropy that is logged for reruns."""
    if cfg.get("seed", "").strip():
        return _int(cfg, "seed")
    seed = int(np.random.SeedSequence().entropy % (2**63))
    cfg["seed"] = str(seed)
    log.info("no seed given; using seed = %d", seed)
    return seed


def _load_input(path: str, cfg) -> SeriesMatrix:
    series = load_csv(path, has_header=_bool(cfg, "header"), time_column=_bool(cfg, "time-column"))
    return apply_transform(series, TransformSpec(cfg["transform"]))


def _one_based(text: str, key: str) -> list[int]:
    vals = parse_vector(text)
    if np.any(vals != np.round(vals)) or np.any(vals < 1):
        raise ConfigError(f"{key}: expected positive integers, got {text!r}")
    return [int(v) for v in vals]


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    # any scenario file or preset works; Monte Carlo keys are ignored
    args.config = str(resolve_scenario_file(args.config))
    lag_keys = tuple(k for k in read_config(args.config) if k.startswith("phi") and k != "phi0")
    defaults = {k: v for k, v in SCENARIO_DEFAULTS.items() if k != "seed"}
    cfg = _resolve(args, (*SCENARIO_DEFAULTS, *lag_keys), defaults)
    model = model_from_config(cfg)
    seed = _seed(cfg)
    df = cfg.get("df", "").strip()
    src = InnovationSource(cfg["error-dist"], float(df) if df else None, seed, 0)
    t, burn = _int(cfg, "sample-t"), _int(cfg, "burn-in")
    if t < 1 or burn < 0:
        raise ConfigError("sample-t must be >= 1 and burn-in >= 0")
    eps = src.draw(src.rng(0), burn + t, model.sigma_eps)
    path = generate_path(model, eps)
    _check_finite(path, burn)
    series = SeriesMatrix(path[burn:])
    kind = cfg["contamination"].strip().lower()
    positions: tuple[int, ...] = ()
    if kind != "none":
        if kind not in ("ao", "io"):
            raise ConfigError(f"contamination must be none, ao or io, got {kind!r}")
        if cfg["target"] != "training":
            raise ConfigError("simulate only contaminates the training span")
        if not cfg.get("rate", "").strip():
            raise ConfigError("contamination needs a rate")
        positions = draw_positions(t, src.rng(1), rate=_float(cfg, "rate"))
        mask = cfg.get("mask", "").strip()
        magnitude = parse_vector(cfg["magnitude"])
        plan = OutlierPlan(
            kind.upper(),
            float(magnitude[0]) if magnitude.size == 1 else tuple(magnitude.tolist()),
            positions,
            tuple(i - 1 for i in _one_based(mask, "mask")) if mask else None,
        )
        series = contaminate_io(model, eps, plan, burn_in=burn) if kind == "io" else contaminate_ao(series, plan)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(series, out)
    print(json.dumps({"out": str(out), "outlier_rows": [s + 1 for s in positions]}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# contaminate

_CONT_KEYS = ("kind", "rate", "rows", "magnitude", "mask", "seed", "order", *_INPUT_DEFAULTS)


def cmd_contaminate(args) -> int:
    model_cfg = read_config(args.model_config) if args.model_config else None
    cfg = _resolve(args, _CONT_KEYS, {"magnitude": "5", "order": "1", **_INPUT_DEFAULTS})
    kind = cfg.get("kind", "").strip().lower()
    if kind not in ("ao", "io"):
        raise ConfigError("kind must be ao or io")
    if bool(cfg.get("rate", "").strip()) == bool(cfg.get("rows", "").strip()):
        raise ConfigError("give exactly one of --rate or --rows")
    series = _load_input(args.input, cfg)
    y, n = series.values, series.dim_n
    mask = cfg.get("mask", "").strip()
    mask_idx = tuple(i - 1 for i in _one_based(mask, "mask")) if mask else None
    magnitude = parse_vector(cfg["magnitude"])
    mag = float(magnitude[0]) if magnitude.size == 1 else tuple(magnitude.tolist())

    if kind == "ao":
        first, span = 0, series.length_t
    else:
        if model_cfg is not None:
            model = model_from_config(model_cfg)
            if model.dim_n != n:
                raise ConfigError(f"model has N={model.dim_n}, data has N={n}")
        else:
            model = fit(series, _int(cfg, "order"), fit_config_from({}, "ols_cml")).model
        first, span = model.order_p, series.length_t - model.order_p

    if cfg.get("rows", "").strip():
        rows = _one_based(cfg["rows"], "rows")
        positions = tuple(sorted(r - 1 - first for r in rows))
        if any(not 0 <= s < span for s in positions):
            raise ConfigError(f"rows must lie in {first + 1}..{series.length_t}")
    else:
        rng = np.random.default_rng(np.random.SeedSequence(_seed(cfg)))
        positions = draw_positions(span, rng, rate=_float(cfg, "rate"))

    plan = OutlierPlan(kind.upper(), mag, positions, mask_idx)
    if kind == "ao":
        out_series = contaminate_ao(series, plan)
    else:
        p, t = model.order_p, series.length_t
        eps = y[p:] - model.phi0 - sum(y[p - i : t - i] @ model.phis[i - 1].T for i in range(1, p + 1))
        tail = contaminate_io(model, eps, plan, initial=y[:p]).values
        out_series = SeriesMatrix(np.vstack([y[:p], tail]), series.labels)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_csv(out_series, out)
    print(json.dumps({"out": str(out), "outlier_rows": [s + 1 + first for s in positions]}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit

_FIT_KEYS = ("order", "p-max", "method", *FIT_DEFAULTS, *_INPUT_DEFAULTS)


def _method(name: str) -> str:
    try:
        return ESTIMATOR_ALIASES[name.strip().lower()]
    except KeyError:
        raise ConfigError(f"unknown method {name!r}; use ols or weighted") from None


def _fit_with_order(series, cfg, method) -> tuple[WeightedFit, dict | None]:
    fc = fit_config_from(cfg, method)
    order = cfg["order"].strip().lower()
    selection = None
    if order == "auto":
        p_max = _int(cfg, "p-max")
        p, table = select_order_aic(series, p_max, lambda s, q: fit(s, q, fc))
        selection = {"criterion": "aic", "p_max": p_max, "table": {str(k): (v if np.isfinite(v) else None) for k, v in table.items()}}
    else:
        p = _int(cfg, "order")
    return fit(series, p, fc), selection


def cmd_fit(args) -> int:
    cfg = _resolve(args, _FIT_KEYS, {"order": "auto", "p-max": "5", "method": "weighted", **FIT_DEFAULTS, **_INPUT_DEFAULTS})
    method = _method(cfg["method"])
    series = _load_input(args.input, cfg)
    fitted, selection = _fit_with_order(series, cfg, method)
    p = fitted.model.order_p
    rows = [
        {
            "row": p + i + 1,
            "residual": fitted.residuals[i].tolist(),
            "weight": float(fitted.weights[i]),
            "pearson": float(fitted.pearson[i]) if np.isfinite(fitted.pearson[i]) else None,
        }
        for i in range(fitted.residuals.shape[0])
    ]
    report = {
        "input": {"path": args.input, "rows": series.length_t, "labels": list(series.labels), "transform": cfg["transform"]},
        "settings": cfg,
        "method": method,
        "order": p,
        "order_selection": selection,
        "model": fitted.model.to_dict(),
        "converged": fitted.converged,
        "iterations": fitted.iterations,
        "regularized": fitted.regularized,
        "rows": rows,
    }
    out = Path(args.out)
    _write_text(out, _dump_json(report))
    weights_path = out.with_suffix(".weights.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "weight", "pearson", *(f"residual_{lab}" for lab in series.labels)])
    for r in rows:
        writer.writerow([r["row"], repr(r["weight"]), repr(r["pearson"]) if r["pearson"] is not None else "inf",
                         *(repr(v) for v in r["residual"])])
    _write_text(weights_path, buf.getvalue())
    print(out)
    print(weights_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# forecast

_FC_KEYS = ("order", "p-max", "method", "horizon", "gamma", "b-reps", "seed", *FIT_DEFAULTS, *_INPUT_DEFAULTS)


def cmd_forecast(args) -> int:
    defaults = {"order": "auto", "p-max": "5", "method": "both", "horizon": "10", "gamma": "0.05", "b-reps": "499",
                **FIT_DEFAULTS, **_INPUT_DEFAULTS}
    if args.model:
        # a fit report supplies order, method and estimator settings
        with open(args.model) as fh:
            rep = json.load(fh)
        try:
            saved = rep["settings"]
            defaults.update({k: saved[k] for k in (*FIT_DEFAULTS, *_INPUT_DEFAULTS) if k in saved})
            defaults.update({"order": str(int(rep["order"])), "method": rep["method"]})
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"{args.model}: not a fit report") from None
    cfg = _resolve(args, _FC_KEYS, defaults)
    methods = ["ols_cml", "weighted_likelihood"] if cfg["method"].strip().lower() == "both" else [_method(cfg["method"])]
    horizon, gamma, b_reps = _int(cfg, "horizon"), _float(cfg, "gamma"), _int(cfg, "b-reps")
    if horizon < 1 or b_reps < 1:
        raise ConfigError("horizon and b-reps must be >= 1")
    if not 0 < gamma < 0.5:
        raise ConfigError("gamma must lie in (0, 0.5)")
    seed = _seed(cfg)
    series = _load_input(args.input, cfg)
    labels = list(series.labels)

    results = {}
    csv_buf = io.StringIO()
    writer = csv.writer(csv_buf, lineterminator="\n")
    writer.writerow(["method", "h", "component", "point", "lower", "upper", "normal_lower", "normal_upper"])
    for method in methods:
        fitted, selection = _fit_with_order(series, cfg, method)
        fc_cfg = fit_config_from(cfg, method)
        # same bootstrap stream for every method (common random numbers)
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        boot = bootstrap_forecast(series, fitted, b_reps, horizon, rng, gamma, fc_cfg)
        iv = interval_from_draws(boot)
        normal = normal_quantile_interval(boot.point, fitted.model, horizon, gamma)
        results[method] = {
            "order": fitted.model.order_p,
            "order_selection": selection,
            "model": fitted.model.to_dict(),
            "converged": fitted.converged,
            "excluded_replicates": boot.n_excluded,
            "interval_kind": iv.kind,
            "point": boot.point.tolist(),
            "lower": iv.lower.tolist(),
            "upper": iv.upper.tolist(),
            "normal_lower": normal.lower.tolist(),
            "normal_upper": normal.upper.tolist(),
        }
        for h in range(horizon):
            for i, lab in enumerate(labels):
                writer.writerow([method, h + 1, lab] + [repr(float(a[h, i])) for a in
                                (boot.point, iv.lower, iv.upper, normal.lower, normal.upper)])
    report = {
        "input": {"path": args.input, "rows": series.length_t, "labels": labels, "transform": cfg["transform"]},
        "settings": cfg,
        "horizon": horizon,
        "gamma": gamma,
        "b_reps": b_reps,
        "seed": seed,
        "methods": results,
    }
    out = Path(args.out)
    csv_path = out.with_suffix(".csv")
    _write_text(out, _dump_json(report))
    _write_text(csv_path, csv_buf.getvalue())
    print(out)
    print(csv_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# experiment

_EXP_FLAGS = ("mc-reps", "b-reps", "r-futures", "sample-t", "horizon", "gamma", "seed", "threads", "order",
              "estimators", "smoothing-c", "rescale-mode", "future-anchor")


def cmd_experiment(args) -> int:
    if args.list_presets:
        for name in list_presets():
            print(name)
        return EXIT_OK
    if not args.config or not args.out:
        raise UsageError("experiment needs --config and --out (or --list-presets)")
    cfg = read_config(resolve_scenario_file(args.config))
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg[k.strip().lower().replace("_", "-")] = v.strip()
    for k in _EXP_FLAGS:
        v = getattr(args, k.replace("-", "_"), None)
        if v is not None:
            cfg[k] = _flag_value(v)
    scenario, resolved = scenario_from_config(cfg)
    log.info("resolved config for 'experiment':\n%s", format_config(resolved).rstrip())
    report = run_scenario(scenario)
    out = Path(args.out)
    paths = [out / "report.json", out / "report.csv", out / "resolved_config.cfg"]
    _write_text(paths[0], report.to_json() + "\n")
    _write_text(paths[1], report.to_csv())
    _write_text(paths[2], format_config(resolved))
    for p in paths:
        print(p)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-header", dest="header", action="store_const", const=False, default=None,
                   help="the CSV has no header line")
    p.add_argument("--time-column", dest="time_column", action="store_const", const=True, default=None,
                   help="first column is an increasing timestamp; it is dropped")
    p.add_argument("--transform", choices=("none", "log_return_pct", "log_return"), default=None,
                   help="level-to-return transform applied after loading")


def _fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--order", default=None, help="lag order p, or 'auto' for AIC selection")
    p.add_argument("--p-max", type=int, default=None, help="largest order tried by --order auto")
    p.add_argument("--smoothing-c", type=float, default=None, help="kernel bandwidth factor c (g^2 = c sigma^2)")
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iter", type=int, default=None)
    p.add_argument("--rescale-mode", choices=("center_only", "standardize"), default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wlboot", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output on stderr")
    parser.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="simulate a series from a model config")
    p.add_argument("--config", required=True, help="model or scenario file, or a bundled preset name")
    p.add_argument("--sample-t", type=int, default=None, help="number of observations kept")
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--error-dist", choices=("gaussian", "student_t", "chi_square"), default=None)
    p.add_argument("--df", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("contaminate", help="insert additive or innovative outliers into a CSV")
    p.add_argument("input", help="input CSV")
    p.add_argument("--config", default=None, help="settings file")
    p.add_argument("--kind", choices=("ao", "io"), default=None)
    p.add_argument("--rate", type=float, default=None, help="fraction of rows contaminated")
    p.add_argument("--rows", default=None, help="1-based rows to contaminate, e.g. '10,25'")
    p.add_argument("--magnitude", default=None, help="outlier size, scalar or one value per component")
    p.add_argument("--mask", default=None, help="1-based components to contaminate (default all)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--model-config", default=None, help="IO: true model config used to recover innovations")
    p.add_argument("--order", type=int, default=None, help="IO without --model-config: OLS order used to recover innovations")
    _input_flags(p)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_contaminate)

    p = sub.add_parser("fit", help="fit an AR/VAR model by OLS or weighted likelihood")
    p.add_argument("input", help="input CSV")
    p.add_argument("--config", default=None, help="settings file")
    p.add_argument("--method", default=None, help="ols or weighted")
    _fit_flags(p)
    _input_flags(p)
    p.add_argument("--out", required=True, help="JSON report; weights go to <stem>.weights.csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="bootstrap prediction intervals")
    p.add_argument("input", help="input CSV")
    p.add_argument("--config", default=None, help="settings file")
    p.add_argument("--model", default=None, help="fit report whose order and method are reused")
    p.add_argument("--method", default=None, help="ols, weighted or both")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None, help="significance level")
    p.add_argument("--b-reps", type=int, default=None, help="bootstrap replicates")
    p.add_argument("--seed", type=int, default=None)
    _fit_flags(p)
    _input_flags(p)
    p.add_argument("--out", required=True, help="JSON output; a CSV with the same stem is written too")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("experiment", help="run a Monte Carlo scenario")
    p.add_argument("--config", default=None, help="scenario file or bundled preset name")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--list-presets", action="store_true", help="print bundled preset names")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any scenario key")
    for k in _EXP_FLAGS:
        kind = {"gamma": float, "smoothing-c": float}.get(k, int)
        if k in ("order", "estimators", "rescale-mode", "future-anchor"):
            kind = str
        p.add_argument(f"--{k}", type=kind, default=None)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING if args.quiet else (logging.DEBUG if args.verbose else logging.INFO)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return args.func(args)
    except (EstimationError, SimulationError, np.linalg.LinAlgError, FloatingPointError) as exc:
        _emit_error("numerical_failure", str(exc))
        return EXIT_NUMERIC
    except UsageError as exc:
        _emit_error("usage_error", str(exc))
        return EXIT_INPUT
    except (OSError, ValueError, KeyError, IndexError, json.JSONDecodeError) as exc:
        _emit_error("input_error", str(exc) if not isinstance(exc, KeyError) else f"missing key {exc}")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
