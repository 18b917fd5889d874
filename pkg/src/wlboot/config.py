"""
Flat ``key = value`` configuration files.

Keys mirror the command-line flag names (``b-reps``, ``smoothing-c``, ...);
underscores are accepted and normalised to dashes. ``#`` starts a comment.
Vectors are whitespace- or comma-separated; matrix rows are separated by
``;``, e.g. ``phi1 = 0.9 0; -0.5 -0.7``.
"""

from __future__ import annotations

import os
import re
from importlib import resources
from pathlib import Path

import numpy as np

from .estimation import FitConfig
from .evaluation import ContaminationSpec, ScenarioConfig, ScenarioError
from .process import DEFAULT_BURN_IN, ArModelSpec

__all__ = [
    "ConfigError",
    "read_config",
    "format_config",
    "parse_vector",
    "parse_matrix",
    "model_from_config",
    "scenario_from_config",
    "fit_config_from",
    "resolve_scenario_file",
    "list_presets",
    "ESTIMATOR_ALIASES",
    "SCENARIO_DEFAULTS",
]

_LAG_KEY = re.compile(r"^phi([1-9][0-9]*)$")

# short CLI names for the estimators
ESTIMATOR_ALIASES = {
    "ols": "ols_cml",
    "ols_cml": "ols_cml",
    "weighted": "weighted_likelihood",
    "weighted_likelihood": "weighted_likelihood",
}

FIT_DEFAULTS = {
    "smoothing-c": "0.25",
    "tol": "1e-08",
    "max-iter": "500",
    "rescale-mode": "center_only",
}

SCENARIO_DEFAULTS = {
    "name": "scenario",
    "phi0": "",
    "sigma": "",
    "sample-t": "100",
    "mc-reps": "200",
    "b-reps": "499",
    "r-futures": "1000",
    "horizon": "10",
    "gamma": "0.05",
    "contamination": "none",
    "target": "training",
    "rate": "",
    "count": "",
    "magnitude": "5",
    "mask": "",
    "error-dist": "gaussian",
    "df": "",
    "estimators": "ols,weighted",
    "order": "true",
    "p-max": "5",
    "burn-in": str(DEFAULT_BURN_IN),
    "seed": "20240101",
    "threads": "1",
    "future-anchor": "observed",
    **FIT_DEFAULTS,
}


class ConfigError(ValueError):
    """Malformed configuration file or value."""


def _norm(key: str) -> str:
    return key.strip().lower().replace("_", "-")


def read_config(path: str | os.PathLike) -> dict[str, str]:
    """Parse a config file into a ``{key: raw string}`` dict."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such config file: {path}")
    out: dict[str, str] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = line.split("=", 1)
            key = _norm(key)
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def format_config(cfg: dict[str, str]) -> str:
    """Render a config dict back to the file format (keys sorted)."""
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def parse_vector(text: str) -> np.ndarray:
    parts = [s for s in re.split(r"[,\s]+", text.strip()) if s]
    try:
        return np.array([float(s) for s in parts])
    except ValueError:
        raise ConfigError(f"not a numeric vector: {text!r}") from None


def parse_matrix(text: str) -> np.ndarray:
    rows = [parse_vector(r) for r in text.split(";") if r.strip()]
    if not rows or len({len(r) for r in rows}) != 1:
        raise ConfigError(f"not a rectangular matrix: {text!r}")
    return np.array(rows)


def _as_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from None


def _as_float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from None


def _opt(text: str) -> str | None:
    return text if text.strip() else None


def model_from_config(cfg: dict[str, str]) -> ArModelSpec:
    """
    Build the true model from ``phi0``, ``phi1..phiP`` and ``sigma``.

    ``phi0`` defaults to zeros and ``sigma`` to the identity. A scalar
    ``sigma`` with N > 1 means ``sigma * I``.
    """
    lags = sorted((int(m.group(1)), k) for k in cfg if (m := _LAG_KEY.match(k)))
    if not lags:
        raise ConfigError("model needs at least 'phi1'")
    p = lags[-1][0]
    if [i for i, _ in lags] != list(range(1, p + 1)):
        raise ConfigError(f"lag keys must run phi1..phi{p} without gaps")
    phis = [parse_matrix(cfg[k]) for _, k in lags]
    n = phis[0].shape[0]
    for i, m in enumerate(phis, start=1):
        if m.shape != (n, n):
            raise ConfigError(f"phi{i} must be {n} x {n}, got {m.shape[0]} x {m.shape[1]}")
    phi0 = parse_vector(cfg["phi0"]) if _opt(cfg.get("phi0", "")) else np.zeros(n)
    if phi0.shape != (n,):
        raise ConfigError(f"phi0 must have {n} entries")
    if _opt(cfg.get("sigma", "")):
        sigma = parse_matrix(cfg["sigma"])
        if sigma.shape == (1, 1) and n > 1:
            sigma = sigma[0, 0] * np.eye(n)
    else:
        sigma = np.eye(n)
    try:
        return ArModelSpec(phi0, np.array(phis), sigma)
    except ValueError as exc:
        raise ConfigError(f"invalid model: {exc}") from None


def fit_config_from(cfg: dict[str, str], method: str = "weighted_likelihood") -> FitConfig:
    merged = {**FIT_DEFAULTS, **{k: v for k, v in cfg.items() if k in FIT_DEFAULTS}}
    try:
        return FitConfig(
            method=method,
            kernel_smoothing_c=_as_float("smoothing-c", merged["smoothing-c"]),
            tol=_as_float("tol", merged["tol"]),
            max_iter=_as_int("max-iter", merged["max-iter"]),
            rescale_mode=merged["rescale-mode"],
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _estimators(text: str) -> tuple[str, ...]:
    out = []
    for name in (s.strip() for s in text.split(",") if s.strip()):
        if name not in ESTIMATOR_ALIASES:
            raise ConfigError(f"unknown estimator {name!r}; use ols or weighted")
        out.append(ESTIMATOR_ALIASES[name])
    return tuple(dict.fromkeys(out))


def _mask(text: str, n: int) -> tuple[int, ...] | None:
    if not _opt(text):
        return None
    idx = []
    for s in re.split(r"[,\s]+", text.strip()):
        i = _as_int("mask", s)
        if not 1 <= i <= n:
            raise ConfigError(f"mask component {i} outside 1..{n}")
        idx.append(i - 1)
    return tuple(idx)


def scenario_from_config(cfg: dict[str, str]) -> tuple[ScenarioConfig, dict[str, str]]:
    """
    Build a :class:`ScenarioConfig` from a raw config dict.

    Returns the scenario and the fully resolved dict (defaults filled in).
    Component indices in ``mask`` are 1-based.
    """
    unknown = [k for k in cfg if k not in SCENARIO_DEFAULTS and not _LAG_KEY.match(k)]
    if unknown:
        raise ConfigError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
    resolved = {**SCENARIO_DEFAULTS, **cfg}
    model = model_from_config(resolved)
    n = model.dim_n
    kind = resolved["contamination"].strip().lower()
    cont = None
    if kind not in ("none", "ao", "io"):
        raise ConfigError(f"contamination must be none, ao or io, got {kind!r}")
    if kind != "none":
        rate = _opt(resolved["rate"])
        count = _opt(resolved["count"])
        try:
            cont = ContaminationSpec(
                kind=kind.upper(),
                target=resolved["target"].strip().lower(),
                rate=_as_float("rate", rate) if rate else None,
                count=_as_int("count", count) if count else None,
                magnitude=tuple(parse_vector(resolved["magnitude"]).tolist()),
                component_mask=_mask(resolved["mask"], n),
            )
        except ScenarioError as exc:
            raise ConfigError(str(exc)) from None
    order_text = resolved["order"].strip().lower()
    order: int | str = order_text if order_text in ("true", "auto") else _as_int("order", order_text)
    df = _opt(resolved["df"])
    scenario = ScenarioConfig(
        model=model,
        sample_t=_as_int("sample-t", resolved["sample-t"]),
        mc_reps=_as_int("mc-reps", resolved["mc-reps"]),
        b_reps=_as_int("b-reps", resolved["b-reps"]),
        r_futures=_as_int("r-futures", resolved["r-futures"]),
        horizon=_as_int("horizon", resolved["horizon"]),
        gamma=_as_float("gamma", resolved["gamma"]),
        contamination=cont,
        error_dist=resolved["error-dist"].strip(),
        df=_as_float("df", df) if df else None,
        estimators=_estimators(resolved["estimators"]),
        order=order,
        p_max=_as_int("p-max", resolved["p-max"]),
        burn_in=_as_int("burn-in", resolved["burn-in"]),
        seed=_as_int("seed", resolved["seed"]),
        fit_config=fit_config_from(resolved),
        threads=_as_int("threads", resolved["threads"]),
        future_anchor=resolved["future-anchor"].strip(),
        name=resolved["name"],
    )
    return scenario, resolved


def _preset_dir():
    return resources.files("wlboot") / "scenarios"


def list_presets() -> list[str]:
    return sorted(p.name[:-4] for p in _preset_dir().iterdir() if p.name.endswith(".cfg"))


def resolve_scenario_file(name_or_path: str) -> Path:
    """A config path, or the name of a bundled preset."""
    if os.path.isfile(name_or_path):
        return Path(name_or_path)
    stem = name_or_path[:-4] if name_or_path.endswith(".cfg") else name_or_path
    candidate = _preset_dir() / f"{stem}.cfg"
    if candidate.is_file():
        return Path(str(candidate))
    raise FileNotFoundError(f"no config file or bundled preset named {name_or_path!r}")
