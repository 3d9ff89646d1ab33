"""Run directory artifacts: key=value configs and fixed-header CSVs."""
import ast
from dataclasses import fields
from pathlib import Path

import gymnasium
import pandas as pd

from xqc.utils.exceptions import ConfigurationError

FLOAT_FORMAT = "%.17g"

RETURNS_COLUMNS = ["step", "episode_return"]
DIAG_COLUMNS = [
    "step",
    "param_norm",
    "grad_norm",
    "elr",
    "temperature",
    "loss",
    "effective_update",
    "projected_norm",
    "learning_rate",
]
GROUP_NORM_COLUMNS = ["step", "group", "norm"]
CONDITIONING_COLUMNS = [
    "step",
    "kappa",
    "lambda_max",
    "lambda_min_abs",
    "kurtosis",
    "floor",
]
SPECTRUM_COLUMNS = ["ritz_value", "ritz_weight"]
EVAL_COLUMNS = ["step", "eval_return", "normalized_return"]


def format_config(values):
    """Renders a flat dict as `key=value` lines in insertion order."""
    lines = []
    for key, value in values.items():
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def parse_config(text):
    """Parses `key=value` lines; `#` starts a comment.

    Args:
        text (str): Config text.

    Returns:
        dict: Raw string values keyed by name.
    """
    values = {}
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"Line {number}: expected key=value.")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"Line {number}: empty key.")
        if key in values:
            raise ConfigurationError(f"Line {number}: duplicate key {key!r}.")
        values[key] = value
    return values


def coerce(value, default):
    """Converts a raw config string to the type of `default`."""
    if isinstance(default, bool):
        lowered = value.lower()
        if lowered not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigurationError(f"Expected a boolean, got {value!r}.")
        return lowered in ("true", "1", "yes")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    if isinstance(default, tuple):
        return tuple(float(v) for v in value.split(","))
    if isinstance(default, str):
        return value
    if value.lower() == "none":
        return None
    return ast.literal_eval(value)


def config_overrides(cls, values, prefix=""):
    """Typed field values of `cls` found under `prefix + field` keys.

    Raises:
        ConfigurationError: If a key carries the prefix but names no field.
    """
    defaults = cls()
    names = {f.name for f in fields(cls)}
    overrides = {}
    for key, value in values.items():
        if not key.startswith(prefix):
            continue
        name = key[len(prefix) :]
        if name not in names:
            raise ConfigurationError(f"Unknown setting {key!r}.")
        try:
            overrides[name] = coerce(value, getattr(defaults, name))
        except (ValueError, SyntaxError) as error:
            raise ConfigurationError(f"Bad value for {key!r}: {error}")
    return overrides


def dataclass_from_config(cls, values, prefix=""):
    """Builds a config dataclass from raw values named `prefix + field`."""
    return cls(**config_overrides(cls, values, prefix))


def dataclass_to_config(instance, prefix=""):
    return {
        prefix + f.name: getattr(instance, f.name) for f in fields(instance)
    }


def write_csv(path, rows, columns):
    """Writes rows (dicts or sequences) with a fixed header and 17 digits."""
    frame = pd.DataFrame(list(rows), columns=columns)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return frame


def read_csv(path):
    """Reads a run CSV, or returns None with a warning if it is missing."""
    path = Path(path)
    if not path.exists():
        gymnasium.logger.warn(f"Missing {path}, skipping.")
        return None
    return pd.read_csv(path)


def write_config(path, values):
    Path(path).write_text(format_config(values))


def read_config(path):
    return parse_config(Path(path).read_text())


def write_run(out_dir, artifacts, config_values):
    """Writes every CSV of a run plus `config.txt` into `out_dir`.

    Args:
        out_dir (str or Path): Run directory.
        artifacts (RunArtifacts): Training results.
        config_values (dict): Flat configuration.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_config(out_dir / "config.txt", config_values)
    write_csv(out_dir / "returns.csv", artifacts.returns, RETURNS_COLUMNS)
    write_csv(out_dir / "diag.csv", artifacts.diagnostics, DIAG_COLUMNS)
    write_csv(
        out_dir / "group_norms.csv",
        artifacts.group_norms,
        GROUP_NORM_COLUMNS,
    )
    write_csv(
        out_dir / "conditioning.csv",
        artifacts.conditioning,
        CONDITIONING_COLUMNS,
    )
    for step, estimate in sorted(artifacts.spectra.items()):
        write_csv(
            out_dir / f"spectrum_{step}.csv",
            zip(estimate.ritz_values, estimate.ritz_weights),
            SPECTRUM_COLUMNS,
        )
    write_csv(out_dir / "evals.csv", artifacts.evals, EVAL_COLUMNS)
