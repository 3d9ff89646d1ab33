"""Sweeps of one scaling axis (UTD, width or depth) around a base cell."""
from dataclasses import dataclass

import gymnasium
import pandas as pd

from xqc.experiments.matrix import RunJob, execute_jobs, run_status, summarize
from xqc.utils.exceptions import ConfigurationError
from xqc.utils.post_processing.render import plot_scaling
from xqc.utils.post_processing.run_io import FLOAT_FORMAT

AXES = ("utd", "width", "depth")
SCALING_COLUMNS = [
    "axis",
    "value",
    "status",
    "error",
    "runs",
    "iqm_auc",
    "auc_ci_low",
    "auc_ci_high",
    "iqm_normalized_return",
]


def parse_values(text):
    """Parses `1,2,4` into a tuple of ints."""
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigurationError(f"Expected integers, got {text!r}.")


def scaled(plan, axis, value):
    """Base cell and trainer of `plan` with one axis set to `value`."""
    cell, trainer = plan.cells[0], plan.trainer
    if axis == "utd":
        trainer = trainer.replace(utd=value)
    elif axis == "width":
        cell = cell.replace(hidden_dim=value)
    elif axis == "depth":
        cell = cell.replace(num_blocks=value)
    else:
        raise ConfigurationError(
            f"Unknown axis {axis!r}. Available: {', '.join(AXES)}."
        )
    return cell, trainer


@dataclass
class ScalingReport:
    """Outcome of `run_scaling`.

    Attributes:
        axis (str): Swept axis.
        summary (pd.DataFrame): One row per value.
        results (list[RunSummary]): One summary per (value, seed).
    """

    axis: str
    summary: pd.DataFrame
    results: list

    @property
    def ok(self):
        return all(r.ok for r in self.results)


def run_scaling(plan, axis, values, workers=1, progress=False):
    """Trains the plan's first cell at every value of a scaling axis.

    Each run is scored by the area under its normalized evaluation curve;
    the values are summarized by IQM over seeds.

    Args:
        plan (ExperimentPlan): Base plan; only its first cell is used.
        axis (str): `utd`, `width` (critic hidden dim) or `depth` (critic
            blocks).
        values (sequence[int]): Strictly increasing axis values.
        workers (int, optional): Worker processes. Defaults to 1.
        progress (bool, optional): Show a tqdm bar. Defaults to False.

    Returns:
        ScalingReport: Per-value AUC summaries.
    """
    values = tuple(values)
    if not values:
        raise ConfigurationError("Scaling needs at least one value.")
    if any(a >= b for a, b in zip(values, values[1:])):
        raise ConfigurationError("Scaling values must be sorted ascending.")

    jobs = []
    for value in values:
        cell, trainer = scaled(plan, axis, value)
        label = f"{axis}_{value}"
        jobs.extend(
            RunJob(
                label=label,
                task=plan.task,
                cell=cell,
                trainer=trainer,
                seed=seed,
                total_steps=plan.total_steps,
                probe_schedule=plan.probe_schedule,
                run_dir=plan.run_dir(label, seed),
            )
            for seed in plan.seeds
        )
    results = execute_jobs(jobs, workers, progress, desc=f"scaling {axis}")

    rows = []
    for value in values:
        value_results = [r for r in results if r.label == f"{axis}_{value}"]
        done = [r for r in value_results if r.ok]
        status, error = run_status(value_results)
        area = summarize([r.normalized_auc() for r in done])
        rows.append(
            {
                "axis": axis,
                "value": value,
                "status": status,
                "error": error,
                "runs": len(done),
                "iqm_auc": area[0],
                "auc_ci_low": area[1],
                "auc_ci_high": area[2],
                "iqm_normalized_return": summarize(
                    [r.final_eval("normalized_return") for r in done]
                )[0],
            }
        )
        gymnasium.logger.info(f"{axis}={value}: AUC {area[0]:.4g}")
    summary = pd.DataFrame(rows, columns=SCALING_COLUMNS)

    if plan.out_dir is not None:
        plan.out_dir.mkdir(parents=True, exist_ok=True)
        summary.to_csv(
            plan.out_dir / f"scaling_{axis}.csv",
            index=False,
            float_format=FLOAT_FORMAT,
        )
        plot_scaling(summary, plan.out_dir / f"scaling_{axis}.svg")
    return ScalingReport(axis=axis, summary=summary, results=results)
