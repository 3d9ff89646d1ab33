"""Runs every (cell, seed) pair of a plan and summarizes the cells."""
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import gymnasium
import numpy as np
import pandas as pd
import torch
from tqdm import tqdm

from xqc.agents.xqc.training import train
from xqc.environments import make
from xqc.utils.metrics.aggregate import aggregate_iqm, auc
from xqc.utils.post_processing.render import plot_kappa_return
from xqc.utils.post_processing.run_io import FLOAT_FORMAT, write_csv

SUMMARY_FILE = "matrix_summary.csv"
CONDITIONING_FILE = "matrix_conditioning.csv"
SCATTER_FILE = "matrix_kappa_return.svg"
PLAN_FILE = "plan.cfg"

SUMMARY_COLUMNS = [
    "cell",
    "label",
    "status",
    "error",
    "runs",
    "iqm_kappa",
    "kappa_ci_low",
    "kappa_ci_high",
    "iqm_lambda_max",
    "iqm_kurtosis",
    "iqm_return",
    "return_ci_low",
    "return_ci_high",
    "iqm_normalized_return",
]
LONG_CONDITIONING_COLUMNS = [
    "label",
    "cell",
    "seed",
    "step",
    "kappa",
    "lambda_max",
    "lambda_min_abs",
    "kurtosis",
    "floor",
]


@dataclass(frozen=True)
class RunJob:
    """Everything a worker process needs to train one run."""

    label: str
    task: str
    cell: object
    trainer: object
    seed: int
    total_steps: int
    probe_schedule: tuple
    run_dir: object = None


@dataclass
class RunSummary:
    """Picklable outcome of one run.

    Attributes:
        label (str): Cell label.
        cell (str): Cell string such as `bn,wn,ce`.
        seed (int): Seed of the run.
        status (str): `ok` or `failed`.
        error (str): Failure message, empty on success.
        conditioning (list[dict]): Conditioning rows per probed step.
        evals (list[dict]): Evaluation rows.
        diagnostics (list[dict]): Plasticity rows.
        returns (list): `(step, episode_return)` pairs.
    """

    label: str
    cell: str
    seed: int
    status: str = "ok"
    error: str = ""
    conditioning: list = field(default_factory=list)
    evals: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    returns: list = field(default_factory=list)

    @property
    def ok(self):
        return self.status == "ok"

    def mean_conditioning(self, key):
        """Mean of a conditioning column over the finite probed steps."""
        values = [row.get(key, math.nan) for row in self.conditioning]
        values = [v for v in values if np.isfinite(v)]
        return float(np.mean(values)) if values else math.nan

    def final_eval(self, key="eval_return"):
        if not self.evals:
            return math.nan
        return float(self.evals[-1][key])

    def normalized_auc(self):
        """AUC of the normalized evaluation curve over training time."""
        rows = [
            row for row in self.evals if np.isfinite(row["normalized_return"])
        ]
        if not rows:
            return math.nan
        return auc(
            [row["normalized_return"] for row in rows],
            [row["step"] for row in rows],
        )


def resolve_workers(requested=None):
    """Worker count capped by the `XQC_THREADS` environment variable."""
    cap = os.environ.get("XQC_THREADS")
    workers = requested or os.cpu_count() or 1
    if cap:
        workers = min(workers, int(cap))
    return max(1, workers)


def execute_job(job):
    """Trains one run; failures are reported, not raised."""
    env = make(job.task)
    try:
        artifacts = train(
            env,
            config=job.trainer,
            architecture=job.cell,
            total_steps=job.total_steps,
            seed=job.seed,
            probe_schedule=job.probe_schedule,
            out_dir=job.run_dir,
        )
    except Exception as error:
        gymnasium.logger.warn(
            f"Run {job.label} seed {job.seed} failed: {error}"
        )
        return RunSummary(
            job.label,
            job.cell.cell,
            job.seed,
            status="failed",
            error=f"{type(error).__name__}: {error}",
        )
    finally:
        env.close()
    return RunSummary(
        job.label,
        job.cell.cell,
        job.seed,
        conditioning=artifacts.conditioning,
        evals=artifacts.evals,
        diagnostics=artifacts.diagnostics,
        returns=artifacts.returns,
    )


def _init_worker():
    torch.set_num_threads(1)


def execute_jobs(jobs, workers=1, progress=False, desc="runs"):
    """Runs jobs in plan order, in-process or on a process pool.

    Args:
        jobs (list[RunJob]): Jobs to run.
        workers (int, optional): Worker processes. Defaults to 1.
        progress (bool, optional): Show a tqdm bar. Defaults to False.
        desc (str, optional): Progress bar label.

    Returns:
        list[RunSummary]: One summary per job, in job order.
    """
    workers = min(resolve_workers(workers), max(len(jobs), 1))
    bar = tqdm(total=len(jobs), desc=desc, disable=not progress)
    if workers == 1:
        results = []
        for job in jobs:
            results.append(execute_job(job))
            bar.update()
    else:
        with ProcessPoolExecutor(
            max_workers=workers, initializer=_init_worker
        ) as pool:
            futures = [pool.submit(execute_job, job) for job in jobs]
            for future in futures:
                future.result()
                bar.update()
            results = [future.result() for future in futures]
    bar.close()
    return results


def summarize(values, bootstrap=2000, seed=0):
    """IQM and interval of the finite values, degrading for few runs.

    Three or more values use `aggregate_iqm`. Two values give their mean
    and range, one value gives itself and none gives NaN.
    """
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return math.nan, math.nan, math.nan
    if values.size == 1:
        value = float(values[0])
        return value, value, value
    if values.size == 2:
        return float(values.mean()), float(values.min()), float(values.max())
    return aggregate_iqm(values, bootstrap=bootstrap, seed=seed)


def run_status(results):
    failed = [r for r in results if not r.ok]
    if not failed:
        return "ok", ""
    status = "failed" if len(failed) == len(results) else "partial"
    return status, "; ".join(f"seed {r.seed}: {r.error}" for r in failed)


def cell_summary(label, cell, results):
    """Summary row of one cell over its seeds."""
    done = [r for r in results if r.ok]
    status, error = run_status(results)
    kappa = summarize([r.mean_conditioning("kappa") for r in done])
    returns = summarize([r.final_eval() for r in done])
    return {
        "cell": cell,
        "label": label,
        "status": status,
        "error": error,
        "runs": len(done),
        "iqm_kappa": kappa[0],
        "kappa_ci_low": kappa[1],
        "kappa_ci_high": kappa[2],
        "iqm_lambda_max": summarize(
            [r.mean_conditioning("lambda_max") for r in done]
        )[0],
        "iqm_kurtosis": summarize(
            [r.mean_conditioning("kurtosis") for r in done]
        )[0],
        "iqm_return": returns[0],
        "return_ci_low": returns[1],
        "return_ci_high": returns[2],
        "iqm_normalized_return": summarize(
            [r.final_eval("normalized_return") for r in done]
        )[0],
    }


@dataclass
class MatrixReport:
    """Outcome of `run_matrix`.

    Attributes:
        summary (pd.DataFrame): One row per cell.
        results (list[RunSummary]): One summary per (cell, seed).
        out_dir (Path or None): Report tree root.
    """

    summary: pd.DataFrame
    results: list
    out_dir: object = None

    @property
    def failures(self):
        return [r for r in self.results if not r.ok]

    @property
    def ok(self):
        return not self.failures


def plan_jobs(plan):
    return [
        RunJob(
            label=label,
            task=plan.task,
            cell=cell,
            trainer=plan.trainer,
            seed=seed,
            total_steps=plan.total_steps,
            probe_schedule=plan.probe_schedule,
            run_dir=plan.run_dir(label, seed),
        )
        for label, cell, seed in plan.runs()
    ]


def run_matrix(plan, workers=1, progress=False):
    """Executes every (cell, seed) run of a plan and summarizes each cell.

    Failed runs are recorded in their cell's `status` and `error` columns;
    the remaining runs still execute. With an output directory the report
    tree holds one directory per run (`<label>/seed_<seed>`), the plan,
    `matrix_summary.csv`, the long-form `matrix_conditioning.csv` and a
    scatter plot of condition number against return.

    Args:
        plan (ExperimentPlan): Validated plan.
        workers (int, optional): Worker processes, capped by
            `XQC_THREADS`. Defaults to 1.
        progress (bool, optional): Show a tqdm bar. Defaults to False.

    Returns:
        MatrixReport: Summary table and per-run results.
    """
    results = execute_jobs(
        plan_jobs(plan), workers, progress, desc=f"matrix {plan.task}"
    )
    rows = []
    for label, cell in zip(plan.labels, plan.cells):
        cell_results = [r for r in results if r.label == label]
        rows.append(cell_summary(label, cell.cell, cell_results))
    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)

    if plan.out_dir is not None:
        plan.out_dir.mkdir(parents=True, exist_ok=True)
        (plan.out_dir / PLAN_FILE).write_text(plan.to_config())
        summary.to_csv(
            plan.out_dir / SUMMARY_FILE, index=False, float_format=FLOAT_FORMAT
        )
        long_rows = [
            {"label": r.label, "cell": r.cell, "seed": r.seed, **row}
            for r in results
            for row in r.conditioning
        ]
        write_csv(
            plan.out_dir / CONDITIONING_FILE,
            long_rows,
            LONG_CONDITIONING_COLUMNS,
        )
        plot_kappa_return(summary, plan.out_dir / SCATTER_FILE)
    for row in rows:
        gymnasium.logger.info(
            f"{row['label']}: {row['status']}, kappa {row['iqm_kappa']:.4g}, "
            f"return {row['iqm_return']:.4g}"
        )
    return MatrixReport(summary=summary, results=results, out_dir=plan.out_dir)
