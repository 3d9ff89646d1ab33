"""SVG figures of run directories and sweep summaries.

Every figure is rendered with the Agg backend, a fixed SVG hash salt and no
date metadata, so identical CSV inputs give byte-identical SVG files.
"""
import re
from pathlib import Path

import gymnasium
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from xqc.utils.post_processing.run_io import read_csv  # noqa: E402

plt.rcParams["svg.hashsalt"] = "xqc"
plt.rcParams["svg.fonttype"] = "path"

PLASTICITY_PANELS = (
    ("param_norm", "Parameter norm"),
    ("grad_norm", "Gradient norm"),
    ("elr", "Effective learning rate"),
)
_SPECTRUM_FILE = re.compile(r"spectrum_(\d+)\.csv$")


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return Path(path)


def _has_rows(frame, name):
    if frame is None:
        return False
    if frame.empty:
        gymnasium.logger.warn(f"{name} has no rows, skipping.")
        return False
    return True


def plot_returns(returns, evals, path):
    """Episode returns and, if given, evaluation returns over steps."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(
        returns["step"],
        returns["episode_return"],
        alpha=0.5,
        label="Training episodes",
    )
    if evals is not None and not evals.empty:
        ax.plot(
            evals["step"], evals["eval_return"], marker="o", label="Evaluation"
        )
    ax.set_xlabel("Environment step")
    ax.set_ylabel("Return")
    ax.legend()
    return _save(fig, path)


def plot_plasticity(diag, path):
    """Parameter norm, gradient norm and ELR in three stacked panels."""
    fig, axes = plt.subplots(
        len(PLASTICITY_PANELS), 1, figsize=(6, 8), sharex=True
    )
    for ax, (column, title) in zip(axes, PLASTICITY_PANELS):
        ax.plot(diag["step"], diag[column])
        ax.set_ylabel(title)
    axes[-1].set_xlabel("Environment step")
    return _save(fig, path)


def plot_spectra(spectra, path):
    """Ritz values per checkpoint, marker area proportional to weight.

    Args:
        spectra (dict): Spectrum frames keyed by step.
        path (str or Path): Output SVG.
    """
    fig, ax = plt.subplots(figsize=(7, 4))
    steps = sorted(spectra)
    for position, step in enumerate(steps):
        frame = spectra[step]
        ax.scatter(
            np.full(len(frame), position),
            frame["ritz_value"],
            s=5 + 200 * frame["ritz_weight"],
            alpha=0.6,
            color="tab:blue",
        )
    ax.set_yscale("symlog", linthresh=1e-6)
    ax.set_xticks(range(len(steps)))
    ax.set_xticklabels([str(step) for step in steps], rotation=45)
    ax.set_xlabel("Checkpoint step")
    ax.set_ylabel("Ritz value")
    return _save(fig, path)


def plot_kappa_return(summary, path):
    """Scatter of IQM condition number against IQM return per cell."""
    fig, ax = plt.subplots(figsize=(6, 5))
    kappa = summary["iqm_kappa"].to_numpy(dtype=np.float64)
    returns = summary["iqm_return"].to_numpy(dtype=np.float64)
    valid = np.isfinite(kappa) & np.isfinite(returns) & (kappa > 0)
    labels = summary["label"].to_numpy()[valid]
    for label, x, y in zip(labels, kappa[valid], returns[valid]):
        ax.scatter(x, y)
        ax.annotate(label, (x, y), fontsize=8)
    if valid.any():
        ax.set_xscale("log")
    ax.set_xlabel("IQM condition number")
    ax.set_ylabel("IQM return")
    return _save(fig, path)


def plot_scaling(summary, path):
    """IQM AUC with its interval against the swept axis value."""
    fig, ax = plt.subplots(figsize=(6, 4))
    values = summary["value"].to_numpy(dtype=np.float64)
    area = summary["iqm_auc"].to_numpy(dtype=np.float64)
    low = summary["auc_ci_low"].to_numpy(dtype=np.float64)
    high = summary["auc_ci_high"].to_numpy(dtype=np.float64)
    ax.errorbar(
        values,
        area,
        yerr=np.nan_to_num(np.stack([area - low, high - area])),
        marker="o",
        capsize=3,
    )
    ax.set_xscale("log", base=2)
    ax.set_xlabel(summary["axis"].iloc[0] if len(summary) else "value")
    ax.set_ylabel("IQM normalized AUC")
    return _save(fig, path)


def render_run(run_dir):
    """Figures of one run directory; missing or empty CSVs are skipped."""
    run_dir = Path(run_dir)
    written = []
    returns = read_csv(run_dir / "returns.csv")
    if _has_rows(returns, "returns.csv"):
        evals = read_csv(run_dir / "evals.csv")
        written.append(plot_returns(returns, evals, run_dir / "returns.svg"))
    diag = read_csv(run_dir / "diag.csv")
    if _has_rows(diag, "diag.csv"):
        written.append(plot_plasticity(diag, run_dir / "plasticity.svg"))
    spectra = {}
    for path in sorted(run_dir.glob("spectrum_*.csv")):
        match = _SPECTRUM_FILE.search(path.name)
        if match:
            spectra[int(match.group(1))] = read_csv(path)
    if spectra:
        written.append(plot_spectra(spectra, run_dir / "spectra.svg"))
    else:
        gymnasium.logger.warn(f"No spectrum CSVs in {run_dir}, skipping.")
    return written


def render_reports(directory):
    """Renders every figure the CSVs under `directory` support.

    Run directories are recognized by their `config.txt`; a sweep root by
    `matrix_summary.csv` or `scaling_<axis>.csv`.

    Args:
        directory (str or Path): Run directory or report tree root.

    Returns:
        list[Path]: Written SVG files, in a deterministic order.
    """
    directory = Path(directory)
    run_dirs = sorted(path.parent for path in directory.rglob("config.txt"))
    summary_path = directory / "matrix_summary.csv"
    scaling_paths = sorted(directory.glob("scaling_*.csv"))
    if not run_dirs and not summary_path.exists() and not scaling_paths:
        gymnasium.logger.warn(f"No run artifacts found in {directory}.")
        return []

    written = []
    for run_dir in run_dirs:
        written.extend(render_run(run_dir))
    if summary_path.exists():
        summary = read_csv(summary_path)
        written.append(
            plot_kappa_return(summary, directory / "matrix_kappa_return.svg")
        )
    for path in scaling_paths:
        summary = read_csv(path)
        if _has_rows(summary, path.name):
            written.append(plot_scaling(summary, path.with_suffix(".svg")))
    return written
