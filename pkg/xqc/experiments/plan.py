"""Experiment plans: which cells, seeds and probe steps a sweep runs."""
from dataclasses import dataclass, field, replace
from pathlib import Path

from xqc.agents.xqc.config import TrainerConfig
from xqc.environments import TASKS
from xqc.utils.exceptions import ConfigurationError
from xqc.utils.netlib.config import (
    ArchitectureConfig,
    ablation_cells,
    all_cells,
)
from xqc.utils.post_processing.run_io import (
    config_overrides,
    dataclass_to_config,
    format_config,
    parse_config,
)

PRESETS = ("full", "ablations")
CELL_KEYS = ("norm", "weight_projection", "critic_loss")
PLAN_KEYS = (
    "task",
    "preset",
    "cells",
    "labels",
    "seeds",
    "total_steps",
    "probe_schedule",
    "num_probes",
    "out_dir",
)


def even_schedule(total_steps, num_probes):
    """`num_probes` evenly spaced steps from 0 to `total_steps` inclusive."""
    assert num_probes >= 1, "num_probes must be >= 1."
    if num_probes == 1 or total_steps == 0:
        return (total_steps,)
    steps = {
        round(i * total_steps / (num_probes - 1)) for i in range(num_probes)
    }
    return tuple(sorted(steps))


def preset_cells(name, **overrides):
    """Labels and cells of a named preset.

    Args:
        name (str): `full` (the 12-cell matrix) or `ablations` (XQC and its
            three single-component ablations).
        **overrides: Shared ArchitectureConfig fields.

    Returns:
        tuple(tuple, tuple): Labels and cells.
    """
    if name == "full":
        cells = all_cells(**overrides)
        return tuple(cell.cell for cell in cells), tuple(cells)
    if name == "ablations":
        cells = ablation_cells(**overrides)
        return tuple(cells), tuple(cells.values())
    raise ConfigurationError(
        f"Unknown preset {name!r}. Available: {', '.join(PRESETS)}."
    )


@dataclass(frozen=True)
class ExperimentPlan:
    """A set of (cell, seed) training runs on one task.

    Attributes:
        task (str): Task id.
        cells (tuple[ArchitectureConfig]): Architecture cells.
        labels (tuple[str]): One label per cell, used for directories and
            summary rows.
        seeds (tuple[int]): Distinct seeds run for every cell.
        total_steps (int): Environment steps per run.
        probe_schedule (tuple[int]): Steps at which spectra are probed.
        out_dir (Path or None): Root of the report tree.
        trainer (TrainerConfig): Shared trainer settings.
    """

    task: str = "pendulum"
    cells: tuple = field(default_factory=lambda: (ArchitectureConfig(),))
    labels: tuple = None
    seeds: tuple = (0,)
    total_steps: int = 30_000
    probe_schedule: tuple = ()
    out_dir: Path = None
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigurationError(f"Unknown task {self.task!r}.")
        if not self.cells:
            raise ConfigurationError("A plan needs at least one cell.")
        labels = self.labels
        if labels is None:
            labels = tuple(cell.cell for cell in self.cells)
        if len(labels) != len(self.cells):
            raise ConfigurationError("Need exactly one label per cell.")
        if len(set(labels)) != len(labels):
            raise ConfigurationError("Cell labels must be distinct.")
        if not self.seeds:
            raise ConfigurationError("A plan needs at least one seed.")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("Seeds must be distinct.")
        if self.total_steps < 0:
            raise ConfigurationError("total_steps must be >= 0.")
        if any(not 0 <= s <= self.total_steps for s in self.probe_schedule):
            raise ConfigurationError(
                "Probe steps must lie in [0, total_steps]."
            )
        object.__setattr__(self, "labels", tuple(labels))
        object.__setattr__(self, "cells", tuple(self.cells))
        object.__setattr__(self, "seeds", tuple(self.seeds))
        object.__setattr__(
            self, "probe_schedule", tuple(sorted(set(self.probe_schedule)))
        )
        if self.out_dir is not None:
            object.__setattr__(self, "out_dir", Path(self.out_dir))

    def runs(self):
        """Yields `(label, cell, seed)` in plan order."""
        for label, cell in zip(self.labels, self.cells):
            for seed in self.seeds:
                yield label, cell, seed

    def run_dir(self, label, seed):
        if self.out_dir is None:
            return None
        return self.out_dir / label / f"seed_{seed}"

    def replace(self, **changes):
        return replace(self, **changes)

    def to_config(self):
        """Flat `key=value` rendering that `plan_from_config` reads back."""
        values = {
            "task": self.task,
            "cells": ";".join(cell.cell for cell in self.cells),
            "labels": ";".join(self.labels),
            "seeds": self.seeds,
            "total_steps": self.total_steps,
            "probe_schedule": self.probe_schedule,
        }
        if self.out_dir is not None:
            values["out_dir"] = self.out_dir
        default_arch, default_trainer = ArchitectureConfig(), TrainerConfig()
        for key, value in dataclass_to_config(self.cells[0]).items():
            if key not in CELL_KEYS and value != getattr(default_arch, key):
                values[f"arch.{key}"] = value
        for key, value in dataclass_to_config(self.trainer).items():
            if value != getattr(default_trainer, key):
                values[f"trainer.{key}"] = value
        return format_config(values)


def _int_list(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigurationError(f"Expected integers, got {text!r}.")


def _int(values, key, default):
    if key not in values:
        return default
    try:
        return int(values[key])
    except ValueError:
        raise ConfigurationError(f"{key} must be an integer.")


def plan_from_config(values, out_dir=None):
    """Builds a plan from parsed `key=value` settings.

    Recognized keys are `task`, `preset` or `cells` (`;` separated cell
    strings such as `bn,wn,ce;ln,wn,ce`), optional `labels`, `seeds`,
    `total_steps`, `probe_schedule` or `num_probes`, `out_dir`, plus
    `arch.<field>` and `trainer.<field>` overrides.

    Args:
        values (dict): Raw settings from `parse_config`.
        out_dir (str or Path, optional): Overrides the `out_dir` setting.

    Returns:
        ExperimentPlan: Validated plan.
    """
    for key in values:
        if key not in PLAN_KEYS and not key.startswith(("arch.", "trainer.")):
            raise ConfigurationError(f"Unknown plan setting {key!r}.")
    arch = config_overrides(ArchitectureConfig, values, "arch.")
    if any(key in arch for key in CELL_KEYS):
        raise ConfigurationError(
            "Set norm, weight projection and loss through cells, not arch.*."
        )
    trainer = TrainerConfig(
        **config_overrides(TrainerConfig, values, "trainer.")
    )

    if "preset" in values and "cells" in values:
        raise ConfigurationError("Give either preset or cells, not both.")
    if "cells" in values:
        cells = tuple(
            ArchitectureConfig.from_cell(cell, **arch)
            for cell in values["cells"].split(";")
            if cell.strip()
        )
        labels = None
    else:
        preset = values.get("preset", "ablations")
        labels, cells = preset_cells(preset, **arch)
    if "labels" in values:
        labels = tuple(
            label.strip() for label in values["labels"].split(";")
        )

    total_steps = _int(values, "total_steps", 30_000)
    if "probe_schedule" in values and "num_probes" in values:
        raise ConfigurationError(
            "Give either probe_schedule or num_probes, not both."
        )
    if "probe_schedule" in values:
        schedule = _int_list(values["probe_schedule"])
    elif "num_probes" in values:
        schedule = even_schedule(total_steps, _int(values, "num_probes", 1))
    else:
        schedule = ()

    return ExperimentPlan(
        task=values.get("task", "pendulum"),
        cells=cells,
        labels=labels,
        seeds=_int_list(values.get("seeds", "0")),
        total_steps=total_steps,
        probe_schedule=schedule,
        out_dir=out_dir or values.get("out_dir"),
        trainer=trainer,
    )


def load_plan(path, out_dir=None):
    """Reads a plan file, see `plan_from_config` for its keys."""
    return plan_from_config(parse_config(Path(path).read_text()), out_dir)


__all__ = [
    "ExperimentPlan",
    "even_schedule",
    "format_config",
    "load_plan",
    "parse_config",
    "plan_from_config",
    "preset_cells",
]
