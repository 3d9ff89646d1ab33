import math

import numpy as np
import pandas as pd
import pytest

from xqc.experiments import matrix
from xqc.experiments.matrix import (
    CONDITIONING_FILE,
    PLAN_FILE,
    SCATTER_FILE,
    SUMMARY_COLUMNS,
    SUMMARY_FILE,
    RunSummary,
    resolve_workers,
    run_matrix,
    run_status,
    summarize,
)
from xqc.experiments.plan import (
    ExperimentPlan,
    even_schedule,
    load_plan,
    parse_config,
    plan_from_config,
    preset_cells,
)
from xqc.experiments.scaling import parse_values, run_scaling, scaled
from xqc.experiments.verify import CHECKS, run_checks
from xqc.utils.exceptions import ConfigurationError


def test_even_schedule():
    assert even_schedule(100, 5) == (0, 25, 50, 75, 100)
    assert even_schedule(100, 1) == (100,)
    assert even_schedule(0, 4) == (0,)
    assert even_schedule(3, 10) == (0, 1, 2, 3)


def test_presets():
    labels, cells = preset_cells("ablations", hidden_dim=32)
    assert labels == ("xqc", "xqc-ln", "xqc-mse", "xqc-nown")
    assert [cell.cell for cell in cells] == [
        "bn,wn,ce",
        "ln,wn,ce",
        "bn,wn,mse",
        "bn,nown,ce",
    ]
    assert all(cell.hidden_dim == 32 for cell in cells)
    labels, cells = preset_cells("full")
    assert len(cells) == 12
    with pytest.raises(ConfigurationError):
        preset_cells("tiny")


def test_plan_from_config():
    plan = plan_from_config(
        parse_config(
            "task=reacher2\n"
            "cells=bn,wn,ce;ln,nown,mse\n"
            "seeds=0,1,2\n"
            "total_steps=100\n"
            "num_probes=3\n"
            "arch.hidden_dim=32\n"
            "trainer.utd=4\n"
        )
    )
    assert plan.task == "reacher2"
    assert plan.labels == ("bn,wn,ce", "ln,nown,mse")
    assert plan.seeds == (0, 1, 2)
    assert plan.probe_schedule == (0, 50, 100)
    assert all(cell.hidden_dim == 32 for cell in plan.cells)
    assert plan.trainer.utd == 4
    assert len(list(plan.runs())) == 6
    assert plan.run_dir("xqc", 0) is None


def test_default_plan_uses_the_ablation_preset():
    plan = plan_from_config({})
    assert plan.labels == ("xqc", "xqc-ln", "xqc-mse", "xqc-nown")
    assert plan.probe_schedule == ()


@pytest.mark.parametrize(
    "text",
    [
        "colour=blue",
        "preset=full\ncells=bn,wn,ce",
        "probe_schedule=0,10\nnum_probes=2\ntotal_steps=10",
        "seeds=0,0",
        "seeds=a,b",
        "arch.norm=ln",
        "arch.widht=3",
        "trainer.utd=0",
        "task=cartpole",
        "total_steps=10\nprobe_schedule=20",
        "cells=bn,wn,ce;bn,wn,ce",
        "cells=bn,wn,ce\nlabels=a;b",
    ],
)
def test_bad_plans_are_rejected(text):
    with pytest.raises(ConfigurationError):
        plan_from_config(parse_config(text))


def test_plan_file_round_trip(tmp_path):
    plan = plan_from_config(
        parse_config(
            "preset=ablations\n"
            "seeds=3,4\n"
            "total_steps=50\n"
            "probe_schedule=50,0\n"
            "arch.hidden_dim=32\n"
            "trainer.batch_size=8\n"
        ),
        out_dir=tmp_path,
    )
    path = tmp_path / "plan.cfg"
    path.write_text(plan.to_config())
    loaded = load_plan(path)
    assert loaded == plan
    assert loaded.probe_schedule == (0, 50)
    assert loaded.run_dir("xqc", 3) == tmp_path / "xqc" / "seed_3"


@pytest.mark.parametrize(
    ("values, expected"),
    [
        ([], (math.nan, math.nan, math.nan)),
        ([2.0], (2.0, 2.0, 2.0)),
        ([1.0, 3.0], (2.0, 1.0, 3.0)),
        ([1.0, math.nan, 3.0], (2.0, 1.0, 3.0)),
    ],
)
def test_summarize_with_few_values(values, expected):
    np.testing.assert_array_equal(summarize(values), expected)


def test_summarize_uses_iqm():
    point, low, high = summarize(np.arange(12.0))
    assert point == pytest.approx(5.5)
    assert low <= point <= high


def test_run_status():
    ok = RunSummary("xqc", "bn,wn,ce", 0)
    failed = RunSummary("xqc", "bn,wn,ce", 1, status="failed", error="boom")
    assert run_status([ok]) == ("ok", "")
    assert run_status([ok, failed]) == ("partial", "seed 1: boom")
    assert run_status([failed]) == ("failed", "seed 1: boom")


def test_run_summary_statistics():
    summary = RunSummary(
        "xqc",
        "bn,wn,ce",
        0,
        conditioning=[{"kappa": 10.0}, {"kappa": 30.0}],
        evals=[
            {"step": 0, "eval_return": -5.0, "normalized_return": 0.0},
            {"step": 10, "eval_return": -1.0, "normalized_return": 1.0},
        ],
    )
    assert summary.mean_conditioning("kappa") == 20.0
    assert math.isnan(summary.mean_conditioning("kurtosis"))
    assert summary.final_eval() == -1.0
    assert summary.normalized_auc() == pytest.approx(0.5)


def test_workers_are_capped(monkeypatch):
    monkeypatch.setenv("XQC_THREADS", "2")
    assert resolve_workers(8) == 2
    monkeypatch.delenv("XQC_THREADS")
    assert resolve_workers(3) == 3


def small_plan(small_architecture, small_trainer, out_dir, **changes):
    settings = dict(
        task="double_integrator",
        cells=(small_architecture,),
        labels=("xqc",),
        seeds=(0, 1),
        total_steps=30,
        probe_schedule=(30,),
        out_dir=out_dir,
        trainer=small_trainer,
    )
    settings.update(changes)
    return ExperimentPlan(**settings)


def test_run_matrix(tmp_path, small_architecture, small_trainer):
    plan = small_plan(small_architecture, small_trainer, tmp_path)
    report = run_matrix(plan)
    assert report.ok
    assert list(report.summary.columns) == SUMMARY_COLUMNS
    row = report.summary.iloc[0]
    assert row["label"] == "xqc"
    assert row["status"] == "ok"
    assert row["runs"] == 2
    assert row["iqm_kappa"] >= 1
    assert row["kappa_ci_low"] <= row["iqm_kappa"] <= row["kappa_ci_high"]
    assert np.isfinite(row["iqm_return"])

    for name in (SUMMARY_FILE, CONDITIONING_FILE, SCATTER_FILE, PLAN_FILE):
        assert (tmp_path / name).exists(), name
    for seed in (0, 1):
        assert (tmp_path / "xqc" / f"seed_{seed}" / "config.txt").exists()
    long = pd.read_csv(tmp_path / CONDITIONING_FILE)
    assert sorted(long["seed"]) == [0, 1]
    assert set(long["step"]) == {30}
    assert load_plan(tmp_path / PLAN_FILE) == plan


def test_failed_run_does_not_stop_the_matrix(
    tmp_path, monkeypatch, small_architecture, small_trainer
):
    real_train = matrix.train

    def flaky_train(env, **kwargs):
        if kwargs["seed"] == 1:
            raise RuntimeError("eigh did not converge")
        return real_train(env, **kwargs)

    monkeypatch.setattr(matrix, "train", flaky_train)
    plan = small_plan(small_architecture, small_trainer, tmp_path)
    report = run_matrix(plan)
    assert not report.ok
    row = report.summary.iloc[0]
    assert row["status"] == "partial"
    assert "RuntimeError" in row["error"]
    assert [r.seed for r in report.failures] == [1]
    assert (tmp_path / "xqc" / "seed_0" / "config.txt").exists()
    assert (tmp_path / SUMMARY_FILE).exists()


def test_scaling_values():
    assert parse_values("1,2,4") == (1, 2, 4)
    with pytest.raises(ConfigurationError):
        parse_values("1,x")


def test_scaled_cells(small_architecture, small_trainer):
    plan = small_plan(small_architecture, small_trainer, None)
    assert scaled(plan, "utd", 4)[1].utd == 4
    assert scaled(plan, "width", 32)[0].hidden_dim == 32
    assert scaled(plan, "depth", 2)[0].num_blocks == 2
    with pytest.raises(ConfigurationError):
        scaled(plan, "batch", 2)


@pytest.mark.parametrize("values", [(), (2, 1), (1, 1)])
def test_scaling_values_must_increase(
    small_architecture, small_trainer, values
):
    plan = small_plan(small_architecture, small_trainer, None)
    with pytest.raises(ConfigurationError):
        run_scaling(plan, "utd", values)


def test_run_scaling(tmp_path, small_architecture, small_trainer):
    plan = small_plan(
        small_architecture,
        small_trainer,
        tmp_path,
        seeds=(0,),
        probe_schedule=(),
    )
    report = run_scaling(plan, "width", (8, 16))
    assert report.ok
    assert list(report.summary["value"]) == [8, 16]
    assert np.isfinite(report.summary["iqm_auc"]).all()
    assert (tmp_path / "scaling_width.csv").exists()
    assert (tmp_path / "scaling_width.svg").exists()
    assert (tmp_path / "width_8" / "seed_0" / "config.txt").exists()


@pytest.mark.parametrize("name", sorted(CHECKS))
def test_certificate_checks_pass(name):
    (result,) = run_checks([name])
    assert result.name == name
    assert result.passed, result.detail


def test_unknown_check():
    with pytest.raises(AssertionError):
        run_checks(["nope"])
