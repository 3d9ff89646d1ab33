"""Full-length training runs on the toy tasks. Run with `--runslow`."""
import numpy as np
import pandas as pd
import pytest
import torch

from xqc.agents.xqc.config import TrainerConfig
from xqc.agents.xqc.xqc import XQCAgent
from xqc.experiments.matrix import resolve_workers, run_matrix
from xqc.experiments.plan import ExperimentPlan, even_schedule, preset_cells
from xqc.utils.diffcore import dense_hessian
from xqc.utils.metrics import (
    conditioning_summary,
    critic_hessian_oracle,
    iqm,
    lanczos_spectrum,
    relative_spread,
)
from xqc.utils.netlib.config import ArchitectureConfig

SEEDS = (0, 1, 2, 3, 4)
TOTAL_STEPS = 30_000

pytestmark = pytest.mark.slow


def ablation_plan(task, labels, tmp_path, probes=()):
    all_labels, cells = preset_cells("ablations")
    chosen = dict(zip(all_labels, cells))
    return ExperimentPlan(
        task=task,
        cells=tuple(chosen[label] for label in labels),
        labels=tuple(labels),
        seeds=SEEDS,
        total_steps=TOTAL_STEPS,
        probe_schedule=probes,
        out_dir=tmp_path,
    )


@pytest.mark.parametrize(
    ("task, threshold"), [("pendulum", 0.85), ("double_integrator", 0.9)]
)
def test_xqc_learns(tmp_path, task, threshold):
    plan = ablation_plan(task, ["xqc"], tmp_path)
    report = run_matrix(plan, workers=resolve_workers())
    assert report.ok
    assert report.summary.iloc[0]["iqm_normalized_return"] >= threshold


def test_plasticity_ordering(tmp_path):
    plan = ablation_plan(
        "pendulum", ["xqc", "xqc-mse", "xqc-nown"], tmp_path
    )
    report = run_matrix(plan, workers=resolve_workers())
    assert report.ok
    diag = {
        (r.label, r.seed): pd.DataFrame(r.diagnostics).set_index("step")
        for r in report.results
    }

    norms = [diag["xqc-nown", seed]["param_norm"] for seed in SEEDS]
    grown = sum(norm.loc[TOTAL_STEPS] > norm.iloc[0] for norm in norms)
    assert grown >= 4

    def elr_spread(label):
        return iqm(
            [relative_spread(diag[label, seed]["elr"]) for seed in SEEDS]
        )

    assert elr_spread("xqc") < elr_spread("xqc-mse")


def test_conditioning_ordering(tmp_path):
    schedule = even_schedule(TOTAL_STEPS, 11)[1:]
    plan = ablation_plan(
        "pendulum", ["xqc", "xqc-ln", "xqc-mse"], tmp_path, schedule
    )
    report = run_matrix(plan, workers=resolve_workers())
    assert report.ok

    def kappa(label, step):
        return iqm(
            [
                row["kappa"]
                for r in report.results
                if r.label == label
                for row in r.conditioning
                if row["step"] == step
            ]
        )

    wins = sum(
        kappa("xqc", step) < min(kappa("xqc-ln", step), kappa("xqc-mse", step))
        for step in schedule
    )
    assert len(schedule) == 10
    assert wins >= 8

    kurtosis = report.summary.set_index("label")["iqm_kurtosis"]
    assert kurtosis["xqc"] < kurtosis["xqc-ln"]


def random_batch(rng, size):
    return {
        "obs": rng.normal(size=(size, 3)),
        "action": rng.uniform(-1, 1, size=(size, 1)),
        "reward": rng.normal(size=size),
        "next_obs": rng.normal(size=(size, 3)),
        "done": np.zeros(size),
    }


@pytest.mark.parametrize(
    ("hidden_dim, atoms, full_krylov"), [(4, 5, True), (16, 11, False)]
)
def test_lanczos_matches_the_dense_spectrum(hidden_dim, atoms, full_krylov):
    architecture = ArchitectureConfig(
        hidden_dim=hidden_dim,
        num_blocks=1,
        atoms=atoms,
        actor_hidden_dim=16,
        actor_num_blocks=1,
    )
    agent = XQCAgent(
        3,
        1,
        architecture=architecture,
        config=TrainerConfig(batch_size=32),
        gamma=0.9,
        seed=0,
    )
    rng = np.random.default_rng(0)
    probe = random_batch(rng, 64)
    for checkpoint in range(5):
        for _ in range(100):
            agent.critic_update(random_batch(rng, 32))
        oracle = critic_hessian_oracle(agent, agent.snapshot(), probe)
        assert oracle.dim <= 2000
        steps = min(64, oracle.dim)
        assert (steps == oracle.dim) == full_krylov
        summary = conditioning_summary(
            lanczos_spectrum(oracle, m=steps, k=8, seed=checkpoint)
        )
        exact = np.abs(torch.linalg.eigvalsh(dense_hessian(oracle)).numpy())
        assert summary.lambda_max == pytest.approx(exact.max(), rel=1e-2)
        if full_krylov:
            floored = exact[exact >= summary.floor]
            kappa = exact.max() / floored.min()
            assert summary.kappa == pytest.approx(kappa, rel=0.1)


def test_pipeline_is_deterministic(tmp_path, small_architecture):
    plan = ExperimentPlan(
        task="pendulum",
        cells=(small_architecture,),
        labels=("xqc",),
        seeds=(0,),
        total_steps=2000,
        probe_schedule=(1000, 2000),
    )
    outputs = []
    for name in ("first", "second"):
        run_matrix(plan.replace(out_dir=tmp_path / name))
        run_dir = tmp_path / name / "xqc" / "seed_0"
        outputs.append(
            {
                path.name: path.read_bytes()
                for path in sorted(run_dir.glob("*.csv"))
            }
        )
    assert outputs[0] == outputs[1]
    assert np.isfinite(
        pd.read_csv(tmp_path / "first" / "matrix_summary.csv")["iqm_kappa"]
    ).all()
