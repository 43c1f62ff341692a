"""
Benchmark workflow tests. The end-to-end runs use config/pipeline_smoke.cfg and
config/pipeline.cfg and are marked slow.
"""

import hashlib
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from src.core.config import load_pipeline_config
from src.core.datagen import LabelKind
from src.core.gridmap import NON_TRAVERSABLE, TRAVERSABLE
from src.core.workflow import (ABLATIONS, COLLAPSE_METHOD, _route_after_evaluation, _train_config, create_workflow,
                               predicted_map, run_repro)
from src.learning.encoder import ModelState, init_params
from src.learning.trainer import train
from src.main import run_command
from src.planning.scenarios import SCENARIOS

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


@pytest.fixture
def smoke_config(monkeypatch):
    monkeypatch.delenv('TRAVBENCH_SEED', raising=False)
    monkeypatch.delenv('TRAVBENCH_OUTPUT_DIR', raising=False)
    return load_pipeline_config(CONFIG_DIR / "pipeline_smoke.cfg")


@pytest.fixture(scope="module")
def benchmark_run(tmp_path_factory):
    """Full benchmark without the navigation stage, shared by the slow checks below."""
    with pytest.MonkeyPatch.context() as mp:
        mp.delenv('TRAVBENCH_SEED', raising=False)
        mp.delenv('TRAVBENCH_OUTPUT_DIR', raising=False)
        cfg = load_pipeline_config(CONFIG_DIR / "pipeline.cfg")
    cfg.navigation.enabled = False
    started = time.monotonic()
    state = run_repro(cfg, str(tmp_path_factory.mktemp("benchmark")))
    return cfg, state, time.monotonic() - started


def _digests(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_workflow_compiles():
    assert create_workflow() is not None


def test_every_scenario_has_an_ablation():
    assert set(ABLATIONS) == set(SCENARIOS)


def test_navigation_is_routed_by_config(smoke_config):
    assert _route_after_evaluation({'config': smoke_config}) == "skip_navigation"
    smoke_config.navigation.enabled = True
    assert _route_after_evaluation({'config': smoke_config}) == "navigate"


def test_predicted_map_covers_the_world_grid(flat_world, tiny_config):
    params = {name: np.zeros_like(p) for name, p in init_params(tiny_config, 0).items()}
    model = ModelState(tiny_config, params, method='nnpu')
    rng = np.random.default_rng(0)
    cloud = np.column_stack([rng.uniform(0.5, 15.5, size=(400, 2)), np.zeros(400)])

    grid = predicted_map(model, cloud, flat_world, threshold=0.5)
    assert (grid.width, grid.height) == (flat_world.width, flat_world.height)
    assert grid.resolution == flat_world.resolution
    assert grid.known.any() and not grid.known.all()
    assert np.all(grid.trav_class[grid.known] == TRAVERSABLE)

    strict = predicted_map(model, cloud, flat_world, threshold=0.6)
    assert np.array_equal(strict.known, grid.known)
    assert np.all(strict.trav_class[strict.known] == NON_TRAVERSABLE)


@pytest.mark.slow
def test_smoke_run(tmp_path, smoke_config):
    state = run_repro(smoke_config, str(tmp_path))
    for name in ("world.hf", "dataset_train.txt", "dataset_eval.txt", "report.csv", "report.txt",
                 "models/svdd.ckpt", "models/ours_log.csv", "maps/ours.gm", "maps/ours_class.ppm"):
        assert (tmp_path / name).exists(), name
    assert all(Path(p).exists() for p in state['artifacts'])
    report = pd.read_csv(tmp_path / "report.csv")
    assert report['method'].tolist() == ['svdd', 'ours']
    assert not (tmp_path / "navigation").exists()


@pytest.mark.slow
def test_repeated_runs_are_byte_identical(tmp_path, smoke_config):
    smoke_config.navigation = replace(smoke_config.navigation, enabled=True, scenarios=('obstacle_band',),
                                      n_samples=16, horizon=5, max_steps=3, survey_spacing=4.0)
    first, second = tmp_path / "first", tmp_path / "second"
    run_repro(smoke_config, str(first))
    run_repro(smoke_config, str(second))
    digests = _digests(first)
    assert "navigation/obstacle_band_learned.gm" in digests
    assert digests == _digests(second)

    summary = pd.read_csv(first / "navigation" / "summary.csv")
    assert summary['run'].tolist() == ['full', 'ablation', 'learned']
    assert summary['map'].tolist() == ['oracle', 'oracle', 'learned']
    assert (summary['steps'] <= 3).all()


@pytest.mark.slow
def test_benchmark_dataset_size_and_ranking(benchmark_run):
    cfg, state, elapsed = benchmark_run
    assert elapsed < 600.0
    assert len(cfg.datagen.vehicles) == 3
    kinds = [s.label_kind for s in state['split'].train]
    assert kinds.count(LabelKind.POSITIVE) >= 5000
    assert kinds.count(LabelKind.UNLABELED) >= 20000

    report = state['report']
    assert report.row('ours').auroc > report.row('nnpu').auroc
    assert report.row('ours').auroc >= 0.90
    assert report.row('soft_svdd').auroc >= report.row('svdd').auroc


@pytest.mark.slow
def test_bias_variant_collapses(benchmark_run):
    _, state, _ = benchmark_run
    row = state['report'].row(COLLAPSE_METHOD)
    assert row.embedding_variance < 1e-6
    assert row.collapsed
    assert row.tpr_mean == pytest.approx(0.5, abs=0.02)
    assert row.auroc == pytest.approx(0.5, abs=0.02)


@pytest.mark.slow
def test_non_negative_correction_keeps_every_batch_risk_non_negative(benchmark_run):
    cfg, state, _ = benchmark_run
    for tag in ('nnpu', 'ours'):
        assert all(r >= 0.0 for r in state['negative_risks'][tag]['corrected']), tag

    train_cfg, regression = _train_config(cfg, 'nnpu', non_negative_correction=False)
    uncorrected = train(state['split'], 'nnpu', regression, train_cfg)
    assert min(uncorrected.negative_risks) < 0.0


@pytest.mark.slow
def test_repro_subcommand(tmp_path, monkeypatch):
    monkeypatch.delenv('TRAVBENCH_SEED', raising=False)
    monkeypatch.delenv('TRAVBENCH_OUTPUT_DIR', raising=False)
    code = run_command(['repro', '--config', str(CONFIG_DIR / "pipeline_smoke.cfg"), '--out-dir', str(tmp_path)])
    assert code == 0
    assert (tmp_path / "report.txt").read_text().startswith("dataset=")
