# src/core/workflow.py
"""The ``repro`` benchmark as a langgraph workflow.

generate_world -> collect_drives -> build_datasets -> train_models -> evaluate
-> (navigate_scenarios if enabled) -> render_maps
"""
from dataclasses import replace
from pathlib import Path
from typing import Any, Dict, List, TypedDict

import numpy as np
import pandas as pd
from langgraph.graph import END, StateGraph

from src.core.config import PipelineConfig, training_settings
from src.core.datagen import (DatasetMeta, DatasetSplit, balance_labels, build_pu_dataset,
                              downsample_scan, fuse_scans, knn_patches, label_eval_points, project_contacts,
                              split_dataset, trace_value_range, voxel_downsample, write_dataset)
from src.core.gridmap import GridMap2p5, build_map, write_map
from src.core.lidar import scan_along_trace, survey_scans
from src.core.terrain import HeightField, TerrainRecipe, generate_world, parse_recipe, write_world
from src.core.vehicle_sim import SimTrace, get_vehicle, simulate_traversal, write_trace
from src.evaluation.report import build_report, write_report_csv, write_report_text
from src.learning.encoder import ModelState, write_checkpoint
from src.learning.trainer import EvalThreshold, TrainConfig, classify, predict_batch, train, write_training_log
from src.planning.navigation import lateral_deviation, write_trajectory_csv
from src.planning.scenarios import build_scenario
from src.planning.smppi import MppiConfig
from src.utils.errors import PathViolatesMaskError
from src.utils.logger import logger
from src.utils.render import render_artifact, render_map

MAX_DRIVE_ATTEMPTS = 50
COLLAPSE_METHOD = 'svdd_bias'
# plain SGD with heavy decay on the weight matrices; the bias and the center are free to meet
COLLAPSE_OVERRIDES = {'optimizer': 'sgd', 'learning_rate': 0.01, 'weight_decay': 1.0, 'learnable_center': True,
                      'augment': None}
LEARNED_MAP_METHOD = 'ours'
ABLATIONS = {'obstacle_band': {'alpha1': 0.0}, 'bump_band': {'alpha2': 0.0}, 'curved_road': {'alpha1': 0.0}}


class ReproState(TypedDict, total=False):
    """
    State passed between the benchmark nodes.

    Attributes:
        config: PipelineConfig driving the run
        out_dir: Output directory for every artifact
        world: Generated HeightField
        traces: SimTrace per successful drive
        scans: LiDAR scans per drive (parallel to traces)
        split: Training split and the labeled evaluation set
        models: ModelState per method tag
        negative_risks: Per-batch corrected and raw nnPU negative risks per PU method tag
        report: EvalReport of every trained model
        navigation: Summary rows per scenario run
        artifacts: Paths written so far
    """
    config: PipelineConfig
    out_dir: str
    world: HeightField
    traces: List[SimTrace]
    scans: List[list]
    cloud: np.ndarray
    split: DatasetSplit
    models: Dict[str, Any]
    negative_risks: Dict[str, Dict[str, List[float]]]
    report: Any
    navigation: List[dict]
    artifacts: List[str]


def _out(state: ReproState, *parts: str) -> Path:
    return Path(state['out_dir']).joinpath(*parts)


def generate_world_node(state: ReproState) -> ReproState:
    cfg = state['config']
    if cfg.world.recipe:
        recipe = parse_recipe(cfg.world.recipe)
    else:
        recipe = TerrainRecipe(width=cfg.world.width, height=cfg.world.height, resolution=cfg.world.resolution)
    world = generate_world(cfg.seed + cfg.world.seed, recipe)
    path = _out(state, 'world.hf')
    write_world(path, world)
    logger.info(f"World generated: {world.width}x{world.height} cells, {int(world.obstacle_mask.sum())} obstacle cells")
    return {'world': world, 'artifacts': state.get('artifacts', []) + [str(path)]}


def _random_path(rng: np.random.Generator, world: HeightField) -> np.ndarray:
    x0, y0, x1, y1 = world.extent
    margin = 3.0
    start = rng.uniform([x0 + margin, y0 + margin], [x1 - margin, y1 - margin])
    heading = rng.uniform(-np.pi, np.pi)
    length = rng.uniform(0.4, 0.7) * min(x1 - x0, y1 - y0)
    bend = rng.uniform(-0.5, 0.5)
    mid = start + 0.5 * length * np.array([np.cos(heading), np.sin(heading)])
    end = mid + 0.5 * length * np.array([np.cos(heading + bend), np.sin(heading + bend)])
    return np.vstack([start, mid, end])


def collect_drives_node(state: ReproState) -> ReproState:
    cfg = state['config']
    dg = cfg.datagen
    world = state['world']
    rng = np.random.default_rng([cfg.seed, 2])
    traces, scans = [], []
    for name in dg.vehicles:
        vehicle = get_vehicle(name)
        for drive in range(dg.drives_per_vehicle):
            for _ in range(MAX_DRIVE_ATTEMPTS):
                try:
                    trace = simulate_traversal(world, vehicle, _random_path(rng, world), dg.dt)
                    break
                except PathViolatesMaskError:
                    continue
            else:
                logger.warning(f"{name}: no obstacle-free path found for drive {drive}, skipped")
                continue
            drive_scans = scan_along_trace(world, trace.poses, dg.mount_height, dg.scan_every, dg.channels,
                                           dg.azimuth_steps, dg.max_range)
            drive_scans = [downsample_scan(s, dg.voxel_size) for s in drive_scans]
            write_trace(_out(state, 'traces', f"{name}_{drive}.txt"), trace)
            traces.append(trace)
            scans.append(drive_scans)
    logger.info(f"Collected {len(traces)} drives with {sum(len(s) for s in scans)} scans")
    return {'traces': traces, 'scans': scans}


def build_datasets_node(state: ReproState) -> ReproState:
    cfg = state['config']
    dg = cfg.datagen
    traces, scans = state['traces'], state['scans']
    value_range = trace_value_range(traces, dg.value_mode)
    positives = []
    for trace, drive_scans in zip(traces, scans):
        positives.extend(project_contacts(trace, drive_scans, dg.radius, dg.value_mode, value_range))
    all_scans = [s for drive_scans in scans for s in drive_scans]
    samples = build_pu_dataset(all_scans, positives, dg.k, dg.unlabeled_per_scan, cfg.seed)
    split = split_dataset(samples, dg.split_seed)

    cloud = fuse_scans(all_scans)
    labeled = label_eval_points(state['world'], cloud, dg.k, max_per_class=dg.eval_per_class, seed=cfg.seed)
    eval_set = balance_labels(labeled, cfg.seed)
    split = DatasetSplit(split.train, eval_set, split.split_seed)

    meta = DatasetMeta(dg.k, dg.value_mode, value_range, {'seed': cfg.seed, 'split_seed': dg.split_seed})
    train_path, eval_path = _out(state, 'dataset_train.txt'), _out(state, 'dataset_eval.txt')
    write_dataset(train_path, split.train, meta)
    write_dataset(eval_path, split.eval, DatasetMeta(dg.k, seeds={'seed': cfg.seed}))
    logger.info(f"Datasets: {len(split.train)} training samples, {len(split.eval)} labeled eval samples")
    return {'split': split, 'cloud': cloud,
            'artifacts': state['artifacts'] + [str(train_path), str(eval_path)]}


def _train_config(cfg: PipelineConfig, method: str, **overrides) -> tuple:
    s = training_settings(cfg.training, method)
    return TrainConfig.from_settings(s, cfg.seed, cfg.datagen.k, **overrides), s['regression']


def train_models_node(state: ReproState) -> ReproState:
    cfg = state['config']
    models, artifacts = {}, list(state['artifacts'])
    runs = [(m, m) for m in cfg.training.methods]
    if cfg.training.collapse_variant:
        runs.append((COLLAPSE_METHOD, 'svdd'))
    negative_risks = {}
    for tag, method in runs:
        train_cfg, regression = _train_config(cfg, method)
        if tag == COLLAPSE_METHOD:
            train_cfg = replace(train_cfg, encoder=replace(train_cfg.encoder, final_layer_bias=True),
                                **COLLAPSE_OVERRIDES)
            regression = False
        result = train(state['split'], method, regression, train_cfg)
        ckpt, log_path = _out(state, 'models', f"{tag}.ckpt"), _out(state, 'models', f"{tag}_log.csv")
        write_checkpoint(ckpt, result.state)
        write_training_log(log_path, result.log)
        if result.negative_risks:
            negative_risks[tag] = {'corrected': result.negative_risks, 'raw': result.raw_negative_risks}
            logger.info(f"{tag}: min corrected negative risk {min(result.negative_risks):.6f}, "
                        f"min raw {min(result.raw_negative_risks):.6f}")
        models[tag] = result.state
        artifacts += [str(ckpt), str(log_path)]
    return {'models': models, 'negative_risks': negative_risks, 'artifacts': artifacts}


def evaluate_node(state: ReproState) -> ReproState:
    cfg = state['config']
    report = build_report(state['models'], state['split'].eval, EvalThreshold(cfg.evaluation.threshold),
                          cfg.evaluation.dataset)
    csv_path, txt_path = _out(state, 'report.csv'), _out(state, 'report.txt')
    write_report_csv(csv_path, report)
    write_report_text(txt_path, report)
    logger.info("\n" + report.to_text())
    return {'report': report, 'artifacts': state['artifacts'] + [str(csv_path), str(txt_path)]}


def predicted_map(model: ModelState, cloud: np.ndarray, world: HeightField, threshold: float) -> GridMap2p5:
    """Score a voxel-thinned copy of ``cloud`` with ``model`` and project it onto the world's grid."""
    queries = voxel_downsample(cloud, world.resolution / 2.0)
    pred = predict_batch(model, knn_patches(cloud, queries, model.config.k))
    classes = classify(pred['scores'], EvalThreshold(threshold))
    return build_map(queries, pred['scores'], classes, pred['trav_pred'], world.origin, world.resolution,
                     (world.width, world.height))


def _learned_scenario_map(state: ReproState, world: HeightField) -> GridMap2p5:
    cfg = state['config']
    dg = cfg.datagen
    scans = survey_scans(world, cfg.navigation.survey_spacing, dg.mount_height, dg.channels, dg.azimuth_steps,
                         dg.max_range)
    cloud = fuse_scans([downsample_scan(s, dg.voxel_size) for s in scans])
    return predicted_map(state['models'][LEARNED_MAP_METHOD], cloud, world, cfg.evaluation.threshold)


def navigate_scenarios_node(state: ReproState) -> ReproState:
    """Oracle-map runs with and without the ablated cost term, plus one run on the map the 'ours' model predicts."""
    cfg = state['config']
    nav = cfg.navigation
    rows, artifacts = [], list(state['artifacts'])
    for name in nav.scenarios:
        mppi = MppiConfig(n_samples=nav.n_samples, horizon=nav.horizon, temperature=nav.temperature, seed=cfg.seed)
        scenario = build_scenario(name, seed=cfg.seed, vehicle=nav.vehicle, mppi=mppi)
        scenario.max_steps = nav.max_steps
        map_path = _out(state, 'navigation', f"{name}.gm")
        write_map(map_path, scenario.grid())
        runs = [('full', None, {}), ('ablation', None, ABLATIONS[name])]
        if LEARNED_MAP_METHOD in state['models']:
            learned = _learned_scenario_map(state, scenario.world)
            learned_path = _out(state, 'navigation', f"{name}_learned.gm")
            write_map(learned_path, learned)
            artifacts.append(str(learned_path))
            runs.append(('learned', learned, {}))
        csv_paths = []
        for label, grid, overrides in runs:
            result = scenario.run(grid, **overrides)
            path = _out(state, 'navigation', f"{name}_{label}.csv")
            write_trajectory_csv(path, result, label=label)
            csv_paths.append(path)
            rows.append({'scenario': name, 'run': label, 'map': 'oracle' if grid is None else 'learned',
                         'reached': result.reached, 'steps': len(result.logs),
                         'non_traversable_contacts': result.non_traversable_contacts,
                         'obstacle_contacts': scenario.obstacle_contacts(result),
                         'true_impact': result.true_impact,
                         'lateral_deviation': lateral_deviation(result.states, scenario.start, scenario.goal)})
        svg = _out(state, 'navigation', f"{name}.svg")
        render_artifact(csv_paths, 'trajectory-overlay', svg, background=map_path)
        artifacts += [str(map_path), str(svg)] + [str(p) for p in csv_paths]
    summary = _out(state, 'navigation', 'summary.csv')
    pd.DataFrame(rows).to_csv(summary, index=False, lineterminator='\n')
    artifacts.append(str(summary))
    return {'navigation': rows, 'artifacts': artifacts}


def render_maps_node(state: ReproState) -> ReproState:
    """Project the 'ours' model's predictions over the fused cloud into a map and render it."""
    models = state['models']
    tag = LEARNED_MAP_METHOD if LEARNED_MAP_METHOD in models else next(iter(models))
    grid = predicted_map(models[tag], state['cloud'], state['world'], state['config'].evaluation.threshold)
    map_path = _out(state, 'maps', f"{tag}.gm")
    write_map(map_path, grid)
    paths = [str(map_path)]
    for style in ('class', 'value'):
        img = _out(state, 'maps', f"{tag}_{style}.ppm")
        render_map(grid, style, img)
        paths.append(str(img))
    return {'artifacts': state['artifacts'] + paths}


def _route_after_evaluation(state: ReproState) -> str:
    return "navigate" if state['config'].navigation.enabled else "skip_navigation"


def create_workflow() -> Any:
    """
    Creates and configures the benchmark workflow.

    Returns:
        Compiled LangGraph workflow; invoke it with {'config': ..., 'out_dir': ...}
    """
    logger.info("Initializing repro workflow...")
    workflow = StateGraph(ReproState)
    workflow.add_node("generate_world", generate_world_node)
    workflow.add_node("collect_drives", collect_drives_node)
    workflow.add_node("build_datasets", build_datasets_node)
    workflow.add_node("train_models", train_models_node)
    workflow.add_node("evaluate", evaluate_node)
    workflow.add_node("navigate_scenarios", navigate_scenarios_node)
    workflow.add_node("render_maps", render_maps_node)

    workflow.set_entry_point("generate_world")
    workflow.add_edge("generate_world", "collect_drives")
    workflow.add_edge("collect_drives", "build_datasets")
    workflow.add_edge("build_datasets", "train_models")
    workflow.add_edge("train_models", "evaluate")
    workflow.add_conditional_edges("evaluate", _route_after_evaluation,
        {
            "navigate": "navigate_scenarios",
            "skip_navigation": "render_maps"
        }
    )
    workflow.add_edge("navigate_scenarios", "render_maps")
    workflow.add_edge("render_maps", END)
    return workflow.compile()


def run_repro(cfg: PipelineConfig, out_dir: str) -> ReproState:
    workflow = create_workflow()
    return workflow.invoke({'config': cfg, 'out_dir': out_dir, 'artifacts': []})
