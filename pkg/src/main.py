# src/main.py
import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from dotenv import load_dotenv

# Load environment variables from .env file in the project root
load_dotenv(dotenv_path=os.path.join(os.path.dirname(os.path.dirname(__file__)), '.env'))

# Add project root to Python path
PROJECT_ROOT = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if PROJECT_ROOT not in sys.path:
    sys.path.insert(0, PROJECT_ROOT)

from src.core.config import (build_dataclass, load_pipeline_config, load_scenario_config,  # noqa: E402
                             training_settings)
from src.core.datagen import (SEMANTIC_NEGATIVE, SEMANTIC_POSITIVE, DatasetMeta,  # noqa: E402
                              build_pu_dataset, fuse_scans, ingest_semantic_cloud, knn_patches,
                              label_eval_points, balance_labels, project_contacts, read_dataset,
                              read_semantic_cloud, split_dataset, trace_value_range, write_dataset)
from src.core.gridmap import DEFAULT_RESOLUTION, build_map, read_map, write_map  # noqa: E402
from src.core.lidar import read_scan, scan_along_trace, write_scan  # noqa: E402
from src.core.terrain import TerrainRecipe, generate_world, parse_recipe, read_world, write_world  # noqa: E402
from src.core.vehicle_sim import VEHICLE_PRESETS, get_vehicle, read_trace, simulate_traversal, write_trace  # noqa: E402
from src.core.workflow import run_repro  # noqa: E402
from src.evaluation.report import build_report, write_report_csv  # noqa: E402
from src.learning.encoder import read_checkpoint, write_checkpoint  # noqa: E402
from src.learning.trainer import (EvalThreshold, Method, TrainConfig, classify, predict_batch,  # noqa: E402
                                  train, write_training_log)
from src.planning.cost import CostParams  # noqa: E402
from src.planning.navigation import navigate, write_trajectory_csv  # noqa: E402
from src.planning.scenarios import SCENARIOS, build_scenario, oracle_map  # noqa: E402
from src.planning.smppi import MppiConfig  # noqa: E402
from src.utils.errors import (ArtifactNotFoundError, ConfigError, InvalidSpecError,  # noqa: E402
                              TravbenchError, UsageError)
from src.utils.logger import logger  # noqa: E402
from src.utils.render import STYLES, render_artifact  # noqa: E402

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_MISSING = 3


def _floats(text: str, n: Optional[int] = None) -> List[float]:
    values = [float(v) for v in text.split(',')]
    if n is not None and len(values) != n:
        raise UsageError(f"expected {n} comma-separated numbers, got {text!r}")
    return values


def _parse_path(text: str) -> np.ndarray:
    """``x,y;x,y;...`` waypoints."""
    return np.array([_floats(p, 2) for p in text.split(';') if p.strip()])


def cmd_world(args) -> None:
    recipe = parse_recipe(args.spec) if args.spec else TerrainRecipe()
    world = generate_world(args.seed, recipe)
    write_world(args.out, world)
    logger.info(f"Wrote world {world.width}x{world.height} to {args.out}")


def cmd_simulate(args) -> None:
    world = read_world(args.world)
    vehicle = get_vehicle(args.vehicle)
    trace = simulate_traversal(world, vehicle, _parse_path(args.path), args.dt)
    write_trace(args.out, trace)
    logger.info(f"Wrote {len(trace)} steps of {vehicle.name} to {args.out}")
    if args.scans_out:
        scans = scan_along_trace(world, trace.poses, args.mount_height, args.scan_every, args.channels,
                                 args.azimuth_steps, args.max_range)
        stem = Path(args.scans_out)
        for i, scan in enumerate(scans):
            write_scan(stem.with_name(f"{stem.stem}_{i:03d}{stem.suffix or '.txt'}"), scan)
        logger.info(f"Wrote {len(scans)} scans next to {stem}")


def cmd_dataset(args) -> None:
    if args.semantic:
        points, names = read_semantic_cloud(args.semantic)
        positive = args.positive_classes.split(',') if args.positive_classes else SEMANTIC_POSITIVE
        negative = args.negative_classes.split(',') if args.negative_classes else SEMANTIC_NEGATIVE
        samples = ingest_semantic_cloud(points, names, positive, negative, args.k)
        write_dataset(args.out, samples, DatasetMeta(args.k, seeds={'seed': args.seed}))
        return
    if not args.trace or not args.scan:
        raise UsageError("dataset needs --trace and --scan (or --semantic)")
    traces = [read_trace(p) for p in args.trace]
    scans = [read_scan(p) for p in args.scan]
    value_range = trace_value_range(traces, args.value_mode)
    positives = []
    for trace in traces:
        positives.extend(project_contacts(trace, scans, args.radius, args.value_mode, value_range))
    samples = build_pu_dataset(scans, positives, args.k, args.unlabeled_per_scan, args.seed)
    meta = DatasetMeta(args.k, args.value_mode, value_range, {'seed': args.seed, 'split_seed': args.split_seed})
    write_dataset(args.out, samples, meta)
    if args.world and args.eval_out:
        cloud = fuse_scans(scans)
        labeled = label_eval_points(read_world(args.world), cloud, args.k, seed=args.seed)
        write_dataset(args.eval_out, balance_labels(labeled, args.seed), DatasetMeta(args.k, seeds={'seed': args.seed}))


def cmd_train(args) -> None:
    samples, meta = read_dataset(args.dataset)
    cfg = load_pipeline_config(args.config)
    s = training_settings(cfg.training, args.method)
    seed = args.seed if args.seed is not None else cfg.seed
    epochs = args.epochs if args.epochs is not None else s['epochs']
    train_cfg = TrainConfig.from_settings(s, seed, meta.k, epochs=epochs)
    split = split_dataset(samples, int(meta.seeds.get('split_seed', 0)))
    result = train(split, args.method, args.regression, train_cfg)
    write_checkpoint(args.out, result.state)
    if args.log:
        write_training_log(args.log, result.log)
    logger.info(f"Wrote checkpoint {args.out}")


def cmd_eval(args) -> None:
    samples, _ = read_dataset(args.dataset)
    models = {Path(p).stem: read_checkpoint(p) for p in args.checkpoint}
    report = build_report(models, samples, EvalThreshold(args.threshold), args.tag)
    write_report_csv(args.out, report)
    print(report.to_text(), end='')


def cmd_map(args) -> None:
    state = read_checkpoint(args.checkpoint)
    cloud = fuse_scans([read_scan(p) for p in args.scan])
    pred = predict_batch(state, knn_patches(cloud, cloud, state.config.k))
    classes = classify(pred['scores'], EvalThreshold(args.threshold))
    dims = tuple(int(v) for v in _floats(args.dims, 2))
    grid = build_map(cloud, pred['scores'], classes, pred['trav_pred'], _floats(args.origin, 2), args.resolution, dims)
    write_map(args.out, grid)
    logger.info(f"Wrote {dims[0]}x{dims[1]} map to {args.out} ({grid.dropped} points outside)")


def cmd_navigate(args) -> None:
    sc = load_scenario_config(args.config)
    mppi = build_dataclass(MppiConfig, sc.mppi, 'mppi', seed=sc.seed)
    scenario = build_scenario(sc.name, seed=sc.seed, vehicle=sc.vehicle or None, mppi=mppi)
    params = build_dataclass(CostParams, sc.cost, 'cost', **vars(scenario.params))
    world = read_world(sc.world) if sc.world else scenario.world
    grid = read_map(sc.map) if sc.map else oracle_map(world, scenario.vehicle)
    start = np.asarray(sc.start, dtype=np.float64) if sc.start else scenario.start
    goal = np.asarray(sc.goal, dtype=np.float64) if sc.goal else scenario.goal
    result = navigate(grid, start, goal, scenario.vehicle, params, mppi, sc.max_steps, sc.goal_radius, world=world)
    write_trajectory_csv(args.out, result, label=args.label)
    logger.info(f"reached={result.reached} steps={len(result.logs)} "
                f"non_traversable_contacts={result.non_traversable_contacts} true_impact={result.true_impact:.1f}")


def cmd_render(args) -> None:
    render_artifact(args.artifact, args.style, args.out, background=args.background)


def cmd_repro(args) -> None:
    cfg = load_pipeline_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    out_dir = args.out_dir or cfg.output_dir
    state = run_repro(cfg, out_dir)
    logger.info(f"repro finished: {len(state['artifacts'])} artifacts under {out_dir}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='travbench', description="Self-supervised traversability workbench")
    sub = parser.add_subparsers(dest='command', required=True)
    default_seed = int(os.getenv('TRAVBENCH_SEED', '0'))

    p = sub.add_parser('world', help="generate a synthetic height-field world")
    p.add_argument('--seed', type=int, default=default_seed)
    p.add_argument('--spec', help="terrain recipe (key=value)")
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_world)

    p = sub.add_parser('simulate', help="drive a vehicle along a path and record proprioception")
    p.add_argument('--world', required=True)
    p.add_argument('--vehicle', required=True, choices=sorted(VEHICLE_PRESETS))
    p.add_argument('--path', required=True, help="waypoints x,y;x,y;...")
    p.add_argument('--dt', type=float, default=0.1)
    p.add_argument('--out', required=True)
    p.add_argument('--scans-out')
    p.add_argument('--scan-every', type=int, default=10)
    p.add_argument('--channels', type=int, default=16)
    p.add_argument('--azimuth-steps', type=int, default=360)
    p.add_argument('--max-range', type=float, default=12.0)
    p.add_argument('--mount-height', type=float, default=1.8)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser('dataset', help="build a PU dataset from traces and scans, or from a semantic cloud")
    p.add_argument('--trace', action='append', default=[])
    p.add_argument('--scan', action='append', default=[])
    p.add_argument('--semantic')
    p.add_argument('--positive-classes')
    p.add_argument('--negative-classes')
    p.add_argument('--k', type=int, default=16)
    p.add_argument('--radius', type=float, default=0.25)
    p.add_argument('--unlabeled-per-scan', type=int, default=400)
    p.add_argument('--value-mode', choices=['wheel_force', 'z_accel'], default='wheel_force')
    p.add_argument('--seed', type=int, default=default_seed)
    p.add_argument('--split-seed', type=int, default=0)
    p.add_argument('--world', help="world file used to label an evaluation set")
    p.add_argument('--eval-out')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_dataset)

    p = sub.add_parser('train', help="train one method on a dataset")
    p.add_argument('--dataset', required=True)
    p.add_argument('--method', required=True, choices=[m.value for m in Method])
    p.add_argument('--regression', action='store_true')
    p.add_argument('--config')
    p.add_argument('--epochs', type=int)
    p.add_argument('--seed', type=int)
    p.add_argument('--log')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser('eval', help="evaluate checkpoints on a labeled dataset")
    p.add_argument('--checkpoint', action='append', required=True)
    p.add_argument('--dataset', required=True)
    p.add_argument('--threshold', type=float, default=0.5)
    p.add_argument('--tag', default='synthetic')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser('map', help="project per-point predictions into a 2.5D grid map")
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--scan', action='append', required=True)
    p.add_argument('--origin', default='0,0')
    p.add_argument('--resolution', type=float, default=DEFAULT_RESOLUTION)
    p.add_argument('--dims', default='128,128')
    p.add_argument('--threshold', type=float, default=0.5)
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser('navigate', help=f"run a navigation scenario ({', '.join(SCENARIOS)})")
    p.add_argument('--config', required=True)
    p.add_argument('--label', default='executed')
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_navigate)

    p = sub.add_parser('render', help="render a map or trajectory artifact")
    p.add_argument('--artifact', action='append', required=True)
    p.add_argument('--style', required=True, help=f"one of {', '.join(STYLES)}")
    p.add_argument('--background', help="map drawn under trajectory overlays")
    p.add_argument('--out', required=True)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser('repro', help="run the full synthetic benchmark")
    p.add_argument('--seed', type=int)
    p.add_argument('--config')
    p.add_argument('--out-dir')
    p.set_defaults(func=cmd_repro)
    return parser


def run_command(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the subcommand and map failures to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    try:
        args.func(args)
    except (ArtifactNotFoundError, FileNotFoundError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_MISSING
    except (ConfigError, UsageError, InvalidSpecError) as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_USAGE
    except TravbenchError as e:
        logger.error(f"{args.command}: {e}")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Fatal error in {args.command}: {str(e)}")
        return EXIT_FAILURE
    return EXIT_OK


def main():
    """Main entry point for the workbench."""
    sys.exit(run_command())


if __name__ == "__main__":
    main()
