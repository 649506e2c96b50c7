#!/usr/bin/env python3
"""
sdsmatch - Scale-adaptive template matching with diversity similarity.
Locates a template in a target image over multi-scale candidate windows,
benchmarks similarity measures and runs Monte-Carlo studies of them.
"""

import argparse
import json
import logging
import os
import sys

import numpy as np

from ann_cache import cache_dir_from_env, clear_ann_cache
from benchmark import read_annotations, run_benchmark
from cache_file_version import CacheFileVersion
from global_constants import (
    DEFAULT_PATCH_SIZE,
    DEFAULT_SCALE_MAX,
    DEFAULT_SCALE_MIN,
    DEFAULT_SCALE_STEP,
    DEFAULT_THRESHOLDS,
    DISPLAY_LINE_WIDTH,
    EFFECTIVE_CONFIG_FILE_NAME,
    EXIT_INTERNAL_ERROR,
    EXIT_OK,
    EXIT_USAGE_ERROR,
    MATCH_RECORD_FILE_NAME,
    MEASURE_NAMES,
    RADIUS_SCALINGS,
    SCORE_MAP_CSV_NAME,
    SCORE_MAP_PGM_NAME,
    STATLAB_SET_SIZE,
    STATLAB_TRIALS,
    SYNTH_NOISE_SIGMA,
)
from image_core import (
    BenchmarkError,
    ConfigError,
    MatchConfig,
    ScaleGrid,
    SdsError,
    Window,
    crop,
)
from image_io import load_image, save_map_pgm
from statlab import (
    expectation_map_1d,
    rotation_map_2d,
    scale_estimation_trials,
    write_expectation_csv,
    write_histogram_csv,
)
from synthetic_pairs import synthetic_suite
from window_matcher import export_result, match, write_score_map_csv

logger = logging.getLogger(__name__)

GRID_KEYS = ("scale_min", "scale_max", "scale_step", "stride", "tied_axes")
GRID_DEFAULTS = {
    "scale_min": DEFAULT_SCALE_MIN,
    "scale_max": DEFAULT_SCALE_MAX,
    "scale_step": DEFAULT_SCALE_STEP,
    "stride": None,
    "tied_axes": False,
}
# argparse destination -> settings key
CLI_SETTINGS = {
    "measure": "measure",
    "patch_size": "patch_size",
    "lam": "lam",
    "rank_radius": "rank_radius",
    "ann_k": "ann_k",
    "denom_guard": "denom_guard",
    "distance_mode": "distance_mode",
    "radius_scaling": "radius_scaling",
    "no_ddis_weighting": "ddis_weighting",
    "scale_min": "scale_min",
    "scale_max": "scale_max",
    "scale_step": "scale_step",
    "stride": "stride",
    "tied_axes": "tied_axes",
}
STATLAB_STUDIES = ("expectation", "scale", "rotation")
STATLAB_STUDY_ALIASES = {"fig2": "expectation", "fig3": "scale",
                         "fig4": "rotation"}


def study_name(value):
    """Resolve a statlab study name or alias."""
    return STATLAB_STUDY_ALIASES.get(value.lower(), value.lower())


def banner(title):
    """Print a section header."""
    print("=" * DISPLAY_LINE_WIDTH)
    print(title)
    print("=" * DISPLAY_LINE_WIDTH)


def configure_logging(verbosity):
    """WARNING by default, INFO with -v, DEBUG with -vv."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity and verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def parse_list(text, convert=str):
    """Split a comma-separated option value."""
    return [convert(item.strip()) for item in str(text).split(",")
            if item.strip()]


def parse_box(text):
    """Parse 'x,y,w,h' into a Window."""
    values = parse_list(text, int)
    if len(values) != 4:
        raise ConfigError(f"Box must be x,y,w,h, got '{text}'")
    return Window(*values)


def load_config_file(path):
    """
    Read a JSON settings object.

    Raises:
        ConfigError: if the file is not a JSON object
    """
    try:
        with open(path, 'r') as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Invalid JSON in {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object")
    data.pop("version", None)
    return data


def resolve_settings(args):
    """
    Merge defaults, the config file and explicit flags.

    Flags win over the file, the file wins over built-in defaults.

    Returns:
        tuple: (MatchConfig, ScaleGrid)
    """
    settings = dict(GRID_DEFAULTS)
    if getattr(args, "config", None):
        settings.update(load_config_file(args.config))
    for dest, key in CLI_SETTINGS.items():
        value = getattr(args, dest, None)
        if value is None:
            continue
        if dest == "no_ddis_weighting":
            value = not value
        settings[key] = value

    grid_values = {k: settings.pop(k) for k in GRID_KEYS}
    cfg = MatchConfig.from_dict(settings)
    stride = grid_values["stride"] or cfg.patch_size
    try:
        grid = ScaleGrid.from_range(grid_values["scale_min"],
                                    grid_values["scale_max"],
                                    grid_values["scale_step"],
                                    int(stride),
                                    bool(grid_values["tied_axes"]))
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e)) from e
    return cfg, grid


def write_effective_config(out_dir, cfg, grid, extra=None):
    """Echo the settings in effect into out_dir."""
    os.makedirs(out_dir, exist_ok=True)
    record = {"config": cfg.to_dict(), "grid": grid.to_dict()}
    if extra:
        record.update(extra)
    CacheFileVersion.add_version_to_data(record)
    with open(os.path.join(out_dir, EFFECTIVE_CONFIG_FILE_NAME), 'w') as f:
        json.dump(record, f, indent=2)


def cmd_match(args):
    """Match one template against one target image."""
    cfg, grid = resolve_settings(args)
    cache_dir = args.cache_dir or cache_dir_from_env()
    if args.clear_cache and cache_dir:
        removed = clear_ann_cache(cache_dir)
        print(f"• Cleared {removed} ANN cache entries from {cache_dir}")

    template = load_image(args.template)
    if args.template_box:
        template = crop(template, parse_box(args.template_box))
    target = load_image(args.target)

    banner("MATCH CONFIGURATION")
    print(f"• Measure: {cfg.measure}")
    print(f"• Template: {template.width}x{template.height}  "
          f"Target: {target.width}x{target.height}")
    print(f"• Patch size: {cfg.patch_size}  Rank radius: {cfg.rank_radius}  "
          f"k: {cfg.ann_k}  lambda: {cfg.lam:g}")

    result = match(template, target, cfg, grid, jobs=args.jobs,
                   keep_scale_maps=args.keep_scale_maps,
                   cache_dir=cache_dir)
    export_result(args.out, result, cfg, grid, MATCH_RECORD_FILE_NAME,
                  SCORE_MAP_CSV_NAME, SCORE_MAP_PGM_NAME)
    if result.per_scale_maps:
        scale_dir = os.path.join(args.out, "scale_maps")
        os.makedirs(scale_dir, exist_ok=True)
        for (sx, sy), layer in result.per_scale_maps.items():
            write_score_map_csv(
                os.path.join(scale_dir, f"score_{sx:g}_{sy:g}.csv"), layer)
    write_effective_config(args.out, cfg, grid,
                           {"template": args.template,
                            "target": args.target})

    banner("MATCH RESULT")
    x, y, w, h = result.best.as_tuple()
    print(f"✓ Best window: x={x} y={y} w={w} h={h}")
    print(f"• Scale: sx={result.best_scale[0]:g} sy={result.best_scale[1]:g}")
    print(f"• Score: {result.best_score:.6g}")
    print(f"• Candidates scored: {result.candidates}")
    print(f"• Results written to {args.out}")
    return EXIT_OK


def cmd_bench(args):
    """Run the benchmark over an annotation file."""
    cfg, grid = resolve_settings(args)
    measures = parse_list(args.measures)
    for name in measures:
        if name not in MEASURE_NAMES:
            raise ConfigError(f"Unknown measure: {name}")
    cfgs = [cfg.replace(measure=name) for name in measures]
    thresholds = (parse_list(args.thresholds, float) if args.thresholds
                  else DEFAULT_THRESHOLDS)
    pairs = read_annotations(args.pairs)

    banner("BENCHMARK")
    print(f"• Pairs: {len(pairs)}")
    print(f"• Measures: {', '.join(measures)}")
    map_dir = os.path.join(args.out, "maps") if args.dump_maps else None
    report = run_benchmark(pairs, cfgs, thresholds, grid, jobs=args.jobs,
                           map_dir=map_dir)
    report.write(args.out)
    write_effective_config(args.out, cfg, grid,
                           {"measures": measures, "pairs": args.pairs})

    banner("AREA UNDER SUCCESS CURVE")
    for label in report.labels:
        print(f"• {label:<8} {report.curves[label].auc:.4f}")
    print(f"• {'ngt':<8} {report.ngt['all'].auc:.4f}")
    if report.skipped:
        print(f"⚠️  Skipped {len(report.skipped)} pairs")
    print(f"• Results written to {args.out}")
    return EXIT_OK


def _statlab_expectation(args, cfg, measures):
    for name in measures:
        emap = expectation_map_1d(name, t_size=args.set_size,
                                  q_size=args.window_size or args.set_size,
                                  trials=args.trials, seed=args.seed,
                                  cfg=cfg, jobs=args.jobs)
        write_expectation_csv(
            os.path.join(args.out, f"expectation_{name}.csv"), emap)
        save_map_pgm(os.path.join(args.out, f"expectation_{name}.pgm"),
                     emap.mean)
        mu, sigma = emap.argmax()
        print(f"• {name}: maximum at mu={mu:g} sigma={sigma:g}")


def _statlab_scale(args, cfg, measures):
    for name in measures:
        study = scale_estimation_trials(name, t_size=args.set_size,
                                        trials=args.trials, seed=args.seed,
                                        cfg=cfg, jobs=args.jobs)
        write_histogram_csv(os.path.join(args.out, f"scale_hist_{name}.csv"),
                            study)
        write_expectation_csv(
            os.path.join(args.out, f"scale_expectation_{name}.csv"),
            study.expectation)
        modes = ", ".join(f"GT {gt:g} -> {study.mode(gt):g}"
                          for gt in study.histograms)
        print(f"• {name}: {modes}")


def _statlab_rotation(args, cfg, measures):
    maps = rotation_map_2d(tuple(measures), trials=args.trials,
                           seed=args.seed, n=args.set_size, cfg=cfg,
                           jobs=args.jobs)
    for name, emap in maps.items():
        write_expectation_csv(os.path.join(args.out, f"rotation_{name}.csv"),
                              emap)
        variation = np.max(emap.row_relative_variation())
        print(f"• {name}: largest relative variation over theta "
              f"{variation:.3f}")


def cmd_statlab(args):
    """Run one Monte-Carlo study."""
    cfg, grid = resolve_settings(args)
    default_measures = "bbs,sds" if args.study != "expectation" else \
        "ssd,bbs,ddis,sds"
    measures = parse_list(args.measures or default_measures)
    os.makedirs(args.out, exist_ok=True)

    banner(f"STATLAB: {args.study.upper()}")
    print(f"• Trials per cell: {args.trials}  Seed: {args.seed}")
    if args.study == "expectation":
        _statlab_expectation(args, cfg, measures)
    elif args.study == "scale":
        _statlab_scale(args, cfg, measures)
    else:
        _statlab_rotation(args, cfg, measures)
    write_effective_config(args.out, cfg, grid,
                           {"study": args.study, "measures": measures,
                            "trials": args.trials, "seed": args.seed})
    print(f"• Results written to {args.out}")
    return EXIT_OK


def cmd_synth(args):
    """Write the synthetic benchmark suite."""
    pairs = synthetic_suite(args.out, count=args.count, seed=args.seed,
                            noise_sigma=args.noise)
    banner("SYNTHETIC SUITE")
    print(f"✓ Wrote {len(pairs)} pairs to {args.out}")
    return EXIT_OK


def _add_common_options(parser):
    parser.add_argument('--out', default='sdsmatch_out',
                        help='Output directory (default: sdsmatch_out)')
    parser.add_argument('--seed', type=int, default=0,
                        help='Random seed (default: 0)')
    parser.add_argument('--jobs', type=int, default=1,
                        help='Worker processes; never changes results')
    parser.add_argument('-v', '--verbose', action='count', default=0,
                        help='More log output (-v info, -vv debug)')


def _add_match_options(parser):
    parser.add_argument('--config',
                        help='JSON file with matching settings')
    parser.add_argument('--measure', choices=MEASURE_NAMES,
                        help='Similarity measure (default: sds)')
    parser.add_argument('--scale-min', type=float,
                        help=f'Smallest scale (default: {DEFAULT_SCALE_MIN})')
    parser.add_argument('--scale-max', type=float,
                        help=f'Largest scale (default: {DEFAULT_SCALE_MAX})')
    parser.add_argument('--scale-step', type=float,
                        help=f'Scale step (default: {DEFAULT_SCALE_STEP})')
    parser.add_argument('--tied-axes', action='store_const', const=True,
                        help='Only visit sx == sy')
    parser.add_argument('--stride', type=int,
                        help='Sliding stride in pixels (default: patch size)')
    parser.add_argument('--patch-size', type=int,
                        help=f'Patch side (default: {DEFAULT_PATCH_SIZE})')
    parser.add_argument('--lambda', dest='lam', type=float,
                        help='Weight of the rank / location term')
    parser.add_argument('--rank-radius', type=int,
                        help='Radius of the appearance rank circle')
    parser.add_argument('--ann-k', type=int,
                        help='Neighbours per template patch in the ANN table')
    parser.add_argument('--denom-guard', type=float,
                        help='Constant added to the SDS denominator')
    parser.add_argument('--distance-mode',
                        help='Override the measure\'s patch distance')
    parser.add_argument('--radius-scaling', choices=RADIUS_SCALINGS,
                        help='How template radii follow the window size '
                             '(per-axis grid ratio, s or sqrt(s))')
    parser.add_argument('--no-ddis-weighting', action='store_const',
                        const=True,
                        help='Disable the DDIS deformation weighting')


def setup_argument_parser():
    """
    Set up and return the command-line argument parser.

    Returns:
        argparse.ArgumentParser: Configured argument parser
    """
    parser = argparse.ArgumentParser(
        prog='sdsmatch',
        description='Scale-adaptive template matching',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  sdsmatch match t.png q.png                 # Multi-scale SDS match
  sdsmatch match t.png q.png --measure nsds  # Fixed-scale SDS
  sdsmatch synth --out suite --count 288     # Write the synthetic suite
  sdsmatch bench --pairs suite/pairs.csv --measures sds,ddis,bbs
  sdsmatch statlab scale --trials 200 --seed 7

Set SDS_CACHE_DIR to reuse ANN tables across runs.
        """
    )
    parser.add_argument('--version', action='version',
                        version='sdsmatch 0.1.0')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('match', help='Locate a template in a target image')
    p.add_argument('template', help='Template image (or reference image '
                                    'with --template-box)')
    p.add_argument('target', help='Target image')
    p.add_argument('--template-box',
                   help='x,y,w,h box cropping the template')
    p.add_argument('--keep-scale-maps', action='store_true',
                   help='Also write one score map per scale pair')
    p.add_argument('--cache-dir',
                   help='ANN table cache (default: $SDS_CACHE_DIR)')
    p.add_argument('--clear-cache', action='store_true',
                   help='Empty the ANN table cache first')
    _add_common_options(p)
    _add_match_options(p)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser('bench', help='Benchmark measures on annotated pairs')
    p.add_argument('--pairs', required=True, help='Annotation CSV')
    p.add_argument('--measures', default='sds,ddis,bbs',
                   help='Comma-separated measures (default: sds,ddis,bbs)')
    p.add_argument('--thresholds',
                   help='Comma-separated overlap thresholds')
    p.add_argument('--dump-maps', action='store_true',
                   help='Write a PGM score map per pair and measure')
    _add_common_options(p)
    _add_match_options(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser('statlab', help='Monte-Carlo studies on point sets')
    p.add_argument('study', type=study_name, choices=STATLAB_STUDIES,
                   help='expectation (1D maps, alias fig2), scale (scale '
                        'estimation, alias fig3) or rotation (2D maps, '
                        'alias fig4)')
    p.add_argument('--measures', help='Comma-separated measures')
    p.add_argument('--trials', type=int, default=STATLAB_TRIALS,
                   help=f'Trials per cell (default: {STATLAB_TRIALS})')
    p.add_argument('--set-size', type=int, default=STATLAB_SET_SIZE,
                   help='Template point count')
    p.add_argument('--window-size', type=int,
                   help='Window point count of the expectation study')
    _add_common_options(p)
    _add_match_options(p)
    p.set_defaults(func=cmd_statlab)

    p = sub.add_parser('synth', help='Write the synthetic benchmark suite')
    p.add_argument('--count', type=int,
                   help='Number of pairs (default: full suite)')
    p.add_argument('--noise', type=float, default=SYNTH_NOISE_SIGMA,
                   help='Pixel noise standard deviation')
    _add_common_options(p)
    p.set_defaults(func=cmd_synth)

    return parser


def main(argv=None):
    """Main function for CLI interface."""
    parser = setup_argument_parser()
    args = parser.parse_args(argv)
    configure_logging(args.verbose)

    try:
        code = args.func(args)
    except BenchmarkError as e:
        print(f"🚨 ERROR: {e}", file=sys.stderr)
        code = EXIT_INTERNAL_ERROR
    except (SdsError, OSError) as e:
        print(f"🚨 ERROR: {e}", file=sys.stderr)
        code = EXIT_USAGE_ERROR
    except KeyboardInterrupt:
        print("\nCancelled by user", file=sys.stderr)
        code = EXIT_INTERNAL_ERROR
    except Exception as e:
        logger.debug("Unhandled error", exc_info=True)
        print(f"🚨 INTERNAL ERROR: {e}", file=sys.stderr)
        code = EXIT_INTERNAL_ERROR
    sys.exit(code)


if __name__ == '__main__':
    main()
