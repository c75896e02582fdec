"""Command line front end: ``pts-track synth|track|eval|ablate``.

Exit status is 0 on success, 1 on runtime errors (malformed inputs, I/O
failures) and 2 on usage errors.
"""

import argparse
import dataclasses
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import xarray as xr

from pts_track._version import __version__
from pts_track.data import (
    PREDICTIONS_FILE,
    RESULTS_FILE,
    TRUTH_FILE,
    load_config,
    load_sequence,
    load_truth,
    read_predictions,
    read_vot_file,
    render_overlay,
    write_predictions,
    write_vot_file,
)
from pts_track.errors import IoError, ParseError, PtsTrackError
from pts_track.metrics import summarize
from pts_track.pipeline import TrackerConfig, replay_results, run_sequence
from pts_track.synth import (
    generate,
    get_scenario,
    list_scenarios,
    render_sequence,
    scenario_from_dict,
)

__all__ = [
    "main",
    "build_parser",
    "cmd_synth",
    "cmd_track",
    "cmd_eval",
    "cmd_ablate",
    "ablation_table",
]

_log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

MODES = ("pts", "baseline", "pts-no-region", "pts-no-prediction")
SUMMARY_FILE = "summary.json"


def _tracker_config(args, mode=None):
    cfg = load_config(args.config) if args.config else TrackerConfig.from_rcparams()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, ransac=dataclasses.replace(cfg.ransac, rng_seed=args.seed))
    if mode is not None:
        cfg = cfg.with_mode(mode)
    return cfg


def _run_jobs(func, items, jobs):
    """Apply `func` to every item, in worker processes when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    _log.debug("Dispatching %d jobs to %d worker processes", len(items), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(func, items))


def cmd_synth(args):
    """Write a synthetic sequence directory."""
    if args.list:
        for name in list_scenarios():
            print(name)
        return EXIT_OK
    if (args.scenario is None) == (args.spec is None):
        print("synth: exactly one of --scenario and --spec is required", file=sys.stderr)
        return EXIT_USAGE
    if args.out is None:
        print("synth: --out is required", file=sys.stderr)
        return EXIT_USAGE
    if args.scenario is not None:
        try:
            spec = get_scenario(args.scenario)
        except KeyError as err:
            print(f"synth: {err.args[0]}", file=sys.stderr)
            return EXIT_USAGE
    else:
        try:
            content = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        except OSError as err:
            raise IoError(f"Cannot read scenario {args.spec}: {err}") from err
        except json.JSONDecodeError as err:
            raise ParseError(f"{args.spec} is not valid JSON: {err}") from err
        spec = scenario_from_dict(content)
    seed = 0 if args.seed is None else args.seed
    render_sequence(spec, args.out, seed=seed)
    print(f"{spec.name}: {spec.n_frames} frames written to {args.out}")
    return EXIT_OK


def _track_one(job):
    """Track one sequence directory. Errors are returned, not raised."""
    seq_dir, out_dir, cfg, overlay_dir = job
    try:
        bundle = load_sequence(seq_dir)
        frames = bundle.load_frames()
        record = run_sequence(frames, bundle.gt_boxes, bundle.load_matches(), cfg)
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_vot_file(out_dir / RESULTS_FILE, record.boxes)
        write_predictions(out_dir / PREDICTIONS_FILE, record)
        if overlay_dir is not None:
            overlay_dir = Path(overlay_dir)
            overlay_dir.mkdir(parents=True, exist_ok=True)
            for t, (frame, gt_box, out) in enumerate(zip(frames, bundle.gt_boxes, record.outputs)):
                render_overlay(overlay_dir / f"{t:06d}.ppm", frame, [out.box, gt_box])
    except (PtsTrackError, OSError) as err:
        return str(seq_dir), False, f"{type(err).__name__}: {err}"
    return str(seq_dir), True, f"{len(record)} frames, {record.failure_count} failures"


def cmd_track(args):
    """Track sequence directories and write results and predictions."""
    if args.out is not None and len(args.sequences) > 1:
        print("track: --out only works with a single sequence", file=sys.stderr)
        return EXIT_USAGE
    cfg = _tracker_config(args, args.mode)
    jobs = []
    for seq_dir in args.sequences:
        out_dir = args.out if args.out is not None else seq_dir
        overlay = None
        if args.render_overlay is not None:
            overlay = Path(args.render_overlay)
            if len(args.sequences) > 1:
                overlay = overlay / Path(seq_dir).name
        jobs.append((seq_dir, out_dir, cfg, overlay))
    status = EXIT_OK
    for seq_dir, ok, message in _run_jobs(_track_one, jobs, args.jobs):
        if not ok:
            print(f"track: {seq_dir}: {message}", file=sys.stderr)
            status = EXIT_RUNTIME
        else:
            print(f"{seq_dir}: {message}")
    return status


def _eval_one(job):
    """Evaluate one sequence directory. Errors are returned, not raised."""
    seq_dir, results_path, reinit_gap = job
    seq_dir = Path(seq_dir)
    try:
        bundle = load_sequence(seq_dir)
        results_path = Path(results_path) if results_path else seq_dir / RESULTS_FILE
        boxes = read_vot_file(results_path)
        predictions_path = results_path.parent / PREDICTIONS_FILE
        predictions = read_predictions(predictions_path) if predictions_path.is_file() else None
        record = replay_results(boxes, bundle.gt_boxes, reinit_gap, predictions)
        gt_centers = None
        if (seq_dir / TRUTH_FILE).is_file():
            gt_centers = load_truth(seq_dir / TRUTH_FILE)["center"].values
        report = summarize(record, bundle.gt_boxes, gt_centers)
        (results_path.parent / SUMMARY_FILE).write_text(
            report.to_json(indent=2) + "\n", encoding="utf-8"
        )
    except (PtsTrackError, OSError) as err:
        return str(seq_dir), None, f"{type(err).__name__}: {err}"
    return str(seq_dir), report.to_json(), None


def cmd_eval(args):
    """Evaluate stored results against the ground truth of each sequence."""
    if args.results is not None and len(args.sequences) > 1:
        print("eval: --results only works with a single sequence", file=sys.stderr)
        return EXIT_USAGE
    reinit_gap = _tracker_config(args).reinit_gap
    jobs = [(seq_dir, args.results, reinit_gap) for seq_dir in args.sequences]
    status = EXIT_OK
    for seq_dir, report, error in _run_jobs(_eval_one, jobs, args.jobs):
        if error is not None:
            print(f"eval: {seq_dir}: {error}", file=sys.stderr)
            status = EXIT_RUNTIME
        else:
            print(f"{seq_dir}: {report}")
    return status


def _ablate_one(job):
    """Run every mode on one generated scenario."""
    name, seed, cfg = job
    frames, truth = generate(get_scenario(name), seed)
    rows = {}
    for mode in MODES:
        record = run_sequence(frames, truth.boxes, truth.matches, cfg.with_mode(mode))
        report = summarize(record, truth.boxes, truth.centers)
        rows[mode] = (report.failure_count, report.accuracy, report.position_error)
    return name, seed, rows


def ablation_table(results, scenarios):
    """Aggregate ablation runs over seeds.

    Returns
    -------
    Dataset
        ``failures`` (summed), ``accuracy`` and ``position_error`` (averaged) over
        the ``mode`` and ``scenario`` dimensions.
    """
    shape = (len(MODES), len(scenarios))
    failures = np.zeros(shape, dtype=int)
    accuracy = np.zeros(shape)
    position = np.zeros(shape)
    counts = np.zeros(shape, dtype=int)
    position_counts = np.zeros(shape, dtype=int)
    for name, _, rows in results:
        j = scenarios.index(name)
        for i, mode in enumerate(MODES):
            n_fail, acc, pos = rows[mode]
            failures[i, j] += n_fail
            accuracy[i, j] += acc
            counts[i, j] += 1
            if np.isfinite(pos):
                position[i, j] += pos
                position_counts[i, j] += 1
    accuracy = np.where(counts > 0, accuracy / np.maximum(counts, 1), np.nan)
    position = np.where(position_counts > 0, position / np.maximum(position_counts, 1), np.nan)
    dims = ("mode", "scenario")
    return xr.Dataset(
        {
            "failures": (dims, failures),
            "accuracy": (dims, accuracy),
            "position_error": (dims, position),
        },
        coords={"mode": list(MODES), "scenario": list(scenarios)},
    )


def _format_table(table):
    lines = [f"{'scenario':<22}{'mode':<20}{'failures':>9}{'accuracy':>10}{'pos.err':>9}"]
    for scenario in table["scenario"].values:
        for mode in table["mode"].values:
            row = table.sel(mode=mode, scenario=scenario)
            lines.append(
                f"{scenario:<22}{mode:<20}{int(row['failures']):>9d}"
                f"{float(row['accuracy']):>10.3f}{float(row['position_error']):>9.2f}"
            )
    return "\n".join(lines)


def cmd_ablate(args):
    """Run the four tracker modes on synthetic scenarios and tabulate them."""
    available = list_scenarios()
    scenarios = args.scenario or available
    unknown = [name for name in scenarios if name not in available]
    if unknown:
        print(f"ablate: unknown scenarios {unknown}, available: {available}", file=sys.stderr)
        return EXIT_USAGE
    base_seed = 0 if args.seed is None else args.seed
    cfg = _tracker_config(args)
    jobs = [(name, base_seed + k, cfg) for name in scenarios for k in range(args.seeds)]
    table = ablation_table(_run_jobs(_ablate_one, jobs, args.jobs), list(scenarios))
    print(_format_table(table))
    if args.out is not None:
        try:
            Path(args.out).write_text(
                json.dumps(table.to_dict(data="list"), indent=2), encoding="utf-8"
            )
        except OSError as err:
            raise IoError(f"Cannot write ablation table to {args.out}: {err}") from err
    return EXIT_OK


def _positive_int(value):
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def build_parser():
    """Create the argument parser with its sub-commands."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--config", default=None, help="JSON tracker configuration")
    common.add_argument(
        "--jobs", type=_positive_int, default=1, help="sequences processed in parallel"
    )
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging verbosity",
    )

    parser = argparse.ArgumentParser(
        prog="pts-track", description="Prediction, tracking and segmentation toolkit"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    synth = subparsers.add_parser(
        "synth", parents=[common], help="generate a synthetic sequence directory"
    )
    synth.add_argument("--scenario", default=None, help="standard scenario name")
    synth.add_argument("--spec", default=None, help="JSON scenario description")
    synth.add_argument("--out", default=None, help="output directory")
    synth.add_argument("--list", action="store_true", help="list the standard scenarios")
    synth.set_defaults(func=cmd_synth)

    track = subparsers.add_parser("track", parents=[common], help="track sequence directories")
    track.add_argument("sequences", nargs="+", help="sequence directories")
    track.add_argument("--mode", choices=MODES, default=None, help="tracker mode")
    track.add_argument("--out", default=None, help="output directory, defaults to the sequence")
    track.add_argument(
        "--render-overlay", default=None, metavar="DIR", help="write annotated PPM frames"
    )
    track.set_defaults(func=cmd_track)

    evaluate = subparsers.add_parser("eval", parents=[common], help="evaluate tracking results")
    evaluate.add_argument("sequences", nargs="+", help="sequence directories")
    evaluate.add_argument(
        "--results", default=None, help="results file, defaults to <sequence>/results.txt"
    )
    evaluate.set_defaults(func=cmd_eval)

    ablate = subparsers.add_parser(
        "ablate", parents=[common], help="compare tracker modes on synthetic scenarios"
    )
    ablate.add_argument(
        "--scenario", action="append", default=None, help="scenario name, repeatable"
    )
    ablate.add_argument("--seeds", type=_positive_int, default=1, help="seeds per scenario")
    ablate.add_argument("--out", default=None, help="JSON file for the table")
    ablate.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    """Entry point of the ``pts-track`` script.

    Returns
    -------
    int
        Exit status.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return err.code if isinstance(err.code, int) else EXIT_USAGE
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (PtsTrackError, OSError) as err:
        print(f"{args.command}: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
