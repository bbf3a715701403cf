"""Command-line pipeline: synth -> extract -> train -> evaluate / classify / density.

Every subcommand accepts the ROI flags (--roi-x-max/--roi-y-min/--roi-y-max)
and --seed; the ROI only affects commands that extract features from frames
(extract, classify). The default synth config path can be set through the
LIDARWEATHER_CONFIG environment variable.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

from . import classify as clf_mod
from .features import FrameFeatureExtractor, N_FEATURES
from .frames import RoiBounds, WeatherLabel
from .frameio import (
    export_points_csv,
    read_feature_table,
    read_frames,
    write_feature_table,
    write_frames,
)
from .metrics import (
    WEATHER_CLASS_NAMES,
    class_metrics,
    confusion_matrix,
    density_series,
    format_report,
    write_density_csv,
    write_report_csv,
)
from .sim import SimConfig, default_profiles, default_scenes, generate_dataset, load_sim_config

CONFIG_ENV_VAR = "LIDARWEATHER_CONFIG"


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--roi-x-max", type=float, default=20.0, metavar="M",
                        help="near-range gate in x (default 20 m)")
    parser.add_argument("--roi-y-min", type=float, default=-1.5, metavar="M",
                        help="ego-lane gate, lower y bound (default -1.5 m)")
    parser.add_argument("--roi-y-max", type=float, default=1.5, metavar="M",
                        help="ego-lane gate, upper y bound (default +1.5 m)")
    parser.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")


def _roi(args) -> RoiBounds:
    return RoiBounds(x_max=args.roi_x_max, y_min=args.roi_y_min, y_max=args.roi_y_max)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lidarweather",
        description="Lidar weather classification pipeline on synthetic fog/rain data.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="render a labeled dataset from a scene+profile config")
    p.add_argument("--config", default=None,
                   help=f"JSON config path (default: ${CONFIG_ENV_VAR} or built-in scenes)")
    p.add_argument("--frames-per-cell", type=int, default=None,
                   help="frames per (scene, profile) cell, overrides the config")
    p.add_argument("-o", "--out", required=True, help="output dataset file (.lwpc)")
    _add_common(p)

    p = sub.add_parser("extract", help="dataset file -> per-frame feature table CSV")
    p.add_argument("dataset", help="input .lwpc dataset")
    p.add_argument("-o", "--out", required=True, help="output feature CSV")
    p.add_argument("--no-roi", action="store_true", help="extract from the full cloud")
    p.add_argument("--eigen-mode", choices=("joint", "per_axis"), default="joint")
    p.add_argument("--points-csv", default=None, help="also dump the raw points as CSV")
    _add_common(p)

    p = sub.add_parser("train", help="feature table -> trained model file")
    p.add_argument("features", help="input feature CSV")
    p.add_argument("-o", "--out", required=True, help="output model file (.json)")
    p.add_argument("--classifier", choices=("knn", "svm"), default="knn")
    p.add_argument("--k", type=int, default=10, help="kNN neighbor count (default 10)")
    p.add_argument("--c", type=float, default=1.0, help="SVM box constraint (default 1.0)")
    p.add_argument("--gamma", default="median",
                   help="SVM RBF width, a float or 'median' (default median heuristic)")
    p.add_argument("--split-fraction", type=float, default=0.8,
                   help="scenario-disjoint train fraction (default 0.8)")
    p.add_argument("--test-scenarios", default=None,
                   help="comma-separated scenario ids to hold out instead of the seeded split")
    p.add_argument("--train-out", default=None, help="write the training rows as CSV")
    p.add_argument("--test-out", default=None, help="write the held-out rows as CSV")
    _add_common(p)

    p = sub.add_parser("evaluate", help="model + labeled feature table -> metrics report")
    p.add_argument("model", help="model file from train")
    p.add_argument("features", help="labeled feature CSV (the held-out rows)")
    p.add_argument("--csv", default=None, help="write the report as CSV")
    _add_common(p)

    p = sub.add_parser("classify", help="model + dataset -> per-frame label stream on stdout")
    p.add_argument("model", help="model file from train")
    p.add_argument("dataset", help=".lwpc dataset of frames to classify")
    p.add_argument("--no-roi", action="store_true", help="extract from the full cloud")
    _add_common(p)

    p = sub.add_parser("density", help="dataset + object -> per-condition boxplot CSV")
    p.add_argument("dataset", help=".lwpc dataset with object tags")
    p.add_argument("--object", required=True,
                   help="object name from the dataset's table, e.g. setup_a_static/target_05")
    p.add_argument("-o", "--out", required=True, help="output boxplot CSV")
    _add_common(p)
    return parser


def cmd_synth(args) -> int:
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        config = load_sim_config(config_path)
    else:
        config = SimConfig(scenes=tuple(default_scenes()), profiles=tuple(default_profiles()))
    frames_per_cell = args.frames_per_cell or config.frames_per_cell
    dataset = generate_dataset(config.scenes, config.profiles, frames_per_cell,
                               args.seed, sensor=config.sensor, models=config.models)
    write_frames(args.out, dataset.samples, object_names=dataset.object_names)
    cells = len(config.scenes) * len(config.profiles)
    print(f"wrote {len(dataset.samples)} frames ({cells} cells x {frames_per_cell}) to {args.out}")
    return 0


def _label_name(truth) -> str:
    return truth.label.display_name if truth is not None else ""


def cmd_extract(args) -> int:
    dataset = read_frames(args.dataset)
    extractor = FrameFeatureExtractor(roi=_roi(args), apply_roi=not args.no_roi,
                                      eigen_mode=args.eigen_mode, append_mask=True)
    both = extractor.transform([s.frame for s in dataset.samples])
    values, masks = both[:, :N_FEATURES], both[:, N_FEATURES:].astype(bool)
    labels = [_label_name(s.truth) for s in dataset.samples]
    scenarios = [s.scenario_id for s in dataset.samples]
    write_feature_table(args.out, values, masks, labels, scenarios)
    if args.points_csv:
        export_points_csv(args.points_csv, (s.frame for s in dataset.samples))
    print(f"wrote {values.shape[0]} feature rows to {args.out}")
    return 0


def _load_labeled_features(path):
    values, masks, labels, scenarios = read_feature_table(path)
    missing = [i for i, lbl in enumerate(labels) if not lbl]
    if missing:
        raise SystemExit(f"error: {path} has {len(missing)} unlabeled rows; "
                         f"train/evaluate need ground truth")
    y = np.array([int(WeatherLabel.from_name(lbl)) for lbl in labels], dtype=np.int64)
    return values, masks, y, labels, scenarios


def cmd_train(args) -> int:
    values, masks, y, labels, scenarios = _load_labeled_features(args.features)

    sid = np.asarray(scenarios, dtype=object)
    test_scenarios = None
    if args.test_scenarios is not None:
        test_scenarios = {s.strip() for s in args.test_scenarios.split(",") if s.strip()}
    test_mask = clf_mod.scenario_split_mask(y, scenarios, args.split_fraction,
                                            test_scenarios=test_scenarios, seed=args.seed)

    if args.classifier == "knn":
        clf = clf_mod.KNearestWeatherClassifier(k=args.k)
    else:
        gamma = args.gamma if args.gamma == "median" else float(args.gamma)
        clf = clf_mod.PairwiseSvmWeatherClassifier(C=args.c, gamma=gamma)
    clf.fit(values[~test_mask], y[~test_mask])
    clf_mod.save_model(clf, args.out)

    train_ids = sorted(set(sid[~test_mask]))
    test_ids = sorted(set(sid[test_mask]))
    print(f"trained {args.classifier} on {int((~test_mask).sum())} rows "
          f"(scenarios {','.join(train_ids)}); held out {int(test_mask.sum())} rows "
          f"(scenarios {','.join(test_ids)}); model -> {args.out}")
    for sel, path in ((~test_mask, args.train_out), (test_mask, args.test_out)):
        if path:
            write_feature_table(path, values[sel], masks[sel],
                                [labels[i] for i in np.flatnonzero(sel)],
                                [scenarios[i] for i in np.flatnonzero(sel)])
    return 0


def cmd_evaluate(args) -> int:
    clf = clf_mod.load_model(args.model)
    values, _, y, _, _ = _load_labeled_features(args.features)
    predictions = clf.predict(values)
    report = class_metrics(confusion_matrix(predictions, y, class_count=3))
    print(format_report(report, WEATHER_CLASS_NAMES))
    if args.csv:
        write_report_csv(report, args.csv, WEATHER_CLASS_NAMES)
    return 0


def cmd_classify(args) -> int:
    clf = clf_mod.load_model(args.model)
    dataset = read_frames(args.dataset)
    extractor = FrameFeatureExtractor(roi=_roi(args), apply_roi=not args.no_roi)
    for sample in dataset.samples:
        start = time.perf_counter()
        features = extractor.transform([sample.frame])
        label = WeatherLabel(int(clf.predict(features)[0]))
        latency_us = int(round((time.perf_counter() - start) * 1e6))
        print(f"{sample.frame.k},{label.display_name},{latency_us}")
    return 0


def cmd_density(args) -> int:
    dataset = read_frames(args.dataset)
    if args.object not in dataset.object_names:
        raise SystemExit(f"error: object {args.object!r} not in dataset "
                         f"(known: {', '.join(dataset.object_names) or 'none'})")
    object_id = dataset.object_names.index(args.object)
    if any(s.truth is None for s in dataset.samples):
        raise SystemExit("error: density needs ground-truth conditions in the dataset")
    # the object is staged in one scenario; other scenarios' frames carry no signal
    scenario = args.object.split("/", 1)[0]
    samples = [s for s in dataset.samples if s.scenario_id == scenario]
    if not samples:
        samples = list(dataset.samples)
    series = density_series(samples, object_id, args.object)
    write_density_csv(series, args.out)
    print(f"wrote density stats for {args.object} "
          f"({len(series.densities)} conditions, clear reference {series.reference_mean:.2f} pts) "
          f"to {args.out}")
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "classify": cmd_classify,
    "density": cmd_density,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except SystemExit:
        raise
    except (OSError, ValueError, RuntimeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
