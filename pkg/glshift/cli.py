from __future__ import annotations

import argparse
import json
import logging
import os
from argparse import ArgumentParser
from collections.abc import Sequence

from glshift.assess_bounds import any_violated, assess_bounds
from glshift.compare_frameworks import compare_frameworks
from glshift.config import CHECK_NAMES, SUITES, ExperimentConfig
from glshift.distributions import DiscreteDistribution
from glshift.divergences import tv_distance
from glshift.errors import ClassAbsentError, NonFiniteError, SolverDidNotConverge, TrainingDiverged, ValidationError
from glshift.model import ModelParams
from glshift.shiftgen import subsample_protocol
from glshift.training import train
from glshift.utils.data import (
    read_json,
    read_predictions,
    read_samples,
    read_target_samples,
    write_frame,
    write_json,
    write_samples,
)
from glshift.utils.helpers import setup_default_logger
from glshift.verification_suites import bound_suite
from glshift.weights import bbse_solve, confusion_plugin, pred_marginal

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_DIVERGED = 3
EXIT_VIOLATED = 4


def get_argparser() -> ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="glshift",
        description="Generalized label shift: scenarios, training, weight estimation and bound verification",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="Experiment configuration JSON")
    common.add_argument("--out-dir", default=None, help="Output directory (overrides out_dir)")
    common.add_argument("--seed", default=None, type=int, help="Seed (overrides seed and train.seed)")
    common.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE", help="Override a config entry"
    )
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging and progress bars")

    commands = parser.add_subparsers(dest="command", required=True)
    formatter = argparse.ArgumentDefaultsHelpFormatter
    commands.add_parser("gen", parents=[common], formatter_class=formatter, help="Generate a scenario and samples")

    train_parser = commands.add_parser("train", parents=[common], formatter_class=formatter, help="Train a model")
    train_parser.add_argument("--source", default=None, help="Source sample CSV (generated when omitted)")
    train_parser.add_argument(
        "--target", default=None, help="Target sample CSV, labels optional (generated when omitted)"
    )

    weights_parser = commands.add_parser(
        "weights", parents=[common], formatter_class=formatter, help="Estimate importance weights from predictions"
    )
    weights_parser.add_argument("--source", required=True, help="Source CSV with label and pred columns")
    weights_parser.add_argument("--target", required=True, help="Target CSV with a pred column")
    weights_parser.add_argument("--method", default="qp", choices=["qp", "pinv"], help="BBSE solver")
    weights_parser.add_argument("--n-classes", default=None, type=int, help="Number of classes (scenario.n_classes)")

    verify_parser = commands.add_parser("verify", parents=[common], formatter_class=formatter, help="Check the bounds")
    verify_parser.add_argument("--suite", default=None, choices=SUITES, help="Suite (overrides verify.suite)")
    verify_parser.add_argument("--check", dest="checks", action="append", choices=CHECK_NAMES, help="Run only these checks")
    verify_parser.add_argument("--model", default=None, help="Model JSON used by the risk-based checks")

    commands.add_parser("compare", parents=[common], formatter_class=formatter, help="Compare the frameworks")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides += [f"seed={args.seed}", f"train.seed={args.seed}"]
    if args.out_dir is not None:
        overrides.append(f"out_dir={json.dumps(args.out_dir)}")
    return cfg.with_overrides(overrides) if overrides else cfg


def cmd_gen(cfg: ExperimentConfig) -> int:
    scenario = cfg.scenario.build(cfg.seed)
    source, target = scenario.sample(cfg.scenario.n_source, cfg.scenario.n_target, cfg.seed)
    if cfg.scenario.subsample_k1 > 0:
        source = subsample_protocol(source, cfg.scenario.subsample_k1, cfg.scenario.subsample_rate, cfg.seed)

    os.makedirs(cfg.out_dir, exist_ok=True)
    write_json(os.path.join(cfg.out_dir, "scenario.json"), scenario.to_dict())
    write_samples(os.path.join(cfg.out_dir, "source.csv"), source)
    write_samples(os.path.join(cfg.out_dir, "target.csv"), target)
    logger.info(f"Wrote {len(source)} source and {len(target)} target samples to {cfg.out_dir}")

    print(f"P_Y = {scenario.source.label_dist.to_list()}")
    print(f"Q_Y = {scenario.target.label_dist.to_list()}")
    print(f"d_TV(P_Y,Q_Y) = {tv_distance(scenario.source.label_dist, scenario.target.label_dist):.4f}")
    print(f"d_TV(P_Y,Q_Y) empirical = {tv_distance(source.label_distribution(), target.label_distribution()):.4f}")
    return EXIT_OK


def cmd_train(cfg: ExperimentConfig, source_path: str | None, target_path: str | None) -> int:
    n_classes = cfg.scenario.n_classes
    if source_path is None or target_path is None:
        scenario = cfg.scenario.build(cfg.seed)
        source, target = scenario.sample(cfg.scenario.n_source, cfg.scenario.n_target, cfg.seed)
        if cfg.scenario.subsample_k1 > 0:
            source = subsample_protocol(source, cfg.scenario.subsample_k1, cfg.scenario.subsample_rate, cfg.seed)
    if source_path is not None:
        source = read_samples(source_path, n_classes)
    labelled = True
    if target_path is not None:
        target, labelled = read_target_samples(target_path, n_classes)

    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        result = train(source, target, cfg.train, target_labels_known=labelled)
    except TrainingDiverged as e:
        write_frame(os.path.join(cfg.out_dir, "trace.csv"), e.trace.to_frame())
        raise
    write_json(os.path.join(cfg.out_dir, "model.json"), result.params.to_dict())
    write_json(os.path.join(cfg.out_dir, "weights.json"), result.weights.to_dict())
    write_frame(os.path.join(cfg.out_dir, "trace.csv"), result.trace.to_frame())
    last = result.trace.rows[-1]
    logger.info(f"Finished training: target accuracy {last.tgt_acc:.4f}, w = {result.weights.w.tolist()}")
    return EXIT_OK


def cmd_weights(cfg: ExperimentConfig, source_path: str, target_path: str, method: str, n_classes: int | None) -> int:
    K = n_classes if n_classes is not None else cfg.scenario.n_classes
    labels, source_preds = read_predictions(source_path, require_labels=True)
    _, target_preds = read_predictions(target_path)
    assert labels is not None
    weights = bbse_solve(
        pred_marginal(target_preds, K),
        confusion_plugin(source_preds, labels, K),
        DiscreteDistribution.from_labels(labels, K),
        method,  # type: ignore[arg-type]
    )
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "weights.json")
    write_json(path, weights.to_dict())
    logger.info(f"Wrote weights {weights.w.tolist()} to {path}")
    return EXIT_OK


def cmd_verify(cfg: ExperimentConfig, verbose: bool) -> int:
    model = ModelParams.from_dict(read_json(cfg.verify.model_path)) if cfg.verify.model_path else None
    checks = bound_suite(cfg.verify.suite, cfg.scenario, cfg.verify, cfg.seed, model)
    reports = assess_bounds(checks, cfg.out_dir, cfg.verify.n_jobs, verbose=int(verbose))
    return EXIT_VIOLATED if any_violated(reports) else EXIT_OK


def cmd_compare(cfg: ExperimentConfig, verbose: bool) -> int:
    scenario = cfg.scenario.build(cfg.seed)
    compare_frameworks(scenario, cfg.scenario, cfg.train, cfg.compare, cfg.out_dir, verbose=int(verbose))
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    """
    Entry point of the ``glshift`` command.

    Exit codes: 0 success, 2 invalid input or configuration, 3 numeric divergence, 4 a bound
    check was violated.
    """
    args = get_argparser().parse_args(argv)
    setup_default_logger(logging.DEBUG if args.verbose else logging.INFO)
    try:
        if args.command == "verify":
            extra = []
            if args.suite is not None:
                extra.append(f"verify.suite={json.dumps(args.suite)}")
            if args.checks:
                extra.append(f"verify.checks={json.dumps(args.checks)}")
            if args.model is not None:
                extra.append(f"verify.model_path={json.dumps(args.model)}")
            args.overrides = [*args.overrides, *extra]
        cfg = load_config(args)

        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg, args.source, args.target)
        if args.command == "weights":
            return cmd_weights(cfg, args.source, args.target, args.method, args.n_classes)
        if args.command == "verify":
            return cmd_verify(cfg, args.verbose)
        return cmd_compare(cfg, args.verbose)
    except (SolverDidNotConverge, TrainingDiverged, NonFiniteError) as e:
        logger.error(str(e))
        return EXIT_DIVERGED
    except (ValidationError, ClassAbsentError, OSError) as e:
        logger.error(str(e))
        return EXIT_INVALID


if __name__ == "__main__":
    raise SystemExit(main())
