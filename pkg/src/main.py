"""
HomeSentinel - Main Application Entry Point

Command-line interface for the home monitor: live or recorded runs,
scenario simulation, fall-classifier training and evaluation, event
reports and a webhook check.

Exit codes: 0 success, 1 runtime I/O failure, 2 invalid configuration,
input data or usage.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to path for imports
project_root = str(Path(__file__).parent.parent)
if project_root not in sys.path:
    sys.path.insert(0, project_root)

import numpy as np

from src.detectors.fall_classifier import classify_day, evaluate, load_model, save_model, train
from src.simulator import load_script, write_scenario
from src.tools.dataset_loader_tool import full_frame_roi, load_dataset, load_mask
from src.tools.frame_io import FRAME_SUFFIXES, ColorFrame, FrameSource, encode_pnm
from src.tools.webhook_tool import send_test_message
from src.utils.config_loader import (
    ClassifierSettings,
    ConfigurationError,
    SentinelConfig,
    config_loader,
)
from src.workflow.pipeline import run_monitor
from src.workflow.recorder import render_table, summarize

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2


def setup_logging(verbose: bool = False) -> None:
    level_name = "DEBUG" if verbose else (config_loader.get_env("LOG_LEVEL", "INFO") or "INFO")
    level = getattr(logging, level_name.upper(), logging.INFO)
    logging.basicConfig(level=level, format="%(asctime)s - %(levelname)s - %(message)s")
    logging.getLogger().setLevel(level)


def load_monitor_config(args: argparse.Namespace) -> SentinelConfig:
    """Load the config named on the command line and apply source/output overrides."""
    config = config_loader.get_sentinel_config(args.config)
    updates = {}
    if getattr(args, "source", None):
        source = Path(args.source)
        field = "stream" if source.is_file() else "directory"
        updates["source"] = config.source.model_copy(
            update={"directory": None, "stream": None, field: source}
        )
    if getattr(args, "output", None):
        updates["output_dir"] = Path(args.output)
    return config.model_copy(update=updates) if updates else config


def cmd_run(args: argparse.Namespace) -> int:
    config = load_monitor_config(args)
    summary = run_monitor(config, wall_clock=args.wall_clock)
    print(summary.render())
    if summary.record_failures:
        logger.warning(f"{summary.record_failures} events could not be recorded")
        return EXIT_IO
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    script = load_script(args.script)
    config = config_loader.get_sentinel_config(args.config)
    outcome = write_scenario(script, config, args.out_dir)
    print(f"{script.frames} frames, {len(outcome.events)} expected events -> {args.out_dir}")
    return EXIT_OK


def _classifier_settings(args: argparse.Namespace) -> ClassifierSettings:
    if args.config:
        return config_loader.get_sentinel_config(args.config).classifier
    return ClassifierSettings()


def cmd_train(args: argparse.Namespace) -> int:
    settings = _classifier_settings(args)
    result = load_dataset(args.dataset)
    if not result["success"]:
        logger.error(f"❌ Cannot read dataset: {result['error']}")
        return EXIT_IO

    model = train(
        result["samples"],
        C=args.C if args.C is not None else settings.C,
        tolerance=settings.tolerance,
        max_iterations=settings.max_iterations,
    )
    model_path = Path(args.model) if args.model else settings.model_path
    save_model(model, model_path)

    stats = model.stats
    assert stats is not None
    print(f"objective        {stats.objective:.6f}")
    print(f"iterations       {stats.iterations}")
    print(f"support vectors  {stats.support_vectors}")
    print(f"fall samples     {model.count_fall}")
    print(f"stand samples    {model.count_stand}")
    print(f"converged        {'yes' if stats.converged else 'no'}")
    print(f"model            {model_path}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    result = load_dataset(args.dataset)
    if not result["success"]:
        logger.error(f"❌ Cannot read dataset: {result['error']}")
        return EXIT_IO

    report = evaluate(model, result["samples"])
    print(report.render_table())
    Path(args.tsv).write_text(report.to_tsv(), encoding="utf-8")
    logger.info(f"Evaluation written to {args.tsv}")
    return EXIT_OK


def cmd_classify(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    paths = sorted(
        p for p in Path(args.mask_dir).iterdir() if p.suffix.lower() in FRAME_SUFFIXES
    )
    masks = [(load_mask(p), p.name) for p in paths]
    results = []
    if masks:
        results = classify_day(model, masks, full_frame_roi(masks[0][0]), args.out_dir)
    print(f"{len(results)} masks classified -> {args.out_dir}")
    return EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    print(render_table(summarize(args.log, args.days)))
    return EXIT_OK


def cmd_dump_frame(args: argparse.Namespace) -> int:
    config = load_monitor_config(args)
    pair = FrameSource(config.source.path, period_ms=config.source.period_ms).next_frame()
    if pair is None:
        logger.error(f"❌ Source {config.source.path} has no frames")
        return EXIT_IO
    color: ColorFrame = pair[0]
    Path(args.out).write_bytes(encode_pnm(color))
    print(f"Frame 0 ({color.width}x{color.height}) written to {args.out}")
    return EXIT_OK


def cmd_notify_test(args: argparse.Namespace) -> int:
    config = config_loader.get_sentinel_config(args.config)
    settings = config.notification
    if not settings.webhook_url:
        raise ConfigurationError("notification.webhook_url is not configured")

    if args.image:
        image = Path(args.image).read_bytes()
    else:
        blank = np.zeros((config.source.height, config.source.width, 3), dtype=np.uint8)
        image = encode_pnm(ColorFrame(blank))

    result = send_test_message(
        settings.webhook_url, settings.message, image, timeout_s=settings.timeout_s
    )
    if result["success"]:
        print(f"Webhook accepted the test message ({result.get('status_code')})")
        return EXIT_OK
    print(f"Webhook test failed: {result.get('error')}")
    return EXIT_IO


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sentinel", description="Event-triggered home monitor for elderly relatives"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p: argparse.ArgumentParser) -> None:
        p.add_argument(
            "-c", "--config", default=None, help="Config file (default: config/sentinel.yaml)"
        )

    run = sub.add_parser("run", help="Calibrate and monitor the configured source")
    add_config(run)
    run.add_argument("--source", help="Frame directory or stream file overriding the config")
    run.add_argument("--output", help="Output directory overriding the config")
    run.add_argument(
        "--wall-clock", action="store_true", help="Timestamp events with the current time"
    )
    run.set_defaults(handler=cmd_run)

    simulate = sub.add_parser("simulate", help="Render a scenario script and its oracle")
    add_config(simulate)
    simulate.add_argument("script", help="Scenario YAML file")
    simulate.add_argument("out_dir", help="Directory for frames and expected.tsv")
    simulate.set_defaults(handler=cmd_simulate)

    train_cmd = sub.add_parser("train", help="Train the fall/stand classifier")
    add_config(train_cmd)
    train_cmd.add_argument("dataset", help="Tab-separated label/mask file")
    train_cmd.add_argument("--model", help="Model output path (default from config)")
    train_cmd.add_argument("--C", type=float, default=None, help="Box constraint")
    train_cmd.set_defaults(handler=cmd_train)

    evaluate_cmd = sub.add_parser("evaluate", help="Evaluate a model on a labelled dataset")
    evaluate_cmd.add_argument("model", help="svm-v1 model file")
    evaluate_cmd.add_argument("dataset", help="Tab-separated label/mask file")
    evaluate_cmd.add_argument("--tsv", default="evaluation.tsv", help="TSV report path")
    evaluate_cmd.set_defaults(handler=cmd_evaluate)

    classify = sub.add_parser("classify", help="Route a day of masks to fall/stand lists")
    classify.add_argument("model", help="svm-v1 model file")
    classify.add_argument("mask_dir", help="Directory of mask images")
    classify.add_argument("out_dir", help="Directory for fall.list, stand.list, skip.list")
    classify.set_defaults(handler=cmd_classify)

    report = sub.add_parser("report", help="Summarize an events.log")
    report.add_argument("log", help="Path to events.log")
    report.add_argument("--days", type=int, required=True, help="Experiment days")
    report.set_defaults(handler=cmd_report)

    dump = sub.add_parser("dump-frame", help="Write the first source frame for ROI selection")
    add_config(dump)
    dump.add_argument("--source", help="Frame directory or stream file overriding the config")
    dump.add_argument("out", help="Output .ppm path")
    dump.set_defaults(handler=cmd_dump_frame)

    notify = sub.add_parser("notify-test", help="Send one test message through the webhook")
    add_config(notify)
    notify.add_argument("--image", help="Image file to attach (default: blank frame)")
    notify.set_defaults(handler=cmd_notify_test)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    setup_logging(args.verbose)
    try:
        return args.handler(args)
    except ValueError as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        logger.error(f"❌ {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
