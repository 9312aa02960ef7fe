"""Command-line pipeline wiring.

Subcommands:

  validate : check a labeled manifest, print its stats
  split    : deterministic train/val/test assignment from a manifest
  score    : per-frame fused assessments from any frame source
  watch    : assessments + temporal alert events, optional webhook
  eval     : confusion-matrix report from predictions vs. a manifest
  simulate : render a scenario script to FrameRecord JSONL

Every path flag accepts "-" for stdin/stdout so commands compose as shell
pipelines. Exit codes: 0 success, 1 domain or validation error, 2 I/O
error. score and watch end with a machine-parseable one-line summary on
stderr (frames=... rate_fps=...).
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Iterator, TextIO

from .alerts import AlertKind, AlertTracker, TemporalConfig, serialize_alert_event
from .backends import (
    DetectorBackend,
    ReplayBackend,
    load_script,
    open_backend,
    synthesize,
)
from .errors import ThreatwatchError
from .evaluation import (
    confusion_matrix,
    make_splits,
    parse_prediction,
    per_class_accuracy,
    render_report,
)
from .frames import read_manifest, serialize_frame_record, validate_manifest
from .fusion import FusionConfig, assess_frame, serialize_assessment
from .webhook import WebhookSink

logger = logging.getLogger(__name__)

CONFIG_ENV_VAR = "THREATWATCH_CONFIG"

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO,
               "warning": logging.WARNING, "error": logging.ERROR}


class BadConfig(ThreatwatchError):
    """A config file that is not valid JSON or has unknown/invalid keys."""


@dataclass(frozen=True)
class PipelineConfig:
    """Runtime settings, loaded from one JSON file. Every key is optional;
    omitted ones take the library defaults. Unknown keys are rejected so a
    typo cannot silently run with defaults."""

    fusion: FusionConfig = field(default_factory=FusionConfig)
    temporal: TemporalConfig = field(default_factory=TemporalConfig)
    webhook_url: str | None = None
    log_level: str = "warning"


def _check_keys(data: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise BadConfig(f"unknown {where} key(s): {', '.join(unknown)}")


def _numeric_fields(data: dict, where: str, integer: bool = False) -> dict:
    out = {}
    for key, value in data.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise BadConfig(f"{where}.{key} must be a number")
        if integer and not isinstance(value, int):
            raise BadConfig(f"{where}.{key} must be an integer")
        out[key] = value
    return out


def pipeline_config_from_dict(data: dict) -> PipelineConfig:
    if not isinstance(data, dict):
        raise BadConfig("config must be a JSON object")
    _check_keys(data, {"fusion", "temporal", "webhook_url", "log_level"}, "config")

    fusion = FusionConfig()
    if "fusion" in data:
        raw = data["fusion"]
        if not isinstance(raw, dict):
            raise BadConfig("config.fusion must be an object")
        _check_keys(raw, {"tau_det", "delta_assoc", "epsilon_vert", "tau_pose",
                          "delta_wrist", "margin"}, "fusion")
        try:
            fusion = FusionConfig(**_numeric_fields(raw, "fusion"))
        except ValueError as exc:
            raise BadConfig(str(exc)) from None

    temporal = TemporalConfig()
    if "temporal" in data:
        raw = data["temporal"]
        if not isinstance(raw, dict):
            raise BadConfig("config.temporal must be an object")
        _check_keys(raw, {"n_raise", "n_clear"}, "temporal")
        try:
            temporal = TemporalConfig(**_numeric_fields(raw, "temporal", integer=True))
        except ValueError as exc:
            raise BadConfig(str(exc)) from None

    webhook_url = data.get("webhook_url")
    if webhook_url is not None and not isinstance(webhook_url, str):
        raise BadConfig("config.webhook_url must be a string or null")

    log_level = data.get("log_level", "warning")
    if not isinstance(log_level, str) or log_level.lower() not in _LOG_LEVELS:
        raise BadConfig(f"config.log_level must be one of {sorted(_LOG_LEVELS)}")

    return PipelineConfig(fusion, temporal, webhook_url, log_level.lower())


def load_pipeline_config(path: str | None) -> PipelineConfig:
    """Load config from --config, else from $THREATWATCH_CONFIG, else
    defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV_VAR) or None
    if path is None:
        return PipelineConfig()
    with _in_stream(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise BadConfig(f"config is not valid JSON: {exc}") from None
    return pipeline_config_from_dict(data)


@contextlib.contextmanager
def _in_stream(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdin
    else:
        fh = open(path, encoding="utf-8")
        try:
            yield fh
        finally:
            fh.close()


@contextlib.contextmanager
def _out_stream(path: str) -> Iterator[TextIO]:
    if path == "-":
        yield sys.stdout
    else:
        fh = open(path, "w", encoding="utf-8", newline="\n")
        try:
            yield fh
        finally:
            fh.close()


def _resolve_backend(uri: str, strict: bool) -> DetectorBackend:
    """Open an input source. Known scheme prefixes pass through; anything
    else (including "-") is treated as a JSONL path."""
    if uri.startswith("jsonl:"):
        return ReplayBackend(uri[len("jsonl:"):], on_error="raise" if strict else "skip")
    if uri.startswith(("synthetic:", "extern:")):
        return open_backend(uri)
    return ReplayBackend(uri, on_error="raise" if strict else "skip")


def cmd_validate(args: argparse.Namespace) -> int:
    with _in_stream(args.manifest) as fh:
        entries = read_manifest(fh)
    stats = validate_manifest(entries)
    print(json.dumps(stats.to_dict(), indent=2))
    return 0


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("ratios must be three comma-separated numbers")
    try:
        a, b, c = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError("ratios must be numeric") from None
    return a, b, c


def cmd_split(args: argparse.Namespace) -> int:
    with _in_stream(args.manifest) as fh:
        entries = read_manifest(fh)
    assignment = make_splits(entries, args.seed, args.ratios)
    with _out_stream(args.out) as out:
        for sample_id in sorted(assignment.assignment):
            record = {"sample_id": sample_id,
                      "split": assignment.assignment[sample_id].value}
            out.write(json.dumps(record, separators=(",", ":")) + "\n")
    return 0


def cmd_score(args: argparse.Namespace) -> int:
    config = load_pipeline_config(args.config)
    logging.getLogger().setLevel(_LOG_LEVELS[config.log_level])
    backend = _resolve_backend(args.input, args.strict)
    fusion_cfg = config.fusion
    frames = 0
    started = time.perf_counter()
    with _out_stream(args.out) as out:
        write = out.write
        for record in backend.frames():
            frames += 1
            write(serialize_assessment(assess_frame(record, fusion_cfg)))
            write("\n")
    elapsed = time.perf_counter() - started
    skipped = getattr(backend, "skipped", 0)
    rate = frames / elapsed if elapsed > 0 else 0.0
    print(
        f"summary: frames={frames} skipped={skipped} "
        f"elapsed_s={elapsed:.3f} rate_fps={rate:.1f}",
        file=sys.stderr,
    )
    return 0


def cmd_watch(args: argparse.Namespace) -> int:
    config = load_pipeline_config(args.config)
    logging.getLogger().setLevel(_LOG_LEVELS[config.log_level])
    backend = _resolve_backend(args.input, strict=False)
    webhook_url = args.webhook or config.webhook_url
    sink = WebhookSink(webhook_url) if webhook_url else None
    tracker = AlertTracker(config.temporal)
    fusion_cfg = config.fusion
    frames = 0
    raised = 0
    events = 0
    started = time.perf_counter()
    try:
        with _out_stream(args.alerts) as out:
            for record in backend.frames():
                frames += 1
                assessment = assess_frame(record, fusion_cfg)
                event = tracker.feed(assessment, record.ts_ms)
                if event is not None:
                    events += 1
                    if event.kind is AlertKind.RAISED:
                        raised += 1
                    out.write(serialize_alert_event(event) + "\n")
                    if sink is not None:
                        sink.send(event)
            for event in tracker.flush_all():
                events += 1
                out.write(serialize_alert_event(event) + "\n")
                if sink is not None:
                    sink.send(event)
    finally:
        if sink is not None:
            sink.close()
    elapsed = time.perf_counter() - started
    skipped = getattr(backend, "skipped", 0)
    rate = frames / elapsed if elapsed > 0 else 0.0
    print(
        f"summary: frames={frames} skipped={skipped} dropped={tracker.dropped} "
        f"alerts_raised={raised} events={events} "
        f"elapsed_s={elapsed:.3f} rate_fps={rate:.1f}",
        file=sys.stderr,
    )
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    if args.pred == "-" and args.labels == "-":
        raise ThreatwatchError("predictions and labels cannot both come from stdin")
    with _in_stream(args.labels) as fh:
        labels = read_manifest(fh)
    predictions = []
    with _in_stream(args.pred) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            predictions.append(parse_prediction(line, line_no))
    matrix = confusion_matrix(predictions, labels)
    report = per_class_accuracy(matrix, sources=(args.labels, args.pred))
    with _out_stream(args.report) as out:
        out.write(render_report(report, args.format) + "\n")
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    script = load_script(args.scenario)
    with _out_stream(args.out) as out:
        write = out.write
        for record in synthesize(script, args.seed):
            write(serialize_frame_record(record))
            write("\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="threatwatch",
        description="Streaming knife-threat assessment pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a manifest and print stats")
    p.add_argument("--manifest", required=True, help="manifest JSONL path ('-' = stdin)")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("split", help="deterministic train/val/test assignment")
    p.add_argument("--manifest", required=True, help="manifest JSONL path ('-' = stdin)")
    p.add_argument("--seed", type=int, default=0, help="shuffle seed (default 0)")
    p.add_argument("--ratios", type=_parse_ratios, default=(0.70, 0.15, 0.15),
                   help="train,val,test fractions (default 0.70,0.15,0.15)")
    p.add_argument("--out", default="-", help="output JSONL path ('-' = stdout)")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("score", help="per-frame fused assessments")
    p.add_argument("--input", required=True,
                   help="frame source: a JSONL path ('-' = stdin) or a "
                        "synthetic:/jsonl:/extern: URI")
    p.add_argument("--config", default=None,
                   help=f"pipeline config JSON (default ${CONFIG_ENV_VAR})")
    p.add_argument("--out", default="-", help="assessments JSONL ('-' = stdout)")
    p.add_argument("--strict", action="store_true",
                   help="abort on the first malformed input line instead of "
                        "skipping it with a warning")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("watch", help="assessments + temporal alert events")
    p.add_argument("--input", required=True,
                   help="frame source: a JSONL path ('-' = stdin) or a "
                        "synthetic:/jsonl:/extern: URI")
    p.add_argument("--config", default=None,
                   help=f"pipeline config JSON (default ${CONFIG_ENV_VAR})")
    p.add_argument("--alerts", default="-", help="alert events JSONL ('-' = stdout)")
    p.add_argument("--webhook", default=None,
                   help="POST each alert event to this URL (overrides config)")
    p.set_defaults(func=cmd_watch)

    p = sub.add_parser("eval", help="score predictions against a manifest")
    p.add_argument("--pred", required=True, help="predictions JSONL ('-' = stdin)")
    p.add_argument("--labels", required=True, help="manifest JSONL ('-' = stdin)")
    p.add_argument("--report", default="-", help="report output ('-' = stdout)")
    p.add_argument("--format", choices=("json", "table"), default="table",
                   help="report format (default table)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="render a scenario script to frames")
    p.add_argument("--scenario", required=True, help="scenario JSON path ('-' = stdin)")
    p.add_argument("--seed", type=int, default=None,
                   help="override the script's seed")
    p.add_argument("--out", default="-", help="frames JSONL ('-' = stdout)")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr, level=logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ThreatwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
