"""Command-line entry points."""

from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from . import run_experiment
from .checkpoint import load_checkpoint
from .config import load_config
from .const import (
    EXIT_CONFIG_ERROR,
    EXIT_DATA_ERROR,
    EXIT_FAILURE,
    EXIT_GOAL_UNMET,
    EXIT_OK,
)
from .controller import CpgState, evaluate
from .data import Dataset, load_csv, load_idx, restrict_to_classes
from .errors import (
    CheckpointError,
    ConfigError,
    CpgError,
    DataError,
    UnknownTaskError,
)
from .report import emit_report, size_report

_LOGGER = logging.getLogger(__name__)


def _cmd_run(args: argparse.Namespace) -> int:
    _, report = run_experiment(load_config(args.config))
    print(
        f"average {100 * report.average:.1f}%  exp {report.expansion:.2f}  "
        f"red {report.redundancy:.2f}  ({report.wall_time:.1f}s)"
    )
    if report.any_best_effort:
        flagged = [i for i, flag in enumerate(report.best_effort, start=1) if flag]
        _LOGGER.warning("Tasks %s missed their accuracy goal", flagged)
        return EXIT_GOAL_UNMET
    return EXIT_OK


def _load_eval_data(data: Path, labels: Path | None) -> Dataset:
    if data.suffix.lower() == ".csv":
        return load_csv(data)
    if labels is None:
        raise DataError("IDX evaluation data needs --labels")
    return load_idx(data, labels)


def _cmd_eval(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.checkpoint)
    record = state.record(args.task)
    dataset = _load_eval_data(args.data, args.labels)
    if record.classes and max(record.classes) >= dataset.n_classes:
        raise DataError(
            f"Task {args.task} covers classes {record.classes}, data has "
            f"{dataset.n_classes}"
        )
    if record.classes:
        dataset = restrict_to_classes(dataset, record.classes)
    accuracy = evaluate(state, args.task, dataset)
    print(f"task {args.task}: accuracy {100 * accuracy:.1f}% on {len(dataset)} samples")
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    state = load_checkpoint(args.checkpoint)
    text = emit_report(
        state.records,
        state.net.n_params,
        state.n0,
        state.ledger.free_count,
        args.out,
    )
    print(text, end="")
    return EXIT_OK


def format_inspection(state: CpgState) -> str:
    """Return ledger, mask and size statistics as text."""
    lines = [
        f"parameters {state.net.n_params} (initial {state.n0}), "
        f"free {state.ledger.free_count}",
        f"exp {state.expansion:.2f}  red {state.redundancy:.2f}",
    ]
    for record in state.records:
        owned = state.ledger.owned_by(record.task_id).size
        lines.append(
            f"task {record.task_id}: owns {owned}, picks {int(record.mask.sum())}"
            f"/{record.mask.size}, accuracy {100 * record.achieved:.1f}% "
            f"(goal {100 * record.goal.value:.1f}%)"
            + (" best-effort" if record.best_effort else "")
        )
    sizes = size_report(state)
    lines.append(
        "bytes: " + ", ".join(f"{name} {count}" for name, count in sizes.items())
    )
    return "\n".join(lines) + "\n"


def _cmd_inspect(args: argparse.Namespace) -> int:
    print(format_inspection(load_checkpoint(args.checkpoint)), end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    """Return the ``cpg`` argument parser."""
    parser = argparse.ArgumentParser(
        prog="cpg", description="Compacting, picking and growing continual learning"
    )
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Learn every configured task in sequence")
    run.add_argument("--config", type=Path, required=True)
    run.set_defaults(handler=_cmd_run)

    evaluate_cmd = sub.add_parser("eval", help="Evaluate one committed task")
    evaluate_cmd.add_argument("--checkpoint", type=Path, required=True)
    evaluate_cmd.add_argument("--task", type=int, required=True)
    evaluate_cmd.add_argument(
        "--data", type=Path, required=True, help="CSV file or IDX images file"
    )
    evaluate_cmd.add_argument("--labels", type=Path, help="IDX labels file")
    evaluate_cmd.set_defaults(handler=_cmd_eval)

    report = sub.add_parser("report", help="Write the report CSV of a checkpoint")
    report.add_argument("--checkpoint", type=Path, required=True)
    report.add_argument("--out", type=Path, required=True)
    report.set_defaults(handler=_cmd_report)

    inspect = sub.add_parser("inspect", help="Print ledger and mask statistics")
    inspect.add_argument("--checkpoint", type=Path, required=True)
    inspect.set_defaults(handler=_cmd_inspect)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.handler(args))
    except ConfigError as err:
        _LOGGER.error("Configuration error: %s", err)
        return EXIT_CONFIG_ERROR
    except (DataError, CheckpointError, UnknownTaskError) as err:
        _LOGGER.error("%s", err)
        return EXIT_DATA_ERROR
    except CpgError as err:
        _LOGGER.error("Run failed: %s", err)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
