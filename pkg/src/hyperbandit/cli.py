"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 I/O or input-data error,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .envs import IngestionError
from .harness.config import ConfigError, ExperimentConfig
from .harness.metrics import MetricError, svd_report
from .harness.outputs import write_outputs, write_svd
from .harness.runner import run
from .hypernet import Hypernetwork
from .policy import NumericalError

log = logging.getLogger("hyperbandit")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3


def _cmd_run(args) -> int:
    config = ExperimentConfig.load(args.config)
    out = args.out or config.output_dir
    if out is None:
        raise ConfigError("no output directory: pass --out or set output_dir")
    summary = write_outputs(run(config), out)
    log.info("normalized accumulated reward %.4f", summary["normalized_accumulated_reward"])
    print(json.dumps({k: summary[k] for k in ("policy", "total_reward", "normalized_accumulated_reward")}))
    return EXIT_OK


def _cmd_svd(args) -> int:
    try:
        net = Hypernetwork.load(args.checkpoint)
    except (KeyError, ValueError) as exc:
        raise OSError(f"cannot load checkpoint {args.checkpoint}: {exc}") from exc
    write_svd(svd_report(net, args.embedding_seed), args.out)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base = ExperimentConfig.load(args.config)
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    values = []
    for seed in range(args.seeds):
        config = base.reseeded(seed)
        result = run(config)
        if args.out:
            summary = write_outputs(result, Path(args.out) / f"seed_{seed}")
            value = summary["normalized_accumulated_reward"]
        else:
            value = result.trace.total_reward / result.baseline.total_reward
        log.info("seed %d: %.4f", seed, value)
        values.append(value)
    report = {
        "seeds": list(range(args.seeds)),
        "normalized_accumulated_reward": values,
        "mean": float(np.mean(values)),
        "std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
    }
    if args.out:
        Path(args.out, "sweep.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    print(f"{report['mean']:.4f} ± {report['std']:.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hyperbandit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment and write its result files")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("svd-report", help="singular values of each period's generated matrix")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--embedding-seed", type=int, default=0)
    p.set_defaults(func=_cmd_svd)

    p = sub.add_parser("sweep", help="repeat an experiment over seeds 0..k-1")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (OSError, IngestionError) as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    except (NumericalError, MetricError, np.linalg.LinAlgError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
