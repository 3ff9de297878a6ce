"""Command-line front end: ``run`` experiments and ``summarize`` results."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from functools import partial
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

from dotenv import load_dotenv

from .config import RunConfig, parse_config
from .constants import (EXPERIMENTS, METHODS, MNIST_TEST_FILES, MNIST_TRAIN_FILES,
                        SUMMARY_FILENAME)
from .datasets import Split, generate_binary_dataset, load_mnist_subset
from .errors import ConfigError, ResultsFormatError
from .records import (TrialRecord, failure_record, summarize, write_bell_csv,
                      write_results_csv)
from .tasks import (ClassificationTask, GroundStateTask, Method, ThetaInit,
                    iter_binary_classification, iter_ground_state, iter_multiclass,
                    run_noise_bell, run_trials)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_RUN_FAILURE = 1
EXIT_CONFIG_ERROR = 2

# flag dest -> RunConfig key, for flags whose names differ
FLAG_KEYS = {"layers": "L", "unroll_steps": "T", "output": "output_path"}


def _find_idx(directory: str, name: str) -> Path:
    for candidate in (Path(directory) / name, Path(directory) / f"{name}.gz"):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(f"{name}[.gz] not found in {directory}")


def _mnist_splits(cfg: RunConfig, seed: int):
    train = load_mnist_subset(
        _find_idx(cfg.mnist_dir, MNIST_TRAIN_FILES[0]), _find_idx(cfg.mnist_dir, MNIST_TRAIN_FILES[1]),
        per_class=cfg.per_class_train, seed=seed, split=Split.TRAIN,
    )
    test = load_mnist_subset(
        _find_idx(cfg.mnist_dir, MNIST_TEST_FILES[0]), _find_idx(cfg.mnist_dir, MNIST_TEST_FILES[1]),
        per_class=cfg.per_class_test, seed=seed, split=Split.TEST,
    )
    return train, test


def iter_config_trial(cfg: RunConfig, seed: int) -> Iterator[TrialRecord]:
    """Epoch records of one seeded trial of a (non-Bell) configuration, as produced."""
    method = Method(cfg.method)
    start = {} if cfg.theta_init is None else {"theta_init": ThetaInit(cfg.theta_init)}
    if cfg.experiment == "ground_state":
        return iter_ground_state(GroundStateTask(
            n_qubits=cfg.n_qubits, L=cfg.L, noise_lambda=cfg.noise_lambda, method=method,
            lr=cfg.lr, sigma=cfg.sigma, T=cfg.T, epochs=cfg.epochs, seed=seed,
            hidden_size=cfg.hidden_size, noise_placement=cfg.noise_placement, **start,
        ))
    if cfg.experiment == "binary":
        train, test = generate_binary_dataset(cfg.n_train, cfg.n_test, seed)
        runner = iter_binary_classification
    elif cfg.experiment == "mnist":
        train, test = _mnist_splits(cfg, seed)
        runner = iter_multiclass
    else:
        raise ConfigError(f"experiment {cfg.experiment!r} has no seeded trials", "experiment")
    return runner(ClassificationTask(
        train=train, test=test, method=method, lr=cfg.lr, sigma=cfg.sigma, T=cfg.T,
        epochs=cfg.epochs, seed=seed, n_qubits=cfg.n_qubits, batch_size=cfg.batch_size,
        hidden_size=cfg.hidden_size, **start,
    ))


def _marker(cfg: RunConfig, seed: int) -> TrialRecord:
    return failure_record(TrialRecord(
        experiment=cfg.experiment, method=cfg.method, n_qubits=cfg.n_qubits, L=cfg.L,
        T=cfg.T, lr=cfg.lr, sigma=cfg.sigma, noise_lambda=cfg.noise_lambda, seed=seed,
        epoch=0, cost=float("nan"),
    ))


def _run_seed(cfg: RunConfig, seed: int) -> Tuple[List[TrialRecord], bool]:
    """Rows of one trial; a failure keeps the finished epochs and appends a marker."""
    rows: List[TrialRecord] = []
    try:
        for record in iter_config_trial(cfg, seed):
            rows.append(record)
    except Exception:
        logger.exception(
            "%s %s seed %d failed after %d epoch row(s)", cfg.experiment, cfg.method, seed, len(rows)
        )
        rows.append(_marker(cfg, seed))
        return rows, False
    return rows, True


def execute(configs: Sequence[RunConfig], workers: int = 1) -> int:
    """Run every configuration and write results; returns the exit status.

    Rows go to ``<output_path>/<experiment>.csv`` in configuration, seed, epoch
    order; each output directory also gets a ``summary.json``. Bell-noise runs
    write one probability row per configuration to ``bell_noise.csv``.
    """
    status = EXIT_OK
    records: Dict[Tuple[str, str], List[TrialRecord]] = defaultdict(list)
    bell_rows: Dict[str, List[Tuple[float, Optional[int], Any]]] = defaultdict(list)

    for cfg in configs:
        if cfg.experiment == "bell_noise":
            (probs,) = run_noise_bell([cfg.noise_lambda], shots=cfg.shots, seed=cfg.seeds[0])
            bell_rows[cfg.output_path].append((cfg.noise_lambda, cfg.shots, probs))
            continue
        logger.info("Running %s %s over %d seed(s)", cfg.experiment, cfg.method, len(cfg.seeds))
        outcomes = run_trials(partial(_run_seed, cfg), cfg.seeds, workers)
        for trial_records, ok in outcomes:
            records[(cfg.output_path, cfg.experiment)].extend(trial_records)
            if not ok:
                status = EXIT_RUN_FAILURE

    summaries: Dict[str, Dict[str, Any]] = defaultdict(dict)
    for (output_path, experiment), rows in records.items():
        csv_path = write_results_csv(Path(output_path) / f"{experiment}.csv", rows)
        try:
            summaries[output_path][experiment] = summarize(csv_path)
        except ResultsFormatError:
            logger.exception("Could not summarize %s", csv_path)
            status = EXIT_RUN_FAILURE
        logger.info("Wrote %d rows to %s", len(rows), csv_path)
    for output_path, rows in bell_rows.items():
        csv_path = write_bell_csv(Path(output_path) / "bell_noise.csv", rows)
        logger.info("Wrote %d rows to %s", len(rows), csv_path)
    for output_path, summary in summaries.items():
        summary_path = Path(output_path) / SUMMARY_FILENAME
        summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True), encoding="utf-8")
    return status


def flags_to_mapping(args: argparse.Namespace) -> Dict[str, Any]:
    """Run-config mapping from parsed ``run`` flags; unset flags are omitted."""
    skip = {"command", "config", "workers", "verbose", "quiet"}
    mapping: Dict[str, Any] = {}
    for dest, value in vars(args).items():
        if dest in skip or value is None:
            continue
        if isinstance(value, list) and len(value) == 1 and dest != "seeds":
            value = value[0]
        mapping[FLAG_KEYS.get(dest, dest)] = value
    return mapping


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqaopt",
        description="Compare GRAD, LL and LLES optimizers on simulated variational circuits.",
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run experiments from a config file or flags")
    run.add_argument("--config", help="JSON run configuration; other run flags are ignored")
    run.add_argument("--experiment", choices=EXPERIMENTS)
    run.add_argument("--method", nargs="+", type=str.upper, choices=METHODS)
    run.add_argument("--n-qubits", dest="n_qubits", nargs="+", type=int)
    run.add_argument("--layers", nargs="+", type=int)
    run.add_argument("-T", "--unroll-steps", dest="unroll_steps", nargs="+", type=int)
    run.add_argument("--epochs", nargs="+", type=int)
    run.add_argument("--lr", nargs="+", type=float)
    run.add_argument("--sigma", nargs="+", help='angle, e.g. 0.13 or "pi/24"')
    run.add_argument("--noise-lambda", dest="noise_lambda", nargs="+", type=float)
    run.add_argument("--seeds", nargs="+", type=int)
    run.add_argument("--output", help="output directory (default: $VQAOPT_OUTPUT_DIR or results)")
    run.add_argument("--hidden-size", dest="hidden_size", type=int)
    run.add_argument("--n-train", dest="n_train", type=int)
    run.add_argument("--n-test", dest="n_test", type=int)
    run.add_argument("--batch-size", dest="batch_size", type=int)
    run.add_argument("--noise-placement", dest="noise_placement", choices=("final", "per_layer"),
                     help="where the damping channel acts (default: per_layer)")
    run.add_argument("--theta-init", dest="theta_init", choices=("uniform", "zero"),
                     help="starting parameters (default: uniform for ground_state, zero otherwise)")
    run.add_argument("--shots", type=int)
    run.add_argument("--mnist-dir", dest="mnist_dir")
    run.add_argument("--per-class-train", dest="per_class_train", type=int)
    run.add_argument("--per-class-test", dest="per_class_test", type=int)
    run.add_argument("--workers", type=int, default=1, help="parallel seeds")

    summ = sub.add_parser("summarize", help="print per-epoch statistics of a results CSV")
    summ.add_argument("csv_path")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if args.command == "summarize":
        try:
            summary = summarize(args.csv_path)
        except (ResultsFormatError, OSError) as exc:
            logger.error("%s", exc)
            return EXIT_RUN_FAILURE
        print(json.dumps(summary, indent=2, sort_keys=True))
        return EXIT_OK

    try:
        if args.config:
            configs = parse_config(args.config)
        else:
            if args.experiment is None:
                parser.error("run needs --config or --experiment")
            configs = parse_config(flags_to_mapping(args))
    except (ConfigError, OSError) as exc:
        logger.error("Invalid configuration: %s", exc)
        return EXIT_CONFIG_ERROR
    return execute(configs, workers=args.workers)


if __name__ == "__main__":
    sys.exit(main())
