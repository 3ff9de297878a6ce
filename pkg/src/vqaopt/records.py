"""Per-epoch trial records, results CSV files and their summaries."""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import BELL_COLUMNS, CSV_COLUMNS, FAILURE_EPOCH
from .errors import ResultsFormatError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

INT_COLUMNS = ("n_qubits", "L", "T", "seed", "epoch", "circuit_executions")
FLOAT_COLUMNS = ("lr", "sigma", "noise_lambda", "cost", "accuracy")
CONFIG_COLUMNS = ("experiment", "method", "n_qubits", "L", "T", "lr", "sigma", "noise_lambda")


@dataclass
class TrialRecord:
    """One epoch of one seeded trial.

    ``circuit_executions`` counts gradient executions only, cumulatively;
    ``forward_executions`` counts every other execution (costs, accuracy).
    """

    experiment: str
    method: str
    n_qubits: int
    L: int
    T: int
    lr: float
    sigma: Optional[float]
    noise_lambda: float
    seed: int
    epoch: int
    cost: float
    accuracy: Optional[float] = None
    circuit_executions: int = 0
    forward_executions: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_row(self) -> Dict[str, str]:
        values = self.to_dict()
        return {column: format_value(values[column]) for column in CSV_COLUMNS}

    @property
    def is_failure(self) -> bool:
        return self.epoch == FAILURE_EPOCH


def failure_record(template: TrialRecord) -> TrialRecord:
    """Marker row for a trial that raised; cost and accuracy are missing."""
    values = template.to_dict()
    values.update(epoch=FAILURE_EPOCH, cost=math.nan, accuracy=None,
                  circuit_executions=0, forward_executions=0)
    return TrialRecord(**values)


def format_value(value: Any) -> str:
    if value is None:
        return "nan"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_rows(path: PathLike, columns: Sequence[str], rows: Iterable[Dict[str, str]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    return path


def write_results_csv(path: PathLike, records: Iterable[TrialRecord]) -> Path:
    return _write_rows(path, CSV_COLUMNS, (r.to_row() for r in records))


def write_bell_csv(
    path: PathLike, rows: Iterable[Tuple[float, Optional[int], Sequence[float]]]
) -> Path:
    """Rows of (noise_lambda, shots, [p00, p01, p10, p11])."""
    formatted = []
    for noise_lambda, shots, probs in rows:
        row = {"experiment": "bell_noise", "noise_lambda": format_value(float(noise_lambda)),
               "shots": format_value(shots)}
        for column, value in zip(BELL_COLUMNS[3:], probs):
            row[column] = format_value(float(value))
        formatted.append(row)
    return _write_rows(path, BELL_COLUMNS, formatted)


def read_results_csv(path: PathLike) -> List[Dict[str, Any]]:
    """Rows of a results CSV with typed values; raises ResultsFormatError."""
    path = Path(path)
    try:
        with path.open("r", newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
                raise ResultsFormatError(
                    f"{path}: header {reader.fieldnames} does not match {list(CSV_COLUMNS)}"
                )
            rows = []
            for line, raw in enumerate(reader, start=2):
                if None in raw or any(v is None or v == "" for v in raw.values()):
                    raise ResultsFormatError(f"{path}:{line}: missing cells")
                row: Dict[str, Any] = dict(raw)
                try:
                    for column in INT_COLUMNS:
                        row[column] = int(raw[column])
                    for column in FLOAT_COLUMNS:
                        row[column] = float(raw[column])
                except ValueError as exc:
                    raise ResultsFormatError(f"{path}:{line}: {exc}") from exc
                rows.append(row)
    except csv.Error as exc:
        raise ResultsFormatError(f"{path}: {exc}") from exc
    return rows


def _stats(values: List[float]) -> Optional[Dict[str, float]]:
    finite = [v for v in values if not math.isnan(v)]
    if not finite:
        return None
    arr = np.array(finite)
    return {"mean": float(arr.mean()), "min": float(arr.min()), "max": float(arr.max())}


def _config_key(row: Dict[str, Any]) -> Tuple:
    # nan != nan, so missing sigma is keyed as None
    return tuple(
        None if isinstance(row[c], float) and math.isnan(row[c]) else row[c]
        for c in CONFIG_COLUMNS
    )


def summarize(csv_path: PathLike) -> Dict[str, Any]:
    """Per (config, epoch) cost/accuracy statistics across seeds.

    ``executions`` totals the final cumulative ``circuit_executions`` of every
    trial, per method. Failure marker rows are counted but not summarized.
    """
    rows = read_results_csv(csv_path)
    by_config: Dict[Tuple, Dict[int, List[Dict[str, Any]]]] = defaultdict(lambda: defaultdict(list))
    final_executions: Dict[Tuple, int] = {}
    failures = 0
    for row in rows:
        if row["epoch"] == FAILURE_EPOCH:
            failures += 1
            continue
        key = _config_key(row)
        by_config[key][row["epoch"]].append(row)
        trial = key + (row["seed"],)
        final_executions[trial] = max(final_executions.get(trial, 0), row["circuit_executions"])

    configs = []
    for key, epochs in by_config.items():
        entries = []
        for epoch in sorted(epochs):
            group = epochs[epoch]
            entries.append({
                "epoch": epoch,
                "n_seeds": len(group),
                "cost": _stats([r["cost"] for r in group]),
                "accuracy": _stats([r["accuracy"] for r in group]),
            })
        configs.append({"config": dict(zip(CONFIG_COLUMNS, key)), "epochs": entries})

    executions: Dict[str, int] = defaultdict(int)
    for trial, total in final_executions.items():
        executions[trial[CONFIG_COLUMNS.index("method")]] += total
    logger.debug("Summarized %d rows from %s", len(rows), csv_path)
    return {"configs": configs, "executions": dict(executions), "failures": failures}
