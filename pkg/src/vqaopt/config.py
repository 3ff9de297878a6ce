"""Run configurations: JSON files or CLI flags expanded into RunConfig grids."""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
import re
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

from .constants import (DEFAULT_BINARY_QUBITS, DEFAULT_EPOCHS, DEFAULT_GROUND_LAYERS,
                        DEFAULT_GROUND_QUBITS, DEFAULT_LR, DEFAULT_N_TEST,
                        DEFAULT_N_TRAIN, DEFAULT_OUTPUT_DIR, DEFAULT_SEEDS,
                        DEFAULT_T, BINARY_LAYERS, EXPERIMENTS, MAX_HIDDEN_SIZE,
                        MAX_QUBITS, METHODS, MNIST_BATCH_SIZE, MNIST_LAYERS,
                        MNIST_PER_CLASS_TEST, MNIST_PER_CLASS_TRAIN, MNIST_QUBITS,
                        OUTPUT_DIR_ENV)
from .errors import ConfigError

logger = logging.getLogger(__name__)

# Keys that may hold a list; the cross product is taken in this order.
GRID_FIELDS = ("method", "n_qubits", "L", "T", "epochs", "lr", "sigma", "noise_lambda")
NOISE_PLACEMENTS = ("final", "per_layer")
THETA_INITS = ("uniform", "zero")

_PI_LITERAL = re.compile(
    r"^\s*(?:(?P<num>\d+(?:\.\d*)?)\s*\*?\s*)?pi\s*(?:/\s*(?P<den>\d+(?:\.\d*)?))?\s*$"
)

DEFAULT_QUBITS = {
    "ground_state": DEFAULT_GROUND_QUBITS,
    "binary": DEFAULT_BINARY_QUBITS,
    "mnist": MNIST_QUBITS,
    "bell_noise": 2,
}
DEFAULT_LAYERS = {
    "ground_state": DEFAULT_GROUND_LAYERS,
    "binary": BINARY_LAYERS,
    "mnist": MNIST_LAYERS,
    "bell_noise": 1,
}


@dataclass(frozen=True)
class RunConfig:
    """One fully expanded run; executed once per seed."""

    experiment: str
    method: str = "GRAD"
    n_qubits: int = DEFAULT_GROUND_QUBITS
    L: int = DEFAULT_GROUND_LAYERS
    T: int = DEFAULT_T
    epochs: int = DEFAULT_EPOCHS["ground_state"]
    lr: float = DEFAULT_LR
    sigma: Optional[float] = None
    noise_lambda: float = 0.0
    seeds: Tuple[int, ...] = DEFAULT_SEEDS
    output_path: str = DEFAULT_OUTPUT_DIR
    hidden_size: Optional[int] = None
    n_train: int = DEFAULT_N_TRAIN
    n_test: int = DEFAULT_N_TEST
    batch_size: Optional[int] = None
    noise_placement: str = "per_layer"
    # None keeps the experiment's own start: uniform for ground state, zero otherwise
    theta_init: Optional[str] = None
    shots: Optional[int] = None
    mnist_dir: Optional[str] = None
    per_class_train: int = MNIST_PER_CLASS_TRAIN
    per_class_test: int = MNIST_PER_CLASS_TEST

    def to_dict(self) -> Dict[str, Any]:
        values = asdict(self)
        values["seeds"] = list(self.seeds)
        return values


FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def parse_angle(value: Any, key_path: str) -> float:
    """A number or a "pi", "pi/N", "k*pi/N" literal."""
    if isinstance(value, bool):
        raise ConfigError(f"expected a number, got {value!r}", key_path)
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        match = _PI_LITERAL.match(value)
        if match:
            num = float(match.group("num") or 1.0)
            den = float(match.group("den") or 1.0)
            if den == 0:
                raise ConfigError(f"zero denominator in {value!r}", key_path)
            return num * math.pi / den
        try:
            return float(value)
        except ValueError:
            pass
    raise ConfigError(f"expected a number or pi literal, got {value!r}", key_path)


def _as_int(value: Any, key_path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            return int(value)
        raise ConfigError(f"expected an integer, got {value!r}", key_path)
    return value


def _as_float(value: Any, key_path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        if isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        raise ConfigError(f"expected a number, got {value!r}", key_path)
    return float(value)


def _optional(convert):
    def wrapped(value: Any, key_path: str):
        return None if value is None else convert(value, key_path)
    return wrapped


def _as_str(value: Any, key_path: str) -> str:
    if not isinstance(value, str):
        raise ConfigError(f"expected a string, got {value!r}", key_path)
    return value


def _as_seeds(value: Any, key_path: str) -> Tuple[int, ...]:
    if isinstance(value, int) and not isinstance(value, bool):
        value = [value]
    if not isinstance(value, (list, tuple)) or not value:
        raise ConfigError("seeds must be a non-empty list of integers", key_path)
    seeds = tuple(_as_int(s, f"{key_path}[{i}]") for i, s in enumerate(value))
    if any(s < 0 for s in seeds):
        raise ConfigError("seeds must be non-negative", key_path)
    return seeds


CONVERTERS = {
    "experiment": _as_str,
    "method": _as_str,
    "n_qubits": _as_int,
    "L": _as_int,
    "T": _as_int,
    "epochs": _as_int,
    "lr": _as_float,
    "sigma": _optional(parse_angle),
    "noise_lambda": _as_float,
    "seeds": _as_seeds,
    "output_path": _as_str,
    "hidden_size": _optional(_as_int),
    "n_train": _as_int,
    "n_test": _as_int,
    "batch_size": _optional(_as_int),
    "noise_placement": _as_str,
    "theta_init": _optional(_as_str),
    "shots": _optional(_as_int),
    "mnist_dir": _optional(_as_str),
    "per_class_train": _as_int,
    "per_class_test": _as_int,
}


def _default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR


def _experiment_defaults(experiment: str) -> Dict[str, Any]:
    return {
        "n_qubits": DEFAULT_QUBITS[experiment],
        "L": DEFAULT_LAYERS[experiment],
        "epochs": DEFAULT_EPOCHS[experiment],
        "lr": 0.01 if experiment in ("binary", "mnist") else DEFAULT_LR,
        "batch_size": MNIST_BATCH_SIZE if experiment == "mnist" else None,
        "output_path": _default_output_dir(),
    }


def _key_path(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _validate(cfg: RunConfig, path: str) -> RunConfig:
    def fail(message: str, key: str) -> ConfigError:
        return ConfigError(message, _key_path(path, key))

    if cfg.experiment not in EXPERIMENTS:
        raise fail(f"unknown experiment {cfg.experiment!r}; expected one of {EXPERIMENTS}", "experiment")
    if cfg.method not in METHODS:
        raise fail(f"unknown method {cfg.method!r}; expected one of {METHODS}", "method")
    if not cfg.lr > 0:
        raise fail(f"lr must be positive, got {cfg.lr}", "lr")
    if cfg.method == "LLES" and cfg.sigma is None:
        raise fail("sigma is required for LLES", "sigma")
    if cfg.sigma is not None and not cfg.sigma > 0:
        raise fail(f"sigma must be positive, got {cfg.sigma}", "sigma")
    if not 0.0 <= cfg.noise_lambda <= 1.0:
        raise fail(f"noise_lambda must lie in [0, 1], got {cfg.noise_lambda}", "noise_lambda")
    if cfg.T < 1:
        raise fail(f"T must be >= 1, got {cfg.T}", "T")
    if cfg.epochs < 0:
        raise fail(f"epochs must be >= 0, got {cfg.epochs}", "epochs")
    if cfg.noise_placement not in NOISE_PLACEMENTS:
        raise fail(f"noise_placement must be one of {NOISE_PLACEMENTS}", "noise_placement")
    if cfg.theta_init is not None and cfg.theta_init not in THETA_INITS:
        raise fail(f"theta_init must be one of {THETA_INITS}", "theta_init")
    if cfg.hidden_size is not None and not 1 <= cfg.hidden_size <= MAX_HIDDEN_SIZE:
        raise fail(f"hidden_size must be in [1, {MAX_HIDDEN_SIZE}]", "hidden_size")
    if cfg.batch_size is not None and cfg.batch_size < 1:
        raise fail("batch_size must be >= 1", "batch_size")
    if cfg.shots is not None and cfg.shots < 1:
        raise fail("shots must be >= 1", "shots")

    if cfg.experiment == "ground_state":
        if not 2 <= cfg.n_qubits <= MAX_QUBITS:
            raise fail(f"n_qubits must be in [2, {MAX_QUBITS}], got {cfg.n_qubits}", "n_qubits")
        if cfg.L < 1:
            raise fail(f"L must be >= 1, got {cfg.L}", "L")
    elif cfg.experiment == "binary":
        if not 2 <= cfg.n_qubits <= MAX_QUBITS:
            raise fail(f"n_qubits must be in [2, {MAX_QUBITS}], got {cfg.n_qubits}", "n_qubits")
        if cfg.L != BINARY_LAYERS:
            raise fail(f"the binary classifier has {BINARY_LAYERS} layers", "L")
        for key in ("n_train", "n_test"):
            n = getattr(cfg, key)
            if n < 2 or n % 2:
                raise fail(f"{key} must be even and >= 2, got {n}", key)
    elif cfg.experiment == "mnist":
        if cfg.n_qubits != MNIST_QUBITS or cfg.L != MNIST_LAYERS:
            raise fail(f"the MNIST classifier is fixed at {MNIST_QUBITS} qubits, {MNIST_LAYERS} layers", "n_qubits")
        if not cfg.mnist_dir:
            raise fail("mnist runs need a directory of IDX files", "mnist_dir")
        for key in ("per_class_train", "per_class_test"):
            if getattr(cfg, key) < 1:
                raise fail(f"{key} must be >= 1", key)
    elif cfg.n_qubits != 2:
        raise fail("the Bell circuit has 2 qubits", "n_qubits")
    return cfg


def _normalize(cfg: RunConfig) -> RunConfig:
    if cfg.method != "LLES" and cfg.sigma is not None:
        logger.debug("sigma ignored for method %s", cfg.method)
        return replace(cfg, sigma=None)
    return cfg


def _expand_run(raw: Mapping[str, Any], path: str) -> List[RunConfig]:
    if not isinstance(raw, Mapping):
        raise ConfigError("each run must be a JSON object", path)
    for key in raw:
        if key not in FIELD_NAMES:
            raise ConfigError(f"unknown key {key!r}", _key_path(path, key))
    if "experiment" not in raw:
        raise ConfigError("missing required key", _key_path(path, "experiment"))
    experiment = CONVERTERS["experiment"](raw["experiment"], _key_path(path, "experiment"))
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}; expected one of {EXPERIMENTS}",
                          _key_path(path, "experiment"))

    merged: Dict[str, Any] = {**_experiment_defaults(experiment), **raw}
    axes: List[List[Tuple[str, Any]]] = []
    scalars: Dict[str, Any] = {}
    for key, value in merged.items():
        key_path = _key_path(path, key)
        if key in GRID_FIELDS and isinstance(value, (list, tuple)):
            if not value:
                raise ConfigError("grid lists must not be empty", key_path)
            axes.append([(key, (v, f"{key_path}[{i}]")) for i, v in enumerate(value)])
        else:
            scalars[key] = (value, key_path)
    axes.sort(key=lambda axis: GRID_FIELDS.index(axis[0][0]))

    configs = []
    for combo in itertools.product(*axes):
        values: Dict[str, Any] = {}
        for key, (value, key_path) in list(scalars.items()) + list(combo):
            values[key] = CONVERTERS[key](value, key_path)
        if isinstance(values.get("method"), str):
            values["method"] = values["method"].upper()
        configs.append(_normalize(_validate(RunConfig(**values), path)))
    # GRAD and LL drop sigma, so a sigma grid can repeat a run
    return list(dict.fromkeys(configs))


def parse_config(source: Union[str, Path, Mapping[str, Any]]) -> List[RunConfig]:
    """Expand a JSON file path or an already-loaded mapping into RunConfigs.

    A document is either a single run object or ``{"runs": [...]}``. Keys in
    ``GRID_FIELDS`` may hold lists; each run expands to their cross product.
    """
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            document = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    else:
        document = source

    if isinstance(document, Mapping) and "runs" in document:
        extra = set(document) - {"runs"}
        if extra:
            raise ConfigError(f"unknown top-level keys {sorted(extra)}")
        runs = document["runs"]
        if not isinstance(runs, list) or not runs:
            raise ConfigError("must be a non-empty list", "runs")
        configs: List[RunConfig] = []
        for index, run in enumerate(runs):
            configs.extend(_expand_run(run, f"runs[{index}]"))
    else:
        configs = _expand_run(document, "")
    logger.info("Parsed %d run configuration(s)", len(configs))
    return configs


def emit_config(configs: List[RunConfig]) -> Dict[str, Any]:
    """JSON-able document that parses back to ``configs``."""
    return {"runs": [cfg.to_dict() for cfg in configs]}
