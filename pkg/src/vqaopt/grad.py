"""Gradient estimators and circuit-execution accounting.

Estimators take an :class:`ObjectiveHandle` and charge whatever counter the
objective's evaluations charge. ES perturbations come from one child
``SeedSequence`` per sample index, so results do not depend on evaluation
order or parallel scheduling.
"""

from __future__ import annotations

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np

from .errors import ConfigError, ShapeError

logger = logging.getLogger(__name__)

SHIFT = math.pi / 2


class ExecutionCounter:
    """Thread-safe count of circuit executions with named subtotals."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._count = 0
        self._sections: Dict[str, int] = {}

    @property
    def count(self) -> int:
        with self._lock:
            return self._count

    def increment(self, n: int = 1) -> None:
        if n < 0:
            raise ValueError("Execution counts only grow")
        with self._lock:
            self._count += n

    def subtotal(self, name: str) -> int:
        with self._lock:
            return self._sections.get(name, 0)

    @contextmanager
    def section(self, name: str) -> Iterator["ExecutionCounter"]:
        """Attribute executions charged inside the block to ``name``."""
        start = self.count
        try:
            yield self
        finally:
            delta = self.count - start
            with self._lock:
                self._sections[name] = self._sections.get(name, 0) + delta

    def reset(self) -> None:
        with self._lock:
            self._count = 0
            self._sections.clear()


GRADIENT_SECTION = "gradient"
FORWARD_SECTION = "forward"


@dataclass(frozen=True)
class ObjectiveHandle:
    """Deterministic cost function of a length-``p`` parameter vector."""

    fn: Callable[[np.ndarray], float]
    p: int
    counter: Optional[ExecutionCounter] = None

    def __call__(self, theta: np.ndarray) -> float:
        return float(self.fn(np.asarray(theta, dtype=float)))


@dataclass(frozen=True)
class EsConfig:
    sigma: float
    n_samples: Optional[int] = None
    seed: int = 0
    workers: int = 1

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        if self.n_samples is not None and self.n_samples < 1:
            raise ConfigError(f"n_samples must be >= 1, got {self.n_samples}")

    def samples_for(self, p: int) -> int:
        return self.n_samples if self.n_samples is not None else es_sample_count(p)


@contextmanager
def _gradient_section(obj: ObjectiveHandle) -> Iterator[None]:
    if obj.counter is None:
        yield
        return
    with obj.counter.section(GRADIENT_SECTION):
        yield


def _check_theta(obj: ObjectiveHandle, theta: Sequence[float]) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (obj.p,):
        raise ShapeError(f"theta must have length {obj.p}, got shape {theta.shape}")
    return theta


def _evaluate_all(obj: ObjectiveHandle, points: List[np.ndarray], workers: int) -> np.ndarray:
    """Evaluate every point; values come back in point order."""
    if workers <= 1 or len(points) <= 1:
        return np.array([obj(z) for z in points])
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return np.array(list(pool.map(obj, points)))


def parameter_shift_grad(obj: ObjectiveHandle, theta: Sequence[float]) -> np.ndarray:
    """Exact gradient of Pauli-rotation costs from 2p shifted evaluations."""
    theta = _check_theta(obj, theta)
    grad = np.zeros(obj.p)
    with _gradient_section(obj):
        for k in range(obj.p):
            shift = np.zeros(obj.p)
            shift[k] = SHIFT
            grad[k] = 0.5 * (obj(theta + shift) - obj(theta - shift))
    return grad


def es_sample_count(p: int) -> int:
    """Closest integer to 4 + 3 ln(p), halves rounded away from zero."""
    if p < 1:
        raise ConfigError(f"parameter count must be >= 1, got {p}")
    return int(math.floor(4.0 + 3.0 * math.log(p) + 0.5))


def derive_seed(*keys: int) -> int:
    """Stable 32-bit seed derived from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def es_perturbations(seed: int, n_samples: int, p: int) -> np.ndarray:
    """Standard-normal draws (n_samples, p); row k comes from child stream k."""
    children = np.random.SeedSequence(seed).spawn(n_samples)
    return np.stack([np.random.default_rng(child).standard_normal(p) for child in children])


def es_grad_antithetic(
    obj: ObjectiveHandle, theta: Sequence[float], cfg: EsConfig
) -> np.ndarray:
    """Mirrored-sampling search gradient; exactly 2 * n_samples evaluations."""
    theta = _check_theta(obj, theta)
    n_samples = cfg.samples_for(obj.p)
    eps = es_perturbations(cfg.seed, n_samples, obj.p)
    offsets = cfg.sigma * eps
    points: List[np.ndarray] = []
    for offset in offsets:
        points.append(theta + offset)
        points.append(theta - offset)
    logger.debug(
        "antithetic ES gradient: p=%d samples=%d sigma=%.6g seed=%d",
        obj.p, n_samples, cfg.sigma, cfg.seed,
    )
    with _gradient_section(obj):
        values = _evaluate_all(obj, points, cfg.workers)
    diffs = values[0::2] - values[1::2]
    return (diffs @ offsets) / (2.0 * n_samples * cfg.sigma**2)


def es_grad_canonical(
    obj: ObjectiveHandle, theta: Sequence[float], cfg: EsConfig
) -> np.ndarray:
    """Score-function search gradient; exactly n_samples evaluations."""
    theta = _check_theta(obj, theta)
    n_samples = cfg.samples_for(obj.p)
    offsets = cfg.sigma * es_perturbations(cfg.seed, n_samples, obj.p)
    with _gradient_section(obj):
        values = _evaluate_all(obj, [theta + o for o in offsets], cfg.workers)
    return (values @ offsets) / (n_samples * cfg.sigma**2)


def finite_difference_oracle(
    obj: ObjectiveHandle, theta: Sequence[float], h: float = 1e-5
) -> np.ndarray:
    """Central differences per coordinate."""
    if not h > 0:
        raise ConfigError(f"step h must be positive, got {h}")
    theta = _check_theta(obj, theta)
    grad = np.zeros(obj.p)
    for k in range(obj.p):
        step = np.zeros(obj.p)
        step[k] = h
        grad[k] = (obj(theta + step) - obj(theta - step)) / (2.0 * h)
    return grad
