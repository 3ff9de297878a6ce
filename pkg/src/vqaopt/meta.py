"""LSTM meta-optimizer with an unrolled learn-to-learn loop and exact BPTT.

The LSTM proposes parameter updates theta_t = theta_{t-1} + W_out h_t + b_out
from the input x_t = [theta_{t-1}; y_{t-1}]. Circuit costs are non-differentiable
black boxes here: their gradients d y_t / d theta_t are supplied from outside
(parameter shift or ES) and chained through the recurrences by
:func:`unroll_backward`.
"""

from __future__ import annotations

import logging
from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .constants import MAX_HIDDEN_SIZE
from .errors import ConfigError, ShapeError
from .grad import (FORWARD_SECTION, EsConfig, ObjectiveHandle, derive_seed,
                   es_grad_antithetic, parameter_shift_grad)

logger = logging.getLogger(__name__)

GATES = ("i", "f", "g", "o")
TENSOR_NAMES = (
    "W_ii", "W_hi", "W_if", "W_hf", "W_ig", "W_hg", "W_io", "W_ho",
    "b_ii", "b_hi", "b_if", "b_hf", "b_ig", "b_hg", "b_io", "b_ho",
    "W_out", "b_out",
)


class GradMode(str, Enum):
    PARAMETER_SHIFT = "parameter_shift"
    EVOLUTION_STRATEGY = "evolution_strategy"


@dataclass(eq=False)
class LstmParams:
    """Weights phi of the LSTM cell plus the linear head hidden -> p."""

    hidden_size: int
    input_size: int
    p: int
    W_ii: np.ndarray
    W_hi: np.ndarray
    W_if: np.ndarray
    W_hf: np.ndarray
    W_ig: np.ndarray
    W_hg: np.ndarray
    W_io: np.ndarray
    W_ho: np.ndarray
    b_ii: np.ndarray
    b_hi: np.ndarray
    b_if: np.ndarray
    b_hf: np.ndarray
    b_ig: np.ndarray
    b_hg: np.ndarray
    b_io: np.ndarray
    b_ho: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray

    @staticmethod
    def expected_shapes(hidden_size: int, input_size: int, p: int) -> Dict[str, Tuple[int, ...]]:
        shapes: Dict[str, Tuple[int, ...]] = {}
        for name in TENSOR_NAMES:
            if name.startswith("W_i"):
                shapes[name] = (hidden_size, input_size)
            elif name.startswith("W_h"):
                shapes[name] = (hidden_size, hidden_size)
            elif name == "W_out":
                shapes[name] = (p, hidden_size)
            elif name == "b_out":
                shapes[name] = (p,)
            else:
                shapes[name] = (hidden_size,)
        return shapes

    @classmethod
    def from_tensors(
        cls, hidden_size: int, input_size: int, p: int, tensors: Dict[str, np.ndarray]
    ) -> "LstmParams":
        params = cls(hidden_size, input_size, p, **{n: np.asarray(tensors[n], dtype=float) for n in TENSOR_NAMES})
        params.validate()
        return params

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in TENSOR_NAMES}

    def validate(self) -> None:
        for name, shape in self.expected_shapes(self.hidden_size, self.input_size, self.p).items():
            value = getattr(self, name)
            if value.shape != shape:
                raise ShapeError(f"{name} must have shape {shape}, got {value.shape}")
            if not np.all(np.isfinite(value)):
                raise ConfigError(f"{name} has non-finite entries")

    def zeros_like(self) -> "LstmParams":
        return zero_params(self.hidden_size, self.input_size, self.p)

    def copy(self) -> "LstmParams":
        return LstmParams.from_tensors(
            self.hidden_size, self.input_size, self.p,
            {n: t.copy() for n, t in self.tensors().items()},
        )


@dataclass
class LstmState:
    h: np.ndarray
    C: np.ndarray

    @classmethod
    def zeros(cls, hidden_size: int) -> "LstmState":
        return cls(np.zeros(hidden_size), np.zeros(hidden_size))


@dataclass
class GateCache:
    """Activations of one cell step kept for the backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    C_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    g: np.ndarray
    o: np.ndarray
    C: np.ndarray
    tanh_C: np.ndarray
    h: np.ndarray


@dataclass(frozen=True)
class UnrollConfig:
    T: int
    w: Tuple[float, ...]
    grad_mode: GradMode = GradMode.PARAMETER_SHIFT
    es: Optional[EsConfig] = None
    lr: float = 0.1
    detach_cost_input: bool = True

    def __post_init__(self) -> None:
        if self.T < 1:
            raise ConfigError(f"T must be >= 1, got {self.T}")
        if len(self.w) != self.T:
            raise ConfigError(f"need {self.T} meta-loss weights, got {len(self.w)}")
        if not all(np.isfinite(self.w)):
            raise ConfigError("meta-loss weights must be finite")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.grad_mode == GradMode.EVOLUTION_STRATEGY and self.es is None:
            raise ConfigError("evolution-strategy mode needs an EsConfig")

    @classmethod
    def uniform(cls, T: int, **kwargs) -> "UnrollConfig":
        return cls(T=T, w=(1.0,) * T, **kwargs)


@dataclass
class UnrollStep:
    theta_prev: np.ndarray
    theta: np.ndarray
    y_input: float
    y: float
    state: LstmState
    cache: GateCache


@dataclass
class UnrollTrace:
    theta0: np.ndarray
    y0: float
    steps: List[UnrollStep] = field(default_factory=list)

    @property
    def thetas(self) -> List[np.ndarray]:
        return [s.theta for s in self.steps]

    @property
    def costs(self) -> List[float]:
        return [s.y for s in self.steps]


def default_hidden_size(p: int) -> int:
    return max(1, min(2 * p, MAX_HIDDEN_SIZE))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def zero_params(hidden_size: int, input_size: int, p: int) -> LstmParams:
    shapes = LstmParams.expected_shapes(hidden_size, input_size, p)
    return LstmParams.from_tensors(
        hidden_size, input_size, p, {n: np.zeros(s) for n, s in shapes.items()}
    )


def init_params(hidden_size: int, input_size: int, p: int, seed: int) -> LstmParams:
    """Every entry drawn from U[-1/sqrt(hidden), 1/sqrt(hidden)]."""
    if min(hidden_size, input_size, p) < 1:
        raise ConfigError("LSTM sizes must all be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(hidden_size)
    shapes = LstmParams.expected_shapes(hidden_size, input_size, p)
    tensors = {name: rng.uniform(-bound, bound, size=shapes[name]) for name in TENSOR_NAMES}
    return LstmParams.from_tensors(hidden_size, input_size, p, tensors)


def lstm_cell_forward(
    params: LstmParams, x: Sequence[float], state: LstmState
) -> Tuple[LstmState, GateCache]:
    x = np.asarray(x, dtype=float)
    if x.shape != (params.input_size,):
        raise ShapeError(f"LSTM input must have length {params.input_size}, got {x.shape}")
    if state.h.shape != (params.hidden_size,) or state.C.shape != (params.hidden_size,):
        raise ShapeError("LSTM state does not match hidden_size")
    h_prev, C_prev = state.h, state.C

    def pre(k: str) -> np.ndarray:
        return (
            getattr(params, f"W_i{k}") @ x + getattr(params, f"b_i{k}")
            + getattr(params, f"W_h{k}") @ h_prev + getattr(params, f"b_h{k}")
        )

    i = _sigmoid(pre("i"))
    f = _sigmoid(pre("f"))
    g = np.tanh(pre("g"))
    o = _sigmoid(pre("o"))
    C = f * C_prev + i * g
    tanh_C = np.tanh(C)
    h = o * tanh_C
    cache = GateCache(x, h_prev, C_prev, i, f, g, o, C, tanh_C, h)
    return LstmState(h, C), cache


def _forward_section(objective: ObjectiveHandle):
    if objective.counter is None:
        return nullcontext()
    return objective.counter.section(FORWARD_SECTION)


def unroll_forward(
    params: LstmParams,
    objective: ObjectiveHandle,
    theta0: Sequence[float],
    cfg: UnrollConfig,
    y0: Optional[float] = None,
    input_costs: Optional[Sequence[float]] = None,
) -> Tuple[UnrollTrace, float]:
    """Run T LSTM/circuit interactions; returns the trace and the meta-loss.

    ``y0`` is the cost at ``theta0`` (evaluated when omitted). ``input_costs``
    pins the cost fed into each step's input instead of using y_{t-1}.
    """
    theta = np.asarray(theta0, dtype=float).copy()
    if theta.shape != (params.p,) or objective.p != params.p:
        raise ShapeError(f"theta0 must have length {params.p}, got {theta.shape}")
    if params.input_size != params.p + 1:
        raise ShapeError("LSTM input_size must be p + 1")
    if input_costs is not None and len(input_costs) != cfg.T:
        raise ShapeError(f"input_costs must have {cfg.T} entries")
    with _forward_section(objective):
        if y0 is None:
            y0 = objective(theta)
        trace = UnrollTrace(theta0=theta.copy(), y0=float(y0))
        state = LstmState.zeros(params.hidden_size)
        y_prev = float(y0)
        for t in range(cfg.T):
            y_input = float(input_costs[t]) if input_costs is not None else y_prev
            x = np.concatenate([theta, [y_input]])
            state, cache = lstm_cell_forward(params, x, state)
            theta_next = theta + params.W_out @ state.h + params.b_out
            y = objective(theta_next)
            trace.steps.append(UnrollStep(theta, theta_next, y_input, y, state, cache))
            theta, y_prev = theta_next, y
    loss = sum(w * s.y for w, s in zip(cfg.w, trace.steps)) / cfg.T
    return trace, float(loss)


def unroll_backward(
    trace: UnrollTrace,
    params: LstmParams,
    quantum_grads: Sequence[np.ndarray],
    cfg: UnrollConfig,
) -> LstmParams:
    """Gradient of the meta-loss with respect to every tensor of ``params``."""
    T = cfg.T
    if len(trace.steps) != T:
        raise ShapeError(f"trace has {len(trace.steps)} steps, expected {T}")
    if len(quantum_grads) != T:
        raise ShapeError(f"need {T} quantum gradients, got {len(quantum_grads)}")
    q = [np.asarray(g, dtype=float) for g in quantum_grads]
    if any(g.shape != (params.p,) for g in q):
        raise ShapeError(f"quantum gradients must have length {params.p}")
    if trace.steps[0].cache.h.shape != (params.hidden_size,):
        raise ShapeError("trace was recorded with a different hidden_size")

    grads = {n: np.zeros_like(t) for n, t in params.tensors().items()}
    p = params.p
    dtheta = np.zeros(p)
    dh_next = np.zeros(params.hidden_size)
    dC_next = np.zeros(params.hidden_size)
    for s in reversed(range(T)):
        c = trace.steps[s].cache
        dtheta = dtheta + (cfg.w[s] / T) * q[s]
        grads["W_out"] += np.outer(dtheta, c.h)
        grads["b_out"] += dtheta
        dh = dh_next + params.W_out.T @ dtheta
        do = dh * c.tanh_C
        dC = dC_next + dh * c.o * (1.0 - c.tanh_C**2)
        dC_next = dC * c.f
        da = {
            "i": dC * c.g * c.i * (1.0 - c.i),
            "f": dC * c.C_prev * c.f * (1.0 - c.f),
            "g": dC * c.i * (1.0 - c.g**2),
            "o": do * c.o * (1.0 - c.o),
        }
        dx = np.zeros(params.input_size)
        dh_next = np.zeros(params.hidden_size)
        for k in GATES:
            grads[f"W_i{k}"] += np.outer(da[k], c.x)
            grads[f"W_h{k}"] += np.outer(da[k], c.h_prev)
            grads[f"b_i{k}"] += da[k]
            grads[f"b_h{k}"] += da[k]
            dx += getattr(params, f"W_i{k}").T @ da[k]
            dh_next += getattr(params, f"W_h{k}").T @ da[k]
        dtheta = dtheta + dx[:p]
        if not cfg.detach_cost_input and s > 0:
            dtheta = dtheta + dx[p] * q[s - 1]
    return LstmParams.from_tensors(params.hidden_size, params.input_size, p, grads)


def quantum_grads_for_step(
    objective: ObjectiveHandle,
    theta_t: Sequence[float],
    cfg: UnrollConfig,
    seed: Optional[int] = None,
) -> np.ndarray:
    """d y_t / d theta_t by parameter shift (LL) or antithetic ES (LLES)."""
    if cfg.grad_mode == GradMode.PARAMETER_SHIFT:
        return parameter_shift_grad(objective, theta_t)
    es = cfg.es if seed is None else replace(cfg.es, seed=seed)
    return es_grad_antithetic(objective, theta_t, es)


def sgd_step(params: LstmParams, grads: LstmParams, lr: float) -> LstmParams:
    """v <- v - lr * g for every tensor."""
    updated = {}
    for name, value in params.tensors().items():
        g = getattr(grads, name)
        if g.shape != value.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, expected {value.shape}")
        updated[name] = value - lr * g
    return LstmParams.from_tensors(params.hidden_size, params.input_size, params.p, updated)


@dataclass
class MetaEpochResult:
    params: LstmParams
    trace: UnrollTrace
    loss: float


def meta_epoch(
    params: LstmParams,
    objective: ObjectiveHandle,
    theta0: Sequence[float],
    cfg: UnrollConfig,
    y0: Optional[float] = None,
    seed: int = 0,
) -> MetaEpochResult:
    """Forward unroll, per-step quantum gradients, BPTT and one SGD step on phi."""
    trace, loss = unroll_forward(params, objective, theta0, cfg, y0=y0)
    quantum_grads = [
        quantum_grads_for_step(objective, step.theta, cfg, seed=derive_seed(seed, t))
        for t, step in enumerate(trace.steps)
    ]
    grads = unroll_backward(trace, params, quantum_grads, cfg)
    logger.debug("meta-epoch loss=%.6f final cost=%.6f", loss, trace.costs[-1])
    return MetaEpochResult(sgd_step(params, grads, cfg.lr), trace, loss)
