"""The experiments: ground-state energy, binary and 3-class classification, Bell noise.

Every experiment trains with one of three methods. GRAD takes plain
parameter-shift gradient steps on theta. LL and LLES train an LSTM that
proposes theta updates, differing only in how d cost / d theta is estimated
inside the backward pass.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .circuits import (Circuit, EncodedCircuit, NoisePlacement, bell_circuit,
                       binary_qnn, evaluate, evaluate_batch, final_state,
                       ground_state_ansatz, mnist_qnn)
from .constants import (BINARY_LAYERS, DEFAULT_BINARY_QUBITS, DEFAULT_SIGMA,
                        DEFAULT_T, MNIST_LAYERS, MNIST_META_WEIGHTS)
from .datasets import Dataset, minibatch_indices
from .errors import ConfigError
from .grad import (GRADIENT_SECTION, EsConfig, ExecutionCounter, ObjectiveHandle,
                   derive_seed, parameter_shift_grad)
from .meta import (GradMode, UnrollConfig, default_hidden_size, init_params,
                   meta_epoch)
from .qsim import KrausChannel, Observable, probabilities, sample_counts
from .records import TrialRecord

logger = logging.getLogger(__name__)

TrialResult = TypeVar("TrialResult")

# Stream keys passed to derive_seed alongside the trial seed.
THETA_STREAM = 0
LSTM_STREAM = 1
ES_STREAM = 2
BATCH_STREAM = 3


class Method(str, Enum):
    GRAD = "GRAD"
    LL = "LL"
    LLES = "LLES"


class ThetaInit(str, Enum):
    """Starting parameters: seeded U[0, 2pi) or all zeros."""

    UNIFORM = "uniform"
    ZERO = "zero"


def _check_common(method: Method, lr: float, sigma: Optional[float], T: int, epochs: int) -> None:
    if not lr > 0:
        raise ConfigError(f"lr must be positive, got {lr}", "lr")
    if epochs < 0:
        raise ConfigError(f"epochs must be >= 0, got {epochs}", "epochs")
    if method != Method.GRAD and T < 1:
        raise ConfigError(f"T must be >= 1, got {T}", "T")
    if method == Method.LLES and not (sigma is not None and sigma > 0):
        raise ConfigError("LLES requires sigma > 0", "sigma")


@dataclass(frozen=True)
class GroundStateTask:
    """Minimize <Z x ... x Z> over the layered RY/CNOT ansatz."""

    n_qubits: int = 4
    L: int = 4
    noise_lambda: float = 0.0
    method: Method = Method.GRAD
    lr: float = 0.1
    sigma: Optional[float] = DEFAULT_SIGMA
    T: int = DEFAULT_T
    epochs: int = 200
    seed: int = 0
    hidden_size: Optional[int] = None
    noise_placement: NoisePlacement = NoisePlacement.PER_LAYER
    theta_init: ThetaInit = ThetaInit.UNIFORM

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "noise_placement", NoisePlacement(self.noise_placement))
        object.__setattr__(self, "theta_init", ThetaInit(self.theta_init))
        _check_common(self.method, self.lr, self.sigma, self.T, self.epochs)
        if not 0.0 <= self.noise_lambda <= 1.0:
            raise ConfigError(f"noise_lambda must lie in [0, 1], got {self.noise_lambda}", "noise_lambda")


@dataclass(frozen=True, eq=False)
class ClassificationTask:
    """Shared settings of the binary and multiclass experiments.

    ``batch_size`` None trains on the full training set every epoch.
    ``weights`` None means w_j = 1 for every unrolled step. Training starts
    from theta = 0 by default: with 8 layers on up to 8 qubits the CNOT
    chains then compose to the identity, so the binary readout begins as
    cos^2(x/2) of the last qubit's feature.
    """

    train: Dataset
    test: Dataset
    method: Method = Method.GRAD
    lr: float = 0.01
    sigma: Optional[float] = DEFAULT_SIGMA
    T: int = DEFAULT_T
    epochs: int = 50
    seed: int = 0
    n_qubits: int = DEFAULT_BINARY_QUBITS
    weights: Optional[Tuple[float, ...]] = None
    batch_size: Optional[int] = None
    hidden_size: Optional[int] = None
    theta_init: ThetaInit = ThetaInit.ZERO

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "theta_init", ThetaInit(self.theta_init))
        _check_common(self.method, self.lr, self.sigma, self.T, self.epochs)
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}", "batch_size")


# Pure cost and accuracy helpers.

def mse_cost(outputs: np.ndarray, labels: np.ndarray) -> float:
    """Mean over the batch of (<O>(x_l) - y_l)^2."""
    outputs = np.asarray(outputs, dtype=float).reshape(-1)
    return float(np.mean((outputs - np.asarray(labels, dtype=float)) ** 2))


def multiclass_cost(outputs: np.ndarray, targets: np.ndarray) -> float:
    """(1/N) sum_l (1/k) sum_p (<H_p>(x_l) - y_{l,p})^2 for one-hot targets."""
    return float(np.mean((np.asarray(outputs, dtype=float) - targets) ** 2))


def threshold_predict(outputs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Class 1 when <O> >= threshold."""
    return (np.asarray(outputs, dtype=float).reshape(-1) >= threshold).astype(int)


def binary_accuracy(outputs: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(threshold_predict(outputs) == np.asarray(labels)))


def multiclass_accuracy(outputs: np.ndarray, labels: np.ndarray, classes: Sequence[int]) -> float:
    predicted = np.asarray(classes)[np.argmax(outputs, axis=1)]
    return float(np.mean(predicted == np.asarray(labels)))


def noisy_ground_state_shift(
    circuit: Circuit, theta: Sequence[float], lambda_noise: float
) -> float:
    """Exact rise of <Z x ... x Z> when the channel follows the full circuit.

    The channel moves weight lambda * P(1...1) from |1...1> (eigenvalue
    (-1)^n) to |0...0> (eigenvalue +1), so the shift is zero for even n.
    """
    p_ones = float(probabilities(final_state(circuit, theta))[-1])
    return lambda_noise * p_ones * (1.0 - (-1.0) ** circuit.n_qubits)


# Optimizer loop shared by every experiment.

@dataclass
class EpochResult:
    epoch: int
    cost: float
    theta: np.ndarray


def optimize(
    objective_for_epoch: Callable[[int], ObjectiveHandle],
    theta0: np.ndarray,
    method: Method,
    lr: float,
    epochs: int,
    seed: int,
    sigma: Optional[float] = None,
    T: int = DEFAULT_T,
    weights: Optional[Sequence[float]] = None,
    hidden_size: Optional[int] = None,
) -> Iterator[EpochResult]:
    """Yield epoch 0 (the initial cost) then one result per training epoch.

    GRAD reports the cost after its update; LL/LLES report y_T of the
    meta-epoch and the final unrolled theta. Meta-epochs always restart from
    ``theta0``; y0 is re-evaluated only when the objective changes.
    """
    theta0 = np.asarray(theta0, dtype=float)
    p = theta0.shape[0]
    objective = objective_for_epoch(0)
    y0 = objective(theta0)
    yield EpochResult(0, y0, theta0.copy())

    if method == Method.GRAD:
        theta = theta0.copy()
        for epoch in range(1, epochs + 1):
            objective = objective_for_epoch(epoch)
            theta = theta - lr * parameter_shift_grad(objective, theta)
            yield EpochResult(epoch, objective(theta), theta)
        return

    hidden = hidden_size or default_hidden_size(p)
    params = init_params(hidden, p + 1, p, derive_seed(seed, LSTM_STREAM))
    es = None
    if method == Method.LLES:
        es = EsConfig(sigma=sigma, seed=derive_seed(seed, ES_STREAM))
    cfg = UnrollConfig(
        T=T,
        w=tuple(weights) if weights is not None else (1.0,) * T,
        grad_mode=GradMode.PARAMETER_SHIFT if es is None else GradMode.EVOLUTION_STRATEGY,
        es=es,
        lr=lr,
    )
    for epoch in range(1, epochs + 1):
        current = objective_for_epoch(epoch)
        if current is not objective:
            objective = current
            y0 = objective(theta0)
        result = meta_epoch(params, objective, theta0, cfg, y0=y0,
                            seed=derive_seed(seed, ES_STREAM, epoch))
        params = result.params
        yield EpochResult(epoch, result.trace.costs[-1], result.trace.thetas[-1])


def _initial_theta(p: int, seed: int, init: ThetaInit) -> np.ndarray:
    if init == ThetaInit.ZERO:
        return np.zeros(p)
    return np.random.default_rng(derive_seed(seed, THETA_STREAM)).uniform(0.0, 2.0 * math.pi, p)


def _executions(counter: ExecutionCounter) -> Tuple[int, int]:
    gradient = counter.subtotal(GRADIENT_SECTION)
    return gradient, counter.count - gradient


def iter_ground_state(task: GroundStateTask) -> Iterator[TrialRecord]:
    """One record per epoch, yielded as soon as the epoch finishes."""
    circuit = ground_state_ansatz(task.n_qubits, task.L)
    counter = ExecutionCounter()
    obs = Observable.tensor_z(task.n_qubits)
    noise = KrausChannel(task.noise_lambda, task.n_qubits) if task.noise_lambda > 0 else None
    objective = ObjectiveHandle(
        lambda theta: evaluate(circuit, theta, obs, noise=noise, counter=counter,
                               noise_placement=task.noise_placement),
        circuit.n_params,
        counter,
    )
    logger.info(
        "ground_state %s n=%d L=%d lambda=%g seed=%d", task.method.value,
        task.n_qubits, task.L, task.noise_lambda, task.seed,
    )
    for result in optimize(
        lambda epoch: objective, _initial_theta(circuit.n_params, task.seed, task.theta_init),
        task.method, task.lr, task.epochs, task.seed,
        sigma=task.sigma, T=task.T, hidden_size=task.hidden_size,
    ):
        gradient, forward = _executions(counter)
        yield TrialRecord(
            experiment="ground_state", method=task.method.value, n_qubits=task.n_qubits,
            L=task.L, T=task.T, lr=task.lr, sigma=_recorded_sigma(task.method, task.sigma),
            noise_lambda=task.noise_lambda, seed=task.seed, epoch=result.epoch,
            cost=result.cost, circuit_executions=gradient, forward_executions=forward,
        )
        logger.debug("epoch %d cost %.6f", result.epoch, result.cost)


def run_ground_state(task: GroundStateTask) -> List[TrialRecord]:
    return list(iter_ground_state(task))


def _recorded_sigma(method: Method, sigma: Optional[float]) -> Optional[float]:
    return sigma if method == Method.LLES else None


def _classification_objectives(
    circuit: EncodedCircuit,
    task: ClassificationTask,
    cost_fn: Callable[[np.ndarray, np.ndarray], float],
    targets: np.ndarray,
    counter: ExecutionCounter,
) -> Callable[[int], ObjectiveHandle]:
    """Objective per epoch; epoch 0 and epoch 1 share the first batch."""

    def make(rows: Optional[np.ndarray]) -> ObjectiveHandle:
        X = task.train.features if rows is None else task.train.features[rows]
        y = targets if rows is None else targets[rows]

        def cost(theta: np.ndarray) -> float:
            return cost_fn(evaluate_batch(circuit, theta, X, counter=counter), y)

        return ObjectiveHandle(cost, circuit.n_params, counter)

    if task.batch_size is None:
        full = make(None)
        return lambda epoch: full

    rng = np.random.default_rng(derive_seed(task.seed, BATCH_STREAM))
    stream = minibatch_indices(len(task.train), task.batch_size, rng)
    objectives = [make(next(stream)) for _ in range(max(task.epochs, 1))]
    return lambda epoch: objectives[max(epoch, 1) - 1]


def _iter_classification(
    experiment: str,
    task: ClassificationTask,
    circuit: EncodedCircuit,
    layers: int,
    cost_fn: Callable[[np.ndarray, np.ndarray], float],
    targets: np.ndarray,
    accuracy_fn: Callable[[np.ndarray], float],
    weights: Optional[Sequence[float]],
) -> Iterator[TrialRecord]:
    counter = ExecutionCounter()
    objective_for_epoch = _classification_objectives(circuit, task, cost_fn, targets, counter)
    logger.info(
        "%s %s n_train=%d n_test=%d seed=%d", experiment, task.method.value,
        len(task.train), len(task.test), task.seed,
    )
    for result in optimize(
        objective_for_epoch, _initial_theta(circuit.n_params, task.seed, task.theta_init),
        task.method, task.lr, task.epochs, task.seed,
        sigma=task.sigma, T=task.T, weights=weights, hidden_size=task.hidden_size,
    ):
        outputs = evaluate_batch(circuit, result.theta, task.test.features, counter=counter)
        accuracy = accuracy_fn(outputs)
        gradient, forward = _executions(counter)
        yield TrialRecord(
            experiment=experiment, method=task.method.value, n_qubits=circuit.n_qubits,
            L=layers, T=task.T, lr=task.lr, sigma=_recorded_sigma(task.method, task.sigma),
            noise_lambda=0.0, seed=task.seed, epoch=result.epoch, cost=result.cost,
            accuracy=accuracy, circuit_executions=gradient, forward_executions=forward,
        )
        logger.debug("epoch %d cost %.6f accuracy %.3f", result.epoch, result.cost, accuracy)


def iter_binary_classification(task: ClassificationTask) -> Iterator[TrialRecord]:
    """MSE training of the angle-encoded QNN; test accuracy after every epoch."""
    circuit = binary_qnn(task.n_qubits)
    return _iter_classification(
        "binary", task, circuit, BINARY_LAYERS, mse_cost,
        task.train.labels.astype(float),
        lambda outputs: binary_accuracy(outputs[:, 0], task.test.labels),
        task.weights,
    )


def run_binary_classification(task: ClassificationTask) -> List[TrialRecord]:
    return list(iter_binary_classification(task))


def iter_multiclass(task: ClassificationTask) -> Iterator[TrialRecord]:
    """Three-projector MNIST classifier; argmax over readouts predicts the digit."""
    circuit = mnist_qnn()
    weights = task.weights
    if weights is None and task.method != Method.GRAD:
        if task.T == len(MNIST_META_WEIGHTS):
            weights = MNIST_META_WEIGHTS
        else:
            logger.warning("no MNIST meta-loss weights for T=%d; using w_j = 1", task.T)
    return _iter_classification(
        "mnist", task, circuit, MNIST_LAYERS, multiclass_cost,
        task.train.one_hot(),
        lambda outputs: multiclass_accuracy(outputs, task.test.labels, task.test.classes),
        weights,
    )


def run_multiclass(task: ClassificationTask) -> List[TrialRecord]:
    return list(iter_multiclass(task))


def run_noise_bell(
    lambdas: Sequence[float], shots: Optional[int] = None, seed: int = 0
) -> List[np.ndarray]:
    """[P(00), P(01), P(10), P(11)] of the damped Bell state for each lambda.

    With ``shots`` the exact probabilities are replaced by multinomial
    frequencies, one derived stream per lambda.
    """
    circuit = bell_circuit()
    table = []
    for index, lambda_noise in enumerate(lambdas):
        state = final_state(circuit, noise=KrausChannel(float(lambda_noise), circuit.n_qubits))
        probs = probabilities(state)
        if shots is not None:
            rng = np.random.default_rng(derive_seed(seed, index))
            probs = sample_counts(probs, shots, rng) / float(shots)
        table.append(probs)
    return table


def run_trials(
    run_fn: Callable[[int], TrialResult], seeds: Sequence[int], workers: int = 1
) -> List[TrialResult]:
    """Independent seeded trials in a bounded pool; results in seed order."""
    if workers <= 1 or len(seeds) <= 1:
        return [run_fn(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_fn, seeds))
