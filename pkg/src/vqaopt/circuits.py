"""Parameterized circuit builders and circuit evaluation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import (BINARY_FEATURES, BINARY_LAYERS, DEFAULT_BINARY_QUBITS,
                        MNIST_INPUT_DIM, MNIST_LAYERS, MNIST_QUBITS,
                        MNIST_READOUT_QUBITS)
from .errors import CapacityError, ConfigError, EncodingError, ShapeError
from .grad import ExecutionCounter
from .qsim import (Backend, Gate, GateKind, KrausChannel, Observable,
                   QuantumState, amplitude_encode_batch, apply_channel_batch,
                   apply_gate_batch, expectation_batch)


class Encoder(str, Enum):
    ANGLE_RY = "angle_ry"
    AMPLITUDE = "amplitude"


class NoisePlacement(str, Enum):
    FINAL = "final"
    PER_LAYER = "per_layer"


@dataclass(frozen=True)
class Circuit:
    """Ordered gate list with ``n_params`` trainable bindings.

    ``layer_ends`` holds the gate offsets at which each trainable layer ends.
    """

    n_qubits: int
    gates: Tuple[Gate, ...]
    n_params: int
    layer_ends: Tuple[int, ...] = ()

    def __post_init__(self) -> None:
        for gate in self.gates:
            if any(t >= self.n_qubits for t in gate.targets):
                raise IndexError(
                    f"Gate {gate.kind.value}{gate.targets} out of range for "
                    f"{self.n_qubits} qubits"
                )
        bound = {g.param for g in self.gates if g.param is not None}
        if bound != set(range(self.n_params)):
            raise ConfigError(
                f"Circuit declares {self.n_params} parameters but binds {sorted(bound)}"
            )


@dataclass(frozen=True)
class EncodedCircuit:
    """A trainable body preceded by a classical-data encoder."""

    encoder: Encoder
    body: Circuit
    input_dim: int
    observables: Tuple[Observable, ...]
    encoder_gates: Tuple[Gate, ...] = ()

    def __post_init__(self) -> None:
        if self.encoder == Encoder.AMPLITUDE and self.input_dim > 2**self.body.n_qubits:
            raise CapacityError(
                f"input_dim {self.input_dim} exceeds {2 ** self.body.n_qubits} amplitudes"
            )

    @property
    def n_qubits(self) -> int:
        return self.body.n_qubits

    @property
    def n_params(self) -> int:
        return self.body.n_params


AnyCircuit = Union[Circuit, EncodedCircuit]


def entangling_layer(n_qubits: int, first_param: int) -> List[Gate]:
    """One trainable RY per qubit followed by the CNOT chain i -> i+1."""
    gates = [
        Gate(GateKind.RY, (q,), param=first_param + q) for q in range(n_qubits)
    ]
    gates += [Gate(GateKind.CNOT, (q, q + 1)) for q in range(n_qubits - 1)]
    return gates


def _layered(n_qubits: int, n_layers: int, prefix: Sequence[Gate] = ()) -> Circuit:
    gates: List[Gate] = list(prefix)
    ends: List[int] = []
    for layer in range(n_layers):
        gates += entangling_layer(n_qubits, layer * n_qubits)
        ends.append(len(gates))
    return Circuit(n_qubits, tuple(gates), n_qubits * n_layers, tuple(ends))


def ground_state_ansatz(n_qubits: int, L: int) -> Circuit:
    """RY(pi/2) on every qubit, then L entangling layers; p = n_qubits * L."""
    if n_qubits < 2:
        raise ConfigError(f"ground-state ansatz needs n_qubits >= 2, got {n_qubits}")
    if L < 1:
        raise ConfigError(f"ground-state ansatz needs L >= 1, got {L}")
    prep = [Gate(GateKind.RY, (q,), angle=math.pi / 2) for q in range(n_qubits)]
    return _layered(n_qubits, L, prep)


def binary_qnn(n_qubits: int = DEFAULT_BINARY_QUBITS) -> EncodedCircuit:
    """Angle-encoded two-feature classifier read out on the last qubit."""
    if n_qubits < 2:
        raise ConfigError(f"binary QNN needs n_qubits >= 2, got {n_qubits}")
    encoder = tuple(
        Gate(GateKind.RY, (q,), input=q % BINARY_FEATURES) for q in range(n_qubits)
    )
    return EncodedCircuit(
        encoder=Encoder.ANGLE_RY,
        body=_layered(n_qubits, BINARY_LAYERS),
        input_dim=BINARY_FEATURES,
        observables=(Observable.zero_projector(n_qubits, n_qubits - 1),),
        encoder_gates=encoder,
    )


def mnist_qnn() -> EncodedCircuit:
    """Amplitude-encoded 28x28 image classifier with three readout projectors."""
    return EncodedCircuit(
        encoder=Encoder.AMPLITUDE,
        body=_layered(MNIST_QUBITS, MNIST_LAYERS),
        input_dim=MNIST_INPUT_DIM,
        observables=tuple(
            Observable.zero_projector(MNIST_QUBITS, q) for q in MNIST_READOUT_QUBITS
        ),
    )


def bell_circuit() -> Circuit:
    """H on qubit 0 then CNOT(0, 1): prepares (|00> + |11>)/sqrt(2)."""
    gates = (Gate(GateKind.H, (0,)), Gate(GateKind.CNOT, (0, 1)))
    return Circuit(2, gates, 0, (2,))


def _initial_batch(
    circuit: AnyCircuit, inputs: Optional[np.ndarray], backend: Backend
) -> np.ndarray:
    n = circuit.n_qubits
    dim = 2**n
    if isinstance(circuit, EncodedCircuit):
        if inputs is None:
            raise EncodingError("Encoded circuits need an input feature vector")
        if inputs.shape[1] != circuit.input_dim:
            raise EncodingError(
                f"Expected {circuit.input_dim} features, got {inputs.shape[1]}"
            )
        if circuit.encoder == Encoder.AMPLITUDE:
            psi = amplitude_encode_batch(inputs, n)
        else:
            psi = np.zeros((inputs.shape[0], dim), dtype=complex)
            psi[:, 0] = 1.0
            for gate in circuit.encoder_gates:
                psi = apply_gate_batch(psi, n, Backend.STATEVECTOR, gate, np.empty(0), inputs)
    else:
        if inputs is not None:
            raise EncodingError("Plain circuits take no input features")
        psi = np.zeros((1, dim), dtype=complex)
        psi[0, 0] = 1.0
    if backend == Backend.DENSITY_MATRIX:
        return np.einsum("bi,bj->bij", psi, psi.conj())
    return psi


def _simulate(
    circuit: AnyCircuit,
    theta: Sequence[float],
    inputs: Optional[np.ndarray],
    noise: Optional[KrausChannel],
    noise_placement: NoisePlacement,
) -> Tuple[np.ndarray, Backend]:
    body = circuit.body if isinstance(circuit, EncodedCircuit) else circuit
    theta_arr = np.asarray(theta, dtype=float)
    if theta_arr.shape != (body.n_params,):
        raise ShapeError(
            f"theta must have length {body.n_params}, got shape {theta_arr.shape}"
        )
    if noise is not None and noise.n_qubits != body.n_qubits:
        raise ShapeError(
            f"Noise channel acts on {noise.n_qubits} qubits, circuit has {body.n_qubits}"
        )
    backend = Backend.STATEVECTOR if noise is None else Backend.DENSITY_MATRIX
    data = _initial_batch(circuit, inputs, backend)
    layer_ends = set(body.layer_ends) if noise_placement == NoisePlacement.PER_LAYER else set()
    for index, gate in enumerate(body.gates, start=1):
        data = apply_gate_batch(data, body.n_qubits, backend, gate, theta_arr)
        if noise is not None and index in layer_ends:
            data = apply_channel_batch(data, noise)
    if noise is not None and len(body.gates) not in layer_ends:
        data = apply_channel_batch(data, noise)
    return data, backend


def final_state(
    circuit: AnyCircuit,
    theta: Sequence[float] = (),
    inputs: Optional[Sequence[float]] = None,
    noise: Optional[KrausChannel] = None,
    noise_placement: NoisePlacement = NoisePlacement.FINAL,
) -> QuantumState:
    """Output state of a single execution (not charged to any counter)."""
    batch = None if inputs is None else np.asarray(inputs, dtype=float)[None]
    data, backend = _simulate(circuit, theta, batch, noise, NoisePlacement(noise_placement))
    return QuantumState(circuit.n_qubits, backend, data[0])


def evaluate(
    circuit: AnyCircuit,
    theta: Sequence[float],
    obs: Observable,
    inputs: Optional[Sequence[float]] = None,
    noise: Optional[KrausChannel] = None,
    counter: Optional[ExecutionCounter] = None,
    noise_placement: NoisePlacement = NoisePlacement.FINAL,
) -> float:
    """<obs> after encoding, the gate list and optional noise.

    Charges one execution to ``counter``; without a counter nothing is charged.
    """
    if obs.n_qubits != circuit.n_qubits:
        raise ShapeError(
            f"Observable on {obs.n_qubits} qubits, circuit has {circuit.n_qubits}"
        )
    batch = None if inputs is None else np.asarray(inputs, dtype=float)[None]
    data, backend = _simulate(circuit, theta, batch, noise, NoisePlacement(noise_placement))
    if counter is not None:
        counter.increment(1)
    return float(expectation_batch(data, backend, [obs])[0, 0])


def evaluate_batch(
    circuit: EncodedCircuit,
    theta: Sequence[float],
    inputs: np.ndarray,
    observables: Optional[Sequence[Observable]] = None,
    noise: Optional[KrausChannel] = None,
    counter: Optional[ExecutionCounter] = None,
    noise_placement: NoisePlacement = NoisePlacement.FINAL,
) -> np.ndarray:
    """Expectations of shape (N, k) for N examples; charges N executions."""
    observables = tuple(observables or circuit.observables)
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    data, backend = _simulate(circuit, theta, inputs, noise, NoisePlacement(noise_placement))
    if counter is not None:
        counter.increment(inputs.shape[0])
    return expectation_batch(data, backend, observables)
