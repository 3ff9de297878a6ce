"""Dense statevector and density-matrix simulation of small qubit registers.

Qubit 0 is the most significant bit of a computational-basis index, so the
state |10> has index 2. Batched kernels (``*_batch``) operate on arrays with a
leading batch axis; the single-state operations are thin wrappers over them.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .constants import MAX_QUBITS, NORM_ATOL
from .errors import (BackendMismatchError, CapacityError, ConfigError,
                     EncodingError, ShapeError)

AngleArg = Union[float, np.ndarray]


class Backend(str, Enum):
    STATEVECTOR = "statevector"
    DENSITY_MATRIX = "density_matrix"


class GateKind(str, Enum):
    RX = "RX"
    RY = "RY"
    RZ = "RZ"
    H = "H"
    CNOT = "CNOT"


ROTATIONS = (GateKind.RX, GateKind.RY, GateKind.RZ)


@dataclass(frozen=True)
class Gate:
    """A gate with its targets and angle binding.

    Rotation gates take their angle from exactly one of ``angle`` (fixed,
    radians), ``param`` (index into the trainable vector theta) or ``input``
    (index into the encoder's feature vector).
    """

    kind: GateKind
    targets: Tuple[int, ...]
    angle: Optional[float] = None
    param: Optional[int] = None
    input: Optional[int] = None

    def __post_init__(self) -> None:
        expected = 2 if self.kind == GateKind.CNOT else 1
        if len(self.targets) != expected:
            raise ConfigError(
                f"{self.kind.value} takes {expected} qubit(s), got {self.targets}"
            )
        if self.kind == GateKind.CNOT and self.targets[0] == self.targets[1]:
            raise ConfigError("CNOT control and target must differ")
        if any(t < 0 for t in self.targets):
            raise IndexError(f"Negative qubit index in {self.targets}")
        bindings = sum(b is not None for b in (self.angle, self.param, self.input))
        if self.kind in ROTATIONS and bindings != 1:
            raise ConfigError(
                f"{self.kind.value} needs exactly one of angle/param/input"
            )
        if self.kind not in ROTATIONS and bindings:
            raise ConfigError(f"{self.kind.value} takes no angle")

    @property
    def trainable(self) -> bool:
        return self.param is not None

    def resolve_angle(
        self, theta: np.ndarray, inputs: Optional[np.ndarray] = None
    ) -> AngleArg:
        """Angle for this gate; an array of per-example angles for batched inputs."""
        if self.angle is not None:
            return float(self.angle)
        if self.param is not None:
            if self.param >= len(theta):
                raise IndexError(
                    f"Parameter index {self.param} out of range for theta of "
                    f"length {len(theta)}"
                )
            return float(theta[self.param])
        if inputs is None:
            raise EncodingError("Gate is bound to an input feature but no input given")
        inputs = np.asarray(inputs, dtype=float)
        if self.input >= inputs.shape[-1]:
            raise IndexError(f"Input index {self.input} out of range")
        return inputs[..., self.input]


class ObservableForm(str, Enum):
    TENSOR_PAULI_Z = "tensor_pauli_z"
    PROJECTOR_ZERO_ON_QUBIT = "projector_zero_on_qubit"
    PROJECTOR_ALL_ZEROS = "projector_all_zeros"


@dataclass(frozen=True)
class Observable:
    """Observable diagonal in the computational basis."""

    form: ObservableForm
    n_qubits: int
    qubit: Optional[int] = None

    def __post_init__(self) -> None:
        _check_qubits(self.n_qubits)
        if self.form == ObservableForm.PROJECTOR_ZERO_ON_QUBIT:
            if self.qubit is None or not 0 <= self.qubit < self.n_qubits:
                raise IndexError(
                    f"Projector qubit {self.qubit} out of range for {self.n_qubits} qubits"
                )

    @classmethod
    def tensor_z(cls, n_qubits: int) -> "Observable":
        return cls(ObservableForm.TENSOR_PAULI_Z, n_qubits)

    @classmethod
    def zero_projector(cls, n_qubits: int, qubit: int) -> "Observable":
        return cls(ObservableForm.PROJECTOR_ZERO_ON_QUBIT, n_qubits, qubit)

    @classmethod
    def all_zeros(cls, n_qubits: int) -> "Observable":
        return cls(ObservableForm.PROJECTOR_ALL_ZEROS, n_qubits)

    def diagonal(self) -> np.ndarray:
        """Eigenvalues indexed by computational basis state."""
        dim = 2**self.n_qubits
        index = np.arange(dim)
        if self.form == ObservableForm.TENSOR_PAULI_Z:
            parity = np.zeros(dim, dtype=np.int64)
            for bit in range(self.n_qubits):
                parity ^= (index >> bit) & 1
            return 1.0 - 2.0 * parity
        if self.form == ObservableForm.PROJECTOR_ZERO_ON_QUBIT:
            shift = self.n_qubits - 1 - self.qubit
            return (((index >> shift) & 1) == 0).astype(float)
        diag = np.zeros(dim)
        diag[0] = 1.0
        return diag

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal()).astype(complex)


class ChannelKind(str, Enum):
    CORRELATED_AMPLITUDE_DAMPING = "correlated_amplitude_damping"


@dataclass(frozen=True)
class KrausChannel:
    """Correlated amplitude damping: |1...1> decays jointly to |0...0>."""

    lambda_noise: float
    n_qubits: int
    kind: ChannelKind = ChannelKind.CORRELATED_AMPLITUDE_DAMPING

    def __post_init__(self) -> None:
        _check_qubits(self.n_qubits)
        if not 0.0 <= self.lambda_noise <= 1.0:
            raise ConfigError(f"lambda_noise must lie in [0, 1], got {self.lambda_noise}")

    def kraus_operators(self) -> List[np.ndarray]:
        dim = 2**self.n_qubits
        last = dim - 1
        k0 = np.eye(dim, dtype=complex)
        k0[last, last] = np.sqrt(1.0 - self.lambda_noise)
        k1 = np.zeros((dim, dim), dtype=complex)
        k1[0, last] = np.sqrt(self.lambda_noise)
        return [k0, k1]


@dataclass(frozen=True)
class QuantumState:
    """A register state; operations return new instances."""

    n_qubits: int
    backend: Backend
    data: np.ndarray

    def __post_init__(self) -> None:
        dim = 2**self.n_qubits
        expected = (dim,) if self.backend == Backend.STATEVECTOR else (dim, dim)
        if self.data.shape != expected:
            raise ShapeError(
                f"{self.backend.value} data for {self.n_qubits} qubits must have "
                f"shape {expected}, got {self.data.shape}"
            )

    def to_density_matrix(self) -> "QuantumState":
        if self.backend == Backend.DENSITY_MATRIX:
            return self
        psi = self.data
        return QuantumState(self.n_qubits, Backend.DENSITY_MATRIX, np.outer(psi, psi.conj()))

    def is_valid(self, atol: float = NORM_ATOL) -> bool:
        if self.backend == Backend.STATEVECTOR:
            return abs(np.vdot(self.data, self.data).real - 1.0) < atol
        rho = self.data
        hermitian = np.allclose(rho, rho.conj().T, atol=atol, rtol=0.0)
        return hermitian and abs(np.trace(rho).real - 1.0) < atol


def _check_qubits(n_qubits: int) -> None:
    if not 1 <= int(n_qubits) <= MAX_QUBITS:
        raise ConfigError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


def zero_state(n_qubits: int, backend: Backend = Backend.STATEVECTOR) -> QuantumState:
    """Prepare |0...0> on the requested backend."""
    _check_qubits(n_qubits)
    dim = 2**n_qubits
    if backend == Backend.STATEVECTOR:
        data = np.zeros(dim, dtype=complex)
        data[0] = 1.0
    else:
        data = np.zeros((dim, dim), dtype=complex)
        data[0, 0] = 1.0
    return QuantumState(n_qubits, Backend(backend), data)


def gate_matrix(kind: GateKind, angle: AngleArg = 0.0) -> np.ndarray:
    """2x2 unitary for a single-qubit gate, or (B, 2, 2) for an angle array."""
    if kind == GateKind.H:
        return np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2.0)
    half = np.asarray(angle, dtype=float) / 2.0
    c = np.cos(half)
    s = np.sin(half)
    if kind == GateKind.RX:
        rows = [[c, -1j * s], [-1j * s, c]]
    elif kind == GateKind.RY:
        rows = [[c, -s], [s, c]]
    elif kind == GateKind.RZ:
        rows = [[np.exp(-1j * half), 0 * c], [0 * c, np.exp(1j * half)]]
    else:
        raise ConfigError(f"No single-qubit matrix for {kind.value}")
    mat = np.array(rows, dtype=complex)
    if mat.ndim == 3:
        return np.moveaxis(mat, 2, 0)
    return mat


def _apply_1q(tensor: np.ndarray, matrix: np.ndarray, axis: int) -> np.ndarray:
    """Contract a 2x2 (or per-batch (B,2,2)) matrix into one qubit axis."""
    moved = np.moveaxis(tensor, axis, 1)
    shape = moved.shape
    flat = moved.reshape(shape[0], 2, -1)
    if matrix.ndim == 2:
        out = np.einsum("ij,bjm->bim", matrix, flat)
    else:
        out = np.einsum("bij,bjm->bim", matrix, flat)
    return np.moveaxis(out.reshape(shape), 1, axis)


def _apply_cnot(tensor: np.ndarray, control_axis: int, target_axis: int) -> np.ndarray:
    out = tensor.copy()
    index = [slice(None)] * tensor.ndim
    index[control_axis] = 1
    sub = tensor[tuple(index)]
    flip_axis = target_axis - 1 if target_axis > control_axis else target_axis
    out[tuple(index)] = np.flip(sub, axis=flip_axis)
    return out


def apply_gate_batch(
    data: np.ndarray,
    n_qubits: int,
    backend: Backend,
    gate: Gate,
    theta: np.ndarray,
    inputs: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Apply ``gate`` to a batch of states with shape (B, 2^n[, 2^n])."""
    if any(t >= n_qubits for t in gate.targets):
        raise IndexError(f"Gate targets {gate.targets} out of range for {n_qubits} qubits")
    batch = data.shape[0]
    dims = (2,) * n_qubits
    if backend == Backend.STATEVECTOR:
        tensor = data.reshape((batch,) + dims)
        row_axes = [q + 1 for q in range(n_qubits)]
        col_axes: List[int] = []
    else:
        tensor = data.reshape((batch,) + dims + dims)
        row_axes = [q + 1 for q in range(n_qubits)]
        col_axes = [n_qubits + q + 1 for q in range(n_qubits)]

    if gate.kind == GateKind.CNOT:
        control, target = gate.targets
        tensor = _apply_cnot(tensor, row_axes[control], row_axes[target])
        if col_axes:
            tensor = _apply_cnot(tensor, col_axes[control], col_axes[target])
    else:
        angle = gate.resolve_angle(theta, inputs) if gate.kind in ROTATIONS else 0.0
        matrix = gate_matrix(gate.kind, angle)
        if matrix.ndim == 3 and matrix.shape[0] != batch:
            raise ShapeError(
                f"Batched angle of length {matrix.shape[0]} for a batch of {batch}"
            )
        (qubit,) = gate.targets
        tensor = _apply_1q(tensor, matrix, row_axes[qubit])
        if col_axes:
            tensor = _apply_1q(tensor, matrix.conj(), col_axes[qubit])
    return tensor.reshape(data.shape)


def apply_gate(
    state: QuantumState,
    gate: Gate,
    theta: Sequence[float] = (),
    inputs: Optional[Sequence[float]] = None,
) -> QuantumState:
    """Return the state transformed by the gate's unitary."""
    theta_arr = np.asarray(theta, dtype=float)
    inputs_arr = None if inputs is None else np.asarray(inputs, dtype=float)
    data = apply_gate_batch(
        state.data[None], state.n_qubits, state.backend, gate, theta_arr, inputs_arr
    )
    return QuantumState(state.n_qubits, state.backend, data[0])


def apply_channel_batch(data: np.ndarray, channel: KrausChannel) -> np.ndarray:
    """Correlated amplitude damping on a batch of density matrices (B, d, d)."""
    last = data.shape[-1] - 1
    keep = np.sqrt(1.0 - channel.lambda_noise)
    out = data.copy()
    decayed = channel.lambda_noise * data[:, last, last]
    out[:, last, :] *= keep
    out[:, :, last] *= keep
    out[:, 0, 0] += decayed
    return out


def apply_channel(state: QuantumState, channel: KrausChannel) -> QuantumState:
    """rho -> sum_k K_k rho K_k^dagger."""
    if state.backend != Backend.DENSITY_MATRIX:
        raise BackendMismatchError("Kraus channels need the density-matrix backend")
    if channel.n_qubits != state.n_qubits:
        raise ShapeError(
            f"Channel acts on {channel.n_qubits} qubits, state has {state.n_qubits}"
        )
    data = apply_channel_batch(state.data[None], channel)
    return QuantumState(state.n_qubits, state.backend, data[0])


def probabilities_batch(data: np.ndarray, backend: Backend) -> np.ndarray:
    if backend == Backend.STATEVECTOR:
        return np.abs(data) ** 2
    diag = np.real(np.diagonal(data, axis1=1, axis2=2))
    return np.clip(diag, 0.0, None)


def probabilities(state: QuantumState) -> np.ndarray:
    """Measurement probabilities over computational basis states."""
    return probabilities_batch(state.data[None], state.backend)[0]


def expectation_batch(
    data: np.ndarray, backend: Backend, observables: Sequence[Observable]
) -> np.ndarray:
    """Expectations with shape (B, len(observables))."""
    probs = probabilities_batch(data, backend)
    diagonals = np.stack([obs.diagonal() for obs in observables], axis=1)
    return probs @ diagonals


def expectation(state: QuantumState, obs: Observable) -> float:
    """<H> for an observable diagonal in the computational basis."""
    if obs.n_qubits != state.n_qubits:
        raise ShapeError(
            f"Observable on {obs.n_qubits} qubits, state has {state.n_qubits}"
        )
    if state.backend == Backend.STATEVECTOR:
        probs = np.abs(state.data) ** 2
    else:
        probs = np.real(np.diagonal(state.data))
    return float(probs @ obs.diagonal())


def amplitude_encode_batch(features: np.ndarray, n_qubits: int) -> np.ndarray:
    """Zero-pad each row to 2^n and L2-normalize; returns (B, 2^n) complex."""
    _check_qubits(n_qubits)
    features = np.atleast_2d(np.asarray(features, dtype=float))
    dim = 2**n_qubits
    if features.shape[1] > dim:
        raise CapacityError(
            f"{features.shape[1]} features do not fit in {n_qubits} qubits ({dim} amplitudes)"
        )
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0.0):
        raise EncodingError("Cannot amplitude-encode the all-zero vector")
    padded = np.zeros((features.shape[0], dim), dtype=complex)
    padded[:, : features.shape[1]] = features / norms[:, None]
    return padded


def amplitude_encode(x: Sequence[float], n_qubits: int) -> QuantumState:
    """Encode a classical vector as normalized statevector amplitudes."""
    data = amplitude_encode_batch(np.asarray(x, dtype=float)[None], n_qubits)
    return QuantumState(n_qubits, Backend.STATEVECTOR, data[0])


def sample_counts(
    probs: np.ndarray, shots: int, rng: np.random.Generator
) -> np.ndarray:
    """Multinomial measurement counts for ``shots`` repetitions."""
    probs = np.clip(np.asarray(probs, dtype=float), 0.0, None)
    return rng.multinomial(int(shots), probs / probs.sum())
