"""Test configuration and fixtures."""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add src to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent / "src"))


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: multi-seed training runs (deselect with -m \"not slow\")")


@pytest.fixture
def rng():
    """Seeded generator so random-input tests are reproducible."""
    return np.random.default_rng(1234)


@pytest.fixture
def counter():
    from vqaopt.grad import ExecutionCounter

    return ExecutionCounter()


@pytest.fixture
def two_qubit_objective(counter):
    """<Z x Z> on the n=2, L=1 ground-state ansatz; equals -sin(theta[1])."""
    from vqaopt.circuits import evaluate, ground_state_ansatz
    from vqaopt.grad import ObjectiveHandle
    from vqaopt.qsim import Observable

    circuit = ground_state_ansatz(2, 1)
    obs = Observable.tensor_z(2)
    return ObjectiveHandle(
        lambda theta: evaluate(circuit, theta, obs, counter=counter),
        circuit.n_params,
        counter,
    )


@pytest.fixture
def idx_files(tmp_path):
    """Tiny IDX image/label pair: 5 images of each digit 0-3, 28x28."""
    from vqaopt.datasets import write_idx_images, write_idx_labels

    labels = np.repeat(np.arange(4), 5).astype(np.uint8)
    images = np.zeros((labels.shape[0], 28, 28), dtype=np.uint8)
    for k, label in enumerate(labels):
        images[k, label, :] = 255
        images[k, 27, k] = 17
    images_path = tmp_path / "images-idx3-ubyte"
    labels_path = tmp_path / "labels-idx1-ubyte"
    write_idx_images(images_path, images)
    write_idx_labels(labels_path, labels)
    return images_path, labels_path, images, labels
