"""Tests for the experiment runners."""

import math
import time
from unittest.mock import patch

import numpy as np
import pytest

from vqaopt.circuits import NoisePlacement, evaluate, ground_state_ansatz
from vqaopt.constants import MNIST_META_WEIGHTS
from vqaopt.datasets import Dataset, Split, generate_binary_dataset
from vqaopt.errors import ConfigError
from vqaopt.qsim import KrausChannel, Observable
from vqaopt.tasks import (ClassificationTask, GroundStateTask, Method,
                          binary_accuracy, mse_cost, multiclass_accuracy,
                          multiclass_cost, noisy_ground_state_shift,
                          run_binary_classification, run_ground_state,
                          run_multiclass, run_noise_bell, run_trials,
                          threshold_predict)


class TestCostHelpers:
    """Pure cost and accuracy functions."""

    def test_mse_cost(self):
        assert mse_cost(np.array([[0.5], [0.5]]), [0, 1]) == pytest.approx(0.25)

    def test_binary_accuracy(self):
        assert binary_accuracy([0.2, 0.7], [1, 1]) == 0.5

    def test_threshold_is_inclusive(self):
        np.testing.assert_array_equal(threshold_predict([0.5, 0.4999]), [1, 0])

    def test_multiclass_cost(self):
        outputs = np.eye(3)
        targets = np.array([[1, 0, 0], [0, 1, 0], [0, 1, 0]], dtype=float)
        assert multiclass_cost(outputs, targets) == pytest.approx(2 / 9, abs=1e-12)

    def test_multiclass_accuracy_maps_to_classes(self):
        outputs = np.array([[0.1, 0.8, 0.1], [0.6, 0.2, 0.2]])
        assert multiclass_accuracy(outputs, [4, 7], classes=(3, 4, 5)) == 0.5

    def test_meta_weights(self):
        assert sum(MNIST_META_WEIGHTS) == pytest.approx(1.0)
        assert MNIST_META_WEIGHTS[1] == pytest.approx(10 * MNIST_META_WEIGHTS[0])


class TestGroundState:
    """Energy minimization runs."""

    def test_two_qubit_gradient_descent_converges(self):
        records = run_ground_state(GroundStateTask(n_qubits=2, L=1, epochs=200, seed=0))
        assert [r.epoch for r in records] == list(range(201))
        assert records[-1].cost <= -0.99

    def test_four_qubit_gradient_descent_reaches_ground_state(self):
        best = math.inf
        for seed in range(5):
            records = run_ground_state(GroundStateTask(n_qubits=4, L=4, epochs=200, seed=seed))
            best = min(best, records[-1].cost)
            if best <= -0.95:
                break
        assert best <= -0.95

    @pytest.mark.slow
    def test_lles_smaller_sigma_ends_lower(self):
        means = []
        for sigma in (math.pi / 6, math.pi / 12, math.pi / 24):
            finals = [
                run_ground_state(GroundStateTask(
                    n_qubits=4, L=4, method=Method.LLES, lr=0.1, T=2, sigma=sigma,
                    epochs=200, seed=seed,
                ))[-1].cost
                for seed in range(5)
            ]
            means.append(float(np.mean(finals)))
        assert means[2] <= -0.9
        assert means[0] >= means[1] >= means[2]

    @pytest.mark.parametrize("method,per_epoch", [(Method.GRAD, 32), (Method.LL, 64), (Method.LLES, 48)])
    def test_gradient_executions_per_epoch(self, method, per_epoch):
        records = run_ground_state(GroundStateTask(n_qubits=4, L=4, method=method, epochs=3))
        counts = [r.circuit_executions for r in records]
        assert counts[0] == 0
        assert np.all(np.diff(counts) == per_epoch)

    def test_forward_executions(self):
        records = run_ground_state(GroundStateTask(n_qubits=2, L=1, method=Method.LL, T=2, epochs=2))
        # y0 once, then T unrolled costs per meta-epoch
        assert [r.forward_executions for r in records] == [1, 3, 5]

    def test_initial_record_is_initial_cost(self):
        records = run_ground_state(GroundStateTask(n_qubits=2, L=1, method=Method.LLES, epochs=1))
        assert records[0].epoch == 0
        assert -1.0 <= records[0].cost <= 1.0
        assert records[0].sigma == pytest.approx(math.pi / 24)

    def test_sigma_only_recorded_for_lles(self):
        records = run_ground_state(GroundStateTask(n_qubits=2, L=1, method=Method.LL, epochs=0))
        assert records[0].sigma is None

    def test_deterministic(self):
        task = GroundStateTask(n_qubits=2, L=2, method=Method.LLES, epochs=3, seed=4)
        first = [r.cost for r in run_ground_state(task)]
        second = [r.cost for r in run_ground_state(task)]
        assert first == second

    def test_seeds_differ(self):
        a = run_ground_state(GroundStateTask(n_qubits=2, L=1, epochs=0, seed=0))
        b = run_ground_state(GroundStateTask(n_qubits=2, L=1, epochs=0, seed=1))
        assert a[0].cost != b[0].cost

    def test_lles_needs_sigma(self):
        with pytest.raises(ConfigError):
            GroundStateTask(method=Method.LLES, sigma=None)

    @pytest.mark.parametrize("kwargs", [{"lr": 0.0}, {"epochs": -1}, {"noise_lambda": 1.5}])
    def test_rejects_settings(self, kwargs):
        with pytest.raises(ConfigError):
            GroundStateTask(**kwargs)


class TestNoisyGroundState:
    """Correlated damping after the ansatz."""

    def test_shift_matches_closed_form(self, rng):
        circuit = ground_state_ansatz(3, 2)
        obs = Observable.tensor_z(3)
        theta = rng.uniform(0, 2 * math.pi, circuit.n_params)
        noisy = evaluate(circuit, theta, obs, noise=KrausChannel(0.3, 3))
        expected = evaluate(circuit, theta, obs) + noisy_ground_state_shift(circuit, theta, 0.3)
        assert noisy == pytest.approx(expected, abs=1e-12)

    def test_all_ones_state_is_lifted(self):
        circuit = ground_state_ansatz(3, 1)
        obs = Observable.tensor_z(3)
        theta = [math.pi / 2, -math.pi / 2, -math.pi / 2]
        assert evaluate(circuit, theta, obs) == pytest.approx(-1.0, abs=1e-12)
        noisy = evaluate(circuit, theta, obs, noise=KrausChannel(0.2, 3))
        assert noisy == pytest.approx(-0.6, abs=1e-12)

    def test_even_register_has_no_shift(self, rng):
        circuit = ground_state_ansatz(4, 1)
        theta = rng.uniform(0, 2 * math.pi, 4)
        assert noisy_ground_state_shift(circuit, theta, 0.7) == 0.0

    def test_noisy_run_records_lambda(self):
        records = run_ground_state(GroundStateTask(
            n_qubits=3, L=1, noise_lambda=0.2, epochs=2,
            noise_placement=NoisePlacement.PER_LAYER,
        ))
        assert all(r.noise_lambda == 0.2 for r in records)
        assert all(-1.0 <= r.cost <= 1.0 for r in records)

    def test_damping_follows_every_layer_by_default(self):
        assert GroundStateTask().noise_placement == NoisePlacement.PER_LAYER

    def test_training_stays_above_ground_energy(self):
        task = GroundStateTask(n_qubits=3, L=4, noise_lambda=0.2, lr=0.1, epochs=200, seed=0)
        best = min(r.cost for r in run_ground_state(task))
        assert best > -1.0 + 0.02


class TestBell:
    """Damped Bell-state probabilities."""

    def test_exact_probabilities(self):
        lambdas = [0.0, 0.1, 0.5, 1.0]
        for lam, probs in zip(lambdas, run_noise_bell(lambdas)):
            np.testing.assert_allclose(probs, [0.5 + lam / 2, 0.0, 0.0, 0.5 * (1 - lam)], atol=1e-12)

    def test_sampled_frequencies(self):
        (first,) = run_noise_bell([0.2], shots=2000, seed=3)
        (second,) = run_noise_bell([0.2], shots=2000, seed=3)
        np.testing.assert_array_equal(first, second)
        assert first.sum() == pytest.approx(1.0)
        assert first[1] == first[2] == 0.0
        assert first[0] == pytest.approx(0.6, abs=0.05)


class TestClassification:
    """Binary and MNIST training loops."""

    def test_binary_cost_decreases(self):
        train, test = generate_binary_dataset(20, 10, seed=0)
        records = run_binary_classification(
            ClassificationTask(train=train, test=test, lr=0.05, epochs=5, seed=1)
        )
        assert len(records) == 6
        assert records[-1].cost < records[0].cost
        assert all(0.0 <= r.accuracy <= 1.0 for r in records)
        assert records[0].L == 8 and records[0].n_qubits == 4

    @pytest.mark.slow
    def test_binary_gradient_descent_accuracy(self):
        accuracies = []
        for seed in range(5):
            train, test = generate_binary_dataset(100, 40, seed=seed)
            records = run_binary_classification(
                ClassificationTask(train=train, test=test, lr=0.01, epochs=50, seed=seed)
            )
            accuracies.append(records[-1].accuracy)
        assert sum(a >= 0.9 for a in accuracies) >= 3

    def test_binary_starts_from_zero_angles(self):
        train, test = generate_binary_dataset(20, 10, seed=0)
        (record,) = run_binary_classification(ClassificationTask(train=train, test=test, epochs=0))
        expected = mse_cost(np.cos(train.features[:, 1] / 2) ** 2, train.labels)
        assert record.cost == pytest.approx(expected, abs=1e-12)

    def test_binary_minibatches_charge_per_example(self):
        train, test = generate_binary_dataset(20, 10, seed=0)
        records = run_binary_classification(
            ClassificationTask(train=train, test=test, epochs=1, batch_size=4, seed=2)
        )
        # 2p shifted evaluations of a 4-example batch
        assert records[1].circuit_executions == 2 * 32 * 4

    def test_multiclass_initial_epoch(self, rng):
        train = Dataset(rng.uniform(0, 1, (6, 784)), [0, 1, 2, 0, 1, 2], Split.TRAIN, (0, 1, 2))
        test = Dataset(rng.uniform(0, 1, (3, 784)), [0, 1, 2], Split.TEST, (0, 1, 2))
        (record,) = run_multiclass(ClassificationTask(train=train, test=test, epochs=0, n_qubits=10))
        assert record.experiment == "mnist"
        assert (record.n_qubits, record.L) == (10, 15)
        assert 0.0 <= record.cost <= 1.0
        assert record.accuracy in (0.0, 1 / 3, 2 / 3, 1.0)

    @pytest.mark.parametrize("T,expected", [(2, MNIST_META_WEIGHTS), (3, (1.0, 1.0, 1.0))])
    def test_multiclass_meta_weights(self, rng, T, expected):
        train = Dataset(rng.uniform(0, 1, (3, 784)), [0, 1, 2], Split.TRAIN, (0, 1, 2))
        test = Dataset(rng.uniform(0, 1, (3, 784)), [0, 1, 2], Split.TEST, (0, 1, 2))
        task = ClassificationTask(train=train, test=test, method=Method.LL, T=T, epochs=1,
                                  n_qubits=10)
        seen = []

        def capture(params, objective, theta0, cfg, **kwargs):
            seen.append(cfg.w)
            raise RuntimeError("stop after capturing the unroll config")

        with patch("vqaopt.tasks.meta_epoch", side_effect=capture):
            with pytest.raises(RuntimeError):
                run_multiclass(task)
        assert seen == [tuple(expected)]


def test_run_trials_keeps_seed_order():
    def slow_square(seed):
        time.sleep(0.01 * (5 - seed))
        return seed * seed

    assert run_trials(slow_square, [0, 1, 2, 3, 4], workers=3) == [0, 1, 4, 9, 16]
    assert run_trials(slow_square, [3, 1], workers=1) == [9, 1]
