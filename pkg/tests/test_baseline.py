import numpy as np
import pytest

from sdembed.baseline import (
    Dataset,
    TrainConfig,
    TrainingError,
    dataset_csv_text,
    generate_dataset,
    train_backprop,
    write_dataset_csv,
)
from sdembed.dual import solve_moment
from sdembed.evaluate import analytic_ou_moment
from sdembed.network import SigmoidNet, forward
from sdembed.sde import builtin_model


@pytest.fixture(scope="module")
def ou_coeffs():
    model = builtin_model("ou", {"gamma": 1.0, "sigma": 1.0})
    return solve_moment(model, axis=1, power=1, t=1.0, max_degree=12)


class TestGenerateDataset:
    def test_targets_match_analytic_ou(self, ou_coeffs):
        data = generate_dataset(ou_coeffs, [(-2.0, 2.0)], size=5, seed=0)
        expected = analytic_ou_moment(1, 1, data.inputs[:, 0], 1.0, 1)
        assert np.allclose(data.targets, expected, atol=1e-8)

    def test_inputs_inside_region(self, ou_coeffs):
        data = generate_dataset(ou_coeffs, [(-2.0, 2.0)], size=500, seed=1)
        assert data.inputs.min() >= -2.0 and data.inputs.max() <= 2.0

    def test_point_region_degenerates(self, ou_coeffs):
        data = generate_dataset(ou_coeffs, [(0.7, 0.7)], size=4, seed=2)
        assert np.array_equal(data.inputs, np.full((4, 1), 0.7))
        assert np.all(data.targets == data.targets[0])

    def test_seed_determinism(self, ou_coeffs):
        a = generate_dataset(ou_coeffs, [(-1.0, 1.0)], size=50, seed=3)
        b = generate_dataset(ou_coeffs, [(-1.0, 1.0)], size=50, seed=3)
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.targets, b.targets)
        assert a.generator_fingerprint == b.generator_fingerprint

    def test_bad_size(self, ou_coeffs):
        with pytest.raises(ValueError):
            generate_dataset(ou_coeffs, [(-1.0, 1.0)], size=0, seed=0)

    def test_region_dimension_mismatch(self, ou_coeffs):
        with pytest.raises(ValueError):
            generate_dataset(ou_coeffs, [(-1.0, 1.0), (-1.0, 1.0)], size=3, seed=0)


class TestTrainBackprop:
    def test_teacher_student_recovery(self):
        rng = np.random.default_rng(0)
        teacher = SigmoidNet(
            rng.uniform(-1, 1, 4), rng.uniform(-1, 1, (4, 2)), rng.uniform(-1, 1, 4)
        )
        inputs = rng.uniform(-2, 2, (20_000, 2))
        data = Dataset(inputs, forward(teacher, inputs), ((-2.0, 2.0), (-2.0, 2.0)), "teacher", 0)
        result = train_backprop(data, (4, 2), TrainConfig(epochs=60, batch_size=128, seed=3))
        assert result.loss_trace[-1] < 1e-4

    def test_constant_target_learned(self):
        rng = np.random.default_rng(1)
        inputs = rng.uniform(-1, 1, (5_000, 1))
        data = Dataset(inputs, np.full(5_000, 0.7), ((-1.0, 1.0),), "const", 1)
        result = train_backprop(data, (3, 1), TrainConfig(epochs=100, batch_size=128, seed=1))
        probe = np.linspace(-1, 1, 41)[:, None]
        assert np.max(np.abs(forward(result.net, probe) - 0.7)) < 1e-3

    def test_loss_trace_smoothed_non_increasing(self, ou_coeffs):
        data = generate_dataset(ou_coeffs, [(-2.0, 2.0)], size=4_000, seed=4)
        result = train_backprop(data, (4, 1), TrainConfig(epochs=40, batch_size=128, seed=4))
        window = 10
        smoothed = np.convolve(result.loss_trace, np.ones(window) / window, mode="valid")
        assert np.all(np.diff(smoothed) <= 1e-12)

    def test_seed_determinism(self, ou_coeffs):
        data = generate_dataset(ou_coeffs, [(-2.0, 2.0)], size=1_000, seed=5)
        config = TrainConfig(epochs=5, batch_size=64, seed=5)
        a = train_backprop(data, (3, 1), config)
        b = train_backprop(data, (3, 1), config)
        assert np.array_equal(a.net.out_weights, b.net.out_weights)
        assert np.array_equal(a.net.in_weights, b.net.in_weights)
        assert np.array_equal(a.net.biases, b.net.biases)
        assert np.array_equal(a.loss_trace, b.loss_trace)

    def test_result_is_shared_network_type(self, ou_coeffs):
        data = generate_dataset(ou_coeffs, [(-1.0, 1.0)], size=200, seed=6)
        result = train_backprop(data, (2, 1), TrainConfig(epochs=2, batch_size=32, seed=6))
        assert isinstance(result.net, SigmoidNet)

    def test_divergence_raises_with_epoch(self):
        inputs = np.linspace(-1, 1, 64)[:, None]
        data = Dataset(inputs, np.full(64, 1e200), ((-1.0, 1.0),), "huge", 0)
        with pytest.raises(TrainingError, match="epoch"):
            train_backprop(data, (2, 1), TrainConfig(epochs=3, batch_size=16, seed=0))

    def test_architecture_dimension_mismatch(self, ou_coeffs):
        data = generate_dataset(ou_coeffs, [(-1.0, 1.0)], size=100, seed=7)
        with pytest.raises(ValueError):
            train_backprop(data, (2, 2), TrainConfig(epochs=1, seed=0))


class TestDatasetCsv:
    def test_layout_and_round_trip_values(self, ou_coeffs, tmp_path):
        data = generate_dataset(ou_coeffs, [(-2.0, 2.0)], size=7, seed=8)
        path = tmp_path / "data.csv"
        write_dataset_csv(data, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x_1,target"
        assert len(lines) == 8
        first = lines[1].split(",")
        assert float(first[0]) == data.inputs[0, 0]
        assert float(first[1]) == data.targets[0]

    def test_text_matches_file(self, ou_coeffs, tmp_path):
        data = generate_dataset(ou_coeffs, [(-1.0, 1.0)], size=3, seed=9)
        path = tmp_path / "data.csv"
        write_dataset_csv(data, path)
        assert path.read_text() == dataset_csv_text(data)
