import numpy as np
import pytest
from numpy.testing import assert_array_equal
from scipy.optimize import linprog

from datasets import build_dataset, dataset_list
from datasets.boundary import boundary_grid, write_boundary_csv
from datasets.toy import CATEGORY_A, CATEGORY_B, EXTRA_B, toy_dataset, toy_dataset_extended
from datasets.toy_images import toy_images
from datasets.utils import LabeledDataset, load_csv, one_hot, split, write_csv
from gradforge import activation as act
from gradforge.errors import ConfigError, DomainError, LabelError, ParseError
from gradforge.network import DenseLayer, NetworkSpec


class TestToy:

    def test_counts_and_range(self):
        data = toy_dataset()
        assert len(data) == 10
        assert np.bincount(data.labels).tolist() == [5, 5]
        assert data.inputs.min() >= 0.0 and data.inputs.max() <= 1.0
        assert data.input_shape == (2,)

    def test_extended(self):
        data = toy_dataset_extended()
        assert len(data) == 11
        assert_array_equal(data.inputs[-1], EXTRA_B)
        assert data.labels[-1] == 1

    def test_not_linearly_separable(self):
        # Feasibility of s_i (w . x_i + b) >= 1 over free (w, b).
        points = np.array(CATEGORY_A + CATEGORY_B)
        signs = np.array([-1.0] * len(CATEGORY_A) + [1.0] * len(CATEGORY_B))
        A_ub = -signs[:, None] * np.column_stack([points, np.ones(len(points))])
        result = linprog(np.zeros(3), A_ub=A_ub, b_ub=-np.ones(len(points)), bounds=[(None, None)] * 3)
        assert result.status == 2

    def test_rejects_other_shapes(self):
        with pytest.raises(ConfigError, match="data.n_features"):
            build_dataset("toy", n_features=3)


class TestCsv:

    def test_two_points(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("# x, y, label\n0.1,0.2,0\n\n0.9,0.8,1\n")
        data = load_csv(str(path), 2, 2)
        assert_array_equal(data.inputs, [[0.1, 0.2], [0.9, 0.8]])
        assert_array_equal(data.labels, [0, 1])

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        with pytest.raises(DomainError):
            load_csv(str(path), 2, 2)

    def test_malformed_row(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b,0\n")
        with pytest.raises(ParseError) as info:
            load_csv(str(path), 2, 2)
        assert info.value.line == 1

    def test_wrong_field_count_reports_line(self, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("0.1,0.2,0\n0.3,1\n")
        with pytest.raises(ParseError) as info:
            load_csv(str(path), 2, 2)
        assert info.value.line == 2

    def test_label_out_of_range(self, tmp_path):
        path = tmp_path / "labels.csv"
        path.write_text("0.1,0.2,2\n")
        with pytest.raises(LabelError):
            load_csv(str(path), 2, 2)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_csv(str(tmp_path / "absent.csv"), 2, 2)

    def test_round_trip(self, tmp_path, rng):
        data = LabeledDataset(rng.uniform(size=(7, 3)), rng.integers(4, size=7), 4)
        path = str(tmp_path / "nested" / "data.csv")
        write_csv(data, path)
        again = load_csv(path, 3, 4)
        assert_array_equal(again.inputs, data.inputs)
        assert_array_equal(again.labels, data.labels)


class TestSplit:

    def test_sizes_and_disjoint(self):
        parts = split(toy_dataset(), 0.2, seed=3)
        assert len(parts.train) == 8 and len(parts.validation) == 2
        assert not set(parts.train_indices) & set(parts.val_indices)
        assert list(parts.train_indices) == sorted(parts.train_indices)

    def test_deterministic(self):
        a, b = split(toy_dataset(), 0.3, seed=5), split(toy_dataset(), 0.3, seed=5)
        assert_array_equal(a.val_indices, b.val_indices)

    def test_random_fractions(self, rng):
        for _ in range(50):
            n = int(rng.integers(1, 60))
            fraction = float(rng.uniform(0.0, 0.99))
            data = LabeledDataset(rng.uniform(size=(n, 2)), rng.integers(2, size=n), 2)
            parts = split(data, fraction, seed=int(rng.integers(1000)))
            assert len(parts.validation) == int(round(fraction * n))
            assert sorted(np.concatenate([parts.train_indices, parts.val_indices]).tolist()) == list(range(n))

    def test_zero_fraction_keeps_everything(self):
        parts = split(toy_dataset(), 0.0, seed=1)
        assert len(parts.train) == 10 and len(parts.validation) == 0

    @pytest.mark.parametrize("fraction", [-0.1, 1.0])
    def test_fraction_range(self, fraction):
        with pytest.raises(ConfigError, match="data.val_fraction"):
            split(toy_dataset(), fraction, seed=1)


class TestLabels:

    def test_one_hot(self):
        assert_array_equal(one_hot([2, 0], 3), [[0, 0, 1], [1, 0, 0]])

    def test_one_hot_range(self):
        with pytest.raises(LabelError):
            one_hot([3], 3)

    def test_dataset_rejects_bad_label(self):
        with pytest.raises(LabelError):
            LabeledDataset(np.zeros((2, 2)), [0, 5], 2)


def _constant_net(bias):
    return NetworkSpec((2,), [DenseLayer(np.zeros((2, 2)), np.array(bias, dtype=float), act.Identity)])


class TestBoundary:

    def test_corners(self):
        grid = boundary_grid(_constant_net([0.0, 1.0]), 2)
        assert len(grid) == 4
        assert_array_equal(grid.xs, [0.0, 1.0, 0.0, 1.0])
        assert_array_equal(grid.ys, [0.0, 0.0, 1.0, 1.0])

    def test_constant_network_predicts_one_class(self):
        grid = boundary_grid(_constant_net([0.0, 1.0]), 11)
        assert np.all(grid.classes == 1)

    def test_needs_two_inputs(self):
        net = NetworkSpec((3,), [DenseLayer(np.zeros((2, 3)), np.zeros(2), act.Identity)])
        with pytest.raises(DomainError):
            boundary_grid(net, 5)

    def test_resolution(self):
        with pytest.raises(DomainError):
            boundary_grid(_constant_net([0.0, 0.0]), 1)

    def test_csv(self, tmp_path):
        path = tmp_path / "boundary.csv"
        write_boundary_csv(boundary_grid(_constant_net([0.5, 0.25]), 3), str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == "x,y,class,out_0,out_1"
        assert len(lines) == 10
        assert lines[1] == "0,0,0,0.5,0.25"


class TestToyImages:

    def test_shapes(self):
        data = toy_images(20, seed=1, size=8, classes=4)
        assert data.inputs.shape == (20, 8 * 8 * 3)
        assert data.input_shape == (8, 8, 3)
        assert np.bincount(data.labels).tolist() == [5, 5, 5, 5]
        assert data.inputs.min() >= 0.0 and data.inputs.max() <= 1.0

    def test_deterministic(self):
        a, b = toy_images(6, seed=2, size=8), toy_images(6, seed=2, size=8)
        assert_array_equal(a.inputs, b.inputs)
        assert_array_equal(a.labels, b.labels)
        assert not np.array_equal(a.inputs, toy_images(6, seed=3, size=8).inputs)


class TestRegistry:

    def test_registered_names(self):
        assert set(dataset_list) == {"toy", "toy_extended", "toy_images"}
        assert len(build_dataset("toy_extended")) == 11
        assert len(build_dataset("toy_images", classes=3, samples=9)) == 9

    def test_falls_back_to_csv(self, tmp_path):
        path = tmp_path / "points.csv"
        path.write_text("0.5,0.5,1\n")
        assert build_dataset(str(path)).labels.tolist() == [1]
