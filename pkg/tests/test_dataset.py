"""Dataset construction, file loading, and label manipulation."""

import numpy as np
import pytest

import oracles
from marginbound.dataset import (
    LabeledDataset,
    apply_normalization,
    balanced_subsample,
    load_cifar10_bin,
    load_mnist_idx,
    make_synthetic,
    normalization_stats,
    normalize,
    randomize_labels,
)
from marginbound.errors import (
    ArgumentError,
    DataConsistencyError,
    DataFormatError,
    DataIOError,
)


class TestLabeledDataset:
    def test_basic_properties(self):
        ds = LabeledDataset(np.zeros((4, 3)), np.array([0, 1, 1, 0]), 2)
        assert ds.n == 4
        assert ds.dim == 3
        assert ds.class_counts().tolist() == [2, 2]

    def test_rejects_label_out_of_range(self):
        with pytest.raises(ArgumentError):
            LabeledDataset(np.zeros((2, 3)), np.array([0, 2]), 2)

    def test_rejects_negative_label(self):
        with pytest.raises(ArgumentError):
            LabeledDataset(np.zeros((2, 3)), np.array([0, -1]), 2)

    def test_rejects_single_class(self):
        with pytest.raises(ArgumentError):
            LabeledDataset(np.zeros((2, 3)), np.zeros(2, dtype=np.int64), 1)

    def test_rejects_empty(self):
        with pytest.raises(ArgumentError):
            LabeledDataset(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), 2)

    def test_rejects_flat_features(self):
        with pytest.raises(ArgumentError):
            LabeledDataset(np.zeros(4), np.zeros(4, dtype=np.int64), 2)

    def test_rejects_length_mismatch(self):
        with pytest.raises(ArgumentError):
            LabeledDataset(np.zeros((4, 3)), np.zeros(3, dtype=np.int64), 2)


class TestMakeSynthetic:
    def test_shapes_and_grouping(self):
        ds = make_synthetic(3, 5, 4, 6.0, 1.0, seed=0)
        assert ds.features.shape == (12, 5)
        # Rows are grouped class-major.
        assert ds.labels.tolist() == [0] * 4 + [1] * 4 + [2] * 4

    def test_centers_exactly_separated(self):
        # With zero noise every row sits on its center, and all pairwise
        # center distances equal the requested separation exactly in
        # exact arithmetic: |s/sqrt(2) (e_i - e_j)| = s.
        ds = make_synthetic(4, 6, 1, 10.0, 0.0, seed=3)
        for i in range(4):
            for j in range(i + 1, 4):
                d = np.linalg.norm(ds.features[i] - ds.features[j])
                assert d == pytest.approx(10.0, rel=1e-12)

    def test_deterministic_in_seed(self):
        a = make_synthetic(2, 3, 5, 4.0, 1.0, seed=7)
        b = make_synthetic(2, 3, 5, 4.0, 1.0, seed=7)
        c = make_synthetic(2, 3, 5, 4.0, 1.0, seed=8)
        assert np.array_equal(a.features, b.features)
        assert not np.array_equal(a.features, c.features)

    def test_dim_must_cover_classes(self):
        with pytest.raises(ArgumentError):
            make_synthetic(5, 4, 2, 1.0, 1.0, seed=0)

    def test_rejects_negative_noise(self):
        with pytest.raises(ArgumentError):
            make_synthetic(2, 3, 2, 1.0, -0.1, seed=0)


class TestIdxLoading:
    def test_roundtrip(self, tmp_path):
        images = np.arange(3 * 2 * 2, dtype=np.uint8).reshape(3, 2, 2)
        labels = np.array([1, 0, 9], dtype=np.uint8)
        oracles.write_idx_images(tmp_path / "im", images)
        oracles.write_idx_labels(tmp_path / "lb", labels)
        ds = load_mnist_idx(tmp_path / "im", tmp_path / "lb")
        assert ds.n == 3
        assert ds.dim == 4
        assert ds.num_classes == 10
        assert ds.labels.tolist() == [1, 0, 9]
        # Pixels stay raw in [0, 255] as float64, flattened row-major.
        assert np.array_equal(ds.features[1], np.array([4.0, 5.0, 6.0, 7.0]))

    def test_wrong_magic_names_both_values(self, tmp_path):
        oracles.write_idx_labels(tmp_path / "im", np.zeros(2, dtype=np.uint8))
        oracles.write_idx_labels(tmp_path / "lb", np.zeros(2, dtype=np.uint8))
        with pytest.raises(DataFormatError) as err:
            load_mnist_idx(tmp_path / "im", tmp_path / "lb")
        assert "2051" in str(err.value) and "2049" in str(err.value)

    def test_truncated_pixels_reports_offset(self, tmp_path):
        images = np.zeros((2, 2, 2), dtype=np.uint8)
        oracles.write_idx_images(tmp_path / "im", images)
        data = (tmp_path / "im").read_bytes()[:-3]
        (tmp_path / "im").write_bytes(data)
        oracles.write_idx_labels(tmp_path / "lb", np.zeros(2, dtype=np.uint8))
        with pytest.raises(DataIOError) as err:
            load_mnist_idx(tmp_path / "im", tmp_path / "lb")
        assert str(len(data)) in str(err.value)

    def test_count_mismatch(self, tmp_path):
        oracles.write_idx_images(tmp_path / "im",
                                 np.zeros((3, 2, 2), dtype=np.uint8))
        oracles.write_idx_labels(tmp_path / "lb",
                                 np.zeros(2, dtype=np.uint8))
        with pytest.raises(DataConsistencyError):
            load_mnist_idx(tmp_path / "im", tmp_path / "lb")

    def test_label_above_nine_rejected(self, tmp_path):
        oracles.write_idx_images(tmp_path / "im",
                                 np.zeros((1, 2, 2), dtype=np.uint8))
        oracles.write_idx_labels(tmp_path / "lb",
                                 np.array([10], dtype=np.uint8))
        with pytest.raises(DataFormatError):
            load_mnist_idx(tmp_path / "im", tmp_path / "lb")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIOError):
            load_mnist_idx(tmp_path / "nope", tmp_path / "nope2")


class TestCifarLoading:
    def test_roundtrip_two_files_in_order(self, tmp_path):
        rng = np.random.default_rng(1)
        pix1 = rng.integers(0, 256, (2, 3072)).astype(np.uint8)
        pix2 = rng.integers(0, 256, (1, 3072)).astype(np.uint8)
        oracles.write_cifar_bin(tmp_path / "a.bin", [3, 7], pix1)
        oracles.write_cifar_bin(tmp_path / "b.bin", [0], pix2)
        ds = load_cifar10_bin([tmp_path / "a.bin", tmp_path / "b.bin"])
        assert ds.n == 3
        assert ds.labels.tolist() == [3, 7, 0]
        assert np.array_equal(ds.features[2], pix2[0].astype(np.float64))

    def test_bad_record_size(self, tmp_path):
        (tmp_path / "a.bin").write_bytes(b"\x00" * 3072)
        with pytest.raises(DataFormatError):
            load_cifar10_bin([tmp_path / "a.bin"])

    def test_bad_label(self, tmp_path):
        rec = bytes([11]) + b"\x00" * 3072
        (tmp_path / "a.bin").write_bytes(rec)
        with pytest.raises(DataFormatError):
            load_cifar10_bin([tmp_path / "a.bin"])


class TestNormalization:
    def test_stats_are_global_scalars(self):
        feats = np.array([[1.0, 2.0], [3.0, 6.0]])
        ds = LabeledDataset(feats, np.array([0, 1]), 2)
        mean, std = normalization_stats(ds)
        assert mean == pytest.approx(3.0)
        assert std == pytest.approx(feats.std())

    def test_apply_matches_formula(self):
        feats = np.array([[1.0, 2.0], [3.0, 6.0]])
        ds = LabeledDataset(feats, np.array([0, 1]), 2)
        out = apply_normalization(ds, 2.0, 4.0)
        assert np.allclose(out.features, (feats - 2.0) / 4.0)
        assert out.labels is not ds.labels or np.array_equal(out.labels, ds.labels)

    def test_normalize_centers_and_scales(self, tiny_ds):
        out = normalize(tiny_ds)
        assert abs(out.features.mean()) < 1e-12
        assert out.features.std() == pytest.approx(1.0)

    def test_constant_features_do_not_blow_up(self):
        ds = LabeledDataset(np.full((3, 2), 5.0), np.array([0, 1, 0]), 2)
        out = normalize(ds)
        assert np.all(np.isfinite(out.features))
        assert np.allclose(out.features, 0.0)


class TestRandomizeLabels:
    def test_zero_fraction_is_identity(self, tiny_ds):
        out = randomize_labels(tiny_ds, 0.0, seed=3)
        assert np.array_equal(out.labels, tiny_ds.labels)
        assert np.array_equal(out.features, tiny_ds.features)

    def test_deterministic(self, tiny_ds):
        a = randomize_labels(tiny_ds, 0.5, seed=3)
        b = randomize_labels(tiny_ds, 0.5, seed=3)
        assert np.array_equal(a.labels, b.labels)

    def test_frozen_example(self):
        # [DERIVED] frozen output: 3 classes x 4 rows, fraction 0.5,
        # seed 123 selects floor(0.5 * 4 + 0.5) = 2 rows per class and
        # redraws them uniformly over all classes.
        ds = make_synthetic(3, 4, 4, 6.0, 0.5, seed=9)
        out = randomize_labels(ds, 0.5, seed=123)
        assert out.labels.tolist() == [0, 0, 2, 0, 0, 1, 1, 1, 2, 1, 2, 2]

    def test_features_untouched(self, tiny_ds):
        out = randomize_labels(tiny_ds, 1.0, seed=3)
        assert np.array_equal(out.features, tiny_ds.features)

    def test_fraction_bounds(self, tiny_ds):
        with pytest.raises(ArgumentError):
            randomize_labels(tiny_ds, -0.1, seed=0)
        with pytest.raises(ArgumentError):
            randomize_labels(tiny_ds, 1.1, seed=0)

    def test_labels_stay_in_range(self, tiny_ds):
        out = randomize_labels(tiny_ds, 1.0, seed=11)
        assert out.labels.min() >= 0
        assert out.labels.max() < tiny_ds.num_classes


class TestBalancedSubsample:
    def test_counts_and_grouping(self):
        ds = make_synthetic(2, 3, 10, 4.0, 1.0, seed=1)
        out = balanced_subsample(ds, 6, seed=4)
        assert out.n == 6
        assert out.labels.tolist() == [0, 0, 0, 1, 1, 1]

    def test_rows_come_from_source(self):
        ds = make_synthetic(2, 3, 10, 4.0, 1.0, seed=1)
        out = balanced_subsample(ds, 6, seed=4)
        source = {tuple(row) for row in ds.features}
        assert all(tuple(row) in source for row in out.features)

    def test_deterministic(self):
        ds = make_synthetic(2, 3, 10, 4.0, 1.0, seed=1)
        a = balanced_subsample(ds, 6, seed=4)
        b = balanced_subsample(ds, 6, seed=4)
        assert np.array_equal(a.features, b.features)

    def test_indivisible_n_names_both_numbers(self):
        ds = make_synthetic(3, 4, 10, 4.0, 1.0, seed=1)
        with pytest.raises(ArgumentError) as err:
            balanced_subsample(ds, 10, seed=0)
        assert "10" in str(err.value) and "3" in str(err.value)

    def test_oversized_request_rejected(self):
        ds = make_synthetic(2, 3, 4, 4.0, 1.0, seed=1)
        with pytest.raises(ArgumentError):
            balanced_subsample(ds, 10, seed=0)
