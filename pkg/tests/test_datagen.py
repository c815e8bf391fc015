import itertools
import struct

import numpy as np
import pytest

from metriclab.datagen import (
    OUTLIER,
    Dataset,
    SyntheticConfig,
    generate_synthetic,
    load_embeddings,
    load_idx,
    save_embeddings,
    train_test_split,
    write_idx,
)
from metriclab.errors import BadMagic, CountMismatch, NonFiniteValue, ShapeHeaderMismatch, TruncatedFile
from metriclab.numcore import RngStream


@pytest.fixture(scope="module")
def default_data():
    return generate_synthetic(SyntheticConfig(seed=0))


class TestSynthetic:
    def test_default_counts(self, default_data):
        ds = default_data
        assert ds.features.shape == (2100, 128)
        assert np.count_nonzero(ds.labels == OUTLIER) == 100
        assert set(np.unique(ds.labels[:2000])) <= set(range(10))
        assert np.all(ds.labels[2000:] == OUTLIER)

    def test_no_noise_labels(self):
        ds = generate_synthetic(SyntheticConfig(overlap_prob=0.0, outlier_fraction=0.0, seed=4))
        assert len(ds) == 2000
        np.testing.assert_array_equal(ds.labels, np.repeat(np.arange(10), 200))

    def test_deterministic(self):
        a = generate_synthetic(SyntheticConfig(seed=9, samples_per_class=20, dim=16))
        b = generate_synthetic(SyntheticConfig(seed=9, samples_per_class=20, dim=16))
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()
        c = generate_synthetic(SyntheticConfig(seed=10, samples_per_class=20, dim=16))
        assert a.features.tobytes() != c.features.tobytes()

    @pytest.mark.parametrize("C,n,frac", [(10, 200, 0.05), (3, 7, 0.5), (4, 10, 0.0), (5, 9, 0.33)])
    def test_outlier_count(self, C, n, frac):
        ds = generate_synthetic(SyntheticConfig(num_classes=C, samples_per_class=n, dim=8, outlier_fraction=frac))
        assert np.count_nonzero(ds.labels == OUTLIER) == int(np.floor(C * n * frac))

    def test_classes_separated_along_centroid_axes(self, default_data):
        # Raw Euclidean spread (trace of 1.96 A A^T ~ 1.96 d^2) exceeds centroid gaps
        # (~5 sqrt(2d)), but along each centroid-difference direction the
        # projected spread is ~1.4 sqrt(d), so the gap exceeds both class std devs combined.
        X = default_data.features[:2000]
        y = np.repeat(np.arange(10), 200)
        cent = np.array([X[y == c].mean(axis=0) for c in range(10)])
        for a, b in itertools.combinations(range(10), 2):
            u = cent[a] - cent[b]
            gap = np.linalg.norm(u)
            u /= gap
            assert gap > 1.5 * (np.std(X[y == a] @ u) + np.std(X[y == b] @ u))

    def test_label_flip_rate(self):
        p, C, n = 0.1, 10, 200
        flips = []
        for seed in range(10):
            ds = generate_synthetic(SyntheticConfig(seed=seed, dim=4, outlier_fraction=0.0))
            flips.append(ds.labels != np.repeat(np.arange(C), n))
        rate = np.mean(flips)
        expected = p * (C - 1) / C
        se = np.sqrt(expected * (1 - expected) / (10 * C * n))
        assert abs(rate - expected) < 3 * se

    def test_cluster_covariance_structure(self):
        cfg = SyntheticConfig(num_classes=1, samples_per_class=4000, dim=3, overlap_prob=0.0,
                              outlier_fraction=0.0, seed=2)
        ds = generate_synthetic(cfg)
        # replay the documented draw order to recover centre and mixing matrix
        rng = RngStream(2)
        centre = 5.0 * rng.normal((1, 3))[0]
        A = rng.normal((3, 3))
        expected_cov = 1.4 ** 2 * (A @ A.T + 1e-3 * np.eye(3))
        np.testing.assert_allclose(ds.features.mean(axis=0), centre, atol=0.15 * np.sqrt(np.diag(expected_cov)).max())
        np.testing.assert_allclose(np.cov(ds.features.T), expected_cov, rtol=0.1, atol=0.1 * np.abs(expected_cov).max())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            SyntheticConfig(overlap_prob=1.5)
        with pytest.raises(ValueError):
            SyntheticConfig(noise_scale=0.0)
        with pytest.raises(ValueError):
            SyntheticConfig(num_classes=0)


def test_train_test_split_stratified(default_data):
    tr, te = train_test_split(default_data, 0.2, RngStream(1))
    assert len(tr) + len(te) == len(default_data)
    for lab in np.unique(default_data.labels):
        total = np.count_nonzero(default_data.labels == lab)
        assert np.count_nonzero(te.labels == lab) == round(total * 0.2)
    merged = np.vstack([tr.features, te.features])
    assert len(np.unique(merged, axis=0)) == len(default_data)


class TestIdx:
    def test_single_zero_image(self, tmp_path):
        write_idx(np.zeros((1, 28, 28)), [7], tmp_path / "img", tmp_path / "lab")
        ds = load_idx(tmp_path / "img", tmp_path / "lab")
        assert ds.features.shape == (1, 784)
        assert np.all(ds.features == 0.0)
        assert ds.labels.tolist() == [7]
        img = load_idx(tmp_path / "img", tmp_path / "lab", image_mode=True)
        assert img.features.shape == (1, 1, 28, 28)

    def test_scaling(self, tmp_path):
        pix = np.arange(2 * 28 * 28).reshape(2, 28, 28) % 256
        write_idx(pix, [1, 2], tmp_path / "img", tmp_path / "lab")
        ds = load_idx(tmp_path / "img", tmp_path / "lab")
        np.testing.assert_allclose(ds.features.reshape(2, 28, 28), pix / 255.0)
        assert ds.features.max() <= 1.0

    def test_count_mismatch(self, tmp_path):
        write_idx(np.zeros((10, 28, 28)), np.zeros(9), tmp_path / "img", tmp_path / "lab")
        with pytest.raises(CountMismatch):
            load_idx(tmp_path / "img", tmp_path / "lab")

    def test_bad_magic(self, tmp_path):
        write_idx(np.zeros((1, 28, 28)), [0], tmp_path / "img", tmp_path / "lab")
        with pytest.raises(BadMagic):
            load_idx(tmp_path / "lab", tmp_path / "img")

    def test_truncated(self, tmp_path):
        write_idx(np.zeros((3, 28, 28)), [0, 1, 2], tmp_path / "img", tmp_path / "lab")
        raw = (tmp_path / "img").read_bytes()
        (tmp_path / "img").write_bytes(raw[:-10])
        with pytest.raises(TruncatedFile):
            load_idx(tmp_path / "img", tmp_path / "lab")
        (tmp_path / "img").write_bytes(raw[:6])
        with pytest.raises(TruncatedFile):
            load_idx(tmp_path / "img", tmp_path / "lab")

    def test_header_is_big_endian(self, tmp_path):
        write_idx(np.zeros((2, 28, 28)), [3, 4], tmp_path / "img", tmp_path / "lab")
        head = (tmp_path / "img").read_bytes()[:16]
        assert struct.unpack(">4I", head) == (0x803, 2, 28, 28)


class TestEmbeddingFiles:
    def test_emb1_round_trip(self, tmp_path):
        ds = Dataset(np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]), np.array([0, 1, 0]))
        save_embeddings(ds, tmp_path / "e.emb1")
        back = load_embeddings(tmp_path / "e.emb1")
        assert back.features.tobytes() == ds.features.tobytes()
        np.testing.assert_array_equal(back.labels, ds.labels)

    def test_emb1_layout(self, tmp_path):
        ds = Dataset(np.array([[0.5, -2.0]]), np.array([-1]))
        save_embeddings(ds, tmp_path / "e.bin")
        raw = (tmp_path / "e.bin").read_bytes()
        assert raw[:4] == b"EMB1"
        assert struct.unpack("<II", raw[4:12]) == (1, 2)
        assert struct.unpack("<2f", raw[12:20]) == (0.5, -2.0)
        assert struct.unpack("<i", raw[20:24]) == (-1,)
        assert len(raw) == 24

    def test_round_trip_float32_values_bit_exact(self, tmp_path):
        rng = RngStream(3)
        feats = rng.normal((20, 5)).astype(np.float32).astype(np.float64)
        ds = Dataset(feats, rng.integers(4, 20) - 1)
        save_embeddings(ds, tmp_path / "r.emb1")
        back = load_embeddings(tmp_path / "r.emb1")
        assert back.features.tobytes() == ds.features.tobytes()
        assert back.labels.tobytes() == ds.labels.tobytes()

    def test_csv(self, tmp_path):
        (tmp_path / "e.csv").write_text("label,f0,f1\n0,1.0,0.0\n1,0.0,1.0\n")
        ds = load_embeddings(tmp_path / "e.csv")
        assert ds.features.shape == (2, 2)
        assert ds.labels.tolist() == [0, 1]

    def test_csv_round_trip(self, tmp_path):
        ds = Dataset(RngStream(1).normal((4, 3)), np.array([0, 1, -1, 2]))
        save_embeddings(ds, tmp_path / "x.csv")
        back = load_embeddings(tmp_path / "x.csv")
        assert back.features.tobytes() == ds.features.tobytes()

    def test_nan_rejected(self, tmp_path):
        (tmp_path / "n.csv").write_text("label,f0,f1\n0,nan,0.0\n")
        with pytest.raises(NonFiniteValue):
            load_embeddings(tmp_path / "n.csv")
        ds = Dataset(np.array([[np.nan, 1.0]]), np.array([0]))
        save_embeddings(ds, tmp_path / "n.emb1")
        with pytest.raises(NonFiniteValue):
            load_embeddings(tmp_path / "n.emb1")

    def test_header_mismatch_and_magic(self, tmp_path):
        ds = Dataset(np.ones((3, 2)), np.zeros(3, dtype=int))
        save_embeddings(ds, tmp_path / "e.emb1")
        raw = (tmp_path / "e.emb1").read_bytes()
        (tmp_path / "e.emb1").write_bytes(raw[:-4])
        with pytest.raises(ShapeHeaderMismatch):
            load_embeddings(tmp_path / "e.emb1")
        (tmp_path / "bad.bin").write_bytes(b"XXXX" + raw[4:])
        with pytest.raises(BadMagic):
            load_embeddings(tmp_path / "bad.bin")
        (tmp_path / "bad.csv").write_text("lab,f0\n0,1\n")
        with pytest.raises(BadMagic):
            load_embeddings(tmp_path / "bad.csv")
        (tmp_path / "short.csv").write_text("label,f0,f1\n0,1\n")
        with pytest.raises(ShapeHeaderMismatch):
            load_embeddings(tmp_path / "short.csv")


def test_dataset_invariants():
    with pytest.raises(CountMismatch):
        Dataset(np.ones((3, 2)), np.zeros(2, dtype=int))
    with pytest.raises(ValueError):
        Dataset(np.ones((1, 2)), np.array([-2]))
