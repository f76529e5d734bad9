import math

import numpy as np
import pytest

from phaseprobe.datagen import (
    LabeledDataset,
    dataset_to_csv,
    gen_disk_sinusoid,
    gen_gaussian_linear,
    gen_sinusoid_highdim,
    gen_sparse_problem,
    inline_dataset,
    labels_to_pm1,
    load_binary_mnist,
    load_dataset,
    save_dataset,
)
from conftest import write_idx_images, write_idx_labels


def test_determinism_identical_bytes():
    for gen in (
        lambda s: gen_sinusoid_highdim(200, d=20, seed=s, task_seed=3),
        lambda s: gen_gaussian_linear(200, seed=s, task_seed=3),
        lambda s: gen_disk_sinusoid(200, seed=s),
        lambda s: gen_sparse_problem(5, 40, 0.2, seed=s),
    ):
        a, b = gen(7), gen(7)
        assert a.features.tobytes() == b.features.tobytes()
        assert a.labels.tobytes() == b.labels.tobytes()
        c = gen(8)
        assert a.features.tobytes() != c.features.tobytes()


# --- high-dimensional sinusoid -------------------------------------------------


def test_sinusoid_orthogonal_pair():
    ds = gen_sinusoid_highdim(10, d=100, seed=0, task_seed=5)
    w = np.array(ds.spec["w"])
    wp = np.array(ds.spec["w_prime"])
    assert abs(w @ wp) <= 1e-12
    assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(wp) == pytest.approx(ds.spec["w_prime_norm"], abs=1e-12)
    ds1 = gen_sinusoid_highdim(10, d=100, seed=0, task_seed=5, w_prime_norm=1.0)
    assert np.linalg.norm(np.array(ds1.spec["w_prime"])) == pytest.approx(1.0, abs=1e-12)


def test_sinusoid_label_rule():
    ds = gen_sinusoid_highdim(500, d=30, seed=1, task_seed=2)
    w = np.array(ds.spec["w"])
    wp = np.array(ds.spec["w_prime"])
    expected = (ds.features @ w + np.sin(ds.features @ wp) > 0).astype(np.uint8)
    assert np.array_equal(ds.labels, expected)
    # a point along w has sin<w',x> = 0 and positive linear term -> label 1
    assert float(2.0 * (w @ w) + math.sin(wp @ (2.0 * w))) > 0


def test_sinusoid_train_test_share_task():
    train = gen_sinusoid_highdim(50, d=40, seed=0, task_seed=9)
    test = gen_sinusoid_highdim(50, d=40, seed=1, task_seed=9)
    assert train.spec["w"] == test.spec["w"]
    assert train.spec["w_prime"] == test.spec["w_prime"]
    assert train.features.tobytes() != test.features.tobytes()


def test_sinusoid_linear_accuracy_and_balance():
    ds = gen_sinusoid_highdim(10**5, d=100, seed=0, task_seed=0)
    w = np.array(ds.spec["w"])
    wp = np.array(ds.spec["w_prime"])
    # best linear direction regresses the sinusoid term onto <w',x>
    kappa = np.exp(-ds.spec["w_prime_norm"] ** 2 / 2)
    best_acc = ((ds.features @ (w + kappa * wp) > 0) == ds.labels).mean()
    assert best_acc == pytest.approx(0.80, abs=0.02)
    signw_acc = ((ds.features @ w > 0).astype(np.uint8) == ds.labels).mean()
    assert signw_acc == pytest.approx(0.77, abs=0.02)
    assert ds.labels.mean() == pytest.approx(0.5, abs=0.01)


def test_sinusoid_rejects_small_dim():
    with pytest.raises(ValueError):
        gen_sinusoid_highdim(10, d=1, seed=0)


# --- Gaussian linear -----------------------------------------------------------


def test_gaussian_linear_noiseless_matches_hyperplane():
    ds = gen_gaussian_linear(2000, noise_rate=0.0, seed=3, task_seed=1)
    h = np.array(ds.spec["hyperplane"])
    assert np.array_equal(ds.labels, (ds.features @ h > 0).astype(np.uint8))


def test_gaussian_linear_noise_rate():
    ds = gen_gaussian_linear(10**5, noise_rate=0.1, seed=4, task_seed=1)
    h = np.array(ds.spec["hyperplane"])
    acc = ((ds.features @ h > 0).astype(np.uint8) == ds.labels).mean()
    assert acc == pytest.approx(0.9, abs=0.01)


def test_gaussian_linear_validation():
    with pytest.raises(ValueError):
        gen_gaussian_linear(10, d=3)
    with pytest.raises(ValueError):
        gen_gaussian_linear(10, noise_rate=0.7)


# --- disk sinusoid --------------------------------------------------------------


def test_disk_sinusoid_support_and_rule():
    ds = gen_disk_sinusoid(5000, noise_rate=0.0, seed=5)
    radii = np.linalg.norm(ds.features, axis=1)
    assert radii.max() <= 1.0 + 1e-12
    a, om = ds.spec["amplitude"], ds.spec["omega"]
    expected = (ds.features[:, 1] > a * np.sin(om * ds.features[:, 0])).astype(np.uint8)
    assert np.array_equal(ds.labels, expected)


def test_disk_sinusoid_zero_amplitude_is_linear():
    ds = gen_disk_sinusoid(3000, noise_rate=0.0, seed=6, amplitude=0.0)
    assert np.array_equal(ds.labels, (ds.features[:, 1] > 0).astype(np.uint8))


def test_disk_sinusoid_noise_rate():
    ds = gen_disk_sinusoid(10**5, noise_rate=0.1, seed=7)
    a, om = ds.spec["amplitude"], ds.spec["omega"]
    clean = (ds.features[:, 1] > a * np.sin(om * ds.features[:, 0])).astype(np.uint8)
    assert (clean == ds.labels).mean() == pytest.approx(0.9, abs=0.01)


# --- sparse problem --------------------------------------------------------------


def test_sparse_clean_first_coordinate():
    ds = gen_sparse_problem(10, 200, p=0.0, seed=8)
    signed = labels_to_pm1(ds.labels)[:, None] * ds.features
    assert np.all(signed[:, 0] == 1.0)


def test_sparse_structure():
    ds = gen_sparse_problem(20, 2000, p=0.1, seed=9)
    signed = labels_to_pm1(ds.labels)[:, None] * ds.features
    # exactly two nonzeros per row: the signal coordinate and one private +1
    assert np.all((signed != 0).sum(axis=1) == 2)
    assert set(np.unique(signed[:, 0])) <= {-1.0, 1.0}
    k = np.argmax(signed[:, 1:] != 0, axis=1)
    assert len(np.unique(k)) == 20  # Assumption 2 by direct scan
    assert np.all(signed[np.arange(20), k + 1] == 1.0)


def test_sparse_exact_noise_fraction():
    for n, p in ((20, 0.1), (30, 0.17), (7, 0.4)):
        ds = gen_sparse_problem(n, max(n * n, 60), p=p, seed=10)
        signed = labels_to_pm1(ds.labels)[:, None] * ds.features
        assert (signed[:, 0] == -1.0).sum() == math.floor(p * n)


def test_sparse_iid_noise_mode():
    ds = gen_sparse_problem(50, 2600, p=0.3, seed=11, exact_noise=False)
    signed = labels_to_pm1(ds.labels)[:, None] * ds.features
    flips = (signed[:, 0] == -1.0).sum()
    assert 0 < flips < 50


def test_sparse_overparam_check():
    with pytest.raises(ValueError):
        gen_sparse_problem(10, 50, p=0.1)
    ds = gen_sparse_problem(10, 50, p=0.1, require_overparam=False)
    assert ds.d == 50


# --- MNIST IDX loader -------------------------------------------------------------


def test_load_binary_mnist(tmp_path):
    rng = np.random.default_rng(12)
    images = rng.integers(0, 256, size=(20, 28, 28)).astype(np.uint8)
    digits = np.array([7, 3, 0, 9, 5, 4, 1, 8, 2, 6] * 2, dtype=np.uint8)
    write_idx_images(tmp_path / "imgs", images)
    write_idx_labels(tmp_path / "labs", digits)
    ds = load_binary_mnist(tmp_path / "imgs", tmp_path / "labs")
    assert ds.n == 20 and ds.d == 784
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
    assert ds.features[0, 0] == pytest.approx(images[0, 0, 0] / 255.0)
    assert np.array_equal(ds.labels, (digits >= 5).astype(np.uint8))


def test_load_binary_mnist_errors(tmp_path):
    images = np.zeros((4, 28, 28), dtype=np.uint8)
    digits = np.zeros(5, dtype=np.uint8)
    write_idx_images(tmp_path / "imgs", images)
    write_idx_labels(tmp_path / "labs", digits)
    # count mismatch
    with pytest.raises(ValueError, match="count"):
        load_binary_mnist(tmp_path / "imgs", tmp_path / "labs")
    # bad magic
    bad = tmp_path / "bad"
    bad.write_bytes(b"\x00\x00\x08\x99" + b"\x00" * 100)
    with pytest.raises(ValueError, match="magic"):
        load_binary_mnist(bad, tmp_path / "labs")
    # truncated payload
    trunc = tmp_path / "trunc"
    trunc.write_bytes((tmp_path / "imgs").read_bytes()[:-100])
    write_idx_labels(tmp_path / "labs4", np.zeros(4, dtype=np.uint8))
    with pytest.raises(ValueError, match="truncated"):
        load_binary_mnist(trunc, tmp_path / "labs4")


# --- container and CSV --------------------------------------------------------------


def test_container_roundtrip(tmp_path):
    ds = gen_sinusoid_highdim(37, d=11, seed=13, task_seed=4)
    save_dataset(ds, tmp_path / "d.bin")
    back = load_dataset(tmp_path / "d.bin")
    assert back.n == 37 and back.d == 11
    assert np.array_equal(back.labels, ds.labels)
    # features pass through a 32-bit container
    assert np.array_equal(back.features, ds.features.astype(np.float32).astype(np.float64))
    assert back.spec == ds.spec
    assert back.seed == ds.seed


def test_container_rejects_corruption(tmp_path):
    ds = gen_gaussian_linear(10, seed=1)
    save_dataset(ds, tmp_path / "d.bin")
    raw = (tmp_path / "d.bin").read_bytes()
    (tmp_path / "bad.bin").write_bytes(raw[:-3])
    with pytest.raises(ValueError):
        load_dataset(tmp_path / "bad.bin")


def test_csv_export(tmp_path):
    ds = gen_disk_sinusoid(5, seed=2)
    dataset_to_csv(ds, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().strip().splitlines()
    assert lines[0] == "x0,x1,label"
    assert len(lines) == 6
    first = lines[1].split(",")
    assert float(first[0]) == ds.features[0, 0] == pytest.approx(float(first[0]))


def test_labeled_dataset_validation():
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), np.zeros(4, dtype=np.uint8))
    with pytest.raises(ValueError):
        LabeledDataset(np.zeros((3, 2)), np.array([0, 1, 2], dtype=np.uint8))
    ds = inline_dataset(np.zeros((2, 2)), np.array([0, 1]))
    assert ds.spec["kind"] == "inline"
