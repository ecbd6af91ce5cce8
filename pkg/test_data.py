"""Tests for dataset loaders, synthesis, augmentation and batching."""

import gzip
import struct

import numpy as np
import pytest

from src.constants import MNIST_FILES
from src.data_processing import (
    BatchPlan,
    Dataset,
    augment_hflip,
    batch_count,
    batches,
    load_cifar10_bin,
    load_idx,
    load_path,
    split_validation,
    summarize,
    synth_blobs,
    write_idx,
)
from src.models import ConfigurationError, ContractError, DataFormatError


def _idx_images(pixels):
    n, rows, cols = pixels.shape
    return struct.pack(">IIII", 0x00000803, n, rows, cols) + pixels.astype(np.uint8).tobytes()


def _idx_labels(labels):
    return struct.pack(">II", 0x00000801, len(labels)) + bytes(labels)


def _write_pair(tmp_path, pixels, labels):
    images_path = tmp_path / "images.idx"
    labels_path = tmp_path / "labels.idx"
    images_path.write_bytes(_idx_images(pixels))
    labels_path.write_bytes(_idx_labels(labels))
    return images_path, labels_path


def test_idx_header_and_byte_scaling(tmp_path):
    pixels = np.array([[[0, 255], [51, 102]], [[255, 0], [0, 153]]])
    dataset = load_idx(*_write_pair(tmp_path, pixels, [7, 2]))
    assert dataset.images.shape == (2, 1, 2, 2)
    assert dataset.labels.tolist() == [7, 2]
    np.testing.assert_allclose(dataset.images[0, 0], [[0.0, 1.0], [0.2, 0.4]], atol=1e-15)
    assert dataset.images.dtype == np.float64


def test_idx_count_mismatch_names_both_files(tmp_path):
    pixels = np.zeros((3, 2, 2))
    with pytest.raises(DataFormatError, match="3 images but .* 2 labels"):
        load_idx(*_write_pair(tmp_path, pixels, [0, 1]))


def test_idx_wrong_magic_reports_found_bytes(tmp_path):
    images_path, labels_path = _write_pair(tmp_path, np.zeros((1, 2, 2)), [0])
    images_path, labels_path = labels_path, images_path
    with pytest.raises(DataFormatError, match="found bytes 00 00 08 01"):
        load_idx(images_path, labels_path)


def test_idx_truncated_body(tmp_path):
    images_path, labels_path = _write_pair(tmp_path, np.zeros((2, 4, 4)), [0, 1])
    images_path.write_bytes(images_path.read_bytes()[:-5])
    with pytest.raises(DataFormatError, match="truncated"):
        load_idx(images_path, labels_path)


def test_write_idx_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    images = rng.integers(0, 256, size=(6, 1, 3, 5)) / 255.0
    dataset = Dataset(images, rng.integers(0, 10, size=6), 10)
    write_idx(dataset, tmp_path / "img", tmp_path / "lbl")
    loaded = load_idx(tmp_path / "img", tmp_path / "lbl")
    assert np.array_equal(loaded.images, dataset.images)
    assert np.array_equal(loaded.labels, dataset.labels)


def test_gzipped_idx_files_load(tmp_path):
    pixels = np.arange(8).reshape(2, 2, 2)
    for name, payload in (("img.gz", _idx_images(pixels)), ("lbl.gz", _idx_labels([1, 0]))):
        with gzip.open(tmp_path / name, "wb") as handle:
            handle.write(payload)
    dataset = load_idx(tmp_path / "img.gz", tmp_path / "lbl.gz")
    assert dataset.images[1, 0, 1, 1] == pytest.approx(7 / 255)


def test_write_idx_rejects_colour_images(tmp_path):
    dataset = Dataset(np.zeros((1, 3, 2, 2)), [0], 10)
    with pytest.raises(ContractError):
        write_idx(dataset, tmp_path / "a", tmp_path / "b")


def _cifar_record(label, red=0, green=0, blue=0):
    return bytes([label]) + bytes([red]) * 1024 + bytes([green]) * 1024 + bytes([blue]) * 1024


def test_cifar_record_layout(tmp_path):
    path = tmp_path / "data_batch_1.bin"
    path.write_bytes(_cifar_record(3, red=255, green=51))
    dataset = load_cifar10_bin([path])
    assert dataset.images.shape == (1, 3, 32, 32)
    assert dataset.labels.tolist() == [3]
    assert np.all(dataset.images[0, 0] == 1.0)
    assert np.allclose(dataset.images[0, 1], 0.2)
    assert np.all(dataset.images[0, 2] == 0.0)


@pytest.mark.parametrize("label,ok", [(9, True), (10, False), (255, False)])
def test_cifar_label_range(tmp_path, label, ok):
    path = tmp_path / "batch.bin"
    path.write_bytes(_cifar_record(0) + _cifar_record(label))
    if ok:
        assert load_cifar10_bin([path]).labels.tolist() == [0, label]
    else:
        with pytest.raises(DataFormatError, match="record 1"):
            load_cifar10_bin([path])


def test_cifar_truncated_file(tmp_path):
    path = tmp_path / "batch.bin"
    path.write_bytes(_cifar_record(1)[:-1])
    with pytest.raises(DataFormatError, match="3073"):
        load_cifar10_bin([path])


def test_blobs_are_deterministic_per_seed():
    a = synth_blobs(200, 3, 4, seed=5)
    b = synth_blobs(200, 3, 4, seed=5)
    c = synth_blobs(200, 3, 4, seed=6)
    assert np.array_equal(a.images, b.images) and np.array_equal(a.labels, b.labels)
    assert not np.array_equal(a.images, c.images)
    assert a.images.shape == (200, 3, 1, 1)


def test_blobs_with_one_point_per_class():
    dataset = synth_blobs(5, 2, 5, seed=0)
    assert sorted(dataset.labels.tolist()) == [0, 1, 2, 3, 4]


@pytest.mark.parametrize("n,d,k", [(1, 2, 2), (10, 2, 1), (10, 0, 2)])
def test_blobs_reject_degenerate_arguments(n, d, k):
    with pytest.raises(ConfigurationError):
        synth_blobs(n, d, k, seed=0)


def test_two_blobs_are_linearly_separable():
    dataset = synth_blobs(1000, 2, 2, seed=0)
    x = dataset.images.reshape(len(dataset), -1)
    y = dataset.labels
    mu0, mu1 = x[y == 0].mean(axis=0), x[y == 1].mean(axis=0)
    scores = (x - (mu0 + mu1) / 2) @ (mu1 - mu0)
    accuracy = np.mean((scores > 0) == (y == 1))
    assert accuracy >= 0.99, f"linear accuracy {accuracy:.3f}"


def test_hflip_probability_extremes():
    rng = np.random.default_rng(0)
    images = rng.normal(size=(4, 2, 3, 5))
    assert np.array_equal(augment_hflip(images, 0.0, rng), images)
    flipped = augment_hflip(images, 1.0, rng)
    assert np.array_equal(flipped, images[..., ::-1])
    assert np.array_equal(augment_hflip(flipped, 1.0, rng), images)


def test_hflip_leaves_symmetric_images_unchanged():
    row = np.array([1.0, 2.0, 3.0, 2.0, 1.0])
    images = np.broadcast_to(row, (3, 1, 4, 5)).copy()
    assert np.array_equal(augment_hflip(images, 1.0, np.random.default_rng(0)), images)


def test_hflip_rejects_bad_probability():
    with pytest.raises(ConfigurationError):
        augment_hflip(np.zeros((1, 1, 2, 2)), 1.5, np.random.default_rng(0))


def _indexed(n):
    return Dataset(np.arange(n, dtype=float).reshape(n, 1, 1, 1), np.zeros(n, dtype=int), 1)


def test_batches_cover_every_sample_once():
    dataset = _indexed(103)
    plan = BatchPlan(batch_size=10, seed=3)
    seen = np.concatenate([images.ravel() for images, _ in batches(dataset, plan, 0)])
    assert sorted(seen.tolist()) == list(range(103))
    assert batch_count(dataset, plan) == 11


def test_batch_order_depends_only_on_seed_and_epoch():
    dataset = _indexed(50)
    plan = BatchPlan(batch_size=7, seed=1)

    def order(epoch):
        return [images.ravel().tolist() for images, _ in batches(dataset, plan, epoch)]

    assert order(0) == order(0)
    assert order(0) != order(1)


def test_single_batch_when_size_exceeds_dataset():
    dataset = _indexed(5)
    chunks = list(batches(dataset, BatchPlan(batch_size=64), 0))
    assert len(chunks) == 1 and chunks[0][0].shape == (5, 1, 1, 1)


def test_drop_last_discards_partial_batch():
    dataset = _indexed(21)
    plan = BatchPlan(batch_size=10, drop_last=True)
    assert [len(labels) for _, labels in batches(dataset, plan, 0)] == [10, 10]
    assert batch_count(dataset, plan) == 2


def test_split_validation_holds_out_the_tail():
    train, val = split_validation(_indexed(100), 0.1)
    assert len(train) == 90 and len(val) == 10
    assert val.images.ravel().tolist() == list(range(90, 100))
    assert val.split == "val"


@pytest.mark.parametrize("fraction", [0.0, 1.0, 0.001])
def test_split_validation_rejects_empty_splits(fraction):
    with pytest.raises(ConfigurationError):
        split_validation(_indexed(100), fraction)


def test_dataset_validates_labels():
    with pytest.raises(ContractError):
        Dataset(np.zeros((2, 1, 1, 1)), [0, 3], 3)
    with pytest.raises(ContractError):
        Dataset(np.zeros((2, 1, 1, 1)), [0], 3)


def test_summarize_counts_labels():
    dataset = Dataset(np.full((4, 1, 2, 2), 0.5), [0, 2, 2, 1], 3, "val")
    stats = summarize(dataset)
    assert stats["num_samples"] == 4
    assert stats["shape"] == [4, 1, 2, 2]
    assert stats["label_counts"] == {0: 1, 1: 1, 2: 2}
    assert stats["pixel_mean"] == 0.5 and stats["split"] == "val"


def test_load_path_finds_mnist_layout(tmp_path):
    pixels = np.full((3, 28, 28), 128)
    (tmp_path / MNIST_FILES["train_images"]).write_bytes(_idx_images(pixels))
    (tmp_path / MNIST_FILES["train_labels"]).write_bytes(_idx_labels([1, 2, 3]))
    loaded = load_path(tmp_path)
    assert list(loaded) == ["train"]
    assert loaded["train"].images.shape == (3, 1, 28, 28)
    single = load_path(tmp_path / MNIST_FILES["train_images"])
    assert single["train"].labels.tolist() == [1, 2, 3]


def test_load_path_reports_missing_data(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_path(tmp_path)
    with pytest.raises(FileNotFoundError):
        load_path(tmp_path / "nope")
