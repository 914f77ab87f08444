import numpy as np
import pytest
from PIL import Image

from sprayeval.datasets import (dataset_statistics, ingest, load_image,
                                load_mask, read_keypoints_csv,
                                write_keypoints_csv)
from sprayeval.errors import DataError
from sprayeval.synthetic import generate_scene, synth_dataset
from sprayeval.tensors import write_mask


def test_synth_dataset_roundtrips_through_ingest(tmp_path):
    stats = synth_dataset(tmp_path, num_images=3, seed=11)
    index = ingest(tmp_path)
    assert len(index.items) == 3
    assert {it.split for it in index.items} == {"train", "test"}
    derived = dataset_statistics(index)
    assert derived["num_images"] == stats["images"]
    assert derived["num_train"] == stats["split"]["train"]
    assert derived["num_test"] == stats["split"]["test"]
    # every generated keypoint is readable back
    total = 0
    for item in index.items:
        if item.keypoints_path:
            kp = read_keypoints_csv(item.keypoints_path)
            total += sum(len(v) for v in kp.values())
    assert total == stats["keypoints"]


def test_generated_scenes_are_deterministic():
    a = generate_scene(5, 2)
    b = generate_scene(5, 2)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])
    assert a[2] == b[2]


def test_ingest_rejects_unknown_class_id(tmp_path):
    synth_dataset(tmp_path, num_images=2, seed=0)
    bad = np.full((8, 8), 9, dtype=np.uint8)
    path = tmp_path / "masks" / "img001.png"
    Image.fromarray(bad, mode="L").save(path)
    with pytest.raises(DataError) as err:
        ingest(tmp_path)
    assert "img001" in str(err.value)


def test_ingest_reports_missing_masks(tmp_path):
    synth_dataset(tmp_path, num_images=2, seed=0)
    (tmp_path / "masks" / "img000.png").unlink()
    with pytest.raises(DataError) as err:
        ingest(tmp_path)
    assert "img000" in str(err.value)


def test_ingest_requires_split_manifest(tmp_path):
    synth_dataset(tmp_path, num_images=2, seed=0)
    (tmp_path / "split.csv").unlink()
    with pytest.raises(DataError):
        ingest(tmp_path)


def test_dataset_map_remaps_directories(tmp_path):
    synth_dataset(tmp_path, num_images=2, seed=3)
    (tmp_path / "images").rename(tmp_path / "rgb")
    (tmp_path / "masks").rename(tmp_path / "gt")
    (tmp_path / "dataset.map").write_text(
        "# remapped layout\nimages = rgb\nmasks = gt\n")
    index = ingest(tmp_path)
    assert len(index.items) == 2


def test_dataset_map_rejects_unknown_keys(tmp_path):
    synth_dataset(tmp_path, num_images=1, seed=0)
    (tmp_path / "dataset.map").write_text("movies = mp4\n")
    with pytest.raises(DataError):
        ingest(tmp_path)


def test_lmsk_masks_are_accepted(tmp_path):
    synth_dataset(tmp_path, num_images=2, seed=4)
    png = tmp_path / "masks" / "img000.png"
    mask = load_mask(png, 7)
    png.unlink()
    write_mask(mask, tmp_path / "masks" / "img000.lmsk")
    index = ingest(tmp_path)
    item = next(it for it in index.items if it.image_id == "img000")
    assert np.array_equal(load_mask(item.mask_path, 7), mask)


def test_load_image_range_and_shape(tmp_path):
    synth_dataset(tmp_path, num_images=1, seed=5, height=40, width=52)
    img = load_image(tmp_path / "images" / "img000.png")
    assert img.shape == (3, 40, 52)
    assert img.dtype == np.float32
    assert img.min() >= 0.0 and img.max() <= 1.0


def test_keypoint_csv_roundtrip(tmp_path):
    rows = [("img7", 4, 10, 12), ("img7", 4, 30, 31), ("img7", 6, 5, 5)]
    path = tmp_path / "kp.csv"
    write_keypoints_csv(path, rows)
    back = read_keypoints_csv(path)
    assert back == {4: [(10, 12), (30, 31)], 6: [(5, 5)]}


def test_keypoint_csv_header_enforced(tmp_path):
    path = tmp_path / "kp.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(DataError):
        read_keypoints_csv(path)


def test_statistics_count_instances(tmp_path):
    synth_dataset(tmp_path, num_images=3, seed=8)
    index = ingest(tmp_path)
    stats = dataset_statistics(index)
    assert stats["total_annotations"] >= 3  # at least one background per image
    assert set(stats["instances"]) == {
        "background", "lettuce", "chickweed", "meadowgrass",
        "sprayed_lettuce", "sprayed_chickweed", "sprayed_meadowgrass"}
    assert len(stats["coverage_rate"]) == 3
    for row in stats["coverage_rate"]:
        if row["hit_pct"] is not None:
            assert 0.0 <= row["hit_pct"] <= 100.0
