import math
import random

import numpy as np
import pytest

from corpus_tools import make_corpus, oracle_profile, write_corpus
from archsynth.errors import EmptyDataset, EmptyImage, FormatError, MissingDims
from archsynth.profiler import (
    AnnotationRecord,
    Box,
    DatasetProfile,
    ProfilePartial,
    compute_image_stats,
    compute_profile,
    finalize_profile,
    load_annotations,
    load_dims_manifest,
    to_json,
    to_markdown,
)


def corpus_to_records(corpus):
    return [
        AnnotationRecord(
            image_id=image_id,
            width_px=width,
            height_px=height,
            boxes=tuple(Box(*b) for b in boxes),
        )
        for image_id, width, height, boxes in corpus
    ]


def assert_matches_oracle(profile, oracle):
    assert profile.num_images == oracle["num_images"]
    assert profile.num_classes == oracle["num_classes"]
    assert profile.class_counts == oracle["class_counts"]
    assert profile.absent_classes == oracle["absent_classes"]
    assert profile.objects_per_image_max == oracle["objects_per_image_max"]
    assert [b.count for b in profile.scale_histogram] == oracle["hist_counts"]
    assert profile.imbalance_ratio == pytest.approx(oracle["imbalance_ratio"], abs=1e-9)
    assert profile.objects_per_image_mean == pytest.approx(
        oracle["objects_per_image_mean"], abs=1e-9
    )
    assert profile.small_fraction == pytest.approx(oracle["small_fraction"], abs=1e-9)
    assert profile.medium_fraction == pytest.approx(oracle["medium_fraction"], abs=1e-9)
    assert profile.large_fraction == pytest.approx(oracle["large_fraction"], abs=1e-9)
    assert profile.scale_variation_ratio == pytest.approx(
        oracle["scale_variation_ratio"], abs=1e-9
    )
    assert profile.sparse_scene_fraction == pytest.approx(
        oracle["sparse_scene_fraction"], abs=1e-9
    )


@pytest.mark.parametrize(
    "name,seed,n", [("uniform", 11, 220), ("sparse", 22, 250), ("dense", 33, 200)]
)
def test_profile_matches_bruteforce_oracle(name, seed, n):
    corpus = make_corpus(name, seed, n)
    profile = compute_profile(corpus_to_records(corpus), dataset_id=name)
    assert_matches_oracle(profile, oracle_profile(corpus))


def test_load_annotations_end_to_end(tmp_path):
    corpus = make_corpus("uniform", 44, 30)
    label_dir, manifest = write_corpus(corpus, tmp_path)
    records = load_annotations(label_dir, dims_manifest=manifest)
    assert len(records) == 30
    profile = compute_profile(records, dataset_id="disk")
    assert_matches_oracle(profile, oracle_profile(corpus))


def test_load_annotations_missing_dims(tmp_path):
    (tmp_path / "labels").mkdir()
    (tmp_path / "labels" / "img0.txt").write_text("0 0.5 0.5 0.2 0.2\n")
    with pytest.raises(MissingDims):
        load_annotations(tmp_path / "labels")


def test_label_format_errors(tmp_path):
    path = tmp_path / "bad.txt"
    for line in ("0 0.5 0.5 0.2", "x 0.5 0.5 0.2 0.2", "0 1.5 0.5 0.2 0.2",
                 "0 0.5 0.5 0.0 0.2", "-1 0.5 0.5 0.2 0.2"):
        (tmp_path / "labels").mkdir(exist_ok=True)
        target = tmp_path / "labels" / "img0.txt"
        target.write_text(line + "\n")
        (tmp_path / "dims.txt").write_text("img0 640 480\n")
        with pytest.raises(FormatError):
            load_annotations(tmp_path / "labels", dims_manifest=tmp_path / "dims.txt")
    assert path.exists() is False


def test_dims_manifest_rejects_short_lines(tmp_path):
    manifest = tmp_path / "dims.txt"
    manifest.write_text("img0 640\n")
    with pytest.raises(FormatError):
        load_dims_manifest(manifest)


def test_empty_dataset_raises():
    with pytest.raises(EmptyDataset):
        compute_profile([])


def test_permutation_invariance():
    corpus = make_corpus("uniform", 55, 60)
    records = corpus_to_records(corpus)
    shuffled = records[:]
    random.Random(0).shuffle(shuffled)
    assert compute_profile(records) == compute_profile(shuffled)


def test_chunked_merge_equivalence():
    records = corpus_to_records(make_corpus("dense", 66, 50))
    whole = ProfilePartial()
    for record in records:
        whole = whole.merge(ProfilePartial.from_record(record))
    left = ProfilePartial()
    for record in records[:17]:
        left = left.merge(ProfilePartial.from_record(record))
    right = ProfilePartial()
    for record in records[17:]:
        right = right.merge(ProfilePartial.from_record(record))
    assert finalize_profile(left.merge(right)) == finalize_profile(whole)


def test_fraction_normalization():
    profile = compute_profile(corpus_to_records(make_corpus("uniform", 77, 80)))
    assert profile.small_fraction + profile.medium_fraction + profile.large_fraction == \
        pytest.approx(1.0, abs=1e-9)


def test_monotonicity_of_box_addition():
    record = AnnotationRecord("a", 640, 480, (Box(1, 0.5, 0.5, 0.1, 0.1),))
    grown = AnnotationRecord(
        "a", 640, 480, record.boxes + (Box(3, 0.4, 0.4, 0.2, 0.2),)
    )
    before = ProfilePartial.from_record(record)
    after = ProfilePartial.from_record(grown)
    assert after.class_counts[3] == before.class_counts.get(3, 0) + 1
    assert after.total_boxes == before.total_boxes + 1


def test_scale_ratio_is_one_for_identical_areas():
    boxes = tuple(Box(0, 0.5, 0.5, 0.1, 0.1) for _ in range(4))
    records = [AnnotationRecord(f"i{k}", 640, 640, boxes) for k in range(5)]
    profile = compute_profile(records)
    assert profile.scale_variation_ratio == 1.0


def test_absent_classes_and_imbalance():
    records = [
        AnnotationRecord(
            "a", 640, 480,
            (Box(0, 0.5, 0.5, 0.1, 0.1),) * 10 + (Box(4, 0.5, 0.5, 0.1, 0.1),),
        )
    ]
    profile = compute_profile(records)
    assert profile.num_classes == 5
    assert profile.absent_classes == (1, 2, 3)
    assert profile.imbalance_ratio == 10.0


def test_image_stats_flat_image():
    flat = np.full((32, 32), 128.0)
    stats = compute_image_stats("flat", flat)
    assert stats.mean_luma == 128.0
    assert stats.luma_stddev == 0.0
    assert stats.edge_density == 0.0


def test_image_stats_vertical_edge_against_pixel_loop():
    rng = np.random.default_rng(5)
    image = rng.uniform(0, 255, size=(24, 24))
    stats = compute_image_stats("noise", image)

    # independent pixel-loop Sobel oracle
    hits = 0
    count = 0
    mean = image.mean()
    var = ((image - mean) ** 2).mean()
    for y in range(1, 23):
        for x in range(1, 23):
            gx = (image[y - 1, x + 1] + 2 * image[y, x + 1] + image[y + 1, x + 1]) - (
                image[y - 1, x - 1] + 2 * image[y, x - 1] + image[y + 1, x - 1]
            )
            gy = (image[y + 1, x - 1] + 2 * image[y + 1, x] + image[y + 1, x + 1]) - (
                image[y - 1, x - 1] + 2 * image[y - 1, x] + image[y - 1, x + 1]
            )
            count += 1
            if math.hypot(gx, gy) > 32.0:
                hits += 1
    assert stats.edge_density == pytest.approx(hits / count, abs=1e-12)
    assert stats.mean_luma == pytest.approx(mean, abs=1e-9)
    assert stats.luma_stddev == pytest.approx(math.sqrt(var), abs=1e-9)


def test_image_stats_rgb_uses_rec601_luma():
    rgb = np.zeros((8, 8, 3))
    rgb[..., 0] = 100.0
    stats = compute_image_stats("red", rgb)
    assert stats.mean_luma == pytest.approx(29.9, abs=1e-9)


def test_image_stats_empty_raises():
    with pytest.raises(EmptyImage):
        compute_image_stats("none", np.zeros((0, 0)))


def test_reports_round_trip_and_render():
    profile = compute_profile(corpus_to_records(make_corpus("uniform", 88, 40)))
    again = DatasetProfile.from_dict(
        __import__("json").loads(to_json(profile))
    )
    assert again == profile
    markdown = to_markdown(profile)
    assert "mean_edge_density: unavailable" in markdown
    assert "Scale histogram" in markdown


def test_report_determinism():
    records = corpus_to_records(make_corpus("dense", 99, 35))
    assert to_json(compute_profile(records)) == to_json(compute_profile(records))
