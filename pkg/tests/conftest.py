import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from archsynth import load_seed_kb
from archsynth.nadl import parse_nadl
from archsynth.profiler import DatasetProfile

GOLDEN_DIR = Path(__file__).parent / "goldens"
FIXTURE_DIR = Path(__file__).parent / "fixtures"
GOLDEN_NAMES = [
    "golden_minimal",
    "golden_fpn",
    "golden_add",
    "golden_default",
    "golden_fire",
]


@pytest.fixture(scope="session")
def kb():
    return load_seed_kb()


@pytest.fixture(scope="session")
def goldens():
    return {
        name: parse_nadl((GOLDEN_DIR / f"{name}.json").read_text())
        for name in GOLDEN_NAMES
    }


@pytest.fixture(scope="session")
def golden_texts():
    return {name: (GOLDEN_DIR / f"{name}.json").read_text() for name in GOLDEN_NAMES}


@pytest.fixture(scope="session")
def golden_oracles():
    return json.loads((GOLDEN_DIR / "oracles.json").read_text())


def make_profile(**overrides) -> DatasetProfile:
    """A neutral profile (no rule fires) unless overridden."""
    base = dict(
        dataset_id="test",
        num_images=100,
        num_classes=5,
        class_counts={i: 20 for i in range(5)},
        absent_classes=(),
        imbalance_ratio=1.0,
        objects_per_image_mean=5.0,
        objects_per_image_max=10,
        scale_histogram=(),
        small_fraction=0.1,
        medium_fraction=0.8,
        large_fraction=0.1,
        scale_variation_ratio=2.0,
        sparse_scene_fraction=0.1,
        mean_brightness=120.0,
        mean_contrast=40.0,
        mean_edge_density=0.3,
    )
    base.update(overrides)
    return DatasetProfile(**base)


def make_fire_profile(**overrides) -> DatasetProfile:
    """Sparse scenes, extreme scale spread, moderate texture."""
    fire = dict(
        dataset_id="fire",
        sparse_scene_fraction=0.8,
        scale_variation_ratio=6.0,
        mean_edge_density=0.15,
    )
    fire.update(overrides)
    return make_profile(**fire)


@pytest.fixture
def neutral_profile():
    return make_profile()


@pytest.fixture
def fire_profile():
    return make_fire_profile()
