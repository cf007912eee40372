"""Dataset meta-feature extraction from bounding-box annotation corpora.

Aggregation is built from associative, commutative partials so chunks may
be computed in any order (or in parallel) and merged; `compute_profile`
is the single-threaded reference path.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, EmptyImage, FormatError, MissingDims

# COCO-convention pixel-area thresholds.
SMALL_AREA = 32 * 32
LARGE_AREA = 96 * 96

# Full histogram: logarithmic bins over sqrt(pixel area), 4 px .. 1024 px.
HIST_BINS = 10
HIST_LO = 4.0
HIST_HI = 1024.0
HIST_EDGES: tuple[float, ...] = tuple(
    float(x) for x in np.geomspace(HIST_LO, HIST_HI, HIST_BINS + 1)
)

EDGE_GRADIENT_THRESHOLD = 32.0  # on the 0..255 luma scale
SPARSE_OBJECT_LIMIT = 1  # images with <= this many objects count as sparse


@dataclass(frozen=True)
class Box:
    class_id: int
    cx: float
    cy: float
    w: float
    h: float


@dataclass(frozen=True)
class AnnotationRecord:
    image_id: str
    width_px: int
    height_px: int
    boxes: tuple[Box, ...] = ()

    def __post_init__(self) -> None:
        if self.width_px < 1 or self.height_px < 1:
            raise ValueError(f"{self.image_id}: image dimensions must be >= 1")
        for box in self.boxes:
            if box.class_id < 0:
                raise ValueError(f"{self.image_id}: negative class id {box.class_id}")
            if not (0.0 <= box.cx <= 1.0 and 0.0 <= box.cy <= 1.0):
                raise ValueError(f"{self.image_id}: box center out of [0,1]")
            if not (0.0 < box.w <= 1.0 and 0.0 < box.h <= 1.0):
                raise ValueError(f"{self.image_id}: box size out of (0,1]")


@dataclass(frozen=True)
class ImageStats:
    image_id: str
    mean_luma: float
    luma_stddev: float
    edge_density: float


@dataclass(frozen=True)
class HistogramBin:
    lo: float
    hi: float
    count: int


@dataclass(frozen=True)
class DatasetProfile:
    dataset_id: str
    num_images: int
    num_classes: int
    class_counts: dict[int, int]
    absent_classes: tuple[int, ...]
    imbalance_ratio: float
    objects_per_image_mean: float
    objects_per_image_max: int
    scale_histogram: tuple[HistogramBin, ...]
    small_fraction: float
    medium_fraction: float
    large_fraction: float
    scale_variation_ratio: float
    sparse_scene_fraction: float
    mean_brightness: float | None = None
    mean_contrast: float | None = None
    mean_edge_density: float | None = None

    def to_dict(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "num_images": self.num_images,
            "num_classes": self.num_classes,
            "class_counts": {str(k): v for k, v in sorted(self.class_counts.items())},
            "absent_classes": list(self.absent_classes),
            "imbalance_ratio": self.imbalance_ratio,
            "objects_per_image_mean": self.objects_per_image_mean,
            "objects_per_image_max": self.objects_per_image_max,
            "scale_histogram": [
                {"lo": b.lo, "hi": b.hi, "count": b.count} for b in self.scale_histogram
            ],
            "small_fraction": self.small_fraction,
            "medium_fraction": self.medium_fraction,
            "large_fraction": self.large_fraction,
            "scale_variation_ratio": self.scale_variation_ratio,
            "sparse_scene_fraction": self.sparse_scene_fraction,
            "mean_brightness": self.mean_brightness,
            "mean_contrast": self.mean_contrast,
            "mean_edge_density": self.mean_edge_density,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DatasetProfile":
        return cls(
            dataset_id=obj["dataset_id"],
            num_images=obj["num_images"],
            num_classes=obj["num_classes"],
            class_counts={int(k): v for k, v in obj["class_counts"].items()},
            absent_classes=tuple(obj["absent_classes"]),
            imbalance_ratio=obj["imbalance_ratio"],
            objects_per_image_mean=obj["objects_per_image_mean"],
            objects_per_image_max=obj["objects_per_image_max"],
            scale_histogram=tuple(
                HistogramBin(b["lo"], b["hi"], b["count"]) for b in obj["scale_histogram"]
            ),
            small_fraction=obj["small_fraction"],
            medium_fraction=obj["medium_fraction"],
            large_fraction=obj["large_fraction"],
            scale_variation_ratio=obj["scale_variation_ratio"],
            sparse_scene_fraction=obj["sparse_scene_fraction"],
            mean_brightness=obj.get("mean_brightness"),
            mean_contrast=obj.get("mean_contrast"),
            mean_edge_density=obj.get("mean_edge_density"),
        )


# --- annotation loading --------------------------------------------------


def _parse_label_line(path: str, line_no: int, line: str) -> Box:
    fields = line.split()
    if len(fields) != 5:
        raise FormatError(path, line_no, f"expected 5 fields, got {len(fields)}")
    try:
        class_id = int(fields[0])
        cx, cy, w, h = (float(f) for f in fields[1:])
    except ValueError:
        raise FormatError(path, line_no, f"non-numeric token in {line!r}") from None
    if class_id < 0:
        raise FormatError(path, line_no, f"negative class id {class_id}")
    if not (0.0 <= cx <= 1.0):
        raise FormatError(path, line_no, f"cx {cx} out of [0,1]")
    if not (0.0 <= cy <= 1.0):
        raise FormatError(path, line_no, f"cy {cy} out of [0,1]")
    if not (0.0 < w <= 1.0):
        raise FormatError(path, line_no, f"w {w} out of (0,1]")
    if not (0.0 < h <= 1.0):
        raise FormatError(path, line_no, f"h {h} out of (0,1]")
    return Box(class_id, cx, cy, w, h)


def load_dims_manifest(path: str | Path) -> dict[str, tuple[int, int]]:
    """Parse 'image_id width height' triples, one per line."""
    dims: dict[str, tuple[int, int]] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 3:
            raise FormatError(str(path), line_no, f"expected 3 fields, got {len(fields)}")
        try:
            dims[fields[0]] = (int(fields[1]), int(fields[2]))
        except ValueError:
            raise FormatError(str(path), line_no, f"non-numeric dimension in {line!r}") from None
    return dims


_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


def _dims_from_image(images_dir: Path, image_id: str) -> tuple[int, int] | None:
    for suffix in _IMAGE_SUFFIXES:
        candidate = images_dir / f"{image_id}{suffix}"
        if candidate.exists():
            from PIL import Image

            with Image.open(candidate) as img:
                return img.size  # (width, height)
    return None


def load_annotations(
    label_dir: str | Path,
    dims_manifest: str | Path | None = None,
    images_dir: str | Path | None = None,
) -> list[AnnotationRecord]:
    """Load one AnnotationRecord per .txt label file in label_dir.

    Dimensions come from the manifest when given, otherwise from decoding
    a sibling image. Empty label files are legal negative samples.
    """
    label_dir = Path(label_dir)
    dims = load_dims_manifest(dims_manifest) if dims_manifest is not None else {}
    records = []
    for path in sorted(label_dir.glob("*.txt")):
        image_id = path.stem
        boxes = []
        for line_no, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.strip()
            if not line:
                continue
            boxes.append(_parse_label_line(str(path), line_no, line))
        wh = dims.get(image_id)
        if wh is None and images_dir is not None:
            wh = _dims_from_image(Path(images_dir), image_id)
        if wh is None:
            raise MissingDims(f"no dimensions known for image {image_id!r}")
        records.append(
            AnnotationRecord(image_id=image_id, width_px=wh[0], height_px=wh[1], boxes=tuple(boxes))
        )
    return records


# --- image statistics ----------------------------------------------------


def compute_image_stats(image_id: str, pixels: np.ndarray) -> ImageStats:
    """Brightness, contrast and edge density of one raster.

    Luma follows Rec.601; edge density is the fraction of interior pixels
    whose Sobel gradient magnitude exceeds EDGE_GRADIENT_THRESHOLD.
    """
    if pixels.size == 0:
        raise EmptyImage(f"image {image_id!r} has no pixels")
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim == 3:
        luma = 0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2]
    elif arr.ndim == 2:
        luma = arr
    else:
        raise EmptyImage(f"image {image_id!r}: expected HxW or HxWx3 raster")

    mean_luma = float(luma.mean())
    luma_stddev = float(luma.std())

    h, w = luma.shape
    if h < 3 or w < 3:
        edge_density = 0.0
    else:
        gx = (
            (luma[:-2, 2:] + 2 * luma[1:-1, 2:] + luma[2:, 2:])
            - (luma[:-2, :-2] + 2 * luma[1:-1, :-2] + luma[2:, :-2])
        )
        gy = (
            (luma[2:, :-2] + 2 * luma[2:, 1:-1] + luma[2:, 2:])
            - (luma[:-2, :-2] + 2 * luma[:-2, 1:-1] + luma[:-2, 2:])
        )
        magnitude = np.sqrt(gx * gx + gy * gy)
        edge_density = float((magnitude > EDGE_GRADIENT_THRESHOLD).mean())
    return ImageStats(
        image_id=image_id,
        mean_luma=mean_luma,
        luma_stddev=luma_stddev,
        edge_density=edge_density,
    )


# --- profile aggregation -------------------------------------------------


@dataclass
class ProfilePartial:
    """Associative, commutative partial aggregate over records."""

    num_images: int = 0
    total_boxes: int = 0
    max_objects: int = 0
    sparse_images: int = 0
    class_counts: Counter = field(default_factory=Counter)
    sqrt_areas: list[float] = field(default_factory=list)

    @classmethod
    def from_record(cls, record: AnnotationRecord) -> "ProfilePartial":
        partial = cls(
            num_images=1,
            total_boxes=len(record.boxes),
            max_objects=len(record.boxes),
            sparse_images=1 if len(record.boxes) <= SPARSE_OBJECT_LIMIT else 0,
        )
        for box in record.boxes:
            partial.class_counts[box.class_id] += 1
            area = (box.w * record.width_px) * (box.h * record.height_px)
            partial.sqrt_areas.append(math.sqrt(area))
        return partial

    def merge(self, other: "ProfilePartial") -> "ProfilePartial":
        merged = ProfilePartial(
            num_images=self.num_images + other.num_images,
            total_boxes=self.total_boxes + other.total_boxes,
            max_objects=max(self.max_objects, other.max_objects),
            sparse_images=self.sparse_images + other.sparse_images,
            class_counts=self.class_counts + other.class_counts,
            sqrt_areas=self.sqrt_areas + other.sqrt_areas,
        )
        return merged


def _scale_histogram(sqrt_areas: list[float]) -> tuple[HistogramBin, ...]:
    counts = [0] * HIST_BINS
    for value in sqrt_areas:
        clamped = min(max(value, HIST_LO), HIST_HI)
        idx = int(np.searchsorted(HIST_EDGES, clamped, side="right")) - 1
        counts[min(max(idx, 0), HIST_BINS - 1)] += 1
    return tuple(
        HistogramBin(lo=HIST_EDGES[i], hi=HIST_EDGES[i + 1], count=counts[i])
        for i in range(HIST_BINS)
    )


def finalize_profile(
    partial: ProfilePartial,
    image_stats: list[ImageStats] | None = None,
    dataset_id: str = "dataset",
) -> DatasetProfile:
    if partial.num_images == 0:
        raise EmptyDataset("no annotation records to profile")

    # sqrt_areas sorted so aggregation order cannot leak into percentiles
    sqrt_areas = sorted(partial.sqrt_areas)
    total = partial.total_boxes

    if total > 0:
        areas = np.square(np.array(sqrt_areas))
        small = int((areas < SMALL_AREA).sum())
        large = int((areas >= LARGE_AREA).sum())
        medium = total - small - large
        small_fraction = small / total
        medium_fraction = medium / total
        large_fraction = large / total
        p10, p90 = np.percentile(np.array(sqrt_areas), [10.0, 90.0], method="linear")
        scale_variation_ratio = float(p90 / p10) if p10 > 0 else 1.0
        scale_variation_ratio = max(scale_variation_ratio, 1.0)
    else:
        small_fraction = medium_fraction = large_fraction = 0.0
        scale_variation_ratio = 1.0

    nonzero = [c for c in partial.class_counts.values() if c > 0]
    imbalance_ratio = max(nonzero) / min(nonzero) if nonzero else 1.0
    num_classes = (max(partial.class_counts) + 1) if partial.class_counts else 0
    absent = tuple(c for c in range(num_classes) if partial.class_counts.get(c, 0) == 0)

    mean_brightness = mean_contrast = mean_edge_density = None
    if image_stats:
        mean_brightness = float(np.mean([s.mean_luma for s in image_stats]))
        mean_contrast = float(np.mean([s.luma_stddev for s in image_stats]))
        mean_edge_density = float(np.mean([s.edge_density for s in image_stats]))

    return DatasetProfile(
        dataset_id=dataset_id,
        num_images=partial.num_images,
        num_classes=num_classes,
        class_counts=dict(sorted(partial.class_counts.items())),
        absent_classes=absent,
        imbalance_ratio=float(imbalance_ratio),
        objects_per_image_mean=total / partial.num_images,
        objects_per_image_max=partial.max_objects,
        scale_histogram=_scale_histogram(sqrt_areas),
        small_fraction=small_fraction,
        medium_fraction=medium_fraction,
        large_fraction=large_fraction,
        scale_variation_ratio=scale_variation_ratio,
        sparse_scene_fraction=partial.sparse_images / partial.num_images,
        mean_brightness=mean_brightness,
        mean_contrast=mean_contrast,
        mean_edge_density=mean_edge_density,
    )


def compute_profile(
    records: list[AnnotationRecord],
    image_stats: list[ImageStats] | None = None,
    dataset_id: str = "dataset",
) -> DatasetProfile:
    """Single-threaded reference aggregation over all records."""
    if not records:
        raise EmptyDataset("no annotation records to profile")
    partial = ProfilePartial()
    for record in records:
        partial = partial.merge(ProfilePartial.from_record(record))
    return finalize_profile(partial, image_stats=image_stats, dataset_id=dataset_id)


# --- report rendering ----------------------------------------------------


def to_json(profile: DatasetProfile) -> str:
    return json.dumps(profile.to_dict(), indent=2) + "\n"


def _fmt(value: float | None) -> str:
    return "unavailable" if value is None else f"{value:.6g}"


def to_markdown(profile: DatasetProfile) -> str:
    lines = [
        f"# Dataset profile: {profile.dataset_id}",
        "",
        f"- num_images: {profile.num_images}",
        f"- num_classes: {profile.num_classes}",
        f"- class_counts: {json.dumps({str(k): v for k, v in sorted(profile.class_counts.items())})}",
        f"- absent_classes: {list(profile.absent_classes)}",
        f"- imbalance_ratio: {profile.imbalance_ratio:.6g}",
        f"- objects_per_image_mean: {profile.objects_per_image_mean:.6g}",
        f"- objects_per_image_max: {profile.objects_per_image_max}",
        f"- small_fraction: {profile.small_fraction:.6g}",
        f"- medium_fraction: {profile.medium_fraction:.6g}",
        f"- large_fraction: {profile.large_fraction:.6g}",
        f"- scale_variation_ratio: {profile.scale_variation_ratio:.6g}",
        f"- sparse_scene_fraction: {profile.sparse_scene_fraction:.6g}",
        f"- mean_brightness: {_fmt(profile.mean_brightness)}",
        f"- mean_contrast: {_fmt(profile.mean_contrast)}",
        f"- mean_edge_density: {_fmt(profile.mean_edge_density)}",
        "",
        "## Scale histogram (sqrt of box pixel area)",
        "",
    ]
    for b in profile.scale_histogram:
        lines.append(f"- [{b.lo:.1f}, {b.hi:.1f}): {b.count}")
    return "\n".join(lines) + "\n"
