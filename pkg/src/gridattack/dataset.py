"""Dataset ingestion: images with sibling normalized-box annotations.

Each image stem pairs with a .txt file of lines "class cx cy w h" in the
normalized center convention.  Class 0 is the person class; the tallest
person box becomes the attack target.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

from PIL import Image as _PILImage

from .imaging import BBox

PERSON_CLASS = 0
DEFAULT_MIN_HEIGHT = 120
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True, slots=True)
class DatasetSample:
    sample_id: str
    image_path: Path
    bbox: BBox
    image_size: tuple[int, int]  # (width, height)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _denormalize(cx: float, cy: float, w: float, h: float, width: int, height: int) -> BBox:
    """Center-format fractions to a clamped integer pixel box."""
    px = _round_half_up((cx - w / 2.0) * width)
    py = _round_half_up((cy - h / 2.0) * height)
    pw = _round_half_up(w * width)
    ph = _round_half_up(h * height)
    px = max(0, min(px, width - 1))
    py = max(0, min(py, height - 1))
    pw = max(1, min(pw, width - px))
    ph = max(1, min(ph, height - py))
    return BBox(px, py, pw, ph)


def parse_annotation(path: Path, width: int, height: int) -> list[BBox]:
    """Person boxes from one annotation file, denormalized to pixels.

    A malformed line is a hard error naming the file and line number.
    """
    boxes: list[BBox] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = line.strip()
        if not text:
            continue
        fields = text.split()
        if len(fields) != 5:
            raise ValueError(
                f"{path}:{lineno}: expected 'class cx cy w h', got {len(fields)} fields"
            )
        try:
            cls = int(fields[0])
            cx, cy, w, h = (float(f) for f in fields[1:])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric annotation field") from exc
        if w <= 0 or h <= 0:
            raise ValueError(f"{path}:{lineno}: box extent must be positive")
        if cls != PERSON_CLASS:
            continue
        boxes.append(_denormalize(cx, cy, w, h, width, height))
    return boxes


def ingest_dataset(directory: str | Path, min_height: int = DEFAULT_MIN_HEIGHT) -> list[DatasetSample]:
    """Collect samples from a directory, ordered by id for reproducible runs.

    Images without a sibling annotation are skipped with a warning; targets
    shorter than min_height pixels are filtered out.
    """
    root = Path(directory)
    if not root.is_dir():
        raise ValueError(f"dataset directory not found: {root}")
    samples: list[DatasetSample] = []
    for image_path in sorted(root.iterdir()):
        if image_path.suffix.lower() not in IMAGE_SUFFIXES:
            continue
        annotation = image_path.with_suffix(".txt")
        if not annotation.is_file():
            warnings.warn(f"skipping {image_path.name}: no annotation file")
            continue
        with _PILImage.open(image_path) as im:
            width, height = im.size
        boxes = parse_annotation(annotation, width, height)
        if not boxes:
            warnings.warn(f"skipping {image_path.name}: no person box")
            continue
        target = max(boxes, key=lambda b: (b.h, b.w))
        if target.h < min_height:
            continue
        samples.append(
            DatasetSample(
                sample_id=image_path.stem,
                image_path=image_path,
                bbox=target,
                image_size=(width, height),
            )
        )
    return samples
