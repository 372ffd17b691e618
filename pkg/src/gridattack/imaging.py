"""8-bit grayscale rasters, PNG IO, masked grid fusion, and texture splicing."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as _PILImage

from .grid import Genome, GridSpec, grid_geometry


@dataclass(frozen=True, slots=True)
class BBox:
    """Axis-aligned box: top-left (x, y) plus extent (w, h) in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"bbox extent must be positive, got {self.w}x{self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_int(self) -> tuple[int, int, int, int]:
        return int(round(self.x)), int(round(self.y)), int(round(self.w)), int(round(self.h))


class Image:
    """Immutable 8-bit grayscale raster backed by a read-only numpy array."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels) -> None:
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D grayscale array, got shape {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("pixel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self._pixels = arr

    @property
    def pixels(self) -> np.ndarray:
        """Read-only (height, width) uint8 view."""
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    @classmethod
    def filled(cls, width: int, height: int, value: int = 0) -> "Image":
        return cls(np.full((height, width), value, dtype=np.uint8))

    def to_array(self) -> np.ndarray:
        """Writable copy of the pixel data."""
        return self._pixels.copy()

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return np.array_equal(self._pixels, other._pixels)

    __hash__ = None  # mutable-sized payload; identity hashing would mislead

    def __repr__(self) -> str:
        return f"Image({self.width}x{self.height})"


class Mask:
    """Binary raster marking perturbable pixels (True = may change)."""

    __slots__ = ("_values",)

    def __init__(self, values) -> None:
        arr = np.asarray(values, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2-D mask, got shape {arr.shape}")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def width(self) -> int:
        return self._values.shape[1]

    @property
    def height(self) -> int:
        return self._values.shape[0]

    @property
    def count(self) -> int:
        return int(self._values.sum())


@dataclass(frozen=True, slots=True)
class AdversarialSample:
    """A composed attack image plus the provenance needed to rebuild it."""

    image: Image
    base_id: str | None = None
    genome: Genome | None = None
    transform_log: tuple[dict, ...] = field(default_factory=tuple)


def load_image(path: str | Path) -> Image:
    with _PILImage.open(path) as im:
        return Image(np.asarray(im.convert("L")))


def save_image(image: Image, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    _PILImage.fromarray(image.pixels, mode="L").save(path, format="PNG")


def png_bytes(image: Image) -> bytes:
    buf = io.BytesIO()
    _PILImage.fromarray(image.pixels, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def image_from_png(data: bytes) -> Image:
    with _PILImage.open(io.BytesIO(data)) as im:
        return Image(np.asarray(im.convert("L")))


def mask_from_bbox(bbox: BBox, width: int, height: int) -> Mask:
    """Rectangular mask: True exactly on the bbox interior."""
    x, y, w, h = bbox.as_int()
    if x < 0 or y < 0 or x + w > width or y + h > height:
        raise ValueError(
            f"bbox ({x},{y},{w},{h}) does not fit inside {width}x{height}"
        )
    values = np.zeros((height, width), dtype=bool)
    values[y:y + h, x:x + w] = True
    return Mask(values)


def compose(
    image: Image,
    spec: GridSpec,
    bbox: BBox,
    mask: Mask | None = None,
    *,
    base_id: str | None = None,
    genome: Genome | None = None,
) -> AdversarialSample:
    """Fuse the grid into the image: opaque cells that the mask permits are
    painted with spec.color; every other pixel is untouched.

    The input image is never modified.
    """
    if mask is None:
        mask = mask_from_bbox(bbox, image.width, image.height)
    if (mask.width, mask.height) != (image.width, image.height):
        raise ValueError(
            f"mask {mask.width}x{mask.height} does not match "
            f"image {image.width}x{image.height}"
        )
    geometry = grid_geometry(spec, bbox)
    out = image.to_array()
    allowed = mask.values
    for rect, bit in zip(geometry.cell_rects, spec.cells):
        if not bit:
            continue
        x, y, w, h = rect
        region = out[y:y + h, x:x + w]
        region[allowed[y:y + h, x:x + w]] = spec.color
    log = (
        {
            "op": "grid-fuse",
            "block_rect": list(geometry.block_rect),
            "color": spec.color,
            "dimension": spec.dimension,
        },
    )
    return AdversarialSample(
        image=Image(out), base_id=base_id, genome=genome, transform_log=log
    )


def splice_pattern(
    spec: GridSpec,
    tiles: tuple[int, int] = (1, 1),
    crop_offset: tuple[int, int] = (0, 0),
    cell_px: int = 10,
) -> Image:
    """Render the block at cell_px per cell, tile it periodically, and apply
    a cyclic crop shift.

    Transparent cells render as 255 (no patch); offsets wrap modulo the block
    period so a full-period shift reproduces the unshifted texture.
    """
    nx, ny = tiles
    if nx < 1 or ny < 1:
        raise ValueError(f"tiles must be >= 1, got {tiles}")
    if cell_px < 1:
        raise ValueError(f"cell_px must be >= 1, got {cell_px}")
    d = spec.dimension
    period = d * cell_px
    dx, dy = crop_offset
    if dx < 0 or dy < 0:
        raise ValueError(f"crop_offset must be non-negative, got {crop_offset}")
    dx %= period
    dy %= period

    block = np.full((period, period), 255, dtype=np.uint8)
    for k, bit in enumerate(spec.cells):
        if not bit:
            continue
        r, c = divmod(k, d)
        block[r * cell_px:(r + 1) * cell_px, c * cell_px:(c + 1) * cell_px] = spec.color
    texture = np.tile(block, (ny, nx))
    if dx or dy:
        texture = np.roll(texture, shift=(-dy, -dx), axis=(0, 1))
    return Image(texture)
