"""Parametric grid perturbation model: spec, binary genome codec, pixel geometry.

A perturbation is a square block of D x D binary cells anchored inside a
target bounding box.  The block side is a fixed fraction of the box height,
each opaque cell is painted with a single grayscale color, and the anchor
plus the cell pattern are what the optimizer searches over.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .imaging import BBox

DEFAULT_DIMENSION = 8
DEFAULT_WIDTH_RATIO = 0.2
DEFAULT_COLOR = 0
DEFAULT_ANCHOR_BITS = 8


class DegenerateGeometryError(ValueError):
    """Grid cannot be rasterized with at least one pixel per cell."""


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, slots=True)
class GridSpec:
    """One concrete grid perturbation.

    dimension: cells per side (D).
    cells: D*D opacity bits in row-major order, 1 = opaque, 0 = transparent.
    anchor: (u, v) fractions in [0, 1] placing the block's top-left corner
        within the admissible region of the target box.
    width_ratio: block side as a fraction of the target box height.
    color: grayscale paint value for opaque cells.
    """

    dimension: int
    cells: tuple[int, ...]
    anchor: tuple[float, float] = (0.0, 0.0)
    width_ratio: float = DEFAULT_WIDTH_RATIO
    color: int = DEFAULT_COLOR

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        cells = tuple(int(b) for b in self.cells)
        if len(cells) != self.dimension ** 2:
            raise ValueError(
                f"expected {self.dimension ** 2} cells, got {len(cells)}"
            )
        if any(b not in (0, 1) for b in cells):
            raise ValueError("cells must be 0 or 1")
        object.__setattr__(self, "cells", cells)
        u, v = self.anchor
        if not (0.0 <= u <= 1.0 and 0.0 <= v <= 1.0):
            raise ValueError(f"anchor must lie in [0,1]^2, got {self.anchor}")
        if not 0.0 < self.width_ratio <= 1.0:
            raise ValueError(f"width_ratio must be in (0,1], got {self.width_ratio}")
        if not 0 <= self.color <= 255:
            raise ValueError(f"color must be in [0,255], got {self.color}")


@dataclass(frozen=True, slots=True)
class Genome:
    """Fixed-length bitstring: [u bits] ++ [v bits] ++ [cell bits].

    anchor_bits is the per-axis anchor resolution; the trailing bits are the
    row-major cell opacities.
    """

    bits: tuple[int, ...]
    anchor_bits: int = DEFAULT_ANCHOR_BITS

    def __post_init__(self) -> None:
        bits = tuple(int(b) for b in self.bits)
        if any(b not in (0, 1) for b in bits):
            raise ValueError("genome bits must be 0 or 1")
        if self.anchor_bits < 0:
            raise ValueError("anchor_bits must be >= 0")
        if len(bits) <= 2 * self.anchor_bits:
            raise ValueError(
                f"genome of length {len(bits)} leaves no cell bits "
                f"(anchor_bits={self.anchor_bits})"
            )
        object.__setattr__(self, "bits", bits)

    def __len__(self) -> int:
        return len(self.bits)

    @property
    def cell_bits(self) -> tuple[int, ...]:
        return self.bits[2 * self.anchor_bits:]

    def as_string(self) -> str:
        return "".join(str(b) for b in self.bits)

    @classmethod
    def from_string(cls, text: str, anchor_bits: int = DEFAULT_ANCHOR_BITS) -> "Genome":
        return cls(tuple(int(c) for c in text.strip()), anchor_bits)


@dataclass(frozen=True, slots=True)
class GridConfig:
    """Run-level grid parameters shared by every genome in an attack."""

    dimension: int = DEFAULT_DIMENSION
    width_ratio: float = DEFAULT_WIDTH_RATIO
    color: int = DEFAULT_COLOR
    anchor_bits: int = DEFAULT_ANCHOR_BITS

    def __post_init__(self) -> None:
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if not 0.0 < self.width_ratio <= 1.0:
            raise ValueError(f"width_ratio must be in (0,1], got {self.width_ratio}")
        if not 0 <= self.color <= 255:
            raise ValueError(f"color must be in [0,255], got {self.color}")
        if self.anchor_bits < 0:
            raise ValueError(f"anchor_bits must be >= 0, got {self.anchor_bits}")

    @property
    def genome_length(self) -> int:
        return genome_length(self.dimension, self.anchor_bits)

    def spec_for(self, genome: Genome) -> GridSpec:
        return decode_genome(
            genome,
            self.dimension,
            width_ratio=self.width_ratio,
            color=self.color,
        )


@dataclass(frozen=True, slots=True)
class BlockGeometry:
    """Pixel-space placement of a grid block inside a bounding box.

    block_rect is (x, y, side, side); cell_rects are row-major (x, y, w, h)
    rectangles that exactly partition the block.
    """

    block_rect: tuple[int, int, int, int]
    cell_rects: tuple[tuple[int, int, int, int], ...]


def genome_length(dimension: int, anchor_bits: int) -> int:
    """Total bit count: two anchor fields plus one bit per cell."""
    return 2 * anchor_bits + dimension ** 2


def _int_to_bits(value: int, width: int) -> tuple[int, ...]:
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def _bits_to_int(bits: tuple[int, ...]) -> int:
    value = 0
    for b in bits:
        value = (value << 1) | b
    return value


def encode_genome(spec: GridSpec, anchor_bits: int = DEFAULT_ANCHOR_BITS) -> Genome:
    """Pack a spec into a bitstring.

    Anchor components are quantized to anchor_bits levels with round-half-up,
    so encode/decode round-trips within one quantization step; cell bits are
    copied verbatim.
    """
    levels = (1 << anchor_bits) - 1
    head: tuple[int, ...] = ()
    for frac in spec.anchor:
        q = _round_half_up(frac * levels) if anchor_bits > 0 else 0
        head += _int_to_bits(q, anchor_bits)
    return Genome(head + spec.cells, anchor_bits)


def decode_genome(
    genome: Genome,
    dimension: int,
    *,
    width_ratio: float = DEFAULT_WIDTH_RATIO,
    color: int = DEFAULT_COLOR,
) -> GridSpec:
    """Unpack a bitstring into a spec.

    width_ratio and color are run configuration, not part of the genome.
    Raises ValueError on a layout mismatch.
    """
    expected = genome_length(dimension, genome.anchor_bits)
    if len(genome.bits) != expected:
        raise ValueError(
            f"genome length {len(genome.bits)} does not match "
            f"2*{genome.anchor_bits} + {dimension}^2 = {expected}"
        )
    ab = genome.anchor_bits
    if ab > 0:
        levels = (1 << ab) - 1
        u = _bits_to_int(genome.bits[:ab]) / levels
        v = _bits_to_int(genome.bits[ab:2 * ab]) / levels
    else:
        u = v = 0.0
    return GridSpec(
        dimension=dimension,
        cells=genome.bits[2 * ab:],
        anchor=(u, v),
        width_ratio=width_ratio,
        color=color,
    )


def grid_geometry(spec: GridSpec, bbox: "BBox") -> BlockGeometry:
    """Derive the pixel rectangle of the block and of each cell.

    The block side is round(width_ratio * bbox.h); its top-left corner is the
    anchor-weighted position inside the admissible region, rounded then
    clamped so the block stays inside the box.  Cell c of a side s spans
    [floor(c*s/D), floor((c+1)*s/D)), which partitions s exactly for any s, D.
    """
    side = _round_half_up(spec.width_ratio * bbox.h)
    d = spec.dimension
    if side < d:
        raise DegenerateGeometryError(
            f"block side {side}px cannot hold {d} cells of >= 1px"
        )
    if side > bbox.w:
        raise DegenerateGeometryError(
            f"block side {side}px exceeds bbox width {bbox.w}px"
        )
    u, v = spec.anchor
    bx = int(bbox.x) + _round_half_up(u * (bbox.w - side))
    by = int(bbox.y) + _round_half_up(v * (bbox.h - side))
    bx = max(int(bbox.x), min(bx, int(bbox.x + bbox.w) - side))
    by = max(int(bbox.y), min(by, int(bbox.y + bbox.h) - side))

    xs = [side * c // d for c in range(d + 1)]
    cells = tuple(
        (bx + xs[c], by + xs[r], xs[c + 1] - xs[c], xs[r + 1] - xs[r])
        for r in range(d)
        for c in range(d)
    )
    return BlockGeometry(block_rect=(bx, by, side, side), cell_rects=cells)


def random_genome(length: int, rng: random.Random, anchor_bits: int = 0) -> Genome:
    """Draw a uniform random bitstring; identical seeds yield identical bits."""
    if length < 1:
        raise ValueError("length must be >= 1")
    return Genome(tuple(rng.randrange(2) for _ in range(length)), anchor_bits)
