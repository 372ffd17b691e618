"""Robustness machinery: random image transforms for expectation-based
hardening, and thin-plate-spline fitting / warping / fold simulation."""

from __future__ import annotations

import random
from dataclasses import dataclass

import numpy as np

from .imaging import BBox, Image


class TpsFitError(ValueError):
    """The control-point system is singular (collinear or duplicate points)."""


# ---------------------------------------------------------------------------
# Transform sampling
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class TransformSample:
    """One random draw: perspective corner jitter (fractions of image dims),
    a multiplicative brightness factor, and an integer downsample factor."""

    corner_jitter: tuple[tuple[float, float], ...]
    brightness_scale: float
    downsample_factor: int

    def __post_init__(self) -> None:
        if len(self.corner_jitter) != 4:
            raise ValueError("corner_jitter must hold 4 offset pairs")
        if self.downsample_factor < 1:
            raise ValueError("downsample_factor must be >= 1")

    @property
    def is_identity(self) -> bool:
        return (
            all(dx == 0.0 and dy == 0.0 for dx, dy in self.corner_jitter)
            and self.brightness_scale == 1.0
            and self.downsample_factor == 1
        )


@dataclass(frozen=True, slots=True)
class EotConfig:
    """Distribution parameters for the transform draws.

    samples is the number of draws averaged per fitness evaluation.  The
    defaults are mild on purpose: strong jitter or downsampling would erase
    cells only a few pixels wide.
    """

    samples: int = 5
    jitter_max: float = 0.02
    brightness: tuple[float, float] = (0.9, 1.1)
    downsample: tuple[int, ...] = (1, 2)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.jitter_max < 0:
            raise ValueError("jitter_max must be >= 0")
        lo, hi = self.brightness
        if lo > hi:
            raise ValueError("brightness range must be ordered (lo, hi)")
        if not self.downsample or any(f < 1 for f in self.downsample):
            raise ValueError("downsample factors must be >= 1")


@dataclass(frozen=True, slots=True)
class FoldConfig:
    """Cloth-fold simulation parameters for thin-plate warping."""

    magnitude: float = 0.02
    grid_n: int = 4

    def __post_init__(self) -> None:
        if self.magnitude < 0:
            raise ValueError("magnitude must be >= 0")
        if self.grid_n < 2:
            raise ValueError("grid_n must be >= 2")


def sample_transforms(cfg: EotConfig, rng: random.Random) -> list[TransformSample]:
    """Draw cfg.samples independent transforms; deterministic under seed."""
    out = []
    choices = sorted(set(cfg.downsample))
    for _ in range(cfg.samples):
        jitter = tuple(
            (
                rng.uniform(-cfg.jitter_max, cfg.jitter_max),
                rng.uniform(-cfg.jitter_max, cfg.jitter_max),
            )
            for _ in range(4)
        )
        brightness = rng.uniform(*cfg.brightness)
        factor = choices[0] if len(choices) == 1 else rng.choice(choices)
        out.append(TransformSample(jitter, brightness, factor))
    return out


def _bilinear(arr: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Sample arr at float coordinates with bilinear weights, clamping
    out-of-bounds lookups to the edge value."""
    h, w = arr.shape
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    a = arr.astype(np.float64)
    return (
        a[y0, x0] * (1 - fx) * (1 - fy)
        + a[y0, x1] * fx * (1 - fy)
        + a[y1, x0] * (1 - fx) * fy
        + a[y1, x1] * fx * fy
    )


def _corner_points(width: int, height: int) -> np.ndarray:
    return np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )


def _jittered_corners(t: TransformSample, width: int, height: int) -> np.ndarray:
    base = _corner_points(width, height)
    offsets = np.array([[dx * width, dy * height] for dx, dy in t.corner_jitter])
    return base + offsets


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 projective map sending the 4 src points onto the 4 dst points."""
    rows = []
    rhs = []
    for (x, y), (px, py) in zip(src, dst):
        rows.append([x, y, 1.0, 0.0, 0.0, 0.0, -px * x, -px * y])
        rhs.append(px)
        rows.append([0.0, 0.0, 0.0, x, y, 1.0, -py * x, -py * y])
        rhs.append(py)
    h = np.linalg.solve(np.array(rows), np.array(rhs))
    return np.array([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]])


def _project(matrix: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    denom = matrix[2, 0] * xs + matrix[2, 1] * ys + matrix[2, 2]
    px = (matrix[0, 0] * xs + matrix[0, 1] * ys + matrix[0, 2]) / denom
    py = (matrix[1, 0] * xs + matrix[1, 1] * ys + matrix[1, 2]) / denom
    return px, py


def apply_transform(image: Image, t: TransformSample) -> Image:
    """Perspective-warp by the jittered corners (bilinear), scale brightness
    with clamping, then block-average downsample.

    An all-identity sample returns the image pixel-for-pixel.
    """
    arr = image.pixels
    if any(dx != 0.0 or dy != 0.0 for dx, dy in t.corner_jitter):
        h, w = arr.shape
        src = _corner_points(w, h)
        dst = _jittered_corners(t, w, h)
        inverse = _homography(dst, src)  # output pixel -> source location
        ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
        sx, sy = _project(inverse, xs, ys)
        arr = np.rint(_bilinear(arr, sx, sy)).astype(np.uint8)
    if t.brightness_scale != 1.0:
        scaled = np.rint(arr.astype(np.float64) * t.brightness_scale)
        arr = np.clip(scaled, 0, 255).astype(np.uint8)
    f = t.downsample_factor
    if f > 1:
        h, w = arr.shape
        h2, w2 = (h // f) * f, (w // f) * f
        if h2 < f or w2 < f:
            raise ValueError(f"image {w}x{h} too small for downsample factor {f}")
        blocks = arr[:h2, :w2].reshape(h2 // f, f, w2 // f, f).astype(np.float64)
        arr = np.rint(blocks.mean(axis=(1, 3))).astype(np.uint8)
    return Image(arr)


def transform_bbox(bbox: BBox, t: TransformSample, width: int, height: int) -> BBox:
    """Track a box through the same transform: corners follow the forward
    perspective map, then coordinates shrink by the downsample factor."""
    corners = np.array(
        [
            [bbox.x, bbox.y],
            [bbox.x + bbox.w, bbox.y],
            [bbox.x + bbox.w, bbox.y + bbox.h],
            [bbox.x, bbox.y + bbox.h],
        ],
        dtype=np.float64,
    )
    if any(dx != 0.0 or dy != 0.0 for dx, dy in t.corner_jitter):
        forward = _homography(_corner_points(width, height), _jittered_corners(t, width, height))
        px, py = _project(forward, corners[:, 0], corners[:, 1])
        corners = np.stack([px, py], axis=1)
    f = t.downsample_factor
    corners /= f
    x0 = float(corners[:, 0].min())
    y0 = float(corners[:, 1].min())
    x1 = float(corners[:, 0].max())
    y1 = float(corners[:, 1].max())
    # Clamp into the transformed raster, preserving a positive extent.
    out_w = max(width // f, 1)
    out_h = max(height // f, 1)
    x0 = min(max(x0, 0.0), out_w - 1.0)
    y0 = min(max(y0, 0.0), out_h - 1.0)
    x1 = max(min(x1, float(out_w)), x0 + 1e-6)
    y1 = max(min(y1, float(out_h)), y0 + 1e-6)
    return BBox(x0, y0, x1 - x0, y1 - y0)


# ---------------------------------------------------------------------------
# Thin plate splines
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TpsWarp:
    """A fitted thin-plate map and its parameters.

    affine holds one row per output axis as [constant, x, y]; weights holds
    one kernel coefficient pair per control point.  The radial kernel is
    U(r) = r^2 log(r^2) with the removable singularity U(0) = 0.
    """

    control_src: np.ndarray
    control_dst: np.ndarray
    affine: np.ndarray
    weights: np.ndarray
    regularization: float = 0.0

    def __post_init__(self) -> None:
        for name in ("control_src", "control_dst", "affine", "weights"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map an (m, 2) array of (x, y) points through the warp."""
        pts = np.asarray(points, dtype=np.float64)
        d2 = _sq_dists(pts, self.control_src)
        u = _kernel(d2)
        return self.affine[:, 0] + pts @ self.affine[:, 1:].T + u @ self.weights


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kernel(d2: np.ndarray) -> np.ndarray:
    out = np.zeros_like(d2)
    nz = d2 > 0
    out[nz] = d2[nz] * np.log(d2[nz])
    return out


def fit_tps(src, dst, regularization: float = 0.0) -> TpsWarp:
    """Solve the standard thin-plate linear system for src -> dst.

    With regularization 0 the warp interpolates every control point exactly;
    the kernel weights always satisfy the zero-sum and zero-moment side
    conditions.  Collinear or duplicate source points raise TpsFitError.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape:
        raise ValueError("src and dst must both be (n, 2) point arrays")
    n = src.shape[0]
    if n < 3:
        raise ValueError(f"need at least 3 control points, got {n}")
    if regularization < 0:
        raise ValueError("regularization must be >= 0")

    d2 = _sq_dists(src, src)
    off_diag = d2 + np.eye(n)
    if np.any(off_diag == 0):
        raise TpsFitError("duplicate control points")
    p = np.column_stack([np.ones(n), src])
    if np.linalg.matrix_rank(p) < 3:
        raise TpsFitError("control points are collinear")

    k = _kernel(d2) + regularization * np.eye(n)
    upper = np.hstack([k, p])
    lower = np.hstack([p.T, np.zeros((3, 3))])
    system = np.vstack([upper, lower])
    rhs = np.vstack([dst, np.zeros((3, 2))])
    try:
        solution = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as exc:
        raise TpsFitError(f"singular thin-plate system: {exc}") from exc
    weights = solution[:n]
    affine = solution[n:].T  # (2, 3) rows: [const, x, y] per axis
    return TpsWarp(src, dst, affine, weights, regularization)


def identity_tps(points) -> TpsWarp:
    """Convenience: fit a warp whose source and destination coincide."""
    pts = np.asarray(points, dtype=np.float64)
    return fit_tps(pts, pts)


def warp_image(image: Image, warp: TpsWarp) -> Image:
    """Resample through the inverse-fitted warp so every output pixel is
    defined; samples outside the frame take the nearest edge value."""
    inverse = fit_tps(warp.control_dst, warp.control_src, warp.regularization)
    h, w = image.pixels.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    pts = np.column_stack([xs.ravel(), ys.ravel()])
    mapped = inverse.apply(pts)
    sampled = _bilinear(image.pixels, mapped[:, 0], mapped[:, 1])
    return Image(np.rint(sampled).reshape(h, w).astype(np.uint8))


def simulate_folds(
    image: Image, magnitude: float, grid_n: int, rng: random.Random
) -> Image:
    """Jitter a grid_n x grid_n control lattice by at most
    magnitude * min(width, height) per coordinate and thin-plate-warp the
    image through it.  Deterministic under seed; magnitude 0 is a no-op."""
    if magnitude < 0:
        raise ValueError("magnitude must be >= 0")
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    if magnitude == 0:
        return image
    w, h = image.width, image.height
    xs = np.linspace(0.0, w - 1.0, grid_n)
    ys = np.linspace(0.0, h - 1.0, grid_n)
    src = np.array([[x, y] for y in ys for x in xs])
    amp = magnitude * min(w, h)
    dst = np.array(
        [[x + rng.uniform(-amp, amp), y + rng.uniform(-amp, amp)] for x, y in src]
    )
    return warp_image(image, fit_tps(src, dst))
