"""Compositor: masks, grid fusion locality, splice periodicity, PNG IO."""

import random

import numpy as np
import pytest

from gridattack import (
    BBox,
    GridSpec,
    Image,
    Mask,
    compose,
    grid_geometry,
    image_from_png,
    mask_from_bbox,
    png_bytes,
    splice_pattern,
)


def random_image(rng: random.Random, width: int, height: int, lo=0, hi=255) -> Image:
    gen = np.random.default_rng(rng.randrange(2 ** 32))
    return Image(gen.integers(lo, hi + 1, size=(height, width), dtype=np.int64))


def painted_pixel_count(spec: GridSpec, bbox: BBox, mask: Mask) -> int:
    # independent prediction: sum over opaque cells of |cell ∩ mask|
    geo = grid_geometry(spec, bbox)
    total = 0
    for rect, bit in zip(geo.cell_rects, spec.cells):
        if not bit:
            continue
        x, y, w, h = rect
        total += int(mask.values[y:y + h, x:x + w].sum())
    return total


class TestImageType:
    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Image(np.array([[300]]))

    def test_pixels_read_only(self):
        img = Image.filled(4, 4, 7)
        with pytest.raises(ValueError):
            img.pixels[0, 0] = 1

    def test_equality(self):
        assert Image.filled(3, 2, 9) == Image.filled(3, 2, 9)
        assert Image.filled(3, 2, 9) != Image.filled(3, 2, 8)


class TestMask:
    def test_full_image_bbox(self):
        mask = mask_from_bbox(BBox(0, 0, 10, 8), 10, 8)
        assert mask.count == 80

    def test_single_pixel(self):
        mask = mask_from_bbox(BBox(0, 0, 1, 1), 5, 5)
        assert mask.count == 1
        assert bool(mask.values[0, 0])

    def test_interior_count(self):
        mask = mask_from_bbox(BBox(2, 3, 4, 5), 10, 10)
        assert mask.count == 20
        assert bool(mask.values[3, 2]) and bool(mask.values[7, 5])
        assert not mask.values[2, 2] and not mask.values[8, 6]

    def test_bbox_outside_dims(self):
        with pytest.raises(ValueError):
            mask_from_bbox(BBox(8, 8, 4, 4), 10, 10)


class TestCompose:
    def test_transparent_grid_is_identity(self):
        rng = random.Random(0)
        img = random_image(rng, 50, 60)
        spec = GridSpec(dimension=2, cells=(0, 0, 0, 0), width_ratio=0.5)
        out = compose(img, spec, BBox(5, 5, 40, 40)).image
        assert out == img

    def test_opaque_block_paints_and_leaves_rest(self):
        img = Image.filled(60, 60, 200)
        bbox = BBox(10, 10, 40, 40)
        spec = GridSpec(dimension=2, cells=(1, 1, 1, 1), anchor=(0, 0), width_ratio=0.5, color=0)
        out = compose(img, spec, bbox).image
        # block side = 20 at the bbox corner
        assert (out.pixels[10:30, 10:30] == 0).all()
        rest = out.to_array()
        rest[10:30, 10:30] = 200
        assert (rest == 200).all()

    def test_single_cell_changed_pixel_count(self):
        # D=8 block of side 80: one opaque cell covers a 10x10 region
        img = Image.filled(200, 420, 255)
        bbox = BBox(0, 0, 200, 400)
        cells = [0] * 64
        cells[11] = 1
        spec = GridSpec(dimension=8, cells=tuple(cells), width_ratio=1 / 5, color=0)
        out = compose(img, spec, bbox).image
        assert int((out.pixels != img.pixels).sum()) == 100

    def test_input_image_not_modified(self):
        img = Image.filled(40, 40, 99)
        spec = GridSpec(dimension=1, cells=(1,), width_ratio=0.5, color=0)
        compose(img, spec, BBox(0, 0, 40, 40))
        assert (img.pixels == 99).all()

    def test_locality_and_conservation_over_random_scenes(self):
        rng = random.Random(123)
        for _ in range(50):
            w = rng.randrange(40, 90)
            h = rng.randrange(40, 90)
            img = random_image(rng, w, h, lo=60, hi=255)
            bw = rng.randrange(20, w)
            bh = rng.randrange(20, h)
            bbox = BBox(rng.randrange(0, w - bw + 1), rng.randrange(0, h - bh + 1), bw, bh)
            d = rng.choice([1, 2, 3])
            spec = GridSpec(
                dimension=d,
                cells=tuple(rng.randrange(2) for _ in range(d * d)),
                anchor=(rng.random(), rng.random()),
                width_ratio=rng.uniform((d + 1) / bh, min(1.0, (bw - 1) / bh)),
                color=rng.randrange(0, 50),
            )
            # mask over a random sub-rectangle exercises the intersection rule
            mx = rng.randrange(0, w - 10)
            my = rng.randrange(0, h - 10)
            mask = mask_from_bbox(
                BBox(mx, my, rng.randrange(5, w - mx), rng.randrange(5, h - my)), w, h
            )
            out = compose(img, spec, bbox, mask).image
            changed = out.pixels != img.pixels
            assert int(changed.sum()) == painted_pixel_count(spec, bbox, mask)
            assert (out.pixels[~mask.values] == img.pixels[~mask.values]).all()

    def test_idempotent(self):
        rng = random.Random(9)
        img = random_image(rng, 64, 64)
        bbox = BBox(8, 8, 48, 48)
        spec = GridSpec(
            dimension=3,
            cells=(1, 0, 1, 0, 1, 0, 1, 0, 1),
            anchor=(0.4, 0.7),
            width_ratio=0.5,
        )
        once = compose(img, spec, bbox).image
        twice = compose(once, spec, bbox).image
        assert once == twice

    def test_mask_dims_must_match(self):
        img = Image.filled(20, 20, 0)
        spec = GridSpec(dimension=1, cells=(1,), width_ratio=0.5)
        mask = mask_from_bbox(BBox(0, 0, 10, 10), 10, 10)
        with pytest.raises(ValueError):
            compose(img, spec, BBox(0, 0, 20, 20), mask)


class TestSplice:
    def test_single_tile_no_offset(self):
        spec = GridSpec(dimension=2, cells=(1, 0, 0, 1), color=0)
        out = splice_pattern(spec, tiles=(1, 1), crop_offset=(0, 0), cell_px=3)
        assert (out.width, out.height) == (6, 6)
        assert (out.pixels[:3, :3] == 0).all()
        assert (out.pixels[:3, 3:] == 255).all()
        assert (out.pixels[3:, :3] == 255).all()
        assert (out.pixels[3:, 3:] == 0).all()

    def test_full_period_offset_is_identity(self):
        spec = GridSpec(dimension=2, cells=(1, 1, 0, 1), color=40)
        base = splice_pattern(spec, tiles=(3, 2), crop_offset=(0, 0), cell_px=4)
        shifted = splice_pattern(spec, tiles=(3, 2), crop_offset=(8, 8), cell_px=4)
        assert base == shifted

    def test_output_dimensions(self):
        spec = GridSpec(dimension=8, cells=(1,) * 64)
        out = splice_pattern(spec, tiles=(2, 2), crop_offset=(0, 0), cell_px=10)
        assert (out.width, out.height) == (160, 160)

    def test_partial_offset_wraps(self):
        spec = GridSpec(dimension=2, cells=(1, 0, 0, 0), color=0)
        base = splice_pattern(spec, tiles=(2, 2), crop_offset=(0, 0), cell_px=2)
        shifted = splice_pattern(spec, tiles=(2, 2), crop_offset=(1, 0), cell_px=2)
        assert (shifted.pixels[:, :-1] == base.pixels[:, 1:]).all()
        assert (shifted.pixels[:, -1] == base.pixels[:, 0]).all()

    def test_validation(self):
        spec = GridSpec(dimension=1, cells=(1,))
        with pytest.raises(ValueError):
            splice_pattern(spec, tiles=(0, 1))
        with pytest.raises(ValueError):
            splice_pattern(spec, cell_px=0)
        with pytest.raises(ValueError):
            splice_pattern(spec, crop_offset=(-1, 0))


class TestPngIo:
    def test_round_trip_bytes(self):
        rng = random.Random(17)
        img = random_image(rng, 33, 21)
        assert image_from_png(png_bytes(img)) == img

    def test_round_trip_file(self, tmp_path):
        from gridattack import load_image, save_image

        rng = random.Random(18)
        img = random_image(rng, 12, 34)
        path = tmp_path / "img.png"
        save_image(img, path)
        assert load_image(path) == img
