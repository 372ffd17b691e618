"""Grid model: codec round-trips, geometry derivation, random genomes."""

import math
import random

import pytest

from gridattack import (
    BBox,
    DegenerateGeometryError,
    Genome,
    GridConfig,
    GridSpec,
    decode_genome,
    encode_genome,
    genome_length,
    grid_geometry,
    random_genome,
)


def quantize_half_up(frac: float, bits: int) -> int:
    # independent reference quantizer
    return int(math.floor(frac * ((1 << bits) - 1) + 0.5))


class TestSpecValidation:
    def test_cell_count_must_match_dimension(self):
        with pytest.raises(ValueError):
            GridSpec(dimension=2, cells=(1, 0, 1))

    def test_cell_values_binary(self):
        with pytest.raises(ValueError):
            GridSpec(dimension=1, cells=(2,))

    def test_anchor_within_unit_square(self):
        with pytest.raises(ValueError):
            GridSpec(dimension=1, cells=(1,), anchor=(1.2, 0.0))

    def test_width_ratio_bounds(self):
        with pytest.raises(ValueError):
            GridSpec(dimension=1, cells=(1,), width_ratio=0.0)
        with pytest.raises(ValueError):
            GridSpec(dimension=1, cells=(1,), width_ratio=1.5)

    def test_color_range(self):
        with pytest.raises(ValueError):
            GridSpec(dimension=1, cells=(1,), color=256)


class TestEncode:
    def test_zero_anchor(self):
        spec = GridSpec(dimension=2, cells=(1, 0, 0, 1), anchor=(0.0, 0.0))
        genome = encode_genome(spec, anchor_bits=2)
        assert genome.bits == (0, 0, 0, 0, 1, 0, 0, 1)

    def test_saturated_anchor(self):
        spec = GridSpec(dimension=2, cells=(0, 0, 0, 0), anchor=(1.0, 1.0))
        genome = encode_genome(spec, anchor_bits=2)
        assert genome.bits[:4] == (1, 1, 1, 1)

    def test_halfway_anchor_ties_up(self):
        # 0.5 * 255 = 127.5 rounds up to 128 under the reference quantizer
        assert quantize_half_up(0.5, 8) == 128
        spec = GridSpec(dimension=1, cells=(1,), anchor=(0.5, 0.5))
        genome = encode_genome(spec, anchor_bits=8)
        u_int = int("".join(map(str, genome.bits[:8])), 2)
        v_int = int("".join(map(str, genome.bits[8:16])), 2)
        assert (u_int, v_int) == (128, 128)

    def test_quantizer_agrees_with_reference_everywhere(self):
        rng = random.Random(7)
        for _ in range(200):
            u = rng.random()
            bits = rng.choice([2, 4, 8])
            spec = GridSpec(dimension=1, cells=(1,), anchor=(u, u))
            genome = encode_genome(spec, anchor_bits=bits)
            got = int("".join(map(str, genome.bits[:bits])), 2)
            assert got == quantize_half_up(u, bits)


class TestDecode:
    def test_all_zero(self):
        genome = Genome((0,) * 8, anchor_bits=2)
        spec = decode_genome(genome, 2)
        assert spec.anchor == (0.0, 0.0)
        assert spec.cells == (0, 0, 0, 0)

    def test_all_one(self):
        genome = Genome((1,) * 8, anchor_bits=2)
        spec = decode_genome(genome, 2)
        assert spec.anchor == (1.0, 1.0)
        assert spec.cells == (1, 1, 1, 1)

    def test_length_mismatch_is_hard_error(self):
        genome = Genome((0,) * 8, anchor_bits=2)
        with pytest.raises(ValueError):
            decode_genome(genome, 3)

    def test_zero_anchor_bits_decodes_fixed_anchor(self):
        genome = Genome((1, 0, 0, 1), anchor_bits=0)
        spec = decode_genome(genome, 2)
        assert spec.anchor == (0.0, 0.0)
        assert spec.cells == (1, 0, 0, 1)

    def test_round_trip_over_random_specs(self):
        rng = random.Random(42)
        for _ in range(1000):
            d = rng.choice([1, 2, 3, 4])
            bits = rng.choice([2, 4, 8])
            spec = GridSpec(
                dimension=d,
                cells=tuple(rng.randrange(2) for _ in range(d * d)),
                anchor=(rng.random(), rng.random()),
            )
            back = decode_genome(encode_genome(spec, bits), d)
            assert back.cells == spec.cells
            step = 1.0 / ((1 << bits) - 1)
            assert abs(back.anchor[0] - spec.anchor[0]) <= step
            assert abs(back.anchor[1] - spec.anchor[1]) <= step

    def test_run_config_not_taken_from_genome(self):
        genome = Genome((1,) * 4, anchor_bits=0)
        spec = decode_genome(genome, 2, width_ratio=0.3, color=51)
        assert spec.width_ratio == 0.3
        assert spec.color == 51


class TestGeometry:
    def test_pedestrian_scale_block_and_cells(self):
        # height 400 at one-fifth ratio gives an 80 px block; D=8 cells are 10 px
        spec = GridSpec(dimension=8, cells=(1,) * 64, width_ratio=1 / 5)
        geo = grid_geometry(spec, BBox(0, 0, 200, 400))
        assert geo.block_rect == (0, 0, 80, 80)
        assert all(w == 10 and h == 10 for _, _, w, h in geo.cell_rects)

    def test_zero_anchor_sits_at_bbox_corner(self):
        spec = GridSpec(dimension=2, cells=(1,) * 4, anchor=(0.0, 0.0), width_ratio=0.25)
        geo = grid_geometry(spec, BBox(30, 40, 120, 160))
        assert geo.block_rect[:2] == (30, 40)

    def test_far_anchor_hand_arithmetic(self):
        # side = round(300 / 5) = 60; top-left = (10 + (100-60), 20 + (300-60))
        spec = GridSpec(dimension=2, cells=(1,) * 4, anchor=(1.0, 1.0), width_ratio=1 / 5)
        geo = grid_geometry(spec, BBox(10, 20, 100, 300))
        assert geo.block_rect == (50, 260, 60, 60)

    def test_containment_over_random_anchors(self):
        rng = random.Random(3)
        bbox = BBox(5, 9, 73, 131)
        for _ in range(300):
            spec = GridSpec(
                dimension=3,
                cells=(1,) * 9,
                anchor=(rng.random(), rng.random()),
                width_ratio=0.3,
            )
            x, y, side, _ = grid_geometry(spec, bbox).block_rect
            assert x >= bbox.x and y >= bbox.y
            assert x + side <= bbox.x + bbox.w
            assert y + side <= bbox.y + bbox.h

    def test_cells_tile_block_exactly(self):
        rng = random.Random(11)
        for _ in range(100):
            d = rng.choice([1, 2, 3, 5, 8])
            h = rng.randrange(10 * d, 400)
            spec = GridSpec(
                dimension=d,
                cells=(1,) * (d * d),
                anchor=(rng.random(), rng.random()),
                width_ratio=rng.uniform(d / h + 0.01, 0.5),
            )
            geo = grid_geometry(spec, BBox(0, 0, h, h))
            bx, by, side, _ = geo.block_rect
            covered = set()
            total = 0
            for x, y, w, hh in geo.cell_rects:
                assert w >= 1 and hh >= 1
                pixels = {(i, j) for j in range(y, y + hh) for i in range(x, x + w)}
                assert not (covered & pixels), "cells overlap"
                covered |= pixels
                total += w * hh
            assert total == side * side
            assert len(covered) == side * side

    def test_monotone_scaling(self):
        spec = GridSpec(dimension=2, cells=(1,) * 4, width_ratio=0.21)
        small = grid_geometry(spec, BBox(0, 0, 500, 173)).block_rect[2]
        large = grid_geometry(spec, BBox(0, 0, 500, 346)).block_rect[2]
        assert abs(large - 2 * small) <= 1

    def test_degenerate_cell_size(self):
        spec = GridSpec(dimension=8, cells=(1,) * 64, width_ratio=0.05)
        with pytest.raises(DegenerateGeometryError):
            grid_geometry(spec, BBox(0, 0, 100, 100))

    def test_block_wider_than_bbox(self):
        spec = GridSpec(dimension=2, cells=(1,) * 4, width_ratio=1.0)
        with pytest.raises(DegenerateGeometryError):
            grid_geometry(spec, BBox(0, 0, 50, 200))


class TestRandomGenome:
    def test_seed_determinism(self):
        a = random_genome(32, random.Random(42))
        b = random_genome(32, random.Random(42))
        assert a.bits == b.bits

    def test_single_bit(self):
        genome = random_genome(1, random.Random(0))
        assert len(genome.bits) == 1
        assert genome.bits[0] in (0, 1)

    def test_per_position_ones_fraction(self):
        rng = random.Random(5)
        length = 64
        counts = [0] * length
        draws = 10_000
        for _ in range(draws):
            for i, b in enumerate(random_genome(length, rng).bits):
                counts[i] += b
        for c in counts:
            assert 0.45 <= c / draws <= 0.55

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            random_genome(0, random.Random(0))


class TestGridConfig:
    def test_genome_length(self):
        assert genome_length(8, 8) == 80
        assert GridConfig(dimension=2, anchor_bits=2).genome_length == 8

    def test_spec_for_uses_run_parameters(self):
        cfg = GridConfig(dimension=2, width_ratio=0.4, color=17, anchor_bits=0)
        spec = cfg.spec_for(Genome((1, 1, 0, 0), anchor_bits=0))
        assert spec.width_ratio == 0.4
        assert spec.color == 17
