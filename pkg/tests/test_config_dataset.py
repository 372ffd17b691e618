"""Configuration precedence/validation and dataset ingestion."""

import json

import numpy as np
import pytest
from PIL import Image as PILImage

from gridattack import ConfigError, ingest_dataset, parse_config


def write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


class TestParseConfig:
    def test_defaults(self):
        cfg = parse_config(None)
        assert cfg.grid.dimension == 8
        assert cfg.grid.width_ratio == 0.2
        assert cfg.grid.color == 0
        assert cfg.ga.population_size == 50
        assert cfg.ga.generations == 10
        assert cfg.ga.crossover_rate == 0.6
        assert cfg.ga.mutation_rate == 0.1
        assert cfg.oracle.budget == 500
        assert not cfg.eot_enabled

    def test_empty_file_keeps_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, {}))
        assert cfg.grid.dimension == 8

    def test_file_overrides_defaults(self, tmp_path):
        cfg = parse_config(write_config(tmp_path, {"ga": {"g": 20}}))
        assert cfg.ga.population_size == 20

    def test_flags_override_file(self, tmp_path):
        path = write_config(tmp_path, {"ga": {"g": 20}})
        cfg = parse_config(path, {"ga.g": 30})
        assert cfg.ga.population_size == 30

    def test_out_of_range_rate_names_field_path(self, tmp_path):
        path = write_config(tmp_path, {"ga": {"p_c": 1.5}})
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert "ga.p_c" in str(err.value)

    def test_unknown_key_rejected(self, tmp_path):
        path = write_config(tmp_path, {"ga": {"mystery": 3}})
        with pytest.raises(ConfigError) as err:
            parse_config(path)
        assert "ga.mystery" in str(err.value)

    def test_unknown_top_level_key_rejected(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(write_config(tmp_path, {"turbo": True}))

    def test_unknown_override_rejected(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"ga.mystery": 1})

    def test_grid_aliases(self, tmp_path):
        path = write_config(tmp_path, {"grid": {"d": 4, "b_a": 2}})
        cfg = parse_config(path)
        assert cfg.grid.dimension == 4
        assert cfg.grid.anchor_bits == 2

    def test_dotted_alias_override(self):
        cfg = parse_config(None, {"grid.d": 4})
        assert cfg.grid.dimension == 4

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{nope")
        with pytest.raises(ConfigError):
            parse_config(path)

    def test_oracle_kind_validated(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"oracle.kind": "quantum"})

    def test_subprocess_kind_requires_cmd(self):
        with pytest.raises(ConfigError):
            parse_config(None, {"oracle.kind": "subprocess"})
        cfg = parse_config(None, {"oracle.kind": "subprocess", "oracle.cmd": "adapter --mode echo"})
        assert cfg.oracle.cmd == "adapter --mode echo"

    def test_seed_flows_into_nested_configs(self):
        cfg = parse_config(None, {"seed": 77})
        assert cfg.seed == 77
        assert cfg.ga.seed == 77
        assert cfg.eot.seed == 77

    def test_snapshot_round_trips_through_parse(self, tmp_path):
        cfg = parse_config(None, {"ga.g": 12, "grid.dimension": 4, "seed": 5})
        snapshot = cfg.snapshot()
        again = parse_config(write_config(tmp_path, snapshot))
        assert again == cfg

    def test_odd_population_rejected_with_path(self):
        with pytest.raises(ConfigError) as err:
            parse_config(None, {"ga.g": 7})
        assert "ga.g" in str(err.value)


def write_sample(tmp_path, stem, size, lines, value=128):
    width, height = size
    arr = np.full((height, width), value, dtype=np.uint8)
    PILImage.fromarray(arr, mode="L").save(tmp_path / f"{stem}.png")
    if lines is not None:
        (tmp_path / f"{stem}.txt").write_text("\n".join(lines) + "\n")


class TestIngestDataset:
    def test_denormalization_arithmetic(self, tmp_path):
        write_sample(tmp_path, "a", (640, 512), ["0 0.5 0.5 0.25 0.5"])
        (sample,) = ingest_dataset(tmp_path, min_height=0)
        assert (sample.bbox.x, sample.bbox.y) == (240, 128)
        assert (sample.bbox.w, sample.bbox.h) == (160, 256)
        assert sample.image_size == (640, 512)

    def test_min_height_filter(self, tmp_path):
        # 100 px tall target is dropped at the default 120 px threshold
        write_sample(tmp_path, "short", (640, 512), ["0 0.5 0.5 0.25 0.1953125"])
        write_sample(tmp_path, "tall", (640, 512), ["0 0.5 0.5 0.25 0.5"])
        samples = ingest_dataset(tmp_path, min_height=120)
        assert [s.sample_id for s in samples] == ["tall"]

    def test_empty_directory(self, tmp_path):
        assert ingest_dataset(tmp_path) == []

    def test_missing_annotation_warns_and_skips(self, tmp_path):
        write_sample(tmp_path, "orphan", (64, 64), None)
        with pytest.warns(UserWarning):
            samples = ingest_dataset(tmp_path)
        assert samples == []

    def test_malformed_line_names_file_and_line(self, tmp_path):
        write_sample(tmp_path, "bad", (64, 64), ["0 0.5 0.5 0.5 0.5", "0 0.5 oops"])
        with pytest.raises(ValueError) as err:
            ingest_dataset(tmp_path, min_height=0)
        message = str(err.value)
        assert "bad.txt" in message and ":2" in message

    def test_non_person_boxes_ignored(self, tmp_path):
        write_sample(
            tmp_path,
            "mixed",
            (200, 200),
            ["1 0.5 0.5 0.9 0.9", "0 0.5 0.5 0.4 0.4"],
        )
        (sample,) = ingest_dataset(tmp_path, min_height=0)
        assert sample.bbox.h == 80

    def test_tallest_person_box_wins(self, tmp_path):
        write_sample(
            tmp_path,
            "two",
            (200, 200),
            ["0 0.3 0.5 0.2 0.4", "0 0.7 0.5 0.2 0.8"],
        )
        (sample,) = ingest_dataset(tmp_path, min_height=0)
        assert sample.bbox.h == 160

    def test_sorted_by_id(self, tmp_path):
        for stem in ("zeta", "alpha", "mid"):
            write_sample(tmp_path, stem, (64, 64), ["0 0.5 0.5 0.5 0.5"])
        samples = ingest_dataset(tmp_path, min_height=0)
        assert [s.sample_id for s in samples] == ["alpha", "mid", "zeta"]

    def test_bbox_clamped_inside_image(self, tmp_path):
        write_sample(tmp_path, "edge", (100, 100), ["0 0.02 0.5 0.2 0.9"])
        (sample,) = ingest_dataset(tmp_path, min_height=0)
        b = sample.bbox
        assert b.x >= 0 and b.y >= 0
        assert b.x + b.w <= 100 and b.y + b.h <= 100

    def test_missing_directory(self, tmp_path):
        with pytest.raises(ValueError):
            ingest_dataset(tmp_path / "nope")
