"""Run configuration: JSON file plus dotted-path overrides over defaults.

Precedence is strict and total: built-in defaults, then the config file,
then CLI flags.  Unknown keys are rejected and every violation names the
offending dotted path.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .grid import GridConfig
from .optimizer import GaConfig
from .oracle import OracleConfig
from .robustness import EotConfig, FoldConfig


class ConfigError(ValueError):
    """Bad configuration file, flag, or value; message names the field path."""


@dataclass(frozen=True, slots=True)
class IoConfig:
    dataset_dir: str | None = None
    out_dir: str = "out"
    min_height: int = 120


@dataclass(frozen=True, slots=True)
class RunConfig:
    grid: GridConfig
    ga: GaConfig
    eot: EotConfig
    eot_enabled: bool
    folds: FoldConfig
    folds_enabled: bool
    oracle: OracleConfig
    io: IoConfig
    seed: int = 0
    jobs: int = 1

    def snapshot(self) -> dict:
        """JSON-serializable view of the experiment parameters.

        Local paths (the io section) are deliberately excluded: they say
        where files live on one machine, not what was computed, and reports
        embedding this snapshot must be byte-stable across reruns.
        """
        return {
            "grid": {
                "dimension": self.grid.dimension,
                "width_ratio": self.grid.width_ratio,
                "color": self.grid.color,
                "anchor_bits": self.grid.anchor_bits,
            },
            "ga": {
                "g": self.ga.population_size,
                "s_gen": self.ga.generations,
                "p_c": self.ga.crossover_rate,
                "p_m": self.ga.mutation_rate,
                "elimination_threshold": self.ga.elimination_threshold,
                "early_stop_conf": self.ga.early_stop_conf,
            },
            "eot": {
                "enable": self.eot_enabled,
                "k": self.eot.samples,
                "jitter_max": self.eot.jitter_max,
                "brightness": list(self.eot.brightness),
                "downsample": list(self.eot.downsample),
            },
            "tps_folds": {
                "enable": self.folds_enabled,
                "magnitude": self.folds.magnitude,
                "grid_n": self.folds.grid_n,
            },
            "oracle": {
                "kind": self.oracle.kind,
                "cmd": self.oracle.cmd,
                "url": self.oracle.url,
                "timeout": self.oracle.timeout,
                "budget": self.oracle.budget,
                "tau_iou": self.oracle.tau_iou,
                "hidden_pattern": self.oracle.hidden_pattern,
                "max_inflight": self.oracle.max_inflight,
            },
            "seed": self.seed,
            "jobs": self.jobs,
        }


DEFAULTS: dict = {
    "grid": {"dimension": 8, "width_ratio": 0.2, "color": 0, "anchor_bits": 8},
    "ga": {
        "g": 50,
        "s_gen": 10,
        "p_c": 0.6,
        "p_m": 0.1,
        "elimination_threshold": 0.2,
        "early_stop_conf": 0.5,
    },
    "eot": {
        "enable": False,
        "k": 5,
        "jitter_max": 0.02,
        "brightness": [0.9, 1.1],
        "downsample": [1, 2],
    },
    "tps_folds": {"enable": False, "magnitude": 0.02, "grid_n": 4},
    "oracle": {
        "kind": "synthetic-monotone",
        "cmd": None,
        "url": None,
        "timeout": 10.0,
        "budget": 500,
        "tau_iou": 0.45,
        "hidden_pattern": None,
        "max_inflight": 8,
    },
    "io": {"dataset_dir": None, "out_dir": "out", "min_height": 120},
    "seed": 0,
    "jobs": 1,
}

# Short spellings accepted wherever the long form is, section by section.
ALIASES = {
    "grid": {"d": "dimension", "b_a": "anchor_bits"},
}


def _canonical_key(section: str | None, key: str) -> str:
    if section is not None:
        return ALIASES.get(section, {}).get(key, key)
    return key


def _merge_section(base: dict, incoming: dict, prefix: str) -> None:
    for raw_key, value in incoming.items():
        section = prefix.rstrip(".") if prefix else None
        key = _canonical_key(section, raw_key)
        path = f"{prefix}{raw_key}"
        if key not in base:
            raise ConfigError(f"{path}: unknown configuration key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: expected an object")
            _merge_section(base[key], value, f"{path}.")
        else:
            base[key] = value


def _set_dotted(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = data
    walked: list[str] = []
    for i, raw in enumerate(parts):
        section = walked[-1] if walked else None
        key = _canonical_key(section if i == len(parts) - 1 else None, raw)
        # alias resolution applies to leaf keys within a known section
        if key not in node and section is not None:
            key = _canonical_key(section, raw)
        if key not in node:
            raise ConfigError(f"{dotted}: unknown configuration key")
        if i == len(parts) - 1:
            if isinstance(node[key], dict):
                raise ConfigError(f"{dotted}: refers to a section, not a value")
            node[key] = value
        else:
            if not isinstance(node[key], dict):
                raise ConfigError(f"{dotted}: {'.'.join(parts[:i + 1])} is not a section")
            node = node[key]
            walked.append(key)


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{path}: expected an integer, got {value!r}")
    return value


def _as_number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {value!r}")
    return float(value)


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false, got {value!r}")
    return value


def _build(data: dict) -> RunConfig:
    g = data["grid"]
    try:
        grid = GridConfig(
            dimension=_as_int(g["dimension"], "grid.dimension"),
            width_ratio=_as_number(g["width_ratio"], "grid.width_ratio"),
            color=_as_int(g["color"], "grid.color"),
            anchor_bits=_as_int(g["anchor_bits"], "grid.anchor_bits"),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"grid: {exc}") from exc

    a = data["ga"]
    _require(0.0 <= _as_number(a["p_c"], "ga.p_c") <= 1.0, "ga.p_c", "must lie in [0, 1]")
    _require(0.0 <= _as_number(a["p_m"], "ga.p_m") <= 1.0, "ga.p_m", "must lie in [0, 1]")
    g_size = _as_int(a["g"], "ga.g")
    _require(g_size >= 2 and g_size % 2 == 0, "ga.g", "must be even and >= 2")
    s_gen = _as_int(a["s_gen"], "ga.s_gen")
    _require(s_gen >= 1, "ga.s_gen", "must be >= 1")
    try:
        ga = GaConfig(
            population_size=g_size,
            generations=s_gen,
            crossover_rate=float(a["p_c"]),
            mutation_rate=float(a["p_m"]),
            elimination_threshold=_as_number(
                a["elimination_threshold"], "ga.elimination_threshold"
            ),
            early_stop_conf=_as_number(a["early_stop_conf"], "ga.early_stop_conf"),
            seed=_as_int(data["seed"], "seed"),
        )
    except ValueError as exc:
        raise ConfigError(f"ga: {exc}") from exc

    e = data["eot"]
    brightness = e["brightness"]
    _require(
        isinstance(brightness, (list, tuple)) and len(brightness) == 2,
        "eot.brightness",
        "expected [lo, hi]",
    )
    downsample = e["downsample"]
    _require(
        isinstance(downsample, (list, tuple)) and len(downsample) >= 1,
        "eot.downsample",
        "expected a non-empty list of factors",
    )
    try:
        eot = EotConfig(
            samples=_as_int(e["k"], "eot.k"),
            jitter_max=_as_number(e["jitter_max"], "eot.jitter_max"),
            brightness=(float(brightness[0]), float(brightness[1])),
            downsample=tuple(_as_int(v, "eot.downsample") for v in downsample),
            seed=_as_int(data["seed"], "seed"),
        )
    except ValueError as exc:
        raise ConfigError(f"eot: {exc}") from exc

    f = data["tps_folds"]
    try:
        folds = FoldConfig(
            magnitude=_as_number(f["magnitude"], "tps_folds.magnitude"),
            grid_n=_as_int(f["grid_n"], "tps_folds.grid_n"),
        )
    except ValueError as exc:
        raise ConfigError(f"tps_folds: {exc}") from exc

    o = data["oracle"]
    try:
        oracle = OracleConfig(
            kind=str(o["kind"]),
            cmd=o["cmd"] if o["cmd"] is None else str(o["cmd"]),
            url=o["url"] if o["url"] is None else str(o["url"]),
            timeout=_as_number(o["timeout"], "oracle.timeout"),
            budget=_as_int(o["budget"], "oracle.budget"),
            tau_iou=_as_number(o["tau_iou"], "oracle.tau_iou"),
            hidden_pattern=(
                o["hidden_pattern"] if o["hidden_pattern"] is None else str(o["hidden_pattern"])
            ),
            max_inflight=_as_int(o["max_inflight"], "oracle.max_inflight"),
        )
    except ValueError as exc:
        raise ConfigError(f"oracle: {exc}") from exc

    i = data["io"]
    _require(_as_int(i["min_height"], "io.min_height") >= 0, "io.min_height", "must be >= 0")
    io_cfg = IoConfig(
        dataset_dir=i["dataset_dir"] if i["dataset_dir"] is None else str(i["dataset_dir"]),
        out_dir=str(i["out_dir"]),
        min_height=int(i["min_height"]),
    )

    jobs = _as_int(data["jobs"], "jobs")
    _require(jobs >= 1, "jobs", "must be >= 1")

    return RunConfig(
        grid=grid,
        ga=ga,
        eot=eot,
        eot_enabled=_as_bool(e["enable"], "eot.enable"),
        folds=folds,
        folds_enabled=_as_bool(f["enable"], "tps_folds.enable"),
        oracle=oracle,
        io=io_cfg,
        seed=_as_int(data["seed"], "seed"),
        jobs=jobs,
    )


def parse_config(
    path: str | Path | None = None,
    overrides: dict[str, object] | None = None,
) -> RunConfig:
    """Resolve the effective configuration.

    path: optional JSON file merged over the defaults.
    overrides: dotted-path -> value pairs applied last (CLI flags).
    """
    data = copy.deepcopy(DEFAULTS)
    if path is not None:
        file_path = Path(path)
        if not file_path.is_file():
            raise ConfigError(f"config file not found: {file_path}")
        try:
            loaded = json.loads(file_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file_path}: invalid JSON ({exc})") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{file_path}: top level must be an object")
        _merge_section(data, loaded, "")
    for dotted, value in (overrides or {}).items():
        _set_dotted(data, dotted, value)
    return _build(data)
