"""Campaign evaluation: success-rate metric, dataset suites, parameter
sweeps, and report persistence (JSON + CSV)."""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .grid import GridConfig
from .imaging import BBox, Image
from .oracle import DEFAULT_TAU_IOU, QueryLedger, detect, target_confidence
from .optimizer import GaConfig, run_attack
from .robustness import EotConfig, FoldConfig

DETECTION_THRESHOLD = 0.5

ABLATION_AXES = ("color", "dimension", "width_ratio")


@dataclass(frozen=True, slots=True)
class Scene:
    """One attackable sample: an image and the target box inside it."""

    sample_id: str
    image: Image
    bbox: BBox


@dataclass(frozen=True, slots=True)
class SampleOutcome:
    sample_id: str
    final_conf: float
    success: bool
    queries: int


@dataclass(frozen=True, slots=True)
class EvaluationReport:
    """Aggregated campaign result over the true-positive samples."""

    samples: tuple[SampleOutcome, ...]
    asr: float
    mean_queries: float
    config: dict

    def to_json_dict(self) -> dict:
        return {
            "config": self.config,
            "asr": self.asr,
            "mean_queries": self.mean_queries,
            "samples": [
                {
                    "id": s.sample_id,
                    "final_conf": s.final_conf,
                    "success": s.success,
                    "queries": s.queries,
                }
                for s in self.samples
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "EvaluationReport":
        samples = tuple(
            SampleOutcome(
                sample_id=s["id"],
                final_conf=float(s["final_conf"]),
                success=bool(s["success"]),
                queries=int(s["queries"]),
            )
            for s in data["samples"]
        )
        return cls(
            samples=samples,
            asr=float(data["asr"]),
            mean_queries=float(data["mean_queries"]),
            config=data.get("config", {}),
        )


@dataclass(frozen=True, slots=True)
class AblationSweep:
    """One grid parameter swept over explicit values, all else held fixed."""

    axis: str
    values: tuple

    def __post_init__(self) -> None:
        if self.axis not in ABLATION_AXES:
            raise ValueError(f"axis must be one of {ABLATION_AXES}, got {self.axis!r}")
        values = tuple(self.values)
        if not values:
            raise ValueError("sweep values must be non-empty")
        for v in values:
            if self.axis == "color" and not (isinstance(v, int) and 0 <= v <= 255):
                raise ValueError(f"color value {v!r} outside [0, 255]")
            if self.axis == "dimension" and not (isinstance(v, int) and v >= 1):
                raise ValueError(f"dimension value {v!r} must be an integer >= 1")
            if self.axis == "width_ratio" and not 0.0 < float(v) <= 1.0:
                raise ValueError(f"width_ratio value {v!r} outside (0, 1]")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, slots=True)
class AblationRow:
    value: object
    asr: float
    mean_queries: float


def asr(final_confidences, threshold: float = DETECTION_THRESHOLD) -> float:
    """Fraction of confidences strictly below the detection threshold.

    A value exactly at the threshold is still a detection, not an evasion.
    """
    confs = list(final_confidences)
    if not confs:
        raise ValueError("attack success rate undefined for an empty sample set")
    return sum(1 for c in confs if c < threshold) / len(confs)


def derive_seed(seed: int, sample_id: str) -> int:
    """Stable per-sample seed, independent of evaluation order."""
    digest = hashlib.sha256(f"{seed}:{sample_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _resolve_oracle(oracle, scene: Scene):
    return oracle(scene) if callable(oracle) else oracle


def run_suite(
    scenes,
    oracle,
    cfg: GaConfig,
    eot: EotConfig | None = None,
    *,
    grid: GridConfig | None = None,
    budget: int = 500,
    tau_iou: float = DEFAULT_TAU_IOU,
    folds: FoldConfig | None = None,
    jobs: int = 1,
    config_snapshot: dict | None = None,
) -> EvaluationReport:
    """Attack every scene the oracle detects cleanly and aggregate.

    Scenes where the clean image scores below the detection threshold are
    not true positives and do not enter the denominator.  The pre-attack
    check uses a throwaway ledger, so reported query counts are attack
    queries only.  Per-sample seeds derive from (cfg.seed, sample id), so
    results do not depend on execution order or worker count.
    """
    grid = grid or GridConfig()
    ordered = sorted(scenes, key=lambda s: s.sample_id)
    if not ordered:
        raise ValueError("empty dataset")

    def attack_one(scene: Scene) -> SampleOutcome | None:
        scene_oracle = _resolve_oracle(oracle, scene)
        clean = detect(scene_oracle, scene.image, QueryLedger())
        y_clean = target_confidence(clean, scene.bbox, tau_iou)
        if y_clean < DETECTION_THRESHOLD:
            return None
        sample_cfg = replace(cfg, seed=derive_seed(cfg.seed, scene.sample_id))
        result = run_attack(
            scene.image,
            scene.bbox,
            scene_oracle,
            sample_cfg,
            eot,
            grid=grid,
            budget=budget,
            tau_iou=tau_iou,
            folds=folds,
        )
        return SampleOutcome(
            sample_id=scene.sample_id,
            final_conf=result.final_confidence,
            success=result.success,
            queries=result.queries_used,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            raw = list(pool.map(attack_one, ordered))
    else:
        raw = [attack_one(scene) for scene in ordered]
    outcomes = [r for r in raw if r is not None]
    if not outcomes:
        raise ValueError("no true positives: the oracle detects none of the clean samples")

    rate = asr([o.final_conf for o in outcomes])
    mean_queries = sum(o.queries for o in outcomes) / len(outcomes)
    return EvaluationReport(
        samples=tuple(outcomes),
        asr=rate,
        mean_queries=mean_queries,
        config=config_snapshot or {},
    )


def ablate(
    scenes,
    oracle,
    sweep: AblationSweep,
    cfg: GaConfig,
    *,
    grid: GridConfig | None = None,
    budget: int = 500,
    tau_iou: float = DEFAULT_TAU_IOU,
    eot: EotConfig | None = None,
    folds: FoldConfig | None = None,
    jobs: int = 1,
) -> list[AblationRow]:
    """One suite per sweep value, emitted in sweep order."""
    grid = grid or GridConfig()
    rows = []
    for value in sweep.values:
        swept = replace(grid, **{sweep.axis: value})
        report = run_suite(
            scenes,
            oracle,
            cfg,
            eot,
            grid=swept,
            budget=budget,
            tau_iou=tau_iou,
            folds=folds,
            jobs=jobs,
        )
        rows.append(AblationRow(value=value, asr=report.asr, mean_queries=report.mean_queries))
    return rows


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def report_json_text(report: EvaluationReport) -> str:
    return json.dumps(report.to_json_dict(), indent=2, sort_keys=True) + "\n"


def write_report(report: EvaluationReport, stem: str | Path) -> tuple[Path, Path]:
    """Persist a report as <stem>.json (full fidelity) and <stem>.csv
    (one row per sample)."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    json_path = stem.with_suffix(".json")
    csv_path = stem.with_suffix(".csv")
    json_path.write_text(report_json_text(report), encoding="utf-8")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "final_conf", "success", "queries"])
        for s in report.samples:
            writer.writerow(
                [s.sample_id, repr(s.final_conf), "true" if s.success else "false", s.queries]
            )
    return json_path, csv_path


def read_report(json_path: str | Path) -> EvaluationReport:
    data = json.loads(Path(json_path).read_text(encoding="utf-8"))
    return EvaluationReport.from_json_dict(data)


def write_ablation(rows: list[AblationRow], stem: str | Path) -> tuple[Path, Path]:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    json_path = stem.with_suffix(".json")
    csv_path = stem.with_suffix(".csv")
    payload = [
        {"value": r.value, "asr": r.asr, "mean_queries": r.mean_queries} for r in rows
    ]
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    with csv_path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "asr", "mean_queries"])
        for r in rows:
            writer.writerow([r.value, repr(r.asr), repr(r.mean_queries)])
    return json_path, csv_path
