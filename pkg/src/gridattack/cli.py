"""Command-line entry point.

Subcommands: attack, evaluate, ablate, render, splice, oracle-check.
Exit codes: 0 success, 1 usage/config error, 2 oracle transport error,
3 attack finished without success (budget or schedule exhausted).
"""

from __future__ import annotations

import argparse
import json
import math
import random
import sys
from fractions import Fraction
from pathlib import Path

from . import conformance, dataset as dataset_mod
from .config import ConfigError, RunConfig, parse_config
from .evaluate import (
    AblationSweep,
    Scene,
    ablate,
    run_suite,
    write_ablation,
    write_report,
)
from .grid import Genome, GridConfig, decode_genome
from .imaging import BBox, load_image, save_image, splice_pattern
from .oracle import (
    OracleConfig,
    OracleTransportError,
    make_backend_oracle,
    make_synthetic_oracle,
)
from .optimizer import run_attack
from .robustness import simulate_folds

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_TRANSPORT = 2
EXIT_NO_SUCCESS = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; this tool reserves 2 for
    # oracle transport failures.
    def error(self, message: str):
        raise _UsageError(message)


def _parse_override_value(token: str):
    try:
        return json.loads(token)
    except json.JSONDecodeError:
        return token


def _collect_overrides(extra: list[str]) -> dict[str, object]:
    """Turn trailing '--dotted.path value' tokens into an override map."""
    overrides: dict[str, object] = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise _UsageError(f"unexpected argument {token!r}")
        key = token[2:]
        value: object
        if "=" in key:
            key, raw = key.split("=", 1)
            value = _parse_override_value(raw)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise _UsageError(f"flag --{key} needs a value")
            value = _parse_override_value(extra[i + 1])
            i += 2
        if "." not in key and key not in ("seed", "jobs"):
            raise _UsageError(f"unknown flag --{key}")
        overrides[key] = value
    return overrides


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="JSON configuration file")
    parser.add_argument("--seed", type=int, help="master random seed")
    parser.add_argument("--jobs", type=int, help="parallel workers")
    parser.add_argument("--out", metavar="DIR", help="output directory")


def _build_parser() -> _Parser:
    parser = _Parser(prog="gridattack", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_attack = sub.add_parser("attack", help="attack a single image")
    p_attack.add_argument("--image", required=True, metavar="PATH")
    p_attack.add_argument(
        "--bbox", metavar="X,Y,W,H", help="target box in pixels; default: sibling annotation"
    )
    _add_common(p_attack)

    p_eval = sub.add_parser("evaluate", help="attack a dataset and report")
    _add_common(p_eval)

    p_ablate = sub.add_parser("ablate", help="sweep one grid parameter")
    p_ablate.add_argument("--axis", required=True, choices=("color", "dimension", "width_ratio"))
    p_ablate.add_argument("--values", required=True, help="comma-separated sweep values")
    _add_common(p_ablate)

    p_render = sub.add_parser("render", help="compose a saved genome onto an image")
    p_render.add_argument("--genome", required=True, metavar="PATH")
    p_render.add_argument("--image", required=True, metavar="PATH")
    p_render.add_argument("--bbox", metavar="X,Y,W,H")
    _add_common(p_render)

    p_splice = sub.add_parser("splice", help="export a tiled texture from a genome")
    p_splice.add_argument("--genome", required=True, metavar="PATH")
    p_splice.add_argument("--tiles", default="1,1", metavar="NX,NY")
    p_splice.add_argument("--offset", default="0,0", metavar="DX,DY")
    p_splice.add_argument("--cell-px", type=int, default=10)
    p_splice.add_argument("--folds", action="store_true", help="apply fold warping")
    _add_common(p_splice)

    p_check = sub.add_parser("oracle-check", help="adapter protocol conformance")
    p_check.add_argument("--rounds", type=int, default=50)
    p_check.add_argument("--echo-images", type=int, default=20)
    _add_common(p_check)

    return parser


def _load_config(args: argparse.Namespace, extra: list[str]) -> RunConfig:
    overrides = _collect_overrides(extra)
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["io.out_dir"] = args.out
    return parse_config(args.config, overrides)


def _parse_pair(text: str, name: str) -> tuple[int, int]:
    parts = text.split(",")
    if len(parts) != 2:
        raise _UsageError(f"--{name} expects 'A,B', got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError as exc:
        raise _UsageError(f"--{name} expects integers: {exc}") from exc


def _parse_bbox(text: str) -> BBox:
    parts = text.split(",")
    if len(parts) != 4:
        raise _UsageError(f"--bbox expects 'X,Y,W,H', got {text!r}")
    try:
        x, y, w, h = (int(p) for p in parts)
        return BBox(x, y, w, h)
    except ValueError as exc:
        raise _UsageError(f"bad --bbox value: {exc}") from exc


def _parse_sweep_value(axis: str, token: str):
    token = token.strip()
    if axis in ("color", "dimension"):
        return int(token)
    if "/" in token:
        return float(Fraction(token))
    return float(token)


def _target_bbox(args: argparse.Namespace, cfg: RunConfig, image_path: Path, size) -> BBox:
    if args.bbox:
        return _parse_bbox(args.bbox)
    annotation = image_path.with_suffix(".txt")
    if not annotation.is_file():
        raise _UsageError(
            f"no --bbox given and no annotation file at {annotation}"
        )
    boxes = dataset_mod.parse_annotation(annotation, size[0], size[1])
    if not boxes:
        raise _UsageError(f"{annotation}: no person box")
    return max(boxes, key=lambda b: (b.h, b.w))


def _hidden_pattern_for(cfg: RunConfig, sample_id: str) -> str:
    if cfg.oracle.hidden_pattern is not None:
        return cfg.oracle.hidden_pattern
    rng = random.Random(f"{cfg.seed}:pattern:{sample_id}")
    return "".join(str(rng.randrange(2)) for _ in range(cfg.grid.dimension ** 2))


def _oracle_for_run(cfg: RunConfig):
    """A Scene -> oracle factory for synthetic kinds, or a shared backend."""
    if cfg.oracle.kind in ("subprocess", "http"):
        backend = make_backend_oracle(cfg.oracle)
        return lambda scene: backend

    def factory(scene: Scene):
        ocfg = cfg.oracle
        if ocfg.kind == "synthetic-rugged":
            ocfg = OracleConfig(
                kind=ocfg.kind,
                timeout=ocfg.timeout,
                budget=ocfg.budget,
                tau_iou=ocfg.tau_iou,
                hidden_pattern=_hidden_pattern_for(cfg, scene.sample_id),
                max_inflight=ocfg.max_inflight,
            )
        return make_synthetic_oracle(ocfg, scene.bbox, cfg.grid.dimension)

    return factory


def _genome_from_file(path: str) -> Genome:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    # accept either a bare genome object or a whole attack-result file
    if isinstance(data, dict) and isinstance(data.get("genome"), dict):
        data = data["genome"]
    if isinstance(data, dict) and data.get("bits"):
        return Genome.from_string(str(data["bits"]), int(data.get("anchor_bits", 8)))
    raise _UsageError(f"{path}: expected an object with 'bits' (and 'anchor_bits')")


def _attack_result_json(result, cfg: RunConfig) -> dict:
    return {
        "genome": {
            "bits": result.best_genome.as_string() if result.best_genome else None,
            "anchor_bits": cfg.grid.anchor_bits,
        },
        "best_fit": result.best_fit,
        "final_conf": result.final_confidence,
        "success": result.success,
        "queries_used": result.queries_used,
        "generations_run": result.generations_run,
        "history": list(result.history),
        "partial": result.partial,
        "error": result.error,
        "config": cfg.snapshot(),
    }


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _cmd_attack(args, cfg: RunConfig) -> int:
    image_path = Path(args.image)
    if not image_path.is_file():
        raise _UsageError(f"image not found: {image_path}")
    image = load_image(image_path)
    target = _target_bbox(args, cfg, image_path, (image.width, image.height))
    scene = Scene(image_path.stem, image, target)
    oracle = _oracle_for_run(cfg)(scene)

    result = run_attack(
        image,
        target,
        oracle,
        cfg.ga,
        cfg.eot if cfg.eot_enabled else None,
        grid=cfg.grid,
        budget=cfg.oracle.budget,
        tau_iou=cfg.oracle.tau_iou,
        folds=cfg.folds if cfg.folds_enabled else None,
        jobs=cfg.jobs,
    )

    out_dir = Path(cfg.io.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if result.best_genome is not None:
        spec = cfg.grid.spec_for(result.best_genome)
        from .imaging import compose  # local import keeps CLI deps explicit

        adv = compose(image, spec, target)
        save_image(adv.image, out_dir / f"{image_path.stem}_adv.png")
    (out_dir / f"{image_path.stem}_attack.json").write_text(
        json.dumps(_attack_result_json(result, cfg), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    print(
        f"attack {'succeeded' if result.success else 'failed'}: "
        f"final confidence {result.final_confidence:.4f} "
        f"after {result.queries_used} queries"
    )
    if result.partial:
        print(f"oracle transport failure: {result.error}", file=sys.stderr)
        return EXIT_TRANSPORT
    return EXIT_OK if result.success else EXIT_NO_SUCCESS


def _scenes_from_config(cfg: RunConfig) -> list[Scene]:
    if not cfg.io.dataset_dir:
        raise _UsageError("io.dataset_dir is not configured")
    samples = dataset_mod.ingest_dataset(cfg.io.dataset_dir, cfg.io.min_height)
    if not samples:
        raise _UsageError(f"no usable samples under {cfg.io.dataset_dir}")
    return [
        Scene(s.sample_id, load_image(s.image_path), s.bbox) for s in samples
    ]


def _cmd_evaluate(args, cfg: RunConfig) -> int:
    scenes = _scenes_from_config(cfg)
    report = run_suite(
        scenes,
        _oracle_for_run(cfg),
        cfg.ga,
        cfg.eot if cfg.eot_enabled else None,
        grid=cfg.grid,
        budget=cfg.oracle.budget,
        tau_iou=cfg.oracle.tau_iou,
        folds=cfg.folds if cfg.folds_enabled else None,
        jobs=cfg.jobs,
        config_snapshot=cfg.snapshot(),
    )
    json_path, csv_path = write_report(report, Path(cfg.io.out_dir) / "report")
    print(
        f"attacked {len(report.samples)} samples: asr={report.asr:.4f} "
        f"mean_queries={report.mean_queries:.2f}"
    )
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def _cmd_ablate(args, cfg: RunConfig) -> int:
    values = tuple(
        _parse_sweep_value(args.axis, tok) for tok in args.values.split(",") if tok.strip()
    )
    try:
        sweep = AblationSweep(axis=args.axis, values=values)
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    scenes = _scenes_from_config(cfg)
    rows = ablate(
        scenes,
        _oracle_for_run(cfg),
        sweep,
        cfg.ga,
        grid=cfg.grid,
        budget=cfg.oracle.budget,
        tau_iou=cfg.oracle.tau_iou,
        eot=cfg.eot if cfg.eot_enabled else None,
        folds=cfg.folds if cfg.folds_enabled else None,
        jobs=cfg.jobs,
    )
    json_path, csv_path = write_ablation(rows, Path(cfg.io.out_dir) / "ablation")
    for row in rows:
        print(f"{args.axis}={row.value}: asr={row.asr:.4f} mean_queries={row.mean_queries:.2f}")
    print(f"wrote {json_path} and {csv_path}")
    return EXIT_OK


def _cmd_render(args, cfg: RunConfig) -> int:
    genome = _genome_from_file(args.genome)
    cells = len(genome.bits) - 2 * genome.anchor_bits
    dimension = math.isqrt(cells)
    if dimension * dimension != cells:
        raise _UsageError(f"genome cell count {cells} is not a perfect square")
    image_path = Path(args.image)
    if not image_path.is_file():
        raise _UsageError(f"image not found: {image_path}")
    image = load_image(image_path)
    target = _target_bbox(args, cfg, image_path, (image.width, image.height))
    spec = decode_genome(
        genome, dimension, width_ratio=cfg.grid.width_ratio, color=cfg.grid.color
    )
    from .imaging import compose

    adv = compose(image, spec, target)
    out_dir = Path(cfg.io.out_dir)
    out_path = out_dir / f"{image_path.stem}_render.png"
    save_image(adv.image, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


def _cmd_splice(args, cfg: RunConfig) -> int:
    genome = _genome_from_file(args.genome)
    cells = len(genome.bits) - 2 * genome.anchor_bits
    dimension = math.isqrt(cells)
    if dimension * dimension != cells:
        raise _UsageError(f"genome cell count {cells} is not a perfect square")
    spec = decode_genome(
        genome, dimension, width_ratio=cfg.grid.width_ratio, color=cfg.grid.color
    )
    tiles = _parse_pair(args.tiles, "tiles")
    offset = _parse_pair(args.offset, "offset")
    texture = splice_pattern(spec, tiles, offset, args.cell_px)
    if args.folds:
        texture = simulate_folds(
            texture, cfg.folds.magnitude, cfg.folds.grid_n, random.Random(cfg.seed)
        )
    out_path = Path(cfg.io.out_dir) / "texture.png"
    save_image(texture, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


def _cmd_oracle_check(args, cfg: RunConfig) -> int:
    kind = cfg.oracle.kind
    if kind == "subprocess":
        results = conformance.check_subprocess_adapter(
            cfg.oracle.cmd,
            rounds=args.rounds,
            echo_images=args.echo_images,
            timeout=cfg.oracle.timeout,
            seed=cfg.seed,
        )
    elif kind == "http":
        results = conformance.check_http_adapter(
            cfg.oracle.url,
            rounds=args.rounds,
            echo_images=args.echo_images,
            timeout=cfg.oracle.timeout,
            seed=cfg.seed,
        )
    else:
        raise _UsageError("oracle-check needs oracle.kind subprocess or http")
    all_ok = True
    for check in results:
        status = "PASS" if check.passed else "FAIL"
        suffix = f" ({check.detail})" if check.detail else ""
        print(f"{status} {check.name}{suffix}")
        all_ok = all_ok and check.passed
    return EXIT_OK if all_ok else EXIT_TRANSPORT


_COMMANDS = {
    "attack": _cmd_attack,
    "evaluate": _cmd_evaluate,
    "ablate": _cmd_ablate,
    "render": _cmd_render,
    "splice": _cmd_splice,
    "oracle-check": _cmd_oracle_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        cfg = _load_config(args, extra)
        return _COMMANDS[args.command](args, cfg)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OracleTransportError as exc:
        print(f"oracle transport error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
