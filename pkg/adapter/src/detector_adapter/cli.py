"""Adapter entry point: pick a detector, then serve stdio or HTTP."""

from __future__ import annotations

import argparse
import sys

from .detectors import build_detector
from .httpserver import serve_http
from .stdio import serve_stdio


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="detector-adapter", description=__doc__)
    parser.add_argument("--mode", choices=("echo", "model"), default="echo")
    parser.add_argument("--weights", metavar="PATH", help="weights file (model mode)")
    parser.add_argument(
        "--listen",
        metavar="HOST:PORT",
        help="serve HTTP on this address instead of stdio (port 0 picks a free port)",
    )
    args = parser.parse_args(argv)
    try:
        detector = build_detector(args.mode, args.weights)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.listen:
        serve_http(detector, args.listen)
    else:
        serve_stdio(detector)
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
