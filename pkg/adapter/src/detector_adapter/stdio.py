"""Line-delimited JSON server over stdin/stdout.

One request in flight at a time, responses in request order, and every
protocol violation is answered with {"id", "error"} instead of a crash.
"""

from __future__ import annotations

import json
import sys

from .protocol import RequestError, decode_image, error_reply, ready_reply


def _write(stream, obj) -> None:
    stream.write(json.dumps(obj) + "\n")
    stream.flush()


def handle_line(line: str, detector) -> dict:
    """Map one input line to one reply object."""
    try:
        message = json.loads(line)
    except json.JSONDecodeError as exc:
        return error_reply(None, f"invalid JSON: {exc}")
    if not isinstance(message, dict):
        return error_reply(None, "expected a JSON object")
    if "hello" in message:
        return ready_reply(detector.name)
    request_id = message.get("id")
    if not isinstance(request_id, int):
        return error_reply(request_id, "missing integer id")
    try:
        pixels = decode_image(message)
        return {"id": request_id, "detections": detector.detect(pixels)}
    except RequestError as exc:
        return error_reply(request_id, str(exc))
    except Exception as exc:  # never crash on a single bad request
        return error_reply(request_id, f"internal error: {exc}")


def serve_stdio(detector, stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if not line.strip():
            continue
        _write(stdout, handle_line(line, detector))
