"""Wire-format helpers shared by the stdio and HTTP servers.

Request payloads carry a base64 PNG; responses carry a detection list of
{"bbox": [x, y, w, h], "score": float, "class": str} objects.
"""

from __future__ import annotations

import base64
import binascii
import io

import numpy as np
from PIL import Image

PROTOCOL_VERSION = 1


class RequestError(ValueError):
    """The request payload is malformed; the message goes back to the client."""


def decode_image(payload: dict) -> np.ndarray:
    """Grayscale pixel array from a request payload."""
    b64 = payload.get("image_png_b64")
    if not isinstance(b64, str):
        raise RequestError("missing image_png_b64 field")
    try:
        raw = base64.b64decode(b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise RequestError(f"invalid base64 image: {exc}") from exc
    try:
        with Image.open(io.BytesIO(raw)) as im:
            return np.asarray(im.convert("L"))
    except Exception as exc:
        raise RequestError(f"undecodable image: {exc}") from exc


def detection(x: float, y: float, w: float, h: float, score: float, label: str) -> dict:
    return {"bbox": [x, y, w, h], "score": score, "class": label}


def ready_reply(name: str) -> dict:
    return {"ready": {"protocol": PROTOCOL_VERSION, "name": name}}


def error_reply(request_id, message: str) -> dict:
    rid = request_id if isinstance(request_id, int) else -1
    return {"id": rid, "error": message}
