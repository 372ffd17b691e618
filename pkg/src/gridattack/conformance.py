"""Adapter protocol conformance checks used by the oracle-check command.

The checks drive the wire protocols directly (raw JSON lines or raw HTTP)
rather than going through the oracle backends, so a broken adapter cannot
hide behind client-side tolerance.
"""

from __future__ import annotations

import json
import queue
import random
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

from .imaging import BBox, Image
from .oracle import MonotoneOracle, PROTOCOL_VERSION, image_to_b64


@dataclass(frozen=True, slots=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _random_image(rng: random.Random) -> Image:
    w = rng.randrange(16, 64)
    h = rng.randrange(16, 64)
    seedling = np.random.default_rng(rng.randrange(2 ** 32))
    return Image(seedling.integers(0, 256, size=(h, w), dtype=np.uint8))


class _RawStdioClient:
    """Minimal line-protocol driver with direct access to the pipes."""

    def __init__(self, command: str, timeout: float) -> None:
        self.timeout = timeout
        self.proc = subprocess.Popen(
            shlex.split(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue = queue.Queue()
        threading.Thread(target=self._pump, daemon=True).start()

    def _pump(self) -> None:
        try:
            for line in self.proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def send_line(self, text: str) -> None:
        self.proc.stdin.write(text + "\n")
        self.proc.stdin.flush()

    def send(self, obj) -> None:
        self.send_line(json.dumps(obj))

    def read(self):
        line = self._lines.get(timeout=self.timeout)
        if line is None:
            raise RuntimeError("adapter closed its output stream")
        return json.loads(line)

    def close(self) -> None:
        try:
            self.proc.stdin.close()
        except Exception:
            pass
        try:
            self.proc.terminate()
            self.proc.wait(timeout=2)
        except Exception:
            try:
                self.proc.kill()
            except Exception:
                pass


def _extract_score(reply: dict) -> float | None:
    dets = reply.get("detections") or []
    if not dets:
        return None
    return float(dets[0]["score"])


def check_subprocess_adapter(
    cmd: str,
    *,
    rounds: int = 50,
    echo_images: int = 20,
    timeout: float = 10.0,
    seed: int = 0,
) -> list[CheckResult]:
    results: list[CheckResult] = []
    rng = random.Random(seed)
    client = _RawStdioClient(cmd, timeout)
    try:
        # Handshake
        try:
            client.send({"hello": {"protocol": PROTOCOL_VERSION}})
            ready = client.read()
            info = ready.get("ready", {})
            ok = info.get("protocol") == PROTOCOL_VERSION and "name" in info
            results.append(
                CheckResult("handshake", ok, "" if ok else f"reply {ready!r}")
            )
        except Exception as exc:
            results.append(CheckResult("handshake", False, str(exc)))
            return results

        # Round trips with matching ids
        mismatches = []
        for i in range(1, rounds + 1):
            img = _random_image(rng)
            client.send({"id": i, "image_png_b64": image_to_b64(img)})
            reply = client.read()
            if reply.get("id") != i or "detections" not in reply:
                mismatches.append((i, reply))
        results.append(
            CheckResult(
                f"roundtrip-ids({rounds})",
                not mismatches,
                "" if not mismatches else f"first mismatch {mismatches[0]!r}",
            )
        )

        # Malformed input is answered with an error, and the adapter survives
        try:
            client.send_line("this is not json")
            reply = client.read()
            survived_error = isinstance(reply, dict) and "error" in reply
            client.send({"id": rounds + 1, "image_png_b64": image_to_b64(_random_image(rng))})
            follow_up = client.read()
            survived = follow_up.get("id") == rounds + 1 and "detections" in follow_up
            results.append(
                CheckResult(
                    "malformed-input",
                    survived_error and survived,
                    "" if survived_error and survived else f"error reply {reply!r}",
                )
            )
        except Exception as exc:
            results.append(CheckResult("malformed-input", False, str(exc)))
            return results

        # Echo scores agree with the in-process monotone oracle
        worst = 0.0
        qid = rounds + 1
        for _ in range(echo_images):
            img = _random_image(rng)
            qid += 1
            client.send({"id": qid, "image_png_b64": image_to_b64(img)})
            reply = client.read()
            adapter_score = _extract_score(reply)
            local = MonotoneOracle(BBox(0, 0, img.width, img.height))
            local_score = local.query(img)[0].score
            if adapter_score is None:
                worst = 1.0
                break
            worst = max(worst, abs(adapter_score - local_score))
        tolerance = 1.0 / 255.0
        results.append(
            CheckResult(
                f"echo-equivalence({echo_images})",
                worst <= tolerance,
                f"max deviation {worst:.6f}",
            )
        )
    finally:
        client.close()
    return results


def check_http_adapter(
    url: str,
    *,
    rounds: int = 50,
    echo_images: int = 20,
    timeout: float = 10.0,
    seed: int = 0,
) -> list[CheckResult]:
    results: list[CheckResult] = []
    rng = random.Random(seed)
    endpoint = url.rstrip("/")
    if not endpoint.endswith("/detect"):
        endpoint += "/detect"

    def post(body: bytes):
        req = urllib.request.Request(
            endpoint, data=body, headers={"Content-Type": "application/json"}
        )
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            return resp.status, json.loads(resp.read().decode("utf-8"))

    # Reachability plus round trips
    failures = []
    try:
        for i in range(rounds):
            img = _random_image(rng)
            status, payload = post(json.dumps({"image_png_b64": image_to_b64(img)}).encode())
            if status != 200 or "detections" not in payload:
                failures.append((i, status))
        results.append(
            CheckResult(
                f"roundtrip({rounds})",
                not failures,
                "" if not failures else f"first failure {failures[0]!r}",
            )
        )
    except Exception as exc:
        results.append(CheckResult(f"roundtrip({rounds})", False, str(exc)))
        return results

    # Malformed body rejected without killing the server
    try:
        try:
            status, _ = post(b"this is not json")
            rejected = status != 200
        except urllib.error.HTTPError:
            rejected = True
        status, payload = post(
            json.dumps({"image_png_b64": image_to_b64(_random_image(rng))}).encode()
        )
        survived = status == 200 and "detections" in payload
        results.append(CheckResult("malformed-input", rejected and survived))
    except Exception as exc:
        results.append(CheckResult("malformed-input", False, str(exc)))
        return results

    # Echo equivalence
    try:
        worst = 0.0
        for _ in range(echo_images):
            img = _random_image(rng)
            _, payload = post(json.dumps({"image_png_b64": image_to_b64(img)}).encode())
            adapter_score = _extract_score(payload)
            local = MonotoneOracle(BBox(0, 0, img.width, img.height))
            local_score = local.query(img)[0].score
            if adapter_score is None:
                worst = 1.0
                break
            worst = max(worst, abs(adapter_score - local_score))
        results.append(
            CheckResult(
                f"echo-equivalence({echo_images})",
                worst <= 1.0 / 255.0,
                f"max deviation {worst:.6f}",
            )
        )
    except Exception as exc:
        results.append(CheckResult(f"echo-equivalence({echo_images})", False, str(exc)))
    return results
