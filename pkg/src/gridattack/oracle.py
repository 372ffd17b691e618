"""Query-only detector oracles: synthetic scoring functions for desk-scale
verification, subprocess and HTTP backends speaking the adapter wire
protocol, and strict query accounting.

The tool never sees gradients or internals; every interaction is one image
in, a list of (bbox, score, class) detections out, one ledger tick.
"""

from __future__ import annotations

import base64
import json
import queue
import shlex
import subprocess
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass

import numpy as np

from .imaging import BBox, Image, png_bytes

PERSON_LABEL = "person"
PROTOCOL_VERSION = 1
DEFAULT_TAU_IOU = 0.45
DEFAULT_QUERY_BUDGET = 500
OCCUPANCY_THRESHOLD = 128


class OracleError(Exception):
    """Base class for oracle failures."""


class BudgetExhaustedError(OracleError):
    """A query was requested with no budget remaining."""


class OracleTransportError(OracleError):
    """The backend failed: crash, timeout, bad status, malformed payload."""


@dataclass(frozen=True, slots=True)
class Detection:
    """One detector output: box, confidence, class label."""

    bbox: BBox
    score: float
    class_label: str

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0,1], got {self.score}")


class QueryLedger:
    """Thread-safe counter of detector queries against an optional cap."""

    def __init__(self, budget: int | None = None) -> None:
        if budget is not None and budget < 0:
            raise ValueError("budget must be >= 0")
        self._budget = budget
        self._used = 0
        self._lock = threading.Lock()

    @property
    def used(self) -> int:
        return self._used

    @property
    def budget(self) -> int | None:
        return self._budget

    @property
    def remaining(self) -> int | None:
        if self._budget is None:
            return None
        return self._budget - self._used

    def can_spend(self, n: int) -> bool:
        with self._lock:
            return self._budget is None or self._used + n <= self._budget

    def charge(self, n: int = 1) -> None:
        with self._lock:
            if self._budget is not None and self._used + n > self._budget:
                raise BudgetExhaustedError(
                    f"query budget exhausted ({self._used}/{self._budget})"
                )
            self._used += n


def iou(a: BBox, b: BBox) -> float:
    """Intersection area over union area."""
    ix = max(a.x, b.x)
    iy = max(a.y, b.y)
    ix2 = min(a.x + a.w, b.x + b.w)
    iy2 = min(a.y + a.h, b.y + b.h)
    inter = max(0.0, ix2 - ix) * max(0.0, iy2 - iy)
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def target_confidence(
    detections: list[Detection],
    target: BBox,
    tau_iou: float = DEFAULT_TAU_IOU,
    class_label: str = PERSON_LABEL,
) -> float:
    """Confidence attributed to the target: the best score among detections
    of the right class overlapping it by at least tau_iou, else 0.0 (a
    vanished target counts as fully evaded)."""
    if not 0.0 < tau_iou < 1.0:
        raise ValueError(f"tau_iou must lie in (0,1), got {tau_iou}")
    best = 0.0
    for det in detections:
        if det.class_label != class_label:
            continue
        if iou(det.bbox, target) >= tau_iou:
            best = max(best, det.score)
    return best


def detect(oracle, image: Image, ledger: QueryLedger) -> list[Detection]:
    """Run one query, charging the ledger exactly once before the backend
    is consulted.  An exhausted ledger raises without touching the backend."""
    ledger.charge(1)
    return oracle.query(image)


# ---------------------------------------------------------------------------
# Synthetic oracles
# ---------------------------------------------------------------------------

def _clip_region(image: Image, bbox: BBox) -> np.ndarray | None:
    x, y, w, h = bbox.as_int()
    x0 = max(0, x)
    y0 = max(0, y)
    x1 = min(image.width, x + w)
    y1 = min(image.height, y + h)
    if x1 <= x0 or y1 <= y0:
        return None
    return image.pixels[y0:y1, x0:x1]


class MonotoneOracle:
    """Pure toy detector: confidence is the mean brightness of a fixed scene
    box divided by 255, so darkening the box strictly lowers the score."""

    def __init__(self, bbox: BBox) -> None:
        self.bbox = bbox

    def query(self, image: Image) -> list[Detection]:
        region = _clip_region(image, self.bbox)
        if region is None:
            return []
        score = float(region.mean() / 255.0)
        return [Detection(self.bbox, score, PERSON_LABEL)]


class RuggedOracle:
    """Pure toy detector with a combinatorial landscape: the scene box is cut
    into dimension^2 subregions, each flagged occupied when its mean drops
    below 128, and the score is the fraction of flags disagreeing with a
    hidden pattern.  The unique zero of the score is the pattern itself."""

    def __init__(self, bbox: BBox, dimension: int, hidden_pattern) -> None:
        pattern = tuple(int(b) for b in hidden_pattern)
        if len(pattern) != dimension ** 2:
            raise ValueError(
                f"hidden_pattern needs {dimension ** 2} bits, got {len(pattern)}"
            )
        if any(b not in (0, 1) for b in pattern):
            raise ValueError("hidden_pattern bits must be 0 or 1")
        self.bbox = bbox
        self.dimension = dimension
        self.hidden_pattern = pattern

    def occupancy(self, image: Image) -> tuple[int, ...] | None:
        region = _clip_region(image, self.bbox)
        if region is None:
            return None
        h, w = region.shape
        d = self.dimension
        xs = [w * c // d for c in range(d + 1)]
        ys = [h * r // d for r in range(d + 1)]
        flags = []
        for r in range(d):
            for c in range(d):
                sub = region[ys[r]:ys[r + 1], xs[c]:xs[c + 1]]
                if sub.size == 0:
                    flags.append(0)
                else:
                    flags.append(1 if sub.mean() < OCCUPANCY_THRESHOLD else 0)
        return tuple(flags)

    def query(self, image: Image) -> list[Detection]:
        flags = self.occupancy(image)
        if flags is None:
            return []
        mismatches = sum(
            1 for got, want in zip(flags, self.hidden_pattern) if got != want
        )
        score = mismatches / self.dimension ** 2
        return [Detection(self.bbox, score, PERSON_LABEL)]


@dataclass(frozen=True, slots=True)
class OracleConfig:
    """Which backend to query and how to reach it."""

    kind: str = "synthetic-monotone"
    cmd: str | None = None
    url: str | None = None
    timeout: float = 10.0
    budget: int = DEFAULT_QUERY_BUDGET
    tau_iou: float = DEFAULT_TAU_IOU
    hidden_pattern: str | None = None
    max_inflight: int = 8

    KINDS = ("synthetic-monotone", "synthetic-rugged", "subprocess", "http")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown oracle kind {self.kind!r}")
        if self.kind == "subprocess" and not self.cmd:
            raise ValueError("subprocess oracle requires cmd")
        if self.kind == "http" and not self.url:
            raise ValueError("http oracle requires url")
        if not 0.0 < self.tau_iou < 1.0:
            raise ValueError(f"tau_iou must lie in (0,1), got {self.tau_iou}")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")


def make_synthetic_oracle(cfg: OracleConfig, bbox: BBox, dimension: int):
    """Build the pure in-process oracle for a scene.

    For the rugged kind, a missing hidden_pattern means every run would need
    one anyway, so it must be supplied by the caller.
    """
    if cfg.kind == "synthetic-monotone":
        return MonotoneOracle(bbox)
    if cfg.kind == "synthetic-rugged":
        if cfg.hidden_pattern is None:
            raise ValueError("synthetic-rugged oracle requires hidden_pattern")
        return RuggedOracle(bbox, dimension, cfg.hidden_pattern)
    raise ValueError(f"{cfg.kind!r} is not a synthetic oracle kind")


# ---------------------------------------------------------------------------
# Wire backends
# ---------------------------------------------------------------------------

def image_to_b64(image: Image) -> str:
    return base64.b64encode(png_bytes(image)).decode("ascii")


def parse_detections(payload) -> list[Detection]:
    """Decode the shared response schema; anything off-contract raises
    OracleTransportError."""
    try:
        raw = payload["detections"]
        out = []
        for entry in raw:
            x, y, w, h = entry["bbox"]
            out.append(
                Detection(
                    bbox=BBox(float(x), float(y), float(w), float(h)),
                    score=float(entry["score"]),
                    class_label=str(entry["class"]),
                )
            )
        return out
    except OracleTransportError:
        raise
    except Exception as exc:
        raise OracleTransportError(f"malformed detection payload: {exc}") from exc


class SubprocessOracle:
    """Adapter child process speaking line-delimited JSON over stdio.

    Requests are strictly serialized: one in-flight query at a time, ids
    strictly increasing, responses matched by id.
    """

    def __init__(self, command: str | list[str], timeout: float = 10.0) -> None:
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        self._timeout = timeout
        self._lock = threading.Lock()
        self._next_id = 0
        self._lines: queue.Queue = queue.Queue()
        try:
            self._proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise OracleTransportError(f"cannot spawn adapter: {exc}") from exc
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._send({"hello": {"protocol": PROTOCOL_VERSION}})
        ready = self._read()
        info = ready.get("ready") if isinstance(ready, dict) else None
        if not isinstance(info, dict) or info.get("protocol") != PROTOCOL_VERSION:
            self.close()
            raise OracleTransportError(f"bad handshake reply: {ready!r}")
        self.name = str(info.get("name", ""))

    def _pump(self) -> None:
        try:
            for line in self._proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)  # EOF sentinel

    def _send(self, obj) -> None:
        try:
            self._proc.stdin.write(json.dumps(obj) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError, OSError) as exc:
            raise OracleTransportError(f"adapter pipe closed: {exc}") from exc

    def _read(self):
        try:
            line = self._lines.get(timeout=self._timeout)
        except queue.Empty:
            raise OracleTransportError(
                f"adapter response timed out after {self._timeout}s"
            ) from None
        if line is None:
            raise OracleTransportError("adapter closed its output stream")
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise OracleTransportError(f"adapter sent invalid JSON: {exc}") from exc

    def query(self, image: Image) -> list[Detection]:
        with self._lock:
            self._next_id += 1
            qid = self._next_id
            self._send({"id": qid, "image_png_b64": image_to_b64(image)})
            reply = self._read()
        if not isinstance(reply, dict):
            raise OracleTransportError(f"unexpected reply: {reply!r}")
        if "error" in reply:
            raise OracleTransportError(f"adapter error: {reply['error']}")
        if reply.get("id") != qid:
            raise OracleTransportError(
                f"response id {reply.get('id')!r} does not match request {qid}"
            )
        return parse_detections(reply)

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None:
            return
        for stream in (proc.stdin,):
            try:
                stream.close()
            except Exception:
                pass
        try:
            proc.terminate()
            proc.wait(timeout=2)
        except Exception:
            try:
                proc.kill()
            except Exception:
                pass

    def __enter__(self) -> "SubprocessOracle":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class HttpOracle:
    """POST /detect backend; any non-200 status is a transport failure.

    Queries may run concurrently up to max_inflight.
    """

    def __init__(self, url: str, timeout: float = 10.0, max_inflight: int = 8) -> None:
        base = url.rstrip("/")
        self.url = base if base.endswith("/detect") else base + "/detect"
        self._timeout = timeout
        self._slots = threading.Semaphore(max_inflight)

    def query(self, image: Image) -> list[Detection]:
        body = json.dumps({"image_png_b64": image_to_b64(image)}).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        with self._slots:
            try:
                with urllib.request.urlopen(request, timeout=self._timeout) as resp:
                    if resp.status != 200:
                        raise OracleTransportError(f"HTTP {resp.status} from adapter")
                    payload = json.loads(resp.read().decode("utf-8"))
            except OracleTransportError:
                raise
            except (urllib.error.URLError, OSError, json.JSONDecodeError) as exc:
                raise OracleTransportError(f"http oracle failure: {exc}") from exc
        return parse_detections(payload)


def make_backend_oracle(cfg: OracleConfig):
    """Build the shared wire-protocol oracle named by the config."""
    if cfg.kind == "subprocess":
        return SubprocessOracle(cfg.cmd, timeout=cfg.timeout)
    if cfg.kind == "http":
        return HttpOracle(cfg.url, timeout=cfg.timeout, max_inflight=cfg.max_inflight)
    raise ValueError(f"{cfg.kind!r} is not a wire backend kind")
