"""Detector backends behind the wire protocols.

EchoDetector is the conformance mode: a pure function of the image that any
client can reproduce, so protocol plumbing can be validated end to end
without model weights.  ModelDetector wraps an off-the-shelf torchvision
pedestrian detector when torch is installed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .protocol import detection

# Detections below this score are dropped as noise; anything above passes
# through unthresholded so the querying tool owns the decision threshold.
SCORE_FLOOR = 0.05


class EchoDetector:
    """One full-frame person detection scored by mean brightness / 255."""

    name = "echo"

    def detect(self, pixels: np.ndarray) -> list[dict]:
        h, w = pixels.shape
        score = float(pixels.mean() / 255.0) if pixels.size else 0.0
        return [detection(0, 0, w, h, score, "person")]


class ModelDetector:
    """Torchvision detection model reporting raw person scores.

    Requires the optional torch/torchvision dependencies and a readable
    weights file; loading is deferred to first use of the class.
    """

    name = "model"
    PERSON_CLASS_INDEX = 1  # COCO person label in torchvision detectors

    def __init__(self, weights_path: str) -> None:
        path = Path(weights_path)
        if not path.is_file():
            raise ValueError(f"weights file not found: {path}")
        try:
            import torch
            import torchvision
        except ImportError as exc:
            raise RuntimeError(
                "model mode needs the optional torch/torchvision dependencies"
            ) from exc
        self._torch = torch
        model = torchvision.models.detection.fasterrcnn_resnet50_fpn(
            weights=None, weights_backbone=None
        )
        state = torch.load(path, map_location="cpu")
        if isinstance(state, dict) and "model" in state:
            state = state["model"]
        model.load_state_dict(state)
        model.eval()
        self._model = model

    def detect(self, pixels: np.ndarray) -> list[dict]:
        torch = self._torch
        frame = torch.from_numpy(np.ascontiguousarray(pixels)).float() / 255.0
        batch = [frame.unsqueeze(0).repeat(3, 1, 1)]
        with torch.no_grad():
            (output,) = self._model(batch)
        results = []
        for box, label, score in zip(
            output["boxes"].tolist(), output["labels"].tolist(), output["scores"].tolist()
        ):
            if score < SCORE_FLOOR:
                continue
            x0, y0, x1, y1 = box
            name = "person" if label == self.PERSON_CLASS_INDEX else f"class{label}"
            results.append(detection(x0, y0, x1 - x0, y1 - y0, float(score), name))
        return results


def build_detector(mode: str, weights: str | None = None):
    if mode == "echo":
        return EchoDetector()
    if mode == "model":
        if not weights:
            raise ValueError("model mode requires --weights")
        return ModelDetector(weights)
    raise ValueError(f"unknown mode {mode!r}")
