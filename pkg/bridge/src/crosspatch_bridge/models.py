"""Detector backends the bridge can serve.

Identifiers:
  torchvision:<name>  pretrained torchvision detection model (COCO weights),
                      filtered to the person class; needs the weights to be
                      downloadable or already cached.
  stub:dark-blob      deterministic intensity-blob box, NOT a trained model;
  stub:bright-blob    exists so the protocol machinery can be exercised and
                      conformance-tested on machines without model weights.

Every backend is a callable mapping an (h, w, 3) or (h, w) uint8 array to a
list of ((x1, y1, x2, y2), score) pairs with scores in [0, 1], deterministic
for identical inputs.
"""

from __future__ import annotations

import numpy as np


class BridgeModelError(RuntimeError):
    """The requested model cannot be loaded; the server must exit nonzero."""


COCO_PERSON_LABEL = 1


class TorchvisionDetector:
    """Pretrained torchvision detection model, person class only."""

    def __init__(self, name: str, device: str = "cpu") -> None:
        try:
            import torch
            from torchvision.models import detection as tvd
        except ImportError as exc:
            raise BridgeModelError(f"torchvision backend unavailable: {exc}") from exc
        factory = getattr(tvd, name, None)
        if factory is None:
            raise BridgeModelError(f"torchvision has no detection model {name!r}")
        try:
            self.model = factory(weights="DEFAULT")
        except Exception as exc:  # weight download/cache failure
            raise BridgeModelError(f"could not load pretrained weights for {name}: {exc}") from exc
        self.model.eval()
        self.device = torch.device(device)
        self.model.to(self.device)
        self._torch = torch

    def __call__(self, image: np.ndarray):
        torch = self._torch
        if image.ndim == 2:
            image = np.stack([image] * 3, axis=2)
        tensor = torch.from_numpy(image.astype(np.float32) / 255.0).permute(2, 0, 1).to(self.device)
        with torch.no_grad():
            out = self.model([tensor])[0]
        results = []
        for box, label, score in zip(out["boxes"], out["labels"], out["scores"]):
            if int(label) != COCO_PERSON_LABEL:
                continue
            x1, y1, x2, y2 = (float(v) for v in box)
            results.append(((x1, y1, x2, y2), float(min(max(score.item(), 0.0), 1.0))))
        return results


class BlobStub:
    """Bounding box of the dark (or bright) intensity blob; deterministic.

    A placeholder backend for protocol tests; it is not a trained detector
    and says so in its identifier.
    """

    def __init__(self, bright: bool) -> None:
        self.bright = bright

    def __call__(self, image: np.ndarray):
        gray = image.mean(axis=2) if image.ndim == 3 else image.astype(np.float64)
        lo, hi = float(gray.min()), float(gray.max())
        if hi - lo < 8.0:
            return []
        threshold = (lo + hi) / 2.0
        fg = gray > threshold if self.bright else gray < threshold
        if not fg.any():
            return []
        rows = np.any(fg, axis=1)
        cols = np.any(fg, axis=0)
        y1, y2 = np.argmax(rows), len(rows) - np.argmax(rows[::-1])
        x1, x2 = np.argmax(cols), len(cols) - np.argmax(cols[::-1])
        fraction = float(fg.mean())
        score = float(min(1.0, 0.55 + fraction * 1.5))
        return [((float(x1), float(y1), float(x2), float(y2)), score)]


def load_model(identifier: str, device: str = "cpu"):
    if identifier.startswith("torchvision:"):
        return TorchvisionDetector(identifier.split(":", 1)[1], device=device)
    if identifier == "stub:dark-blob":
        return BlobStub(bright=False)
    if identifier == "stub:bright-blob":
        return BlobStub(bright=True)
    raise BridgeModelError(f"unknown model identifier {identifier!r}")
