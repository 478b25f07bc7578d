"""Patch application on visible/infrared scene pairs, plus mask edits that
simulate imperfect physical placement (shifts, incomplete cutting).

A scene pair is a synchronized RGB + grayscale image couple with one target
box. Applying a patch replaces masked pixels with the per-modality cover
value and leaves everything else bit-identical.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np
from PIL import Image
from scipy import ndimage

from .geometry import BinaryMask

CROSS_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class ScenePair:
    """Synchronized visible (h, w, 3) and infrared (h, w) uint8 images."""

    id: str
    visible: np.ndarray
    infrared: np.ndarray
    gt_box: tuple[float, float, float, float]
    clean_scores: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.visible.shape[:2] != self.infrared.shape[:2]:
            raise ValueError("visible and infrared dimensions differ")
        h, w = self.infrared.shape
        x1, y1, x2, y2 = self.gt_box
        if not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
            raise ValueError(f"gt_box {self.gt_box} not inside {w}x{h} frame")

    @property
    def height(self) -> int:
        return self.infrared.shape[0]

    @property
    def width(self) -> int:
        return self.infrared.shape[1]


@dataclass(frozen=True)
class CoverModel:
    """Pixel values the patch material presents to each sensor."""

    visible_value: tuple[int, int, int] = (255, 255, 255)
    infrared_value: int = 32

    def __post_init__(self) -> None:
        if not all(0 <= v <= 255 for v in self.visible_value) or len(self.visible_value) != 3:
            raise ValueError(f"visible cover {self.visible_value} outside the 8-bit range")
        if not 0 <= self.infrared_value <= 255:
            raise ValueError(f"infrared cover {self.infrared_value} outside the 8-bit range")


def apply_patch(pair: ScenePair, mask: BinaryMask, cover: CoverModel) -> ScenePair:
    """Replace masked pixels with the cover values; others stay bit-identical."""
    if (mask.height, mask.width) != (pair.height, pair.width):
        raise ValueError("mask dimensions do not match the scene")
    m = mask.bits.astype(bool)
    vis = pair.visible.copy()
    vis[m] = np.asarray(cover.visible_value, dtype=pair.visible.dtype)
    inf = pair.infrared.copy()
    inf[m] = cover.infrared_value
    return replace(pair, visible=vis, infrared=inf, clean_scores=None)


def union_masks(masks: list[BinaryMask]) -> BinaryMask:
    if not masks:
        raise ValueError("need at least one mask")
    shape = masks[0].bits.shape
    acc = np.zeros(shape, dtype=np.uint8)
    for m in masks:
        if m.bits.shape != shape:
            raise ValueError("mask dimensions differ")
        acc |= m.bits
    return BinaryMask(acc)


def translate_mask(mask: BinaryMask, dx: int, dy: int) -> BinaryMask:
    """Shift by whole cells; content leaving the frame is dropped."""
    if dx != int(dx) or dy != int(dy):
        raise ValueError("offsets must be integers")
    dx, dy = int(dx), int(dy)
    h, w = mask.bits.shape
    out = np.zeros_like(mask.bits)
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    if src_r.start < src_r.stop and src_c.start < src_c.stop:
        out[dst_r, dst_c] = mask.bits[src_r, src_c]
    return BinaryMask(out)


def erode_fraction(mask: BinaryMask, fraction: float, rng: np.random.Generator) -> BinaryMask:
    """Remove ceil(fraction * area) cells by peeling boundary cells.

    Cells are peeled round by round: within a round only current boundary
    cells (those with a 4-neighbor outside the mask, the frame border
    counting as outside) are eligible, chosen uniformly via rng.
    """
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must be in [0, 1), got {fraction}")
    bits = mask.bits.copy()
    to_remove = math.ceil(fraction * int(bits.sum()))
    while to_remove > 0:
        interior = ndimage.binary_erosion(bits.astype(bool), structure=CROSS_4, border_value=0)
        boundary = np.argwhere(bits.astype(bool) & ~interior)
        if boundary.shape[0] == 0:
            break
        take = min(to_remove, boundary.shape[0])
        picked = boundary[rng.choice(boundary.shape[0], size=take, replace=False)]
        bits[picked[:, 0], picked[:, 1]] = 0
        to_remove -= take
    return BinaryMask(bits)


def save_corpus(directory, scenes: list[ScenePair]) -> None:
    """Write scenes in the on-disk corpus layout: vis/, inf/, annotations.json."""
    os.makedirs(os.path.join(directory, "vis"), exist_ok=True)
    os.makedirs(os.path.join(directory, "inf"), exist_ok=True)
    annotations = {}
    for s in scenes:
        Image.fromarray(s.visible, mode="RGB").save(os.path.join(directory, "vis", f"{s.id}.png"))
        Image.fromarray(s.infrared, mode="L").save(os.path.join(directory, "inf", f"{s.id}.png"))
        annotations[s.id] = [float(v) for v in s.gt_box]
    with open(os.path.join(directory, "annotations.json"), "w") as fh:
        json.dump(annotations, fh, indent=2, sort_keys=True)


def load_corpus(directory) -> list[ScenePair]:
    ann_path = os.path.join(directory, "annotations.json")
    if not os.path.isfile(ann_path):
        raise FileNotFoundError(f"no annotations.json under {directory}")
    with open(ann_path) as fh:
        annotations = json.load(fh)
    scenes = []
    for sid in sorted(annotations):
        vis = np.asarray(Image.open(os.path.join(directory, "vis", f"{sid}.png")).convert("RGB"))
        inf = np.asarray(Image.open(os.path.join(directory, "inf", f"{sid}.png")).convert("L"))
        scenes.append(ScenePair(id=sid, visible=vis, infrared=inf, gt_box=tuple(annotations[sid])))
    return scenes
