"""Deterministic synthetic scene corpus for desk-scale experiments.

Each scene is a small visible/infrared pair with one pedestrian-like target
and per-modality salience maps feeding SyntheticCoverageOracle. The two maps
are built to disagree: the visible salience splits between a far-off primary
spot and a decoy right next to the lower patch slot, while the infrared
salience is one dispersed spot in the opposite corner. Chasing raw visible
progress is therefore cheap, and balancing both modalities requires giving
some of it up; the `conflict` knob scales how strong that pull is (0 places
everything within easy reach of the starting patches).

All randomness comes from the corpus seed; a corpus saved to disk reloads
bit-identically.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .compose import CoverModel, ScenePair, load_corpus, save_corpus
from .oracle import INFRARED, VISIBLE, SyntheticCoverageOracle

DEFAULT_SCENE_HEIGHT = 96
DEFAULT_SCENE_WIDTH = 64


@dataclass
class SceneBundle:
    """A scene plus whatever its oracles need; salience is None for corpora
    scored by external detectors."""

    pair: ScenePair
    salience_vis: np.ndarray | None = None
    salience_inf: np.ndarray | None = None
    base_vis: float | None = None
    base_inf: float | None = None


def _gaussian_blob(height: int, width: int, center, sigma: float) -> np.ndarray:
    yy, xx = np.mgrid[0:height, 0:width]
    cx, cy = center
    return np.exp(-(((xx + 0.5 - cx) ** 2) + ((yy + 0.5 - cy) ** 2)) / (2.0 * sigma**2))


def _normalize_in_box(weights: np.ndarray, box) -> np.ndarray:
    x1, y1, x2, y2 = (int(round(v)) for v in box)
    out = np.zeros_like(weights)
    out[y1:y2, x1:x2] = weights[y1:y2, x1:x2]
    total = out.sum()
    if total <= 0:
        raise ValueError("salience has no mass inside the target box")
    return out / total


def _box_point(box, fx: float, fy: float) -> tuple[float, float]:
    x1, y1, x2, y2 = box
    return (x1 + fx * (x2 - x1), y1 + fy * (y2 - y1))


def generate_scene(
    scene_id: str,
    rng: np.random.Generator,
    height: int = DEFAULT_SCENE_HEIGHT,
    width: int = DEFAULT_SCENE_WIDTH,
    conflict: float = 0.8,
    cover: CoverModel | None = None,
) -> SceneBundle:
    cover = cover or CoverModel()

    # target box with a little per-scene wobble
    bw, bh = 26, 64
    x1 = (width - bw) // 2 + int(rng.integers(-2, 3))
    y1 = (height - bh) // 2 + int(rng.integers(-2, 3))
    box = (float(x1), float(y1), float(x1 + bw), float(y1 + bh))

    # visible: textured background, darker silhouette
    vis = rng.integers(90, 170, size=(height, width, 3)).astype(np.uint8)
    inf = rng.integers(8, 24, size=(height, width)).astype(np.uint8)
    bx1, by1, bx2, by2 = (int(v) for v in box)
    torso = (slice(by1 + 6, by2 - 4), slice(bx1 + 3, bx2 - 3))
    vis[torso] = rng.integers(25, 80, size=(torso[0].stop - torso[0].start, torso[1].stop - torso[1].start, 3))
    inf[torso] = rng.integers(150, 220, size=(torso[0].stop - torso[0].start, torso[1].stop - torso[1].start))

    # keep clean pixels off the cover values so clean scores equal the base
    vis[np.all(vis == np.asarray(cover.visible_value).reshape(1, 1, 3), axis=2)] -= 1
    inf[inf == cover.infrared_value] += 1

    def jitter() -> float:
        return float(rng.uniform(-0.02, 0.02))

    # visible salience: far primary spot + near decoy, weighted by conflict
    decoy_weight = 0.45 * conflict
    primary_c = _box_point(box, 0.28 + jitter(), 0.13 + jitter())
    decoy_c = _box_point(box, 0.62 + jitter(), 0.60 + jitter())
    sal_vis = (1.0 - decoy_weight) * _gaussian_blob(height, width, primary_c, 2.2)
    if decoy_weight > 0:
        sal_vis = sal_vis + decoy_weight * _gaussian_blob(height, width, decoy_c, 1.8)
    sal_vis = _normalize_in_box(sal_vis, box)

    # infrared salience: one dispersed spot pulled away from the lower patch
    near = _box_point(box, 0.5 + jitter(), 0.62 + jitter())
    far = _box_point(box, 0.30 + jitter(), 0.95 + jitter())
    inf_c = (
        near[0] + conflict * (far[0] - near[0]),
        near[1] + conflict * (far[1] - near[1]),
    )
    sal_inf = _normalize_in_box(_gaussian_blob(height, width, inf_c, 5.0), box)

    return SceneBundle(
        pair=ScenePair(id=scene_id, visible=vis, infrared=inf, gt_box=box),
        salience_vis=sal_vis,
        salience_inf=sal_inf,
        base_vis=float(rng.uniform(0.88, 0.96)),
        base_inf=float(rng.uniform(0.88, 0.96)),
    )


def make_corpus(
    n_scenes: int = 20,
    seed: int = 2024,
    conflict: float = 0.8,
    height: int = DEFAULT_SCENE_HEIGHT,
    width: int = DEFAULT_SCENE_WIDTH,
    cover: CoverModel | None = None,
) -> list[SceneBundle]:
    rng = np.random.default_rng([seed, n_scenes])
    return [
        generate_scene(f"scene{i:03d}", rng, height, width, conflict, cover)
        for i in range(n_scenes)
    ]


def wrap_pairs(pairs: list[ScenePair]) -> list[SceneBundle]:
    """Bundles for corpora whose oracles live elsewhere (external detectors)."""
    return [SceneBundle(pair=p) for p in pairs]


def make_scene_oracles(scene: SceneBundle, cover: CoverModel, score_floor: float = 0.0):
    """Per-scene (visible, infrared) oracle pair bound to the scene's salience."""
    if scene.salience_vis is None or scene.salience_inf is None:
        raise ValueError(f"scene {scene.pair.id} carries no salience; use an external oracle")
    vis = SyntheticCoverageOracle(
        scene.salience_vis, scene.base_vis, scene.pair.gt_box, cover.visible_value, VISIBLE, score_floor
    )
    inf = SyntheticCoverageOracle(
        scene.salience_inf, scene.base_inf, scene.pair.gt_box, cover.infrared_value, INFRARED, score_floor
    )
    return vis, inf


def save_synthetic_corpus(directory, scenes: list[SceneBundle]) -> None:
    """Corpus layout plus the oracle sidecar (salience/*.npy and oracle.json)."""
    save_corpus(directory, [s.pair for s in scenes])
    sal_dir = os.path.join(directory, "salience")
    os.makedirs(sal_dir, exist_ok=True)
    meta = {}
    for s in scenes:
        np.save(os.path.join(sal_dir, f"{s.pair.id}_vis.npy"), s.salience_vis)
        np.save(os.path.join(sal_dir, f"{s.pair.id}_inf.npy"), s.salience_inf)
        meta[s.pair.id] = {"base_vis": s.base_vis, "base_inf": s.base_inf}
    with open(os.path.join(directory, "oracle.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_synthetic_corpus(directory) -> list[SceneBundle]:
    pairs = load_corpus(directory)
    meta_path = os.path.join(directory, "oracle.json")
    if not os.path.isfile(meta_path):
        raise FileNotFoundError(f"no oracle.json under {directory}; not a synthetic corpus")
    with open(meta_path) as fh:
        meta = json.load(fh)
    out = []
    for pair in pairs:
        sal_vis = np.load(os.path.join(directory, "salience", f"{pair.id}_vis.npy"))
        sal_inf = np.load(os.path.join(directory, "salience", f"{pair.id}_inf.npy"))
        out.append(
            SceneBundle(
                pair=pair,
                salience_vis=sal_vis,
                salience_inf=sal_inf,
                base_vis=float(meta[pair.id]["base_vis"]),
                base_inf=float(meta[pair.id]["base_inf"]),
            )
        )
    return out
