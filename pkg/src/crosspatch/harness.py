"""Batch experiment runner: attack suites, fixed-shape and fitness ablations,
hyperparameter sweeps, implementation-error robustness, and the smoothing
defense, each aggregated into a serializable report.

Cross-modal ASR counts a scene as attacked only when both modalities fall
below the threshold. AP is computed at IoU 0.5 with 11-point interpolation,
before and after the attack, per modality.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from . import optimizer
from .compose import CoverModel, apply_patch, erode_fraction, translate_mask, union_masks
from .config import RunConfig, config_snapshot
from .fitness import attack_success, progress
from .geometry import BinaryMask
from .metrics import average_precision
from .optimizer import AttackResult, SceneNotDetectable, run_attack
from .oracle import smooth, target_score
from .synthetic import SceneBundle, make_scene_oracles

BASELINE_SHAPES = ("circle", "square", "rectangle", "triangle", "initial")


@dataclass
class ExperimentReport:
    rows: list[dict]
    asr: float
    asr_vis: float
    asr_inf: float
    ap_clean_vis: float
    ap_adv_vis: float
    ap_clean_inf: float
    ap_adv_inf: float
    config: dict
    seed: int
    runtime_s: float
    excluded: list[str] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def ap_drop_vis(self) -> float:
        return self.ap_clean_vis - self.ap_adv_vis

    @property
    def ap_drop_inf(self) -> float:
        return self.ap_clean_inf - self.ap_adv_inf

    def to_dict(self) -> dict:
        """Deterministic JSON payload (runtime lives outside the report file)."""
        return {
            "asr": self.asr,
            "asr_vis": self.asr_vis,
            "asr_inf": self.asr_inf,
            "ap_clean_vis": self.ap_clean_vis,
            "ap_adv_vis": self.ap_adv_vis,
            "ap_clean_inf": self.ap_clean_inf,
            "ap_adv_inf": self.ap_adv_inf,
            "ap_drop_vis": self.ap_drop_vis,
            "ap_drop_inf": self.ap_drop_inf,
            "excluded": self.excluded,
            "seed": self.seed,
            "config": self.config,
            "extra": self.extra,
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        if not self.rows:
            return ""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=sorted(self.rows[0].keys()))
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row)
        return buf.getvalue()


def default_oracle_factory(config: RunConfig):
    cover = CoverModel(config.cover_visible, config.cover_infrared)

    def factory(scene: SceneBundle):
        return make_scene_oracles(scene, cover)

    return factory


def _row(scene_id, clean, final, dis_pair, threshold, stop_generation, queries) -> dict:
    f_vis, f_inf = final
    return {
        "scene_id": scene_id,
        "clean_vis": clean[0],
        "clean_inf": clean[1],
        "f_vis_adv": f_vis,
        "f_inf_adv": f_inf,
        "dis_vis": dis_pair[0],
        "dis_inf": dis_pair[1],
        "success": int(attack_success(f_vis, f_inf, threshold)),
        "success_vis": int(f_vis < threshold),
        "success_inf": int(f_inf < threshold),
        "stop_generation": stop_generation,
        "queries": queries,
    }


def _aggregate(rows, ap_args, config, seed, runtime_s, excluded, extra=None) -> ExperimentReport:
    n = max(1, len(rows))
    clean_vis_dets, adv_vis_dets, clean_inf_dets, adv_inf_dets, gt = ap_args
    return ExperimentReport(
        rows=rows,
        asr=sum(r["success"] for r in rows) / n,
        asr_vis=sum(r["success_vis"] for r in rows) / n,
        asr_inf=sum(r["success_inf"] for r in rows) / n,
        ap_clean_vis=average_precision(clean_vis_dets, gt) if gt else 0.0,
        ap_adv_vis=average_precision(adv_vis_dets, gt) if gt else 0.0,
        ap_clean_inf=average_precision(clean_inf_dets, gt) if gt else 0.0,
        ap_adv_inf=average_precision(adv_inf_dets, gt) if gt else 0.0,
        config=config_snapshot(config),
        seed=seed,
        runtime_s=runtime_s,
        excluded=excluded,
        extra=extra or {},
    )


def _score_masked(scene: SceneBundle, mask: BinaryMask, config: RunConfig, oracle_factory):
    """Clean scores, adversarial scores, and detection lists for one fixed mask."""
    vis_o, inf_o = oracle_factory(scene)
    cover = CoverModel(config.cover_visible, config.cover_infrared)
    clean_vis_dets = vis_o.detect(scene.pair.visible)
    clean_inf_dets = inf_o.detect(scene.pair.infrared)
    adv = apply_patch(scene.pair, mask, cover)
    adv_vis_dets = vis_o.detect(adv.visible)
    adv_inf_dets = inf_o.detect(adv.infrared)
    return clean_vis_dets, clean_inf_dets, adv_vis_dets, adv_inf_dets


def run_suite(
    scenes: list[SceneBundle],
    config: RunConfig,
    seed: int | None = None,
    jobs: int = 1,
    oracle_factory=None,
    progress_cb=None,
    generation_cb=None,
) -> tuple[ExperimentReport, dict[str, AttackResult]]:
    """Attack every scene and aggregate ASR and AP before/after.

    progress_cb(scene_id, result) fires after each scene; generation_cb
    (scene_id, record) forwards the optimizer's per-generation records.
    """
    config.validate()
    seed = config.seed if seed is None else seed
    oracle_factory = oracle_factory or default_oracle_factory(config)
    t0 = time.perf_counter()
    rows, excluded, results = [], [], {}
    clean_vis_dets, adv_vis_dets, clean_inf_dets, adv_inf_dets, gt = [], [], [], [], {}
    for index, scene in enumerate(scenes):
        oracles = oracle_factory(scene)
        per_gen = None
        if generation_cb is not None:
            per_gen = lambda record, sid=scene.pair.id: generation_cb(sid, record)
        try:
            result = run_attack(
                scene.pair, oracles, config, seed=seed + index, jobs=jobs, progress_cb=per_gen
            )
        except SceneNotDetectable:
            excluded.append(scene.pair.id)
            continue
        results[scene.pair.id] = result
        fit = result.best_fitness
        rows.append(
            _row(
                scene.pair.id,
                result.clean_scores,
                result.final_scores,
                (fit.dis_vis, fit.dis_inf),
                config.threshold,
                result.stop_generation,
                result.queries_used,
            )
        )
        sid = scene.pair.id
        gt[sid] = scene.pair.gt_box
        vis_o, inf_o = oracle_factory(scene)
        clean_vis_dets += [(sid, d) for d in vis_o.detect(scene.pair.visible)]
        clean_inf_dets += [(sid, d) for d in inf_o.detect(scene.pair.infrared)]
        adv_vis_dets += [(sid, d) for d in vis_o.detect(result.adv_pair.visible)]
        adv_inf_dets += [(sid, d) for d in inf_o.detect(result.adv_pair.infrared)]
        if progress_cb is not None:
            progress_cb(scene.pair.id, result)
    report = _aggregate(
        rows,
        (clean_vis_dets, adv_vis_dets, clean_inf_dets, adv_inf_dets, gt),
        config,
        seed,
        time.perf_counter() - t0,
        excluded,
    )
    return report, results


def _regular_polygon(center, n_vertices: int, circumradius: float, phase: float = 0.0) -> np.ndarray:
    ang = np.pi / 2.0 - 2.0 * np.pi * np.arange(n_vertices) / n_vertices + phase
    return np.stack([center[0] + circumradius * np.cos(ang), center[1] + circumradius * np.sin(ang)], axis=1)


def baseline_masks(scene: SceneBundle, config: RunConfig, shape_kind: str) -> list[BinaryMask]:
    """Non-optimized masks of a given shape, area-matched to the starting patches."""
    from .geometry import close_contour, rasterize, rasterize_polygon

    if shape_kind not in BASELINE_SHAPES:
        raise ValueError(f"unknown baseline shape {shape_kind!r}")
    h, w = scene.pair.height, scene.pair.width
    patches = optimizer.initial_genome(optimizer.build_regions(scene.pair.gt_box, config)).patches
    masks = []
    for p in patches:
        initial_mask = rasterize(close_contour(p.anchors, config.samples_per_segment), h, w)
        if shape_kind in ("circle", "initial"):
            masks.append(initial_mask)
            continue
        area = initial_mask.area()
        c = p.region.center
        if shape_kind == "square":
            side = math.sqrt(area)
            half = side / 2.0
            verts = np.array([[c[0] - half, c[1] - half], [c[0] + half, c[1] - half],
                              [c[0] + half, c[1] + half], [c[0] - half, c[1] + half]])
        elif shape_kind == "rectangle":
            ww, hh = math.sqrt(2.0 * area), math.sqrt(area / 2.0)
            verts = np.array([[c[0] - ww / 2, c[1] - hh / 2], [c[0] + ww / 2, c[1] - hh / 2],
                              [c[0] + ww / 2, c[1] + hh / 2], [c[0] - ww / 2, c[1] + hh / 2]])
        else:  # triangle, equilateral, area-matched
            side = math.sqrt(4.0 * area / math.sqrt(3.0))
            circumradius = side / math.sqrt(3.0)
            verts = _regular_polygon(c, 3, circumradius)
        masks.append(rasterize_polygon(verts, h, w))
    return masks


def fixed_shape_baseline(
    scenes: list[SceneBundle],
    config: RunConfig,
    shape_kind: str,
    seed: int | None = None,
    oracle_factory=None,
) -> ExperimentReport:
    """Score non-optimized shapes at the same locations and sizes; no search."""
    config.validate()
    seed = config.seed if seed is None else seed
    oracle_factory = oracle_factory or default_oracle_factory(config)
    t0 = time.perf_counter()
    rows, excluded = [], []
    clean_vis_dets, adv_vis_dets, clean_inf_dets, adv_inf_dets, gt = [], [], [], [], {}
    for scene in scenes:
        mask = union_masks(baseline_masks(scene, config, shape_kind))
        cv_dets, ci_dets, av_dets, ai_dets = _score_masked(scene, mask, config, oracle_factory)
        sid = scene.pair.id
        clean = (target_score(cv_dets, scene.pair.gt_box), target_score(ci_dets, scene.pair.gt_box))
        if min(clean) <= config.threshold:
            excluded.append(sid)
            continue
        final = (target_score(av_dets, scene.pair.gt_box), target_score(ai_dets, scene.pair.gt_box))
        dis_pair = (
            progress(clean[0], final[0], config.threshold),
            progress(clean[1], final[1], config.threshold),
        )
        rows.append(_row(sid, clean, final, dis_pair, config.threshold, 0, 4))
        gt[sid] = scene.pair.gt_box
        clean_vis_dets += [(sid, d) for d in cv_dets]
        clean_inf_dets += [(sid, d) for d in ci_dets]
        adv_vis_dets += [(sid, d) for d in av_dets]
        adv_inf_dets += [(sid, d) for d in ai_dets]
    return _aggregate(
        rows,
        (clean_vis_dets, adv_vis_dets, clean_inf_dets, adv_inf_dets, gt),
        config,
        seed,
        time.perf_counter() - t0,
        excluded,
        extra={"shape_kind": shape_kind},
    )


def fitness_ablation(
    scenes: list[SceneBundle],
    config: RunConfig,
    seed: int | None = None,
    jobs: int = 1,
    oracle_factory=None,
) -> tuple[ExperimentReport, ExperimentReport]:
    """The joint-fitness arm versus the plain-sum arm, same seeds and budget."""
    joint_cfg = dc_replace(config, fitness_mode="joint")
    sum_cfg = dc_replace(config, fitness_mode="sum")
    joint_report, _ = run_suite(scenes, joint_cfg, seed=seed, jobs=jobs, oracle_factory=oracle_factory)
    sum_report, _ = run_suite(scenes, sum_cfg, seed=seed, jobs=jobs, oracle_factory=oracle_factory)
    for report in (joint_report, sum_report):
        gaps = [abs(r["dis_vis"] - r["dis_inf"]) for r in report.rows]
        report.extra["median_dis_gap"] = float(np.median(gaps)) if gaps else float("nan")
    return joint_report, sum_report


def sweep(
    scenes: list[SceneBundle],
    config: RunConfig,
    lambdas: list[float],
    patch_counts: list[int],
    seed: int | None = None,
    jobs: int = 1,
    oracle_factory=None,
) -> list[ExperimentReport]:
    """Full lambda x patch-count grid with shared seeds."""
    grid = []
    for lam in lambdas:
        for p in patch_counts:
            cell_cfg = dc_replace(config.with_patch_count(p), lambda_=lam)
            report, _ = run_suite(scenes, cell_cfg, seed=seed, jobs=jobs, oracle_factory=oracle_factory)
            report.extra["lambda"] = lam
            report.extra["patch_count"] = p
            grid.append(report)
    return grid


def _rescore_masks(
    scenes_by_id: dict[str, SceneBundle],
    masks_by_id: dict[str, BinaryMask],
    config: RunConfig,
    oracle_factory,
) -> tuple[list[dict], list[tuple]]:
    rows = []
    dets = ([], [], [], [], {})
    for sid in sorted(masks_by_id):
        scene = scenes_by_id[sid]
        cv, ci, av, ai = _score_masked(scene, masks_by_id[sid], config, oracle_factory)
        clean = (target_score(cv, scene.pair.gt_box), target_score(ci, scene.pair.gt_box))
        final = (target_score(av, scene.pair.gt_box), target_score(ai, scene.pair.gt_box))
        dis_pair = (
            progress(clean[0], final[0], config.threshold),
            progress(clean[1], final[1], config.threshold),
        )
        rows.append(_row(sid, clean, final, dis_pair, config.threshold, 0, 4))
        dets[4][sid] = scene.pair.gt_box
        dets[0].extend((sid, d) for d in cv)
        dets[2].extend((sid, d) for d in ci)
        dets[1].extend((sid, d) for d in av)
        dets[3].extend((sid, d) for d in ai)
    return rows, dets


def _translated_per_patch(masks: list[BinaryMask], magnitude: int, rng: np.random.Generator) -> BinaryMask:
    """Each patch shifted by its own cardinal offset of the given magnitude."""
    shifted = []
    for m in masks:
        dx, dy = rng.choice([(1, 0), (-1, 0), (0, 1), (0, -1)])
        shifted.append(translate_mask(m, int(dx) * magnitude, int(dy) * magnitude))
    return union_masks(shifted)


def robustness_eval(
    scenes: list[SceneBundle],
    results: dict[str, AttackResult],
    config: RunConfig,
    translations: list[int],
    fractions: list[float],
    seed: int | None = None,
    oracle_factory=None,
    per_patch: bool = False,
) -> dict[str, ExperimentReport]:
    """Re-score saved masks under placement errors; no re-optimization.

    Conditions: 'identity', 'translate_<px>' for each offset, and
    'incomplete_<pct>' for each fraction. Translation moves all patches by
    the same offset by default; with per_patch each patch draws its own
    cardinal direction of the same magnitude (independent placement errors).
    """
    config.validate()
    seed = config.seed if seed is None else seed
    oracle_factory = oracle_factory or default_oracle_factory(config)
    scenes_by_id = {s.pair.id: s for s in scenes}
    base_masks = {sid: union_masks(res.masks) for sid, res in results.items()}

    conditions: dict[str, dict[str, BinaryMask]] = {"identity": dict(base_masks)}
    for t in translations:
        if per_patch:
            cond = {}
            for k, sid in enumerate(sorted(base_masks)):
                rng = np.random.default_rng([seed, 7702, k, int(t)])
                cond[sid] = _translated_per_patch(results[sid].masks, int(t), rng)
            conditions[f"translate_{t}px"] = cond
        else:
            conditions[f"translate_{t}px"] = {
                sid: translate_mask(m, int(t), 0) for sid, m in base_masks.items()
            }
    for frac in fractions:
        cond = {}
        for k, (sid, m) in enumerate(sorted(base_masks.items())):
            rng = np.random.default_rng([seed, 7701, k, int(round(frac * 1000))])
            cond[sid] = erode_fraction(m, frac, rng)
        conditions[f"incomplete_{int(round(frac * 100))}pct"] = cond

    out = {}
    for name, masks_by_id in conditions.items():
        t0 = time.perf_counter()
        rows, dets = _rescore_masks(scenes_by_id, masks_by_id, config, oracle_factory)
        out[name] = _aggregate(
            rows, dets, config, seed, time.perf_counter() - t0, [], extra={"condition": name}
        )
    return out


def defense_eval(
    scenes: list[SceneBundle],
    results: dict[str, AttackResult],
    config: RunConfig,
    window: int,
    seed: int | None = None,
    oracle_factory=None,
) -> ExperimentReport:
    """Re-score saved adversarial images after median smoothing."""
    config.validate()
    seed = config.seed if seed is None else seed
    oracle_factory = oracle_factory or default_oracle_factory(config)
    scenes_by_id = {s.pair.id: s for s in scenes}
    t0 = time.perf_counter()
    rows = []
    dets = ([], [], [], [], {})
    undefended = []
    for sid in sorted(results):
        scene = scenes_by_id[sid]
        res = results[sid]
        vis_o, inf_o = oracle_factory(scene)
        cv = vis_o.detect(scene.pair.visible)
        ci = inf_o.detect(scene.pair.infrared)
        av = vis_o.detect(smooth(res.adv_pair.visible, window))
        ai = inf_o.detect(smooth(res.adv_pair.infrared, window))
        clean = (target_score(cv, scene.pair.gt_box), target_score(ci, scene.pair.gt_box))
        final = (target_score(av, scene.pair.gt_box), target_score(ai, scene.pair.gt_box))
        dis_pair = (
            progress(clean[0], final[0], config.threshold),
            progress(clean[1], final[1], config.threshold),
        )
        rows.append(_row(sid, clean, final, dis_pair, config.threshold, 0, 4))
        undefended.append(int(res.success))
        dets[4][sid] = scene.pair.gt_box
        dets[0].extend((sid, d) for d in cv)
        dets[2].extend((sid, d) for d in ci)
        dets[1].extend((sid, d) for d in av)
        dets[3].extend((sid, d) for d in ai)
    report = _aggregate(rows, dets, config, seed, time.perf_counter() - t0, [])
    asr_before = sum(undefended) / max(1, len(undefended))
    report.extra.update({"window": window, "asr_undefended": asr_before, "asr_delta": asr_before - report.asr})
    return report
