"""Harness tests: ASR aggregation, AP against a brute-force PR curve,
baselines, ablation plumbing, robustness and defense re-scoring."""

from dataclasses import replace

import numpy as np
import pytest

from crosspatch.config import RunConfig
from crosspatch.harness import (
    baseline_masks,
    defense_eval,
    fitness_ablation,
    fixed_shape_baseline,
    robustness_eval,
    run_suite,
    sweep,
)
from crosspatch.metrics import average_precision
from crosspatch.oracle import Detection
from crosspatch.synthetic import load_synthetic_corpus, make_corpus, save_synthetic_corpus

FAST_CFG = replace(RunConfig(), population_size=10, max_generations=25, samples_per_segment=16)


@pytest.fixture(scope="module")
def corpus():
    return make_corpus(n_scenes=4, seed=2024, conflict=0.8)


@pytest.fixture(scope="module")
def suite(corpus):
    return run_suite(corpus, FAST_CFG, seed=0)


class TestAveragePrecision:
    def brute_force_ap(self, detections, gts):
        # independent PR construction: explicit ranking then 11-point sweep
        ranked = sorted(detections, key=lambda t: (-t[1].score, t[0]))
        matched = set()
        points = []
        tp = fp = 0
        from crosspatch.oracle import iou

        for sid, det in ranked:
            if sid in gts and sid not in matched and iou(det.box, gts[sid]) >= 0.5:
                matched.add(sid)
                tp += 1
            else:
                fp += 1
            points.append((tp / len(gts), tp / (tp + fp)))
        total = 0.0
        for r in [i / 10 for i in range(11)]:
            candidates = [p for rec, p in points if rec >= r]
            total += max(candidates) if candidates else 0.0
        return total / 11.0

    def test_perfect_detections_ap_one(self):
        gts = {f"s{i}": (0.0, 0.0, 10.0, 10.0) for i in range(5)}
        dets = [(sid, Detection((0.0, 0.0, 10.0, 10.0), 0.9)) for sid in gts]
        assert average_precision(dets, gts) == 1.0

    def test_no_detections_ap_zero(self):
        assert average_precision([], {"a": (0, 0, 5, 5)}) == 0.0

    def test_five_detection_fixture_matches_brute_force(self):
        box = (0.0, 0.0, 10.0, 10.0)
        off = (20.0, 20.0, 30.0, 30.0)  # IoU 0 with everything
        gts = {"s1": box, "s2": box, "s3": box}
        dets = [
            ("s1", Detection(box, 0.9)),   # TP
            ("s1", Detection(box, 0.8)),   # duplicate -> FP
            ("s2", Detection(box, 0.7)),   # TP
            ("s3", Detection(off, 0.6)),   # bad overlap -> FP
            ("s3", Detection(box, 0.5)),   # TP
        ]
        got = average_precision(dets, gts)
        assert got == pytest.approx(self.brute_force_ap(dets, gts), abs=1e-12)
        assert got == pytest.approx(8.4 / 11.0, abs=1e-12)

    def test_low_scored_extra_false_positives_only_trim_tail(self):
        gts = {"s1": (0.0, 0.0, 10.0, 10.0)}
        dets = [
            ("s1", Detection((0.0, 0.0, 10.0, 10.0), 0.9)),
            ("s1", Detection((0.0, 0.0, 10.0, 10.0), 0.1)),
        ]
        assert average_precision(dets, gts) == 1.0


class TestRunSuite:
    def test_report_shape_and_ranges(self, suite):
        report, results = suite
        assert len(report.rows) == 4 and not report.excluded
        assert 0.0 <= report.asr <= 1.0
        assert report.asr <= min(report.asr_vis, report.asr_inf) + 1e-12
        assert report.ap_clean_vis == 1.0 and report.ap_clean_inf == 1.0
        assert set(results) == {r["scene_id"] for r in report.rows}

    def test_reports_reproducible(self, corpus):
        cfg = replace(FAST_CFG, max_generations=6)
        r1, _ = run_suite(corpus, cfg, seed=3)
        r2, _ = run_suite(corpus, cfg, seed=3)
        assert r1.to_json() == r2.to_json()

    def test_cross_modal_asr_counts_both(self, suite):
        report, _ = suite
        for row in report.rows:
            assert row["success"] == (row["success_vis"] and row["success_inf"])

    def test_final_contours_are_simple(self, suite):
        # exported cutting templates must not self-intersect
        from crosspatch import geometry

        _, results = suite
        for res in results.values():
            for p in res.best.patches:
                contour = geometry.close_contour(p.anchors, FAST_CFG.samples_per_segment)
                assert geometry.contour_is_simple(contour)


class TestBaselines:
    def test_circle_equals_initial_contour_mask(self, corpus):
        masks_a = baseline_masks(corpus[0], FAST_CFG, "circle")
        masks_b = baseline_masks(corpus[0], FAST_CFG, "initial")
        for a, b in zip(masks_a, masks_b):
            assert a == b

    def test_area_matching_within_five_percent(self, corpus):
        circle = baseline_masks(corpus[0], FAST_CFG, "circle")
        for kind in ("square", "rectangle", "triangle"):
            other = baseline_masks(corpus[0], FAST_CFG, kind)
            for c, o in zip(circle, other):
                assert abs(o.area() - c.area()) / c.area() < 0.05

    def test_baseline_report_runs(self, corpus):
        report = fixed_shape_baseline(corpus, FAST_CFG, "square")
        assert report.extra["shape_kind"] == "square"
        assert len(report.rows) == 4
        assert all(r["stop_generation"] == 0 for r in report.rows)

    def test_unknown_shape_rejected(self, corpus):
        with pytest.raises(ValueError):
            baseline_masks(corpus[0], FAST_CFG, "pentagon")

    def test_one_sided_success_is_not_cross_modal(self, corpus):
        # fixed shapes suppress the visible decoy but never the far infrared
        # spot, so per-modality and cross-modal ASR diverge
        report = fixed_shape_baseline(corpus, FAST_CFG, "circle")
        assert report.asr <= report.asr_vis
        if report.asr_vis > 0:
            assert report.asr < report.asr_vis or report.asr_inf == report.asr_vis


class TestAblationAndSweep:
    def test_fitness_ablation_arms_differ_only_in_mode(self, corpus):
        cfg = replace(FAST_CFG, max_generations=8)
        joint_r, sum_r = fitness_ablation(corpus, cfg, seed=1)
        assert joint_r.config["fitness_mode"] == "joint"
        assert sum_r.config["fitness_mode"] == "sum"
        jc = dict(joint_r.config)
        sc = dict(sum_r.config)
        jc.pop("fitness_mode"), sc.pop("fitness_mode")
        assert jc == sc
        assert "median_dis_gap" in joint_r.extra and "median_dis_gap" in sum_r.extra

    def test_sweep_grid_size_and_provenance(self, corpus):
        cfg = replace(FAST_CFG, max_generations=4)
        grid = sweep(corpus[:2], cfg, lambdas=[1.0, 2.0], patch_counts=[1, 2], seed=0)
        assert len(grid) == 4
        combos = {(r.extra["lambda"], r.extra["patch_count"]) for r in grid}
        assert combos == {(1.0, 1), (1.0, 2), (2.0, 1), (2.0, 2)}
        for r in grid:
            assert r.config["lambda"] == r.extra["lambda"]
            assert r.config["patch_count"] == r.extra["patch_count"]
            r.to_json()

    def test_sweep_asr_non_decreasing_in_patch_count(self, corpus):
        cfg = replace(FAST_CFG, population_size=16, max_generations=40)
        grid = sweep(corpus, cfg, lambdas=[2.0], patch_counts=[1, 2], seed=0)
        by_count = {r.extra["patch_count"]: r.asr for r in grid}
        assert by_count[1] <= by_count[2]


class TestRobustness:
    def test_identity_condition_reproduces_original(self, corpus, suite):
        report, results = suite
        rob = robustness_eval(corpus, results, FAST_CFG, translations=[], fractions=[], seed=0)
        assert set(rob) == {"identity"}
        assert rob["identity"].asr == report.asr
        by_id = {r["scene_id"]: r for r in rob["identity"].rows}
        for row in report.rows:
            assert by_id[row["scene_id"]]["success"] == row["success"]

    def test_conditions_enumerated(self, corpus, suite):
        _, results = suite
        rob = robustness_eval(corpus, results, FAST_CFG, translations=[3, 5], fractions=[0.05, 0.10], seed=0)
        assert set(rob) == {"identity", "translate_3px", "translate_5px", "incomplete_5pct", "incomplete_10pct"}

    def test_incompleteness_removes_exact_count(self, corpus, suite):
        _, results = suite
        rob = robustness_eval(corpus, results, FAST_CFG, translations=[], fractions=[0.10], seed=0)
        assert rob["incomplete_10pct"].asr <= rob["identity"].asr + 1e-12

    def test_per_patch_translation_mode(self, corpus, suite):
        _, results = suite
        rob = robustness_eval(
            corpus, results, FAST_CFG, translations=[3], fractions=[], seed=0, per_patch=True
        )
        assert set(rob) == {"identity", "translate_3px"}
        assert 0.0 <= rob["translate_3px"].asr <= 1.0
        again = robustness_eval(
            corpus, results, FAST_CFG, translations=[3], fractions=[], seed=0, per_patch=True
        )
        assert rob["translate_3px"].to_json() == again["translate_3px"].to_json()


class TestDefense:
    def test_window_one_reproduces_asr(self, corpus, suite):
        report, results = suite
        defended = defense_eval(corpus, results, FAST_CFG, window=1)
        assert defended.asr == report.asr
        assert defended.extra["asr_undefended"] == report.asr
        assert defended.extra["asr_delta"] == pytest.approx(0.0, abs=1e-12)

    def test_window_three_reports_delta(self, corpus, suite):
        _, results = suite
        defended = defense_eval(corpus, results, FAST_CFG, window=3)
        assert "asr_delta" in defended.extra
        assert defended.extra["window"] == 3


class TestSyntheticCorpusIO:
    def test_save_load_round_trip(self, tmp_path, corpus):
        save_synthetic_corpus(tmp_path, corpus)
        back = load_synthetic_corpus(tmp_path)
        assert len(back) == len(corpus)
        for a, b in zip(corpus, back):
            assert a.pair.id == b.pair.id
            assert np.array_equal(a.pair.visible, b.pair.visible)
            assert np.array_equal(a.salience_vis, b.salience_vis)
            assert a.base_inf == b.base_inf

    def test_scenes_have_no_cover_pixels(self, corpus):
        for s in corpus:
            assert not np.all(s.pair.visible == np.array([255, 255, 255]), axis=2).any()
            assert not (s.pair.infrared == 32).any()

    def test_salience_normalized_inside_box(self, corpus):
        for s in corpus:
            x1, y1, x2, y2 = (int(v) for v in s.pair.gt_box)
            assert s.salience_vis.sum() == pytest.approx(1.0, abs=1e-9)
            assert s.salience_vis[y1:y2, x1:x2].sum() == pytest.approx(1.0, abs=1e-9)
