"""Command-line surface.

Commands: attack, eval, baseline, ablate-fitness, sweep, simulate-errors,
defend, render, print-config. Exit codes: 0 ok, 2 config error, 3 corpus
error, 4 oracle error, 5 internal error.

Oracle endpoints are "stdio:<command>" or "http://host:port"; defaults come
from CROSSPATCH_ORACLE_VIS / CROSSPATCH_ORACLE_INF. With --synthetic the
corpus' own salience sidecar drives the built-in coverage oracles, and a
missing corpus directory is filled with the generated demo suite.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
from PIL import Image

from . import harness, synthetic
from .compose import CoverModel, ScenePair
from .config import ConfigError, RunConfig, format_config, load_config, parse_config_text
from .geometry import load_mask_png, save_contour_txt, save_mask_png
from .optimizer import AttackResult, SceneNotDetectable
from .oracle import ExternalOracle, OracleError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CORPUS = 3
EXIT_ORACLE = 4
EXIT_INTERNAL = 5

ENV_ORACLE_VIS = "CROSSPATCH_ORACLE_VIS"
ENV_ORACLE_INF = "CROSSPATCH_ORACLE_INF"


class CorpusError(Exception):
    pass


def _load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        if not os.path.isfile(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    overrides = "\n".join(getattr(args, "set", []) or [])
    if overrides:
        cfg = parse_config_text(overrides, base=cfg)
    if getattr(args, "seed", None) is not None:
        cfg = parse_config_text(f"seed = {args.seed}", base=cfg)
    return cfg.validate()


def _load_scenes(args, config: RunConfig, allow_generate: bool):
    corpus = args.corpus
    synthetic_mode = getattr(args, "synthetic", False)
    if not os.path.isdir(corpus) or not os.path.isfile(os.path.join(corpus, "annotations.json")):
        if synthetic_mode and allow_generate:
            scenes = synthetic.make_corpus(
                n_scenes=args.scenes,
                seed=args.corpus_seed,
                conflict=args.conflict,
                cover=CoverModel(config.cover_visible, config.cover_infrared),
            )
            synthetic.save_synthetic_corpus(corpus, scenes)
            return scenes
        raise CorpusError(f"corpus not found at {corpus}")
    if synthetic_mode:
        try:
            return synthetic.load_synthetic_corpus(corpus)
        except FileNotFoundError as exc:
            raise CorpusError(str(exc)) from exc
    from .compose import load_corpus

    return synthetic.wrap_pairs(load_corpus(corpus))


def _oracle_factory(args, config: RunConfig):
    if getattr(args, "synthetic", False):
        return harness.default_oracle_factory(config)
    vis_ep = getattr(args, "oracle_vis", None) or os.environ.get(ENV_ORACLE_VIS)
    inf_ep = getattr(args, "oracle_inf", None) or os.environ.get(ENV_ORACLE_INF)
    if not vis_ep or not inf_ep:
        raise OracleError(
            "external mode needs --oracle-vis/--oracle-inf or "
            f"{ENV_ORACLE_VIS}/{ENV_ORACLE_INF}"
        )
    vis_o = ExternalOracle(vis_ep)
    inf_o = ExternalOracle(inf_ep)
    if vis_o.modality != "visible" or inf_o.modality != "infrared":
        raise OracleError("oracle modalities do not match their roles")
    return lambda scene: (vis_o, inf_o)


def _write_report(out_dir: str, name: str, report: harness.ExperimentReport) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, f"{name}.json"), "w") as fh:
        fh.write(report.to_json())
    csv_text = report.to_csv()
    if csv_text:
        with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
            fh.write(csv_text)


def _save_scene_artifacts(out_dir: str, scene_id: str, result: AttackResult, config: RunConfig) -> None:
    from .compose import union_masks
    from .geometry import close_contour

    scene_dir = os.path.join(out_dir, "scenes", scene_id)
    os.makedirs(scene_dir, exist_ok=True)
    for k, mask in enumerate(result.masks):
        save_mask_png(mask, os.path.join(scene_dir, f"mask_p{k}.png"))
        contour = close_contour(result.best.patches[k].anchors, config.samples_per_segment)
        save_contour_txt(contour, os.path.join(scene_dir, f"contour_p{k}.txt"))
    save_mask_png(union_masks(result.masks), os.path.join(scene_dir, "mask_union.png"))
    Image.fromarray(result.adv_pair.visible, mode="RGB").save(os.path.join(scene_dir, "adv_vis.png"))
    Image.fromarray(result.adv_pair.infrared, mode="L").save(os.path.join(scene_dir, "adv_inf.png"))
    with open(os.path.join(scene_dir, "result.json"), "w") as fh:
        json.dump(
            {
                "success": result.success,
                "stop_generation": result.stop_generation,
                "final_scores": list(result.final_scores),
                "clean_scores": list(result.clean_scores),
                "queries_used": result.queries_used,
                "anchors": [p.anchors.tolist() for p in result.best.patches],
            },
            fh,
            indent=2,
            sort_keys=True,
        )


def _load_run_results(run_dir: str, scenes) -> dict[str, AttackResult]:
    """Rebuild just enough of each AttackResult from a run directory."""
    by_id = {}
    scenes_by_id = {s.pair.id: s for s in scenes}
    scenes_root = os.path.join(run_dir, "scenes")
    if not os.path.isdir(scenes_root):
        raise CorpusError(f"no scene artifacts under {run_dir}")
    for sid in sorted(os.listdir(scenes_root)):
        scene_dir = os.path.join(scenes_root, sid)
        result_path = os.path.join(scene_dir, "result.json")
        if sid not in scenes_by_id or not os.path.isfile(result_path):
            continue
        with open(result_path) as fh:
            meta = json.load(fh)
        patch_masks = []
        k = 0
        while os.path.isfile(os.path.join(scene_dir, f"mask_p{k}.png")):
            patch_masks.append(load_mask_png(os.path.join(scene_dir, f"mask_p{k}.png")))
            k += 1
        if not patch_masks:
            patch_masks = [load_mask_png(os.path.join(scene_dir, "mask_union.png"))]
        adv_vis = np.asarray(Image.open(os.path.join(scene_dir, "adv_vis.png")).convert("RGB"))
        adv_inf = np.asarray(Image.open(os.path.join(scene_dir, "adv_inf.png")).convert("L"))
        pair = scenes_by_id[sid].pair
        by_id[sid] = AttackResult(
            success=bool(meta["success"]),
            stop_generation=int(meta["stop_generation"]),
            best=None,  # anchors are in result.json if needed
            masks=patch_masks,
            adv_pair=ScenePair(id=sid, visible=adv_vis, infrared=adv_inf, gt_box=pair.gt_box),
            final_scores=tuple(meta["final_scores"]),
            queries_used=int(meta["queries_used"]),
            best_fitness=None,
            clean_scores=tuple(meta["clean_scores"]),
        )
    if not by_id:
        raise CorpusError(f"no usable scene results under {run_dir}")
    return by_id


def cmd_attack(args) -> int:
    config = _load_run_config(args)
    scenes = _load_scenes(args, config, allow_generate=True)
    factory = _oracle_factory(args, config)
    os.makedirs(args.out, exist_ok=True)

    def on_scene(scene_id, result):
        _save_scene_artifacts(args.out, scene_id, result, config)
        progress_path = os.path.join(args.out, "scenes", scene_id, "progress.ndjson")
        if scene_id not in seen_scenes:  # stopped before any child generation
            open(progress_path, "w").close()

    seen_scenes = set()

    def on_generation(scene_id, record):
        scene_dir = os.path.join(args.out, "scenes", scene_id)
        os.makedirs(scene_dir, exist_ok=True)
        mode = "a" if scene_id in seen_scenes else "w"
        seen_scenes.add(scene_id)
        with open(os.path.join(scene_dir, "progress.ndjson"), mode) as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")

    report, results = harness.run_suite(
        scenes,
        config,
        seed=config.seed,
        jobs=args.jobs,
        oracle_factory=factory,
        progress_cb=on_scene,
        generation_cb=on_generation,
    )
    report.extra["corpus"] = os.path.abspath(args.corpus)
    _write_report(args.out, "report", report)
    with open(os.path.join(args.out, "config.txt"), "w") as fh:
        fh.write(format_config(config))
    with open(os.path.join(args.out, "meta.json"), "w") as fh:
        json.dump({"runtime_s": report.runtime_s, "jobs": args.jobs}, fh, indent=2)
    print(f"attacked {len(report.rows)} scenes: ASR={report.asr:.4f} "
          f"(vis {report.asr_vis:.4f}, inf {report.asr_inf:.4f}); excluded {len(report.excluded)}")
    return EXIT_OK


def _scenes_for_run(args, config):
    return _load_scenes(args, config, allow_generate=False)


def cmd_eval(args) -> int:
    config = _load_run_config(args)
    scenes = _scenes_for_run(args, config)
    factory = _oracle_factory(args, config)
    results = _load_run_results(args.run, scenes)
    reports = harness.robustness_eval(scenes, results, config, [], [], oracle_factory=factory)
    report = reports["identity"]
    report.extra["run"] = os.path.abspath(args.run)
    _write_report(args.out or args.run, "eval_report", report)
    print(f"re-scored {len(report.rows)} scenes: ASR={report.asr:.4f}")
    return EXIT_OK


def cmd_baseline(args) -> int:
    config = _load_run_config(args)
    scenes = _load_scenes(args, config, allow_generate=True)
    factory = _oracle_factory(args, config)
    shapes = list(harness.BASELINE_SHAPES) if args.shape == "all" else [args.shape]
    os.makedirs(args.out, exist_ok=True)
    for shape in shapes:
        report = harness.fixed_shape_baseline(scenes, config, shape, oracle_factory=factory)
        _write_report(args.out, f"baseline_{shape}", report)
        print(f"baseline {shape}: ASR={report.asr:.4f}")
    return EXIT_OK


def cmd_ablate_fitness(args) -> int:
    config = _load_run_config(args)
    scenes = _load_scenes(args, config, allow_generate=True)
    factory = _oracle_factory(args, config)
    joint_report, sum_report = harness.fitness_ablation(
        scenes, config, jobs=args.jobs, oracle_factory=factory
    )
    _write_report(args.out, "ablation_joint", joint_report)
    _write_report(args.out, "ablation_sum", sum_report)
    print(
        f"joint: ASR={joint_report.asr:.4f} gap={joint_report.extra['median_dis_gap']:.4f} | "
        f"sum: ASR={sum_report.asr:.4f} gap={sum_report.extra['median_dis_gap']:.4f}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _load_run_config(args)
    scenes = _load_scenes(args, config, allow_generate=True)
    factory = _oracle_factory(args, config)
    lambdas = [float(v) for v in args.lambdas.split(",")]
    patch_counts = [int(v) for v in args.patch_counts.split(",")]
    grid = harness.sweep(scenes, config, lambdas, patch_counts, jobs=args.jobs, oracle_factory=factory)
    os.makedirs(args.out, exist_ok=True)
    payload = [r.to_dict() for r in grid]
    with open(os.path.join(args.out, "sweep.json"), "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
    for r in grid:
        print(f"lambda={r.extra['lambda']} patches={r.extra['patch_count']}: ASR={r.asr:.4f}")
    return EXIT_OK


def cmd_simulate_errors(args) -> int:
    config = _load_run_config(args)
    scenes = _scenes_for_run(args, config)
    factory = _oracle_factory(args, config)
    results = _load_run_results(args.run, scenes)
    reports = harness.robustness_eval(
        scenes,
        results,
        config,
        translations=[int(v) for v in args.translate],
        fractions=[float(v) for v in args.incomplete],
        oracle_factory=factory,
        per_patch=args.per_patch,
    )
    out_dir = args.out or args.run
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "robustness.json"), "w") as fh:
        json.dump({name: r.to_dict() for name, r in reports.items()}, fh, indent=2, sort_keys=True)
    for name in reports:
        print(f"{name}: ASR={reports[name].asr:.4f}")
    return EXIT_OK


def cmd_defend(args) -> int:
    config = _load_run_config(args)
    scenes = _scenes_for_run(args, config)
    factory = _oracle_factory(args, config)
    results = _load_run_results(args.run, scenes)
    report = harness.defense_eval(scenes, results, config, window=args.window, oracle_factory=factory)
    out_dir = args.out or args.run
    _write_report(out_dir, "defense", report)
    print(
        f"defense window={args.window}: ASR={report.asr:.4f} "
        f"(was {report.extra['asr_undefended']:.4f}, delta {report.extra['asr_delta']:.4f})"
    )
    return EXIT_OK


def _overlay(image_rgb: np.ndarray, mask_bits: np.ndarray, color) -> np.ndarray:
    from scipy import ndimage

    outline = mask_bits.astype(bool) & ~ndimage.binary_erosion(
        mask_bits.astype(bool), structure=np.ones((3, 3), dtype=bool), border_value=0
    )
    out = image_rgb.copy()
    out[outline] = color
    return out


def cmd_render(args) -> int:
    run_dir = args.run
    out_dir = args.out or run_dir
    scenes_root = os.path.join(run_dir, "scenes")
    sweep_path = os.path.join(run_dir, "sweep.json")
    if not os.path.isdir(scenes_root) and not os.path.isfile(sweep_path):
        raise CorpusError(f"nothing to render under {run_dir}")
    os.makedirs(out_dir, exist_ok=True)
    made = 0
    for sid in sorted(os.listdir(scenes_root)) if os.path.isdir(scenes_root) else []:
        scene_dir = os.path.join(scenes_root, sid)
        mask_path = os.path.join(scene_dir, "mask_union.png")
        if not os.path.isfile(mask_path):
            continue
        mask = load_mask_png(mask_path)
        vis = np.asarray(Image.open(os.path.join(scene_dir, "adv_vis.png")).convert("RGB"))
        inf = np.asarray(Image.open(os.path.join(scene_dir, "adv_inf.png")).convert("L"))
        inf_rgb = np.stack([inf] * 3, axis=2)
        render_dir = os.path.join(out_dir, "render", sid)
        os.makedirs(render_dir, exist_ok=True)
        Image.fromarray(_overlay(vis, mask.bits, (255, 40, 40))).save(os.path.join(render_dir, "overlay_vis.png"))
        Image.fromarray(_overlay(inf_rgb, mask.bits, (255, 255, 0))).save(os.path.join(render_dir, "overlay_inf.png"))
        made += 1
    if os.path.isfile(sweep_path):
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        with open(sweep_path) as fh:
            cells = json.load(fh)
        lambdas = sorted({c["extra"]["lambda"] for c in cells})
        fig, ax = plt.subplots(figsize=(5, 3.5))
        for lam in lambdas:
            pts = sorted(
                (c["extra"]["patch_count"], c["asr"]) for c in cells if c["extra"]["lambda"] == lam
            )
            ax.plot([p for p, _ in pts], [a for _, a in pts], marker="o", label=f"lambda={lam:g}")
        ax.set_xlabel("patch count")
        ax.set_ylabel("ASR")
        ax.set_ylim(-0.05, 1.05)
        ax.legend()
        fig.tight_layout()
        fig.savefig(os.path.join(out_dir, "sweep.png"), dpi=150)
        plt.close(fig)
    print(f"rendered {made} scene overlays")
    return EXIT_OK


def cmd_print_config(args) -> int:
    config = _load_run_config(args)
    sys.stdout.write(format_config(config))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crosspatch", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, corpus=True, out_required=True):
        if corpus:
            p.add_argument("--corpus", required=True, help="corpus directory")
            p.add_argument("--synthetic", action="store_true", help="use the built-in coverage oracles")
            p.add_argument("--oracle-vis", help="visible oracle endpoint (stdio:/http://)")
            p.add_argument("--oracle-inf", help="infrared oracle endpoint")
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override (repeatable)")
        p.add_argument("--seed", type=int, help="run seed override")
        p.add_argument("--jobs", type=int, default=1, help="parallel evaluation workers")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("attack", help="run the shape search over a corpus")
    add_common(p)
    p.add_argument("--scenes", type=int, default=20, help="scenes when generating a demo corpus")
    p.add_argument("--corpus-seed", type=int, default=2024)
    p.add_argument("--conflict", type=float, default=0.8)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("eval", help="re-score a finished run without optimizing")
    add_common(p, out_required=False)
    p.add_argument("--run", required=True, help="attack output directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("baseline", help="score fixed, non-optimized shapes")
    add_common(p)
    p.add_argument("--shape", default="all", choices=list(harness.BASELINE_SHAPES) + ["all"])
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--corpus-seed", type=int, default=2024)
    p.add_argument("--conflict", type=float, default=0.8)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("ablate-fitness", help="joint versus plain-sum fitness arms")
    add_common(p)
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--corpus-seed", type=int, default=2024)
    p.add_argument("--conflict", type=float, default=0.8)
    p.set_defaults(func=cmd_ablate_fitness)

    p = sub.add_parser("sweep", help="lambda x patch-count grid")
    add_common(p)
    p.add_argument("--lambdas", default="1,2,3")
    p.add_argument("--patch-counts", default="1,2,3")
    p.add_argument("--scenes", type=int, default=20)
    p.add_argument("--corpus-seed", type=int, default=2024)
    p.add_argument("--conflict", type=float, default=0.8)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate-errors", help="re-score saved masks under placement errors")
    add_common(p, out_required=False)
    p.add_argument("--run", required=True)
    p.add_argument("--translate", nargs="*", default=[], metavar="PX")
    p.add_argument("--incomplete", nargs="*", default=[], metavar="FRACTION")
    p.add_argument("--per-patch", action="store_true",
                   help="independent per-patch shift directions instead of one joint offset")
    p.set_defaults(func=cmd_simulate_errors)

    p = sub.add_parser("defend", help="re-score saved adversarial images after smoothing")
    add_common(p, out_required=False)
    p.add_argument("--run", required=True)
    p.add_argument("--window", type=int, default=3)
    p.set_defaults(func=cmd_defend)

    p = sub.add_parser("render", help="mask overlays and sweep plots")
    p.add_argument("--run", required=True)
    p.add_argument("--out", help="defaults to the run directory")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("print-config", help="print the effective configuration")
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_print_config)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CorpusError, FileNotFoundError, SceneNotDetectable) as exc:
        print(f"corpus error: {exc}", file=sys.stderr)
        return EXIT_CORPUS
    except OracleError as exc:
        print(f"oracle error: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except Exception as exc:  # pragma: no cover - safety net
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
