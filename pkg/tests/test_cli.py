"""CLI surface: exit codes, artifacts, determinism, config printing."""

import json
import os

import numpy as np
from PIL import Image

from crosspatch.cli import EXIT_CONFIG, EXIT_CORPUS, EXIT_OK, EXIT_ORACLE, main

FAST = [
    "--set", "population_size = 8",
    "--set", "max_generations = 15",
    "--set", "samples_per_segment = 16",
]


def run_attack_cli(tmp_path, name="r1", seed="7", scenes="2"):
    corpus = str(tmp_path / "demo")
    out = str(tmp_path / name)
    code = main(
        ["attack", "--synthetic", "--corpus", corpus, "--out", out,
         "--scenes", scenes, "--seed", seed, *FAST]
    )
    return code, corpus, out


class TestAttack:
    def test_writes_report_and_artifacts(self, tmp_path):
        code, corpus, out = run_attack_cli(tmp_path)
        assert code == EXIT_OK
        report = json.loads((tmp_path / "r1" / "report.json").read_text())
        assert 0.0 <= report["asr"] <= 1.0
        assert os.path.isfile(os.path.join(out, "report.csv"))
        assert os.path.isfile(os.path.join(out, "config.txt"))
        scene_dir = os.path.join(out, "scenes", "scene000")
        for name in ("mask_union.png", "mask_p0.png", "mask_p1.png", "contour_p0.txt",
                     "adv_vis.png", "adv_inf.png", "result.json", "progress.ndjson"):
            assert os.path.isfile(os.path.join(scene_dir, name)), name
        progress_lines = (tmp_path / "r1" / "scenes" / "scene000" / "progress.ndjson").read_text().splitlines()
        for line in progress_lines:
            record = json.loads(line)
            assert {"generation", "best_joint", "best_dis_vis", "best_dis_inf", "queries"} <= set(record)
        # corpus generated on demand in the documented layout
        assert os.path.isfile(os.path.join(corpus, "annotations.json"))
        assert os.path.isfile(os.path.join(corpus, "vis", "scene000.png"))

    def test_missing_corpus_exit_code(self, tmp_path):
        code = main(
            ["attack", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "o"),
             "--oracle-vis", "http://127.0.0.1:1/", "--oracle-inf", "http://127.0.0.1:1/"]
        )
        assert code == EXIT_CORPUS

    def test_missing_oracle_exit_code(self, tmp_path):
        corpus = tmp_path / "c"
        (corpus / "vis").mkdir(parents=True)
        (corpus / "inf").mkdir()
        Image.fromarray(np.zeros((16, 16, 3), np.uint8), "RGB").save(corpus / "vis" / "a.png")
        Image.fromarray(np.zeros((16, 16), np.uint8), "L").save(corpus / "inf" / "a.png")
        (corpus / "annotations.json").write_text(json.dumps({"a": [2, 2, 12, 12]}))
        env_backup = {k: os.environ.pop(k, None) for k in ("CROSSPATCH_ORACLE_VIS", "CROSSPATCH_ORACLE_INF")}
        try:
            code = main(["attack", "--corpus", str(corpus), "--out", str(tmp_path / "o")])
        finally:
            for k, v in env_backup.items():
                if v is not None:
                    os.environ[k] = v
        assert code == EXIT_ORACLE

    def test_bad_config_exit_code(self, tmp_path):
        code = main(
            ["attack", "--synthetic", "--corpus", str(tmp_path / "c"), "--out", str(tmp_path / "o"),
             "--set", "population_size = 1"]
        )
        assert code == EXIT_CONFIG

    def test_same_seed_byte_identical_reports(self, tmp_path):
        _, _, out_a = run_attack_cli(tmp_path, name="a", seed="7")
        _, _, out_b = run_attack_cli(tmp_path, name="b", seed="7")
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
        assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()

    def test_jobs_do_not_change_reports(self, tmp_path):
        corpus = str(tmp_path / "demo")
        code = main(["attack", "--synthetic", "--corpus", corpus, "--out", str(tmp_path / "serial"),
                     "--scenes", "2", "--seed", "7", *FAST])
        assert code == EXIT_OK
        code = main(["attack", "--synthetic", "--corpus", corpus, "--out", str(tmp_path / "par"),
                     "--scenes", "2", "--seed", "7", "--jobs", "4", *FAST])
        assert code == EXIT_OK
        assert (tmp_path / "serial" / "report.json").read_bytes() == (tmp_path / "par" / "report.json").read_bytes()
        assert (tmp_path / "serial" / "scenes" / "scene000" / "mask_union.png").read_bytes() == (
            tmp_path / "par" / "scenes" / "scene000" / "mask_union.png"
        ).read_bytes()


class TestSimulateErrors:
    def test_condition_grid(self, tmp_path):
        code, corpus, out = run_attack_cli(tmp_path)
        assert code == EXIT_OK
        code = main(
            ["simulate-errors", "--synthetic", "--corpus", corpus, "--run", out,
             "--translate", "3", "5", "--incomplete", "0.05", "0.10", *FAST, "--seed", "7"]
        )
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "r1" / "robustness.json").read_text())
        assert set(payload) == {"identity", "translate_3px", "translate_5px",
                                "incomplete_5pct", "incomplete_10pct"}
        code = main(
            ["simulate-errors", "--synthetic", "--corpus", corpus, "--run", out,
             "--translate", "3", "--per-patch", *FAST, "--seed", "7"]
        )
        assert code == EXIT_OK

    def test_no_flags_identity_only_reproduces(self, tmp_path):
        code, corpus, out = run_attack_cli(tmp_path)
        code = main(["simulate-errors", "--synthetic", "--corpus", corpus, "--run", out, *FAST, "--seed", "7"])
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "r1" / "robustness.json").read_text())
        report = json.loads((tmp_path / "r1" / "report.json").read_text())
        assert set(payload) == {"identity"}
        assert payload["identity"]["asr"] == report["asr"]

    def test_missing_run_dir(self, tmp_path):
        code, corpus, _ = run_attack_cli(tmp_path)
        code = main(["simulate-errors", "--synthetic", "--corpus", corpus, "--run", str(tmp_path / "void")])
        assert code == EXIT_CORPUS


class TestDefendAndRender:
    def test_defend_writes_report(self, tmp_path):
        code, corpus, out = run_attack_cli(tmp_path)
        code = main(["defend", "--synthetic", "--corpus", corpus, "--run", out, "--window", "3", *FAST, "--seed", "7"])
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "r1" / "defense.json").read_text())
        assert "asr_delta" in payload["extra"]

    def test_render_overlays(self, tmp_path):
        code, corpus, out = run_attack_cli(tmp_path)
        code = main(["render", "--run", out])
        assert code == EXIT_OK
        overlay_vis = os.path.join(out, "render", "scene000", "overlay_vis.png")
        overlay_inf = os.path.join(out, "render", "scene000", "overlay_inf.png")
        assert os.path.isfile(overlay_vis) and os.path.isfile(overlay_inf)
        vis_scene = np.asarray(Image.open(os.path.join(corpus, "vis", "scene000.png")))
        overlay = np.asarray(Image.open(overlay_vis))
        assert overlay.shape == vis_scene.shape

    def test_render_missing_run(self, tmp_path):
        assert main(["render", "--run", str(tmp_path / "void")]) == EXIT_CORPUS

    def test_render_sweep_plot(self, tmp_path):
        corpus = str(tmp_path / "demo")
        out = str(tmp_path / "sw")
        code = main(
            ["sweep", "--synthetic", "--corpus", corpus, "--out", out, "--scenes", "1",
             "--lambdas", "1,2", "--patch-counts", "1,2", *FAST, "--seed", "7",
             "--set", "max_generations = 3"]
        )
        assert code == EXIT_OK
        cells = json.loads((tmp_path / "sw" / "sweep.json").read_text())
        assert len(cells) == 4
        code = main(["render", "--run", out])
        assert code == EXIT_OK
        assert os.path.isfile(os.path.join(out, "sweep.png"))


class TestEvalAndBaselineCommands:
    def test_eval_rescoring(self, tmp_path):
        code, corpus, out = run_attack_cli(tmp_path)
        code = main(["eval", "--synthetic", "--corpus", corpus, "--run", out, *FAST, "--seed", "7"])
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "r1" / "eval_report.json").read_text())
        report = json.loads((tmp_path / "r1" / "report.json").read_text())
        assert payload["asr"] == report["asr"]

    def test_baseline_command(self, tmp_path):
        corpus = str(tmp_path / "demo")
        out = str(tmp_path / "base")
        code = main(
            ["baseline", "--synthetic", "--corpus", corpus, "--out", out,
             "--shape", "square", "--scenes", "2", *FAST, "--seed", "7"]
        )
        assert code == EXIT_OK
        payload = json.loads((tmp_path / "base" / "baseline_square.json").read_text())
        assert payload["extra"]["shape_kind"] == "square"


class TestPrintConfig:
    def test_prints_all_defaults(self, capsys):
        assert main(["print-config"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "population_size = 30" in out
        assert "lambda = 2" in out
        assert "threshold = 0.7" in out
        assert "patch_centers = 0.5,0.35;0.5,0.6" in out

    def test_round_trips_through_parser(self, capsys, tmp_path):
        main(["print-config"])
        text = capsys.readouterr().out
        from crosspatch.config import RunConfig, parse_config_text

        assert parse_config_text(text) == RunConfig()
