import json

import numpy as np
import pytest

from roweisposes import cli, pipeline
from roweisposes.dataset import SyntheticSpec, generate_synthetic, load_dataset
from roweisposes.pipeline import RunConfig
from roweisposes.serialization import load_bank, load_rda_model, read_json

SMALL = ["--subjects", "3", "--actions", "3", "--poses-per-action", "3", "--frames-per-pose", "4"]


def gen(root, noise, seed=7):
    assert cli.run(["gen-synthetic", "--out", str(root), "--noise", str(noise), "--seed", str(seed)] + SMALL) == 0
    return root / "manifest.json"


@pytest.fixture(scope="module")
def noisy(tmp_path_factory):
    return gen(tmp_path_factory.mktemp("noisy"), 0.02)


@pytest.fixture(scope="module")
def clean(tmp_path_factory):
    return gen(tmp_path_factory.mktemp("clean"), 0.0)


class TestGenSynthetic:
    def test_writes_dataset(self, noisy):
        sequences, m = load_dataset(noisy)
        assert len(sequences) == 9
        assert len(m.files) == 3
        assert read_json(noisy)["schema_version"] == 1

    def test_bad_spec_is_config_error(self, tmp_path):
        assert cli.run(["gen-synthetic", "--out", str(tmp_path), "--subjects", "0"]) == 1


class TestTrain:
    def test_models_reload_bit_exact(self, noisy, tmp_path):
        out = tmp_path / "m"
        assert cli.run(["train", "--manifest", str(noisy), "--r1", "0", "--r2", "1", "--out", str(out)]) == 0
        sequences, m = load_dataset(noisy)
        cfg = m.preprocess_config()
        trained = pipeline.train(pipeline.prepare(sequences, cfg), RunConfig(r1=0, r2=1), m.pose_alphabet,
                                 cfg.fingerprint())
        rda = load_rda_model(out / "rda_model.json")
        assert rda.U.tobytes() == trained.rda.U.tobytes()
        assert rda.class_means.tobytes() == trained.rda.class_means.tobytes()
        assert rda.preprocessing_fingerprint == cfg.fingerprint()
        bank = load_bank(out / "hmm_bank.json")
        for a in bank.actions:
            assert bank.models[a].emission.tobytes() == trained.bank.models[a].emission.tobytes()
        echo = read_json(out / "run_config.json")
        assert echo["schema_version"] == 1 and echo["r2"] == 1.0
        assert read_json(out / "windowing.json")["kind"] == "windowing"

    def test_rerun_is_identical(self, noisy, tmp_path):
        for name in ("a", "b"):
            assert cli.run(["train", "--manifest", str(noisy), "--seed", "3", "--out", str(tmp_path / name)]) == 0
        for f in ("rda_model.json", "hmm_bank.json", "windowing.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_dims_above_d_fails_before_work(self, noisy, tmp_path, capsys):
        out = tmp_path / "never"
        assert cli.run(["train", "--manifest", str(noisy), "--dims", "46", "--out", str(out)]) == 1
        assert not out.exists()
        assert "dims=46" in capsys.readouterr().err

    def test_missing_annotations_is_protocol_error(self, noisy, tmp_path):
        from roweisposes.dataset import save_dataset

        sequences, m = load_dataset(noisy)
        stripped = [s.__class__(s.frames, s.action_label, s.subject_id, s.sequence_id, None) for s in sequences]
        save_dataset(stripped, m, tmp_path / "d")
        assert cli.run(["train", "--manifest", str(tmp_path / "d" / "manifest.json"), "--out", str(tmp_path)]) == 1

    def test_malformed_data_is_exit_2(self, noisy, tmp_path):
        (tmp_path / "s01.jsonl").write_text('{"subject": "s01"\n')
        doc = read_json(noisy)
        doc["files"] = [{"path": "s01.jsonl", "subject": "s01"}]
        (tmp_path / "manifest.json").write_text(json.dumps(doc))
        assert cli.run(["train", "--manifest", str(tmp_path / "manifest.json"), "--out", str(tmp_path / "o")]) == 2

    def test_missing_manifest(self, tmp_path):
        assert cli.run(["train", "--manifest", str(tmp_path / "nope.json")]) == 1
        assert cli.run(["train"]) == 1

    def test_numerical_failure_is_exit_3(self, clean, tmp_path):
        # zero noise makes S_W = 0; with no ridge allowed R2 cannot be factored
        args = ["train", "--manifest", str(clean), "--r1", "0", "--r2", "1", "--eps", "0", "--out", str(tmp_path)]
        assert cli.run(args) == 3


class TestEval:
    def test_zero_noise_is_perfect(self, clean, tmp_path):
        assert cli.run(["eval", "--manifest", str(clean), "--out", str(tmp_path)]) == 0
        report = read_json(tmp_path / "report.json")
        assert report["mean_accuracy"] == 1.0
        assert report["kind"] == "eval_report" and report["schema_version"] == 1
        assert (tmp_path / "report.txt").read_text().startswith("dataset: synthetic")

    def test_accounting(self, noisy, tmp_path):
        assert cli.run(["eval", "--manifest", str(noisy), "--r1", "0.5", "--r2", "0.5", "--out", str(tmp_path)]) == 0
        report = read_json(tmp_path / "report.json")
        C = np.array(report["confusion"])
        rejected = np.array(report["rejected"])
        total = C.sum() + rejected.sum()
        assert total == sum(f["total"] for f in report["folds"]) == 9
        assert abs(np.trace(C) / total - report["mean_accuracy"]) <= 1e-12
        np.testing.assert_array_equal(C.sum(axis=1) + rejected, [3, 3, 3])
        assert 0.0 <= report["mean_accuracy"] <= 1.0
        assert report["config"]["r1"] == 0.5
        assert report["supervision_level"] == 0.5
        assert [f["subject"] for f in report["folds"]] == ["s01", "s02", "s03"]
        assert report["wall_clock_seconds"] > 0

    def test_deterministic(self, noisy, tmp_path):
        docs = []
        for name in ("a", "b"):
            assert cli.run(["eval", "--manifest", str(noisy), "--r1", "1", "--out", str(tmp_path / name)]) == 0
            doc = read_json(tmp_path / name / "report.json")
            doc.pop("wall_clock_seconds")
            doc["config"].pop("out")
            docs.append(doc)
        assert docs[0] == docs[1]

    def test_forward_criterion(self, clean, tmp_path):
        assert cli.run(["eval", "--manifest", str(clean), "--criterion", "forward", "--out", str(tmp_path)]) == 0
        assert read_json(tmp_path / "report.json")["mean_accuracy"] == 1.0

    def test_rejections_count_as_errors(self, clean):
        sequences, m = load_dataset(clean)
        prepared = pipeline.prepare(sequences, m.preprocess_config())
        config = RunConfig()
        original = pipeline.predict
        try:
            pipeline.predict = lambda p, ps, c="viterbi": (None, {}) if ps is prepared[0] else original(p, ps, c)
            report = pipeline.evaluate_prepared(prepared, m, config)
        finally:
            pipeline.predict = original
        assert sum(report.rejected) == 1
        assert report.mean_accuracy == pytest.approx(8 / 9)
        assert report.confusion_matrix.sum() == 8


class TestSweep:
    def test_corners(self, noisy, tmp_path):
        assert cli.run(["sweep", "--manifest", str(noisy), "--corners", "--out", str(tmp_path)]) == 0
        doc = read_json(tmp_path / "sweep.json")
        assert [(r["r1"], r["r2"]) for r in doc["rows"]] == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert [r["supervision_level"] for r in doc["rows"]] == [0, 0.5, 0.5, 1]
        assert all(r["error"] is None and r["accuracy"] is not None for r in doc["rows"])
        assert doc["schema_version"] == 1

    def test_nine_point_grid_order(self, clean, tmp_path):
        assert cli.run(["sweep", "--manifest", str(clean), "--out", str(tmp_path)]) == 0
        rows = read_json(tmp_path / "sweep.json")["rows"]
        assert [(r["r1"], r["r2"]) for r in rows] == [tuple(map(float, g)) for g in pipeline.TABLE_GRID]

    def test_singleton_matches_eval(self, noisy, tmp_path):
        assert cli.run(["sweep", "--manifest", str(noisy), "--grid", "0.5,1", "--out", str(tmp_path / "s")]) == 0
        assert cli.run(["eval", "--manifest", str(noisy), "--r1", "0.5", "--r2", "1", "--out", str(tmp_path / "e")]) == 0
        row = read_json(tmp_path / "s" / "sweep.json")["rows"][0]
        report = read_json(tmp_path / "e" / "report.json")
        assert row["accuracy"] == report["mean_accuracy"]
        assert row["fold_mean_accuracy"] == report["fold_mean_accuracy"]

    def test_failing_point_does_not_stop_sweep(self, clean, tmp_path):
        args = ["sweep", "--manifest", str(clean), "--grid", "0,1;0,0", "--eps", "0", "--out", str(tmp_path)]
        assert cli.run(args) == 0
        rows = read_json(tmp_path / "sweep.json")["rows"]
        assert rows[0]["accuracy"] is None and "FitError" in rows[0]["error"]
        assert rows[1]["accuracy"] == 1.0

    @pytest.mark.parametrize("grid", ["", "0.5", "a,b", "2,0"])
    def test_bad_grid(self, noisy, tmp_path, grid):
        args = ["sweep", "--manifest", str(noisy), "--grid", grid, "--out", str(tmp_path)]
        code = cli.run(args)
        if grid == "2,0":
            # out-of-range factors fail as a row, not the whole sweep
            assert code == 0
            assert "ConfigError" in read_json(tmp_path / "sweep.json")["rows"][0]["error"]
        elif grid == "":
            assert code == 0
        else:
            assert code == 1


class TestExportEmbedding:
    def test_rows_and_means(self, noisy, tmp_path):
        assert cli.run(["export-embedding", "--manifest", str(noisy), "--out", str(tmp_path)]) == 0
        doc = read_json(tmp_path / "embedding.json")
        frames = [r for r in doc["rows"] if r["kind"] == "frame"]
        means = [r for r in doc["rows"] if r["kind"] == "mean"]
        sequences, m = load_dataset(noisy)
        n_exemplars = sum(a is not None for s in sequences for a in s.pose_annotations)
        assert len(frames) == n_exemplars
        assert len(doc["rows"]) == n_exemplars + len(means)
        for mean in means:
            members = np.array([[r["dim1"], r["dim2"]] for r in frames if r["pose"] == mean["pose"]])
            np.testing.assert_allclose(members.mean(axis=0), [mean["dim1"], mean["dim2"]], atol=1e-10)

    def test_zero_noise_has_no_spread(self, clean, tmp_path):
        assert cli.run(["export-embedding", "--manifest", str(clean), "--out", str(tmp_path)]) == 0
        rows = read_json(tmp_path / "embedding.json")["rows"]
        # the ridge scales with trace(S_W), which is rounding residue here, so compare relative to scale
        scale = max(abs(r[k]) for r in rows for k in ("dim1", "dim2"))
        for pose in {r["pose"] for r in rows}:
            pts = np.array([[r["dim1"], r["dim2"]] for r in rows if r["pose"] == pose])
            assert np.ptp(pts, axis=0).max() <= 1e-9 * scale

    def test_saved_model(self, noisy, tmp_path):
        assert cli.run(["train", "--manifest", str(noisy), "--out", str(tmp_path)]) == 0
        args = ["export-embedding", "--manifest", str(noisy), "--model", str(tmp_path / "rda_model.json"),
                "--out", str(tmp_path / "e")]
        assert cli.run(args) == 0

    def test_needs_two_dims(self, noisy, tmp_path):
        assert cli.run(["export-embedding", "--manifest", str(noisy), "--dims", "1", "--out", str(tmp_path)]) == 1


class TestConfig:
    def test_flags_override_file(self, noisy, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"manifest": str(noisy), "r1": 1.0, "r2": 0.0, "n_states": 2}))
        out = tmp_path / "o"
        assert cli.run(["train", "--config", str(cfg), "--r1", "0", "--out", str(out)]) == 0
        echo = read_json(out / "run_config.json")
        assert (echo["r1"], echo["r2"], echo["n_states"]) == (0.0, 0.0, 2)

    def test_relative_manifest(self, noisy, tmp_path):
        cfg = noisy.parent / "run.json"
        cfg.write_text(json.dumps({"manifest": "manifest.json"}))
        assert cli.run(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 0

    def test_unknown_field(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"r3": 1}))
        assert cli.run(["train", "--config", str(cfg)]) == 1

    def test_bad_json(self, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text("{")
        assert cli.run(["train", "--config", str(cfg)]) == 1

    @pytest.mark.parametrize("kwargs", [dict(r1=2.0), dict(kernel="cosine"), dict(criterion="map"),
                                        dict(dims=0), dict(window_size=0), dict(threshold_quantile=0.0)])
    def test_run_config_validation(self, kwargs):
        from roweisposes.errors import ConfigError

        with pytest.raises(ConfigError):
            RunConfig(**kwargs)

    def test_reference_lookup(self):
        from roweisposes.rda import RoweisFactors

        assert pipeline.reference_accuracy("TST", RoweisFactors(0, 1)) == 76.14
        assert pipeline.reference_accuracy("tst", RoweisFactors(1, 0)) == 82.20
        assert pipeline.reference_accuracy("synthetic", RoweisFactors(0, 1)) is None


def test_module_entry_point():
    import subprocess
    import sys

    out = subprocess.run([sys.executable, "-m", "roweisposes", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "export-embedding" in out.stdout


def test_synthetic_spec_from_cli_matches_library(noisy):
    sequences, _ = load_dataset(noisy)
    expected, _ = generate_synthetic(SyntheticSpec(n_subjects=3, n_actions=3, poses_per_action=3,
                                                   frames_per_pose=4, noise_sigma=0.02), seed=7)
    assert sequences == expected
