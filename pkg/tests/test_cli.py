import json
import os
import time

import pytest

from gtnn.cli import main


def read_bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


@pytest.fixture()
def dataset_dir(tmp_path):
    out = tmp_path / "data"
    rc = main(["synth", "--nodes", "120", "--groups", "2", "--pos-pairs", "120",
               "--seed", "5", "--out-dir", str(out)])
    assert rc == 0
    return out


def train_args(dataset_dir, out_dir, *extra):
    return ["train",
            "--nodes", str(dataset_dir / "nodes.tsv"),
            "--edges", str(dataset_dir / "edges.tsv"),
            "--splits", str(dataset_dir / "splits.tsv"),
            "--out-dir", str(out_dir), *extra]


class TestSynth:
    def test_writes_three_files(self, dataset_dir):
        for name in ("nodes.tsv", "edges.tsv", "splits.tsv"):
            assert (dataset_dir / name).exists()

    def test_rerun_is_byte_identical(self, dataset_dir, tmp_path):
        other = tmp_path / "data2"
        rc = main(["synth", "--nodes", "120", "--groups", "2", "--pos-pairs", "120",
                   "--seed", "5", "--out-dir", str(other)])
        assert rc == 0
        for name in ("nodes.tsv", "edges.tsv", "splits.tsv"):
            assert read_bytes(dataset_dir / name) == read_bytes(other / name)

    def test_single_group_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["synth", "--groups", "1", "--out-dir", str(tmp_path / "x")])
        assert exc.value.code == 2

    def test_too_many_positives_fails(self, tmp_path):
        rc = main(["synth", "--nodes", "20", "--groups", "2", "--p-in", "0.3",
                   "--p-out", "0.05", "--pos-pairs", "100000",
                   "--out-dir", str(tmp_path / "y")])
        assert rc == 1


class TestTrain:
    def test_manifest_and_artifacts(self, dataset_dir, tmp_path):
        out = tmp_path / "run"
        rc = main(train_args(dataset_dir, out, "--seeds", "0,1", "--max-epochs", "4",
                             "--curriculum", "trend_sl", "--alpha", "0.3",
                             "--lambda", "1.0", "--k", "5"))
        assert rc == 0
        manifest = json.loads(read_bytes(out / "manifest.json"))
        assert manifest["seeds"] == [0, 1]
        assert manifest["config"]["curriculum.mode"] == "trend_sl"
        assert "wall_clock_sec" in manifest
        for run in manifest["runs"]:
            for path in run["artifacts"].values():
                assert os.path.exists(path)
        assert set(manifest["summary"]) == {"f1", "precision", "recall"}

    def test_modes_are_distinguished_in_artifacts(self, dataset_dir, tmp_path):
        rc = main(train_args(dataset_dir, tmp_path / "none", "--curriculum", "none",
                             "--max-epochs", "3"))
        assert rc == 0
        rc = main(train_args(dataset_dir, tmp_path / "sl", "--curriculum", "sl",
                             "--alpha", "0", "--max-epochs", "3"))
        assert rc == 0
        m_none = json.loads(read_bytes(tmp_path / "none" / "manifest.json"))
        m_sl = json.loads(read_bytes(tmp_path / "sl" / "manifest.json"))
        assert m_none["config"]["curriculum.mode"] == "none"
        assert m_sl["config"]["curriculum.mode"] == "sl"
        # mode none leaves every weight at 1; sl does not
        sigmas_none = set()
        with open(tmp_path / "none" / "trace_seed0.csv") as fh:
            next(fh)
            for line in fh:
                sigmas_none.add(line.rsplit(",", 2)[1])
        assert sigmas_none == {"1.0"}

    def test_alpha_out_of_grid_is_usage_error(self, dataset_dir, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(train_args(dataset_dir, tmp_path / "r", "--alpha", "1.5"))
        assert exc.value.code == 2

    def test_identical_invocations_byte_identical(self, dataset_dir, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            rc = main(train_args(dataset_dir, out, "--seeds", "3", "--max-epochs", "4",
                                 "--curriculum", "sl"))
            assert rc == 0
        assert read_bytes(a / "metrics_seed3.json") == read_bytes(b / "metrics_seed3.json")
        assert read_bytes(a / "trace_seed3.csv") == read_bytes(b / "trace_seed3.csv")

    def test_parallel_jobs_match_serial(self, dataset_dir, tmp_path):
        serial, parallel = tmp_path / "s", tmp_path / "p"
        rc = main(train_args(dataset_dir, serial, "--seeds", "0,1", "--max-epochs", "3"))
        assert rc == 0
        rc = main(train_args(dataset_dir, parallel, "--seeds", "0,1", "--max-epochs", "3",
                             "--jobs", "2"))
        assert rc == 0
        for seed in (0, 1):
            assert read_bytes(serial / f"metrics_seed{seed}.json") == \
                   read_bytes(parallel / f"metrics_seed{seed}.json")

    def test_config_file_with_flag_precedence(self, dataset_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("curriculum.mode = sl\ntrain.max_epochs = 3\n# comment\n",
                       encoding="utf-8")
        out = tmp_path / "cfgrun"
        rc = main(train_args(dataset_dir, out, "--config", str(cfg),
                             "--curriculum", "trend_sl"))
        assert rc == 0
        manifest = json.loads(read_bytes(out / "manifest.json"))
        assert manifest["config"]["curriculum.mode"] == "trend_sl"  # flag wins
        assert manifest["config"]["train.max_epochs"] == "3"

    def test_unknown_config_key_fails_without_manifest(self, dataset_dir, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nonsense.key = 1\n", encoding="utf-8")
        out = tmp_path / "badrun"
        rc = main(train_args(dataset_dir, out, "--config", str(cfg)))
        assert rc == 1
        assert not (out / "manifest.json").exists()


class TestEval:
    def test_eval_matches_training_metrics(self, dataset_dir, tmp_path, capsys):
        out = tmp_path / "run"
        rc = main(train_args(dataset_dir, out, "--seeds", "0", "--max-epochs", "4"))
        assert rc == 0
        capsys.readouterr()
        rc = main(["eval", "--checkpoint", str(out / "checkpoint_seed0.npz"),
                   "--nodes", str(dataset_dir / "nodes.tsv"),
                   "--edges", str(dataset_dir / "edges.tsv"),
                   "--splits", str(dataset_dir / "splits.tsv"),
                   "--split", "test"])
        assert rc == 0
        got = json.loads(capsys.readouterr().out)
        trained = json.loads(read_bytes(out / "metrics_seed0.json"))
        assert got["metrics"] == trained["test"]


class TestAblateCommand:
    def test_writes_table(self, dataset_dir, tmp_path):
        out = tmp_path / "ab"
        rc = main(["ablate",
                   "--nodes", str(dataset_dir / "nodes.tsv"),
                   "--edges", str(dataset_dir / "edges.tsv"),
                   "--splits", str(dataset_dir / "splits.tsv"),
                   "--axis", "additional_features", "--grid", "on,off",
                   "--seeds", "0", "--max-epochs", "2", "--out-dir", str(out)])
        assert rc == 0
        table = (out / "ablation_additional_features.csv").read_text(encoding="utf-8")
        assert table.startswith("setting,seed,precision,recall,f1\n")
        assert "on,0," in table and "off,0," in table
        assert "on,mean" in table

    def test_empty_grid_is_usage_error(self, dataset_dir, tmp_path):
        rc = main(["ablate",
                   "--nodes", str(dataset_dir / "nodes.tsv"),
                   "--edges", str(dataset_dir / "edges.tsv"),
                   "--splits", str(dataset_dir / "splits.tsv"),
                   "--axis", "embedding_init", "--grid", ",",
                   "--out-dir", str(tmp_path / "e")])
        assert rc == 2


class TestDiagnose:
    def test_two_epoch_trace_single_fraction_row(self, dataset_dir, tmp_path):
        run = tmp_path / "run"
        rc = main(train_args(dataset_dir, run, "--max-epochs", "2", "--patience", "5"))
        assert rc == 0
        out = tmp_path / "diag"
        rc = main(["diagnose", "--trace", str(run / "trace_seed0.csv"),
                   "--out-dir", str(out)])
        assert rc == 0
        rows = (out / "inversion_fraction.csv").read_text(encoding="utf-8").strip().splitlines()
        assert rows[0] == "epoch,fraction"
        assert len(rows) == 2  # exactly one consecutive pair
        # no window fits two epochs, so transition files are skipped
        assert not (out / "transition_E2H.csv").exists()
        assert (out / "heatmap_E2H_rising.csv").exists()

    def test_window_zero_is_usage_error(self, dataset_dir, tmp_path):
        run = tmp_path / "run"
        rc = main(train_args(dataset_dir, run, "--max-epochs", "3", "--patience", "5"))
        assert rc == 0
        rc = main(["diagnose", "--trace", str(run / "trace_seed0.csv"),
                   "--window", "0", "--out-dir", str(tmp_path / "d0")])
        assert rc == 2

    def test_five_epoch_trace_with_window_two(self, dataset_dir, tmp_path):
        run = tmp_path / "run5"
        rc = main(train_args(dataset_dir, run, "--max-epochs", "5", "--patience", "9"))
        assert rc == 0
        out = tmp_path / "diag5"
        rc = main(["diagnose", "--trace", str(run / "trace_seed0.csv"),
                   "--window", "2", "--out-dir", str(out)])
        assert rc == 0
        rows = (out / "inversion_fraction.csv").read_text(encoding="utf-8").strip().splitlines()
        assert len(rows) == 5  # 4 consecutive pairs

    def test_window_needs_enough_epochs(self, dataset_dir, tmp_path):
        run = tmp_path / "run"
        rc = main(train_args(dataset_dir, run, "--max-epochs", "5", "--patience", "9"))
        assert rc == 0
        rc = main(["diagnose", "--trace", str(run / "trace_seed0.csv"),
                   "--window", "3", "--out-dir", str(tmp_path / "d")])
        assert rc == 2

    def test_malformed_trace_reports_row(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("epoch,sample_id,loss,delta,sigma,label\n0,a,x,0,1,easy\n",
                       encoding="utf-8")
        rc = main(["diagnose", "--trace", str(bad), "--out-dir", str(tmp_path / "d")])
        assert rc == 1


class TestMisc:
    def test_out_dir_env_var_is_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("GTNN_OUT_DIR", str(tmp_path / "envout"))
        rc = main(["synth", "--nodes", "40", "--groups", "2", "--p-in", "0.5",
                   "--p-out", "0.1", "--pos-pairs", "30", "--seed", "0"])
        assert rc == 0
        assert (tmp_path / "envout" / "nodes.tsv").exists()

    def test_train_help_documents_every_config_key(self, capsys):
        from gtnn.config import CONFIG_KEYS
        with pytest.raises(SystemExit) as exc:
            main(["train", "--help"])
        assert exc.value.code == 0
        text = capsys.readouterr().out
        for key in CONFIG_KEYS:
            assert key in text

    def test_pair_text_features_end_to_end(self, dataset_dir, tmp_path):
        # pair-text vectors for every sampled pair, keyed unordered
        table_path = tmp_path / "pair_text.tsv"
        with open(dataset_dir / "splits.tsv", encoding="utf-8") as fh, \
                open(table_path, "w", encoding="utf-8") as out:
            for line in fh:
                if line.startswith("#"):
                    continue
                u, v, label, _, _ = line.rstrip("\n").split("\t")
                out.write(f"{u}\t{v}\t0.25,{float(label) * 0.5}\n")
        out_dir = tmp_path / "run"
        rc = main(train_args(dataset_dir, out_dir, "--max-epochs", "3",
                             "--features-pair-text", "on",
                             "--pair-text-file", str(table_path)))
        assert rc == 0
        manifest = json.loads(read_bytes(out_dir / "manifest.json"))
        assert manifest["config"]["features.pair_text"] == "on"


class TestEndToEnd:
    def test_full_pipeline_under_budget(self, tmp_path):
        started = time.monotonic()
        data = tmp_path / "data"
        assert main(["synth", "--nodes", "120", "--groups", "2", "--pos-pairs", "150",
                     "--seed", "1", "--out-dir", str(data)]) == 0
        run = tmp_path / "run"
        assert main(["train",
                     "--nodes", str(data / "nodes.tsv"),
                     "--edges", str(data / "edges.tsv"),
                     "--splits", str(data / "splits.tsv"),
                     "--seeds", "0", "--max-epochs", "10",
                     "--out-dir", str(run)]) == 0
        assert main(["diagnose", "--trace", str(run / "trace_seed0.csv"),
                     "--window", "2", "--out-dir", str(tmp_path / "diag")]) == 0
        assert time.monotonic() - started < 60.0
