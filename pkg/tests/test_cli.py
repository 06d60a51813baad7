import json

import numpy as np
import pytest

from eventcl.cli import main

TINY_TRAIN = [
    "--seed", "0", "--steps", "6", "--batch-size", "8", "--epochs", "1",
]
TINY_CFG_LINES = [
    "batch_size = 8",
    "hidden_dim = 16",
    "num_layers = 1",
    "num_heads = 2",
    "ffn_dim = 24",
    "prototype_count = 3",
    "steps = 6",
]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    code = main([
        "generate-data", "--out", str(out), "--clusters", "5", "--events-per-cluster", "20",
        "--seed", "3", "--hard-pairs", "12", "--transitive-pairs", "12", "--mcnc-instances", "8",
    ])
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory, data_dir):
    run = tmp_path_factory.mktemp("runs") / "run"
    cfg = run.parent / "tiny.cfg"
    cfg.write_text("\n".join(TINY_CFG_LINES) + "\n")
    code = main([
        "train", "--config", str(cfg), "--corpus", str(data_dir / "corpus.jsonl"),
        "--out", str(run), "--seed", "0",
    ])
    assert code == 0
    return run


class TestGenerateData:
    def test_writes_all_four_files(self, data_dir):
        for name in ("corpus.jsonl", "hard_pairs.jsonl", "transitive.jsonl", "mcnc.jsonl"):
            assert (data_dir / name).exists()

    def test_deterministic_bytes(self, data_dir, tmp_path):
        again = tmp_path / "again"
        assert main([
            "generate-data", "--out", str(again), "--clusters", "5", "--events-per-cluster", "20",
            "--seed", "3", "--hard-pairs", "12", "--transitive-pairs", "12", "--mcnc-instances", "8",
        ]) == 0
        for name in ("corpus.jsonl", "hard_pairs.jsonl", "transitive.jsonl", "mcnc.jsonl"):
            assert (again / name).read_bytes() == (data_dir / name).read_bytes()


class TestTrainCommand:
    def test_outputs_exist(self, trained_run):
        for name in ("checkpoint.bin", "vocab.txt", "metrics.jsonl", "config.cfg", "manifest.json"):
            assert (trained_run / name).exists()

    def test_manifest_hashes_reproducible(self, data_dir, trained_run, tmp_path):
        other = tmp_path / "other"
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text("\n".join(TINY_CFG_LINES) + "\n")
        assert main([
            "train", "--config", str(cfg), "--corpus", str(data_dir / "corpus.jsonl"),
            "--out", str(other), "--seed", "0",
        ]) == 0
        m1 = json.loads((trained_run / "manifest.json").read_text())
        m2 = json.loads((other / "manifest.json").read_text())
        assert m1["input_hashes"] == m2["input_hashes"]
        assert m1["output_hashes"] == m2["output_hashes"]
        assert m1["config"] == m2["config"]

    def test_flag_overrides_reflect_in_manifest(self, data_dir, tmp_path):
        run = tmp_path / "flags"
        assert main([
            "train", "--corpus", str(data_dir / "corpus.jsonl"), "--out", str(run),
            "--seed", "4", "--pi", "0.3", "--tau", "0.25", "--steps", "2",
            "--batch-size", "8", "--template", "colon_labels", "--word-order", "PSO",
            "--no-mlm",
        ]) == 0
        cfg = json.loads((run / "manifest.json").read_text())["config"]
        assert cfg["pi"] == 0.3 and cfg["tau"] == 0.25
        assert cfg["template_id"] == "colon_labels" and cfg["word_order"] == "PSO"
        assert cfg["enable_mlm"] is False and cfg["seed"] == 4

    def test_unknown_flag_exits_2(self, data_dir, capsys):
        code = main(["train", "--corpus", str(data_dir / "corpus.jsonl"), "--warp", "9"])
        assert code == 2
        assert "--warp" in capsys.readouterr().err

    def test_bad_config_key_exits_2(self, data_dir, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("warp_speed = 9\n")
        assert main(["train", "--config", str(cfg), "--corpus", str(data_dir / "corpus.jsonl"), "--out", str(tmp_path / "x")]) == 2

    def test_missing_corpus_exits_2(self, tmp_path):
        assert main(["train", "--corpus", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "x"), "--steps", "1"]) == 2


class TestEvalCommand:
    def test_report_has_all_six_keys(self, trained_run, data_dir, tmp_path, capsys):
        report_path = tmp_path / "report.json"
        code = main([
            "eval", "--run", str(trained_run),
            "--hard", str(data_dir / "hard_pairs.jsonl"),
            "--transitive", str(data_dir / "transitive.jsonl"),
            "--mcnc", str(data_dir / "mcnc.jsonl"),
            "--report", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text())
        assert set(report) == {"original_acc", "extended_acc", "transitive_rho", "mcnc_acc", "align", "uniform"}
        assert report["original_acc"] is not None
        assert report["extended_acc"] is None  # no extended dataset supplied

    def test_dump_cases_table(self, trained_run, data_dir, tmp_path):
        cases = tmp_path / "cases.tsv"
        assert main([
            "eval", "--run", str(trained_run), "--hard", str(data_dir / "hard_pairs.jsonl"),
            "--dump-cases", str(cases),
        ]) == 0
        lines = cases.read_text().splitlines()
        assert lines[0] == "event_a\tevent_b\tcosine\tlabel"
        assert len(lines) == 1 + 2 * 12  # one similar + one dissimilar row per pair

    def test_table_out(self, trained_run, data_dir, tmp_path):
        table = tmp_path / "metrics.tsv"
        assert main([
            "eval", "--run", str(trained_run), "--hard", str(data_dir / "hard_pairs.jsonl"),
            "--table-out", str(table),
        ]) == 0
        header, row = table.read_text().splitlines()
        assert header.split("\t") == ["original_acc", "extended_acc", "transitive_rho", "mcnc_acc", "align", "uniform"]
        assert row.split("\t")[0] != ""

    def test_missing_dataset_exits_2(self, trained_run, tmp_path):
        assert main(["eval", "--run", str(trained_run), "--hard", str(tmp_path / "nope.jsonl")]) == 2


class TestAblateCommand:
    def test_four_rows_three_metrics(self, data_dir, tmp_path):
        out = tmp_path / "ablate"
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text("\n".join(TINY_CFG_LINES) + "\n")
        code = main([
            "ablate", "--config", str(cfg), "--corpus", str(data_dir / "corpus.jsonl"),
            "--hard", str(data_dir / "hard_pairs.jsonl"),
            "--transitive", str(data_dir / "transitive.jsonl"),
            "--mcnc", str(data_dir / "mcnc.jsonl"),
            "--out", str(out), "--seed", "1",
        ])
        assert code == 0
        table = json.loads((out / "ablation.json").read_text())
        assert [r["name"] for r in table["rows"]] == ["full", "no-prompt", "pso-word-order", "no-mlm"]
        for row in table["rows"]:
            assert set(row) == {"name", "hard_acc", "transitive_rho", "mcnc_acc"}
        no_prompt_cfg = json.loads((out / "no-prompt" / "manifest.json").read_text())["config"]
        assert no_prompt_cfg["pi"] == 0.0 and no_prompt_cfg["enable_prompt"] is False
        pso_cfg = json.loads((out / "pso-word-order" / "manifest.json").read_text())["config"]
        assert pso_cfg["word_order"] == "PSO"

    def test_requires_datasets(self, data_dir, tmp_path):
        assert main([
            "ablate", "--corpus", str(data_dir / "corpus.jsonl"),
            "--hard", str(data_dir / "hard_pairs.jsonl"), "--out", str(tmp_path / "x"),
        ]) == 2


class TestSweepCommand:
    def test_grid_rows(self, data_dir, tmp_path):
        out = tmp_path / "sweep"
        cfg = tmp_path / "tiny.cfg"
        cfg.write_text("\n".join(TINY_CFG_LINES) + "\n")
        code = main([
            "sweep", "--config", str(cfg), "--corpus", str(data_dir / "corpus.jsonl"),
            "--hard", str(data_dir / "hard_pairs.jsonl"),
            "--out", str(out), "--pi-grid", "0,0.5", "--seed", "2",
        ])
        assert code == 0
        table = json.loads((out / "sweep.json").read_text())
        assert [r["pi"] for r in table["rows"]] == [0.0, 0.5]
        for row in table["rows"]:
            assert {"pi", "hard_acc", "transitive_rho", "mcnc_acc", "align", "uniform"} == set(row)


class TestEmbedCommand:
    def test_writes_embedding_lines(self, trained_run, data_dir, tmp_path):
        out = tmp_path / "emb.jsonl"
        assert main([
            "embed", "--run", str(trained_run), "--events", str(data_dir / "corpus.jsonl"), "--out", str(out),
        ]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 100  # 5 clusters x 20 events
        rec = json.loads(lines[0])
        assert set(rec) == {"subject", "predicate", "object", "embedding"}
        assert np.linalg.norm(rec["embedding"]) == pytest.approx(1.0, abs=1e-5)


class TestNumericFailureExit:
    def test_exit_3(self, data_dir, tmp_path, monkeypatch):
        import eventcl.cli as cli_mod
        from eventcl.errors import NumericError

        def boom(corpus, cfg, out_dir):
            raise NumericError("synthetic blow-up")

        monkeypatch.setattr(cli_mod, "train", boom)
        assert main([
            "train", "--corpus", str(data_dir / "corpus.jsonl"), "--out", str(tmp_path / "x"), "--steps", "1",
        ]) == 3
