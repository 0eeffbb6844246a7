"""CLI behaviour: exit codes, file outputs, manifest reruns, seed override."""

import json

import pytest

from ptr import TinyMLM, load_jsonl
from ptr.cli import main

from conftest import bundled_spec_text


@pytest.fixture()
def spec_file(tmp_path):
    path = tmp_path / "synth4.ptr"
    path.write_text(bundled_spec_text("synth4"), encoding="utf-8")
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestExitCodes:
    def test_compile_happy_path(self, spec_file, tmp_path):
        out = tmp_path / "schema.json"
        assert run("compile", spec_file, "--out", out) == 0
        assert out.exists()

    def test_compile_missing_file(self, tmp_path, capsys):
        code = run("compile", tmp_path / "missing.ptr", "--out", tmp_path / "s.json")
        assert code == 2
        assert "missing.ptr" in capsys.readouterr().err

    def test_train_without_data_is_usage_error(self, tmp_path):
        assert run("train", "--out", tmp_path / "d") == 1

    def test_unknown_command(self):
        assert run("definitely-not-a-command") == 1

    def test_spec_error_is_data_exit(self, tmp_path):
        bad = tmp_path / "bad.ptr"
        bad.write_text('predicate p { template: the [MASK]; labels: "a"; }')
        assert run("compile", bad, "--out", tmp_path / "s.json") == 2


class TestGen:
    def test_writes_balanced_jsonl(self, spec_file, tmp_path):
        out = tmp_path / "corpus.jsonl"
        assert run("gen", "--spec", spec_file, "--n", 6, "--seed", 3, "--out", out) == 0
        ds = load_jsonl(out)
        assert len(ds) == 24
        assert all(len(v) == 6 for v in ds.by_class().values())

    def test_ptr_seed_env_overrides_flag(self, spec_file, tmp_path, monkeypatch):
        out1, out2, out3 = (tmp_path / n for n in ("a.jsonl", "b.jsonl", "c.jsonl"))
        run("gen", "--spec", spec_file, "--n", 4, "--seed", 1, "--out", out1)
        monkeypatch.setenv("PTR_SEED", "99")
        run("gen", "--spec", spec_file, "--n", 4, "--seed", 1, "--out", out2)
        monkeypatch.delenv("PTR_SEED")
        run("gen", "--spec", spec_file, "--n", 4, "--seed", 99, "--out", out3)
        assert out2.read_bytes() == out3.read_bytes()
        assert out1.read_bytes() != out2.read_bytes()


class TestInitModel:
    def test_checkpoint_loadable(self, spec_file, tmp_path):
        data = tmp_path / "data.jsonl"
        run("gen", "--spec", spec_file, "--n", 3, "--seed", 1, "--out", data)
        ckpt = tmp_path / "model.json"
        assert run("init-model", "--spec", spec_file, "--data", data,
                   "--seed", 5, "--out", ckpt) == 0
        model, schema = TinyMLM.load(ckpt)
        assert schema is not None
        assert model.config.n_classes == 4


@pytest.fixture(scope="module")
def trained_run(tmp_path_factory):
    """A tiny end-to-end training run shared by the CLI tests below."""
    root = tmp_path_factory.mktemp("cli-train")
    spec = root / "synth4.ptr"
    spec.write_text(bundled_spec_text("synth4"), encoding="utf-8")
    files = {}
    for name, (n, seed) in {"train": (8, 1), "dev": (4, 2), "test": (4, 3)}.items():
        files[name] = root / f"{name}.jsonl"
        assert run("gen", "--spec", spec, "--n", n, "--seed", seed,
                   "--out", files[name]) == 0
    run_dir = root / "run1"
    code = run("train", "--spec", spec, "--data", files["train"], "--dev", files["dev"],
               "--vocab-data", files["test"], "--seed", 7, "--out", run_dir)
    assert code == 0
    return root, spec, files, run_dir


class TestTrainRun:
    def test_outputs_present(self, trained_run):
        _, _, _, run_dir = trained_run
        for name in ("model.json", "history.csv", "manifest.json"):
            assert (run_dir / name).exists()
        history = (run_dir / "history.csv").read_text()
        assert history.startswith("step,lr,loss\n")
        assert history.endswith("\n")

    def test_manifest_contents(self, trained_run):
        _, _, _, run_dir = trained_run
        doc = json.loads((run_dir / "manifest.json").read_text())
        assert doc["format"] == "ptr-manifest/1"
        assert doc["train_config"]["seed"] == 7
        assert {"spec", "train", "dev", "vocab_extra"} <= set(doc["inputs"])
        for entry in (doc["inputs"]["spec"], doc["inputs"]["train"]):
            assert len(entry["sha256"]) == 64

    def test_manifest_rerun_bit_identical(self, trained_run):
        root, _, _, run_dir = trained_run
        rerun = root / "run2"
        assert run("train", "--manifest", run_dir / "manifest.json", "--out", rerun) == 0
        assert (rerun / "history.csv").read_bytes() == (run_dir / "history.csv").read_bytes()

    def test_manifest_detects_changed_input(self, trained_run, capsys):
        root, _, files, run_dir = trained_run
        manifest = json.loads((run_dir / "manifest.json").read_text())
        files["train"].write_text(files["train"].read_text() + "\n")
        try:
            code = run("train", "--manifest", run_dir / "manifest.json",
                       "--out", root / "run3")
        finally:
            # restore for other tests in the module
            files["train"].write_text(files["train"].read_text().rstrip("\n") + "\n")
        assert code == 2
        assert "changed on disk" in capsys.readouterr().err

    def test_eval_outputs(self, trained_run):
        root, _, files, run_dir = trained_run
        report_path = root / "report.json"
        csv_path = root / "report.csv"
        preds_path = root / "preds.jsonl"
        code = run("eval", "--model", run_dir / "model.json", "--data", files["test"],
                   "--report", report_path, "--csv", csv_path, "--preds", preds_path)
        assert code == 0
        report = json.loads(report_path.read_text())
        assert set(report) >= {"micro_f1", "micro_precision", "per_class", "n_instances"}
        csv_lines = csv_path.read_text().strip().split("\n")
        assert csv_lines[0].startswith("n,precision,recall,f1")
        preds = [json.loads(line) for line in preds_path.read_text().splitlines()]
        assert len(preds) == 16
        assert all({"id", "gold", "pred"} <= set(p) for p in preds)

    def test_eval_predictions_reproducible(self, trained_run):
        root, _, files, run_dir = trained_run
        p1, p2 = root / "p1.jsonl", root / "p2.jsonl"
        for p in (p1, p2):
            assert run("eval", "--model", run_dir / "model.json",
                       "--data", files["test"], "--preds", p) == 0
        assert p1.read_bytes() == p2.read_bytes()


class TestReverseAndInspect:
    def test_reverse_roundtrip_via_cli(self, spec_file, tmp_path, capsys):
        rev = tmp_path / "rev.ptr"
        assert run("reverse", spec_file, "--all", "--out", rev) == 0
        twice = tmp_path / "twice.ptr"
        assert run("reverse", rev, "--all", "--out", twice) == 0
        from ptr import parse_task_spec

        original = parse_task_spec(spec_file.read_text())
        assert parse_task_spec(twice.read_text()) == original

    def test_reverse_requires_selection(self, spec_file, tmp_path):
        assert run("reverse", spec_file, "--out", tmp_path / "r.ptr") == 1

    def test_inspect_prints_table(self, spec_file, capsys):
        assert run("inspect", spec_file) == 0
        out = capsys.readouterr().out
        assert "template: <text> the [MASK] <subj>" in out
        assert "born_in" in out and "was born in" in out


class TestSweepCommand:
    def test_sweep_writes_csv(self, tmp_path):
        spec = tmp_path / "synth4.ptr"
        spec.write_text(bundled_spec_text("synth4"), encoding="utf-8")
        pool, test = tmp_path / "pool.jsonl", tmp_path / "test.jsonl"
        run("gen", "--spec", spec, "--n", 6, "--seed", 1, "--out", pool)
        run("gen", "--spec", spec, "--n", 3, "--seed", 2, "--out", test)
        out = tmp_path / "sweep.csv"
        code = run("sweep", "--spec", spec, "--data", pool, "--test", test,
                   "--k", 2, "--seeds", "1,2", "--methods", "ptr", "--out", out)
        assert code == 0
        lines = out.read_text().strip().split("\n")
        assert lines[0] == "method,2,Mean"
        assert lines[1].startswith("ptr,")
