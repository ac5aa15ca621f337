from __future__ import annotations

import json
from pathlib import Path

import pytest

from ambigeval.cli import main
from conftest import write_corpus
from test_pipeline import write_config


@pytest.fixture
def workdir(tmp_path, tiny_manifest):
    return {"tmp": tmp_path, "manifest": tiny_manifest}


class TestCorpusValidate:
    def test_ok(self, workdir, capsys):
        assert main(["corpus", "validate", str(workdir["manifest"])]) == 0
        out = capsys.readouterr().out
        assert "laws\ttrain=3\ttest=2" in out

    def test_error_exit_code(self, tmp_path, capsys):
        manifest = write_corpus(
            tmp_path, {"d": {"train": [("a.", "甲。", "")], "test": [("b.", "乙。")]}}
        )
        (tmp_path / "d" / "test.tgt").write_text("x。\ny。\n", encoding="utf-8")
        assert main(["corpus", "validate", str(manifest)]) == 1
        assert "mismatched line counts" in capsys.readouterr().err


def build_lexicons(workdir) -> Path:
    out = workdir["tmp"] / "lexicons"
    code = main(
        [
            "lexicon", "build", str(workdir["manifest"]),
            "--out", str(out), "--min-count", "2",
        ]
    )
    assert code == 0
    return out


def build_vocab(workdir) -> Path:
    lexicons = build_lexicons(workdir)
    out = workdir["tmp"] / "vocab"
    assert main(["ambiguity", "build", "--lexicons", str(lexicons), "--out", str(out)]) == 0
    return out


class TestLexiconAndAmbiguity:
    def test_lexicon_build(self, workdir):
        out = build_lexicons(workdir)
        assert (out / "laws.tsv").read_text(encoding="utf-8") == "laws\tpower\t权\t3\n"

    def test_ambiguity_build_annotate_stats(self, workdir, capsys):
        vocab_dir = build_vocab(workdir)
        annotations = workdir["tmp"] / "ann"
        annotations.mkdir()
        code = main(
            [
                "ambiguity", "annotate",
                "--vocab", str(vocab_dir / "laws.json"),
                "--test", f"{workdir['manifest']}:laws",
                "--out", str(annotations / "laws.jsonl"),
            ]
        )
        assert code == 0
        assert main(["ambiguity", "stats", str(annotations)]) == 0
        out = capsys.readouterr().out
        assert "laws\t3\t1\t2" in out


class TestAnnotateCli:
    def test_sample_with_manifest_fills_example_lines(self, workdir):
        lexicons = build_lexicons(workdir)
        items_path = workdir["tmp"] / "items.jsonl"
        assert main(
            [
                "annotate", "sample", "--lexicons", str(lexicons),
                "--size", "5", "--seed", "3",
                "--manifest", str(workdir["manifest"]),
                "--out", str(items_path),
            ]
        ) == 0
        from ambigeval.annotation import read_items

        items = read_items(items_path)
        laws_power = next(i for i in items if i.item_id == "laws:power:权")
        # "power" aligned to 权 appears in all three laws training sentences
        assert laws_power.example_lines == (1, 2, 3)

    def test_sample_and_accuracy(self, workdir, capsys):
        lexicons = build_lexicons(workdir)
        items_path = workdir["tmp"] / "items.jsonl"
        assert main(
            [
                "annotate", "sample", "--lexicons", str(lexicons),
                "--size", "5", "--seed", "3", "--out", str(items_path),
            ]
        ) == 0
        journal = workdir["tmp"] / "journal.jsonl"
        from ambigeval.annotation import JudgmentStore, read_items

        store = JudgmentStore(journal, read_items(items_path))
        for item in store.items():
            store.record_judgment(item.item_id, "correct", "a1")
        assert main(
            ["annotate", "accuracy", "--journal", str(journal), "--items", str(items_path)]
        ) == 0
        out = capsys.readouterr().out
        assert "laws\t100%\t0%\t0%" in out


class TestPromptsCli:
    def test_render_t1(self, capsys):
        code = main(
            [
                "prompts", "render", "--template", "T1",
                "--sentence", "Hello", "--target", "Chinese",
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "Please translate the following sentence into Chinese:\nHello" in out

    def test_render_t7_with_domain(self, capsys):
        code = main(
            [
                "prompts", "render", "--template", "T7", "--domain", "Laws",
                "--sentence", "The power.", "--target", "Chinese",
            ]
        )
        assert code == 0
        assert "according to the Laws domain" in capsys.readouterr().out

    def test_render_missing_field_fails(self, capsys):
        code = main(
            [
                "prompts", "render", "--template", "T5",
                "--sentence", "x", "--target", "Chinese",
            ]
        )
        assert code == 1
        assert "T5 requires domain" in capsys.readouterr().err

    def test_show_prints_checksum(self, capsys):
        assert main(["prompts", "show", "T2"]) == 0
        out = capsys.readouterr().out
        assert "catalog checksum: " in out
        assert "Step 1: read this sentence" in out


class TestRunScoreSignificanceReport:
    def run_template(self, workdir, template, out_name, dictionary=None):
        dict_path = workdir["tmp"] / "dict.json"
        dict_path.write_text(
            json.dumps(dictionary or {"power": "权力", "Power": "权力"}),
            encoding="utf-8",
        )
        out = workdir["tmp"] / out_name
        code = main(
            [
                "run", "--manifest", str(workdir["manifest"]),
                "--template", template, "--domain", "laws",
                "--backend", "mock", "--dictionary", str(dict_path),
                "--parallelism", "2", "--out", str(out),
            ]
        )
        assert code == 0
        return out

    def annotations_for_laws(self, workdir) -> Path:
        vocab_dir = build_vocab(workdir)
        path = workdir["tmp"] / "laws.ann.jsonl"
        main(
            [
                "ambiguity", "annotate", "--vocab", str(vocab_dir / "laws.json"),
                "--test", f"{workdir['manifest']}:laws", "--out", str(path),
            ]
        )
        return path

    def test_run_score_flow(self, workdir, capsys):
        run_path = self.run_template(workdir, "T1", "t1.jsonl")
        annotations = self.annotations_for_laws(workdir)
        scores = workdir["tmp"] / "scores.json"
        code = main(
            [
                "score", "--run", str(run_path), "--annotations", str(annotations),
                "--target-lang", "zh", "--mode", "lenient", "--out", str(scores),
            ]
        )
        assert code == 0
        payload = json.loads(scores.read_text(encoding="utf-8"))
        assert payload["disamb"] == {"m": 3, "n": 3, "accuracy": 1.0}

    def test_significance(self, workdir, capsys):
        run_a = self.run_template(workdir, "T1", "a.jsonl")
        run_b = self.run_template(
            workdir, "T1", "b.jsonl", dictionary={"power": "错", "Power": "错"}
        )
        code = main(
            [
                "significance", "--run-a", str(run_a), "--run-b", str(run_b),
                "--metric", "bleu", "--target-lang", "zh",
                "--resamples", "200", "--seed", "1",
            ]
        )
        assert code == 0
        assert "p=" in capsys.readouterr().out

    def test_report(self, workdir, capsys):
        annotations = self.annotations_for_laws(workdir)
        scores_dir = workdir["tmp"] / "scores"
        scores_dir.mkdir()
        for template in ("T1", "T5"):
            run_path = self.run_template(workdir, template, f"{template}.jsonl")
            main(
                [
                    "score", "--run", str(run_path), "--annotations", str(annotations),
                    "--target-lang", "zh", "--out",
                    str(scores_dir / f"{template}.laws.json"),
                ]
            )
        report_path = workdir["tmp"] / "report.md"
        code = main(
            [
                "report", "--scores", str(scores_dir), "--pairing", "default",
                "--format", "markdown", "--out", str(report_path),
            ]
        )
        assert code == 0
        text = report_path.read_text(encoding="utf-8")
        assert "| T5-T1 |" in text


class TestPipelineCli:
    def test_pipeline_all_ok_and_idempotent(self, workdir, capsys):
        config = write_config(
            workdir["tmp"] / "config.json", workdir["manifest"], workdir["tmp"] / "out"
        )
        assert main(["pipeline", "all", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "report\trun" in out
        assert main(["pipeline", "all", "--config", str(config)]) == 0
        out = capsys.readouterr().out
        assert "report\tskipped" in out

    def test_pipeline_validation_error(self, workdir, capsys):
        config = write_config(
            workdir["tmp"] / "config.json",
            workdir["tmp"] / "missing.json",
            workdir["tmp"] / "out",
        )
        assert main(["pipeline", "all", "--config", str(config)]) == 1
        assert "validation error" in capsys.readouterr().err

    def test_json_logs_flag(self, workdir, capsys, caplog):
        config = write_config(
            workdir["tmp"] / "config.json",
            workdir["manifest"],
            workdir["tmp"] / "out",
            templates=("T1",),
        )
        assert main(["--json-logs", "pipeline", "all", "--config", str(config)]) == 0
        root_handlers = __import__("logging").getLogger().handlers
        formatted = root_handlers[0].format(
            __import__("logging").LogRecord("x", 30, "f", 1, "hello %s", ("there",), None)
        )
        import json as json_module

        assert json_module.loads(formatted)["message"] == "hello there"

    def test_pipeline_stage_error_exit_2(self, tmp_path, capsys):
        manifest = write_corpus(
            tmp_path,
            {"solo": {"train": [("a power.", "权。", "1-0")], "test": [("b.", "乙。")]}},
        )
        config = write_config(tmp_path / "config.json", manifest, tmp_path / "out")
        assert main(["pipeline", "all", "--config", str(config)]) == 2
        assert "stage error" in capsys.readouterr().err
