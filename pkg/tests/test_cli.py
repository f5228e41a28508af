import json
import subprocess
import sys

import pytest

from contentmodels.cli import main
from contentmodels.synth import PlantedSpec, generate_corpus, write_planted


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    planted = generate_corpus(PlantedSpec(n_docs=40, doc_length=(4, 6), seed=8))
    train, test = planted.split(30)
    paths = {f"train_{k}": v for k, v in write_planted(train, root, "train").items()}
    paths.update({f"test_{k}": v for k, v in write_planted(test, root, "test").items()})
    paths["root"] = root
    return paths


@pytest.fixture(scope="module")
def model(data):
    out = data["root"] / "model.json"
    assert main(["train", "--corpus", str(data["train_corpus"]), "--k", "6", "--T", "3", "--out", str(out)]) == 0
    return out


def _json(path):
    return json.loads(path.read_text())


def test_synth_writes_directory(tmp_path):
    out = tmp_path / "syn"
    assert main(["synth", "--n-docs", "5", "--states", "3", "--summary-states", "0", "--name", "s",
                 "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["manifest.json", "s.jsonl", "s.labels.jsonl", "s.pairs.jsonl", "s.summaries.jsonl"]
    assert _json(out / "manifest.json")["seed"] == 42


def test_synth_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("DRIFT_SEED", "5")
    assert main(["synth", "--n-docs", "3", "--out", str(tmp_path / "a")]) == 0
    monkeypatch.delenv("DRIFT_SEED")
    assert main(["synth", "--n-docs", "3", "--seed", "5", "--out", str(tmp_path / "b")]) == 0
    assert main(["synth", "--n-docs", "3", "--seed", "6", "--out", str(tmp_path / "c")]) == 0
    a, b, c = ((tmp_path / d / "corpus.jsonl").read_bytes() for d in "abc")
    assert a == b and a != c
    assert _json(tmp_path / "a" / "manifest.json")["seed"] == 5


def test_ingest(data, tmp_path, capsys):
    txt = tmp_path / "raw"
    txt.mkdir()
    (txt / "a.txt").write_text("A quake hit Peshawar on Tuesday. Dozens died.", encoding="utf-8")
    out = tmp_path / "cache.jsonl"
    assert main(["ingest", "--corpus", str(txt), "--out", str(out)]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["avg_doc_length_sentences"] == 2.0
    assert out.exists() and (tmp_path / "cache.manifest.json").exists()


def test_train_outputs(model):
    report = _json(model.with_name("model.report.json"))
    assert report["final_m"] == len(_json(model)["states"]) and "loglik" in report
    manifest = _json(model.with_name("model.manifest.json"))
    assert manifest["command"] == "train" and set(manifest["outputs"]) == {"model.json", "model.report.json"}
    assert "corpus" in manifest["inputs"]


def test_train_usage_error(data, tmp_path, capsys):
    code = main(["train", "--corpus", str(data["train_corpus"]), "--k", "1", "--out", str(tmp_path / "m.json")])
    assert code == 1
    assert "k must be ≥ 2" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert main(["train", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_input_is_data_error(tmp_path):
    assert main(["train", "--corpus", str(tmp_path / "missing.jsonl"), "--out", str(tmp_path / "m.json")]) == 2


def test_malformed_input_is_data_error(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{oops\n")
    assert main(["train", "--corpus", str(bad), "--out", str(tmp_path / "m.json")]) == 2


def test_order_eval_formats(data, model, tmp_path):
    args = ["order-eval", "--model", str(model), "--test", str(data["test_corpus"]),
            "--corpus", str(data["train_corpus"]), "--domain", "planted"]
    assert main(args + ["--report", str(tmp_path / "o.json")]) == 0
    doc = _json(tmp_path / "o.json")
    rows = doc["tables"]["ordering"]["rows"]
    assert [(r["domain"], r["system"]) for r in rows] == [("planted", "content"), ("planted", "bigram")]
    assert set(doc["documents"]) == {"planted/content", "planted/bigram"}
    assert main(args + ["--out", str(tmp_path / "o.csv"), "--format", "csv"]) == 0
    assert (tmp_path / "o.ordering.csv").read_text().startswith("domain,system,mean_rank,oso_pred_rate,mean_tau")
    assert (tmp_path / "o.rank_bins.csv").exists()
    assert main(args + ["--out", str(tmp_path / "o.txt"), "--format", "text"]) == 0
    assert "OSO pred." in (tmp_path / "o.txt").read_text()


def test_order_eval_needs_output(data, model):
    assert main(["order-eval", "--model", str(model), "--test", str(data["test_corpus"])]) == 1


def test_order_eval_bad_cap(data, model, tmp_path):
    assert main(["order-eval", "--model", str(model), "--test", str(data["test_corpus"]),
                 "--sample-size", "0", "--out", str(tmp_path / "x.json")]) == 1


def test_summarize_pipeline(data, model, tmp_path):
    summ = tmp_path / "summ.json"
    assert main(["summarize-train", "--model", str(model), "--corpus", str(data["train_corpus"]),
                 "--summaries", str(data["train_summaries"]), "--pairs", str(data["train_pairs"]),
                 "--out", str(summ)]) == 0
    assert _json(summ)["version"] == "summarymodel/1"
    out = tmp_path / "sums.json"
    assert main(["summarize", "--model", str(model), "--summarizer", str(summ), "--test", str(data["test_corpus"]),
                 "--summaries", str(data["test_summaries"]), "--pairs", str(data["test_pairs"]),
                 "--out", str(out)]) == 0
    outputs = _json(out)
    assert outputs and all(set(o) == {"doc_id", "indices", "sentences"} for o in outputs)
    report = _json(tmp_path / "sums.report.json")
    systems = [r["system"] for r in report["tables"]["summarization"]["rows"]]
    assert systems == ["content", "lead"]
    out2 = tmp_path / "fixed.json"
    assert main(["summarize", "--model", str(model), "--summarizer", str(summ), "--test", str(data["test_corpus"]),
                 "--ell", "2", "--out", str(out2)]) == 0
    assert all(len(o["indices"]) == 2 for o in _json(out2))
    assert not (tmp_path / "fixed.report.json").exists()


def test_summarize_usage_errors(data, model, tmp_path):
    base = ["summarize", "--model", str(model), "--summarizer", str(tmp_path / "none.json"),
            "--test", str(data["test_corpus"]), "--out", str(tmp_path / "s.json")]
    assert main(base + ["--ell", "0"]) == 1
    assert main(["summarize-train", "--model", str(model), "--corpus", str(data["train_corpus"]),
                 "--summaries", str(data["train_summaries"]), "--out", str(tmp_path / "x.json")]) == 1


def test_tune(data, tmp_path):
    out = tmp_path / "tune.json"
    assert main(["tune", "--corpus", str(data["train_corpus"]), "--dev", str(data["test_corpus"]),
                 "--k", "4", "6", "--T", "3", "--d1", "1e-4", "--d2", "0.01", "--out", str(out)]) == 0
    doc = _json(out)
    assert doc["best"]["k"] in (4, 6) and len(doc["cells"]) == 2


def test_size_sweep(data, tmp_path):
    out = tmp_path / "sweep.csv"
    assert main(["size-sweep", "--corpus", str(data["train_corpus"]), "--test", str(data["test_corpus"]),
                 "--sizes", "3", "5", "--k", "8", "--summaries", str(data["train_summaries"]),
                 "--pairs", str(data["train_pairs"]), "--test-summaries", str(data["test_summaries"]),
                 "--test-pairs", str(data["test_pairs"]), "--format", "csv", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "m,oso_pred_rate,extraction_accuracy" and len(lines) == 3
    assert main(["size-sweep", "--corpus", str(data["train_corpus"]), "--test", str(data["test_corpus"]),
                 "--sizes", "1", "--out", str(out)]) == 1


def test_learning_curve(data, tmp_path):
    out = tmp_path / "lc.json"
    assert main(["learning-curve", "--corpus", str(data["train_corpus"]), "--test", str(data["test_corpus"]),
                 "--sizes", "10", "30", "--k", "6", "--T", "3", "--out", str(out)]) == 0
    rows = _json(out)["tables"]["learning_curve"]["rows"]
    assert [r["train_size"] for r in rows] == [10, 30]
    assert main(["learning-curve", "--corpus", str(data["train_corpus"]), "--test", str(data["test_corpus"]),
                 "--sizes", "99", "--out", str(out)]) == 1


def test_reruns_are_byte_identical(data, tmp_path):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run / "m.json"
        assert main(["train", "--corpus", str(data["train_corpus"]), "--k", "6", "--T", "3", "--out", str(out)]) == 0
        rep = tmp_path / run / "o.json"
        assert main(["order-eval", "--model", str(out), "--test", str(data["test_corpus"]),
                     "--out", str(rep)]) == 0
        outputs.append((out.read_bytes(), rep.read_bytes()))
    assert outputs[0] == outputs[1]


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "contentmodels.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "contentmodels" in proc.stdout
