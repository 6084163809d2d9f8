import json

import pytest

from clinrel.cli import main
from clinrel.corpus import load_corpus, write_document
from clinrel.model import load_bundle
from clinrel.schema import builtin_schema
from clinrel.synthetic import separable_corpus

TRAIN = ["--learning-rate", "1e-3", "--encoder", "reference:hidden=16,layers=1,heads=2",
         "--max-csd", "2", "--max-len", "96"]


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    for d in separable_corpus(builtin_schema("n2c2"), 60, seed=13, max_csd=2):
        write_document(d, root)
    return root


@pytest.fixture(scope="module")
def bundle_dir(corpus_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "bundle"
    assert main(["train", "--corpus", str(corpus_dir), "--bundle", str(out), *TRAIN]) == 0
    return out


def test_candidates_table_matches_dump(corpus_dir, tmp_path, capsys):
    out = tmp_path / "c.jsonl"
    assert main(["candidates", "--corpus", str(corpus_dir), "--output", str(out),
                 "--max-csd", "2"]) == 0
    table = capsys.readouterr().out.splitlines()
    n_lines = len(out.read_text().splitlines())
    rows = [line.split("\t") for line in table if line.split("\t")[0].isdigit()]
    assert sum(int(r[3]) for r in rows) == n_lines
    assert sum(int(r[1]) + int(r[2]) for r in rows) == n_lines
    assert table[0] == f"notes\t{len(load_corpus(corpus_dir))}"
    assert (tmp_path / "provenance.txt").exists()


def test_empty_corpus_exits_2(tmp_path, capsys):
    assert main(["candidates", "--corpus", str(tmp_path), "--output",
                 str(tmp_path / "c.jsonl")]) == 2
    assert "DataError" in capsys.readouterr().err


def test_usage_errors_exit_1(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        main(["nonsense"])
    assert err.value.code == 1
    assert main(["candidates", "--corpus", str(tmp_path), "--set", "bogus=1"]) == 1


def test_invalid_batch_size(corpus_dir, tmp_path):
    args = ["train", "--corpus", str(corpus_dir), "--bundle", str(tmp_path / "b"), *TRAIN]
    assert main(args + ["--batch-size", "5"]) == 1


def test_train_writes_loadable_bundle(bundle_dir, corpus_dir, tmp_path):
    bundle = load_bundle(bundle_dir)
    assert list(bundle.groups) == ["ALL"]
    manifest = (bundle_dir / "manifest.txt").read_text()
    again = tmp_path / "again"
    assert main(["train", "--corpus", str(corpus_dir), "--bundle", str(again), *TRAIN]) == 0
    assert (again / "manifest.txt").read_text() == manifest
    assert "seed = 13" in (bundle_dir / "provenance.txt").read_text()


def test_train_with_cv(corpus_dir, tmp_path):
    out = tmp_path / "b"
    assert main(["train", "--corpus", str(corpus_dir), "--bundle", str(out), *TRAIN, "--cv",
                 "--set", "grid_epochs=3,4", "--set", "grid_batch_size=16"]) == 0
    assert len((out / "cv_results.tsv").read_text().splitlines()) == 3


def test_predict_and_evaluate(bundle_dir, corpus_dir, tmp_path, capsys):
    pred = tmp_path / "pred"
    assert main(["predict", "--corpus", str(corpus_dir), "--bundle", str(bundle_dir),
                 "--output", str(pred)]) == 0
    assert (pred / "scores.tsv").exists()
    assert len(list(pred.glob("*.ann"))) == len(list(corpus_dir.glob("*.ann")))
    capsys.readouterr()
    assert main(["evaluate", str(corpus_dir), str(pred), "--output", str(tmp_path / "ev")]) == 0
    rows = [json.loads(x) for x in (tmp_path / "ev" / "report.jsonl").read_text().splitlines()]
    assert rows[-1]["category"] == "OVERALL"


def test_predict_missing_group(corpus_dir, tmp_path, capsys):
    bundle = tmp_path / "ds"
    args = ["--corpus", str(corpus_dir), *TRAIN[:-4], "--max-len", "96"]
    assert main(["train", "--bundle", str(bundle), "--regime", "DISTANCE-SPECIFIC",
                 "--max-csd", "1", *args]) == 0
    capsys.readouterr()
    assert main(["predict", "--bundle", str(bundle), "--output", str(tmp_path / "p"),
                 "--max-csd", "2", *args]) == 3
    assert "csd=2" in capsys.readouterr().err


def test_evaluate_perfect_copy(corpus_dir, tmp_path, capsys):
    assert main(["evaluate", str(corpus_dir), str(corpus_dir), "--output",
                 str(tmp_path / "ev")]) == 0
    overall = json.loads((tmp_path / "ev" / "report.jsonl").read_text().splitlines()[-1])
    assert overall["f1"] == 1.0


def test_evaluate_missing_file_counts_as_misses(corpus_dir, tmp_path):
    docs = load_corpus(corpus_dir)
    pred = tmp_path / "pred"
    for d in docs[1:]:
        write_document(d, pred)
    assert main(["evaluate", str(corpus_dir), str(pred), "--output", str(tmp_path / "ev")]) == 0
    overall = json.loads((tmp_path / "ev" / "report.jsonl").read_text().splitlines()[-1])
    assert overall["fn"] == len(docs[0].gold_relations) and overall["fp"] == 0


def test_evaluate_entity_mismatch(corpus_dir, tmp_path, capsys):
    docs = load_corpus(corpus_dir)
    pred = tmp_path / "pred"
    pred.mkdir()
    (pred / f"{docs[0].doc_id}.ann").write_text("R1\tADE-Drug Arg1:T99 Arg2:T1\n")
    assert main(["evaluate", str(corpus_dir), str(pred)]) == 2
    assert docs[0].doc_id in capsys.readouterr().err


def _experiment(corpus_dir, out, *grid):
    return main(["experiment", "--train-dir", str(corpus_dir), "--output", str(out), *TRAIN,
                 *[x for g in grid for x in ("--set", g)]])


def test_experiment_grid_and_resume(corpus_dir, tmp_path):
    out = tmp_path / "exp"
    grid = ("grid_strategy=binary,multi-class", "grid_regime=UNIFIED,DISTANCE-SPECIFIC")
    # a completed cell already in the ledger must not be recomputed
    out.mkdir()
    done = {"cell": "strategy=binary|scheme=3|regime=UNIFIED|max_csd=2", "status": "ok",
            "strategy": "binary", "scheme": "3", "regime": "UNIFIED", "max_csd": "2",
            "precision": 0.123, "recall": 0.456, "f1": 0.789, "tp": 0, "fp": 0, "fn": 0}
    (out / "cells.jsonl").write_text(json.dumps(done) + "\n")
    assert _experiment(corpus_dir, out, *grid) == 0
    rows = (out / "results.tsv").read_text().splitlines()[1:]
    assert len(rows) == 4
    assert "0.7890" in rows[0]
    assert len((out / "cells.jsonl").read_text().splitlines()) == 4
    first = (out / "results.tsv").read_text()
    assert _experiment(corpus_dir, out, *grid) == 0
    assert (out / "results.tsv").read_text() == first


def test_experiment_schemes(corpus_dir, tmp_path):
    out = tmp_path / "exp"
    assert _experiment(corpus_dir, out, "grid_scheme=1,2,3,4") == 0
    rows = [r.split("\t") for r in (out / "results.tsv").read_text().splitlines()[1:]]
    assert [r[1] for r in rows] == ["1", "2", "3", "4"]
    assert all(r[-1] == "ok" for r in rows)


def test_experiment_error_cells_are_tagged(corpus_dir, tmp_path):
    out = tmp_path / "exp"
    # the corpus has no pairs beyond csd 2, so distance-specific cells at max_csd 6
    # hit empty strata, which this policy refuses
    assert _experiment(corpus_dir, out, "grid_regime=UNIFIED,DISTANCE-SPECIFIC",
                       "grid_max_csd=2,6", "empty_stratum=error") == 0
    recs = [json.loads(x) for x in (out / "cells.jsonl").read_text().splitlines()]
    assert {r["status"] for r in recs} == {"ok", "error"}
    assert any("EmptyStratum" in r.get("error", "") for r in recs)


def test_schema_command(capsys):
    assert main(["schema", "made1.0"]) == 0
    assert "categories: 7" in capsys.readouterr().out
