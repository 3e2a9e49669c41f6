import json
import os
from pathlib import Path

import numpy as np
import pytest

from ctxreward import cli
from ctxreward.priors import CompatibilityTable
from ctxreward.synthetic import kitchen_activity_spec
from ctxreward.vocab import EmbeddingTable


def run_cli(*argv):
    return cli.main(list(argv))


@pytest.fixture
def vocab_file(tmp_path):
    spec = kitchen_activity_spec()
    path = tmp_path / "vocab.json"
    path.write_text(
        json.dumps(
            {
                "movable": spec.vocabulary.movable_names(),
                "fixed": spec.vocabulary.fixed_names(),
            }
        )
    )
    return path


@pytest.fixture
def corpus_file(tmp_path):
    path = tmp_path / "corpus.jsonl"
    assert run_cli("make-synthetic", "--seed", "3", "--out", str(path)) == 0
    return path


# ---------------------------------------------------------------------------
# exit codes


def test_parse_error_exit_code(tmp_path):
    missing = tmp_path / "nope.jsonl"
    rc = run_cli("extract-priors", "--detections", str(missing),
                 "--vocab", str(missing), "--out", str(tmp_path / "out"))
    assert rc == cli.EXIT_PARSE


def test_validation_error_exit_code(tmp_path, vocab_file, corpus_file):
    rc = run_cli("extract-priors", "--detections", str(corpus_file),
                 "--vocab", str(vocab_file), "--embed", "--out", str(tmp_path / "out"))
    assert rc == cli.EXIT_VALIDATION  # --embed without --env-embeddings


def test_unknown_subcommand_raises_systemexit():
    with pytest.raises(SystemExit):
        run_cli("frobnicate")


# ---------------------------------------------------------------------------
# make-synthetic / extract-priors


def test_make_synthetic_with_truth(tmp_path):
    corpus = tmp_path / "c.jsonl"
    truth = tmp_path / "truth.tsv"
    assert run_cli("make-synthetic", "--seed", "5", "--out", str(corpus),
                   "--truth", str(truth)) == 0
    assert corpus.exists() and truth.exists()
    CompatibilityTable.load(truth).validate()


def test_make_synthetic_idempotent(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    run_cli("make-synthetic", "--seed", "5", "--out", str(a))
    run_cli("make-synthetic", "--seed", "5", "--out", str(b))
    assert a.read_text() == b.read_text()


def test_extract_priors_writes_tables(tmp_path, vocab_file, corpus_file):
    out = tmp_path / "priors"
    rc = run_cli("extract-priors", "--detections", str(corpus_file),
                 "--vocab", str(vocab_file), "--uniform", "--out", str(out))
    assert rc == 0
    CompatibilityTable.load(out / "aco.tsv").validate()
    CompatibilityTable.load(out / "uniform.tsv").validate()


def test_extract_priors_idempotent(tmp_path, vocab_file, corpus_file):
    out1, out2 = tmp_path / "p1", tmp_path / "p2"
    for out in (out1, out2):
        assert run_cli("extract-priors", "--detections", str(corpus_file),
                       "--vocab", str(vocab_file), "--out", str(out)) == 0
    assert (out1 / "aco.tsv").read_text() == (out2 / "aco.tsv").read_text()


def test_extract_priors_with_embeddings_and_ablations(tmp_path, vocab_file, corpus_file):
    spec = kitchen_activity_spec()
    names = [n for n in spec.vocabulary.names if n != "<null>"]
    vecs = {}
    rng = np.random.default_rng(0)
    for i, n in enumerate(names):
        v = np.zeros(len(names))
        v[i] = 1.0
        vecs[n] = v
    emb = tmp_path / "emb.txt"
    EmbeddingTable(vecs).save(emb)
    cooc = tmp_path / "cooc.jsonl"
    cooc.write_text(json.dumps(["mug", "sink_basin"]) + "\n")
    intseq = tmp_path / "intseq.jsonl"
    intseq.write_text(json.dumps([["take", "mug"], ["put", "sink_basin"]]) + "\n")
    out = tmp_path / "priors"
    rc = run_cli(
        "extract-priors", "--detections", str(corpus_file), "--vocab", str(vocab_file),
        "--video-embeddings", str(emb), "--env-embeddings", str(emb),
        "--embed", "--cooc", str(cooc), "--intseq", str(intseq), "--out", str(out),
    )
    assert rc == 0
    for name in ("aco", "embed", "cooc", "intseq"):
        CompatibilityTable.load(out / f"{name}.tsv").validate()


# ---------------------------------------------------------------------------
# episodes / train / eval / report


def test_make_episodes(tmp_path):
    out = tmp_path / "eps.jsonl"
    rc = run_cli("make-episodes", "--task", "cool", "--scenes", "kitchen_d",
                 "--n-per-scene", "4", "--seed", "2", "--out", str(out))
    assert rc == 0
    assert len(out.read_text().splitlines()) == 4
    rc = run_cli("make-episodes", "--task", "cool", "--scenes", "atlantis",
                 "--out", str(tmp_path / "x.jsonl"))
    assert rc == cli.EXIT_VALIDATION


@pytest.fixture
def manifest_file(tmp_path, vocab_file, corpus_file):
    priors = tmp_path / "priors"
    run_cli("extract-priors", "--detections", str(corpus_file),
            "--vocab", str(vocab_file), "--out", str(priors))
    manifest = {
        "runs": {
            "smoke": {
                "task": "clean",
                "reward_mode": "aco",
                "prior": str(priors / "aco.tsv"),
                "seeds": [0],
                "total_steps": 2000,
                "eval_every": 2000,
                "episodes_per_scene": 3,
                "test_episodes_per_scene": 3,
                "out_dir": str(tmp_path / "runs" / "smoke"),
            },
            "missing_prior": {
                "task": "clean",
                "reward_mode": "aco",
                "prior": str(tmp_path / "does_not_exist.tsv"),
                "out_dir": str(tmp_path / "runs" / "missing"),
            },
        }
    }
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(manifest))
    return path


def test_train_run_and_refuse_overwrite(tmp_path, manifest_file):
    rc = run_cli("train", "--manifest", str(manifest_file), "--run", "smoke")
    assert rc == 0
    run_dir = Path(json.loads(manifest_file.read_text())["runs"]["smoke"]["out_dir"]) / "seed0"
    assert (run_dir / "checkpoint.pt").exists()
    assert (run_dir / "curve.csv").exists()
    assert (run_dir / "fingerprint.txt").exists()
    # second identical invocation refuses without --force
    rc = run_cli("train", "--manifest", str(manifest_file), "--run", "smoke")
    assert rc == cli.EXIT_VALIDATION
    rc = run_cli("train", "--manifest", str(manifest_file), "--run", "smoke", "--force")
    assert rc == 0


def test_train_missing_prior_fails_fast(manifest_file):
    rc = run_cli("train", "--manifest", str(manifest_file), "--run", "missing_prior")
    assert rc == cli.EXIT_VALIDATION


def test_train_unknown_run(manifest_file):
    rc = run_cli("train", "--manifest", str(manifest_file), "--run", "nope")
    assert rc == cli.EXIT_VALIDATION


def test_eval_and_report(tmp_path, manifest_file):
    assert run_cli("train", "--manifest", str(manifest_file), "--run", "smoke") == 0
    run_dir = Path(json.loads(manifest_file.read_text())["runs"]["smoke"]["out_dir"])
    seed_dir = run_dir / "seed0"
    report = tmp_path / "eval.json"
    rc = run_cli("eval", "--checkpoint", str(seed_dir / "checkpoint.pt"),
                 "--episodes", str(seed_dir / "eval_episodes.jsonl"), "--out", str(report))
    assert rc == 0
    rec = json.loads(report.read_text())
    assert "overall" in rec["report"] and rec["records"]

    out = tmp_path / "report"
    rc = run_cli("report", str(run_dir), "--out", str(out))
    assert rc == 0
    for f in ("curves.csv", "difficulty_bins.csv", "summary.csv"):
        assert (out / f).exists()


def test_output_root_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CTXREWARD_OUT", str(tmp_path / "root"))
    assert run_cli("make-synthetic", "--seed", "1", "--out", "rel/corpus.jsonl") == 0
    assert (tmp_path / "root" / "rel" / "corpus.jsonl").exists()
