"""Command-line front end: prior extraction, synthetic corpora, training, evaluation, reports.

Exit codes: 0 success, 2 parse/IO failure, 3 validation failure, 4 runtime failure.
Environment overrides: CTXREWARD_OUT (output root prefix), CTXREWARD_THREADS.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import rl
from .layouts import default_layouts
from .priors import (
    CompatibilityTable,
    compatibility_from_corpus,
    cooc_prior,
    embed_prior,
    intseq_prior,
    map_vocabulary,
    uniform_prior,
)
from .synthetic import SyntheticCorpusSpec, generate_corpus, kitchen_activity_spec
from .tasks import generate_episodes, load_episodes, save_episodes
from .vocab import EmbeddingTable, Vocabulary
from .world import build_action_space

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_path(path: str) -> Path:
    root = os.environ.get("CTXREWARD_OUT")
    p = Path(path)
    return Path(root) / p if root and not p.is_absolute() else p


def _load_vocab(path: str) -> Vocabulary:
    try:
        rec = json.loads(Path(path).read_text())
        return Vocabulary.build(rec["movable"], rec["fixed"])
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise CliError(f"cannot read vocabulary {path}: {exc}", EXIT_PARSE) from exc


# ---------------------------------------------------------------------------


def cmd_make_synthetic(args) -> int:
    if args.spec:
        try:
            spec = SyntheticCorpusSpec.from_json(Path(args.spec).read_text())
        except (OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
            raise CliError(f"bad corpus spec: {exc}", EXIT_PARSE) from exc
    else:
        spec = kitchen_activity_spec(noise_rate=args.noise)
    corpus = _out_path(args.out)
    corpus.parent.mkdir(parents=True, exist_ok=True)
    truth = generate_corpus(spec, args.seed, corpus)
    if args.truth:
        truth.save(_out_path(args.truth))
    print(f"wrote corpus {corpus}" + (f" and ground truth {args.truth}" if args.truth else ""))
    return EXIT_OK


def cmd_extract_priors(args) -> int:
    vocab = _load_vocab(args.vocab)
    if not Path(args.detections).exists():
        raise CliError(f"detections file {args.detections} not found", EXIT_PARSE)
    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    video_vocab = _load_vocab(args.video_vocab) if args.video_vocab else vocab
    table = compatibility_from_corpus(
        args.detections,
        video_vocab,
        iou_threshold=args.iou_threshold,
        confidence_threshold=args.confidence_threshold,
        strict=args.strict_pairs,
    )
    if args.video_embeddings and args.env_embeddings:
        table = map_vocabulary(
            table,
            EmbeddingTable.load(args.video_embeddings),
            vocab,
            EmbeddingTable.load(args.env_embeddings),
            similarity_threshold=args.similarity_threshold,
        )
    table.validate()
    table.save(out_dir / "aco.tsv")
    written = ["aco.tsv"]

    if args.uniform:
        uniform_prior(vocab).save(out_dir / "uniform.tsv")
        written.append("uniform.tsv")
    if args.embed:
        if not args.env_embeddings:
            raise CliError("--embed requires --env-embeddings", EXIT_VALIDATION)
        embed_prior(vocab, EmbeddingTable.load(args.env_embeddings)).save(out_dir / "embed.tsv")
        written.append("embed.tsv")
    if args.cooc:
        scenes = [json.loads(line) for line in Path(args.cooc).read_text().splitlines() if line.strip()]
        cooc_prior(scenes, vocab).save(out_dir / "cooc.tsv")
        written.append("cooc.tsv")
    if args.intseq:
        seqs = [
            [tuple(pair) for pair in json.loads(line)]
            for line in Path(args.intseq).read_text().splitlines()
            if line.strip()
        ]
        intseq_prior(seqs, vocab).save(out_dir / "intseq.tsv")
        written.append("intseq.tsv")
    print(f"wrote {', '.join(written)} to {out_dir}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _load_manifest(path: str) -> dict:
    try:
        manifest = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read manifest {path}: {exc}", EXIT_PARSE) from exc
    runs = manifest.get("runs", {})
    if not runs or len(set(runs)) != len(runs):
        raise CliError("manifest needs uniquely named runs", EXIT_VALIDATION)
    return manifest


def run_training(run_name: str, run: dict, force: bool = False) -> Path:
    """Execute one manifest run (all its seeds); returns the run directory."""
    layouts = default_layouts()
    mode = run.get("reward_mode", "vanilla")
    table = None
    if mode in ("aco", "aco_plus_nav"):
        prior = run.get("prior")
        if not prior or not Path(prior).exists():
            raise CliError(f"run {run_name}: reward mode {mode} needs an existing prior file", EXIT_VALIDATION)
        table = CompatibilityTable.load(prior)

    task = run["task"]
    train_scenes = run.get("train_scenes", ["kitchen_a", "kitchen_b", "kitchen_c"])
    test_scenes = run.get("test_scenes", ["kitchen_d", "kitchen_e"])
    horizon = int(run.get("horizon", 96))
    episode_seed = int(run.get("episode_seed", 1234))
    n_train = int(run.get("episodes_per_scene", 24))
    n_test = int(run.get("test_episodes_per_scene", 32))
    train_eps = generate_episodes([layouts[s] for s in train_scenes], task, n_train, episode_seed, horizon)
    eval_eps = generate_episodes([layouts[s] for s in test_scenes], task, n_test, episode_seed + 1, horizon)
    if not train_eps or not eval_eps:
        raise CliError(f"run {run_name}: no valid episodes for task {task}", EXIT_VALIDATION)

    out_dir = _out_path(run.get("out_dir", f"runs/{run_name}"))
    seeds = run.get("seeds", [0])
    for seed in seeds:
        config = rl.TrainConfig(
            task_id=task,
            reward_mode=mode,
            lambda_aux=float(run.get("lambda_aux", 1.0)),
            horizon=horizon,
            total_steps=int(run.get("total_steps", 200_000)),
            rollout_len=int(run.get("rollout_len", 96)),
            num_actors=int(run.get("num_actors", 8)),
            learning_rate=float(run.get("learning_rate", 2.5e-4)),
            entropy_coef=float(run.get("entropy_coef", 0.01)),
            eval_every=int(run.get("eval_every", 50_000)),
            seed=int(seed),
        )
        seed_dir = out_dir / f"seed{seed}"
        marker = seed_dir / "fingerprint.txt"
        if marker.exists():
            if marker.read_text().strip() == config.fingerprint() and not force:
                raise CliError(
                    f"{seed_dir} already holds fingerprint {config.fingerprint()}; use --force", EXIT_VALIDATION
                )
        seed_dir.mkdir(parents=True, exist_ok=True)

        result = rl.train(config, layouts, train_eps, eval_eps, table=table)
        rl.save_checkpoint(result, seed_dir / "checkpoint.pt")
        rate, records = rl.evaluate(result.policy, layouts, eval_eps)
        with open(seed_dir / "curve.csv", "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "task", "method", "seed", "success_rate"])
            for step, success in result.curve:
                writer.writerow([step, task, mode, seed, success])
        (seed_dir / "records.json").write_text(json.dumps(records, indent=2))
        (seed_dir / "run.json").write_text(
            json.dumps({"run": run_name, "config": run, "seed": seed, "final_success": rate}, indent=2)
        )
        marker.write_text(config.fingerprint() + "\n")
        save_episodes(eval_eps, seed_dir / "eval_episodes.jsonl")
        print(f"{run_name} seed {seed}: final success {rate:.3f}")
    return out_dir


def cmd_train(args) -> int:
    manifest = _load_manifest(args.manifest)
    runs = manifest["runs"]
    if args.run not in runs:
        raise CliError(f"run {args.run!r} not in manifest ({', '.join(runs)})", EXIT_VALIDATION)
    run_training(args.run, runs[args.run], force=args.force)
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        policy, blob = rl.load_checkpoint(args.checkpoint)
        episodes = load_episodes(args.episodes)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot load inputs: {exc}", EXIT_PARSE) from exc
    if not episodes:
        raise CliError("empty episode set", EXIT_VALIDATION)
    layouts = default_layouts()
    probe = layouts[episodes[0].scene]
    n_actions = len(build_action_space(probe))
    if n_actions != blob["n_actions"]:
        raise CliError(
            f"vocabulary mismatch: checkpoint has {blob['n_actions']} actions, world has {n_actions}",
            EXIT_VALIDATION,
        )
    rate, records = rl.evaluate(policy, layouts, episodes)
    by_task: dict[str, list] = {}
    for rec in records:
        by_task.setdefault(rec["task"], []).append(rec)
    report = {
        "overall": rate,
        "per_task": {t: sum(r["success"] for r in rs) / len(rs) for t, rs in by_task.items()},
    }
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps({"report": report, "records": records}, indent=2))
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_report(args) -> int:
    rows = []
    all_records: dict[str, list[dict]] = {}
    episode_keys = None
    for run_dir in args.run_dirs:
        for seed_dir in sorted(Path(run_dir).glob("seed*")):
            curve_file = seed_dir / "curve.csv"
            records_file = seed_dir / "records.json"
            if not curve_file.exists() or not records_file.exists():
                raise CliError(f"{seed_dir} is missing curve.csv or records.json", EXIT_PARSE)
            with open(curve_file) as f:
                rows.extend(list(csv.DictReader(f)))
            records = json.loads(records_file.read_text())
            keys = sorted((r["scene"], r["seed"]) for r in records)
            if episode_keys is None:
                episode_keys = keys
            elif keys != episode_keys:
                raise CliError(f"{seed_dir} evaluated a different episode set", EXIT_VALIDATION)
            method = rows[-1]["method"] if rows else "unknown"
            all_records.setdefault(method, []).extend(records)

    out_dir = _out_path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "curves.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["step", "task", "method", "seed", "success_rate"])
        writer.writeheader()
        writer.writerows(rows)
    with open(out_dir / "difficulty_bins.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "bin", "difficulty_lo", "difficulty_hi", "count", "success_rate"])
        for method, records in sorted(all_records.items()):
            for b in rl.difficulty_report(records):
                writer.writerow(
                    [method, b["bin"], b["difficulty_lo"], b["difficulty_hi"], b["count"], b["success_rate"]]
                )
    with open(out_dir / "summary.csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "episodes", "success_rate"])
        for method, records in sorted(all_records.items()):
            writer.writerow(
                [method, len(records), sum(r["success"] for r in records) / len(records)]
            )
    print(f"wrote curves.csv, difficulty_bins.csv, summary.csv to {out_dir}")
    return EXIT_OK


def cmd_make_episodes(args) -> int:
    layouts = default_layouts()
    missing = [s for s in args.scenes if s not in layouts]
    if missing:
        raise CliError(f"unknown scenes {missing}", EXIT_VALIDATION)
    episodes = generate_episodes(
        [layouts[s] for s in args.scenes], args.task, args.n_per_scene, args.seed, args.horizon
    )
    out = _out_path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_episodes(episodes, out)
    print(f"wrote {len(episodes)} episodes to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctxreward")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-synthetic", help="generate a synthetic detection corpus")
    p.add_argument("--spec", help="corpus spec JSON (defaults to the built-in kitchen activities)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0, help="detector noise rate for the built-in spec")
    p.add_argument("--out", required=True, help="corpus JSONL output path")
    p.add_argument("--truth", help="optional ground-truth table output path")
    p.set_defaults(func=cmd_make_synthetic)

    p = sub.add_parser("extract-priors", help="build compatibility tables from a detection corpus")
    p.add_argument("--detections", required=True)
    p.add_argument("--vocab", required=True, help="environment vocabulary JSON (movable/fixed lists)")
    p.add_argument("--video-vocab", help="video vocabulary JSON when it differs from the environment's")
    p.add_argument("--video-embeddings")
    p.add_argument("--env-embeddings")
    p.add_argument("--similarity-threshold", type=float, default=0.6)
    p.add_argument("--iou-threshold", type=float, default=0.5)
    p.add_argument("--confidence-threshold", type=float, default=0.5)
    p.add_argument("--strict-pairs", action="store_true", help="require both pair elements movable")
    p.add_argument("--uniform", action="store_true")
    p.add_argument("--embed", action="store_true")
    p.add_argument("--cooc", help="JSONL of per-scene co-located class lists")
    p.add_argument("--intseq", help="JSONL of per-video ordered (action, object) label pairs")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_extract_priors)

    p = sub.add_parser("make-episodes", help="generate a reproducible evaluation episode set")
    p.add_argument("--task", required=True)
    p.add_argument("--scenes", nargs="+", required=True)
    p.add_argument("--n-per-scene", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--horizon", type=int, default=96)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_episodes)

    p = sub.add_parser("train", help="run one named experiment from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--run", required=True)
    p.add_argument("--force", action="store_true", help="overwrite an existing identical run")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on an episode set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--episodes", required=True)
    p.add_argument("--out", default="eval_report.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("report", help="consolidate run directories into plot-ready tables")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", default="report")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:  # noqa: BLE001 - surface as runtime failure exit code
        log.exception("runtime failure")
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
