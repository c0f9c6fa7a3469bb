"""Command-line pipeline: gen, encode, train, eval, sweep.

Every command requires an existing output directory (nothing is auto-created),
writes all files atomically via temp-then-rename, and finishes by writing a
run manifest. Exit status is 0 exactly when the command's outputs were
produced. The only environment variable read is TRAJCLUST_LOG (quiet, info,
or debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import fields

import numpy as np

from . import __version__
from .corpus import LatentSpec, generate_corpus, read_corpus, write_corpus
from .clustering import export_assignments, kmeans
from .encoder import forward
from .errors import CompatibilityError, ConfigError, TrajclustError
from .evaluate import clustering_metrics, linear_probe, retrieval_accuracy
from .fisher import (
    CodebookConfig,
    encode_corpus,
    fit_codebook,
    read_encoded,
    save_codebook,
    write_encoded,
)
from .trainer import (
    TrainConfig,
    load_checkpoint,
    resume_training,
    run_training,
    training_data_from_corpus,
)
from .util import atomic_write_text, config_hash, derive_seed

log = logging.getLogger("trajclust")

_EVAL_STREAM = 61


def _setup_logging() -> None:
    level = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    name = os.environ.get("TRAJCLUST_LOG", "info").lower()
    if name not in level:
        raise ConfigError(f"TRAJCLUST_LOG must be one of {sorted(level)}")
    logging.basicConfig(level=level[name], format="%(levelname)s %(message)s")


def _require_out_dir(path: str) -> str:
    if not os.path.isdir(path):
        raise ConfigError(f"output directory does not exist: {path}")
    return path


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _resolve(base_config_path: str, maybe_relative: str) -> str:
    if os.path.isabs(maybe_relative):
        return maybe_relative
    return os.path.normpath(
        os.path.join(os.path.dirname(os.path.abspath(base_config_path)), maybe_relative)
    )


def _from_known_fields(cls, d: dict, what: str):
    known = {f.name for f in fields(cls)}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    return cls(**d)


def _build_latent(d: dict) -> LatentSpec:
    d = dict(d)
    if "trajectories_per_video" in d:
        d["trajectories_per_video"] = tuple(d["trajectories_per_video"])
    return _from_known_fields(LatentSpec, d, "latent spec")


def _write_manifest(
    out_dir: str,
    command: str,
    config_path: str | None,
    config_obj,
    inputs: dict,
    outputs: dict,
    started: float,
) -> None:
    manifest = {
        "command": command,
        "config_path": config_path,
        "config_sha256": config_hash(config_obj),
        "inputs": inputs,
        "outputs": outputs,
        "version": __version__,
        "duration_seconds": time.time() - started,
    }
    atomic_write_text(
        os.path.join(out_dir, f"{command}_manifest.json"),
        json.dumps(manifest, indent=2) + "\n",
    )


def cmd_gen(args) -> int:
    started = time.time()
    out = _require_out_dir(args.out)
    cfg = _load_json(args.config)
    unknown = set(cfg) - {"latent", "num_videos"}
    if unknown:
        raise ConfigError(f"unknown gen config keys: {sorted(unknown)}")
    spec = _build_latent(cfg.get("latent", {}))
    num_videos = int(cfg.get("num_videos", 512))
    bags, raws = generate_corpus(spec, num_videos)
    corpus_path = os.path.join(out, "corpus.tjc")
    write_corpus(corpus_path, bags, raws)
    log.info("gen: wrote %d videos to %s", num_videos, corpus_path)
    _write_manifest(
        out, "gen", args.config, cfg, {}, {"corpus": corpus_path}, started
    )
    return 0


def cmd_encode(args) -> int:
    started = time.time()
    out = _require_out_dir(args.out)
    raw_cfg = _load_json(args.config) if args.config else {}
    codebook_cfg = _from_known_fields(CodebookConfig, raw_cfg, "codebook config")
    bags, _ = read_corpus(args.corpus)
    codebook = fit_codebook(bags, codebook_cfg)
    vectors = encode_corpus(bags, codebook)
    codebook_path = os.path.join(out, "codebook.npz")
    encoded_path = os.path.join(out, "encoded.tjf")
    save_codebook(codebook_path, codebook)
    ids = np.array([b.video_id for b in bags], dtype=np.int64)
    write_encoded(encoded_path, ids, vectors)
    log.info(
        "encode: %d videos -> %d-dim sketched Fisher vectors", len(bags), vectors.shape[1]
    )
    _write_manifest(
        out,
        "encode",
        args.config,
        raw_cfg,
        {"corpus": args.corpus},
        {"codebook": codebook_path, "encoded": encoded_path},
        started,
    )
    return 0


def _load_train_setup(args):
    raw_cfg = _load_json(args.config)
    unknown = set(raw_cfg) - {"corpus", "encoded", "train"}
    if unknown:
        raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
    corpus_path = args.corpus or raw_cfg.get("corpus")
    if corpus_path is None:
        raise ConfigError("no corpus given (config 'corpus' or --corpus)")
    if args.corpus is None and not os.path.isabs(corpus_path):
        corpus_path = _resolve(args.config, corpus_path)
    encoded_path = args.encoded or raw_cfg.get("encoded")
    if args.encoded is None and encoded_path and not os.path.isabs(encoded_path):
        encoded_path = _resolve(args.config, encoded_path)
    cfg = TrainConfig.from_dict(raw_cfg.get("train", {}))
    cfg.validate()

    bags, raws = read_corpus(corpus_path)
    data = training_data_from_corpus(bags, raws)
    prior = None
    if cfg.schedule == "LA_IDT":
        if not encoded_path:
            raise ConfigError("LA_IDT needs an encoded corpus ('encoded' or --encoded)")
        ids, vectors = read_encoded(encoded_path)
        bag_ids = np.array([b.video_id for b in bags], dtype=np.int64)
        if ids.shape[0] != bag_ids.shape[0] or not np.array_equal(ids, bag_ids):
            raise CompatibilityError("encoded corpus does not match the corpus file")
        prior = vectors.astype(np.float64)
    return raw_cfg, cfg, data, prior, corpus_path, encoded_path


def cmd_train(args) -> int:
    started = time.time()
    out = _require_out_dir(args.out)
    raw_cfg, cfg, data, prior, corpus_path, encoded_path = _load_train_setup(args)
    if args.resume:
        artifacts = resume_training(
            data, cfg, args.resume, prior_points=prior, checkpoint_dir=out
        )
    else:
        artifacts = run_training(data, cfg, prior_points=prior, checkpoint_dir=out)

    metrics_path = os.path.join(out, "metrics.jsonl")
    atomic_write_text(
        metrics_path,
        "".join(json.dumps(rec) + "\n" for rec in artifacts.metrics),
    )
    clusters_path = os.path.join(out, "clusters.tsv")
    export_assignments(artifacts.final_clusters, clusters_path)
    if artifacts.metrics:
        last = artifacts.metrics[-1]
        log.info(
            "train: %s finished at epoch %d, loss %.4f, nmi(motion) %.3f, nmi(appearance) %.3f",
            cfg.schedule, last["epoch"], last["loss"],
            last["nmi_motion"], last["nmi_appearance"],
        )
    _write_manifest(
        out,
        "train",
        args.config,
        {"config": raw_cfg, "train": cfg.to_dict()},
        {"corpus": corpus_path, "encoded": encoded_path, "resume": args.resume},
        {
            "checkpoint": os.path.join(out, "checkpoint.npz"),
            "metrics": metrics_path,
            "clusters": clusters_path,
        },
        started,
    )
    return 0


def cmd_eval(args) -> int:
    started = time.time()
    out = _require_out_dir(args.out)
    shots = [int(s) for s in args.shots.split(",") if s.strip()]
    if not shots or any(s < 1 for s in shots):
        raise ConfigError("--shots must be a comma-separated list of positive ints")
    state, cfg = load_checkpoint(args.ckpt)
    bags, raws = read_corpus(args.corpus)
    data = training_data_from_corpus(bags, raws)
    if data.features.shape[1] != state.params.input_dim:
        raise CompatibilityError(
            f"checkpoint expects {state.params.input_dim}-dim features, "
            f"corpus has {data.features.shape[1]}"
        )
    embeddings = forward(state.params, data.features)
    label_sets = {
        "appearance": data.appearance_labels,
        "motion": data.motion_labels,
    }
    records = []
    probe_rows = {}
    for name, labels in label_sets.items():
        for shot in shots:
            report = linear_probe(
                embeddings, labels, shot,
                episodes=args.episodes,
                seed=derive_seed(cfg.seed, _EVAL_STREAM),
            )
            records.append(
                {
                    "kind": "probe",
                    "label_set": name,
                    "shots": shot,
                    "accuracy": report.accuracy,
                    "episodes": report.episodes,
                    "per_episode": report.per_episode.tolist(),
                }
            )
            probe_rows[(shot, name)] = report.accuracy
        k_eff = min(cfg.num_clusters, embeddings.shape[0])
        assignment = kmeans(
            embeddings, k_eff, seed=derive_seed(cfg.seed, _EVAL_STREAM, 1)
        ).assignment
        nmi, purity = clustering_metrics(assignment, labels)
        records.append(
            {"kind": "clustering", "label_set": name, "nmi": nmi, "purity": purity}
        )
        records.append(
            {
                "kind": "retrieval",
                "label_set": name,
                "accuracy": retrieval_accuracy(embeddings, labels),
            }
        )

    report_path = os.path.join(out, "report.jsonl")
    atomic_write_text(
        report_path, "".join(json.dumps(r) + "\n" for r in records)
    )
    table_path = os.path.join(out, "probe_table.tsv")
    lines = ["shots\tappearance_accuracy\tmotion_accuracy"]
    for shot in shots:
        lines.append(
            f"{shot}\t{probe_rows[(shot, 'appearance')]:.6f}"
            f"\t{probe_rows[(shot, 'motion')]:.6f}"
        )
    atomic_write_text(table_path, "\n".join(lines) + "\n")
    log.info("eval: wrote %s and %s", report_path, table_path)
    _write_manifest(
        out,
        "eval",
        None,
        {"shots": shots, "episodes": args.episodes},
        {"checkpoint": args.ckpt, "corpus": args.corpus},
        {"report": report_path, "probe_table": table_path},
        started,
    )
    return 0


def cmd_sweep(args) -> int:
    started = time.time()
    out = _require_out_dir(args.out)
    grid = _load_json(args.grid)
    unknown = set(grid) - {
        "base", "num_clusters", "num_clusterings", "seeds",
        "eval_shots", "eval_episodes",
    }
    if unknown:
        raise ConfigError(f"unknown sweep grid keys: {sorted(unknown)}")
    base = grid.get("base", {})
    unknown_base = set(base) - {"corpus", "encoded", "train"}
    if unknown_base:
        raise ConfigError(f"unknown sweep base keys: {sorted(unknown_base)}")
    corpus_path = base.get("corpus")
    if corpus_path is None:
        raise ConfigError("sweep base needs a 'corpus' path")
    corpus_path = _resolve(args.grid, corpus_path)
    encoded_path = base.get("encoded")
    if encoded_path:
        encoded_path = _resolve(args.grid, encoded_path)
    base_train = base.get("train", {})
    ks = [int(k) for k in grid.get("num_clusters", [TrainConfig().num_clusters])]
    ms = [int(m) for m in grid.get("num_clusterings", [TrainConfig().num_clusterings])]
    seeds = [int(s) for s in grid.get("seeds", [TrainConfig().seed])]
    eval_shots = int(grid.get("eval_shots", 5))
    eval_episodes = int(grid.get("eval_episodes", 10))

    bags, raws = read_corpus(corpus_path)
    data = training_data_from_corpus(bags, raws)
    prior = None
    if encoded_path:
        ids, vectors = read_encoded(encoded_path)
        prior = vectors.astype(np.float64)

    rows = []
    for k in ks:
        for m in ms:
            for seed in seeds:
                cell = dict(base_train)
                cell.update({"num_clusters": k, "num_clusterings": m, "seed": seed})
                run_dir = os.path.join(out, f"run_K{k}_m{m}_s{seed}")
                os.makedirs(run_dir, exist_ok=True)
                try:
                    cfg = TrainConfig.from_dict(cell)
                    cfg.validate()
                    artifacts = run_training(
                        data, cfg, prior_points=prior, checkpoint_dir=run_dir
                    )
                    atomic_write_text(
                        os.path.join(run_dir, "metrics.jsonl"),
                        "".join(json.dumps(r) + "\n" for r in artifacts.metrics),
                    )
                    emb = forward(artifacts.params, data.features)
                    probe_seed = derive_seed(cfg.seed, _EVAL_STREAM)
                    acc_app = linear_probe(
                        emb, data.appearance_labels, eval_shots,
                        episodes=eval_episodes, seed=probe_seed,
                    ).accuracy
                    acc_mot = linear_probe(
                        emb, data.motion_labels, eval_shots,
                        episodes=eval_episodes, seed=probe_seed,
                    ).accuracy
                    last = artifacts.metrics[-1]
                    rows.append(
                        (k, m, seed, "ok", last["loss"], last["nmi_motion"],
                         last["nmi_appearance"], acc_app, acc_mot)
                    )
                    log.info("sweep: K=%d m=%d seed=%d done", k, m, seed)
                except TrajclustError as exc:
                    rows.append((k, m, seed, f"error: {exc}", "", "", "", "", ""))
                    log.warning("sweep: K=%d m=%d seed=%d failed: %s", k, m, seed, exc)

    table_path = os.path.join(out, "sweep.tsv")
    lines = [
        "num_clusters\tnum_clusterings\tseed\tstatus\tfinal_loss"
        "\tnmi_motion\tnmi_appearance\tprobe_appearance\tprobe_motion"
    ]
    for row in rows:
        lines.append("\t".join(str(v) for v in row))
    atomic_write_text(table_path, "\n".join(lines) + "\n")
    _write_manifest(
        out,
        "sweep",
        args.grid,
        grid,
        {"corpus": corpus_path, "encoded": encoded_path},
        {"table": table_path},
        started,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trajclust",
        description="Desk-scale unsupervised video-representation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic corpus")
    p.add_argument("--config", required=True, help="JSON with latent spec and num_videos")
    p.add_argument("--out", required=True, help="existing output directory")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("encode", help="fit a codebook and encode a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config", default=None, help="JSON codebook config (optional)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train an encoder against the memory bank")
    p.add_argument("--config", required=True, help="JSON train config")
    p.add_argument("--out", required=True)
    p.add_argument("--corpus", default=None, help="override corpus path")
    p.add_argument("--encoded", default=None, help="override encoded-corpus path")
    p.add_argument("--resume", default=None, help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="probe, clustering, and retrieval reports")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--shots", default="1,5,10", help="comma-separated shot counts")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train+eval over a (K, m, seed) grid")
    p.add_argument("--grid", required=True, help="JSON sweep grid")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _setup_logging()
        return args.func(args)
    except TrajclustError as exc:
        print(f"trajclust {args.command}: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"trajclust {args.command}: missing file: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
