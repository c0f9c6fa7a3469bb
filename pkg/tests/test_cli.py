"""Command-line interface: gen, encode, train, eval, sweep."""

import json
import os

import numpy as np
import pytest

from trajclust.cli import main
from trajclust.corpus import read_corpus
from trajclust.fisher import read_encoded
from trajclust.trainer import load_checkpoint

GEN_CONFIG = {
    "latent": {
        "num_appearance_classes": 4,
        "num_motion_classes": 4,
        "appearance_dim": 6,
        "motion_dim": 6,
        "trajectories_per_video": [10, 20],
        "seed": 3,
    },
    "num_videos": 40,
}

ENCODE_CONFIG = {
    "gmm_components": 3,
    "sketch_dim": 32,
    "fit_videos": 16,
    "fit_descriptors": 24,
    "seed": 2,
}

TRAIN_SECTION = {
    "schedule": "IR",
    "epochs": 2,
    "lr_drops": [],
    "batch_size": 16,
    "num_clusters": 4,
    "num_clusterings": 2,
    "background_k": 4,
    "hidden_width": 8,
    "embedding_dim": 8,
    "seed": 5,
}


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh)
    return str(path)


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """A directory with a generated corpus, an encoding, and a trained run."""
    ws = tmp_path_factory.mktemp("cli")
    gen_cfg = _write_json(ws / "gen.json", GEN_CONFIG)
    assert main(["gen", "--config", gen_cfg, "--out", str(ws)]) == 0

    enc_cfg = _write_json(ws / "enc.json", ENCODE_CONFIG)
    assert (
        main(
            [
                "encode",
                "--corpus",
                str(ws / "corpus.tjc"),
                "--config",
                enc_cfg,
                "--out",
                str(ws),
            ]
        )
        == 0
    )

    train_cfg = _write_json(
        ws / "train.json", {"corpus": "corpus.tjc", "train": TRAIN_SECTION}
    )
    train_dir = ws / "ir_run"
    train_dir.mkdir()
    assert (
        main(["train", "--config", train_cfg, "--out", str(train_dir)]) == 0
    )

    bags, _ = read_corpus(str(ws / "corpus.tjc"))
    app_counts = np.bincount([b.appearance_label for b in bags])
    mot_counts = np.bincount([b.motion_label for b in bags])
    assert min(app_counts.min(), mot_counts.min()) >= 3  # keeps eval shots feasible
    return ws


def test_gen_outputs_and_manifest(workspace):
    assert (workspace / "corpus.tjc").exists()
    manifest = json.loads((workspace / "gen_manifest.json").read_text())
    assert manifest["command"] == "gen"
    assert len(manifest["config_sha256"]) == 64
    assert manifest["outputs"]["corpus"].endswith("corpus.tjc")
    bags, raws = read_corpus(str(workspace / "corpus.tjc"))
    assert len(bags) == 40


def test_gen_is_deterministic_across_invocations(workspace, tmp_path):
    gen_cfg = _write_json(tmp_path / "gen.json", GEN_CONFIG)
    assert main(["gen", "--config", gen_cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "corpus.tjc").read_bytes() == (
        workspace / "corpus.tjc"
    ).read_bytes()


def test_gen_rejects_unknown_keys(tmp_path, capsys):
    cfg = _write_json(tmp_path / "gen.json", {"num_videos": 20, "videos": 3})
    assert main(["gen", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "unknown gen config keys" in capsys.readouterr().err


def test_missing_output_directory_fails_without_creating_it(tmp_path, capsys):
    cfg = _write_json(tmp_path / "gen.json", GEN_CONFIG)
    missing = tmp_path / "not_there"
    assert main(["gen", "--config", cfg, "--out", str(missing)]) == 1
    assert not missing.exists()
    assert "output directory does not exist" in capsys.readouterr().err


def test_encode_outputs(workspace):
    ids, vectors = read_encoded(str(workspace / "encoded.tjf"))
    assert ids.shape == (40,)
    assert vectors.shape == (40, 32)
    assert (workspace / "codebook.npz").exists()
    manifest = json.loads((workspace / "encode_manifest.json").read_text())
    assert manifest["inputs"]["corpus"].endswith("corpus.tjc")


def test_train_outputs(workspace):
    run = workspace / "ir_run"
    lines = (run / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2
    for epoch, line in enumerate(lines):
        rec = json.loads(line)
        assert rec["epoch"] == epoch
        assert rec["stage"] == "ir"
    state, cfg = load_checkpoint(str(run / "checkpoint.npz"))
    assert state.epoch == 2
    assert cfg.schedule == "IR"
    cluster_lines = (run / "clusters.tsv").read_text().splitlines()
    assert cluster_lines[0] == "video\trun\tcluster"
    assert len(cluster_lines) == 1 + 2 * 40
    assert (run / "train_manifest.json").exists()


def test_train_metrics_are_bit_identical_across_runs(workspace, tmp_path):
    train_cfg = _write_json(
        tmp_path / "train.json",
        {"corpus": str(workspace / "corpus.tjc"), "train": TRAIN_SECTION},
    )
    assert main(["train", "--config", train_cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "metrics.jsonl").read_bytes() == (
        workspace / "ir_run" / "metrics.jsonl"
    ).read_bytes()


def test_train_resume_from_a_finished_run_is_a_no_op(workspace, tmp_path):
    train_cfg = _write_json(
        tmp_path / "train.json",
        {"corpus": str(workspace / "corpus.tjc"), "train": TRAIN_SECTION},
    )
    ckpt = str(workspace / "ir_run" / "checkpoint.npz")
    assert (
        main(
            [
                "train",
                "--config",
                train_cfg,
                "--out",
                str(tmp_path),
                "--resume",
                ckpt,
            ]
        )
        == 0
    )
    assert (tmp_path / "metrics.jsonl").read_bytes() == (
        workspace / "ir_run" / "metrics.jsonl"
    ).read_bytes()


def test_train_la_idt_needs_an_encoding(workspace, tmp_path, capsys):
    section = dict(TRAIN_SECTION)
    section.update(
        {"schedule": "LA_IDT", "epochs": 5, "ir_pretrain_epochs": 1,
         "joint_finetune_epochs": 1}
    )
    cfg = _write_json(
        tmp_path / "train.json",
        {"corpus": str(workspace / "corpus.tjc"), "train": section},
    )
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "encoded" in capsys.readouterr().err


def test_train_la_idt_through_the_cli(workspace, tmp_path):
    section = dict(TRAIN_SECTION)
    section.update(
        {"schedule": "LA_IDT", "epochs": 5, "ir_pretrain_epochs": 1,
         "joint_finetune_epochs": 1}
    )
    cfg = _write_json(
        tmp_path / "train.json",
        {
            "corpus": str(workspace / "corpus.tjc"),
            "encoded": str(workspace / "encoded.tjf"),
            "train": section,
        },
    )
    assert main(["train", "--config", cfg, "--out", str(tmp_path)]) == 0
    stages = [
        json.loads(line)["stage"]
        for line in (tmp_path / "metrics.jsonl").read_text().splitlines()
    ]
    assert stages[0] == "ir"
    assert "la_prior" in stages
    assert stages[-1] == "la_joint"


def test_eval_outputs(workspace, tmp_path):
    ckpt = str(workspace / "ir_run" / "checkpoint.npz")
    assert (
        main(
            [
                "eval",
                "--ckpt",
                ckpt,
                "--corpus",
                str(workspace / "corpus.tjc"),
                "--shots",
                "1,2",
                "--episodes",
                "2",
                "--out",
                str(tmp_path),
            ]
        )
        == 0
    )
    records = [
        json.loads(line)
        for line in (tmp_path / "report.jsonl").read_text().splitlines()
    ]
    kinds = {}
    for rec in records:
        kinds.setdefault(rec["kind"], []).append(rec)
    assert len(kinds["probe"]) == 4  # two shot counts, two label sets
    assert len(kinds["clustering"]) == 2
    assert len(kinds["retrieval"]) == 2
    for rec in kinds["probe"]:
        assert 0.0 <= rec["accuracy"] <= 1.0
        assert len(rec["per_episode"]) == 2
    table = (tmp_path / "probe_table.tsv").read_text().splitlines()
    assert table[0] == "shots\tappearance_accuracy\tmotion_accuracy"
    assert len(table) == 3
    assert (tmp_path / "eval_manifest.json").exists()


def test_eval_is_deterministic(workspace, tmp_path):
    ckpt = str(workspace / "ir_run" / "checkpoint.npz")
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    out_a.mkdir()
    out_b.mkdir()
    args = [
        "eval", "--ckpt", ckpt, "--corpus", str(workspace / "corpus.tjc"),
        "--shots", "1", "--episodes", "2",
    ]
    assert main(args + ["--out", str(out_a)]) == 0
    assert main(args + ["--out", str(out_b)]) == 0
    assert (out_a / "report.jsonl").read_bytes() == (out_b / "report.jsonl").read_bytes()


def test_eval_missing_checkpoint(workspace, tmp_path, capsys):
    assert (
        main(
            [
                "eval",
                "--ckpt",
                str(tmp_path / "no_such.npz"),
                "--corpus",
                str(workspace / "corpus.tjc"),
                "--out",
                str(tmp_path),
            ]
        )
        == 1
    )
    assert capsys.readouterr().err != ""


def test_eval_rejects_bad_shots(workspace, tmp_path, capsys):
    ckpt = str(workspace / "ir_run" / "checkpoint.npz")
    assert (
        main(
            [
                "eval",
                "--ckpt",
                ckpt,
                "--corpus",
                str(workspace / "corpus.tjc"),
                "--shots",
                "0,-2",
                "--out",
                str(tmp_path),
            ]
        )
        == 1
    )
    assert "--shots" in capsys.readouterr().err


def test_sweep_grid_with_a_failing_cell(workspace, tmp_path):
    grid = {
        "base": {
            "corpus": str(workspace / "corpus.tjc"),
            "train": TRAIN_SECTION,
        },
        "num_clusters": [2],
        "num_clusterings": [1],
        "seeds": [0, -5],  # the negative seed fails config validation
        "eval_shots": 1,
        "eval_episodes": 2,
    }
    grid_path = _write_json(tmp_path / "grid.json", grid)
    assert main(["sweep", "--grid", grid_path, "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep.tsv").read_text().splitlines()
    assert rows[0].startswith("num_clusters\tnum_clusterings\tseed\tstatus")
    assert len(rows) == 3
    ok_row = rows[1].split("\t")
    assert ok_row[:4] == ["2", "1", "0", "ok"]
    bad_row = rows[2].split("\t")
    assert bad_row[2] == "-5"
    assert bad_row[3].startswith("error:")
    assert (tmp_path / "run_K2_m1_s0" / "metrics.jsonl").exists()
    assert (tmp_path / "sweep_manifest.json").exists()


def test_bad_log_level_is_a_config_error(workspace, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("TRAJCLUST_LOG", "shouty")
    cfg = _write_json(tmp_path / "gen.json", GEN_CONFIG)
    assert main(["gen", "--config", cfg, "--out", str(tmp_path)]) == 1
    assert "TRAJCLUST_LOG" in capsys.readouterr().err


def test_unknown_subcommand_exits_with_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
