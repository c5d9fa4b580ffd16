"""End-to-end command-line pipeline on a tiny dataset."""

import json

import numpy as np
import pytest

from prefalign.cli import main
from prefalign.content import store_open

from synthetic import make_cluster_data
from prefalign.data import save_catalog, save_interactions


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = make_cluster_data(n_users=16, n_items=64, n_clusters=4, seed=2)
    save_catalog(root / "catalog.tsv", data.catalog)
    save_interactions(root / "interactions.tsv", data.eval_sequences)
    return root


def run(*argv):
    return main([str(a) for a in argv])


def test_embed_pseudo_writes_expected_header(workdir):
    out = workdir / "pseudo.lneb"
    assert run("embed-pseudo", "--catalog", workdir / "catalog.tsv", "--dim", 16, "--out", out) == 0
    provider = store_open(out)
    assert provider.dim == 16
    assert len(provider.item_ids()) == 64


def test_embed_pseudo_deterministic_bytes(workdir):
    a, b = workdir / "a.lneb", workdir / "b.lneb"
    run("embed-pseudo", "--catalog", workdir / "catalog.tsv", "--dim", 8, "--out", a)
    run("embed-pseudo", "--catalog", workdir / "catalog.tsv", "--dim", 8, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_embed_pseudo_missing_catalog_exits_3(workdir, capsys):
    code = run("embed-pseudo", "--catalog", workdir / "nope.tsv", "--dim", 8, "--out", workdir / "x.lneb")
    assert code == 3
    assert capsys.readouterr().err != ""


@pytest.fixture(scope="module")
def trained(workdir):
    run("embed-pseudo", "--catalog", workdir / "catalog.tsv", "--dim", 16, "--out", workdir / "emb.lneb")
    out_dir = workdir / "run1"
    code = main([
        "train",
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"),
        "--out-dir", str(out_dir),
        "--d-model", "32", "--n-layers", "1", "--n-heads", "2", "--d-out", "16",
        "--max-len", "32", "--max-hist", "16", "--max-tar", "8",
        "--n-hist", "4", "--n-tar", "3",
        "--epochs", "2", "--batch-size", "8", "--seed", "3",
    ])
    assert code == 0
    return out_dir


def test_train_writes_artifacts(trained):
    assert (trained / "model.lnck").exists()
    assert (trained / "run_config.json").exists()
    lines = (trained / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2
    assert {"epoch", "loss", "lr"} <= set(json.loads(lines[0]))


def test_run_config_persists_resolved_values(trained):
    cfg = json.loads((trained / "run_config.json").read_text())
    assert cfg["model"]["d_model"] == 32
    assert cfg["sampling"]["n_hist"] == 4
    assert cfg["seed"] == 3


def test_eval_writes_report(workdir, trained):
    report_path = workdir / "report.json"
    code = main([
        "eval", "--checkpoint", str(trained / "model.lnck"),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"),
        "--protocol", "leave_one_out", "--k", "5,10",
        "--out", str(report_path),
    ])
    assert code == 0
    report = json.loads(report_path.read_text())
    assert report["K"] == [5, 10]
    assert "recall@10" in report["metrics"]


def test_eval_multi_target(workdir, trained, capsys):
    code = main([
        "eval", "--checkpoint", str(trained / "model.lnck"),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"),
        "--protocol", "multi_target", "--k", "10",
    ])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert "hit@10" in report["metrics"]


def test_eval_unaligned_baseline(workdir, capsys):
    code = main([
        "eval", "--baseline", "unaligned",
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"), "--k", "10",
    ])
    assert code == 0
    assert "recall@10" in json.loads(capsys.readouterr().out)["metrics"]


def test_eval_dim_mismatch_exits_nonzero(workdir, trained):
    # embeddings with the wrong content dim cannot feed the checkpoint
    run("embed-pseudo", "--catalog", workdir / "catalog.tsv", "--dim", 9, "--out", workdir / "wrong.lneb")
    code = main([
        "eval", "--checkpoint", str(trained / "model.lnck"),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "wrong.lneb"), "--k", "10",
    ])
    assert code != 0


def test_export_items(workdir, trained):
    out = workdir / "items.lneb"
    code = main([
        "export", "items", "--checkpoint", str(trained / "model.lnck"),
        "--embeddings", str(workdir / "emb.lneb"), "--out", str(out),
    ])
    assert code == 0
    provider = store_open(out)
    assert provider.dim == 16  # d_out
    assert len(provider.item_ids()) == 64


def test_export_users(workdir, trained):
    out = workdir / "users.lneb"
    code = main([
        "export", "users", "--checkpoint", str(trained / "model.lnck"),
        "--embeddings", str(workdir / "emb.lneb"),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--out", str(out),
    ])
    assert code == 0
    provider = store_open(out)
    assert len(provider.item_ids()) == 16  # one per user
    vec = provider.lookup(1000)
    assert abs(np.linalg.norm(vec.astype(np.float64)) - 1.0) < 1e-5


def test_inspect_both_formats(workdir, trained, capsys):
    assert run("inspect", workdir / "emb.lneb") == 0
    out = capsys.readouterr().out
    assert "magic: LNEB" in out and "dim: 16" in out
    assert run("inspect", trained / "model.lnck") == 0
    out = capsys.readouterr().out
    assert "magic: LNCK" in out and "adaptor.w" in out


def test_inspect_unknown_magic(workdir, capsys):
    path = workdir / "garbage.bin"
    path.write_bytes(b"XXXX123")
    assert run("inspect", path) == 3


def test_config_file_with_flag_override(workdir):
    cfg_path = workdir / "train.json"
    cfg_path.write_text(json.dumps({
        "model": {"d_model": 32, "n_layers": 1, "n_heads": 2, "d_out": 16, "max_len": 32},
        "sampling": {"max_hist": 16, "max_tar": 8, "n_hist": 4, "n_tar": 3},
        "train": {"epochs": 1, "batch_size": 8},
        "seed": 5,
    }))
    out_dir = workdir / "run_cfg"
    code = main([
        "train", "--config", str(cfg_path),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"),
        "--out-dir", str(out_dir),
        "--epochs", "2",  # flag beats file
    ])
    assert code == 0
    cfg = json.loads((out_dir / "run_config.json").read_text())
    assert cfg["train"]["epochs"] == 2
    assert cfg["model"]["d_model"] == 32


def test_unknown_config_key_exits_2(workdir):
    cfg_path = workdir / "bad.json"
    cfg_path.write_text(json.dumps({"train": {"unknown_knob": 1}}))
    code = main([
        "train", "--config", str(cfg_path),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"),
        "--out-dir", str(workdir / "run_bad"),
    ])
    assert code == 2


def test_config_errors_reported_all_at_once(workdir, capsys):
    cfg_path = workdir / "bad2.json"
    cfg_path.write_text(json.dumps({"train": {"bad_a": 1}, "model": {"bad_b": 2}}))
    code = main([
        "train", "--config", str(cfg_path),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"),
        "--out-dir", str(workdir / "run_bad2"),
    ])
    assert code == 2
    err = capsys.readouterr().err
    assert "bad_a" in err and "bad_b" in err


def test_eval_per_user_ranks_csv(workdir, trained):
    csv_path = workdir / "ranks.csv"
    code = main([
        "eval", "--checkpoint", str(trained / "model.lnck"),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"), "--k", "10",
        "--per-user-ranks", str(csv_path),
    ])
    assert code == 0
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "user_id,target_item_id,rank"
    assert len(lines) == 17  # header + 16 users
    for line in lines[1:]:
        user_id, target, rank = line.split(",")
        assert int(rank) >= 1


def test_random_sample_flag_persisted_and_trains(workdir):
    out_dir = workdir / "run_rs"
    code = main([
        "train", "--random-sample",
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--embeddings", str(workdir / "emb.lneb"), "--out-dir", str(out_dir),
        "--d-model", "32", "--n-layers", "1", "--n-heads", "2", "--d-out", "16",
        "--max-len", "32", "--max-hist", "16", "--max-tar", "8",
        "--n-hist", "4", "--n-tar", "3", "--epochs", "1", "--batch-size", "8",
    ])
    assert code == 0
    cfg = json.loads((out_dir / "run_config.json").read_text())
    assert cfg["sampling"]["weighted"] is False


def test_id_embedding_source_trains(workdir):
    out_dir = workdir / "run_id"
    code = main([
        "train", "--embedding-source", "id",
        "--catalog", str(workdir / "catalog.tsv"), "--content-dim", "12",
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--out-dir", str(out_dir),
        "--d-model", "32", "--n-layers", "1", "--n-heads", "2", "--d-out", "16",
        "--max-len", "32", "--max-hist", "16", "--max-tar", "8",
        "--n-hist", "4", "--n-tar", "3", "--epochs", "1", "--batch-size", "8",
    ])
    assert code == 0
    code = main([
        "eval", "--checkpoint", str(out_dir / "model.lnck"),
        "--interactions", str(workdir / "interactions.tsv"), "--split-ts", "10",
        "--k", "10",
    ])
    assert code == 0
    out = workdir / "id_items.lneb"
    code = main(["export", "items", "--checkpoint", str(out_dir / "model.lnck"),
                 "--out", str(out)])
    assert code == 0
    assert len(store_open(out).item_ids()) == 64
