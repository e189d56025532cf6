import json

import numpy as np
import pytest

from featsel import cli, codec
from featsel.tensor_store import read_tensor


def run(*argv):
    return cli.main(list(argv))


SPEC = dict(channels=8, height=8, width=8, tasks=2,
            relevant=[[0, 1], [2, 3]], mix_weights=[[1.0, 0.5], [1.0, 0.5]],
            samples=6, seed=5, patch_n=2, patch_m=2)


@pytest.fixture()
def dataset(tmp_path):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps(SPEC))
    out = tmp_path / "data"
    assert run("synth", "--spec", str(spec_path), "--out", str(out)) == 0
    return out


# ---------------------------------------------------------------------------
# argument handling and exit codes


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        run("--version")
    assert e.value.code == 0


def test_missing_subcommand_is_usage_error():
    with pytest.raises(SystemExit) as e:
        run()
    assert e.value.code == cli.EXIT_USAGE


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as e:
        run("synth", "--frobnicate")
    assert e.value.code == cli.EXIT_USAGE


def test_domain_error_exit_code(dataset, tmp_path, capsys):
    # MI ranking needs a task id
    rc = run("rank", "--manifest", str(dataset / "manifest.json"),
             "--criterion", "mi", "--out", str(tmp_path / "r"))
    assert rc == cli.EXIT_DOMAIN
    assert "error:" in capsys.readouterr().err


def test_io_error_exit_code(tmp_path, capsys):
    rc = run("estimate-mi", "--manifest", str(tmp_path / "nope.json"),
             "--task", "0", "--out", str(tmp_path / "o"))
    assert rc == cli.EXIT_IO


def test_format_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ften"
    bad.write_bytes(b"JUNKJUNKJUNKJUNKJUNK")
    table = tmp_path / "t.json"
    table.write_text(json.dumps({"criterion": "l2",
                                 "scores": {"0": 1.0, "1": 2.0},
                                 "ordering": [1, 0], "task_id": None}))
    rc = run("select-hard", "--features", str(bad), "--table", str(table),
             "--keep-count", "1", "--out", str(tmp_path / "o"))
    assert rc == cli.EXIT_DOMAIN


# ---------------------------------------------------------------------------
# subcommand outputs


def test_synth_outputs(dataset):
    assert (dataset / "manifest.json").exists()
    assert (dataset / "spec.json").exists()
    assert (dataset / "run.json").exists()


def test_rank_and_estimate_mi(dataset, tmp_path):
    out = tmp_path / "rank"
    assert run("rank", "--manifest", str(dataset / "manifest.json"),
               "--criterion", "l2", "--out", str(out)) == 0
    rows = (out / "ranking.csv").read_text().strip().split("\n")
    assert rows[0] == "rank,channel_id,score"
    assert len(rows) == 1 + SPEC["channels"]
    assert (out / "importance.json").exists()

    out2 = tmp_path / "mi"
    assert run("estimate-mi", "--manifest", str(dataset / "manifest.json"),
               "--task", "0", "--k", "4", "--bins", "4",
               "--out", str(out2)) == 0
    rows = (out2 / "mi_estimates.csv").read_text().strip().split("\n")
    assert rows[0] == "channel_id,task_id,mi_nats"
    assert len(rows) == 1 + SPEC["channels"]


def test_select_hard_pipeline(dataset, tmp_path):
    rank_out = tmp_path / "rank"
    run("rank", "--manifest", str(dataset / "manifest.json"),
        "--criterion", "l2", "--out", str(rank_out))
    features = json.loads((dataset / "manifest.json").read_text())["samples"][0]["features"]
    out = tmp_path / "hard"
    assert run("select-hard", "--features", str(dataset / features),
               "--table", str(rank_out / "importance.json"),
               "--keep-fraction", "0.5", "--out", str(out)) == 0
    kept = read_tensor(out / "kept.ften")
    recon = read_tensor(out / "reconstruction.ften")
    assert kept.shape[0] == 4 and recon.shape[0] == 8
    # exactly half the channels survive, the rest are zeroed
    assert sum(bool(np.any(recon[c])) for c in range(8)) == 4


def test_select_soft_and_reconstruct(dataset, tmp_path):
    rank_out = tmp_path / "rank"
    run("rank", "--manifest", str(dataset / "manifest.json"),
        "--criterion", "l2", "--out", str(rank_out))
    features = json.loads((dataset / "manifest.json").read_text())["samples"][0]["features"]
    soft_out = tmp_path / "soft"
    assert run("select-soft", "--features", str(dataset / features),
               "--table", str(rank_out / "importance.json"),
               "--keep-count", "4", "--qp", "20", "--out", str(soft_out)) == 0
    sizes = (soft_out / "sizes.csv").read_text().strip().split("\n")
    assert sizes[0] == "base_bytes,enhancement_bytes,total_bytes"

    rec_out = tmp_path / "rec"
    assert run("reconstruct", "--payload", str(soft_out / "payload.fpay"),
               "--out", str(rec_out)) == 0
    rec = read_tensor(rec_out / "reconstruction.ften")
    direct = codec.reconstruct(codec.load_payload(soft_out / "payload.fpay"))
    assert np.array_equal(rec, direct.astype(np.float32))


ACC_CSV = (
    "task_id,metric,direction,criterion,keep_count,qp,accuracy\n"
    "0,proxy,higher-better,full,4,,100\n"
    "1,proxy,higher-better,full,4,,100\n"
    "2,proxy,higher-better,full,4,,100\n"
    "0,proxy,higher-better,mi,4,,95\n"
    "1,proxy,higher-better,mi,4,,80\n"
    "2,proxy,higher-better,mi,4,,90\n"
    "0,proxy,higher-better,l2,4,,80\n"
    "1,proxy,higher-better,l2,4,,95\n"
    "2,proxy,higher-better,l2,4,,95\n")


def test_distortion_values(tmp_path):
    acc = tmp_path / "acc.csv"
    acc.write_text(ACC_CSV)
    out = tmp_path / "dist"
    assert run("distortion", "--accuracy", str(acc), "--criterion", "mi",
               "--keep", "4", "--out", str(out)) == 0
    rows = (out / "distortion.csv").read_text().strip().split("\n")[1:]
    got = {int(r.split(",")[0]): float(r.split(",")[-1]) for r in rows}
    assert got == pytest.approx({0: 0.05, 1: 0.2, 2: 0.1}, abs=1e-12)


def test_sweep_simplex_outputs(tmp_path):
    acc = tmp_path / "acc.csv"
    acc.write_text(ACC_CSV)
    out = tmp_path / "sweep"
    assert run("sweep-simplex", "--accuracy", str(acc), "--keep", "4",
               "-r", "10", "--out", str(out)) == 0
    winners = (out / "winners.csv").read_text().strip().split("\n")
    assert winners[0] == "w1,w2,w3,x,y,winner"
    assert len(winners) == 1 + 66  # (10+1)(10+2)/2 grid points
    fractions = json.loads((out / "win_fractions.json").read_text())
    assert sum(fractions.values()) == pytest.approx(1.0, abs=1e-12)
    assert (out / "simplex.png").exists()


def test_validate_gaussian_small(tmp_path):
    out = tmp_path / "val"
    assert run("validate-gaussian", "--mode", "1d", "--rhos", "0.6",
               "--k-set", "2,4", "--samples", "2000", "--repeats", "1",
               "--out", str(out)) == 0
    rows = (out / "validation.csv").read_text().strip().split("\n")
    assert rows[0] == "rho,K,repeat,estimate_nats,true_1d_nats,true_2d_nats,mode"
    assert len(rows) == 3  # 1 rho x 2 K x 1 repeat
    assert (out / "validation_1d.png").exists()


def test_validate_gaussian_units(tmp_path):
    args = ["validate-gaussian", "--mode", "1d", "--rhos", "0.6",
            "--k-set", "4", "--samples", "2000", "--repeats", "1",
            "--no-figures"]
    out_n, out_b = tmp_path / "nats", tmp_path / "bits"
    assert run(*args, "--units", "nats", "--out", str(out_n)) == 0
    assert run(*args, "--units", "bits", "--out", str(out_b)) == 0
    row_n = (out_n / "validation.csv").read_text().strip().split("\n")[1].split(",")
    row_b = (out_b / "validation.csv").read_text().strip().split("\n")[1].split(",")
    assert float(row_n[3]) == pytest.approx(float(row_b[3]) * np.log(2), rel=1e-9)


# ---------------------------------------------------------------------------
# provenance replay


def test_replay_reproduces_outputs_byte_exactly(dataset, tmp_path):
    acc = tmp_path / "acc.csv"
    acc.write_text(ACC_CSV)
    out = tmp_path / "sweep"
    run("sweep-simplex", "--accuracy", str(acc), "--keep", "4", "-r", "8",
        "--out", str(out))
    names = ["winners.csv", "win_fractions.json", "simplex.png"]
    before = {n: (out / n).read_bytes() for n in names}
    for n in names:
        (out / n).unlink()
    assert run("replay", str(out / "run.json")) == 0
    after = {n: (out / n).read_bytes() for n in names}
    assert after == before


def test_replay_thread_count_independent(dataset, tmp_path, monkeypatch):
    out = tmp_path / "rank"
    run("rank", "--manifest", str(dataset / "manifest.json"),
        "--criterion", "mi", "--task", "0", "--out", str(out))
    before = (out / "ranking.csv").read_bytes()
    monkeypatch.setenv("FEATSEL_THREADS", "4")
    assert run("replay", str(out / "run.json")) == 0
    assert (out / "ranking.csv").read_bytes() == before
