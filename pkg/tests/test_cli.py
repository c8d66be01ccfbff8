import csv
import io
import re

import pytest
import yaml

from permsec import cli, pipeline

FAST = ["--epochs", "1", "--batches", "20", "--set", "sweep.n_messages=50"]


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def _rates(text):
    return {m.group(1): float(m.group(2)) for m in re.finditer(r"^(\S+)\s+(-?\d+\.\d+)$", text, re.M)}


def test_keyrate_image_row(capsys):
    code, out, _ = _run(capsys, "keyrate", "--n", "64", "--l", "16")
    assert code == 0
    r = _rates(out)
    assert r["row"] == pytest.approx(4.62, abs=0.01)
    assert r["col"] == pytest.approx(0.69, abs=0.01)
    assert r["row+col"] == pytest.approx(5.31, abs=0.01)


def test_keyrate_text_row(capsys):
    _, out, _ = _run(capsys, "keyrate", "--n", "31", "--l", "16")
    r = _rates(out)
    assert r["row"] == pytest.approx(3.63, abs=0.01)
    assert r["col"] == pytest.approx(1.42, abs=0.01)


@pytest.mark.xfail(strict=True, reason="log2(31!)/31 + log2(16!)/31 = 5.062, not the tabulated 5.05")
def test_keyrate_text_both_matches_table(capsys):
    _, out, _ = _run(capsys, "keyrate", "--n", "31", "--l", "16")
    assert _rates(out)["row+col"] == pytest.approx(5.05, abs=0.01)


def test_keyrate_trivial_and_three_order(capsys):
    _, out, _ = _run(capsys, "keyrate", "--n", "1", "--l", "1")
    assert set(_rates(out).values()) == {0.0}
    _, out, _ = _run(capsys, "keyrate", "--n", "4", "--l", "4", "--c", "3", "--audio")
    assert "3-order" in _rates(out)


def test_keyrate_bad_shape(capsys):
    code, _, err = _run(capsys, "keyrate", "--n", "6", "--l", "4", "--grain-row", "4")
    assert code == 2 and "config error" in err


def test_bound(capsys):
    code, out, _ = _run(capsys, "bound", "--n", "16", "--g", "1", "--alphabet", "2", "--pe", "0")
    assert code == 0
    r = _rates(out)
    assert r["rate_bound"] == pytest.approx(-1.557, abs=1e-3)
    assert r["capacity"] == 0.0
    code, _, _ = _run(capsys, "bound", "--n", "16", "--pe", "1")
    assert code == 2


def test_brute_mi(capsys):
    code, out, _ = _run(capsys, "brute-mi", "--alphabet", "2", "--n", "2", "--g", "1")
    r = _rates(out)
    assert code == 0
    assert r["exact_multiset"] == pytest.approx(1.5)
    assert r["idealized_rowmodel"] == pytest.approx(1.0)


def test_capacity(capsys):
    _, out, _ = _run(capsys, "capacity", "--channel", "bsc", "--p", "0.11")
    assert float(out.split()[-1]) == pytest.approx(0.5, abs=0.01)


def test_handshake_worked_example(capsys):
    code, out, _ = _run(capsys, "handshake", "--P", "23", "--G", "5", "--a", "6", "--b", "15")
    assert code == 0
    assert "alice shared=2 index=2" in out
    assert "bob   shared=2 index=2" in out
    assert "agreed key" in out


def test_handshake_mismatch_detected(capsys):
    _, out, _ = _run(capsys, "handshake", "--tamper")
    assert "MISMATCH" in out


def test_handshake_deterministic_per_seed(capsys):
    _, a, _ = _run(capsys, "handshake", "--seed", "5")
    _, b, _ = _run(capsys, "handshake", "--seed", "5")
    _, c, _ = _run(capsys, "handshake", "--seed", "6")
    assert a == b != c


def test_handshake_bad_params(capsys):
    code, _, _ = _run(capsys, "handshake", "--P", "22")
    assert code == 2


def test_unknown_flag_rejected(capsys):
    code, _, err = _run(capsys, "train", "--frobnicate")
    assert code == 2 and "unrecognized" in err
    code, _, _ = _run(capsys, "keyrate", "--n", "3", "--l", "3", "--bogus", "1")
    assert code == 2


def test_bsc_rejected_for_learned_pipeline(capsys, tmp_path):
    code, _, err = _run(capsys, "train", "--channel", "bsc", "--out", str(tmp_path))
    assert code == 2 and "bsc" in err


def test_bad_config_file(capsys, tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("system:\n  nonsense: 3\n")
    code, _, _ = _run(capsys, "train", "--config", str(path), "--out", str(tmp_path / "o"))
    assert code == 2
    path.write_text("elsewhere: {}\n")
    code, _, _ = _run(capsys, "train", "--config", str(path), "--out", str(tmp_path / "o"))
    assert code == 2
    code, _, _ = _run(capsys, "train", "--set", "sweep.nonsense=1", "--out", str(tmp_path / "o"))
    assert code == 2


def test_config_round_trip(tmp_path):
    args = cli.build_parser().parse_args(["train", "--mode", "row", "--seed", "9",
                                          "--snr-list", "1,2"])
    doc = cli.resolve_config(args)
    cli.write_config(doc, tmp_path)
    again = cli.read_config(tmp_path / "config.yaml")
    assert again == doc
    assert pipeline.SystemConfig.from_dict(again["system"]) == cli.system_config(doc)


def test_seed_defaults_and_file_overrides(tmp_path):
    args = cli.build_parser().parse_args(["train"])
    assert cli.resolve_config(args)["system"]["seed"] == 42
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"system": {"seed": 5, "mode": "col"}, "sweep": {"snr_db": [3]}}))
    doc = cli.resolve_config(cli.build_parser().parse_args(["train", "--config", str(path)]))
    assert (doc["system"]["seed"], doc["system"]["mode"], doc["sweep"]["snr_db"]) == (5, "col", [3])
    doc = cli.resolve_config(cli.build_parser().parse_args(
        ["train", "--config", str(path), "--seed", "8", "--mode", "row"]))
    assert (doc["system"]["seed"], doc["system"]["mode"]) == (8, "row")


def test_train_writes_outputs_and_echoes_defaults(capsys, tmp_path):
    out = tmp_path / "run"
    code, stdout, _ = _run(capsys, "train", "--out", str(out), *FAST)
    assert code == 0
    for name in ("config.yaml", "results.csv", "trace.csv", "checkpoint/alice_ch.psec",
                 "checkpoint/system.json"):
        assert (out / name).exists()
    echoed = yaml.safe_load((out / "config.yaml").read_text())
    assert set(echoed["system"]) == set(pipeline.SystemConfig().to_dict())
    assert echoed["system"]["batches_per_epoch"] == 20
    rows = list(csv.reader(io.StringIO(stdout)))
    assert rows[0] == pipeline.CSV_HEADER and len(rows) == 2
    trace = (out / "trace.csv").read_text().splitlines()
    assert len(trace) == 21


def test_sweep_rows_and_byte_identical_reruns(capsys, tmp_path):
    argv = ["sweep", "--snr-list", "0,10", "--channels", "awgn,rayleigh", *FAST]
    code, _, _ = _run(capsys, *argv, "--out", str(tmp_path / "a"))
    assert code == 0
    _run(capsys, *argv, "--out", str(tmp_path / "b"))
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    b = (tmp_path / "b" / "sweep.csv").read_bytes()
    assert a == b
    rows = list(csv.DictReader(io.StringIO(a.decode())))
    assert [(r["snr_db"], r["channel"]) for r in rows] == \
        [("0", "awgn"), ("10", "awgn"), ("0", "rayleigh"), ("10", "rayleigh")]
    _run(capsys, *argv, "--out", str(tmp_path / "c"), "--seed", "3")
    assert (tmp_path / "c" / "sweep.csv").read_bytes() != a


def test_sweep_from_checkpoint(capsys, tmp_path):
    _run(capsys, "train", "--out", str(tmp_path / "t"), *FAST)
    code, _, _ = _run(capsys, "sweep", "--checkpoint", str(tmp_path / "t" / "checkpoint"),
                      "--snr-list", "5", "--out", str(tmp_path / "s"), *FAST)
    assert code == 0
    assert len((tmp_path / "s" / "sweep.csv").read_text().splitlines()) == 2


def test_attack_without_shuffling_eve_matches_bob(capsys, tmp_path):
    out = tmp_path / "atk"
    code, _, _ = _run(capsys, "attack", "--mode", "none", "--epochs", "1", "--batches", "600",
                      "--snr-list", "10", "--set", "sweep.n_messages=300", "--out", str(out))
    assert code == 0
    row = next(csv.DictReader(io.StringIO((out / "attack.csv").read_text())))
    bob, eve = float(row["bob_acc"]), float(row["eve_acc"])
    assert bob > 0.9
    assert abs(bob - eve) <= 0.1 * bob


def test_divergence_exit_code(capsys, tmp_path, monkeypatch):
    def boom(self, steps=None):
        raise pipeline.DivergenceError("loss became nan")

    monkeypatch.setattr(pipeline.SecureSystem, "train", boom)
    code, _, err = _run(capsys, "train", "--out", str(tmp_path), *FAST)
    assert code == 3 and "divergence" in err
