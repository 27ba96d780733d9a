import socket
import subprocess
import sys
import threading

import numpy as np
import pytest

from fairmpc.cli import RunManifest, run
from fairmpc.fairtrain import Model


def free_port():
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    return port


def two_party(common, modeler_extra=(), regulator_extra=()):
    """Run one protocol command with the regulator listening and the modeler connecting."""
    ep = f"127.0.0.1:{free_port()}"
    codes = {}

    def go(role, extra):
        flag = ["--listen", ep] if role == "regulator" else ["--connect", ep, "--retries", "50"]
        codes[role] = run([*common[:1], "--role", role, *flag, "--timeout", "60", *common[1:], *extra])
    th = threading.Thread(target=go, args=("regulator", regulator_extra))
    th.start()
    go("modeler", modeler_extra)
    th.join(120)
    return codes


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    w = tmp_path_factory.mktemp("cli")
    assert run(["synth", "--n", "256", "--rho", "0.8", "--seed", "3", "--out", str(w / "data.csv")]) == 0
    assert run(["share", "--data", str(w / "data.csv"), "--out", str(w / "shares"), "--share-seed", "1"]) == 0
    return w


def test_synth_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run(["synth", "--n", "64", "--seed", "9", "--out", str(tmp_path / f"{name}.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_share_outputs(work):
    s = work / "shares"
    assert {p.name for p in s.iterdir()} >= {"public.npz", "z.p1.fpsh", "z.p2.fpsh", "meta.json"}
    assert "Z_train" not in np.load(s / "public.npz").files


def test_full_pipeline(work, capsys):
    w, s = work, str(work / "shares")
    hyper = ["--epochs", "2", "--batch-log2", "4", "--eta-theta", "0.01", "--eta-lambda", "0.05"]
    for task in ("train", "certify", "verify"):
        assert run(["dealer", "--task", task, "--shares", s, "--out", str(w / "pools" / task),
                    "--dealer-seed", "5", *hyper]) == 0
    codes = two_party(["train", "--shares", s, "--pools", str(w / "pools" / "train"), "--slack", "1.0", *hyper],
                      modeler_extra=["--out", str(w / "model")])
    assert codes == {"modeler": 0, "regulator": 0}
    model = Model.load(w / "model.fpsh")
    assert model.theta.shape == (3,)

    com = ["--commit-dir", str(w / "commit"), "--session-id", "t1"]
    codes = two_party(["certify", "--shares", s, "--pools", str(w / "pools" / "certify"), "--slack", "1.0", *com],
                      modeler_extra=["--model", str(w / "model.fpsh")])
    assert codes == {"modeler": 0, "regulator": 0}
    assert "verdict=fair violations=0" in capsys.readouterr().out
    assert (w / "commit" / "commit-t1-p2.fpsh").exists()

    x = np.load(w / "shares" / "public.npz")["X_test"][0]
    truth = int(x @ model.theta >= 0)
    codes = two_party(["verify", "--shares", s, "--pools", str(w / "pools" / "verify"), *com],
                      modeler_extra=["--model", str(w / "model.fpsh")],
                      regulator_extra=["--claimed", str(truth)])
    assert codes == {"modeler": 0, "regulator": 0}
    assert "model_match=true decision_match=true" in capsys.readouterr().out

    m = RunManifest.read(w / "pools" / "manifest.train.regulator.txt")
    assert m["command"] == "train" and len(m["transcript_digest"]) == 64
    m1 = RunManifest.read(w / "pools" / "manifest.train.modeler.txt")
    assert m1["exchanges"] == m["exchanges"]


def test_connect_failure_exit_code(work):
    code = run(["train", "--role", "modeler", "--connect", f"127.0.0.1:{free_port()}", "--timeout", "1",
                "--shares", str(work / "shares"), "--pools", str(work / "pools" / "train")])
    assert code == 3


def test_missing_commitment_exit_code(work):
    assert run(["dealer", "--task", "verify", "--shares", str(work / "shares"),
                "--out", str(work / "pools" / "v2")]) == 0
    code = run(["verify", "--role", "regulator", "--listen", "127.0.0.1:1", "--shares", str(work / "shares"),
                "--pools", str(work / "pools" / "v2"), "--commit-dir", str(work / "none")])
    assert code == 8


def test_usage_errors(tmp_path):
    assert run([]) == 2
    assert run(["synth", "--n", "100", "--out", str(tmp_path / "x.csv")]) == 2
    assert run(["share", "--data", str(tmp_path / "missing.csv"), "--out", str(tmp_path)]) == 2


def test_bad_data_exit_code(tmp_path):
    (tmp_path / "d.csv").write_text("x1,y,z1\n1,5,0\n2,0,1\n")
    assert run(["share", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path / "s")]) == 7


def test_baseline_and_sweep(work, capsys, tmp_path):
    assert run(["baseline", "--data", str(work / "data.csv"), "--method", "unconstrained",
                "--epochs", "2", "--batch-log2", "4"]) == 0
    assert "accuracy=" in capsys.readouterr().out
    assert run(["sweep", "--data", str(work / "data.csv"), "--points", "3", "--epochs", "1",
                "--batch-log2", "4", "--methods", "lagrangian,iplb", "--out", str(tmp_path / "s.csv")]) == 0
    assert len((tmp_path / "s.csv").read_text().splitlines()) == 1 + 3 * 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "fairmpc", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "certify" in out.stdout
