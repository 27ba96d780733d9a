import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from fairmpc.fixedpoint import RING64
from fairmpc.mpc import run_local
from fairmpc.sharing import deal

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def run_pair(fn1, fn2, plan, seed=0, ring=RING64, **kw):
    """Deal ``plan`` and run both parties in-process."""
    triples = deal(plan, seed, ring)
    return run_local(fn1, fn2, triples, seeds=(seed + 101, seed + 202), ring=ring, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def mpc_train(split, c, cfg, mode="local", circuit="prefix", seed=0, keep_opened=False):
    """Train with both parties in-process; returns (model, traces, sessions)."""
    from fairmpc.data import share_matrix
    from fairmpc.fairtrain import plan_training, train_modeler, train_regulator

    tr = split.train
    n, d = tr.X.shape
    z1, z2 = share_matrix(tr.Z, np.random.default_rng(seed + 7))
    plan = plan_training(n, d, tr.Z.shape[1], cfg, mode, circuit)
    traces = {"theta": ([], []), "lam": ([], [])}
    model, _, sessions = run_pair(
        lambda s: train_modeler(s, tr.X, tr.y, z1, c, cfg, traces["theta"][0], traces["lam"][0]),
        lambda s: train_regulator(s, n, d, z2, c, cfg, traces["theta"][1], traces["lam"][1]),
        plan, seed=seed, trunc_mode=mode, circuit=circuit, keep_opened=keep_opened)
    return model, traces, sessions


def certify_pair(split, theta_raw, c, seed=0, session_id="s0", mode="local", block=256):
    """Run certification in-process; returns (verdict, (modeler commitment, regulator commitment), sessions)."""
    from fairmpc.attest import certify, certify_plan
    from fairmpc.data import share_matrix
    from fairmpc.fixedpoint import encode
    from fairmpc.sharing import REGULATOR, trivial_share

    tr = split.train
    n, d = tr.X.shape
    z1, z2 = share_matrix(tr.Z, np.random.default_rng(seed + 3))
    xr = encode(tr.X)
    plan = certify_plan(n, d, tr.Z.shape[1], block, mode)

    def party(s, z):
        x = trivial_share(xr, s.party, REGULATOR)
        return certify(s, theta_raw if s.party == 1 else None, d, x, s.share(z), c, block, session_id)
    (_, c1), (verdict, c2), sessions = run_pair(lambda s: party(s, z1), lambda s: party(s, z2), plan,
                                               seed=seed, trunc_mode=mode)
    return verdict, (c1, c2), sessions


def verify_pair(theta_raw, commitments, x_user, claimed, seed=0):
    from fairmpc.attest import verify, verify_plan

    k, d = np.atleast_2d(x_user).shape
    _, result, _ = run_pair(
        lambda s: verify(s, theta_raw, commitments[0], k=k),
        lambda s: verify(s, None, commitments[1], x_user, claimed, k),
        verify_plan(d, k), seed=seed)
    return result


# -- acceptance bookkeeping -------------------------------------------------------------

ACCEPTANCE: dict[int, dict] = {}


@contextmanager
def criterion(number: int, title: str):
    """Record the outcome of one acceptance criterion; failures still propagate."""
    rec = {"title": title, "ok": False, "detail": "", "seconds": 0.0}
    ACCEPTANCE[number] = rec
    t0 = time.perf_counter()
    try:
        yield rec
        rec["ok"] = True
    finally:
        rec["seconds"] = time.perf_counter() - t0


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        rec = ACCEPTANCE[number]
        status = "PASS" if rec["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {status} - {rec['title']} "
                                    f"({rec['detail']}; {rec['seconds']:.1f}s)")
