"""Command-line entry points for every role.

Typical two-party flow on one machine (two shells)::

    fairmpc synth --n 4096 --rho 0.8 --seed 7 --out work/data.csv
    fairmpc share --data work/data.csv --out work/shares
    fairmpc dealer --task train --shares work/shares --out work/pools/train
    fairmpc train --role regulator --listen 127.0.0.1:7000 --shares work/shares --pools work/pools/train
    fairmpc train --role modeler --connect 127.0.0.1:7000 --shares work/shares --pools work/pools/train \\
        --out work/model

Exit codes: 0 success, 1 other protocol failure, 2 usage, 3 connection,
4 peer desynchronised, 5 randomness exhausted, 6 numeric failure, 7 bad data,
8 missing commitment, 9 aborted by peer.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attest, container, data, fairtrain, reference
from .config import TrainConfig
from .container import ObjectType
from .errors import FairMPCError, TransportError
from .fixedpoint import FRAC_BITS, encode
from .mpc import Session, run_local
from .sharing import CIRCUITS, MODELER, REGULATOR, TripleSet, deal, trivial_share
from .transport import SocketTransport, parse_endpoint

log = logging.getLogger("fairmpc")

EXIT_USAGE = 2


@dataclass
class RunManifest:
    command: str
    role: str = ""
    seed: int | None = None
    config: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def add_input(self, path) -> None:
        path = Path(path)
        files = sorted(p for p in path.rglob("*") if p.is_file()) if path.is_dir() else [path]
        for p in files:
            self.inputs[str(p)] = hashlib.sha256(p.read_bytes()).hexdigest()

    def lines(self) -> list[str]:
        out = [f"command={self.command}", f"role={self.role}", f"seed={self.seed}"]
        out += [f"config.{k}={v}" for k, v in sorted(self.config.items())]
        out += [f"input.{k}={v}" for k, v in self.inputs.items()]
        out += [f"output={p}" for p in self.outputs]
        return out

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(self.lines()) + "\n")
        return path

    @staticmethod
    def append(path, key: str, value) -> None:
        with Path(path).open("a") as fh:
            fh.write(f"{key}={value}\n")

    @staticmethod
    def read(path) -> dict[str, str]:
        out = {}
        for line in Path(path).read_text().splitlines():
            key, _, value = line.partition("=")
            out[key] = value
        return out


# -- argument groups ------------------------------------------------------------------------

def _hyper(p: argparse.ArgumentParser) -> None:
    d = TrainConfig()
    p.add_argument("--frac-bits", type=int, default=d.frac_bits)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-log2", type=int, default=d.batch_log2)
    p.add_argument("--eta-theta", type=float, default=d.eta_theta)
    p.add_argument("--eta-lambda", type=float, default=d.eta_lambda)
    p.add_argument("--block", type=int, default=d.block)
    p.add_argument("--seed", type=int, default=d.seed)


def _slack(p: argparse.ArgumentParser) -> None:
    p.add_argument("--slack", type=float, default=1e-3, help="constraint level c")


def _party(p: argparse.ArgumentParser) -> None:
    p.add_argument("--role", choices=("modeler", "regulator"), required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--listen", metavar="HOST:PORT")
    g.add_argument("--connect", metavar="HOST:PORT")
    p.add_argument("--timeout", type=float, default=120.0)
    p.add_argument("--retries", type=int, default=0, help="connection attempts after the first")
    p.add_argument("--shares", type=Path, required=True, help="directory written by `share`")
    p.add_argument("--pools", type=Path, required=True, help="this task's dealer directory")
    p.add_argument("--manifest", type=Path)


def _cfg(args) -> TrainConfig:
    return TrainConfig(eta_theta=args.eta_theta, eta_lambda=args.eta_lambda, epochs=args.epochs,
                       batch_log2=args.batch_log2, block=args.block, frac_bits=args.frac_bits,
                       seed=args.seed)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fairmpc", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic raw CSV")
    p.add_argument("--n", type=int, default=4096, help="training rows (power of two)")
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("synth.csv"))

    p = sub.add_parser("share", help="preprocess a CSV and secret-share the sensitive columns")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0, help="split seed")
    p.add_argument("--share-seed", type=int, default=None, help="mask seed (default: fresh entropy)")
    p.add_argument("--frac-bits", type=int, default=FRAC_BITS)

    p = sub.add_parser("dealer", help="generate correlated randomness for one task")
    p.add_argument("--task", choices=("train", "certify", "verify"), required=True)
    p.add_argument("--shares", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--trunc-mode", choices=("local", "exact"), default="local")
    p.add_argument("--circuit", choices=CIRCUITS, default="prefix")
    p.add_argument("--users", type=int, default=1, help="rows per verification")
    p.add_argument("--dealer-seed", type=int, default=None)
    _hyper(p)

    p = sub.add_parser("train", help="two-party fair training")
    _party(p)
    _hyper(p)
    _slack(p)
    p.add_argument("--out", type=Path, default=Path("model"), help="model path stem (modeler)")

    p = sub.add_parser("certify", help="two-party fairness certification")
    _party(p)
    _slack(p)
    p.add_argument("--model", type=Path, help="model .fpsh or .txt (modeler)")
    p.add_argument("--session-id", default="session")
    p.add_argument("--commit-dir", type=Path, default=Path("commitments"))
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("verify", help="two-party decision verification")
    _party(p)
    p.add_argument("--model", type=Path, help="model .fpsh or .txt (modeler)")
    p.add_argument("--session-id", default="session")
    p.add_argument("--commit-dir", type=Path, default=Path("commitments"))
    p.add_argument("--user-row", type=int, default=0, help="test row whose decision is checked (regulator)")
    p.add_argument("--claimed", type=int, choices=(0, 1), help="decision the user received (regulator)")
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("baseline", help="plaintext training and evaluation")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--method", choices=reference.METHODS, default="lagrangian")
    p.add_argument("--arithmetic", choices=("float", "fixed"), default="float")
    p.add_argument("--sigmoid", choices=("pw", "exact", "chebyshev"), default="pw")
    _hyper(p)
    _slack(p)

    p = sub.add_parser("sweep", help="fairness/accuracy over a grid of constraint levels")
    p.add_argument("--data", type=Path, required=True)
    p.add_argument("--methods", default="lagrangian", help="comma-separated")
    p.add_argument("--arithmetic", default="float,fixed", help="comma-separated")
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, default=Path("sweep.csv"))
    _hyper(p)

    p = sub.add_parser("bench", help="online wall-clock of training and certification (in-process)")
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--rho", type=float, default=0.8)
    p.add_argument("--trunc-mode", choices=("local", "exact"), default="local")
    p.add_argument("--circuit", choices=CIRCUITS, default="prefix")
    _hyper(p)
    _slack(p)
    return ap


# -- helpers ----------------------------------------------------------------------------------

def _shares_meta(directory: Path) -> dict:
    path = directory / "meta.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `share` first")
    return json.loads(path.read_text())


def _connect(args) -> SocketTransport:
    if args.listen:
        host, port = parse_endpoint(args.listen)
        return SocketTransport.listen(host, port, timeout=args.timeout)
    host, port = parse_endpoint(args.connect)
    return SocketTransport.connect(host, port, timeout=args.timeout, retries=args.retries)


def _pool_files(args) -> list[Path]:
    party = 1 if args.role == "modeler" else 2
    return [args.pools / "pools.json"] + sorted(args.pools.glob(f"*.p{party}.fpsh"))


def _session(args, pools_meta: dict, frac_bits: int) -> Session:
    party = MODELER if args.role == "modeler" else REGULATOR
    triples = TripleSet.load(args.pools, party)
    transport = _connect(args)
    return Session(party, transport, triples, frac_bits=frac_bits, trunc_mode=pools_meta["trunc_mode"],
                   circuit=pools_meta["circuit"], rng=np.random.default_rng([args.seed, party]))


def _start(args, manifest_name: str, config: dict, inputs: list) -> tuple[RunManifest, Path]:
    m = RunManifest(args.command, getattr(args, "role", ""), getattr(args, "seed", None), config)
    for path in inputs:
        if path is not None and Path(path).exists():
            m.add_input(path)
    path = args.manifest or args.pools.parent / manifest_name
    m.write(path)
    return m, path


def _finish(session: Session, manifest_path: Path, outputs=()) -> None:
    for o in outputs:
        RunManifest.append(manifest_path, "output", o)
    RunManifest.append(manifest_path, "transcript_digest", session.transport.transcript_digest())
    RunManifest.append(manifest_path, "exchanges", session.step)
    session.transport.close()


# -- commands ---------------------------------------------------------------------------------

def cmd_synth(args) -> int:
    if args.n < 4 or args.n & (args.n - 1):
        raise ValueError(f"--n must be a power of two >= 4, got {args.n}")
    n_test = args.n // 4
    x, y, z = data.synth_raw(args.n + n_test, args.rho, args.seed)
    data.write_csv(args.out, x, y, z)
    print(f"wrote {args.n + n_test} rows to {args.out}")
    return 0


def cmd_share(args) -> int:
    split = data.load_csv(args.data, seed=args.seed)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    tr, te = split.train, split.test
    np.savez(out / "public.npz", X_train=tr.X, y_train=tr.y, X_test=te.X, y_test=te.y, Z_test=te.Z)
    z1, z2 = data.share_matrix(tr.Z, np.random.default_rng(args.share_seed), args.frac_bits)
    container.write(out / "z.p1.fpsh", z1, MODELER, ObjectType.SHARE)
    container.write(out / "z.p2.fpsh", z2, REGULATOR, ObjectType.SHARE)
    (out / "meta.json").write_text(json.dumps({"n": tr.n, "d": tr.d, "p": tr.p, "n_test": te.n,
                                                "frac_bits": args.frac_bits}, indent=1))
    print(f"train n={tr.n} d={tr.d} p={tr.p}, test n={te.n}; shares in {out}")
    return 0


def cmd_dealer(args) -> int:
    meta = _shares_meta(args.shares)
    n, d, p = meta["n"], meta["d"], meta["p"]
    cfg = _cfg(args)
    if args.task == "train":
        plan = fairtrain.plan_training(n, d, p, cfg, args.trunc_mode, args.circuit)
    elif args.task == "certify":
        plan = attest.certify_plan(n, d, p, cfg.block, args.trunc_mode, args.circuit)
    else:
        plan = attest.verify_plan(d, args.users, args.circuit)
    t1, t2 = deal(plan, np.random.default_rng(args.dealer_seed))
    args.out.mkdir(parents=True, exist_ok=True)
    t1.save(args.out)
    t2.save(args.out)
    (args.out / "pools.json").write_text(json.dumps({
        "task": args.task, "trunc_mode": args.trunc_mode, "circuit": args.circuit,
        "n": n, "d": d, "p": p, "users": args.users, "config": cfg.as_dict()}, indent=1))
    print(f"dealt {args.task} randomness for n={n} d={d} p={p} into {args.out}")
    return 0


def _pools_meta(args, task: str) -> dict:
    path = args.pools / "pools.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run `dealer --task {task}` first")
    meta = json.loads(path.read_text())
    if meta["task"] != task:
        raise ValueError(f"{args.pools} holds {meta['task']} randomness, not {task}")
    return meta


def cmd_train(args) -> int:
    meta = _shares_meta(args.shares)
    pm = _pools_meta(args, "train")
    cfg = _cfg(args)
    party = MODELER if args.role == "modeler" else REGULATOR
    zfile = args.shares / f"z.p{party}.fpsh"
    inputs = [zfile, *_pool_files(args)] + ([args.shares / "public.npz"] if party == MODELER else [])
    _, mpath = _start(args, f"manifest.train.{args.role}.txt",
                      {**cfg.as_dict(), "slack": args.slack, "trunc_mode": pm["trunc_mode"],
                       "circuit": pm["circuit"]}, inputs)
    z, _, _ = container.read(zfile, ObjectType.SHARE)
    session = _session(args, pm, cfg.frac_bits)
    t0 = time.perf_counter()
    if party == MODELER:
        pub = np.load(args.shares / "public.npz")
        model = fairtrain.train_modeler(session, pub["X_train"], pub["y_train"], z, args.slack, cfg)
        txt, raw = model.save(args.out)
        outputs = [txt, raw]
        print("theta=" + ",".join(f"{v:.6f}" for v in model.theta))
    else:
        fairtrain.train_regulator(session, meta["n"], meta["d"], z, args.slack, cfg)
        outputs = []
    print(f"online_seconds={time.perf_counter() - t0:.3f} exchanges={session.step}")
    _finish(session, mpath, outputs)
    return 0


def cmd_certify(args) -> int:
    meta = _shares_meta(args.shares)
    pm = _pools_meta(args, "certify")
    party = MODELER if args.role == "modeler" else REGULATOR
    zfile = args.shares / f"z.p{party}.fpsh"
    f = meta["frac_bits"]
    inputs = [zfile, *_pool_files(args)] + ([args.model] if party == MODELER else [args.shares / "public.npz"])
    _, mpath = _start(args, f"manifest.certify.{args.role}.txt",
                      {"slack": args.slack, "session_id": args.session_id, "block": pm["config"]["block"]},
                      inputs)
    z, _, _ = container.read(zfile, ObjectType.SHARE)
    theta_raw = None
    if party == MODELER:
        if args.model is None:
            raise ValueError("the modeler must pass --model")
        theta_raw = fairtrain.Model.load(args.model, f).theta_raw
    session = _session(args, pm, f)
    n, d = meta["n"], meta["d"]
    if party == REGULATOR:
        x = trivial_share(encode(np.load(args.shares / "public.npz")["X_train"], f), party, REGULATOR)
    else:
        x = session.zeros((n, d))
    t0 = time.perf_counter()
    verdict, commitment = attest.certify(session, theta_raw, d, x, session.share(z), args.slack,
                                         pm["config"]["block"], args.session_id)
    elapsed = time.perf_counter() - t0
    outputs = []
    if party == MODELER or verdict.fair:
        outputs.append(commitment.save(args.commit_dir))
    if verdict is not None:
        print(f"verdict={'fair' if verdict.fair else 'unfair'} violations={verdict.violations}")
    else:
        print("certification finished")
    print(f"online_seconds={elapsed:.3f} exchanges={session.step}")
    _finish(session, mpath, outputs)
    return 0


def cmd_verify(args) -> int:
    meta = _shares_meta(args.shares)
    pm = _pools_meta(args, "verify")
    party = MODELER if args.role == "modeler" else REGULATOR
    f = meta["frac_bits"]
    inputs = [*_pool_files(args)] + ([args.model] if party == MODELER else [args.shares / "public.npz"])
    _, mpath = _start(args, f"manifest.verify.{args.role}.txt",
                      {"session_id": args.session_id, "user_row": args.user_row}, inputs)
    commitment = attest.Commitment.load(args.commit_dir, args.session_id, party)
    theta_raw = x_user = claimed = None
    if party == MODELER:
        if args.model is None:
            raise ValueError("the modeler must pass --model")
        theta_raw = fairtrain.Model.load(args.model, f).theta_raw
    else:
        x_user = np.load(args.shares / "public.npz")["X_test"][args.user_row:args.user_row + 1]
        claimed = args.claimed
    session = _session(args, pm, f)
    result = attest.verify(session, theta_raw, commitment, x_user,
                           claimed if claimed is not None else 0, k=pm["users"])
    if result is not None:
        if claimed is None:
            result.decision_match = None
        match = str(result.model_match).lower()
        dm = "n/a" if result.decision_match is None else str(result.decision_match).lower()
        dec = "n/a" if result.decisions is None else int(result.decisions[0])
        print(f"model_match={match} decision_match={dm} decision={dec}")
    else:
        print("verification finished")
    _finish(session, mpath)
    return 0


def cmd_baseline(args) -> int:
    split = data.load_csv(args.data, seed=args.seed)
    cfg = _cfg(args).with_(sigmoid=args.sigmoid)
    res = reference.run_method(args.method, args.arithmetic, split.train, args.slack, cfg)
    A = reference.constraint_matrix(split.train.X, split.train.Z)
    rep = reference.evaluate(res.theta, split.test.X, split.test.y, split.test.Z, A=A, c=args.slack)
    print("theta=" + ",".join(f"{v:.6f}" for v in res.theta))
    for k, v in rep.as_dict().items():
        print(f"{k}={v:.6g}")
    return 0


def cmd_sweep(args) -> int:
    split = data.load_csv(args.data, seed=args.seed)
    cfg = _cfg(args)
    rows = reference.sweep(split, reference.c_grid(args.points), args.methods.split(","),
                           args.arithmetic.split(","), cfg, workers=args.workers)
    reference.write_sweep_csv(rows, args.out)
    for r in rows:
        if r.error:
            print(f"c={r.c:.3g} {r.method}/{r.arithmetic}: {r.error}")
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def cmd_bench(args) -> int:
    split = data.synth(args.n, args.rho, args.seed)
    tr = split.train
    cfg = _cfg(args)
    z1, z2 = data.share_matrix(tr.Z, np.random.default_rng(args.seed))
    kw = dict(trunc_mode=args.trunc_mode, circuit=args.circuit)

    plan = fairtrain.plan_training(tr.n, tr.d, tr.p, cfg, args.trunc_mode, args.circuit)
    t0 = time.perf_counter()
    pools = deal(plan, args.seed)
    t_deal = time.perf_counter() - t0
    t0 = time.perf_counter()
    model, _, sess = run_local(
        lambda s: fairtrain.train_modeler(s, tr.X, tr.y, z1, args.slack, cfg),
        lambda s: fairtrain.train_regulator(s, tr.n, tr.d, z2, args.slack, cfg), pools, **kw)
    t_train = time.perf_counter() - t0
    steps = sess[0].step

    f = cfg.frac_bits
    pools = deal(attest.certify_plan(tr.n, tr.d, tr.p, cfg.block, args.trunc_mode, args.circuit), args.seed + 1)
    x = encode(tr.X, f)
    t0 = time.perf_counter()
    _, (verdict, _), _ = run_local(
        lambda s: attest.certify(s, model.theta_raw, tr.d, s.zeros(x.shape), s.share(z1), args.slack, cfg.block),
        lambda s: attest.certify(s, None, tr.d, trivial_share(x, REGULATOR, REGULATOR), s.share(z2),
                                 args.slack, cfg.block), pools, **kw)
    t_cert = time.perf_counter() - t0
    rep = reference.evaluate(model.theta, split.test.X, split.test.y, split.test.Z)
    print(f"n={tr.n} d={tr.d} epochs={cfg.epochs} trunc_mode={args.trunc_mode} circuit={args.circuit}")
    print(f"dealer_seconds={t_deal:.3f}")
    print(f"train_online_seconds={t_train:.3f} exchanges={steps}")
    print(f"certify_online_seconds={t_cert:.3f} verdict={verdict}")
    print(f"accuracy={rep.accuracy:.4f} gap={rep.gap:.4f} p_percent={rep.p_percent:.2f}")
    return 0


COMMANDS = {
    "synth": cmd_synth, "share": cmd_share, "dealer": cmd_dealer, "train": cmd_train,
    "certify": cmd_certify, "verify": cmd_verify, "baseline": cmd_baseline, "sweep": cmd_sweep,
    "bench": cmd_bench,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except FairMPCError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


__all__ = ["run", "main", "RunManifest", "build_parser", "TransportError"]
