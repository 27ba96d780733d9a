"""Fairness/accuracy over a grid of constraint levels on synthetic data.

Plaintext trainers run at every grid point; the two-party trainer runs at the
points selected with --mpc-points (default: the two ends of the grid).

    python3 scripts/sweep.py --out results/sweep.csv
"""

import argparse
import csv
import logging
import time
from pathlib import Path

import numpy as np

from fairmpc.config import TrainConfig
from fairmpc.data import share_matrix, synth
from fairmpc.fairtrain import plan_training, train_modeler, train_regulator
from fairmpc.mpc import run_local
from fairmpc.reference import METHODS, SWEEP_FIELDS, SweepRow, c_grid, constraint_matrix, evaluate, sweep
from fairmpc.sharing import deal


def mpc_row(split, c, cfg, seed):
    tr, te = split.train, split.test
    z1, z2 = share_matrix(tr.Z, np.random.default_rng(seed))
    pools = deal(plan_training(tr.n, tr.d, tr.p, cfg), seed)
    model, _, _ = run_local(lambda s: train_modeler(s, tr.X, tr.y, z1, c, cfg),
                            lambda s: train_regulator(s, tr.n, tr.d, z2, c, cfg), pools)
    A = constraint_matrix(tr.X, tr.Z)
    rep = evaluate(model.theta, te.X, te.y, te.Z, A=A, c=c)
    return SweepRow(c, "lagrangian", "mpc", rep.accuracy, rep.frac_pos_z0, rep.frac_pos_z1, rep.p_percent,
                    rep.constraint_max)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--n-test", type=int, default=16384)
    ap.add_argument("--rho", type=float, default=0.8)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0])
    ap.add_argument("--points", type=int, default=20)
    ap.add_argument("--methods", default=",".join(METHODS))
    ap.add_argument("--mpc-points", type=int, nargs="*", default=None,
                    help="grid indices for the two-party run (default: first and last)")
    ap.add_argument("--eta-theta", type=float, default=3e-3)
    ap.add_argument("--eta-lambda", type=float, default=1e-3)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--out", type=Path, default=Path("sweep.csv"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cs = c_grid(args.points)
    mpc_idx = [0, len(cs) - 1] if args.mpc_points is None else args.mpc_points
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with args.out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", *SWEEP_FIELDS, "error"])
        for seed in args.seeds:
            cfg = TrainConfig(eta_theta=args.eta_theta, eta_lambda=args.eta_lambda, epochs=args.epochs, seed=seed)
            split = synth(args.n, args.rho, seed, n_test=args.n_test)
            t0 = time.perf_counter()
            rows = sweep(split, cs, args.methods.split(","), ("float", "fixed"), cfg)
            rows += [mpc_row(split, cs[i], cfg, seed) for i in mpc_idx]
            for r in rows:
                w.writerow([seed, *(getattr(r, f) for f in SWEEP_FIELDS), r.error])
            print(f"seed {seed}: {len(rows)} runs in {time.perf_counter() - t0:.1f}s")
            for r in rows:
                if r.arithmetic == "mpc":
                    print(f"  mpc c={r.c:.3g} accuracy={r.accuracy:.4f} "
                          f"gap={abs(r.frac_pos_z1 - r.frac_pos_z0):.4f} p%={r.p_percent:.1f}")
    print(f"wrote {args.out}")


if __name__ == "__main__":
    main()
