"""Failure modes of the projected-gradient and log-barrier trainers at tight constraint levels.

For each c the projected trainer's norm shrinkage (relative to unconstrained
SGD), its held-out p% and the fraction of seeds on which the barrier method
left the feasible set are reported.

    python3 scripts/pathology.py --seeds 0 1 2
"""

import argparse

import numpy as np

from fairmpc.config import TrainConfig
from fairmpc.data import synth
from fairmpc.errors import InfeasibleIterate
from fairmpc.reference import c_grid, constraint_matrix, evaluate, train_iplb, train_projected, train_unconstrained


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--rho", type=float, default=0.8)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--points", type=int, default=9)
    ap.add_argument("--eta-theta", type=float, default=TrainConfig().eta_theta)
    ap.add_argument("--epochs", type=int, default=TrainConfig().epochs)
    args = ap.parse_args()

    cs = c_grid(args.points)
    print(f"{'c':>9} {'shrink':>8} {'p% proj':>8} {'p% unc':>8} {'max F':>10} {'iplb fail':>9}")
    for c in cs:
        shrink, pp, pu, fmax, fails = [], [], [], [], 0
        for seed in args.seeds:
            cfg = TrainConfig(eta_theta=args.eta_theta, epochs=args.epochs, seed=seed)
            split = synth(args.n, args.rho, seed)
            tr, te = split.train, split.test
            A = constraint_matrix(tr.X, tr.Z)
            un = train_unconstrained(tr.X, tr.y, None, cfg).theta
            pj = train_projected(tr.X, tr.y, tr.Z, c, cfg).theta
            shrink.append(np.linalg.norm(un) / np.linalg.norm(pj))
            pp.append(evaluate(pj, te.X, te.y, te.Z).p_percent)
            pu.append(evaluate(un, te.X, te.y, te.Z).p_percent)
            fmax.append(np.max(np.abs(A @ pj)) - c)
            try:
                train_iplb(tr.X, tr.y, tr.Z, c, cfg)
            except InfeasibleIterate:
                fails += 1
        print(f"{c:>9.2e} {np.mean(shrink):>8.1f} {np.mean(pp):>8.1f} {np.mean(pu):>8.1f} "
              f"{max(fmax):>10.2e} {fails:>4}/{len(args.seeds)}")


if __name__ == "__main__":
    main()
