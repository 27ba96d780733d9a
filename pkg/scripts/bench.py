"""Online wall-clock of two-party training and certification over the in-process transport.

    python3 scripts/bench.py --log2n 10 11 12 --modes local exact
"""

import argparse
import time

import numpy as np

from fairmpc.attest import certify, certify_plan
from fairmpc.config import TrainConfig
from fairmpc.data import share_matrix, synth
from fairmpc.fairtrain import plan_training, train_modeler, train_regulator, training_rounds
from fairmpc.fixedpoint import encode
from fairmpc.mpc import run_local
from fairmpc.sharing import REGULATOR, deal, trivial_share


def one(n, mode, circuit, epochs, seed=0):
    split = synth(n, 0.8, seed)
    tr = split.train
    cfg = TrainConfig(epochs=epochs, seed=seed)
    kw = dict(trunc_mode=mode, circuit=circuit)
    z1, z2 = share_matrix(tr.Z, np.random.default_rng(seed))

    pools = deal(plan_training(n, tr.d, tr.p, cfg, mode, circuit), seed)
    t0 = time.perf_counter()
    model, _, sess = run_local(lambda s: train_modeler(s, tr.X, tr.y, z1, 1e-3, cfg),
                               lambda s: train_regulator(s, n, tr.d, z2, 1e-3, cfg), pools, **kw)
    t_train = time.perf_counter() - t0
    assert sess[0].step == training_rounds(n, cfg, mode, circuit)

    x = encode(tr.X)
    pools = deal(certify_plan(n, tr.d, tr.p, cfg.block, mode, circuit), seed + 1)
    t0 = time.perf_counter()
    run_local(lambda s: certify(s, model.theta_raw, tr.d, s.zeros(x.shape), s.share(z1), 1e-3, cfg.block),
              lambda s: certify(s, None, tr.d, trivial_share(x, REGULATOR, REGULATOR), s.share(z2), 1e-3, cfg.block),
              pools, **kw)
    t_cert = time.perf_counter() - t0
    return t_train, t_cert, sess[0].step, sess[0].transport.bytes_sent


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--log2n", type=int, nargs="+", default=[10, 11, 12])
    ap.add_argument("--modes", nargs="+", default=["local"], choices=["local", "exact"])
    ap.add_argument("--circuits", nargs="+", default=["prefix"], choices=["prefix", "ripple"])
    ap.add_argument("--epochs", type=int, default=1)
    args = ap.parse_args()
    print(f"{'n':>6} {'mode':>6} {'circuit':>7} {'exchanges':>10} {'MB sent':>8} {'train s':>8} {'certify ms':>10}")
    for k in args.log2n:
        for mode in args.modes:
            for circuit in args.circuits:
                t_train, t_cert, steps, sent = one(1 << k, mode, circuit, args.epochs)
                print(f"{1 << k:>6} {mode:>6} {circuit:>7} {steps:>10} {sent / 2**20:>8.1f} "
                      f"{t_train:>8.2f} {t_cert * 1e3:>10.1f}")


if __name__ == "__main__":
    main()
