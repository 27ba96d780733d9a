"""Two-party fair logistic regression.

The modeler holds the features and labels, both parties hold additive shares
of the users' sensitive attributes. Training is minibatch SGD on the logistic
loss with the covariance constraint |A theta| <= c enforced by a Lagrange
multiplier, all of it on shares. Only the final parameters are revealed, and
only to the modeler.

The operation order here is mirrored line by line by the plaintext fixed-point
trainer in :mod:`fairmpc.reference`; keep the two in sync.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .config import TrainConfig, check_sizes
from .container import ObjectType
from .errors import BadShape, ShapeMismatch
from .fixedpoint import FRAC_BITS, check_range, decode, encode
from .mpc import Session, _log2, blocked_mult_shift_avg
from .reference import batches, step_constants
from .sharing import MODELER, Share, TriplePlan, concat, prefix_levels, trivial_share


@dataclass
class FairnessConstraint:
    """Shared constraint matrix A (p x d) and public slack c (length p)."""

    A: Share
    c: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        if np.any(self.c < 0):
            raise ValueError("slack must be nonnegative")
        if self.A.shape[0] != len(self.c):
            raise ShapeMismatch(f"A has {self.A.shape[0]} rows but {len(self.c)} slack values")

    @property
    def p(self) -> int:
        return self.A.shape[0]


@dataclass
class Model:
    theta_raw: np.ndarray
    frac_bits: int = FRAC_BITS

    @property
    def theta(self) -> np.ndarray:
        return decode(self.theta_raw, self.frac_bits)

    @classmethod
    def from_float(cls, theta, frac_bits: int = FRAC_BITS) -> "Model":
        return cls(encode(np.asarray(theta, dtype=np.float64), frac_bits), frac_bits)

    def save(self, stem) -> tuple[Path, Path]:
        """Write ``stem.txt`` (decoded values) and ``stem.fpsh`` (raw encoding)."""
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        txt = stem.with_suffix(".txt")
        txt.write_text("".join(f"{v!r}\n" for v in self.theta.tolist()))
        raw = container.write(stem.with_suffix(".fpsh"), self.theta_raw.reshape(-1, 1), MODELER,
                              ObjectType.MODEL)
        return txt, raw

    @classmethod
    def load(cls, path, frac_bits: int = FRAC_BITS) -> "Model":
        path = Path(path)
        if path.suffix == ".txt":
            return cls.from_float([float(s) for s in path.read_text().split()], frac_bits)
        values, _, _ = container.read(path, ObjectType.MODEL)
        return cls(values.reshape(-1), frac_bits)


def center_sensitive(session: Session, z: Share) -> Share:
    """Subtract column means; the division by n is a shift by log2(n)."""
    if z.values.ndim != 2:
        raise BadShape(f"sensitive attributes must be an n x p matrix, got shape {z.shape}")
    n = z.shape[0]
    if n & (n - 1):
        raise BadShape(f"n={n} is not a power of two")
    total = session.share(z.values.sum(axis=0, dtype=np.uint64))
    zbar = session.trunc(total, _log2(n))
    return session.share(z.values - zbar.values[None, :])


def build_constraint(session: Session, zc: Share, x: Share, c, block: int) -> FairnessConstraint:
    A = blocked_mult_shift_avg(session, zc.T, x, min(block, zc.shape[0]))
    return FairnessConstraint(A, np.broadcast_to(np.asarray(c, dtype=np.float64), (zc.shape[1],)))


def train(session: Session, x: Share, y: Share, z: Share, c, cfg: TrainConfig = TrainConfig(),
          trace: list | None = None, lam_trace: list | None = None) -> Model | None:
    """Run the training protocol. Returns the model at the modeler, ``None`` at the regulator.

    ``trace`` and ``lam_trace``, when given, receive this party's shares of
    theta and lambda after every update (local bookkeeping for tests; nothing
    extra is communicated).
    """
    f = session.frac_bits
    if f != cfg.frac_bits:
        raise ValueError("session and config disagree on frac_bits")
    n, d = x.shape
    block = check_sizes(n, cfg)
    if y.shape != (n,) or z.shape[0] != n:
        raise ShapeMismatch(f"X {x.shape}, y {y.shape}, Z {z.shape} do not line up")
    s = cfg.batch_log2

    con = build_constraint(session, center_sensitive(session, z), x, c, block)
    A, p = con.A, con.p
    c_raw = encode(con.c, f)
    half = encode(0.5, f)
    minus_half = session.ring.reduce(np.uint64(0) - half)
    k_lam = np.uint64(encode(cfg.eta_lambda, f))

    theta = session.zeros(d)
    lam = session.zeros(p)
    for epoch, idx in batches(n, cfg):
        kb, kc = step_constants(cfg, epoch)
        xi = x[idx]
        B = len(idx)
        # A theta and X_i theta share one Beaver round
        uv = session.trunc(session.matmul(concat([A, xi]), theta.reshape(d, 1)).reshape(-1), f)
        u, v = uv[:p], uv[p:]
        up, down = v.add_public(half), v.add_public(minus_half)
        signs = session.msb(concat([u, up, down]))
        sA, keep = signs[:p], (-signs[p:]).add_public(np.uint64(1))
        prods = session.hadamard(concat([sA, keep]), concat([u, up, (-v).add_public(half)]))
        absu = u - prods[:p].scale(2)
        sigma = prods[p:p + B] + prods[p + B:]

        F = absu.add_public(session.ring.reduce(np.uint64(0) - c_raw))
        act = (-session.msb(F.add_public(np.uint64(2**64 - 1)))).add_public(np.uint64(1))
        prods = session.hadamard(concat([act, act]), concat([F, sA]))
        gl, sgn_act = prods[:p], act - prods[p:].scale(2)
        w = session.hadamard(lam, sgn_act)

        gB = session.trunc(session.matmul(xi.T, (sigma - y[idx]).reshape(B, 1)).reshape(-1), f + s)
        gC = session.trunc(session.matmul(A.T, w.reshape(p, 1)).reshape(-1), f)
        theta = theta - session.trunc(gB.scale(kb) + gC.scale(kc), f)

        t = lam + session.trunc(gl.scale(k_lam), f)
        lam = session.hadamard((-session.msb(t)).add_public(np.uint64(1)), t)
        if trace is not None:
            trace.append(theta.values.copy())
        if lam_trace is not None:
            lam_trace.append(lam.values.copy())

    out = session.send_share_to(theta, MODELER)
    if out is None:
        return None
    check_range(out, "trained parameters")
    return Model(out, f)


def train_modeler(session: Session, X, y, z_share, c, cfg: TrainConfig = TrainConfig(), trace=None,
                  lam_trace=None) -> Model:
    """Modeler entry point: X and y are plaintext, shared trivially as (value, 0)."""
    f = cfg.frac_bits
    xs = trivial_share(encode(X, f), session.party, MODELER)
    ys = trivial_share(encode(np.asarray(y, dtype=np.float64), f), session.party, MODELER)
    return train(session, xs, ys, session.share(z_share), c, cfg, trace, lam_trace)


def train_regulator(session: Session, n: int, d: int, z_share, c, cfg: TrainConfig = TrainConfig(),
                    trace=None, lam_trace=None) -> None:
    """Regulator entry point: holds only its share of Z."""
    zeros = session.zeros((n, d))
    return train(session, zeros, session.zeros(n), session.share(z_share), c, cfg, trace, lam_trace)


# -- resource planning ---------------------------------------------------------------
#
# Closed forms for the randomness and the number of transport exchanges one
# training run consumes; tests check them against actual consumption.

def _msb_cost(k: int, circuit: str) -> TriplePlan:
    return TriplePlan(hadamard=k, conversion=k, circuit=circuit)


def _trunc_cost(k: int, mode: str, circuit: str) -> TriplePlan:
    if mode == "exact":
        return TriplePlan(hadamard=2 * k, edabit=k, circuit=circuit)
    return TriplePlan(circuit=circuit)


def setup_plan(n: int, d: int, p: int, block: int, mode: str = "local", circuit: str = "prefix") -> TriplePlan:
    """Randomness for centering Z and forming A."""
    block = min(block, n)
    nb = n // block
    plan = TriplePlan(matmul={(p, block, d): nb}, circuit=circuit)
    if n > 1:
        plan = plan + _trunc_cost(p, mode, circuit)
    plan = plan + _trunc_cost(nb * p * d, mode, circuit)
    if nb > 1:
        plan = plan + _trunc_cost(p * d, mode, circuit)
    return plan


def batch_plan(d: int, p: int, batch: int, mode: str = "local", circuit: str = "prefix") -> TriplePlan:
    """Randomness consumed by one minibatch update."""
    B = batch
    had = lambda k: TriplePlan(hadamard=k, circuit=circuit)  # noqa: E731
    plan = TriplePlan(matmul={(p + B, d, 1): 1, (d, B, 1): 1, (d, p, 1): 1}, circuit=circuit)
    plan = plan + _trunc_cost(p + B, mode, circuit) + _msb_cost(p + 2 * B, circuit) + had(p + 2 * B)
    plan = plan + _msb_cost(p, circuit) + had(2 * p) + had(p)
    plan = plan + _trunc_cost(d, mode, circuit).scaled(3)
    plan = plan + _trunc_cost(p, mode, circuit) + _msb_cost(p, circuit) + had(p)
    return plan


def plan_training(n: int, d: int, p: int, cfg: TrainConfig = TrainConfig(), mode: str = "local",
                  circuit: str = "prefix") -> TriplePlan:
    check_sizes(n, cfg)
    per_epoch = batch_plan(d, p, cfg.batch, mode, circuit).scaled(n // cfg.batch)
    return setup_plan(n, d, p, cfg.block, mode, circuit) + per_epoch.scaled(cfg.epochs)


def msb_rounds(circuit: str = "prefix", ell: int = 64) -> int:
    """Masked opening, the borrow circuit, one conversion round."""
    if circuit == "ripple":
        return 1 + (ell - 2) + 1
    return 1 + prefix_levels(ell) + 1


def trunc_rounds(mode: str, circuit: str = "prefix", ell: int = 64) -> int:
    if mode != "exact":
        return 0
    if circuit == "ripple":
        return 1 + (ell - 1) + 1
    return 1 + prefix_levels(ell) + 1


def batch_rounds(mode: str = "local", circuit: str = "prefix", ell: int = 64) -> int:
    """Exchanges per minibatch: 3 products, 4 Hadamard rounds, 3 sign tests, 5 truncations."""
    return 3 + 4 + 3 * msb_rounds(circuit, ell) + 5 * trunc_rounds(mode, circuit, ell)


def setup_rounds(n: int, block: int, mode: str = "local", circuit: str = "prefix", ell: int = 64) -> int:
    nb = n // min(block, n)
    truncs = (n > 1) + 1 + (nb > 1)
    return 1 + truncs * trunc_rounds(mode, circuit, ell)


def training_rounds(n: int, cfg: TrainConfig = TrainConfig(), mode: str = "local", circuit: str = "prefix",
                    ell: int = 64) -> int:
    """Total exchanges, including the final hand-over of theta to the modeler."""
    per_epoch = (n // cfg.batch) * batch_rounds(mode, circuit, ell)
    return setup_rounds(n, cfg.block, mode, circuit, ell) + cfg.epochs * per_epoch + 1
