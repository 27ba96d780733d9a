"""Plaintext trainers and evaluation.

Everything here runs in a single process on cleartext data. The Lagrangian
trainer exists in two arithmetics:

``float``
    numpy float64, the oracle for what the algorithm converges to.
``fixed``
    integer-for-integer mirror of the two-party trainer (same encodings, same
    floor truncations, same order of operations). With exact truncation on the
    MPC side the two produce identical parameter trajectories.

The projected-gradient and log-barrier trainers are float-only baselines used
to reproduce their failure modes at tight constraint levels.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import TrainConfig, check_sizes
from .errors import InfeasibleIterate
from .fixedpoint import RING64, decode, encode, trunc

log = logging.getLogger(__name__)


# -- sigmoids -----------------------------------------------------------------

def sigmoid_exact(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def sigmoid_pw(x):
    """Three-piece approximation: 0, x + 1/2, 1 with breakpoints at -1/2 and 1/2."""
    x = np.asarray(x, dtype=np.float64)
    return np.clip(x + 0.5, 0.0, 1.0)


def _chebyshev_table(lo: int = -5, hi: int = 5, samples: int = 257):
    """First-order least-squares fits of the logistic function on each unit interval."""
    table = []
    for left in range(lo, hi):
        t = np.polynomial.chebyshev.chebpts1(samples) * 0.5 + left + 0.5
        fit = np.polynomial.Chebyshev.fit(t, sigmoid_exact(t), 1, domain=[left, left + 1])
        slope, icept = fit.convert(kind=np.polynomial.Polynomial).coef[::-1]
        table.append((slope, icept))
    return np.array(table)


_CHEB = _chebyshev_table()


def sigmoid_chebyshev(x):
    """Piecewise-linear fit on [-5, 5] with unit pieces; 0 and 1 outside."""
    x = np.asarray(x, dtype=np.float64)
    idx = np.clip(np.floor(x).astype(np.int64) + 5, 0, len(_CHEB) - 1)
    y = _CHEB[idx, 0] * x + _CHEB[idx, 1]
    return np.where(x < -5, 0.0, np.where(x >= 5, 1.0, y))


SIGMOIDS = {"pw": sigmoid_pw, "exact": sigmoid_exact, "chebyshev": sigmoid_chebyshev}


# -- results and metrics ------------------------------------------------------

@dataclass
class TrainResult:
    theta: np.ndarray
    lam: np.ndarray
    method: str = "lagrangian"
    arithmetic: str = "float"
    theta_raw: np.ndarray | None = None
    trajectory: np.ndarray | None = None  # raw theta after every update (fixed arithmetic)
    lam_trajectory: np.ndarray | None = None  # raw lambda after every update (fixed arithmetic)
    steps: int = 0


@dataclass
class MetricsReport:
    accuracy: float
    frac_pos_z0: float
    frac_pos_z1: float
    p_percent: float
    constraint_max: float = float("nan")

    @property
    def gap(self) -> float:
        return abs(self.frac_pos_z1 - self.frac_pos_z0)

    def as_dict(self) -> dict:
        return asdict(self)


def p_percent(rate0: float, rate1: float) -> float:
    if rate0 == 0 and rate1 == 0:
        return 100.0
    if rate0 == 0 or rate1 == 0:
        return 0.0
    return 100.0 * min(rate0 / rate1, rate1 / rate0)


def decisions(theta, X) -> np.ndarray:
    return (np.asarray(X) @ np.asarray(theta) >= 0).astype(np.int64)


def evaluate(theta, X, y, Z, attr: int = 0, A=None, c=None) -> MetricsReport:
    """Accuracy and group positive rates on (X, y, Z); constraint value if A and c are given."""
    pred = decisions(theta, X)
    z = np.asarray(Z).reshape(len(y), -1)[:, attr]
    rate = [float(pred[z == g].mean()) if np.any(z == g) else 0.0 for g in (0, 1)]
    cmax = float("nan")
    if A is not None and c is not None:
        cmax = float(np.max(np.abs(A @ theta) - c))
    return MetricsReport(float(np.mean(pred == np.asarray(y))), rate[0], rate[1],
                         p_percent(rate[0], rate[1]), cmax)


def constraint_matrix(X, Z) -> np.ndarray:
    """A = (1/n) * (Z - mean Z)^T X, so that the covariance constraint reads |A theta| <= c."""
    Z = np.asarray(Z, dtype=np.float64).reshape(len(X), -1)
    return (Z - Z.mean(axis=0)).T @ np.asarray(X, dtype=np.float64) / len(X)


def _as_c(c, p: int) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    return np.broadcast_to(c, (p,)).copy() if c.ndim == 0 else c.reshape(p)


def batches(n: int, cfg: TrainConfig):
    """Yield (epoch, batch indices) in the order shared by every trainer."""
    rng = np.random.default_rng(cfg.seed)
    B = cfg.batch
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        for j in range(n // B):
            yield epoch, perm[j * B:(j + 1) * B]


# -- Lagrangian, float ----------------------------------------------------------

def _lagrangian_float(X, y, Z, c, cfg: TrainConfig, constrained: bool) -> TrainResult:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    check_sizes(n, cfg)
    A = constraint_matrix(X, Z)
    p = A.shape[0]
    c = _as_c(c, p)
    sig = SIGMOIDS[cfg.sigmoid]
    theta = np.zeros(d)
    lam = np.zeros(p)
    steps = 0
    for epoch, idx in batches(n, cfg):
        Xi = X[idx]
        u = A @ theta
        sigma = sig(Xi @ theta)
        gB = Xi.T @ (sigma - y[idx]) / len(idx)
        if constrained:
            F = np.abs(u) - c
            act = (F > 0).astype(np.float64)
            sgn = np.where(u < 0, -1.0, 1.0)
            gC = A.T @ (lam * act * sgn)
            step = cfg.xi_bce(epoch) * gB + cfg.xi_con(epoch) * gC
            theta = theta - cfg.eta_theta * step
            lam = np.maximum(lam + cfg.eta_lambda * act * F, 0.0)
        else:
            theta = theta - cfg.eta_theta * (cfg.xi_bce(epoch) * gB)
        steps += 1
    return TrainResult(theta, lam, "lagrangian" if constrained else "unconstrained", "float", steps=steps)


# -- Lagrangian, fixed point -------------------------------------------------------

def _log2(v: int) -> int:
    return int(v).bit_length() - 1


def centered_fixed(Zr: np.ndarray) -> np.ndarray:
    """Zr - floor(sum(Zr) / n) on raw encodings (n a power of two)."""
    n = Zr.shape[0]
    zbar = trunc(Zr.sum(axis=0, dtype=np.uint64), _log2(n))
    return Zr - zbar


def blocked_fixed(zc_t: np.ndarray, Xr: np.ndarray, block: int, f: int) -> np.ndarray:
    """Mirror of the blocked multiply-shift-average used inside the protocol."""
    p, n = zc_t.shape
    d = Xr.shape[1]
    nb = n // block
    left = zc_t.reshape(p, nb, block).transpose(1, 0, 2)
    right = Xr.reshape(nb, block, d)
    prods = trunc(np.matmul(left, right), f + _log2(block))
    return trunc(prods.sum(axis=0, dtype=np.uint64), _log2(nb))


def step_constants(cfg: TrainConfig, epoch: int) -> tuple[np.uint64, np.uint64]:
    """Raw encodings of the per-epoch primal step weights."""
    f = cfg.frac_bits
    kb = encode(cfg.eta_theta * cfg.xi_bce(epoch), f)
    kc = encode(cfg.eta_theta * cfg.xi_con(epoch), f)
    return np.uint64(kb), np.uint64(kc)


def _lagrangian_fixed(X, y, Z, c, cfg: TrainConfig, constrained: bool, trace: bool) -> TrainResult:
    f = cfg.frac_bits
    msb = RING64.msb
    one, two = np.uint64(1), np.uint64(2)
    Xr = encode(X, f)
    yr = encode(np.asarray(y, dtype=np.float64), f)
    Zr = encode(np.asarray(Z, dtype=np.float64).reshape(len(Xr), -1), f)
    n, d = Xr.shape
    block = check_sizes(n, cfg)
    p = Zr.shape[1]
    s = cfg.batch_log2
    A = blocked_fixed(centered_fixed(Zr).T, Xr, block, f)
    c_raw = encode(_as_c(c, p), f)
    half = encode(0.5, f)
    k_lam = np.uint64(encode(cfg.eta_lambda, f))

    theta = np.zeros(d, dtype=np.uint64)
    lam = np.zeros(p, dtype=np.uint64)
    traj, lam_traj = [], []
    for epoch, idx in batches(n, cfg):
        kb, kc = step_constants(cfg, epoch)
        Xi = Xr[idx]
        u = trunc(A @ theta, f)
        v = trunc(Xi @ theta, f)
        neg1 = msb(v + half)
        neg2 = msb(v - half)
        sigma = (one - neg1) * (v + half) + (one - neg2) * (half - v)
        gB = trunc(Xi.T @ (sigma - yr[idx]), f + s)
        if constrained:
            sA = msb(u)
            absu = u - two * (sA * u)
            F = absu - c_raw
            act = one - msb(F - one)
            gl = act * F
            w = lam * (act - two * (act * sA))
            gC = trunc(A.T @ w, f)
            theta = theta - trunc(kb * gB + kc * gC, f)
            t = lam + trunc(k_lam * gl, f)
            lam = (one - msb(t)) * t
        else:
            theta = theta - trunc(kb * gB, f)
        if trace:
            traj.append(theta.copy())
            lam_traj.append(lam.copy())
    return TrainResult(decode(theta, f), decode(lam, f), "lagrangian" if constrained else "unconstrained",
                       "fixed", theta_raw=theta, trajectory=np.array(traj) if trace else None,
                       lam_trajectory=np.array(lam_traj) if trace else None,
                       steps=len(traj) if trace else n // cfg.batch * cfg.epochs)


def train_lagrangian(X, y, Z, c, cfg: TrainConfig = TrainConfig(), arithmetic: str = "float",
                     trace: bool = False) -> TrainResult:
    """Stochastic primal descent on theta with clamped dual ascent on lambda."""
    if arithmetic == "float":
        return _lagrangian_float(X, y, Z, c, cfg, True)
    if arithmetic == "fixed":
        if cfg.sigmoid != "pw":
            raise ValueError("the fixed-point trainer only supports the piecewise sigmoid")
        return _lagrangian_fixed(X, y, Z, c, cfg, True, trace)
    raise ValueError(f"unknown arithmetic {arithmetic!r}")


def train_unconstrained(X, y, Z=None, cfg: TrainConfig = TrainConfig(), arithmetic: str = "float",
                        trace: bool = False) -> TrainResult:
    """Logistic SGD with the same schedule and batch order as the Lagrangian trainer."""
    if Z is None:
        Z = np.zeros((len(X), 1))
    if arithmetic == "float":
        return _lagrangian_float(X, y, Z, 0.0, cfg, False)
    return _lagrangian_fixed(X, y, Z, 0.0, cfg, False, trace)


# -- projected gradient -----------------------------------------------------------

def projector(A_act: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Orthogonal projector onto the null space of the active constraint rows."""
    d = A_act.shape[1]
    gram = A_act @ A_act.T
    try:
        if np.linalg.cond(gram) > 1.0 / tol:
            raise np.linalg.LinAlgError("ill-conditioned")
        inv = np.linalg.inv(gram)
    except np.linalg.LinAlgError:
        log.warning("projection Gram matrix is near singular; using the pseudo-inverse")
        inv = np.linalg.pinv(gram, rcond=tol)
    return np.eye(d) - A_act.T @ inv @ A_act


def retract(theta, A, c) -> np.ndarray:
    """Pull theta back into {|A theta| <= c} by radial rescaling (the set is star-shaped around 0)."""
    u = np.abs(A @ theta)
    over = u > c
    if not over.any():
        return theta
    return theta * np.min(c[over] / u[over])


def train_projected(X, y, Z, c, cfg: TrainConfig = TrainConfig(), retraction: bool = True) -> TrainResult:
    """SGD whose gradient is projected onto the tangent space of the violated constraints.

    The tangent projection alone lets iterates drift out of the feasible set,
    so by default each step is followed by a radial retraction back into it.
    Because decisions depend only on the direction of theta, the result
    satisfies the constraint without changing who gets a positive decision.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    check_sizes(n, cfg)
    A = constraint_matrix(X, Z)
    c = _as_c(c, A.shape[0])
    sig = SIGMOIDS[cfg.sigmoid]
    theta = np.zeros(d)
    steps = 0
    for epoch, idx in batches(n, cfg):
        Xi = X[idx]
        g = Xi.T @ (sig(Xi @ theta) - y[idx]) / len(idx)
        active = np.abs(A @ theta) - c > 0
        if active.any():
            g = projector(A[active]) @ g
        theta = theta - cfg.eta_theta * g
        if retraction:
            theta = retract(theta, A, c)
        steps += 1
    return TrainResult(theta, np.zeros(A.shape[0]), "projected", "float", steps=steps)


# -- interior point with log barrier ------------------------------------------------

def barrier_value(theta, A, c, t: float) -> float:
    """-(1/t) * sum_j [log(c_j + a_j theta) + log(c_j - a_j theta)]; +inf outside the feasible set."""
    u = A @ theta
    lo, hi = c + u, c - u
    if np.any(lo <= 0) or np.any(hi <= 0):
        return float("inf")
    return float(-(np.log(lo).sum() + np.log(hi).sum()) / t)


def barrier_grad(theta, A, c, t: float) -> np.ndarray:
    u = A @ theta
    return A.T @ (1.0 / (c - u) - 1.0 / (c + u)) / t


def train_iplb(X, y, Z, c, cfg: TrainConfig = TrainConfig(), t0: float = 1.0,
               growth: float = 1.5) -> TrainResult:
    """SGD on loss plus a log barrier whose weight 1/t shrinks by ``growth`` each epoch.

    Raises InfeasibleIterate as soon as an iterate leaves the strictly feasible set.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, d = X.shape
    check_sizes(n, cfg)
    A = constraint_matrix(X, Z)
    c = _as_c(c, A.shape[0])
    sig = SIGMOIDS[cfg.sigmoid]
    theta = np.zeros(d)
    t = t0
    current = 1
    steps = 0
    for epoch, idx in batches(n, cfg):
        if epoch != current:
            t *= growth
            current = epoch
        Xi = X[idx]
        g = Xi.T @ (sig(Xi @ theta) - y[idx]) / len(idx) + barrier_grad(theta, A, c, t)
        theta = theta - cfg.eta_theta * g
        steps += 1
        u = A @ theta
        if np.any(np.abs(u) >= c) or not np.all(np.isfinite(theta)):
            raise InfeasibleIterate(f"iterate left the feasible set at epoch {epoch}, step {steps} "
                                    f"(max |A theta| - c = {np.max(np.abs(u) - c):.3g})")
    return TrainResult(theta, np.zeros(A.shape[0]), "iplb", "float", steps=steps)


# -- sweeps -------------------------------------------------------------------------

SWEEP_FIELDS = ("c", "method", "arithmetic", "accuracy", "frac_pos_z0", "frac_pos_z1",
                "p_percent", "constraint_max")
METHODS = ("lagrangian", "projected", "iplb", "unconstrained")


def c_grid(points: int = 20, lo: float = 1e-4, hi: float = 1.0) -> np.ndarray:
    return np.logspace(np.log10(lo), np.log10(hi), points)


@dataclass
class SweepRow:
    c: float
    method: str
    arithmetic: str
    accuracy: float = float("nan")
    frac_pos_z0: float = float("nan")
    frac_pos_z1: float = float("nan")
    p_percent: float = float("nan")
    constraint_max: float = float("nan")
    error: str = field(default="", compare=False)


def run_method(method: str, arithmetic: str, train, c: float, cfg: TrainConfig) -> TrainResult:
    X, y, Z = train.X, train.y, train.Z
    if method == "lagrangian":
        return train_lagrangian(X, y, Z, c, cfg, arithmetic)
    if method == "unconstrained":
        return train_unconstrained(X, y, Z, cfg, arithmetic)
    if arithmetic != "float":
        raise ValueError(f"{method} is float-only")
    if method == "projected":
        return train_projected(X, y, Z, c, cfg)
    if method == "iplb":
        return train_iplb(X, y, Z, c, cfg)
    raise ValueError(f"unknown method {method!r}")


def sweep(split, cs, methods=("lagrangian",), arithmetics=("float", "fixed"),
          cfg: TrainConfig = TrainConfig(), workers: int = 1) -> list[SweepRow]:
    """Train every (c, method, arithmetic) combination and evaluate on the test split."""
    A = constraint_matrix(split.train.X, split.train.Z)
    jobs = [(float(c), m, a) for c in cs for m in methods for a in arithmetics
            if a == "float" or m in ("lagrangian", "unconstrained")]

    def one(job):
        c, m, a = job
        try:
            res = run_method(m, a, split.train, c, cfg)
        except InfeasibleIterate as exc:
            log.info("%s at c=%g aborted: %s", m, c, exc)
            return SweepRow(c, m, a, error=f"InfeasibleIterate: {exc}")
        rep = evaluate(res.theta, split.test.X, split.test.y, split.test.Z, A=A, c=c)
        return SweepRow(c, m, a, rep.accuracy, rep.frac_pos_z0, rep.frac_pos_z1, rep.p_percent,
                        rep.constraint_max)

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def write_sweep_csv(rows, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_FIELDS)
        for r in rows:
            w.writerow([repr(r.c), r.method, r.arithmetic] + [
                "" if np.isnan(v) else f"{v:.6g}"
                for v in (r.accuracy, r.frac_pos_z0, r.frac_pos_z1, r.p_percent, r.constraint_max)])
    return path
