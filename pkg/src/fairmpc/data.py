"""Datasets: CSV ingestion, whitening, power-of-two subsampling, synthetic data, user-side sharing.

Column convention for CSV input: features ``x*``, label ``y``, sensitive
attributes ``z*`` (all binary). The pipeline is

1. seeded shuffle and 80/20 train/test split,
2. the training part is subsampled (never duplicated) to the largest power of two,
3. features are whitened with training statistics and clipped to [-8, 8],
4. a bias column of ones is appended after whitening.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .container import ObjectType
from .errors import BadCorrelation, EmptyFile, NonBinaryLabel, ParseError, ZeroVariance
from .fixedpoint import FRAC_BITS, encode
from .sharing import split

CLIP = 8.0
TEST_FRACTION = 0.2


@dataclass
class Dataset:
    """Whitened features with bias, labels and sensitive attributes for one split."""

    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    split: str = "train"

    @property
    def n(self) -> int:
        return len(self.y)

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def p(self) -> int:
        return self.Z.shape[1]


@dataclass
class DataSplit:
    train: Dataset
    test: Dataset
    mean: np.ndarray
    std: np.ndarray


def largest_pow2(n: int) -> int:
    return 1 << (int(n).bit_length() - 1) if n > 0 else 0


def from_arrays(x, y, z, seed: int = 0, n_test: int | None = None) -> DataSplit:
    """Build train/test datasets from raw (unwhitened) arrays."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    z = np.asarray(z)
    if x.ndim == 1:
        x = x[:, None]
    if z.ndim == 1:
        z = z[:, None]
    n_all = len(y)
    if n_all == 0:
        raise EmptyFile("no rows")
    for name, arr in (("y", y), ("z", z)):
        if not np.isin(arr, (0, 1)).all():
            raise NonBinaryLabel(f"column {name} must be binary 0/1")
    if n_test is None:
        n_test = n_all - int(np.floor(n_all * (1 - TEST_FRACTION)))
    order = np.random.default_rng(seed).permutation(n_all)
    test_idx, train_pool = order[:n_test], order[n_test:]
    n_train = largest_pow2(len(train_pool))
    if n_train == 0:
        raise EmptyFile("no training rows left after the split")
    train_idx = train_pool[:n_train]

    mean = x[train_idx].mean(axis=0)
    std = x[train_idx].std(axis=0)
    if np.any(std == 0):
        raise ZeroVariance(f"constant feature column(s) {np.flatnonzero(std == 0).tolist()}")

    def part(idx, name):
        xw = np.clip((x[idx] - mean) / std, -CLIP, CLIP)
        X = np.hstack([xw, np.ones((len(idx), 1))])
        return Dataset(X, y[idx].astype(np.int64), z[idx].astype(np.int64), name)

    return DataSplit(part(train_idx, "train"), part(test_idx, "test"), mean, std)


def read_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse a raw CSV into (x, y, z) arrays without any preprocessing."""
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFile(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    zcols = [i for i, h in enumerate(header) if h.startswith("z")]
    if "y" not in header or not xcols or not zcols:
        raise ParseError(f"{path}: header needs x*, y and z* columns, got {header}")
    ycol = header.index("y")
    body = rows[1:]
    if not body:
        raise EmptyFile(f"{path} has a header but no rows")
    try:
        data = np.array([[float(r[i]) for i in range(len(header))] for r in body])
    except (ValueError, IndexError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    y, z = data[:, ycol], data[:, zcols]
    if not (np.isin(y, (0, 1)).all() and np.isin(z, (0, 1)).all()):
        raise NonBinaryLabel(f"{path}: y and z* must be 0/1")
    return data[:, xcols], y.astype(np.int64), z.astype(np.int64)


def write_csv(path, x, y, z) -> Path:
    """Write raw arrays in the ingestion schema; floats are written with full precision."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[0] != len(y):
        x = x.T
    z = np.asarray(z).reshape(len(y), -1)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(x.shape[1])] + ["y"] + [f"z{i + 1}" for i in range(z.shape[1])])
        for xi, yi, zi in zip(x, y, z):
            w.writerow([repr(float(v)) for v in xi] + [int(yi)] + [int(v) for v in zi])
    return path


def load_csv(path, seed: int = 0) -> DataSplit:
    x, y, z = read_csv(path)
    return from_arrays(x, y, z, seed)


# Class-conditional Gaussians of the synthetic benchmark.
SYNTH_MEAN = 2.0
SYNTH_COV = np.array([[5.0, 1.0], [1.0, 5.0]])


def synth_raw(n_rows: int, rho: float, seed: int):
    """Raw synthetic rows (x, y, z).

    The sensitive attribute is drawn from the class posterior evaluated at the
    features rotated by arccos(rho): rho = 1 makes z a noisy copy of the label,
    rho = 0 rotates a quarter turn onto a direction that carries no label
    information, and the correlation grows monotonically in between.
    """
    if not 0.0 <= rho <= 1.0:
        raise BadCorrelation(f"correlation knob must lie in [0, 1], got {rho}")
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, n_rows)
    mu = np.where(y[:, None] == 1, SYNTH_MEAN, -SYNTH_MEAN) * np.ones((n_rows, 2))
    x = mu + rng.standard_normal((n_rows, 2)) @ np.linalg.cholesky(SYNTH_COV).T
    phi = np.arccos(rho)
    rot = np.array([[np.cos(phi), -np.sin(phi)], [np.sin(phi), np.cos(phi)]])
    w = np.linalg.solve(SYNTH_COV, np.full(2, 2 * SYNTH_MEAN))
    p_z = 1.0 / (1.0 + np.exp(-(x @ rot.T) @ w))
    z = (rng.random(n_rows) < p_z).astype(np.int64)
    return x, y, z


def synth(n: int, rho: float, seed: int = 0, n_test: int | None = None) -> DataSplit:
    """Synthetic split with exactly ``n`` training rows (a power of two)."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"n must be a power of two, got {n}")
    n_test = n // 4 if n_test is None else n_test
    x, y, z = synth_raw(n + n_test, rho, seed)
    return from_arrays(x, y, z, seed, n_test=n_test)


def user_split(z_row, rng: np.random.Generator, frac_bits: int = FRAC_BITS) -> tuple[bytes, bytes]:
    """Share one user's sensitive attributes; returns (record for modeler, record for regulator)."""
    z_row = np.asarray(z_row)
    if not np.isin(z_row, (0, 1)).all():
        raise NonBinaryLabel("sensitive attributes must be 0/1")
    s1, s2 = split(encode(z_row.astype(np.float64), frac_bits), rng)
    return (container.pack(s1.values, 1, ObjectType.SHARE),
            container.pack(s2.values, 2, ObjectType.SHARE))


def share_matrix(Z, rng: np.random.Generator, frac_bits: int = FRAC_BITS):
    """All users' records stacked: (modeler share n x p, regulator share n x p)."""
    Z = np.asarray(Z)
    s1, s2 = split(encode(Z.astype(np.float64), frac_bits), rng)
    return s1.values, s2.values
