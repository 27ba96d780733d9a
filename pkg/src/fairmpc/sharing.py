"""Additive secret sharing over Z_{2^l} and the trusted dealer.

Party 1 is the modeler, party 2 the regulator. A secret ``x`` is split as
``(x - r, r)`` with ``r`` uniform, so party 2's share is always the mask.

The dealer produces every piece of correlated randomness the online phase
consumes:

* matrix Beaver triples ``(A, B, C = A @ B)`` keyed by shape ``(m, k, l)``,
* elementwise (Hadamard) triples ``(a, b, a * b)``,
* conversion tuples: a uniform ``rho`` shared arithmetically and bitwise (xor),
* edaBits: like conversion tuples, plus arithmetic shares of every bit of ``rho``
  (used by exact truncation),
* binary AND triples on whole machine words (the ripple circuit uses bit ``i``
  of one word at position ``i``, the prefix circuit ANDs entire words),
* odd-mask pairs ``(a, r, a * r)`` with ``r`` odd, for equality tests,
* zero sharings, for re-randomizing a sharing.

Both parties' pools are index-aligned and each element is handed out once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .container import ObjectType
from .errors import InsufficientEntropy, SameParty, ShapeMismatch, TripleExhausted
from .fixedpoint import RING64, Ring

MODELER = 1
REGULATOR = 2


@dataclass
class Share:
    """One party's additive share of a ring array."""

    party: int
    values: np.ndarray
    ring: Ring = RING64

    def __post_init__(self):
        if self.party not in (MODELER, REGULATOR):
            raise ValueError(f"party must be 1 or 2, got {self.party}")
        self.values = self.ring.reduce(np.asarray(self.values, dtype=np.uint64))

    @property
    def shape(self):
        return self.values.shape

    @property
    def T(self) -> "Share":
        return self._like(self.values.T)

    def __len__(self):
        return len(self.values)

    def __getitem__(self, idx) -> "Share":
        return self._like(self.values[idx])

    def _like(self, values) -> "Share":
        return Share(self.party, values, self.ring)

    def _check(self, other: "Share"):
        if not isinstance(other, Share):
            raise TypeError("shares only combine with shares; use add_public for constants")
        if other.party != self.party:
            raise SameParty("cannot combine shares held by different parties locally")

    def __add__(self, other: "Share") -> "Share":
        self._check(other)
        return self._like(self.values + other.values)

    def __sub__(self, other: "Share") -> "Share":
        self._check(other)
        return self._like(self.values - other.values)

    def __neg__(self) -> "Share":
        return self._like(np.uint64(0) - self.values)

    def scale(self, k) -> "Share":
        """Multiply by a public ring integer (no rescaling)."""
        k = np.asarray(k)
        if k.dtype != np.uint64:
            k = self.ring.from_signed(k.astype(np.int64))
        return self._like(self.values * k)

    def add_public(self, c) -> "Share":
        """Add a public ring value; only party 1 actually adds it."""
        c = np.asarray(c, dtype=np.uint64)
        if self.party == MODELER:
            return self._like(self.values + c)
        return self._like(np.broadcast_to(self.values, np.broadcast_shapes(self.shape, c.shape)).copy())

    def reshape(self, *shape) -> "Share":
        return self._like(self.values.reshape(*shape))


def concat(shares: list[Share], axis: int = 0) -> Share:
    first = shares[0]
    return first._like(np.concatenate([s.values for s in shares], axis=axis))


def split(secret, rng: np.random.Generator | None = None, mask=None, ring: Ring = RING64):
    """Share ``secret``; party 2 receives a uniform mask, party 1 the difference."""
    secret = ring.reduce(np.asarray(secret, dtype=np.uint64))
    if mask is None:
        if rng is None:
            raise InsufficientEntropy("split needs a random generator or an explicit mask")
        mask = _random(ring, rng, secret.shape)
    mask = ring.reduce(np.asarray(mask, dtype=np.uint64))
    if mask.shape != secret.shape:
        raise ShapeMismatch(f"mask shape {mask.shape} != secret shape {secret.shape}")
    return Share(MODELER, secret - mask, ring), Share(REGULATOR, mask, ring)


def reconstruct(s1: Share, s2: Share) -> np.ndarray:
    if s1.shape != s2.shape:
        raise ShapeMismatch(f"share shapes differ: {s1.shape} vs {s2.shape}")
    if s1.party == s2.party:
        raise SameParty(f"both shares belong to party {s1.party}")
    return s1.ring.reduce(s1.values + s2.values)


def trivial_share(values, party: int, owner: int, ring: Ring = RING64) -> Share:
    """Sharing of a value the ``owner`` knows in the clear: (x, 0)."""
    values = ring.reduce(np.asarray(values, dtype=np.uint64))
    return Share(party, values if party == owner else np.zeros_like(values), ring)


def xor_split(secret, rng: np.random.Generator, ring: Ring = RING64):
    secret = ring.reduce(np.asarray(secret, dtype=np.uint64))
    mask = _random(ring, rng, secret.shape)
    return secret ^ mask, mask


def _random(ring: Ring, rng, shape) -> np.ndarray:
    try:
        return ring.random(rng, shape)
    except Exception as exc:  # pragma: no cover - rng failures are environment-specific
        raise InsufficientEntropy(f"random generator failed: {exc}") from exc


# ---------------------------------------------------------------------------
# Triple pools


@dataclass
class Pool:
    """Arrays with a common leading dimension, consumed front to back."""

    arrays: dict[str, np.ndarray]
    cursor: int = 0
    name: str = "pool"

    @property
    def size(self) -> int:
        first = next(iter(self.arrays.values()), None)
        return 0 if first is None else len(first)

    @property
    def remaining(self) -> int:
        return self.size - self.cursor

    def take(self, count: int) -> dict[str, np.ndarray]:
        if count > self.remaining:
            raise TripleExhausted(
                f"{self.name}: need {count}, only {self.remaining} of {self.size} left"
            )
        sl = slice(self.cursor, self.cursor + count)
        self.cursor += count
        return {k: v[sl] for k, v in self.arrays.items()}


CIRCUITS = ("prefix", "ripple")


def prefix_levels(bits: int) -> int:
    return max(1, (bits - 1).bit_length())


def and_words_per_compare(circuit: str, bits: int = 64) -> int:
    """Binary triple words consumed per compared element.

    The ripple circuit uses bit i of one word at position i; the prefix circuit
    spends two full words (generate and propagate) on each of its levels.
    """
    if circuit == "ripple":
        return 1
    if circuit == "prefix":
        return 2 * prefix_levels(bits)
    raise ValueError(f"unknown comparison circuit {circuit!r}")


@dataclass
class TriplePlan:
    """How much correlated randomness to deal. AND words are implied by the comparisons."""

    matmul: dict[tuple[int, int, int], int] = field(default_factory=dict)
    hadamard: int = 0
    conversion: int = 0
    edabit: int = 0
    odd: int = 0
    zero: int = 0
    circuit: str = "prefix"

    def and_words(self, bits: int = 64) -> int:
        return (self.conversion + self.edabit) * and_words_per_compare(self.circuit, bits)

    def __add__(self, other: "TriplePlan") -> "TriplePlan":
        if self.circuit != other.circuit:
            raise ValueError("cannot combine plans for different comparison circuits")
        mm = dict(self.matmul)
        for k, v in other.matmul.items():
            mm[k] = mm.get(k, 0) + v
        return TriplePlan(
            mm,
            self.hadamard + other.hadamard,
            self.conversion + other.conversion,
            self.edabit + other.edabit,
            self.odd + other.odd,
            self.zero + other.zero,
            self.circuit,
        )

    def scaled(self, times: int) -> "TriplePlan":
        return TriplePlan(
            {k: v * times for k, v in self.matmul.items()},
            self.hadamard * times,
            self.conversion * times,
            self.edabit * times,
            self.odd * times,
            self.zero * times,
            self.circuit,
        )


@dataclass
class TripleSet:
    """One party's view of the dealt randomness."""

    party: int
    ring: Ring = RING64
    matmul: dict[tuple[int, int, int], Pool] = field(default_factory=dict)
    hadamard: Pool = None
    conversion: Pool = None
    edabit: Pool = None
    and_words: Pool = None
    odd: Pool = None
    zero: Pool = None

    def __post_init__(self):
        empty = np.zeros(0, dtype=np.uint64)
        for name, keys in _SCALAR_POOLS.items():
            if getattr(self, name) is None:
                setattr(self, name, Pool({k: empty for k in keys}, name=name))
        if self.edabit.arrays["bits"].ndim == 1:
            self.edabit.arrays["bits"] = np.zeros((0, self.ring.bits), dtype=np.uint64)

    def take_matmul(self, m: int, k: int, l: int, count: int = 1):
        pool = self.matmul.get((m, k, l))
        if pool is None:
            raise TripleExhausted(f"no matrix triples of shape {m}x{k} @ {k}x{l} were dealt")
        return pool.take(count)

    def remaining(self) -> dict[str, int]:
        out = {f"matmul_{m}x{k}x{l}": p.remaining for (m, k, l), p in self.matmul.items()}
        for name in _SCALAR_POOLS:
            out[name] = getattr(self, name).remaining
        return out

    def save(self, directory) -> list[Path]:
        if self.ring.bits != 64:
            raise ValueError("only 64-bit pools are persisted")
        directory = Path(directory)
        written = []
        for (m, k, l), pool in sorted(self.matmul.items()):
            a = pool.arrays
            flat = np.hstack([a["a"].reshape(pool.size, -1), a["b"].reshape(pool.size, -1),
                              a["c"].reshape(pool.size, -1)]) if pool.size else np.zeros((0, m * k + k * l + m * l), np.uint64)
            written.append(container.write(directory / f"matmul_{m}x{k}x{l}.p{self.party}.fpsh",
                                           flat, self.party, ObjectType.MATMUL))
        for name, keys in _SCALAR_POOLS.items():
            pool = getattr(self, name)
            widths = [self.ring.bits if (name == "edabit" and key == "bits") else 1 for key in keys]
            cols = [pool.arrays[key].reshape(pool.size, w) for key, w in zip(keys, widths)]
            flat = np.hstack(cols)
            written.append(container.write(directory / f"{name}.p{self.party}.fpsh",
                                           flat, self.party, _POOL_TYPES[name]))
        return written

    @classmethod
    def load(cls, directory, party: int) -> "TripleSet":
        directory = Path(directory)
        ts = cls(party)
        for path in sorted(directory.glob(f"matmul_*.p{party}.fpsh")):
            m, k, l = (int(v) for v in path.name.split(".")[0][len("matmul_"):].split("x"))
            flat, _, _ = container.read(path, ObjectType.MATMUL)
            n = len(flat)
            ts.matmul[(m, k, l)] = Pool({
                "a": flat[:, : m * k].reshape(n, m, k),
                "b": flat[:, m * k : m * k + k * l].reshape(n, k, l),
                "c": flat[:, m * k + k * l :].reshape(n, m, l),
            }, name=f"matmul {m}x{k}x{l}")
        for name, keys in _SCALAR_POOLS.items():
            path = directory / f"{name}.p{party}.fpsh"
            if not path.exists():
                continue
            flat, _, _ = container.read(path, _POOL_TYPES[name])
            arrays, col = {}, 0
            for key in keys:
                width = 64 if (name == "edabit" and key == "bits") else 1
                chunk = flat[:, col : col + width]
                arrays[key] = chunk if width > 1 else chunk.reshape(-1)
                col += width
            setattr(ts, name, Pool(arrays, name=name))
        return ts


_SCALAR_POOLS = {
    "hadamard": ("a", "b", "c"),
    "conversion": ("arith", "xor"),
    "edabit": ("bits", "xor"),
    "and_words": ("a", "b", "c"),
    "odd": ("a", "r", "c"),
    "zero": ("z",),
}
_POOL_TYPES = {
    "hadamard": ObjectType.HADAMARD,
    "conversion": ObjectType.CONVERSION,
    "edabit": ObjectType.EDABIT,
    "and_words": ObjectType.AND,
    "odd": ObjectType.ODD,
    "zero": ObjectType.ZERO,
}


def deal(plan: TriplePlan, rng: np.random.Generator | int, ring: Ring = RING64) -> tuple[TripleSet, TripleSet]:
    """Trusted dealer: sample all correlated randomness in ``plan`` and share it.

    Output is a deterministic function of the generator state.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    t1, t2 = TripleSet(MODELER, ring), TripleSet(REGULATOR, ring)

    def shared(secret):
        s1, s2 = split(secret, rng, ring=ring)
        return s1.values, s2.values

    def both(name, pairs):
        setattr(t1, name, Pool({k: v[0] for k, v in pairs.items()}, name=name))
        setattr(t2, name, Pool({k: v[1] for k, v in pairs.items()}, name=name))

    for (m, k, l), count in sorted(plan.matmul.items()):
        a = _random(ring, rng, (count, m, k))
        b = _random(ring, rng, (count, k, l))
        c = ring.reduce(np.matmul(a, b))
        sa, sb, sc = shared(a), shared(b), shared(c)
        name = f"matmul {m}x{k}x{l}"
        t1.matmul[(m, k, l)] = Pool({"a": sa[0], "b": sb[0], "c": sc[0]}, name=name)
        t2.matmul[(m, k, l)] = Pool({"a": sa[1], "b": sb[1], "c": sc[1]}, name=name)

    n = plan.hadamard
    a, b = _random(ring, rng, (n,)), _random(ring, rng, (n,))
    both("hadamard", {"a": shared(a), "b": shared(b), "c": shared(ring.reduce(a * b))})

    n = plan.conversion
    rho = _random(ring, rng, (n,))
    both("conversion", {"arith": shared(rho), "xor": xor_split(rho, rng, ring)})

    n = plan.edabit
    rho = _random(ring, rng, (n,))
    bits = (rho[:, None] >> np.arange(ring.bits, dtype=np.uint64)) & np.uint64(1)
    both("edabit", {"bits": shared(bits), "xor": xor_split(rho, rng, ring)})

    n = plan.and_words(ring.bits)
    a, b = _random(ring, rng, (n,)), _random(ring, rng, (n,))
    both("and_words", {"a": xor_split(a, rng, ring), "b": xor_split(b, rng, ring),
                       "c": xor_split(a & b, rng, ring)})

    n = plan.odd
    a = _random(ring, rng, (n,))
    r = ring.reduce(_random(ring, rng, (n,)) | np.uint64(1))
    both("odd", {"a": shared(a), "r": shared(r), "c": shared(ring.reduce(a * r))})

    both("zero", {"z": shared(np.zeros(plan.zero, dtype=np.uint64))})
    return t1, t2
