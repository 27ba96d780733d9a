"""Operations on secret-shared values for one party of a two-party session.

Both parties run the same code on their own shares; every interaction goes
through :meth:`Session.open` (or its one-sided variant) so the set of values
that ever leave a party is easy to audit.

Multiplication uses Beaver triples. Sign extraction (``msb``) follows the
edaBit recipe: open ``x + rho`` for a dealer-supplied ``rho`` known in both
arithmetic and xor-shared form, then subtract ``rho`` bitwise with a borrow
circuit whose AND gates consume binary Beaver triples. The resulting
xor-shared bit is turned into an arithmetic sharing with one Hadamard triple.
This stands in for the garbled-circuit comparison of the original two-server
protocol and keeps a single sharing backend.

Two borrow circuits are available. ``ripple`` walks the bit positions one AND
round at a time (l - 2 rounds for a sign bit). ``prefix`` is a bitsliced
Kogge-Stone scan over whole words: ceil(log2 l) rounds of two word-wide ANDs
each. Both give identical results; ``prefix`` is the default because the
online phase is dominated by round count.

Truncation comes in two flavours:

``local``
    Each party arithmetic-shifts its own share. Off by at most one unit in the
    last place, except with probability about ``2^(l + 1 - 64)`` for plaintexts
    bounded by ``2^l``.
``exact``
    Dealer-assisted: open ``x + 2^62 + rho`` and recover ``floor(x / 2^k)``
    from the public value, the arithmetic bits of ``rho`` and two borrow bits
    of the ripple circuit. Deterministic, so an MPC run can be compared
    bit-for-bit with a plaintext fixed-point run.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import BadBlockSize, FairMPCError, PeerAborted, ShapeMismatch
from .fixedpoint import FRAC_BITS, RING64, Ring, encode, trunc
from .sharing import CIRCUITS, MODELER, REGULATOR, Share, TripleSet, concat, prefix_levels
from .transport import LocalTransport, Tag, Transport

log = logging.getLogger(__name__)

TRUNC_MODES = ("local", "exact")

# Every value a party may ever see opened falls in one of these categories.
OPEN_KINDS = frozenset({
    "beaver",      # masked e/f of a Beaver multiplication
    "and",         # masked e/f bits of a binary AND gate
    "masked",      # x + rho for comparison / exact truncation
    "eq_product",  # r * (x - y) with secret odd r
    "verdict",     # aggregate fairness outcome (violation count)
    "decision",    # a verified decision bit
    "output",      # protocol output delivered to its recipient
})


@dataclass
class OpenRecord:
    kind: str
    step: int
    size: int
    values: np.ndarray | None = None


@dataclass
class Session:
    """State of one party in a two-party computation."""

    party: int
    transport: Transport
    triples: TripleSet
    frac_bits: int = FRAC_BITS
    trunc_mode: str = "local"
    ring: Ring = RING64
    rng: np.random.Generator = None
    keep_opened: bool = False
    opened: list[OpenRecord] = field(default_factory=list)
    circuit: str = "prefix"

    def __post_init__(self):
        if self.trunc_mode not in TRUNC_MODES:
            raise ValueError(f"trunc_mode must be one of {TRUNC_MODES}")
        if self.circuit not in CIRCUITS:
            raise ValueError(f"circuit must be one of {CIRCUITS}")
        if self.rng is None:
            self.rng = np.random.default_rng()

    # -- plumbing -----------------------------------------------------------

    @property
    def step(self) -> int:
        return self.transport.step

    def share(self, values) -> Share:
        return Share(self.party, values, self.ring)

    def public(self, values) -> Share:
        """Sharing of a public constant: (c, 0)."""
        values = self.ring.reduce(np.asarray(values, dtype=np.uint64))
        return self.share(values if self.party == MODELER else np.zeros_like(values))

    def zeros(self, shape) -> Share:
        return self.share(np.zeros(shape, dtype=np.uint64))

    def _record(self, kind: str, values: np.ndarray) -> None:
        assert kind in OPEN_KINDS, kind
        self.opened.append(OpenRecord(kind, self.step, values.size,
                                      values.copy() if self.keep_opened else None))

    def _open_raw(self, mine: np.ndarray, kind: str) -> np.ndarray:
        peer = self.transport.exchange(Tag.OPEN, mine.reshape(-1))
        if peer.payload.size != mine.size:
            raise ShapeMismatch(f"peer opened {peer.payload.size} values, expected {mine.size}")
        out = self.ring.reduce(mine.reshape(-1) + peer.payload).reshape(mine.shape)
        self._record(kind, out)
        return out

    def open(self, x: Share, kind: str = "output") -> np.ndarray:
        """Reconstruct ``x`` at both parties."""
        return self._open_raw(x.values, kind)

    def open_to(self, x: Share, receiver: int, kind: str = "output") -> np.ndarray | None:
        """Reconstruct ``x`` at ``receiver`` only; the other party learns nothing."""
        if self.party == receiver:
            peer = self.transport.exchange(Tag.SYNC, (), expect={Tag.OPEN})
            if peer.payload.size != x.values.size:
                raise ShapeMismatch("peer share has the wrong size")
            out = self.ring.reduce(x.values.reshape(-1) + peer.payload).reshape(x.shape)
            self._record(kind, out)
            return out
        self.transport.exchange(Tag.OPEN, x.values, expect={Tag.SYNC})
        return None

    def input(self, values, owner: int, shape) -> Share:
        """Secret-share a private input held by ``owner``; others pass ``values=None``."""
        if self.party == owner:
            x = self.ring.reduce(np.asarray(values, dtype=np.uint64)).reshape(shape)
            mask = self.ring.random(self.rng, shape)
            self.transport.exchange(Tag.SHARE_IN, mask, expect={Tag.SYNC})
            return self.share(x - mask)
        peer = self.transport.exchange(Tag.SYNC, (), expect={Tag.SHARE_IN})
        if peer.payload.size != int(np.prod(shape, dtype=np.int64)):
            raise ShapeMismatch("shared input has the wrong size")
        return self.share(peer.payload.reshape(shape))

    def send_share_to(self, x: Share, receiver: int) -> np.ndarray | None:
        """Hand our share to ``receiver``, who reconstructs; used for final outputs."""
        return self.open_to(x, receiver, kind="output")

    # -- arithmetic ---------------------------------------------------------

    def matmul(self, x: Share, y: Share) -> Share:
        """Beaver matrix product, exact in the ring (no rescaling).

        Accepts 2-D operands or stacks of them with a common leading dimension.
        """
        xv, yv = x.values, y.values
        stacked = xv.ndim == 3
        if not stacked:
            xv, yv = xv[None], yv[None]
        if xv.ndim != 3 or yv.ndim != 3 or xv.shape[0] != yv.shape[0] or xv.shape[2] != yv.shape[1]:
            raise ShapeMismatch(f"cannot multiply {x.shape} by {y.shape}")
        count, m, k = xv.shape
        l = yv.shape[2]
        t = self.triples.take_matmul(m, k, l, count)
        e_sh, f_sh = xv - t["a"], yv - t["b"]
        both = self._open_raw(np.concatenate([e_sh.reshape(-1), f_sh.reshape(-1)]), "beaver")
        e = both[: e_sh.size].reshape(e_sh.shape)
        f = both[e_sh.size:].reshape(f_sh.shape)
        z = np.matmul(e, t["b"]) + np.matmul(t["a"], f) + t["c"]
        if self.party == MODELER:
            z = z + np.matmul(e, f)
        z = self.ring.reduce(z)
        return self.share(z if stacked else z[0])

    def hadamard(self, x: Share, y: Share) -> Share:
        """Elementwise Beaver product, exact in the ring."""
        if x.shape != y.shape:
            raise ShapeMismatch(f"elementwise product of {x.shape} and {y.shape}")
        n = x.values.size
        t = self.triples.hadamard.take(n)
        e_sh = x.values.reshape(-1) - t["a"]
        f_sh = y.values.reshape(-1) - t["b"]
        both = self._open_raw(np.concatenate([e_sh, f_sh]), "beaver")
        e, f = both[:n], both[n:]
        z = e * t["b"] + f * t["a"] + t["c"]
        if self.party == MODELER:
            z = z + e * f
        return self.share(z.reshape(x.shape))

    def trunc(self, x: Share, bits: int) -> Share:
        """Divide by 2^bits (rounding toward minus infinity, up to the mode's error)."""
        if bits == 0 or x.values.size == 0:
            return x
        if self.trunc_mode == "exact":
            return self._trunc_exact(x, bits)
        return self.share(trunc(x.values, bits, self.ring))

    def mul_public(self, x: Share, k_raw, bits: int | None = None) -> Share:
        """Multiply by a public fixed-point constant (raw encoding) and rescale."""
        return self.trunc(x.scale(k_raw), self.frac_bits if bits is None else bits)

    # -- boolean circuitry ---------------------------------------------------

    def _and(self, x: np.ndarray, y: np.ndarray, triples: dict[str, np.ndarray], pos: int) -> np.ndarray:
        """AND of xor-shared bit vectors using bit ``pos`` of the packed triples."""
        sh = np.uint64(pos)
        one = np.uint64(1)
        a = (triples["a"] >> sh) & one
        b = (triples["b"] >> sh) & one
        c = (triples["c"] >> sh) & one
        both = self._open_raw(np.concatenate([x ^ a, y ^ b]), "and")
        n = len(x)
        e, f = both[:n] & one, both[n:] & one
        z = c ^ (e & b) ^ (f & a)
        if self.party == MODELER:
            z = z ^ (e & f)
        return z

    def _borrows(self, c: np.ndarray, rho_xor: np.ndarray, upto: int, want: tuple[int, ...]):
        """Xor-shares of the borrow into bit positions ``want`` of ``c - rho``.

        ``c`` is public, ``rho`` xor-shared; every position in ``want`` is at most ``upto``.
        Returns {position: shared bit as 0/1 words}.
        """
        if self.circuit == "ripple":
            return self._ripple_borrows(c, rho_xor, upto, want)
        return self._prefix_borrows(c, rho_xor, want)

    def _ripple_borrows(self, c: np.ndarray, rho_xor: np.ndarray, upto: int, want: tuple[int, ...]):
        """Xor-shares of the borrow into each bit position of ``c - rho``.

        ``c`` is public, ``rho`` xor-shared. Returns {position: borrow share} for
        positions in ``want`` (each <= ``upto``). One AND per position 1..upto-1.
        """
        one = np.uint64(1)
        ands = self.triples.and_words.take(len(c))
        out = {}
        beta = np.zeros(len(c), dtype=np.uint64)
        for i in range(upto):
            if i in want:
                out[i] = beta
            c_i = ((c >> np.uint64(i)) & one).astype(bool)
            r_i = (rho_xor >> np.uint64(i)) & one
            if i == 0:
                t = np.zeros_like(beta)
            else:
                t = self._and(r_i, beta, ands, i)
            beta = np.where(c_i, t, r_i ^ beta ^ t)
        if upto in want:
            out[upto] = beta
        return out

    def _and_words(self, x: np.ndarray, y: np.ndarray, triples: dict[str, np.ndarray]) -> np.ndarray:
        """Bitwise AND of xor-shared words."""
        mask = self.ring.mask
        n = len(x)
        mine = np.concatenate([x ^ triples["a"], y ^ triples["b"]]) & mask
        peer = self.transport.exchange(Tag.OPEN, mine)
        if peer.payload.size != 2 * n:
            raise ShapeMismatch(f"peer opened {peer.payload.size} words, expected {2 * n}")
        both = mine ^ peer.payload
        self._record("and", both)
        e, f = both[:n], both[n:]
        z = triples["c"] ^ (e & triples["b"]) ^ (f & triples["a"])
        if self.party == MODELER:
            z = z ^ (e & f)
        return z & mask

    def _prefix_borrows(self, c: np.ndarray, rho_xor: np.ndarray, want: tuple[int, ...]):
        """Kogge-Stone scan; bit i of the group-generate word is the borrow out of position i."""
        mask = self.ring.mask
        one = np.uint64(1)
        n = len(c)
        not_c = ~c & mask
        gen = rho_xor & not_c                                   # borrow generated: c_i = 0, rho_i = 1
        prop = rho_xor ^ not_c if self.party == MODELER else rho_xor  # passed on: c_i == rho_i
        levels = prefix_levels(self.ring.bits)
        ands = self.triples.and_words.take(2 * levels * n)
        for lv in range(levels):
            k = np.uint64(1 << lv)
            t = {key: v[2 * lv * n:2 * (lv + 1) * n] for key, v in ands.items()}
            res = self._and_words(np.concatenate([prop, prop]),
                                  np.concatenate([(gen << k) & mask, (prop << k) & mask]), t)
            gen, prop = gen ^ res[:n], res[n:]
        out = {}
        for j in want:
            out[j] = np.zeros(n, np.uint64) if j == 0 else (gen >> np.uint64(j - 1)) & one
        return out

    def b2a(self, bits: np.ndarray) -> Share:
        """Convert an xor-shared bit vector into an arithmetic sharing of 0/1."""
        mine = self.share(bits)
        zero = self.zeros(bits.shape)
        x, y = (mine, zero) if self.party == MODELER else (zero, mine)
        prod = self.hadamard(x, y)
        return x + y - prod.scale(2)

    def msb(self, x: Share) -> Share:
        """Arithmetic sharing of the two's-complement sign bit of each entry."""
        shape = x.shape
        n = x.values.size
        if n == 0:
            return x
        ell = self.ring.bits
        conv = self.triples.conversion.take(n)
        c = self._open_raw(x.values.reshape(-1) + conv["arith"], "masked")
        top = np.uint64(ell - 1)
        one = np.uint64(1)
        beta = self._borrows(c, conv["xor"], ell - 1, (ell - 1,))[ell - 1]
        bit = ((conv["xor"] >> top) & one) ^ beta
        if self.party == MODELER:
            bit = bit ^ ((c >> top) & one)
        return self.b2a(bit).reshape(shape)

    def _trunc_exact(self, x: Share, bits: int) -> Share:
        ell = self.ring.bits
        if not 1 <= bits <= ell - 2:
            raise ValueError(f"shift {bits} out of range")
        shape = x.shape
        n = x.values.size
        ed = self.triples.edabit.take(n)
        weights = np.uint64(1) << np.arange(ell, dtype=np.uint64)
        rho = self.ring.reduce((ed["bits"] * weights).sum(axis=1, dtype=np.uint64))
        offset = np.uint64(1) << np.uint64(ell - 2)
        v = self.share(x.values.reshape(-1)).add_public(offset)
        c = self._open_raw(v.values + rho, "masked")
        borrows = self._borrows(c, ed["xor"], ell, (bits, ell))
        b = self.b2a(np.concatenate([borrows[bits], borrows[ell]]))
        borrow_lo, wrap = b[:n], b[n:]
        hi_w = np.zeros(ell, dtype=np.uint64)
        hi_w[bits:] = np.uint64(1) << np.arange(ell - bits, dtype=np.uint64)
        rho_hi = self.share((ed["bits"] * hi_w).sum(axis=1, dtype=np.uint64))
        out = (wrap.scale(np.uint64(1) << np.uint64(ell - bits)) - rho_hi - borrow_lo)
        out = out.add_public(self.ring.reduce((c >> np.uint64(bits)) - (offset >> np.uint64(bits))))
        return out.reshape(shape)

    # -- higher-level operations ----------------------------------------------

    def const(self, value: float) -> np.ndarray:
        return encode(value, self.frac_bits, ring=self.ring)

    def sigmoid_pw(self, v: Share) -> Share:
        """Piecewise-linear sigmoid: 0 below -1/2, x + 1/2 in between, 1 above 1/2.

        Computed as b1 * (v + 1/2) + b2 * (1/2 - v) with b1 = [v >= -1/2],
        b2 = [v >= 1/2]; both sign tests share one msb call.
        """
        half = self.const(0.5)
        up = v.add_public(half)
        down = v.add_public(self.ring.reduce(np.uint64(0) - half))
        n = v.values.size
        neg = self.msb(concat([up.reshape(-1), down.reshape(-1)]))
        keep = (-neg).add_public(np.uint64(1))
        pieces = concat([up.reshape(-1), (-v).add_public(half).reshape(-1)])
        prod = self.hadamard(keep, pieces)
        return (prod[:n] + prod[n:]).reshape(v.shape)

    def eq_test(self, x: Share, y: Share, receiver: int = REGULATOR) -> bool | None:
        """Open r_j * (x_j - y_j) to ``receiver`` for secret odd r_j; accept iff all zero.

        Exact: an odd r is a unit mod 2^l, so the product vanishes only when the
        difference does. On reject the receiver learns at most the 2-adic
        valuation of each nonzero difference.
        """
        d = (x - y).values.reshape(-1)
        n = d.size
        t = self.triples.odd.take(n)
        e = self._open_raw(d - t["a"], "beaver")
        z = self.share(e * t["r"] + t["c"])
        opened = self.open_to(z, receiver, kind="eq_product")
        if opened is None:
            return None
        return bool(np.all(opened == 0))

    def rerandomize(self, x: Share) -> Share:
        """Add a dealer zero-sharing so the new shares are independent of the old ones."""
        z = self.triples.zero.take(x.values.size)["z"]
        return self.share(x.values + z.reshape(x.shape))


def blocked_mult_shift_avg(session: Session, zc_t: Share, x: Share, block: int) -> Share:
    """(1/n) * Zc^T X for Zc^T of shape (p, n) and X of shape (n, d).

    The n axis is cut into blocks of ``block`` rows; each block product is
    normalised by the block size (shift by frac_bits + log2 b), the block
    results are summed, and the sum is divided by n/b. Every division is a
    power-of-two truncation.
    """
    p, n = zc_t.shape
    if x.shape[0] != n:
        raise ShapeMismatch(f"inner dimensions differ: {zc_t.shape} @ {x.shape}")
    d = x.shape[1]
    _check_block(n, block)
    nb = n // block
    left = zc_t.reshape(p, nb, block).values.transpose(1, 0, 2)
    right = x.values.reshape(nb, block, d)
    prods = session.matmul(session.share(np.ascontiguousarray(left)), session.share(right))
    prods = session.trunc(prods, session.frac_bits + _log2(block))
    total = session.share(prods.values.sum(axis=0, dtype=np.uint64))
    return session.trunc(total, _log2(nb))


def _log2(v: int) -> int:
    return int(v).bit_length() - 1


def is_pow2(v: int) -> bool:
    return v > 0 and v & (v - 1) == 0


def _check_block(n: int, block: int) -> None:
    if not is_pow2(block) or not is_pow2(n) or n % block:
        raise BadBlockSize(f"need power-of-two block size dividing a power-of-two n (n={n}, b={block})")


def run_local(modeler_fn, regulator_fn, triples: tuple[TripleSet, TripleSet], *,
              seeds: tuple[int, int] | None = None, timeout: float = 600.0, record: bool = False,
              **session_kw):
    """Run both parties in threads over an in-process transport.

    Each ``*_fn`` receives its :class:`Session`. Returns ``(result_1, result_2,
    sessions)``. If either side raises, the peer is aborted and the original
    error is re-raised.
    """
    t1, t2 = LocalTransport.pair(timeout=timeout, record=record)
    seeds = seeds or (None, None)
    sessions = (
        Session(MODELER, t1, triples[0], rng=np.random.default_rng(seeds[0]), **session_kw),
        Session(REGULATOR, t2, triples[1], rng=np.random.default_rng(seeds[1]), **session_kw),
    )
    results: list = [None, None]
    errors: list = [None, None]

    def target(i, fn):
        try:
            results[i] = fn(sessions[i])
        except BaseException as exc:  # propagate to the caller thread
            errors[i] = exc
            code = exc.exit_code if isinstance(exc, FairMPCError) else 1
            sessions[i].transport.abort(code)

    threads = [threading.Thread(target=target, args=(i, fn), daemon=True)
               for i, fn in enumerate((modeler_fn, regulator_fn))]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    primary = [e for e in errors if e is not None and not isinstance(e, PeerAborted)]
    if primary:
        raise primary[0]
    if any(errors):
        raise next(e for e in errors if e is not None)
    return results[0], results[1], sessions
