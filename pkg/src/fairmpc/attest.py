"""Fairness certification and decision verification.

Certification checks |A theta| <= c on shares and opens only the number of
violated rows to the regulator. Afterwards both parties add a dealer
zero-sharing to their shares of theta; the regulator's re-randomized share is
the commitment. It is useless on its own, and together with the modeler's
complementary share it pins down theta exactly.

Verification re-inputs a model, compares it to the committed one with an
odd-mask equality test opened to the regulator, and evaluates the decision
x^T theta >= 0 for the user's features. The prediction phase always runs, so
the modeler's view does not depend on whether the models matched; the
regulator simply discards the decision when they did not.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import container
from .container import ObjectType
from .errors import NoCommitment, ShapeMismatch
from .fairtrain import _msb_cost, _trunc_cost, build_constraint, center_sensitive, setup_plan, setup_rounds
from .fairtrain import msb_rounds, trunc_rounds
from .fixedpoint import encode
from .mpc import Session
from .sharing import MODELER, REGULATOR, Share, TriplePlan, concat, trivial_share

_SAFE_ID = re.compile(r"^[A-Za-z0-9_.-]+$")


@dataclass
class Commitment:
    session_id: str
    share: np.ndarray
    party: int = REGULATOR
    created: float = 0.0

    @property
    def dimension(self) -> int:
        return int(self.share.size)

    def paths(self, directory) -> tuple[Path, Path]:
        if not _SAFE_ID.match(self.session_id):
            raise ValueError(f"unsafe session id {self.session_id!r}")
        stem = Path(directory) / f"commit-{self.session_id}-p{self.party}"
        return stem.with_suffix(".fpsh"), stem.with_suffix(".json")

    def save(self, directory) -> Path:
        blob, meta = self.paths(directory)
        blob.parent.mkdir(parents=True, exist_ok=True)
        container.write(blob, self.share.reshape(-1, 1), self.party, ObjectType.COMMITMENT)
        meta.write_text(json.dumps({"session_id": self.session_id, "party": self.party,
                                    "dimension": self.dimension, "created": self.created}, indent=1))
        return blob

    @classmethod
    def load(cls, directory, session_id: str, party: int = REGULATOR) -> "Commitment":
        probe = cls(session_id, np.zeros(0, np.uint64), party)
        blob, meta = probe.paths(directory)
        if not blob.exists() or not meta.exists():
            raise NoCommitment(f"no commitment for session {session_id!r} in {directory}")
        info = json.loads(meta.read_text())
        values, stored_party, _ = container.read(blob, ObjectType.COMMITMENT)
        values = values.reshape(-1)
        if stored_party != party or info["dimension"] != values.size:
            raise NoCommitment(f"commitment files for {session_id!r} are inconsistent")
        return cls(session_id, values, party, float(info["created"]))


@dataclass
class Verdict:
    violations: int

    @property
    def fair(self) -> bool:
        return self.violations == 0

    def __str__(self) -> str:
        return f"{'fair' if self.fair else 'unfair'} ({self.violations} violated constraint(s))"


@dataclass
class Verification:
    model_match: bool
    decision_match: bool | None
    decisions: np.ndarray | None = None


# -- certification ---------------------------------------------------------------------

def certify(session: Session, theta_raw, d: int, x: Share, z: Share, c, block: int = 256,
            session_id: str = "session") -> tuple[Verdict | None, Commitment]:
    """Check a model against the fairness constraint.

    ``theta_raw`` is the modeler's raw model (``None`` at the regulator); ``x``
    is the sharing of the regulator's features. Returns the verdict at the
    regulator (``None`` at the modeler) and this party's commitment share.
    """
    f = session.frac_bits
    theta = session.input(theta_raw, MODELER, (d,))
    if x.shape[1] != d:
        raise ShapeMismatch(f"model has {d} coordinates, features have {x.shape[1]}")
    con = build_constraint(session, center_sensitive(session, z), x, c, block)
    p = con.p
    u = session.trunc(session.matmul(con.A, theta.reshape(d, 1)).reshape(-1), f)
    # F > 0  <=>  u - c - 1 >= 0  or  -u - c - 1 >= 0; the two cannot both hold for c >= 0
    off = session.ring.reduce(np.uint64(0) - encode(con.c, f) - np.uint64(1))
    neg = session.msb(concat([u.add_public(off), (-u).add_public(off)]))
    viol = (-neg).add_public(np.uint64(1))
    count = session.share(viol.values.sum(dtype=np.uint64).reshape(1))
    opened = session.open_to(count, REGULATOR, kind="verdict")
    committed = session.rerandomize(theta)
    commitment = Commitment(session_id, committed.values.copy(), session.party, time.time())
    if opened is None:
        return None, commitment
    return Verdict(int(opened[0])), commitment


def certify_plan(n: int, d: int, p: int, block: int = 256, mode: str = "local",
                 circuit: str = "prefix") -> TriplePlan:
    plan = setup_plan(n, d, p, block, mode, circuit)
    plan = plan + TriplePlan(matmul={(p, d, 1): 1}, zero=d, circuit=circuit)
    return plan + _trunc_cost(p, mode, circuit) + _msb_cost(2 * p, circuit)


def certify_rounds(n: int, block: int = 256, mode: str = "local", circuit: str = "prefix") -> int:
    """Input of theta, setup, one product, one truncation, one sign test, the verdict."""
    return 1 + setup_rounds(n, block, mode, circuit) + 1 + trunc_rounds(mode, circuit) + msb_rounds(circuit) + 1


# -- verification ------------------------------------------------------------------------

def verify(session: Session, theta_raw, commitment: Commitment, x_user=None, y_claimed=None,
           k: int = 1) -> Verification | None:
    """Check a re-submitted model against the commitment and recompute decisions.

    The modeler passes ``theta_raw``; the regulator passes the user's features
    ``x_user`` (k x d, with bias column) and claimed decisions. The regulator
    gets a :class:`Verification`; the modeler gets ``None``.
    """
    if commitment is None:
        raise NoCommitment("no commitment for this session")
    d = commitment.dimension
    f = session.frac_bits
    theta = session.input(theta_raw, MODELER, (d,))
    match = session.eq_test(theta, session.share(commitment.share), receiver=REGULATOR)

    if session.party == REGULATOR:
        x_user = np.atleast_2d(np.asarray(x_user, dtype=np.float64))
        if x_user.shape != (k, d):
            raise ShapeMismatch(f"expected user features of shape {(k, d)}, got {x_user.shape}")
        xs = trivial_share(encode(x_user, f), session.party, REGULATOR)
    else:
        xs = session.zeros((k, d))
    score = session.matmul(xs, theta.reshape(d, 1)).reshape(-1)
    positive = (-session.msb(score)).add_public(np.uint64(1))
    dec = session.open_to(positive, REGULATOR, kind="decision")
    if dec is None:
        return None
    dec = dec.astype(np.int64)
    if not match:
        return Verification(False, None, None)
    claimed = np.asarray(y_claimed).reshape(-1).astype(np.int64)
    return Verification(True, bool(np.array_equal(dec, claimed)), dec)


def verify_plan(d: int, k: int = 1, circuit: str = "prefix") -> TriplePlan:
    return TriplePlan(matmul={(k, d, 1): 1}, odd=d, circuit=circuit) + _msb_cost(k, circuit)


def verify_rounds(circuit: str = "prefix") -> int:
    """Input, eq-test (masked difference, product to the regulator), product, sign test, decision."""
    return 1 + 2 + 1 + msb_rounds(circuit) + 1
