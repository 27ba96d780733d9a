"""Run configuration shared by the MPC trainer and the plaintext references."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

from .fixedpoint import FRAC_BITS


@dataclass(frozen=True)
class TrainConfig:
    eta_theta: float = 1e-4
    eta_lambda: float = 0.05
    epochs: int = 10
    batch_log2: int = 6
    block: int = 256
    frac_bits: int = FRAC_BITS
    seed: int = 0
    sigmoid: str = "pw"  # pw | exact | chebyshev (the last two are float-only)

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if not 0 <= self.batch_log2 < 31:
            raise ValueError("batch_log2 out of range")
        if self.block < 1 or self.block & (self.block - 1):
            raise ValueError("block size must be a power of two")
        if self.sigmoid not in ("pw", "exact", "chebyshev"):
            raise ValueError(f"unknown sigmoid {self.sigmoid!r}")

    @property
    def batch(self) -> int:
        return 1 << self.batch_log2

    def xi_bce(self, epoch: int) -> float:
        """Weight of the loss gradient in epoch ``epoch`` (1-based)."""
        return self.epochs / (self.epochs + epoch)

    def xi_con(self, epoch: int) -> float:
        """Weight of the constraint gradient in epoch ``epoch`` (1-based)."""
        return (self.epochs + 10 * epoch) / self.epochs

    def with_(self, **kw) -> "TrainConfig":
        return replace(self, **kw)

    def as_dict(self) -> dict:
        return asdict(self)


def check_sizes(n: int, cfg: TrainConfig) -> int:
    """Validate n against batch and block sizes; returns the effective block size."""
    if n < 1 or n & (n - 1):
        raise ValueError(f"number of training examples must be a power of two, got {n}")
    if n % cfg.batch:
        raise ValueError(f"n={n} is not a multiple of the batch size {cfg.batch}")
    return min(cfg.block, n)
