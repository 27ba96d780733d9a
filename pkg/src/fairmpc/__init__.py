"""Two-party fair logistic regression with fairness certification and decision verification."""

from .config import TrainConfig
from .errors import FairMPCError
from .fixedpoint import FRAC_BITS, RING64, Ring, decode, encode

__version__ = "0.1.0"

__all__ = ["TrainConfig", "FairMPCError", "FRAC_BITS", "RING64", "Ring", "decode", "encode"]
