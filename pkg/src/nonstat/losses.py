"""Loss functions on predictions in [0, 1] against binary labels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

ABSOLUTE = "absolute"
LOG = "log"
BRIER = "brier"
KINDS = (ABSOLUTE, LOG, BRIER)


class NotMixable(ValueError):
    """Raised when a mixability constant is requested for a non-mixable loss."""


@dataclass(frozen=True)
class LossKind:
    """A loss family plus the truncation level used by the log-loss.

    Attributes
    ----------
    kind : str
        One of ``"absolute"``, ``"log"`` or ``"brier"``.
    truncation_alpha : float
        Predictions are clamped into ``[alpha, 1 - alpha]`` before the
        log-loss is evaluated. Ignored by the other kinds.
    """

    kind: str = ABSOLUTE
    truncation_alpha: float = 0.01

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if not 0.0 < self.truncation_alpha < 0.5:
            raise ValueError("truncation_alpha must lie in (0, 1/2)")

    @property
    def bound(self) -> float:
        """Upper bound on the loss value."""
        if self.kind == LOG:
            return -float(np.log(self.truncation_alpha))
        return 1.0

    @property
    def mixable(self) -> bool:
        return self.kind != ABSOLUTE


def absolute() -> LossKind:
    return LossKind(ABSOLUTE)


def logarithmic(alpha: float) -> LossKind:
    return LossKind(LOG, alpha)


def brier() -> LossKind:
    return LossKind(BRIER)


def from_name(name: str, alpha: float = 0.01) -> LossKind:
    """Parse a CLI loss name (``absolute``, ``log`` or ``brier``)."""
    return LossKind(name, alpha)


def clamp(yhat: ArrayLike, alpha: float) -> ArrayLike:
    return np.clip(yhat, alpha, 1.0 - alpha)


def eval_loss(kind: LossKind, yhat: ArrayLike, y: ArrayLike) -> ArrayLike:
    """Evaluate the loss elementwise; broadcasts over numpy arrays."""
    if kind.kind == ABSOLUTE:
        out = np.abs(np.subtract(yhat, y))
    elif kind.kind == BRIER:
        out = np.square(np.subtract(yhat, y))
    else:
        p = clamp(yhat, kind.truncation_alpha)
        out = np.where(np.asarray(y) == 1, -np.log(p), -np.log1p(-p))
    if np.ndim(out) == 0:
        return float(out)
    return out


def mixability_eta(kind: LossKind) -> float:
    """Largest learning rate for which the loss is mixable."""
    if kind.kind == LOG:
        return 1.0
    if kind.kind == BRIER:
        return 2.0
    raise NotMixable(f"{kind.kind} loss is not mixable")
