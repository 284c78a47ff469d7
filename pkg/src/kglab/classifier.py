"""Payne–Sattinger membership of sub-threshold initial data.

PS_plus collects data with E < h0 and K >= 0, PS_minus those with E < h0 and
K < 0.  Data at or above the threshold are reported as NotCovered.  The
comparisons are applied to the raw quadrature values with no tolerance band.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FieldState, RadialGrid, ValidationError, check_finite
from .functionals import evaluate_functionals

PS_PLUS = "PS_plus"
PS_MINUS = "PS_minus"
NOT_COVERED = "NotCovered"
LABELS = (PS_PLUS, PS_MINUS, NOT_COVERED)


@dataclass(frozen=True)
class Classification:
    label: str
    E: float
    K: float
    h0: float

    @property
    def energy_ratio(self) -> float:
        return self.E / self.h0


def label_for(E: float, K: float, h0: float) -> str:
    """E < h0 is strict, K >= 0 is weak (so K == 0 lands in PS_plus)."""
    if not E < h0:
        return NOT_COVERED
    return PS_PLUS if K >= 0 else PS_MINUS


def classify(u0, u1, h0: float, grid: RadialGrid) -> Classification:
    """Classify data (u0, u1) given as nodal values of u and u_t.

    A :class:`FieldState` may be passed as ``u0``, in which case ``u1`` is
    ignored and may be ``None``.
    """
    if not np.isfinite(h0) or h0 <= 0:
        raise ValidationError(f"threshold h0 must be positive and finite, got {h0}")
    if isinstance(u0, FieldState):
        state = u0
    else:
        u0 = np.asarray(u0, dtype=float)
        u1 = np.zeros_like(u0) if u1 is None else np.asarray(u1, dtype=float)
        check_finite(u0, "u0")
        check_finite(u1, "u1")
        state = FieldState.from_u(grid, u0, u1)
    rec = evaluate_functionals(state, grid)
    return Classification(label_for(rec.E, rec.K, h0), rec.E, rec.K, h0)


def scaled_ground_state_prediction(lam: float) -> tuple[float, int]:
    """Closed-form (E/h0, sign K) for data (lam Q, 0).

    Uses ||Q||_{H^1}^2 = ||Q||_4^4 = 4 h0, so E/h0 = 2 lam^2 - lam^4 and
    K/(4 h0) = lam^2 - lam^4.
    """
    ratio = 2.0 * lam**2 - lam**4
    k = lam**2 - lam**4
    return ratio, int(np.sign(k))
