"""Logarithmic-transformation error family.

The error term has hazard ``lambda(t) = exp(t) / (1 + r exp(t))`` with ``r >= 0``.
``r = 0`` gives the proportional hazards model (extreme-value error) and ``r = 1``
the proportional odds model (logistic error).

All functions accept scalars or numpy arrays and are evaluated in forms that stay
finite for large ``|t|``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# below this r the closed forms for r > 0 lose precision; use the exact r = 0 branch
R_ZERO_THRESHOLD = 1e-8


@dataclass(frozen=True)
class ErrorModel:
    r: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.r) or self.r < 0:
            raise ValueError(f"error family index r must be finite and >= 0, got {self.r}")

    @property
    def is_ph(self) -> bool:
        return self.r < R_ZERO_THRESHOLD

    def hazard(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_ph:
            return np.exp(t)
        pos = t > 0
        # 1 / (exp(-t) + r) for t > 0 never overflows
        e = np.exp(np.where(pos, -t, t))
        out = np.where(pos, 1.0 / (e + self.r), e / (1.0 + self.r * e))
        return out[()] if out.ndim == 0 else out

    def log_hazard(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_ph:
            return t
        pos = t > 0
        e = np.exp(np.where(pos, -t, t))
        out = np.where(pos, -np.log(e + self.r), t - np.log1p(self.r * e))
        return out[()] if out.ndim == 0 else out

    def hazard_deriv(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_ph:
            return np.exp(t)
        pos = t > 0
        e = np.exp(np.where(pos, -t, t))
        out = np.where(pos, e / (e + self.r) ** 2, e / (1.0 + self.r * e) ** 2)
        return out[()] if out.ndim == 0 else out

    def hazard_ratio_deriv(self, t):
        """``hazard_deriv / hazard``, which simplifies to ``1 / (1 + r exp(t))``."""
        t = np.asarray(t, dtype=float)
        if self.is_ph:
            return np.ones_like(t)[()]
        return 1.0 - self.r * self.hazard(t)

    def cum_hazard(self, t):
        t = np.asarray(t, dtype=float)
        if self.is_ph:
            return np.exp(t)
        r = self.r
        pos = t > 0
        e = np.exp(np.where(pos, -t, t))
        # log(1 + r e^t) = t + log(e^{-t} + r) for t > 0
        out = np.where(pos, (t + np.log(e + r)) / r, np.log1p(r * e) / r)
        return out[()] if out.ndim == 0 else out

    def survival(self, t):
        return np.exp(-self.cum_hazard(t))

    def cdf(self, t):
        return -np.expm1(-self.cum_hazard(t))

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0) | (u >= 1)) or np.any(~np.isfinite(u)):
            raise ValueError("quantile requires 0 < u < 1")
        cum = -np.log1p(-u)
        if self.is_ph:
            out = np.log(cum)
        else:
            out = np.log(np.expm1(self.r * cum) / self.r)
        return out[()] if out.ndim == 0 else out

    def phi_score(self, phi, delta):
        """Derivative of one record's log-likelihood with respect to its linear predictor."""
        return delta * self.hazard_ratio_deriv(phi) - self.hazard(phi)


PROPORTIONAL_HAZARDS = ErrorModel(0.0)
PROPORTIONAL_ODDS = ErrorModel(1.0)
