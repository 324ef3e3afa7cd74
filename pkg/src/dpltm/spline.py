"""Clamped B-spline bases and monotone splines for the transformation function.

A monotone spline ``H(t) = sum_j gamma_j B_j(t)`` has nondecreasing coefficients,
obtained from free parameters ``gamma_tilde`` by ``gamma_1 = gamma_tilde_1`` and
``gamma_j = gamma_{j-1} + exp(gamma_tilde_j)``.  Writing ``w = (gamma_tilde_1,
exp(gamma_tilde_2), ...)`` gives ``gamma = L w`` with ``L`` lower-triangular ones,
so ``H(t) = (B(t) L) w``.  ``B L`` is a reversed cumulative sum of the basis
columns, which is what :class:`SplineDesign` caches for fixed evaluation times.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _safe_div(num, den):
    den = np.asarray(den, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    return out


def cox_de_boor(knots: np.ndarray, order: int, t: np.ndarray) -> np.ndarray:
    """All B-splines of ``order`` on ``knots`` at points ``t`` (inside the knot span).

    Returns an array of shape ``(len(t), len(knots) - order)``.  The right end of
    the span is assigned to the last nondegenerate interval so the basis stays a
    partition of unity at the upper boundary.
    """
    knots = np.asarray(knots, dtype=float)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    m = len(knots) - 1
    left = knots[:-1][None, :]
    right = knots[1:][None, :]
    B = ((t[:, None] >= left) & (t[:, None] < right)).astype(float)
    last = np.nonzero(knots[1:] > knots[:-1])[0][-1]
    at_end = t >= knots[last + 1]
    B[at_end, :] = 0.0
    B[at_end, last] = 1.0
    for k in range(2, order + 1):
        n_next = m + 1 - k
        lo = knots[:n_next]
        w1 = _safe_div(t[:, None] - lo[None, :], (knots[k - 1:k - 1 + n_next] - lo)[None, :])
        hi = knots[k:k + n_next]
        w2 = _safe_div(hi[None, :] - t[:, None], (hi - knots[1:1 + n_next])[None, :])
        B = w1 * B[:, :n_next] + w2 * B[:, 1:n_next + 1]
    return B


@dataclass(frozen=True)
class SplineBasis:
    """Clamped B-spline basis of ``order`` with evenly spaced interior knots on [lower, upper]."""

    order: int
    interior_knots: int
    lower: float
    upper: float
    knots: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.order < 3:
            raise ValueError(f"spline order must be >= 3, got {self.order}")
        if self.interior_knots < 1:
            raise ValueError("need at least one interior knot")
        if not self.lower < self.upper:
            raise ValueError(f"empty spline domain [{self.lower}, {self.upper}]")
        inner = np.linspace(self.lower, self.upper, self.interior_knots + 2)
        knots = np.concatenate([
            np.full(self.order - 1, self.lower), inner, np.full(self.order - 1, self.upper)
        ])
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def n_basis(self) -> int:
        return self.interior_knots + self.order

    @property
    def interior(self) -> np.ndarray:
        return self.knots[self.order:-self.order]

    def clamp(self, t):
        """Clamp ``t`` into the domain; returns ``(t_clamped, was_outside)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        outside = (t < self.lower) | (t > self.upper)
        return np.clip(t, self.lower, self.upper), outside

    def eval(self, t):
        """Basis values, shape ``(n, n_basis)``, and the out-of-domain flags."""
        tc, outside = self.clamp(t)
        return cox_de_boor(self.knots, self.order, tc), outside

    def eval_deriv(self, t):
        """First derivatives of every basis function, shape ``(n, n_basis)``."""
        tc, _ = self.clamp(t)
        l = self.order
        lower = cox_de_boor(self.knots, l - 1, tc)  # n_basis + 1 columns
        q = self.n_basis
        k = self.knots
        den1 = k[l - 1:l - 1 + q] - k[:q]
        den2 = k[l:l + q] - k[1:1 + q]
        return (l - 1) * (_safe_div(lower[:, :q], den1[None, :])
                          - _safe_div(lower[:, 1:q + 1], den2[None, :]))

    def greville(self) -> np.ndarray:
        l = self.order
        return np.array([self.knots[j + 1:j + l].mean() for j in range(self.n_basis)])

    def to_dict(self) -> dict:
        return {"order": self.order, "interior_knots": self.interior_knots,
                "lower": self.lower, "upper": self.upper}


def build_basis(order: int, interior_knots: int, lower: float, upper: float) -> SplineBasis:
    return SplineBasis(int(order), int(interior_knots), float(lower), float(upper))


def default_interior_knots(n: int) -> int:
    return max(1, int(np.floor(n ** (1.0 / 3.0) + 1e-9)))


def gammas_from_free(gamma_tilde) -> np.ndarray:
    gt = np.asarray(gamma_tilde, dtype=float)
    steps = np.concatenate([gt[:1], np.exp(gt[1:])])
    return np.cumsum(steps)


def free_from_gammas(gammas) -> np.ndarray:
    """Inverse of :func:`gammas_from_free`; requires strictly increasing input."""
    g = np.asarray(gammas, dtype=float)
    diffs = np.diff(g)
    if np.any(diffs <= 0):
        raise ValueError("coefficients must be strictly increasing")
    return np.concatenate([g[:1], np.log(diffs)])


def _tail_cumsum(M: np.ndarray) -> np.ndarray:
    return np.cumsum(M[:, ::-1], axis=1)[:, ::-1]


@dataclass
class MonotoneSpline:
    basis: SplineBasis
    gamma_tilde: np.ndarray

    def __post_init__(self):
        self.gamma_tilde = np.asarray(self.gamma_tilde, dtype=float)
        if self.gamma_tilde.shape != (self.basis.n_basis,):
            raise ValueError(f"expected {self.basis.n_basis} spline parameters, "
                             f"got shape {self.gamma_tilde.shape}")

    @classmethod
    def initial(cls, basis: SplineBasis, value: float = -1.0) -> "MonotoneSpline":
        return cls(basis, np.full(basis.n_basis, value))

    @property
    def gammas(self) -> np.ndarray:
        return gammas_from_free(self.gamma_tilde)

    def H(self, t):
        B, _ = self.basis.eval(t)
        return B @ self.gammas

    def H_deriv(self, t):
        return self.basis.eval_deriv(t) @ self.gammas

    def grad_wrt_free(self, t):
        """Jacobians ``dH/dgamma_tilde`` and ``dH'/dgamma_tilde``, each ``(n, n_basis)``."""
        design = SplineDesign.from_times(self.basis, t)
        scale = design.chain_scale(self.gamma_tilde)
        return design.B_tail * scale, design.D_tail * scale

    def design(self, t) -> "SplineDesign":
        return SplineDesign.from_times(self.basis, t)


@dataclass(frozen=True)
class SplineDesign:
    """Cached basis evaluations at fixed times, in the cumulative (``B L``) form."""

    basis: SplineBasis
    B: np.ndarray
    D: np.ndarray
    B_tail: np.ndarray
    D_tail: np.ndarray
    clamped: np.ndarray

    @classmethod
    def from_times(cls, basis: SplineBasis, t) -> "SplineDesign":
        B, clamped = basis.eval(t)
        D = basis.eval_deriv(t)
        return cls(basis, B, D, _tail_cumsum(B), _tail_cumsum(D), clamped)

    @staticmethod
    def weights(gamma_tilde: np.ndarray) -> np.ndarray:
        return np.concatenate([gamma_tilde[:1], np.exp(gamma_tilde[1:])])

    @staticmethod
    def chain_scale(gamma_tilde: np.ndarray) -> np.ndarray:
        return np.concatenate([[1.0], np.exp(gamma_tilde[1:])])

    def values(self, gamma_tilde: np.ndarray):
        w = self.weights(gamma_tilde)
        return self.B_tail @ w, self.D_tail @ w

    def backprop(self, gamma_tilde: np.ndarray, dH: np.ndarray, dHp: np.ndarray) -> np.ndarray:
        """Gradient w.r.t. ``gamma_tilde`` given upstream gradients on ``H`` and ``H'``."""
        return (self.B_tail.T @ dH + self.D_tail.T @ dHp) * self.chain_scale(gamma_tilde)
