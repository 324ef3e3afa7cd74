"""Efficient-score inference for the linear coefficients.

The least favorable direction ``(a*, b*)`` is estimated by minimising

    (1/n) sum_i || (Z_i - a(T_i) - b(X_i)) Phi_i - delta_i a'(T_i) / H'(T_i) ||^2

with ``a`` an unconstrained spline on the basis of the fitted ``H`` and ``b`` a
ReLU network with ``p`` outputs.  The per-record efficient scores then give the
information estimate ``I = (1/n) sum s_i s_i'`` and Wald standard errors
``sqrt(diag(I^-1) / n)``.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .data import SurvivalDataset
from .errors import NumericalError, SingularInformationError
from .model import HPRIME_FLOOR, DpltmParams, PreparedData, phi_score
from .net import DeepNet, hidden_widths
from .simulator import make_rng
from .trainer import Adam

Z95 = 1.96
MAX_CONDITION = 1e12


@dataclass(frozen=True)
class DirectionConfig:
    epochs: int = 1000            # 100 leaves the objective visibly unconverged
    learning_rate: float = 2e-3
    hidden_layers: int = 2
    hidden_width: int = 10
    dropout_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or not self.learning_rate > 0:
            raise ValueError("direction fitting needs epochs >= 1 and a positive learning rate")
        if self.hidden_layers < 0 or self.hidden_width < 1 or not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("invalid direction network settings")


@dataclass
class Directions:
    """Fitted least favorable direction: spline coefficients ``(q, p)`` and a ``p``-output net."""

    a_coef: np.ndarray
    b_net: DeepNet
    objective_curve: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class _Frozen:
    """Quantities of the fitted model that stay fixed while the direction is estimated."""

    Z: np.ndarray
    X: np.ndarray
    B: np.ndarray
    D: np.ndarray
    Phi: np.ndarray
    w: np.ndarray          # delta / H'(T)

    @classmethod
    def build(cls, params: DpltmParams, data: SurvivalDataset) -> "_Frozen":
        prep = PreparedData.build(data, params.spline.basis)
        _, Hp = prep.design.values(params.spline.gamma_tilde)
        Phi = phi_score(params, prep)
        return cls(data.Z, data.X, prep.design.B, prep.design.D, Phi,
                   data.status / np.maximum(Hp, HPRIME_FLOOR))


def _scores(fr: _Frozen, a_coef, b_out):
    a = fr.B @ a_coef
    ap = fr.D @ a_coef
    return (fr.Z - a - b_out) * fr.Phi[:, None] - fr.w[:, None] * ap


def direction_objective(params: DpltmParams, data: SurvivalDataset, a_coef, b_net: DeepNet) -> float:
    fr = _Frozen.build(params, data)
    s = _scores(fr, a_coef, b_net(fr.X))
    return float(np.sum(s * s) / data.n)


def direction_objective_grad(fr: _Frozen, a_coef, b_net: DeepNet, rng=None):
    """Objective value and gradients ``(d a_coef, d b_net params)``."""
    n = fr.Z.shape[0]
    b_out, tape = b_net.forward(fr.X, rng)
    s = _scores(fr, a_coef, b_out)
    G = 2.0 * s / n
    PG = fr.Phi[:, None] * G
    g_a = -(fr.B.T @ PG) - fr.D.T @ (fr.w[:, None] * G)
    g_net, _ = b_net.backward(tape, -PG)
    return float(np.sum(s * s) / n), g_a, g_net


def estimate_directions(params: DpltmParams, data: SurvivalDataset,
                        config: DirectionConfig = DirectionConfig()) -> Directions:
    p = params.beta.size
    if p == 0:
        raise ValueError("no linear coefficients to make inference on")
    fr = _Frozen.build(params, data)
    rng = make_rng(config.seed, 21)
    q = params.spline.basis.n_basis
    a_coef = np.zeros((q, p))
    b_net = DeepNet.init(hidden_widths(data.d, config.hidden_layers, config.hidden_width, p),
                         config.dropout_rate, rng)
    opt = Adam([a_coef] + b_net.params(), config.learning_rate)
    curve = []
    for epoch in range(1, config.epochs + 1):
        b_net.train(True)
        value, g_a, g_net = direction_objective_grad(fr, a_coef, b_net, rng)
        b_net.eval()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite direction objective at epoch {epoch}")
        opt.step([g_a] + g_net)
        curve.append(value)
    final = float(np.sum(_scores(fr, a_coef, b_net(fr.X)) ** 2) / data.n)
    if not np.isfinite(final):
        raise NumericalError("non-finite direction objective after the last epoch")
    curve.append(final)
    return Directions(a_coef, b_net, np.array(curve))


@dataclass
class InfoBoundEstimate:
    I_hat: np.ndarray
    I_hat_inv: np.ndarray
    scores: np.ndarray
    directions: Directions | None = None
    converged: bool = True


def efficient_scores(params: DpltmParams, data: SurvivalDataset, directions: Directions) -> np.ndarray:
    fr = _Frozen.build(params, data)
    return _scores(fr, directions.a_coef, directions.b_net(fr.X))


def information_from_scores(scores, names=None) -> tuple:
    """``(I, I^-1)`` from per-record score vectors; raises on near-singular ``I``."""
    S = np.atleast_2d(np.asarray(scores, dtype=float))
    if S.shape[0] == 1 and S.ndim == 2 and S.shape[1] != 1 and np.ndim(scores) == 1:
        S = S.T
    n, p = S.shape
    I = S.T @ S / n
    I = 0.5 * (I + I.T)
    cond = np.linalg.cond(I) if np.all(np.isfinite(I)) else np.inf
    if not cond < MAX_CONDITION:
        names = names or [f"beta{j + 1}" for j in range(p)]
        if p == 1:
            pair = (names[0], names[0])
        else:
            dsq = np.sqrt(np.clip(np.diag(I), 1e-300, None))
            corr = np.abs(I / np.outer(dsq, dsq))
            np.fill_diagonal(corr, -1.0)
            i, j = np.unravel_index(np.argmax(corr), corr.shape)
            if np.diag(I).min() <= 0:
                i = j = int(np.argmin(np.diag(I)))
            pair = (names[min(i, j)], names[max(i, j)])
        raise SingularInformationError(
            f"information matrix is singular (condition {cond:.3g}); offending coefficients {pair}")
    I_inv = np.linalg.solve(I, np.eye(p))
    return I, 0.5 * (I_inv + I_inv.T)


def information_bound(params: DpltmParams, data: SurvivalDataset, directions: Directions,
                      names=None) -> InfoBoundEstimate:
    S = efficient_scores(params, data, directions)
    I, I_inv = information_from_scores(S, names)
    return InfoBoundEstimate(I, I_inv, S, directions)


@dataclass
class InferenceReport:
    names: list
    estimate: np.ndarray
    se: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    z: np.ndarray
    p_value: np.ndarray
    level: float = 0.95

    def rows(self) -> list:
        return [{"covariate": nm, "estimate": float(e), "se": float(s), "ci_low": float(lo),
                 "ci_high": float(hi), "statistic": float(z), "p_value": float(p)}
                for nm, e, s, lo, hi, z, p in zip(self.names, self.estimate, self.se, self.ci_low,
                                                  self.ci_high, self.z, self.p_value)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=list(self.rows()[0]) if self.names else ["covariate"])
        w.writeheader()
        for row in self.rows():
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        return buf.getvalue()

    def to_json(self) -> str:
        return json.dumps({"level": self.level, "coefficients": self.rows()}, indent=1)

    def table(self) -> str:
        lines = [f"{'Covariate':<16}{'EST':>10}{'ESE':>10}{'Statistic':>11}{'p-value':>10}"]
        for row in self.rows():
            pv = "<0.0001" if row["p_value"] < 1e-4 else f"{row['p_value']:.4f}"
            lines.append(f"{row['covariate']:<16}{row['estimate']:>10.4f}{row['se']:>10.4f}"
                         f"{row['statistic']:>11.4f}{pv:>10}")
        return "\n".join(lines)


def normal_two_sided_p(z):
    return 2.0 * ndtr(-np.abs(np.asarray(z, dtype=float)))


def wald_report(beta, I_hat_inv, n: int, names=None, level: float = 0.95) -> InferenceReport:
    beta = np.asarray(beta, dtype=float).reshape(-1)
    I_hat_inv = np.atleast_2d(I_hat_inv)
    se = np.sqrt(np.diag(I_hat_inv) / n)
    crit = Z95 if level == 0.95 else float(ndtri(0.5 + level / 2.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, np.where(beta == 0, 0.0, np.sign(beta) * np.inf))
    names = list(names) if names is not None else [f"z{j + 1}" for j in range(beta.size)]
    return InferenceReport(names, beta, se, beta - crit * se, beta + crit * se, z,
                           normal_two_sided_p(z), level)


def infer(params: DpltmParams, data: SurvivalDataset, config: DirectionConfig = DirectionConfig(),
          level: float = 0.95):
    """Directions, information estimate and Wald report for a fitted model on ``data``."""
    directions = estimate_directions(params, data, config)
    info = information_bound(params, data, directions, data.z_names)
    return wald_report(params.beta, info.I_hat_inv, data.n, data.z_names, level), info
