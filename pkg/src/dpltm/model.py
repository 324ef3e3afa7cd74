"""Partially linear transformation model: likelihood, scores and prediction.

The linear predictor of a record is ``phi = H(T) + beta'Z + g(X)`` and the
log-likelihood contribution is

    delta * log H'(T) + delta * log lambda(phi) - Lambda(phi)

with ``lambda``/``Lambda`` the error hazard and cumulative hazard.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import SurvivalDataset
from .error_family import ErrorModel
from .net import DeepNet
from .spline import MonotoneSpline, SplineBasis, SplineDesign

HPRIME_FLOOR = 1e-10
MODEL_FORMAT = "dpltm-model/1"


@dataclass
class DpltmParams:
    beta: np.ndarray
    spline: MonotoneSpline
    net: DeepNet
    error: ErrorModel
    g_offset: float = 0.0

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=float).reshape(-1)

    def copy(self) -> "DpltmParams":
        return DpltmParams(self.beta.copy(),
                           MonotoneSpline(self.spline.basis, self.spline.gamma_tilde.copy()),
                           self.net.copy(), self.error, self.g_offset)

    def g(self, X) -> np.ndarray:
        """Nonparametric component (eval mode), net of the centering offset."""
        out = self.net(np.asarray(X, dtype=float))
        return out[..., 0] - self.g_offset

    def H(self, t):
        return self.spline.H(t)

    def H_deriv(self, t):
        return self.spline.H_deriv(t)

    def linear(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        return Z @ self.beta if self.beta.size else np.zeros(Z.shape[:-1])

    def risk_score(self, Z, X) -> np.ndarray:
        """``beta'Z + g(X)``; larger means earlier events."""
        return self.linear(Z) + self.g(X)


@dataclass
class PreparedData:
    """A dataset with its spline design cached for repeated likelihood evaluation."""

    data: SurvivalDataset
    design: SplineDesign

    @classmethod
    def build(cls, data: SurvivalDataset, basis: SplineBasis) -> "PreparedData":
        return cls(data, SplineDesign.from_times(basis, data.time))


def _prepare(params: DpltmParams, data) -> PreparedData:
    if isinstance(data, PreparedData):
        if data.design.basis is not params.spline.basis and data.design.basis != params.spline.basis:
            raise ValueError("prepared data uses a different spline basis")
        return data
    return PreparedData.build(data, params.spline.basis)


def _check_dims(params: DpltmParams, data: SurvivalDataset) -> None:
    if data.p != params.beta.size:
        raise ValueError(f"data has {data.p} linear covariates, model has {params.beta.size}")
    if data.d != params.net.widths[0]:
        raise ValueError(f"data has {data.d} nonparametric covariates, network expects {params.net.widths[0]}")


def phi(params: DpltmParams, data) -> np.ndarray:
    prep = _prepare(params, data)
    _check_dims(params, prep.data)
    H, _ = prep.design.values(params.spline.gamma_tilde)
    return H + params.linear(prep.data.Z) + params.g(prep.data.X)


def phi_score(params: DpltmParams, data) -> np.ndarray:
    prep = _prepare(params, data)
    return params.error.phi_score(phi(params, prep), prep.data.status)


def loglik_terms(params: DpltmParams, data) -> np.ndarray:
    prep = _prepare(params, data)
    _check_dims(params, prep.data)
    H, Hp = prep.design.values(params.spline.gamma_tilde)
    ph = H + params.linear(prep.data.Z) + params.g(prep.data.X)
    delta = prep.data.status
    err = params.error
    return (delta * np.log(np.maximum(Hp, HPRIME_FLOOR)) + delta * err.log_hazard(ph)
            - err.cum_hazard(ph))


def loglik(params: DpltmParams, data) -> float:
    return float(np.sum(loglik_terms(params, data)))


@dataclass
class Gradient:
    beta: np.ndarray
    gamma_tilde: np.ndarray
    net: list = field(default_factory=list)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.beta, self.gamma_tilde] + [g.ravel() for g in self.net])

    def scaled(self, c: float) -> "Gradient":
        return Gradient(self.beta * c, self.gamma_tilde * c, [g * c for g in self.net])


def loglik_grad(params: DpltmParams, data, rng=None):
    """Log-likelihood (summed) and its gradient with respect to every free parameter.

    With the network in train mode and dropout active, ``rng`` drives the masks and
    both value and gradient refer to the realised masks.
    """
    prep = _prepare(params, data)
    d = prep.data
    _check_dims(params, d)
    gt = params.spline.gamma_tilde
    H, Hp = prep.design.values(gt)
    gout, tape = params.net.forward(d.X, rng)
    ph = H + params.linear(d.Z) + gout[:, 0] - params.g_offset
    delta = d.status
    err = params.error
    Hp_f = np.maximum(Hp, HPRIME_FLOOR)
    value = float(np.sum(delta * np.log(Hp_f) + delta * err.log_hazard(ph) - err.cum_hazard(ph)))
    score = err.phi_score(ph, delta)
    g_beta = d.Z.T @ score
    g_gamma = prep.design.backprop(gt, score, delta / Hp_f)
    g_net, _ = params.net.backward(tape, score[:, None])
    return value, Gradient(g_beta, g_gamma, g_net)


def finalize_centering(params: DpltmParams, train_data: SurvivalDataset) -> DpltmParams:
    """Center ``g`` on the training sample and move the shift into the spline level.

    The linear predictor of every record is unchanged.
    """
    out = params.copy()
    raw = out.net(train_data.X)[:, 0]
    offset = float(np.mean(raw))
    shift = offset - params.g_offset
    out.g_offset = offset
    out.spline.gamma_tilde[0] += shift
    return out


def predict_survival(params: DpltmParams, Z, X, t) -> np.ndarray:
    """``S(t | Z, X)`` for every record (rows of ``Z``/``X``) at time(s) ``t``.

    Scalar ``t`` gives one value per record; an array of times gives a
    ``(records, times)`` matrix.  Times outside the spline domain are clamped.
    """
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    H = params.H(t_arr)
    score = params.risk_score(np.atleast_2d(Z), np.atleast_2d(X))
    S = params.error.survival(score[:, None] + H[None, :])
    return S[:, 0] if np.ndim(t) == 0 else S


def predict_event_prob(params: DpltmParams, Z, X, t0) -> np.ndarray:
    return 1.0 - predict_survival(params, Z, X, t0)


def params_to_dict(params: DpltmParams) -> dict:
    return {
        "error_r": params.error.r,
        "spline": {**params.spline.basis.to_dict(),
                   "knots": params.spline.basis.knots.tolist(),
                   "gamma_tilde": params.spline.gamma_tilde.tolist()},
        "beta": params.beta.tolist(),
        "net": params.net.to_dict(),
        "g_offset": params.g_offset,
    }


def params_from_dict(d: dict) -> DpltmParams:
    s = d["spline"]
    basis = SplineBasis(int(s["order"]), int(s["interior_knots"]), float(s["lower"]), float(s["upper"]))
    return DpltmParams(np.array(d["beta"], dtype=float),
                       MonotoneSpline(basis, np.array(s["gamma_tilde"], dtype=float)),
                       DeepNet.from_dict(d["net"]), ErrorModel(float(d["error_r"])),
                       float(d["g_offset"]))


def save_model(params: DpltmParams, path, metadata: dict | None = None) -> None:
    doc = {"format": MODEL_FORMAT, "params": params_to_dict(params), "metadata": metadata or {}}
    Path(path).write_text(json.dumps(doc, indent=1))


def load_model(path):
    """Returns ``(params, metadata)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    return params_from_dict(doc["params"]), doc.get("metadata", {})
