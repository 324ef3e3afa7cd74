"""Evaluation metrics: relative error of g, WISE of H, C-index and ICI."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid
from statsmodels.duration.hazard_regression import PHReg

from .model import predict_event_prob

log = logging.getLogger(__name__)


def relative_error_g(g_hat, g0) -> float:
    """``sqrt(mean[((g_hat - mean g_hat) - g0)^2] / mean[g0^2])`` over the evaluation sample."""
    g_hat = np.asarray(g_hat, dtype=float)
    g0 = np.asarray(g0, dtype=float)
    if g_hat.shape != g0.shape:
        raise ValueError("g_hat and g0 must have the same shape")
    den = np.mean(g0 ** 2)
    if den == 0:
        raise ValueError("true g0 is identically zero on the evaluation sample")
    return float(np.sqrt(np.mean((g_hat - g_hat.mean() - g0) ** 2) / den))


def wise_h(H_hat, H0, T_max: float, grid_size: int = 1000) -> float:
    """Trapezoidal ``(1/T_max) * int_0^T_max (H_hat - H0)^2 dt``.

    ``H_hat`` and ``H0`` are callables on arrays.  When ``H0(0)`` is not finite
    (``log t``), the grid starts at its first positive node.
    """
    if not T_max > 0:
        raise ValueError("T_max must be positive")
    t = np.linspace(0.0, T_max, grid_size + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        try:
            h0_first = np.asarray(H0(t[:1]), dtype=float)
            finite0 = bool(np.all(np.isfinite(h0_first)))
        except ValueError:
            finite0 = False
    if not finite0:
        t = t[1:]
    diff = np.asarray(H_hat(t), dtype=float) - np.asarray(H0(t), dtype=float)
    return float(trapezoid(diff ** 2, t) / T_max)


def c_index(scores, times, events, chunk: int = 2048) -> float:
    """Concordance as the literal double sum

    ``sum_ij delta_i 1(T_i <= T_j) 1(s_i >= s_j) / sum_ij delta_i 1(T_i <= T_j)``

    including ``i == j``.  Higher scores mean higher risk.
    """
    s = np.asarray(scores, dtype=float).reshape(-1)
    t = np.asarray(times, dtype=float).reshape(-1)
    e = np.asarray(events, dtype=float).reshape(-1)
    if not s.shape == t.shape == e.shape:
        raise ValueError("scores, times and events must have equal length")
    num = den = 0.0
    for start in range(0, s.size, chunk):
        sl = slice(start, start + chunk)
        comparable = t[sl, None] <= t[None, :]
        w = e[sl, None] * comparable
        den += w.sum()
        num += (w * (s[sl, None] >= s[None, :])).sum()
    if den == 0:
        raise ValueError("no comparable pairs")
    return float(num / den)


def percentile_times(times, events) -> dict:
    """25th/50th/75th percentiles of the observed event times (linear interpolation)."""
    t = np.asarray(times, dtype=float)[np.asarray(events) == 1]
    if t.size == 0:
        raise ValueError("no observed events")
    q = np.percentile(t, [25, 50, 75])
    return {"t25": float(q[0]), "t50": float(q[1]), "t75": float(q[2])}


def restricted_cubic_basis(x, knots) -> np.ndarray:
    """Natural (restricted) cubic spline basis: ``x`` plus ``len(knots) - 2`` cubic terms."""
    x = np.asarray(x, dtype=float)
    k = np.asarray(knots, dtype=float)
    K = k.size
    cols = [x]
    scale = (k[-1] - k[0]) ** 2
    pos = lambda u: np.maximum(u, 0.0) ** 3  # noqa: E731
    for j in range(K - 2):
        term = (pos(x - k[j])
                - pos(x - k[K - 2]) * (k[K - 1] - k[j]) / (k[K - 1] - k[K - 2])
                + pos(x - k[K - 1]) * (k[K - 2] - k[j]) / (k[K - 1] - k[K - 2]))
        cols.append(term / scale)
    return np.column_stack(cols)


def _breslow_cumhaz(times, events, eta, t0) -> float:
    order = np.argsort(times, kind="stable")
    t = times[order]
    e = events[order]
    risk = np.exp(eta[order] - eta.max())
    at_risk = np.cumsum(risk[::-1])[::-1]
    total = 0.0
    for tk in np.unique(t[(e == 1) & (t <= t0)]):
        first = np.searchsorted(t, tk, side="left")
        d = np.sum((t == tk) & (e == 1))
        total += d / at_risk[first]
    return total * np.exp(-eta.max())


def _ph_linear_predictor(times, events, design):
    """Centred PH linear predictor, or ``None`` when the fit does not converge.

    Columns are standardised and the partial likelihood is maximised with BFGS;
    plain Newton steps from zero overshoot on these spline designs.
    """
    sd = design.std(axis=0)
    if np.any(sd <= 0):
        return None
    design = (design - design.mean(axis=0)) / sd
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            res = PHReg(times, design, status=events, ties="breslow").fit(
                method="bfgs", maxiter=500, disp=False)
        except np.linalg.LinAlgError:
            return None
        coef = np.asarray(res.params)
        if not np.all(np.isfinite(coef)):
            return None
        # PHRegResults drops the optimiser status, so check stationarity directly
        if np.max(np.abs(res.model.score(coef))) > 1e-3 * max(events.sum(), 1.0):
            return None
    return design @ coef


def ici(pred_prob, times, events, t0: float, df: int = 4) -> float:
    """Integrated calibration index at horizon ``t0``.

    Observed probabilities come from a proportional-hazards calibration model
    with a restricted cubic spline (``df`` terms) in ``log(-log(1 - P_hat))`` and
    a Breslow baseline cumulative hazard evaluated at ``t0``.  If the spline fit
    fails, a linear term is used, and then no covariate at all.
    """
    P = np.asarray(pred_prob, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=float)
    if np.any((P <= 0) | (P >= 1)):
        raise ValueError("predicted probabilities must lie strictly inside (0, 1)")
    x = np.log(-np.log1p(-P))
    designs = []
    n_unique = np.unique(np.round(x, 12)).size
    if n_unique > 1 and np.ptp(x) > 1e-10 and events.sum() > 0:
        if n_unique > df + 1:
            knots = np.quantile(x, np.linspace(0.05, 0.95, df + 1))
            if np.all(np.diff(knots) > 0):
                designs.append(restricted_cubic_basis(x, knots))
        designs.append(x[:, None])
    eta = None
    for design in designs:
        eta = _ph_linear_predictor(times, events, design)
        if eta is not None:
            break
        log.info("ICI calibration fit with %d column(s) did not converge", design.shape[1])
    if eta is None:
        eta = np.zeros_like(x)
    cumhaz0 = _breslow_cumhaz(times, events, eta, t0)
    observed = -np.expm1(-cumhaz0 * np.exp(eta))
    return float(np.mean(np.abs(observed - P)))


@dataclass
class EvalReport:
    c_index: float
    ici: dict = field(default_factory=dict)
    re_g: float | None = None
    wise_h: float | None = None

    def to_dict(self) -> dict:
        d = {"c_index": self.c_index}
        d.update({f"ici_{k}": v for k, v in self.ici.items()})
        if self.re_g is not None:
            d["re_g"] = self.re_g
        if self.wise_h is not None:
            d["wise_h"] = self.wise_h
        return d


def evaluate(params, test, truth=None, t0=None, T_max: float | None = None,
             wise_grid: int = 1000) -> EvalReport:
    """C-index and ICI always; RE and WISE when simulation truth is given.

    ``t0`` defaults to the event-time quartiles of ``test``.  ``T_max`` defaults to
    the upper end of the fitted spline domain (the largest training time).
    """
    score = params.risk_score(test.Z, test.X)
    horizons = percentile_times(test.time, test.status) if t0 is None else (
        dict(t0) if isinstance(t0, dict) else {f"t{i}": float(v) for i, v in enumerate(np.atleast_1d(t0))})
    ici_vals = {}
    for label, h in horizons.items():
        P = np.clip(predict_event_prob(params, test.Z, test.X, h), 1e-12, 1 - 1e-12)
        ici_vals[label] = ici(P, test.time, test.status, h)
    report = EvalReport(c_index(score, test.time, test.status), ici_vals)
    if truth is not None:
        report.re_g = relative_error_g(params.g(test.X), truth.g0)
        T_max = params.spline.basis.upper if T_max is None else T_max
        report.wise_h = wise_h(params.H, truth.H0, T_max, wise_grid)
    return report
