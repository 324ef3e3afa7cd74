import numpy as np
import pytest
from scipy.stats import norm

from conftest import random_dataset, random_params
from dpltm.data import SurvivalDataset
from dpltm.error_family import ErrorModel
from dpltm.errors import SingularInformationError
from dpltm.inference import (DirectionConfig, _Frozen, direction_objective, direction_objective_grad,
                             estimate_directions, information_bound, information_from_scores, infer,
                             normal_two_sided_p, wald_report)
from dpltm.model import DpltmParams
from dpltm.net import DeepNet
from dpltm.spline import MonotoneSpline, build_basis


def test_objective_gradient_matches_finite_differences(rng):
    data = random_dataset(rng, n=15, p=2, d=3)
    params = random_params(rng, data, 0.5, knots=2, layers=1, width=4)
    fr = _Frozen.build(params, data)
    a = rng.normal(size=(params.spline.basis.n_basis, 2))
    net = DeepNet([rng.normal(size=(4, 3)), rng.normal(size=(2, 4))], [rng.normal(size=4), rng.normal(size=2)])
    value, g_a, g_net = direction_objective_grad(fr, a, net)
    assert value == pytest.approx(direction_objective(params, data, a, net))
    h = 1e-6
    for P, G in [(a, g_a)] + list(zip(net.params(), g_net)):
        for idx in np.ndindex(P.shape):
            old = P[idx]
            P[idx] = old + h
            up = direction_objective_grad(fr, a, net)[0]
            P[idx] = old - h
            dn = direction_objective_grad(fr, a, net)[0]
            P[idx] = old
            fd = (up - dn) / (2 * h)
            assert abs(G[idx] - fd) <= 1e-5 * max(1.0, abs(fd))


def test_representable_target_reaches_zero():
    # Z is a spline of T, all records censored with r=0 and phi=0, so Phi = -1 everywhere
    n = 200
    t = np.linspace(0.1, 2.0, n)
    basis = build_basis(4, 3, 0.1, 2.0)
    gt = np.full(basis.n_basis, -300.0)
    gt[0] = 0.0
    spline = MonotoneSpline(basis, gt)
    coef = np.random.default_rng(0).normal(size=basis.n_basis)
    z = basis.eval(t)[0] @ coef
    data = SurvivalDataset(t, np.zeros(n), z[:, None], np.zeros((n, 1)))
    params = DpltmParams(np.zeros(1), spline, DeepNet.zeros((1, 2, 1)), ErrorModel(0.0))
    fr = _Frozen.build(params, data)
    assert np.allclose(fr.Phi, -1.0)
    zero_b = DeepNet.zeros((1, 2, 1))
    assert direction_objective(params, data, coef[:, None], zero_b) == pytest.approx(0.0, abs=1e-20)


def test_objective_nonincreasing_with_small_lr(rng):
    data = random_dataset(rng, n=60)
    params = random_params(rng, data, 0.0)
    d = estimate_directions(params, data, DirectionConfig(epochs=60, learning_rate=1e-4))
    assert np.all(np.diff(d.objective_curve) <= 1e-12)
    assert d.a_coef.shape == (params.spline.basis.n_basis, 2)
    assert d.b_net.widths == (5, 10, 10, 2)


def test_information_examples():
    n = 50
    I, I_inv = information_from_scores(np.full((n, 1), 3.0))
    assert I[0, 0] == pytest.approx(9.0)
    rep = wald_report([0.2], I_inv, n)
    assert rep.se[0] == pytest.approx(1.0 / (3.0 * np.sqrt(n)))


def test_information_outer_product_oracle(rng):
    S = rng.normal(size=(80, 3))
    I, I_inv = information_from_scores(S)
    oracle = sum(np.outer(s, s) for s in S) / len(S)
    assert np.allclose(I, oracle, atol=1e-14)
    assert np.max(np.abs(I - I.T)) <= 1e-10
    assert np.linalg.eigvalsh(I).min() >= -1e-8
    assert np.allclose(I @ I_inv, np.eye(3), atol=1e-10)


def test_singular_information_names_pair(rng):
    s = rng.normal(size=(40, 1))
    S = np.hstack([s, rng.normal(size=(40, 1)), 2 * s])
    with pytest.raises(SingularInformationError, match="age.*weight|weight.*age"):
        information_from_scores(S, ["age", "stage", "weight"])


def test_wald_examples():
    rep = wald_report([0.0], [[4.0]], 100)
    assert rep.z[0] == 0.0 and rep.p_value[0] == 1.0
    se = rep.se[0]
    rep = wald_report([1.96 * se], [[4.0]], 100)
    assert rep.p_value[0] == pytest.approx(0.05, abs=1e-3)
    assert rep.ci_high[0] - rep.ci_low[0] == 2 * 1.96 * se
    rep90 = wald_report([0.1], [[4.0]], 100, level=0.9)
    assert rep90.ci_high[0] - 0.1 == pytest.approx(norm.ppf(0.95) * se, rel=1e-12)


def test_normal_p_values():
    z = np.linspace(-6, 6, 101)
    assert np.allclose(normal_two_sided_p(z), 2 * norm.sf(np.abs(z)), atol=1e-12)


def test_report_layout():
    rep = wald_report([0.5, -0.01], np.diag([1.0, 2.0]), 400, ["age", "grade"])
    table = rep.table().splitlines()
    assert table[0].split() == ["Covariate", "EST", "ESE", "Statistic", "p-value"]
    assert table[1].startswith("age")
    assert rep.to_csv().splitlines()[0] == "covariate,estimate,se,ci_low,ci_high,statistic,p_value"
    assert '"coefficients"' in rep.to_json()


def test_infer_end_to_end(rng):
    data = random_dataset(rng, n=80)
    params = random_params(rng, data, 1.0)
    report, info = infer(params, data, DirectionConfig(epochs=20))
    assert report.names == data.z_names
    assert np.all(report.se > 0) and np.all((report.p_value >= 0) & (report.p_value <= 1))
    again = information_bound(params, data, info.directions)
    assert np.array_equal(again.I_hat, info.I_hat)
