import numpy as np
import pytest

from dpltm.data import SurvivalDataset
from dpltm.error_family import ErrorModel
from dpltm.model import DpltmParams
from dpltm.net import DeepNet, hidden_widths
from dpltm.spline import MonotoneSpline, build_basis


def random_dataset(rng, n=50, p=2, d=5):
    return SurvivalDataset(rng.uniform(0.1, 3.0, n), (rng.random(n) < 0.6).astype(float),
                           rng.normal(size=(n, p)), rng.uniform(0, 2, size=(n, d)))


def random_params(rng, data, r=0.0, knots=4, layers=2, width=10):
    basis = build_basis(4, knots, float(data.time.min()), float(data.time.max()))
    spline = MonotoneSpline(basis, rng.normal(-0.5, 0.5, basis.n_basis))
    widths = hidden_widths(data.d, layers, width)
    net = DeepNet([rng.normal(0, 0.5, (o, i)) for i, o in zip(widths[:-1], widths[1:])],
                  [rng.normal(0, 0.5, o) for o in widths[1:]])
    return DpltmParams(rng.normal(size=data.p), spline, net, ErrorModel(r))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
