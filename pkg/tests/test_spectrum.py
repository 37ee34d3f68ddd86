import numpy as np
import pytest

from samlab.errors import ConfigError
from samlab.models import GraphFunction, quadratic
from samlab.spectrum import dense_hessian, hessian_spectrum


def test_diagonal_quadratic_top_three():
    rep = hessian_spectrum(quadratic(np.diag([5.0, 2.0, 1.0, 0.5])), np.zeros(4), None, k=3)
    np.testing.assert_allclose(rep.eigenvalues, [5.0, 2.0, 1.0], atol=1e-6)
    assert all(rep.converged)
    assert all(it <= 100 for it in rep.iterations)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_rotated_quadratic_seed_robust(seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(6, 6)))
    eig = np.array([4.0, -3.0, 1.5, 1.0, 0.5, 0.1])
    m = q @ np.diag(eig) @ q.T
    rep = hessian_spectrum(quadratic(m), np.ones(6), None, k=2, seed=seed)
    assert rep.eigenvalues[0] == pytest.approx(4.0, abs=1e-6)
    assert rep.eigenvalues[1] == pytest.approx(-3.0, abs=1e-4)


def test_two_parameter_nonquadratic_against_dense():
    f = GraphFunction(lambda g, w: g.add(g.mul(g.sin(g.index(w, 0)), g.exp(g.index(w, 1))),
                                         g.square(g.square(g.index(w, 0)))), 2)
    w = np.array([0.7, 0.3])
    expected = np.sort(np.abs(np.linalg.eigvalsh(dense_hessian(f, w, None))))[::-1]
    rep = hessian_spectrum(f, w, None, k=2)
    np.testing.assert_allclose(np.abs(rep.eigenvalues), expected, rtol=1e-5)


def test_csv_rows():
    rep = hessian_spectrum(quadratic(np.diag([2.0, 1.0])), np.zeros(2), None, k=2)
    assert rep.header() == ["rank", "eigenvalue", "iterations", "residual", "converged"]
    assert rep.rows()[0][0] == "1" and rep.rows()[0][4] == "true"


@pytest.mark.parametrize("kwargs", [{"k": 0}, {"k": 3}, {"iters": 0}])
def test_invalid_arguments(kwargs):
    with pytest.raises(ConfigError):
        hessian_spectrum(quadratic(np.eye(2)), np.zeros(2), None, **kwargs)
