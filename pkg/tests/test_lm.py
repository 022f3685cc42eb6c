import numpy as np

from phenoscan.calib.lm import forward_jacobian, levenberg_marquardt, null_space_dim


def rosenbrock(x):
    return np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])


def test_rosenbrock_minimum():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0])
    assert res.converged
    np.testing.assert_allclose(res.x, [1, 1], atol=1e-6)
    assert np.all(np.diff(res.costs) < 0)


def test_start_at_optimum_accepts_nothing():
    res = levenberg_marquardt(rosenbrock, [1.0, 1.0])
    assert res.n_accepted == 0
    assert res.cost == 0


def test_iteration_cap():
    res = levenberg_marquardt(rosenbrock, [-1.2, 1.0], max_iter=2)
    assert not res.converged
    assert res.n_iter == 2


def test_linear_least_squares_matches_lstsq():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(30, 4))
    b = rng.normal(size=30)
    res = levenberg_marquardt(lambda x: A @ x - b, np.zeros(4))
    np.testing.assert_allclose(res.x, np.linalg.lstsq(A, b, rcond=None)[0], atol=1e-6)


def test_forward_jacobian_linear():
    A = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
    x = np.array([0.5, -2.0])
    J = forward_jacobian(lambda v: A @ v, x, A @ x)
    np.testing.assert_allclose(J, A, rtol=1e-6)


def test_null_space_dim():
    J = np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 1.0]])
    assert null_space_dim(J) == 1
    assert null_space_dim(np.eye(3)) == 0
