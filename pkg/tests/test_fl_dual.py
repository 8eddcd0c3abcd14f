import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from fedsched import fl_dual as fd
from fedsched.errors import DomainError, UndefinedRatioError

QUAD = fd.LossSpec("quadratic", 0.5)
LOGI = fd.LossSpec("logistic", 0.1)


@pytest.fixture
def small():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(4, 3))
    y = rng.normal(size=4)
    return X, y


def test_primal_at_zero(small):
    X, y = small
    assert fd.primal_loss(np.zeros(3), X, y, QUAD) == pytest.approx(np.mean(0.5 * y**2))
    with pytest.raises(ValueError):
        fd.primal_loss(np.zeros(0), np.zeros((4, 0)), y, QUAD)
    with pytest.raises(ValueError):
        fd.primal_loss(np.zeros(2), X, y, QUAD)


def test_primal_at_least_regularizer(small):
    X, y = small
    w = np.array([0.3, -1.0, 2.0])
    assert fd.primal_loss(w, X, np.sign(y), LOGI) >= 0.5 * LOGI.xi * w @ w


def test_ridge_closed_form(small):
    X, y = small
    w, f0 = fd.centralized_baseline(X, y, QUAD)
    ridge = np.linalg.solve(X.T @ X / 4 + QUAD.xi * np.eye(3), X.T @ y / 4)
    assert np.allclose(w[:, 0], ridge, atol=1e-12)
    assert f0 == pytest.approx(fd.primal_loss(ridge, X, y, QUAD), abs=1e-14)


def test_dual_zero_and_strong_duality(small):
    X, y = small
    assert fd.dual_objective(np.zeros(4), X, y, QUAD) == 0.0
    _, f0 = fd.centralized_baseline(X, y, QUAD)
    # optimal dual for ridge: theta = y - X w*
    w, _ = fd.centralized_baseline(X, y, QUAD)
    theta = y - X @ w[:, 0]
    assert fd.dual_objective(theta, X, y, QUAD) == pytest.approx(f0, abs=1e-6)


def test_weak_duality_random_points():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(30, 4))
    y = np.where(rng.normal(size=30) > 0, 1.0, -1.0)
    for spec in (QUAD, LOGI):
        _, f0 = fd.centralized_baseline(X, y, spec)
        for _ in range(100):
            theta = rng.uniform(0, 1, 30) * y if spec is LOGI else rng.normal(size=30)
            assert fd.dual_objective(theta, X, y, spec) <= f0 + 1e-9


def test_logistic_dual_domain():
    X = np.eye(2)
    with pytest.raises(DomainError):
        fd.dual_objective(np.array([1.5, 0.0]), X, np.array([1.0, 1.0]), LOGI)


def test_zero_passes_is_noop(small):
    X, y = small
    d, dv = fd.local_dual_update(X, y, np.zeros(4), np.zeros(3), 0, 1.0, QUAD, 4)
    assert not d.any() and not dv.any()


def test_single_sample_quadratic_closed_form():
    rng = np.random.default_rng(2)
    x, y, th, v = rng.normal(size=(1, 5)), np.array([0.7]), np.array([0.2]), rng.normal(size=5)
    D, eta = 9, 2.0
    d, dv = fd.local_dual_update(x, y, th, v, 0, eta, QUAD, D, exact=True)
    spec = QUAD
    # maximize the 1-D surrogate numerically
    res = minimize_scalar(lambda a: -fd.local_surrogate(np.array([a]), th, x, y, v, spec, eta, D, 3))
    assert d[0, 0] == pytest.approx(res.x, abs=1e-7)
    assert np.allclose(dv[:, 0], x[0] * d[0, 0] / (spec.xi * D))


def test_single_sample_logistic_bisection():
    rng = np.random.default_rng(3)
    x, y, th, v = rng.normal(size=(1, 4)), np.array([-1.0]), np.array([-0.3]), 0.1 * rng.normal(size=4)
    d, _ = fd.local_dual_update(x, y, th, v, 1, 1.0, LOGI, 5, bisect_iters=20)
    f = lambda a: -fd.local_surrogate(np.array([[(a * -1.0) - th[0]]]), th, x, y, v, LOGI, 1.0, 5, 2)
    res = minimize_scalar(f, bounds=(1e-12, 1 - 1e-12), method="bounded", options={"xatol": 1e-12})
    assert (th[0] + d[0, 0]) * y[0] == pytest.approx(res.x, abs=2e-6)


@pytest.mark.parametrize("spec", [QUAD, LOGI], ids=["quadratic", "logistic"])
def test_surrogate_non_decreasing_per_pass(spec):
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 6))
    y = np.where(rng.normal(size=50) > 0, 1.0, -1.0)
    th = 0.5 * y if spec is LOGI else np.zeros(50)
    v = 0.1 * rng.normal(size=6)
    prev = fd.local_surrogate(np.zeros(50), th, X, y, v, spec, 2.0, 200, 4)
    for M in range(1, 11):
        d, dv = fd.local_dual_update(X, y, th, v, M, 2.0, spec, 200)
        val = fd.local_surrogate(d, th, X, y, v, spec, 2.0, 200, 4)
        assert val >= prev - 1e-12
        assert np.allclose(dv, X.T @ d / (spec.xi * 200), atol=1e-14)
        prev = val


def test_aggregate():
    v = np.ones((3, 1))
    dvs = [np.full((3, 1), 1.0), np.full((3, 1), 2.0), np.full((3, 1), 4.0)]
    assert np.array_equal(fd.aggregate(v, [False] * 3, dvs), v)
    assert np.array_equal(fd.aggregate(v, [True] * 3, dvs), v + 7)
    assert np.array_equal(fd.aggregate(v, [True, False, True], dvs), v + 5)


def test_measure_beta():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 5))
    y = rng.normal(size=20)
    th, v = np.zeros(20), np.zeros(5)
    args = (QUAD, 4.0, 80, 4)
    best, _ = fd.local_dual_update(X, y, th, v, 0, 4.0, QUAD, 80, exact=True)
    assert fd.measure_beta(X, y, th, v, best, *args) == pytest.approx(0, abs=1e-9)
    with pytest.raises(UndefinedRatioError):
        fd.measure_beta(X, y, th, v, np.zeros(20), *args)
    d10, _ = fd.local_dual_update(X, y, th, v, 10, 4.0, QUAD, 80)
    d1, _ = fd.local_dual_update(X, y, th, v, 1, 4.0, QUAD, 80)
    b10, b1 = fd.measure_beta(X, y, th, v, d10, *args), fd.measure_beta(X, y, th, v, d1, *args)
    assert 0 <= b10 < 1 and 0 < b1 < 1 and b10 <= b1


def test_convergence_bound_values():
    sizes = [2, 1]
    assert fd.convergence_bound(np.zeros((3, 2)), sizes, 0.7) == 3.0
    assert fd.convergence_bound(np.ones((3, 2)), sizes, 0.7) == 3 * 0.7**3
    once = np.array([[1, 0]] * 3)
    assert fd.convergence_bound(once, sizes, 0.7) == pytest.approx(1.536, abs=1e-12)
    with pytest.raises(ValueError):
        fd.convergence_bound(np.zeros((0, 2)), sizes, 0.7)


def test_convergence_bound_monotone():
    rng = np.random.default_rng(6)
    sizes = rng.integers(1, 20, 5)
    for _ in range(100):
        S = rng.integers(0, 2, (8, 5))
        base = fd.convergence_bound(S, sizes, 0.5)
        assert 0 <= base <= sizes.sum()
        S2 = S.copy()
        S2[rng.integers(8), rng.integers(5)] = 1
        assert fd.convergence_bound(S2, sizes, 0.5) <= base + 1e-12
        assert fd.convergence_bound(S, sizes, 0.6) >= base - 1e-12


def test_logistic_baseline_optimality():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(60, 4))
    y = np.where(X @ np.ones(4) + 0.3 * rng.normal(size=60) > 0, 1.0, -1.0)
    w, f0 = fd.centralized_baseline(X, y, LOGI)
    for _ in range(100):
        probe = w[:, 0] + rng.normal(size=4) * rng.uniform(0, 1)
        assert fd.primal_loss(probe, X, y, LOGI) >= f0
    big, _ = fd.centralized_baseline(X, y, fd.LossSpec("logistic", 1e6))
    assert np.abs(big).max() < 1e-5


def test_trainer_consistency_and_rollback():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(40, 3))
    y = np.where(rng.normal(size=40) > 0, 1.0, -1.0)
    rows = np.array_split(np.arange(40), 4)
    tr = fd.DualTrainer(X, y, rows, LOGI, local_passes=3, eta=4.0)
    for t in range(10):
        ks = [k for k in range(4) if (k + t) % 3]
        tr.apply({k: tr.local_update(k) for k in ks})
        assert tr.consistency_error() <= 1e-10
        assert tr.dual() <= tr.primal()
    before = tr.state.theta.copy(), tr.state.v.copy()
    tr.apply({})
    assert np.array_equal(before[0], tr.state.theta) and np.array_equal(before[1], tr.state.v)


def test_labels_and_prediction():
    Y = fd.encode_labels(np.array([0, 1, 1]), 2)
    assert Y[:, 0].tolist() == [-1, 1, 1]
    Y3 = fd.encode_labels(np.array([2, 0]), 3)
    assert Y3.tolist() == [[-1, -1, 1], [1, -1, -1]]
    W = np.eye(3)
    assert fd.predict_labels(np.array([[0, 0, 5.0], [1, 0, 0]]), W).tolist() == [2, 0]
