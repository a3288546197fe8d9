import math

import numpy as np
import pytest

from varprune.convergence import (Composite, Logistic, Quadratic, calibrate_full_batch, descent_check,
                                  diminishing_check, estimate_beta, expected_descent, gd_path, loglog_slope,
                                  path_samples, random_psd, rate_check, region_samples)
from varprune.core import central_diff_grad, make_rng, max_rel_error


class Linear:
    dim = 3
    beta1 = 0.0
    lower_bound = None

    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)

    def value(self, w):
        return float(self.c @ w)

    def grad(self, w):
        return self.c.copy()


class Flat(Linear):
    def __init__(self):
        super().__init__(np.zeros(3))

    def stoch_grad(self, w, rng, b):
        return np.zeros(3)


def test_quadratic_validation():
    with pytest.raises(ValueError):
        Quadratic(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        Quadratic(np.diag([1.0, -1.0]), np.zeros(2))


def test_estimate_beta_diag_quadratic():
    q = Quadratic(np.diag([1.0, 4.0]), np.zeros(2))
    est = estimate_beta(q.grad, region_samples(np.zeros(2), 1.0, 30, make_rng(0)))
    assert 4.0 <= est <= 6.0


def test_estimate_beta_linear():
    lin = Linear([1.0, -2.0, 0.5])
    assert estimate_beta(lin.grad, region_samples(np.zeros(3), 1.0, 10, make_rng(1))) <= 1e-9


def test_estimate_beta_running_max():
    q = Quadratic(random_psd(4, make_rng(2)), np.zeros(4))
    samples = region_samples(np.zeros(4), 1.0, 20, make_rng(3))
    ests = [estimate_beta(q.grad, samples[:k]) for k in range(2, 21)]
    assert all(b >= a for a, b in zip(ests, ests[1:]))


def test_estimate_beta_coincident():
    q = Quadratic(np.eye(2), np.zeros(2))
    x = np.ones(2)
    assert estimate_beta(q.grad, [x, x, 2 * x]) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        estimate_beta(q.grad, [x, x])
    with pytest.raises(ValueError):
        estimate_beta(q.grad, [x])


def test_estimate_beta_batched_matches():
    comp = Composite(Quadratic(np.eye(5), np.zeros(5)), 1e-3)
    pts = region_samples(np.zeros(5), 1.0, 12, make_rng(4))
    a = estimate_beta(comp.psi_grad, pts, pairs="chain")
    b = estimate_beta(comp.psi_grad_rows, pts, pairs="chain", batched=True)
    assert a == pytest.approx(b, rel=1e-12)


def test_path_samples_hit_zero_crossings():
    pts = path_samples([np.array([1.0, -2.0]), np.array([-1.0, 2.0])], substeps=4)
    assert np.any(np.all(np.abs(pts) < 1e-12, axis=1))


def test_composite_gradients():
    rng = make_rng(5)
    for base in (Quadratic(random_psd(6, rng), rng.standard_normal(6)), Logistic.seeded(rng, n=50, d=6)):
        comp = Composite(base, 1e-2)
        w = rng.uniform(0.2, 2.0, 6) * np.where(rng.random(6) < 0.5, -1, 1)
        fd = central_diff_grad(comp.value, w, 1e-6)
        assert max_rel_error(comp.grad(w), fd, scale_floor=1e-3) < 1e-6


def test_logistic_beta1_bounds_curvature():
    obj = Logistic.seeded(make_rng(6))
    est = estimate_beta(obj.grad, region_samples(np.zeros(obj.dim), 2.0, 30, make_rng(7)), safety=1.0)
    assert est <= obj.beta1


def test_logistic_stoch_grad_unbiased():
    obj = Logistic.seeded(make_rng(8), n=40, d=3)
    w = np.ones(3)
    rng = make_rng(9)
    draws = np.array([obj.stoch_grad(w, rng, 5) for _ in range(20000)])
    se = draws.std(axis=0, ddof=1) / math.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - obj.grad(w)) <= 3 * se)


def test_descent_quadratic_exact_beta():
    rng = make_rng(10)
    q = Quadratic(random_psd(10, rng), rng.standard_normal(10))
    rep = descent_check(q, 1.0 / q.beta1, 1000, 3 * rng.standard_normal(10), beta=q.beta1)
    assert rep.n_violations == 0


def test_descent_zero_step():
    rng = make_rng(11)
    q = Quadratic(random_psd(10, rng), rng.standard_normal(10))
    rep = descent_check(q, 0.0, 50, rng.standard_normal(10))
    assert rep.n_violations == 0 and not rep.margins.any()


def test_descent_with_penalty():
    rng = make_rng(12)
    comp = Composite(Quadratic(random_psd(10, rng), rng.standard_normal(10)), 1e-3)
    w0 = 3 * rng.standard_normal(10)
    bp = calibrate_full_batch(comp, w0, 1000)
    assert bp.beta >= comp.base.beta1
    assert descent_check(comp, 1.0 / bp.beta, 1000, w0, beta=bp.beta).n_violations == 0


def test_descent_detects_oversized_step():
    q = Quadratic(np.diag([1.0, 4.0]), np.zeros(2))
    rep = descent_check(q, 0.45, 20, np.ones(2))
    assert rep.n_violations > 0
    with pytest.raises(ValueError):
        descent_check(q, 0.45, 20, np.ones(2), beta=4.0)


def test_rate_at_minimizer():
    rng = make_rng(13)
    q = Quadratic(random_psd(5, rng), rng.standard_normal(5))
    rows = rate_check(q, 1.0 / q.beta1, [100, 400], range(3), 1, lambda s: q.minimizer)
    assert all(r.mean <= 1e-12 for r in rows)


def test_rate_requires_ascending():
    q = Quadratic(np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        rate_check(q, 0.5, [400, 100], [0], 1, lambda s: np.zeros(2))


@pytest.mark.parametrize("lam", [0.0, 1e-5])
def test_rate_envelope(lam):
    obj = Composite(Logistic.seeded(make_rng(123)), lam)

    def start(s):
        return make_rng(s, 99).standard_normal(obj.dim)

    samples = [x for s in range(10) for x in region_samples(start(s), 1.0, 3, make_rng(s, 7))]
    beta = obj.base.beta1 + lam * (estimate_beta(obj.psi_grad, samples) if lam else 0.0)
    T_list = [100, 400, 1600, 6400]
    rows = rate_check(obj, 1.0 / beta, T_list, range(10), 8, start, beta=beta)
    means = [r.mean for r in rows]
    assert all(b < a for a, b in zip(means, means[1:]))
    assert -0.7 <= loglog_slope(T_list, means) <= -0.3


def test_loglog_slope_exact():
    T = [10, 100, 1000]
    assert loglog_slope(T, [1 / math.sqrt(t) for t in T]) == pytest.approx(-0.5)


def test_diminishing_quadratic_decreasing():
    rng = make_rng(14)
    q = Quadratic(random_psd(10, rng), rng.standard_normal(10))
    trace = diminishing_check(q, 1.0 / q.beta1, [100, 1000, 10000], 3 * rng.standard_normal(10), beta=q.beta1)
    vals = [trace[t] for t in (100, 1000, 10000)]
    assert vals[0] > vals[1] > vals[2]


def test_diminishing_at_minimizer():
    rng = make_rng(15)
    q = Quadratic(random_psd(4, rng), rng.standard_normal(4))
    trace = diminishing_check(q, 1.0 / q.beta1, [100, 1000], q.minimizer)
    assert all(v <= 1e-20 for v in trace.values())


def test_diminishing_zero_gradient():
    trace = diminishing_check(Flat(), 1.0, [10, 100], np.ones(3), rng=make_rng(0), batch_size=1)
    assert list(trace.values()) == [0.0, 0.0]


def test_expected_descent_holds():
    obj = Logistic.seeded(make_rng(16))
    comp = Composite(obj, 1e-3)
    w0 = make_rng(17).standard_normal(obj.dim)
    samples = region_samples(w0, 1.0, 10, make_rng(18))
    beta = obj.beta1 + 1e-3 * estimate_beta(comp.psi_grad, samples)
    res = expected_descent(comp, w0, 1.0 / beta, 8, beta, trials=100, seed=3)
    assert res.holds


def test_gd_path_length():
    q = Quadratic(np.eye(2), np.zeros(2))
    path = gd_path(q, np.ones(2), 0.5, 4)
    assert len(path) == 5
    np.testing.assert_allclose(path[-1], np.ones(2) / 16)
