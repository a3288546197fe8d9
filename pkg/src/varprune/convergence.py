"""Empirical convergence checks for SGD on ``L + lam * psi``.

Objectives expose ``value(w)``, ``grad(w)``, ``stoch_grad(w, rng, b)``,
``beta1`` and ``lower_bound``. The penalty is applied to the whole
parameter vector as a single layer.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import make_rng
from .errors import NumericError
from .varreg import layer_term, layer_term_grad, layer_term_grad_rows


class Quadratic:
    """``L(w) = 0.5 w'Aw - b'w`` with exact gradients."""

    kind = "quadratic"

    def __init__(self, A, b):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if np.max(np.abs(A - A.T)) > 1e-12:
            raise ValueError("A must be symmetric")
        eig = np.linalg.eigvalsh(A)
        if eig[0] < -1e-12:
            raise ValueError("A must be positive semidefinite")
        self.A = A
        self.b = np.asarray(b, dtype=np.float64)
        self.dim = A.shape[0]
        self.beta1 = float(eig[-1])
        if eig[0] > 0:
            self.minimizer = np.linalg.solve(A, self.b)
            self.lower_bound = float(-0.5 * self.b @ self.minimizer)
        else:
            self.minimizer = None
            self.lower_bound = None

    def value(self, w):
        return float(0.5 * w @ self.A @ w - self.b @ w)

    def grad(self, w):
        return self.A @ w - self.b

    def stoch_grad(self, w, rng=None, batch_size=None):
        return self.grad(w)


class Logistic:
    """Mean logistic loss ``log(1 + exp(-y x'w))`` over a fixed dataset, labels in {-1, 1}."""

    kind = "logistic"
    lower_bound = 0.0

    def __init__(self, X, y):
        self.X = np.asarray(X, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.n, self.dim = self.X.shape
        # Hessian is X' D X / n with D <= 1/4
        self.beta1 = float(np.linalg.eigvalsh(self.X.T @ self.X)[-1] / (4 * self.n))

    @classmethod
    def seeded(cls, rng, n=200, d=5, flip=0.1):
        """Gaussian features, labels from a random hyperplane with a fraction flipped."""
        X = rng.standard_normal((n, d))
        w_true = rng.standard_normal(d)
        y = np.where(X @ w_true >= 0, 1.0, -1.0)
        flips = rng.random(n) < flip
        y[flips] *= -1
        return cls(X, y)

    def value(self, w):
        return float(np.mean(np.logaddexp(0.0, -self.y * (self.X @ w))))

    def _grad_rows(self, X, y, w):
        m = -y * (X @ w)
        # d/dm log(1+e^m) = sigmoid(m)
        s = np.exp(-np.logaddexp(0.0, -m))
        return -(y * s)[:, None] * X

    def grad(self, w):
        return self._grad_rows(self.X, self.y, w).mean(axis=0)

    def per_sample_grads(self, w):
        return self._grad_rows(self.X, self.y, w)

    def stoch_grad(self, w, rng, batch_size):
        idx = rng.choice(self.n, size=batch_size, replace=False)
        return self._grad_rows(self.X[idx], self.y[idx], w).mean(axis=0)


class Composite:
    """``L + lam * psi`` over a base objective; the penalty gradient is exact."""

    def __init__(self, base, lam=0.0, r=1e-8, epsilon=1e-8):
        self.base = base
        self.lam = float(lam)
        self.r = r
        self.epsilon = epsilon
        self.dim = base.dim

    def value(self, w):
        v = self.base.value(w)
        if self.lam:
            v += self.lam * layer_term(w, self.r, self.epsilon)
        return v

    def psi_grad(self, w):
        return layer_term_grad(w, self.r, self.epsilon)

    def psi_grad_rows(self, W):
        return layer_term_grad_rows(W, self.r, self.epsilon)

    def grad(self, w):
        g = self.base.grad(w)
        if self.lam:
            g = g + self.lam * self.psi_grad(w)
        return g

    def stoch_grad(self, w, rng, batch_size):
        g = self.base.stoch_grad(w, rng, batch_size)
        if self.lam:
            g = g + self.lam * self.psi_grad(w)
        return g


def random_psd(dim, rng, low=0.1, high=10.0):
    """Symmetric matrix with eigenvalues drawn uniformly from ``[low, high]``."""
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    eig = rng.uniform(low, high, dim)
    A = (q * eig) @ q.T
    return 0.5 * (A + A.T)


def region_samples(center, radius, count, rng):
    center = np.asarray(center, dtype=np.float64)
    return [center + radius * rng.standard_normal(center.size) for _ in range(count)]


def estimate_beta(grad_fn, samples, safety=1.5, pairs="all", batched=False):
    """``safety`` times the largest ``|grad(u) - grad(v)| / |u - v|`` over sample pairs.

    ``pairs="all"`` compares every pair; ``"chain"`` only consecutive
    samples, which suits points laid out along a path. Coincident pairs
    are skipped. With ``batched`` the gradient map takes all samples as
    rows of one matrix.
    """
    pts = np.array([np.asarray(s, dtype=np.float64).ravel() for s in samples])
    if len(pts) < 2:
        raise ValueError("need at least two samples")
    if batched:
        grads = np.asarray(grad_fn(pts), dtype=np.float64)
    else:
        grads = np.array([np.asarray(grad_fn(p), dtype=np.float64).ravel() for p in pts])
    if pairs == "chain":
        i = np.arange(len(pts) - 1)
        j = i + 1
    elif pairs == "all":
        i, j = np.triu_indices(len(pts), k=1)
    else:
        raise ValueError(f"unknown pairing {pairs!r}")
    dist = np.linalg.norm(pts[i] - pts[j], axis=1)
    keep = dist > 0
    if not np.any(keep):
        raise ValueError("all sample pairs coincide")
    ratio = np.linalg.norm(grads[i] - grads[j], axis=1)[keep] / dist[keep]
    return safety * float(ratio.max())


def path_samples(points, substeps=8):
    """Points along the polyline through ``points``, plus every coordinate zero crossing.

    The penalty's curvature peaks where a weight passes through zero, so
    those crossings are always sampled.
    """
    pts = np.asarray(points, dtype=np.float64)
    grid = np.linspace(0.0, 1.0, substeps + 1)[1:]
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        ts = grid
        crossing = np.flatnonzero(a * b < 0)
        if crossing.size:
            t = a[crossing] / (a[crossing] - b[crossing])
            ts = np.unique(np.clip(np.concatenate([grid, t, t - 1e-3, t + 1e-3]), 0.0, 1.0))
            ts = ts[ts > 0]
        out.append(a + ts[:, None] * (b - a))
    return np.concatenate(out)


def gd_path(objective, w0, eta, steps):
    w = np.array(w0, dtype=np.float64)
    path = [w]
    for _ in range(steps):
        w = w - eta * objective.grad(w)
        path.append(w)
    return path


@dataclass
class BoundParams:
    beta1: float
    beta2: float
    lam: float
    sigma2: float = 0.0
    sigma_psi2: float = 0.0
    b: int = 1

    @property
    def beta(self):
        return self.beta1 + self.lam * self.beta2


def calibrate_full_batch(composite, w0, steps, safety=1.5, max_rounds=50, rtol=0.01):
    """Self-consistent ``beta = beta1 + lam * beta2_hat`` for gradient descent from ``w0``.

    ``beta2_hat`` is estimated along the trajectory run with ``eta = 1/beta``;
    whenever the estimate grows the step shrinks and the trajectory is
    recomputed, until the estimate on the final trajectory exceeds the one
    used to pick its step by at most ``rtol`` (relative).
    """
    beta1 = composite.base.beta1
    if composite.lam == 0:
        return BoundParams(beta1, 0.0, 0.0)
    beta2 = 0.0
    for _ in range(max_rounds):
        eta = 1.0 / (beta1 + composite.lam * beta2)
        path = gd_path(composite, w0, eta, steps)
        est = estimate_beta(composite.psi_grad_rows, path_samples(path), safety, pairs="chain", batched=True)
        if est <= beta2 * (1 + rtol):
            return BoundParams(beta1, beta2, composite.lam)
        beta2 = est
    raise NumericError("smoothness estimate did not settle")


@dataclass
class DescentReport:
    steps: int
    violations: list = field(default_factory=list)
    margins: np.ndarray = None

    @property
    def n_violations(self):
        return len(self.violations)


def descent_check(objective, eta, steps, w0, beta=None, slack=1e-9):
    """Full-batch check of ``F(w+) <= F(w) - (eta/2)|grad F(w)|^2`` at every step.

    ``margins[t]`` is the right side minus the left side; a step is a
    violation when the margin is below ``-slack * (1 + |F(w_t)|)``.
    """
    if beta is not None and eta > 1.0 / beta:
        raise ValueError("step size exceeds 1/beta")
    w = np.array(w0, dtype=np.float64)
    margins = np.empty(steps)
    report = DescentReport(steps)
    f = objective.value(w)
    for t in range(steps):
        g = objective.grad(w)
        gg = float(g @ g)
        w_next = w - eta * g
        f_next = objective.value(w_next)
        if not math.isfinite(f_next):
            raise NumericError("objective diverged", step=t)
        margin = f - 0.5 * eta * gg - f_next
        margins[t] = margin
        if margin < -slack * (1 + abs(f)):
            report.violations.append((t, margin))
        w, f = w_next, f_next
    report.margins = margins
    return report


@dataclass
class RateRow:
    T: int
    mean: float
    per_seed: list
    diverged: int = 0


def sgd_avg_sq_grad(objective, w0, eta, T, rng, batch_size):
    """Run ``T`` SGD steps; return ``(1/T) sum_t |grad F(w_t)|^2`` over ``t < T``."""
    w = np.array(w0, dtype=np.float64)
    total = 0.0
    for t in range(T):
        g = objective.grad(w)
        total += float(g @ g)
        w = w - eta * objective.stoch_grad(w, rng, batch_size)
        if not np.all(np.isfinite(w)):
            raise NumericError("iterate diverged", step=t)
    return total / T


def rate_check(objective, c, T_list, seeds, batch_size, start, beta=None):
    """For each horizon ``T`` and seed, SGD with ``eta = c/sqrt(T)``.

    ``start(seed)`` returns the initial point. ``objective`` should already
    carry the penalty (see :class:`Composite`).
    """
    if beta is not None and c > 1.0 / beta:
        raise ValueError("c exceeds 1/beta")
    if list(T_list) != sorted(T_list):
        raise ValueError("T_list must be ascending")
    rows = []
    for T in T_list:
        vals = []
        diverged = 0
        eta = c / math.sqrt(T)
        for s in seeds:
            rng = make_rng(int(s), int(T))
            try:
                vals.append(sgd_avg_sq_grad(objective, start(s), eta, T, rng, batch_size))
            except NumericError:
                diverged += 1
        rows.append(RateRow(T, float(np.mean(vals)) if vals else float("nan"), vals, diverged))
    return rows


def loglog_slope(T_list, values):
    x = np.log(np.asarray(T_list, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])


def diminishing_check(objective, eta0, checkpoints, w0, rng=None, batch_size=None, beta=None):
    """SGD with ``eta_t = eta0/(t+1)``; step-weighted mean squared gradient at each checkpoint.

    Uses exact gradients when ``rng`` is None.
    """
    if beta is not None and eta0 > 1.0 / beta:
        raise ValueError("eta0 exceeds 1/beta")
    checkpoints = sorted(checkpoints)
    w = np.array(w0, dtype=np.float64)
    num = 0.0
    den = 0.0
    out = {}
    for t in range(checkpoints[-1]):
        eta = eta0 / (t + 1)
        g = objective.grad(w)
        num += eta * float(g @ g)
        den += eta
        step = g if rng is None else objective.stoch_grad(w, rng, batch_size)
        w = w - eta * step
        if t + 1 in checkpoints:
            out[t + 1] = num / den
    return out


def gradient_noise(objective, w):
    """Per-example gradient variance ``mean_i |g_i - g|^2`` of the data term."""
    G = objective.per_sample_grads(w)
    d = G - G.mean(axis=0)
    return float(np.mean(np.sum(d * d, axis=1)))


@dataclass
class ExpectedDescent:
    mean_change: float
    bound: float
    stderr: float

    @property
    def holds(self):
        return self.mean_change <= self.bound + 3 * self.stderr


def expected_descent(composite, w0, eta, batch_size, beta, trials, seed=0, sigma_psi2=0.0):
    """Average one-step change of ``F = L + lam*psi`` against the minibatch descent bound.

    ``bound = -(eta/2)|grad F|^2 + eta^2 beta/(2b) (sigma^2 + lam^2 sigma_psi^2)``
    with ``sigma^2`` the per-example gradient variance at ``w0``.
    """
    w0 = np.asarray(w0, dtype=np.float64)
    f0 = composite.value(w0)
    g = composite.grad(w0)
    sigma2 = gradient_noise(composite.base, w0)
    lam = composite.lam
    bound = -0.5 * eta * float(g @ g) + eta ** 2 * beta / (2 * batch_size) * (sigma2 + lam ** 2 * sigma_psi2)
    changes = []
    for k in range(trials):
        rng = make_rng(seed, k)
        w1 = w0 - eta * composite.stoch_grad(w0, rng, batch_size)
        changes.append(composite.value(w1) - f0)
    changes = np.asarray(changes)
    se = float(changes.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return ExpectedDescent(float(changes.mean()), bound, se)
