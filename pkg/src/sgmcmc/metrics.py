"""Evaluation metrics: Gaussian 2-Wasserstein distance, running moments,
logistic test log likelihood / log loss, and thermostat diagnostics."""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError
from .numerics import as_sym, psd_sqrt

LOG1PEXP_BRANCH = 35.0


@dataclass(frozen=True)
class GaussianSummary:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = as_sym(np.atleast_2d(self.cov))
        if cov.shape[0] != mean.shape[0]:
            raise InvalidInputError(
                f"mean has length {mean.shape[0]} but covariance is {cov.shape}"
            )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self):
        return self.mean.shape[0]


def w2_gaussian(a, b):
    """2-Wasserstein distance between two Gaussians.

    ``W2^2 = |m_a - m_b|^2 + tr(S_a + S_b - 2 (S_b^1/2 S_a S_b^1/2)^1/2)``.
    The trace term equals ``min_U |S_a^1/2 - S_b^1/2 U|_F^2`` over orthogonal
    U, attained at the polar factor of ``S_b^1/2 S_a^1/2``. Evaluating it as
    that sum of squares avoids the cancellation in the trace difference, so
    W2(a, a) comes out at rounding level rather than its square root.
    """
    if a.dim != b.dim:
        raise InvalidInputError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    root_a = psd_sqrt(a.cov)
    root_b = psd_sqrt(b.cov)
    w, _, vt = np.linalg.svd(root_b @ root_a)
    resid = root_a - root_b @ (w @ vt)
    return math.sqrt(float(diff @ diff) + float(np.sum(resid * resid)))


class RunningMoments:
    """Single-pass mean and scatter accumulator (Welford), with pairwise merge."""

    def __init__(self, dim):
        self.count = 0
        self.mean = np.zeros(dim)
        self.scatter = np.zeros((dim, dim))

    def update(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.mean.shape:
            raise InvalidInputError(
                f"sample has shape {x.shape}, accumulator expects {self.mean.shape}"
            )
        self.count += 1
        delta = x - self.mean
        self.mean = self.mean + delta / self.count
        self.scatter += np.outer(delta, x - self.mean)
        return self

    def merge(self, other):
        """Combine two accumulators (Chan et al. pairwise formula)."""
        if other.count == 0:
            return self
        if self.count == 0:
            self.count = other.count
            self.mean = other.mean.copy()
            self.scatter = other.scatter.copy()
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.scatter = (
            self.scatter
            + other.scatter
            + np.outer(delta, delta) * (self.count * other.count / n)
        )
        self.mean = self.mean + delta * (other.count / n)
        self.count = n
        return self

    def covariance(self):
        """Unbiased sample covariance; None with fewer than two samples."""
        if self.count < 2:
            return None
        s = self.scatter / (self.count - 1)
        return 0.5 * (s + s.T)

    def summary(self):
        cov = self.covariance()
        if cov is None:
            return None
        return GaussianSummary(self.mean.copy(), cov)


def update_moments(rm, theta):
    return rm.update(theta)


def log1pexp(u):
    """Elementwise ``log(1 + exp(u))`` without overflow."""
    u = np.asarray(u, dtype=np.float64)
    out = np.empty_like(u)
    hi = u > LOG1PEXP_BRANCH
    lo = u < -LOG1PEXP_BRANCH
    mid = ~(hi | lo)
    out[hi] = u[hi] + np.exp(-u[hi])
    out[lo] = np.exp(u[lo])
    out[mid] = np.log1p(np.exp(u[mid]))
    return out


def _margins(theta, test):
    return test.y * (test.X @ np.asarray(theta, dtype=np.float64))


def test_log_likelihood(theta, test):
    """Sum over the test set of ``log sigmoid(y_i theta^T x_i)``."""
    return -float(np.sum(log1pexp(-_margins(theta, test))))


test_log_likelihood.__test__ = False  # keep pytest from collecting it


def log_loss(theta, test):
    """Mean over the test set of ``log(1 + exp(-y_i theta^T x_i))``."""
    return float(np.mean(log1pexp(-_margins(theta, test))))


def posterior_expected_log_loss(samples, test):
    """Average of :func:`log_loss` over posterior samples.

    NaN when any sample has a non-finite entry (a diverged chain).
    """
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    if not samples:
        raise InvalidInputError("need at least one posterior sample")
    if any(not np.all(np.isfinite(s)) for s in samples):
        return math.nan
    return float(np.mean([log_loss(s, test) for s in samples]))


class ThermostatDiagnostics:
    """Streaming mean kinetic energy ``p^T M^-1 p`` and mean/variance of xi."""

    def __init__(self, mass_diag):
        self.mass_diag = np.asarray(mass_diag, dtype=np.float64)
        self.count = 0
        self._kinetic = 0.0
        self._xi_mean = 0.0
        self._xi_m2 = 0.0

    def update(self, momentum, xi):
        self.count += 1
        kinetic = float(np.sum(momentum * momentum / self.mass_diag))
        self._kinetic += (kinetic - self._kinetic) / self.count
        delta = xi - self._xi_mean
        self._xi_mean += delta / self.count
        self._xi_m2 += delta * (xi - self._xi_mean)
        return self

    @property
    def mean_kinetic(self):
        return self._kinetic if self.count else math.nan

    @property
    def mean_xi(self):
        return self._xi_mean if self.count else math.nan

    @property
    def var_xi(self):
        return self._xi_m2 / (self.count - 1) if self.count > 1 else math.nan

    def as_dict(self):
        return {
            "mean_kinetic": self.mean_kinetic,
            "mean_xi": self.mean_xi,
            "var_xi": self.var_xi,
        }


def thermostat_diagnostics(states, mass_diag=None):
    """Diagnostics over an iterable of states with ``momentum`` and ``xi``."""
    diag = None
    for state in states:
        if diag is None:
            m = np.ones_like(state.momentum) if mass_diag is None else mass_diag
            diag = ThermostatDiagnostics(m)
        diag.update(state.momentum, state.xi)
    if diag is None or diag.count < 2:
        raise InvalidInputError("need at least two states")
    return diag.as_dict()
