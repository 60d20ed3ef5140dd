"""Target distributions: potentials, clean and minibatch forces, and the
minibatch gradient-noise covariance operator.

Data are stored one datum per row: ``X`` has shape (N, d).
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, NumericalFailureError
from .expmv import CovarianceOperator
from .metrics import GaussianSummary, log1pexp
from .numerics import psd_sqrt

GAUSSIAN_TOY = "gaussian_toy"
LINEAR_REGRESSION = "linear_regression"
LOGISTIC_REGRESSION = "logistic_regression"
MODEL_KINDS = (GAUSSIAN_TOY, LINEAR_REGRESSION, LOGISTIC_REGRESSION)


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if X.ndim != 2:
            raise InvalidInputError(f"features must be 2-D, got shape {X.shape}")
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(f"{X.shape[0]} feature rows but {y.shape[0]} labels")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset has non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n_samples(self):
        return self.X.shape[0]

    @property
    def n_features(self):
        return self.X.shape[1]

    def __len__(self):
        return self.n_samples


@dataclass(frozen=True)
class ModelSpec:
    """A target density ``exp(-U(theta))``.

    ``prior_variance`` is the variance of the isotropic Gaussian prior of the
    regression models. ``toy_noise_cov`` is the covariance of the Gaussian
    noise added to the gaussian_toy force; None gives the clean force.
    """

    kind: str
    dim: int
    prior_variance: float = 1.0
    toy_noise_cov: np.ndarray = None

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise InvalidInputError(f"unknown model kind {self.kind!r}")
        if self.dim < 1:
            raise InvalidInputError("dim must be >= 1")
        if not self.prior_variance > 0:
            raise InvalidInputError("prior_variance must be positive")
        if self.toy_noise_cov is not None:
            if self.kind != GAUSSIAN_TOY:
                raise InvalidInputError("toy_noise_cov only applies to gaussian_toy")
            cov = np.atleast_2d(np.asarray(self.toy_noise_cov, dtype=np.float64))
            if cov.shape != (self.dim, self.dim):
                raise InvalidInputError(f"toy_noise_cov must be {self.dim}x{self.dim}")
            # psd_sqrt validates PSD-ness; the symmetric root is the noise factor.
            object.__setattr__(self, "toy_noise_cov", 0.5 * (cov + cov.T))
            object.__setattr__(self, "_noise_factor", psd_sqrt(cov))
        else:
            object.__setattr__(self, "_noise_factor", None)

    @property
    def noise_factor(self):
        return self._noise_factor

    def check_data(self, data):
        if self.kind == GAUSSIAN_TOY:
            return
        if data is None:
            raise InvalidInputError(f"{self.kind} needs a dataset")
        if data.n_features != self.dim:
            raise InvalidInputError(
                f"dataset has {data.n_features} features, model dim is {self.dim}"
            )
        if self.kind == LOGISTIC_REGRESSION and not np.all(np.abs(data.y) == 1.0):
            raise InvalidInputError("logistic labels must be -1 or +1")


@dataclass
class MinibatchForce:
    force: np.ndarray
    cov_op: CovarianceOperator
    indices: np.ndarray = None


def expit(z):
    # tanh form is overflow-free for any finite z
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def per_datum_grads(model, data, theta, indices=None):
    """Gradients of the per-datum log likelihood, one row per datum."""
    X = data.X if indices is None else data.X[indices]
    y = data.y if indices is None else data.y[indices]
    z = X @ theta
    if model.kind == LINEAR_REGRESSION:
        w = y - z
    elif model.kind == LOGISTIC_REGRESSION:
        w = y * expit(-y * z)
    else:
        raise InvalidInputError(f"{model.kind} has no per-datum likelihood")
    return w[:, None] * X


def _check_theta(model, theta):
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape[-1] != model.dim:
        raise InvalidInputError(f"theta has length {theta.shape[-1]}, model dim is {model.dim}")
    return theta


def potential(model, data, theta):
    """Potential energy ``U(theta)``, up to an additive constant."""
    theta = _check_theta(model, theta)
    prior = 0.5 * float(theta @ theta) / model.prior_variance
    if model.kind == GAUSSIAN_TOY:
        return 0.5 * float(theta @ theta)
    model.check_data(data)
    z = data.X @ theta
    if model.kind == LINEAR_REGRESSION:
        return 0.5 * float(np.sum((data.y - z) ** 2)) + prior
    return float(np.sum(log1pexp(-data.y * z))) + prior


def clean_force(model, data, theta):
    """Full-data force ``-grad U(theta)``."""
    theta = _check_theta(model, theta)
    if model.kind == GAUSSIAN_TOY:
        return -theta
    model.check_data(data)
    return per_datum_grads(model, data, theta).sum(axis=0) - theta / model.prior_variance


def draw_minibatch(data, n, rng):
    """``n`` indices drawn uniformly with replacement."""
    if n < 1:
        raise InvalidInputError("minibatch size must be >= 1")
    return rng.integers(0, len(data), size=n)


def noisy_force_and_cov(model, data, theta, indices, cfg, rng=None):
    """Minibatch force and the matching covariance operator.

    For the regression models the force is ``(N/n) sum_i g(theta; x_ri)``
    plus the prior gradient, and the operator is built from the centered
    per-datum gradients (the prior is deterministic and excluded). For
    gaussian_toy the force is ``-theta`` plus Gaussian noise of covariance
    ``toy_noise_cov`` drawn from ``rng``, and the operator is built from the
    known covariance. ``theta`` may be a stack of chains for gaussian_toy.
    """
    theta = _check_theta(model, theta)
    if model.kind == GAUSSIAN_TOY:
        factor = model.noise_factor
        if factor is None:
            return MinibatchForce(-theta, CovarianceOperator.zero(model.dim, cfg.h, cfg.beta))
        noise = rng.standard_normal(theta.shape) @ factor
        return MinibatchForce(
            -theta + noise, CovarianceOperator(factor, 1.0, cfg.h, cfg.beta)
        )

    indices = np.asarray(indices)
    n = indices.shape[0]
    grads = per_datum_grads(model, data, theta, indices)
    force = (len(data) / n) * grads.sum(axis=0) - theta / model.prior_variance
    op = CovarianceOperator.from_gradients(grads, len(data), cfg.h, cfg.beta)
    return MinibatchForce(force, op, indices)


def linreg_true_posterior(data, prior_variance):
    """Exact Gaussian posterior of Bayesian linear regression (unit noise)."""
    X = data.X
    precision = X.T @ X + np.eye(X.shape[1]) / prior_variance
    try:
        chol = np.linalg.cholesky(precision)
        eye = np.eye(X.shape[1])
        inv_chol = np.linalg.solve(chol, eye)
    except np.linalg.LinAlgError as err:
        raise NumericalFailureError(f"posterior precision is singular: {err}") from err
    cov = inv_chol.T @ inv_chol
    mean = cov @ (X.T @ data.y)
    return GaussianSummary(mean, cov)


def synth_linreg(n, d, rng, theta_true=None):
    """Synthetic regression data ``y = x^T theta + N(0, 1)`` with ``x ~ N(0, I)``.

    ``theta_true`` defaults to a draw from ``N(0, I)`` taken from ``rng``
    before the features.
    """
    if n < 1 or d < 1:
        raise InvalidInputError("n and d must be >= 1")
    if theta_true is None:
        theta_true = rng.standard_normal(d)
    theta_true = np.asarray(theta_true, dtype=np.float64)
    X = rng.standard_normal((n, d))
    y = X @ theta_true + rng.standard_normal(n)
    return Dataset(X, y), theta_true
