"""Matrix-free action of exp(t * Sigma_tilde) on momentum vectors.

Sigma_tilde is never formed. It is represented by a factor ``G`` (d x k) and
a non-positive coefficient ``c`` so that ``Sigma_tilde @ v == c * G @ (G.T @ v)``.
The exponential is applied with a trace shift, ``s`` scaling stages and a
degree-``m`` Taylor polynomial per stage.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError, NumericalFailureError

TAYLOR_DEGREE = 30
# |t| * rho / s must stay below this for a degree-30 Taylor stage to be
# accurate to double precision.
THETA_30 = 3.5
TERM_RTOL = 1e-16


class CovarianceOperator:
    """Low-rank symmetric operator ``v -> coeff * G (G^T v)``.

    Parameters
    ----------
    factor : ndarray, shape (d, k)
        Columns are the (centered) per-datum gradients, or any square-root
        factor of a known covariance.
    weight : float
        Scale such that the noisy-force covariance estimate is
        ``Sigma = weight * G @ G.T``.
    h, beta : float
        Stepsize and inverse temperature. The operator itself is
        ``Sigma_tilde = -(h / 2) * beta * Sigma``.
    """

    def __init__(self, factor, weight, h, beta):
        factor = np.asarray(factor, dtype=np.float64)
        if factor.ndim != 2:
            raise InvalidInputError(f"factor must be 2-D, got shape {factor.shape}")
        if weight < 0 or h < 0 or beta <= 0:
            raise InvalidInputError("weight and h must be >= 0 and beta > 0")
        self.factor = factor
        self._factor_t = np.ascontiguousarray(factor.T)
        self.weight = float(weight)
        self.h = float(h)
        self.beta = float(beta)
        self.coeff = -0.5 * self.h * self.beta * self.weight
        self.trace_tilde = self.coeff * float(np.sum(factor * factor))
        if not math.isfinite(self.trace_tilde):
            raise InvalidInputError("covariance operator has a non-finite trace")
        self.is_zero = self.coeff == 0.0 or not np.any(factor)

    @classmethod
    def from_gradients(cls, grads, n_total, h, beta):
        """Build the operator from per-datum log-likelihood gradients.

        ``grads`` has one row per sampled datum (shape (n, d)). The rows are
        centered at their mean and the weight is ``N**2 / (n (n - 1))``, so
        that ``Sigma = (N**2 / n) V`` with ``V`` the unbiased empirical
        covariance of the gradients. A single-row batch carries no noise
        information and yields the zero operator.
        """
        grads = np.asarray(grads, dtype=np.float64)
        n, d = grads.shape
        if n < 2:
            warnings.warn(
                "minibatch of size 1: gradient covariance is undefined, using zero",
                RuntimeWarning,
                stacklevel=2,
            )
            return cls.zero(d, h=h, beta=beta)
        centered = grads - grads.mean(axis=0)
        return cls(centered.T, n_total**2 / (n * (n - 1)), h, beta)

    @classmethod
    def zero(cls, dim, h=0.0, beta=1.0):
        return cls(np.zeros((dim, 0)), 0.0, h, beta)

    @property
    def dim(self):
        return self.factor.shape[0]

    @property
    def batch(self):
        return self.factor.shape[1]

    def apply(self, v):
        """``Sigma_tilde @ v`` for a vector, or row-wise for a stack of vectors."""
        v = np.asarray(v, dtype=np.float64)
        if v.shape[-1] != self.dim:
            raise InvalidInputError(
                f"vector has length {v.shape[-1]}, operator dimension is {self.dim}"
            )
        if self.is_zero:
            return np.zeros_like(v)
        return self._apply(v)

    def _apply(self, v):
        # unchecked action for the Taylor loop
        return (self.coeff * (v @ self.factor)) @ self._factor_t

    def dense(self):
        """Dense ``Sigma_tilde``. Test oracles and the moving-average baseline only."""
        g = self.factor
        return self.coeff * (g @ g.T)

    def sigma_dense(self):
        """Dense noisy-force covariance estimate ``Sigma = weight * G G^T``."""
        g = self.factor
        return self.weight * (g @ g.T)


def cov_apply(op, v):
    return op.apply(v)


@dataclass(frozen=True)
class ExpmvPlan:
    """Shift, scaling and Taylor degree for one exponential action."""

    shift: float
    scale: int
    degree: int
    t: float


def expmv_plan(op, t, shift=True):
    """Choose shift, number of scaling stages and Taylor degree.

    The spectral radius of the shifted operator is bounded by
    ``|trace| + |shift|`` because every eigenvalue of Sigma_tilde lies in
    ``[trace, 0]``. The degree is fixed at 30 and ``s`` is the smallest
    integer keeping ``|t| * rho / s <= 3.5``. Passing ``shift=False``
    disables the trace shift (used to check that it does not change the
    result).
    """
    t = float(t)
    if not math.isfinite(t):
        raise InvalidInputError("evolution time must be finite")
    trace = op.trace_tilde
    if not math.isfinite(trace):
        raise InvalidInputError("operator trace is not finite")
    mu = trace / op.dim if shift else 0.0
    rho = abs(trace) + abs(mu)
    s = max(1, math.ceil(abs(t) * rho / THETA_30))
    return ExpmvPlan(shift=mu, scale=s, degree=TAYLOR_DEGREE, t=t)


def expmv_apply(plan, op, v):
    """Approximate ``exp(t * Sigma_tilde) @ v`` without forming any matrix.

    Accepts a single vector or a stack of row vectors (shape (..., d)).

    Raises
    ------
    NumericalFailureError
        If the accumulation overflows.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != op.dim:
        raise InvalidInputError(
            f"vector has length {v.shape[-1]}, operator dimension is {op.dim}"
        )
    if plan.t == 0.0 or op.is_zero:
        return v.copy()

    mu = plan.shift
    step = plan.t / plan.scale
    # The shift factor is applied per stage so intermediate values keep the
    # magnitude of the final result.
    eta = math.exp(step * mu)
    f = v
    for _ in range(plan.scale):
        term = f
        acc = f.copy()
        for j in range(1, plan.degree + 1):
            c = step / j
            term = op._apply(term) * c - term * (mu * c)
            acc += term
            # squared norms avoid two sqrt calls per term
            if np.vdot(term, term) <= TERM_RTOL**2 * np.vdot(acc, acc):
                break
        f = eta * acc
        if not np.all(np.isfinite(f)):
            raise NumericalFailureError(
                "matrix exponential action overflowed; covariance magnitude is pathological"
            )
    return f
