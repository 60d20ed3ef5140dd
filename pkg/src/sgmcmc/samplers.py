"""Stochastic-gradient thermostats.

* ``mccadl``: covariance-controlled adaptive Langevin with the symmetric
  B-A-O-D-C-D-O-A-B splitting and a matrix-free exponential for the
  covariance-damping (C) sub-flow. One noisy force per step.
* ``ccadl``: the original method, moving-average covariance and an explicit
  Euler-type update.
* ``sgnht``: stochastic gradient Nose-Hoover thermostat (Euler-type).
* ``sghmc``: stochastic gradient HMC with constant friction (Euler-type).

States may hold a single chain (``theta`` of shape (d,), scalar ``xi``) or,
for the gaussian_toy model, a stack of independent chains (``theta`` of
shape (k, d), ``xi`` of shape (k,)).
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .exceptions import InvalidInputError, NumericalFailureError
from .expmv import expmv_apply, expmv_plan
from .models import GAUSSIAN_TOY, draw_minibatch, noisy_force_and_cov

logger = logging.getLogger(__name__)

SAMPLER_KINDS = ("mccadl", "ccadl", "sgnht", "sghmc")
XI_EPS = 1e-12
# A state entry beyond this magnitude counts as a blown-up chain. Float64
# overflow alone can take thousands of passes of geometric growth.
DIVERGENCE_BOUND = 1e12


@dataclass
class SamplerConfig:
    """Integrator settings.

    ``thermal_mass`` and ``mass_diag`` default to ``dim`` and the identity
    once :meth:`resolve` is called with the parameter dimension.
    """

    h: float
    beta: float = 1.0
    friction: float = 1.0
    thermal_mass: float = None
    mass_diag: np.ndarray = None
    batch: int = 500
    seed: int = 0
    passes: float = 1.0
    burn_in_fraction: float = 0.0
    theta0: np.ndarray = None
    divergence_bound: float = DIVERGENCE_BOUND

    def resolve(self, dim):
        if not self.h > 0:
            raise InvalidInputError("stepsize h must be positive")
        if not self.beta > 0:
            raise InvalidInputError("beta must be positive")
        if self.friction < 0:
            raise InvalidInputError("friction A must be non-negative")
        if self.batch < 1:
            raise InvalidInputError("batch must be >= 1")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise InvalidInputError("burn_in_fraction must lie in [0, 1)")
        mu = float(dim) if self.thermal_mass is None else float(self.thermal_mass)
        if not mu > 0:
            raise InvalidInputError("thermal_mass must be positive")
        m = np.ones(dim) if self.mass_diag is None else np.asarray(self.mass_diag, float)
        if m.shape != (dim,) or np.any(m <= 0):
            raise InvalidInputError(f"mass_diag must be {dim} positive entries")
        theta0 = None
        if self.theta0 is not None:
            theta0 = np.asarray(self.theta0, dtype=np.float64)
            if theta0.shape != (dim,) or not np.all(np.isfinite(theta0)):
                raise InvalidInputError(f"theta0 must be {dim} finite entries")
        if not self.divergence_bound > 0:
            raise InvalidInputError("divergence_bound must be positive")
        return replace(self, thermal_mass=mu, mass_diag=m, theta0=theta0)


@dataclass
class ParameterState:
    theta: np.ndarray
    momentum: np.ndarray
    xi: float

    def is_finite(self, bound=np.inf):
        """False once any entry is non-finite or exceeds ``bound`` in magnitude."""
        # NaN fails every comparison, so `<` rejects it along with +-inf
        return bool(
            np.all(np.abs(self.theta) < bound)
            and np.all(np.abs(self.momentum) < bound)
            and np.all(np.abs(self.xi) < bound)
        )

    def copy(self):
        return ParameterState(self.theta.copy(), self.momentum.copy(), np.copy(self.xi))


@dataclass
class MovingAverageEstimator:
    """Cumulative mean ``I_t = (1 - 1/t) I_{t-1} + (1/t) V_t``."""

    i_hat: np.ndarray
    step_count: int = 0

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((dim, dim)), 0)


def moving_average_update(est, v):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != est.i_hat.shape:
        raise InvalidInputError(f"matrix shape {v.shape} != estimator shape {est.i_hat.shape}")
    t = est.step_count + 1
    kappa = 1.0 / t
    return MovingAverageEstimator((1.0 - kappa) * est.i_hat + kappa * v, t)


# -- elementary sub-steps --------------------------------------------------


def _xi_col(xi):
    xi = np.asarray(xi, dtype=np.float64)
    return xi[..., None] if xi.ndim else xi


def ou_half_step(p, xi, cfg, rng):
    """Exact O flow over h/2: friction ``xi`` plus noise of strength ``2 A / beta``.

    Uses the ``xi -> 0`` limit (variance ``h A / beta``) when ``|xi| <= 1e-12``.
    """
    h, a, kt = cfg.h, cfg.friction, 1.0 / cfg.beta
    xi = np.asarray(xi, dtype=np.float64)
    small = np.abs(xi) <= XI_EPS
    xs = np.where(small, 1.0, xi)
    decay = np.where(small, 1.0, np.exp(-0.5 * h * xs))
    var = np.where(small, h * a * kt, a * kt * -np.expm1(-h * xs) / xs)
    noise = rng.standard_normal(p.shape) * np.sqrt(cfg.mass_diag)
    return _xi_col(decay) * p + _xi_col(np.sqrt(var)) * noise


def _kinetic(p, mass_diag):
    return np.sum(p * p / mass_diag, axis=-1)


def _d_step(xi, p, cfg, dt):
    dim = p.shape[-1]
    return xi + (dt / cfg.thermal_mass) * (_kinetic(p, cfg.mass_diag) - dim / cfg.beta)


def _fresh_force(model, data, theta, cfg, rng):
    if model.kind == GAUSSIAN_TOY:
        return noisy_force_and_cov(model, data, theta, None, cfg, rng)
    idx = draw_minibatch(data, cfg.batch, rng)
    return noisy_force_and_cov(model, data, theta, idx, cfg, rng)


def initial_force(model, data, theta, cfg, rng):
    """Force evaluated at the starting point; seeds the reuse in :func:`mccadl_step`."""
    return _fresh_force(model, data, theta, cfg, rng)


# -- samplers --------------------------------------------------------------


def mccadl_step(state, model, data, cfg, rng, cached_force):
    """One B-A-O-D-C-D-O-A-B step.

    ``cached_force`` must have been evaluated at ``state.theta``; its
    covariance operator drives the C sub-flow ``p <- exp(h Sigma_tilde) p``.
    Returns the new state and the force at the new position, to be passed
    back in on the next call.
    """
    h = cfg.h
    inv_m = 1.0 / cfg.mass_diag
    theta, p, xi = state.theta, state.momentum, state.xi

    p = p + 0.5 * h * cached_force.force
    theta = theta + 0.5 * h * inv_m * p
    p = ou_half_step(p, xi, cfg, rng)
    xi = _d_step(xi, p, cfg, 0.5 * h)
    op = cached_force.cov_op
    if not op.is_zero:
        p = expmv_apply(expmv_plan(op, h), op, p)
    xi = _d_step(xi, p, cfg, 0.5 * h)
    p = ou_half_step(p, xi, cfg, rng)
    theta = theta + 0.5 * h * inv_m * p
    force = _fresh_force(model, data, theta, cfg, rng)
    p = p + 0.5 * h * force.force
    return ParameterState(theta, p, xi), force


def ccadl_step(state, model, data, cfg, rng, est):
    """One explicit step of the original moving-average method.

    The estimator averages the dense noisy-force covariance estimates
    ``Sigma_t = (N^2 / n) V(theta_t)``; by linearity this equals
    ``(N^2 / n)`` times the moving average of ``V``.
    """
    h = cfg.h
    theta, p, xi = state.theta, state.momentum, state.xi
    force = _fresh_force(model, data, theta, cfg, rng)
    est = moving_average_update(est, force.cov_op.sigma_dense())
    damping = p @ est.i_hat  # i_hat is symmetric
    noise = rng.standard_normal(p.shape) * np.sqrt(2.0 * cfg.friction * h / cfg.beta * cfg.mass_diag)
    p = p + h * force.force - h * (0.5 * h * cfg.beta) * damping - h * _xi_col(xi) * p + noise
    theta = theta + h * p / cfg.mass_diag
    xi = _d_step(xi, p, cfg, h)
    return ParameterState(theta, p, xi), est


def sgnht_step(state, model, data, cfg, rng):
    h = cfg.h
    theta, p, xi = state.theta, state.momentum, state.xi
    force = _fresh_force(model, data, theta, cfg, rng)
    noise = rng.standard_normal(p.shape) * np.sqrt(2.0 * cfg.friction * h / cfg.beta * cfg.mass_diag)
    p = p + h * force.force - h * _xi_col(xi) * p + noise
    theta = theta + h * p / cfg.mass_diag
    xi = _d_step(xi, p, cfg, h)
    return ParameterState(theta, p, xi)


def sghmc_step(state, model, data, cfg, rng):
    h = cfg.h
    theta, p = state.theta, state.momentum
    force = _fresh_force(model, data, theta, cfg, rng)
    noise = rng.standard_normal(p.shape) * np.sqrt(2.0 * cfg.friction * h / cfg.beta * cfg.mass_diag)
    p = p + h * force.force - h * cfg.friction * p / cfg.mass_diag + noise
    theta = theta + h * p / cfg.mass_diag
    return ParameterState(theta, p, state.xi)


# -- chain driver ----------------------------------------------------------


def chain_rng(seed, chain_index=0):
    """Independent stream for chain ``chain_index`` of experiment ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(chain_index)]))


def initial_state(dim, cfg, rng, n_chains=None):
    """``theta = cfg.theta0`` (default 0), ``p ~ N(0, M / beta)``, ``xi = A``."""
    shape = (dim,) if n_chains is None else (n_chains, dim)
    theta = np.zeros(shape)
    if cfg.theta0 is not None:
        theta = theta + np.asarray(cfg.theta0, dtype=np.float64)
    p = rng.standard_normal(shape) * np.sqrt(cfg.mass_diag / cfg.beta)
    xi = float(cfg.friction) if n_chains is None else np.full(n_chains, float(cfg.friction))
    return ParameterState(theta, p, xi)


class Integrator:
    """Uniform ``step(state) -> state`` wrapper over the four samplers.

    Carries whatever auxiliary state a method needs between steps (the
    reused force for mCCAdL, the moving average for CCAdL).
    """

    def __init__(self, kind, model, data, cfg, rng):
        if kind not in SAMPLER_KINDS:
            raise InvalidInputError(f"unknown sampler {kind!r}; choose from {SAMPLER_KINDS}")
        self.kind = kind
        self.model = model
        self.data = data
        self.cfg = cfg
        self.rng = rng
        self._force = None
        self._est = None

    def step(self, state):
        kind, model, data, cfg, rng = self.kind, self.model, self.data, self.cfg, self.rng
        if kind == "mccadl":
            if self._force is None:
                self._force = initial_force(model, data, state.theta, cfg, rng)
            state, self._force = mccadl_step(state, model, data, cfg, rng, self._force)
        elif kind == "ccadl":
            if self._est is None:
                self._est = MovingAverageEstimator.empty(model.dim)
            state, self._est = ccadl_step(state, model, data, cfg, rng, self._est)
        elif kind == "sgnht":
            state = sgnht_step(state, model, data, cfg, rng)
        else:
            state = sghmc_step(state, model, data, cfg, rng)
        return state


@dataclass
class ChainReport:
    kind: str
    n_steps: int
    n_samples: int = 0
    diverged_step: int = None
    final_state: ParameterState = None
    records: list = field(default_factory=list)

    @property
    def diverged(self):
        return self.diverged_step is not None


def steps_for(cfg, data):
    """Number of iterations for ``cfg.passes`` passes over the data."""
    n_total = 1 if data is None else len(data)
    return int(round(cfg.passes * n_total / cfg.batch))


def run_chain(kind, model, data, cfg, sink=None, *, chain_index=0, n_steps=None,
              checkpoint_every=None):
    """Run one seeded chain.

    Parameters
    ----------
    kind : str
        One of ``SAMPLER_KINDS``.
    model, data : ModelSpec, Dataset or None
    cfg : SamplerConfig
    sink : object, optional
        Receives ``observe(state)`` for every post-burn-in state and
        ``checkpoint(step, diverged)`` every ``checkpoint_every`` steps and
        at the end. Whatever ``checkpoint`` returns is appended to
        ``report.records``.
    n_steps : int, optional
        Overrides the ``passes * N / n`` iteration count.

    Divergence (a non-finite coordinate, or one beyond
    ``cfg.divergence_bound`` in magnitude) stops the chain and is recorded in
    the report; it is not an error.
    """
    model.check_data(data)
    cfg = cfg.resolve(model.dim)
    total = steps_for(cfg, data) if n_steps is None else int(n_steps)
    burn = int(cfg.burn_in_fraction * total)
    rng = chain_rng(cfg.seed, chain_index)
    state = initial_state(model.dim, cfg, rng)
    integrator = Integrator(kind, model, data, cfg, rng)
    report = ChainReport(kind, total)

    def checkpoint(step, diverged):
        if sink is not None:
            rec = sink.checkpoint(step, diverged)
            if rec is not None:
                report.records.append(rec)

    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for step in range(1, total + 1):
            try:
                state = integrator.step(state)
                finite = state.is_finite(cfg.divergence_bound)
            except NumericalFailureError as err:
                logger.info("%s chain failed at step %d: %s", kind, step, err)
                finite = False
            if not finite:
                report.diverged_step = step
                logger.info("%s chain diverged at step %d", kind, step)
                break
            if step > burn:
                report.n_samples += 1
                if sink is not None:
                    sink.observe(state)
            if checkpoint_every and step % checkpoint_every == 0 and step < total:
                checkpoint(step, False)
    if report.diverged_step is not None and checkpoint_every:
        # keep the checkpoint grid complete; metrics after divergence are undefined
        first = (report.diverged_step // checkpoint_every + 1) * checkpoint_every
        for step in range(first, total, checkpoint_every):
            checkpoint(step, True)
    if total > 0:
        checkpoint(total, report.diverged)
    report.final_state = state
    return report

