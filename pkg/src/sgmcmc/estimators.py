"""sklearn-compatible wrappers that fit a Bayesian linear or logistic
regression by running one stochastic-gradient chain and keeping its
post-burn-in samples."""

import warnings

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import ConvergenceWarning
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, validate_data

from .models import LINEAR_REGRESSION, LOGISTIC_REGRESSION, Dataset, ModelSpec, expit
from .samplers import SAMPLER_KINDS, SamplerConfig, run_chain


class _SampleCollector:
    def __init__(self, thin):
        self.thin = thin
        self.seen = 0
        self.samples = []

    def observe(self, state):
        if self.seen % self.thin == 0:
            self.samples.append(state.theta.copy())
        self.seen += 1

    def checkpoint(self, step, diverged):
        return None


class _SGMCMCBase(BaseEstimator):
    _model_kind = None

    def __init__(self, sampler="mccadl", h=1e-3, friction=1.0, beta=1.0, thermal_mass=None,
                 batch=500, passes=100.0, burn_in_fraction=0.5, prior_variance=1.0,
                 thin=1, random_state=0):
        self.sampler = sampler
        self.h = h
        self.friction = friction
        self.beta = beta
        self.thermal_mass = thermal_mass
        self.batch = batch
        self.passes = passes
        self.burn_in_fraction = burn_in_fraction
        self.prior_variance = prior_variance
        self.thin = thin
        self.random_state = random_state

    def _run(self, X, y):
        if self.sampler not in SAMPLER_KINDS:
            raise ValueError(f"sampler must be one of {SAMPLER_KINDS}, got {self.sampler!r}")
        if int(self.thin) < 1:
            raise ValueError("thin must be >= 1")
        seed = 0 if self.random_state is None else int(self.random_state)
        data = Dataset(X, y)
        model = ModelSpec(self._model_kind, X.shape[1], prior_variance=float(self.prior_variance))
        cfg = SamplerConfig(
            h=float(self.h),
            beta=float(self.beta),
            friction=float(self.friction),
            thermal_mass=self.thermal_mass,
            batch=int(self.batch),
            seed=seed,
            passes=float(self.passes),
            burn_in_fraction=float(self.burn_in_fraction),
        )
        sink = _SampleCollector(int(self.thin))
        report = run_chain(self.sampler, model, data, cfg, sink)
        self.n_iter_ = report.n_steps
        self.diverged_step_ = report.diverged_step
        if report.diverged:
            warnings.warn(
                f"{self.sampler} chain diverged at step {report.diverged_step}; "
                "coefficients are NaN",
                ConvergenceWarning,
                stacklevel=3,
            )
            self.samples_ = np.empty((0, X.shape[1]))
            self.coef_ = np.full(X.shape[1], np.nan)
            return self
        if not sink.samples:
            raise ValueError(
                f"no post-burn-in samples with n_samples={X.shape[0]}, batch={self.batch}, "
                f"passes={self.passes}; increase passes or lower burn_in_fraction"
            )
        self.samples_ = np.asarray(sink.samples)
        self.coef_ = self.samples_.mean(axis=0)
        return self


class SGMCMCRegressor(RegressorMixin, _SGMCMCBase):
    """Bayesian linear regression (unit noise, Gaussian prior) sampled by SG-MCMC.

    ``predict`` uses the posterior-mean coefficients ``coef_``; the raw
    samples are kept in ``samples_``. There is no intercept: append a
    constant column to ``X`` if one is needed.
    """

    _model_kind = LINEAR_REGRESSION

    def __init__(self, sampler="mccadl", h=1e-3, friction=1.0, beta=1.0, thermal_mass=None,
                 batch=500, passes=100.0, burn_in_fraction=0.5, prior_variance=10.0,
                 thin=1, random_state=0):
        super().__init__(sampler, h, friction, beta, thermal_mass, batch, passes,
                         burn_in_fraction, prior_variance, thin, random_state)

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64, y_numeric=True)
        return self._run(X, y)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        return X @ self.coef_


class SGMCMCClassifier(ClassifierMixin, _SGMCMCBase):
    """Binary Bayesian logistic regression sampled by SG-MCMC.

    Any two labels are accepted; ``classes_[1]`` is the positive class.
    ``predict_proba`` averages the sigmoid over the posterior samples
    rather than plugging in the mean.
    """

    _model_kind = LOGISTIC_REGRESSION

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.classifier_tags.multi_class = False
        return tags

    def fit(self, X, y):
        X, y = validate_data(self, X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        if len(self.classes_) == 1:
            raise ValueError("got one class; need two")
        if len(self.classes_) > 2:
            raise ValueError(f"Only binary classification is supported; got {len(self.classes_)} classes")
        return self._run(X, np.where(encoded == 1, 1.0, -1.0))

    def decision_function(self, X):
        """Log-odds of the posterior predictive, consistent with ``predict_proba``."""
        p1 = self.predict_proba(X)[:, 1]
        with np.errstate(divide="ignore"):
            return np.log(p1) - np.log1p(-p1)

    def predict_proba(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, dtype=np.float64, reset=False)
        if len(self.samples_) == 0:
            p1 = np.full(X.shape[0], np.nan)
        else:
            p1 = expit(X @ self.samples_.T).mean(axis=1)
        return np.column_stack([1.0 - p1, p1])

    def predict(self, X):
        p1 = self.predict_proba(X)[:, 1]
        return self.classes_[(p1 > 0.5).astype(int)]
