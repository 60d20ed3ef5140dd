"""Stochastic-gradient MCMC with covariance-controlled adaptive Langevin thermostats.

The main entry points are :func:`sgmcmc.samplers.run_chain` for a single
chain, the sklearn-style :class:`SGMCMCRegressor` / :class:`SGMCMCClassifier`
wrappers, and :func:`sgmcmc.harness.run_experiment` for configured grids.
"""

from .estimators import SGMCMCClassifier, SGMCMCRegressor
from .exceptions import FormatError, InvalidInputError, NotPSDError, NumericalFailureError
from .models import Dataset, ModelSpec
from .samplers import SAMPLER_KINDS, SamplerConfig, run_chain

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FormatError",
    "InvalidInputError",
    "ModelSpec",
    "NotPSDError",
    "NumericalFailureError",
    "SAMPLER_KINDS",
    "SGMCMCClassifier",
    "SGMCMCRegressor",
    "SamplerConfig",
    "run_chain",
]
