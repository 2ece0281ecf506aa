"""Mixture-of-transition-distributions models and in-context estimators of their lag weights."""
from .core import (
    C_MIN,
    ModelConfig,
    generate_batch,
    generate_sequence,
    lag_likelihoods,
    log_likelihood,
    log_likelihood_gradient,
    make_rng,
    predictive_distribution,
    responsibilities,
    sample_mixture_weights,
    sample_transition_matrix,
)
from .errors import ConfigurationError, EnumerationLimitError, PreconditionError
from .kernels import BACKEND

__version__ = "0.1.0"
