"""Samplers for the Shrinkage Inverse-Wishart distribution with b = 1."""

from ._version import __version__
from .batch import Provenance, SampleBatch, read_batch, write_batch
from .errors import (
    ConditioningError,
    EmptyInputError,
    MomentNonexistenceError,
    NumericalError,
    ParameterError,
    ShapeError,
    SIWError,
)
from .exact import sample_siw_identity
from .params import EigenFactor, SIWParams, compose
from .randmat import RandomStream, sample_haar_orthogonal, sample_inverse_gamma
from .sir import (
    WeightVector,
    clip_log_weights,
    ess,
    log_weight,
    multinomial_resample,
    normalize_weights,
    sample_proposal,
    sample_siw_sir,
    sample_siw_sir_clipped,
)
