"""Sampling importance resampling for SIW(nu, psi, 1) with general psi.

Proposal: draw ``Gamma0`` from the Haar measure, then each eigenvalue
``lambda_i ~ IG(nu - 1, Gamma0_i^T psi Gamma0_i / 2)`` independently, and sort
the eigenvalues in decreasing order carrying the columns of ``Gamma0`` along.
The importance weight of such a draw depends on the eigenvectors only::

    log w = K log Gamma(nu - 1) - (nu - 1) * sum_i log(Gamma_i^T psi Gamma_i / 2)

All weight arithmetic stays in the log domain.  The optional clipping step
caps every log-weight above the M_T-th largest one at that value.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaln

from .batch import FLOAT_FMT, Provenance, SampleBatch
from .errors import EmptyInputError, NumericalError, ParameterError
from .exact import sort_descending
from .params import EigenFactor, SIWParams
from .randmat import DRAW_BLOCK, RandomStream, map_blocks, sample_haar_batch, sample_inverse_gamma

__all__ = [
    "ProposalDraw",
    "WeightVector",
    "log_weight",
    "log_weight_bound",
    "sample_proposal",
    "sample_proposals",
    "normalize_weights",
    "clip_log_weights",
    "clip_size",
    "multinomial_resample",
    "ess",
    "sample_siw_sir",
    "sample_siw_sir_clipped",
    "psi_descriptor",
    "write_weight_diagnostics",
]

# range of nu - 1 over which gammaln is trusted to 1e-12 relative
LOGGAMMA_MIN, LOGGAMMA_MAX = 0.5, 1e4
PROB_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ProposalDraw:
    factor: EigenFactor
    log_weight: float


@dataclass(frozen=True, eq=False)
class WeightVector:
    """Log-weights of a proposal pool and the resampling probabilities derived from them.

    ``log_weights`` are the raw values; ``effective_log_weights`` are what was
    normalized (equal to the raw ones unless ``clipped``).
    """

    log_weights: NDArray[np.float64]
    effective_log_weights: NDArray[np.float64]
    probabilities: NDArray[np.float64]
    clipped: bool = False
    clip_threshold_index: int | None = None
    ess: float = field(init=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "ess", ess(self.probabilities))

    @property
    def M(self) -> int:
        return self.log_weights.size

    @property
    def ess_percent(self) -> float:
        return 100.0 * self.ess / self.M

    def summary(self) -> dict:
        return {
            "ESS": self.ess,
            "ESS_percent": self.ess_percent,
            "max_log_weight": float(self.log_weights.max()),
            "min_log_weight": float(self.log_weights.min()),
            "M": self.M,
            "M_T": self.clip_threshold_index,
        }


def _check_loggamma_range(nu: float) -> None:
    if not LOGGAMMA_MIN <= nu - 1.0 <= LOGGAMMA_MAX:
        raise ParameterError(
            f"nu - 1 = {nu - 1.0:g} is outside [{LOGGAMMA_MIN:g}, {LOGGAMMA_MAX:g}] supported by the weight computation"
        )


def _log_weights_from_scales(scales: NDArray, nu: float) -> NDArray[np.float64]:
    # scales[..., i] = Gamma_i^T psi Gamma_i / 2
    if not np.all(np.isfinite(scales)) or np.any(scales <= 0.0):
        raise NumericalError("non-positive quadratic form Gamma_i^T psi Gamma_i")
    K = scales.shape[-1]
    out = K * gammaln(nu - 1.0) - (nu - 1.0) * np.log(scales).sum(axis=-1)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite log-weight")
    return out


def _half_quadratic_forms(gammas: NDArray, psi: NDArray) -> NDArray[np.float64]:
    """``gammas[..., :, i]^T psi gammas[..., :, i] / 2`` for every column i."""
    return 0.5 * np.sum(gammas * (psi @ gammas), axis=-2)


def log_weight(gamma: NDArray, params: SIWParams) -> float:
    """Unnormalized log importance weight of a proposal with eigenvectors ``gamma``.

    The proportionality constant is fixed to 1; it cancels after normalization.
    """
    _check_loggamma_range(params.nu)
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.shape != (params.K, params.K):
        raise ParameterError(f"gamma must be {params.K} x {params.K}, got {gamma.shape}")
    return float(_log_weights_from_scales(_half_quadratic_forms(gamma, params.psi), params.nu))


def log_weight_bound(params: SIWParams) -> float:
    """Upper bound ``K log Gamma(nu-1) - K (nu-1) log(lambda_min(psi) / 2)`` on every log-weight."""
    K, a = params.K, params.nu - 1.0
    return float(K * gammaln(a) - K * a * np.log(0.5 * params.min_eigenvalue))


def _proposal_block(params: SIWParams, n: int, gen: np.random.Generator):
    K = params.K
    gammas = sample_haar_batch(K, n, gen)
    scales = _half_quadratic_forms(gammas, params.psi)
    lam = sample_inverse_gamma(params.nu - 1.0, scales, gen)
    lw = _log_weights_from_scales(scales, params.nu)
    order = sort_descending(lam)
    lam = np.take_along_axis(lam, order, axis=1)
    gammas = np.take_along_axis(gammas, order[:, None, :], axis=2)
    return lam, gammas, lw


def sample_proposal(params: SIWParams, rng: RandomStream) -> ProposalDraw:
    """Draw one proposal ``(lambdas, gamma)`` and its log-weight."""
    _check_loggamma_range(params.nu)
    lam, gammas, lw = _proposal_block(params, 1, rng.generator)
    return ProposalDraw(EigenFactor(lam[0], gammas[0]), float(lw[0]))


def sample_proposals(params: SIWParams, M: int, rng: RandomStream, threads: int = 1):
    """Draw ``M`` proposals; returns ``(lambdas (M, K), gammas (M, K, K), log_weights (M,))``.

    Block ``b`` of :data:`DRAW_BLOCK` draws uses ``rng.substream(b)``.
    """
    _check_loggamma_range(params.nu)
    M = int(M)
    if M < 1:
        raise ParameterError(f"proposal size M must be >= 1, got {M}")
    parts = map_blocks(lambda b, s, e: _proposal_block(params, e - s, rng.substream(b).generator), M, DRAW_BLOCK, threads)
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def _as_log_vector(log_weights) -> NDArray[np.float64]:
    lw = np.asarray(log_weights, dtype=np.float64).ravel()
    if lw.size == 0:
        raise EmptyInputError("log-weight vector is empty")
    if np.any(np.isnan(lw)):
        raise NumericalError("log-weights contain NaN")
    if not np.all(np.isfinite(lw)):
        raise NumericalError("log-weights must be finite")
    return lw


def normalize_weights(log_weights) -> NDArray[np.float64]:
    """Probabilities ``exp(lw - max lw) / sum(exp(lw - max lw))`` (log-sum-exp normalization)."""
    lw = _as_log_vector(log_weights)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def clip_size(M: int, exponent: float) -> int:
    """``ceil(M ** exponent)``, clamped to ``[1, M]``."""
    if not 0.0 < exponent <= 1.0:
        raise ParameterError(f"clip exponent must lie in (0, 1], got {exponent}")
    # round first so that exact powers such as 10000**0.5 are not pushed up by fuzz
    return int(min(M, max(1, math.ceil(round(M**exponent, 9)))))


def clip_log_weights(log_weights, M_T: int) -> NDArray[np.float64]:
    """Replace every log-weight strictly above the ``M_T``-th greatest by that value."""
    lw = _as_log_vector(log_weights)
    M_T = int(M_T)
    if not 1 <= M_T <= lw.size:
        raise ParameterError(f"M_T must satisfy 1 <= M_T <= M = {lw.size}, got {M_T}")
    k = lw.size - M_T
    threshold = np.partition(lw, k)[k]
    return np.where(lw > threshold, threshold, lw)


def _check_probabilities(p) -> NDArray[np.float64]:
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size == 0:
        raise EmptyInputError("probability vector is empty")
    if not np.all(np.isfinite(p)):
        raise NumericalError("probabilities must be finite")
    if np.any(p < 0.0):
        raise ParameterError("probabilities must be non-negative")
    if abs(p.sum() - 1.0) > PROB_SUM_TOL:
        raise ParameterError(f"probabilities sum to {p.sum()!r}, not 1")
    return p


def multinomial_resample(probabilities, N: int, rng: RandomStream) -> NDArray[np.int64]:
    """``N`` i.i.d. categorical draws of 0-based indices with the given probabilities."""
    p = _check_probabilities(probabilities)
    N = int(N)
    if N < 0:
        raise ParameterError(f"N must be non-negative, got {N}")
    if N == 0:
        return np.empty(0, dtype=np.int64)
    return rng.generator.choice(p.size, size=N, replace=True, p=p / p.sum()).astype(np.int64)


def ess(probabilities) -> float:
    """Effective sample size ``1 / sum(p**2)``; lies in ``(0, M]``."""
    p = _check_probabilities(probabilities)
    return float(1.0 / np.dot(p, p))


def psi_descriptor(params: SIWParams) -> str:
    c = params.identity_scale()
    if c is not None:
        return f"identity({c!r})"
    digest = hashlib.sha256(np.ascontiguousarray(params.psi).tobytes()).hexdigest()[:16]
    return f"matrix:{digest}"


def _run_sir(params, M, N, rng, M_T, threads, psi_label) -> SampleBatch:
    N = int(N)
    if N < 1:
        raise ParameterError(f"sample size N must be >= 1, got {N}")
    lambdas, gammas, lw = sample_proposals(params, M, rng.substream(0), threads)
    if M_T is None:
        effective = lw
    else:
        effective = clip_log_weights(lw, M_T)
    probs = normalize_weights(effective)
    weights = WeightVector(lw, effective, probs, clipped=M_T is not None, clip_threshold_index=M_T)
    indices = multinomial_resample(probs, N, rng.substream(1))
    prov = Provenance(
        algorithm="sir" if M_T is None else "sir-clipped",
        nu=params.nu,
        psi=psi_label or psi_descriptor(params),
        K=params.K,
        N=N,
        seed=rng.seed,
        stream_index=rng.stream_index,
        M=int(M),
        M_T=None if M_T is None else int(M_T),
    )
    return SampleBatch(lambdas, gammas, prov, indices=indices, weights=weights)


def sample_siw_sir(
    params: SIWParams,
    M: int,
    N: int,
    rng: RandomStream,
    threads: int = 1,
    psi_label: str | None = None,
) -> SampleBatch:
    """SIR sampling: ``M`` proposals, log-sum-exp normalized weights, ``N`` multinomial draws.

    The returned batch keeps the proposal pool and exposes its
    :class:`WeightVector` (and hence the ESS) as ``batch.weights``.
    """
    return _run_sir(params, M, N, rng, None, threads, psi_label)


def sample_siw_sir_clipped(
    params: SIWParams,
    M: int,
    M_T: int,
    N: int,
    rng: RandomStream,
    threads: int = 1,
    psi_label: str | None = None,
) -> SampleBatch:
    """SIR sampling with the ``M_T`` largest log-weights clipped before normalization."""
    if not 1 <= int(M_T) <= int(M):
        raise ParameterError(f"M_T must satisfy 1 <= M_T <= M = {M}, got {M_T}")
    return _run_sir(params, M, N, rng, int(M_T), threads, psi_label)


def write_weight_diagnostics(weights: WeightVector, csv_path: str | Path) -> tuple[Path, Path]:
    """Write per-proposal weights (CSV, 0-based ``m``) and a JSON summary next to it."""
    csv_path = Path(csv_path)
    table = np.column_stack(
        [np.arange(weights.M), weights.log_weights, weights.effective_log_weights, weights.probabilities]
    )
    np.savetxt(
        csv_path,
        table,
        fmt=["%d", FLOAT_FMT, FLOAT_FMT, FLOAT_FMT],
        delimiter=",",
        header="m,log_weight,log_weight_clipped,p_m",
        comments="",
    )
    summary_path = csv_path.with_suffix(".json")
    summary_path.write_text(json.dumps(weights.summary(), indent=2, sort_keys=True) + "\n")
    return csv_path, summary_path
