"""Exact sampler for SIW(nu, c I_K, 1).

With ``psi = c I`` the eigenvectors and eigenvalues are independent: the
eigenvectors are Haar distributed and the eigenvalues are the order
statistics of K i.i.d. ``IG(nu - 1, c / 2)`` variates.
"""

from __future__ import annotations

import numpy as np

from .batch import Provenance, SampleBatch
from .errors import ParameterError
from .params import SIWParams
from .randmat import DRAW_BLOCK, RandomStream, map_blocks, sample_haar_batch, sample_inverse_gamma

__all__ = ["sample_siw_identity", "sort_descending"]


def sort_descending(lambdas: np.ndarray) -> np.ndarray:
    """Row-wise permutation putting eigenvalues in non-increasing order.

    Ties keep their original relative order.
    """
    return np.argsort(-lambdas, axis=-1, kind="stable")


def sample_siw_identity(
    nu: float,
    c: float,
    K: int,
    N: int,
    rng: RandomStream,
    threads: int = 1,
) -> SampleBatch:
    """Draw ``N`` independent exact samples from ``SIW(nu, c I_K, 1)``.

    Draws are produced in blocks of :data:`DRAW_BLOCK`; block ``b`` uses
    ``rng.substream(b)``, so the result is independent of ``threads``.
    """
    params = SIWParams.identity(nu, c, K)  # validates nu, c, K
    N = int(N)
    if N < 1:
        raise ParameterError(f"sample size N must be >= 1, got {N}")
    K = params.K
    shape, scale = params.nu - 1.0, 0.5 * float(c)

    def block(b: int, start: int, stop: int):
        gen = rng.substream(b).generator
        n = stop - start
        gammas = sample_haar_batch(K, n, gen)
        lam = sample_inverse_gamma(shape, scale, gen, size=(n, K))
        lam = np.take_along_axis(lam, sort_descending(lam), axis=1)
        return lam, gammas

    parts = map_blocks(block, N, DRAW_BLOCK, threads)
    lambdas = np.concatenate([p[0] for p in parts])
    gammas = np.concatenate([p[1] for p in parts])
    prov = Provenance(
        algorithm="exact",
        nu=params.nu,
        psi=f"identity({float(c)!r})",
        K=K,
        N=N,
        seed=rng.seed,
        stream_index=rng.stream_index,
    )
    return SampleBatch(lambdas, gammas, prov)
