"""Sample batches, their provenance, and the CSV + JSON sidecar format.

A batch keeps a *pool* of eigen-factors plus an optional vector of indices
into that pool.  Exact sampling fills the pool with the N draws themselves;
SIR keeps the M proposals and the N resampled indices, so nothing of size
``N * K**2`` is materialized unless dense matrices are explicitly requested.

On disk a batch is ``<name>.csv`` with one row per sample and K*K columns
(row-major entries of Sigma, header ``s_<i>_<j>`` with 1-based i, j) and a
``<name>.json`` sidecar holding the provenance.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Iterator

import numpy as np
from numpy.typing import NDArray

from ._version import __version__
from .errors import EmptyInputError, ParameterError, ShapeError
from .params import EigenFactor, compose_batch

if TYPE_CHECKING:
    from .sir import WeightVector

__all__ = ["Provenance", "SampleBatch", "write_batch", "read_batch", "FLOAT_FMT", "COMPOSE_BLOCK"]

FLOAT_FMT = "%.17g"
COMPOSE_BLOCK = 256


@dataclass(frozen=True)
class Provenance:
    algorithm: str
    nu: float
    psi: str
    K: int
    N: int
    seed: int | None = None
    stream_index: int = 0
    M: int | None = None
    M_T: int | None = None
    version: str = field(default=__version__)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Provenance":
        return cls(**d)


class SampleBatch:
    """An ordered collection of SPD samples plus the provenance that produced it.

    Parameters
    ----------
    lambdas : ndarray, shape (P, K)
        Pool eigenvalues, each row non-increasing.
    gammas : ndarray, shape (P, K, K)
        Pool eigenvector matrices, column i pairs with ``lambdas[:, i]``.
    provenance : Provenance
    indices : ndarray of int, shape (N,), optional
        Sample n is pool entry ``indices[n]``.  ``None`` means the pool is the
        sample itself (``N == P``).
    weights : WeightVector, optional
        Importance weights of the pool, for SIR batches.
    """

    def __init__(
        self,
        lambdas: NDArray,
        gammas: NDArray,
        provenance: Provenance,
        indices: NDArray | None = None,
        weights: "WeightVector | None" = None,
    ):
        lambdas = np.asarray(lambdas, dtype=np.float64)
        gammas = np.asarray(gammas, dtype=np.float64)
        if lambdas.ndim != 2 or gammas.shape != lambdas.shape + (lambdas.shape[1],):
            raise ShapeError(f"inconsistent pool shapes {lambdas.shape} and {gammas.shape}")
        if indices is not None:
            indices = np.asarray(indices, dtype=np.int64)
            if indices.ndim != 1:
                raise ShapeError("indices must be one-dimensional")
            if indices.size and (indices.min() < 0 or indices.max() >= lambdas.shape[0]):
                raise ParameterError("indices out of range of the pool")
        self.lambdas = lambdas
        self.gammas = gammas
        self.indices = indices
        self.provenance = provenance
        self.weights = weights

    @property
    def K(self) -> int:
        return self.lambdas.shape[1]

    @property
    def pool_size(self) -> int:
        return self.lambdas.shape[0]

    def __len__(self) -> int:
        return self.pool_size if self.indices is None else self.indices.size

    def counts(self) -> NDArray[np.int64]:
        """How many times each pool entry appears in the sample."""
        if self.indices is None:
            return np.ones(self.pool_size, dtype=np.int64)
        return np.bincount(self.indices, minlength=self.pool_size)

    def sample_lambdas(self) -> NDArray[np.float64]:
        return self.lambdas if self.indices is None else self.lambdas[self.indices]

    def factor(self, n: int) -> EigenFactor:
        m = n if self.indices is None else int(self.indices[n])
        return EigenFactor(self.lambdas[m], self.gammas[m])

    def __iter__(self) -> Iterator[EigenFactor]:
        for n in range(len(self)):
            yield self.factor(n)

    def pool_blocks(self, power: float = 1, block: int = COMPOSE_BLOCK) -> Iterator[tuple[int, int, NDArray]]:
        """Yield ``(start, stop, Sigma**power)`` over consecutive blocks of the pool."""
        for s in range(0, self.pool_size, block):
            e = min(s + block, self.pool_size)
            yield s, e, compose_batch(self.lambdas[s:e], self.gammas[s:e], power)

    def matrices(self, power: float = 1) -> NDArray[np.float64]:
        """Dense samples, shape ``(N, K, K)``.  Costs ``O(N K^2)`` memory."""
        if self.pool_size == 0:
            return np.empty((0, self.K, self.K))
        pool = np.concatenate([blk for _, _, blk in self.pool_blocks(power)])
        return pool if self.indices is None else pool[self.indices]

    @classmethod
    def from_matrices(cls, matrices: NDArray, provenance: Provenance) -> "SampleBatch":
        """Build a batch from dense SPD matrices by eigen-decomposing each one."""
        mats = np.asarray(matrices, dtype=np.float64)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise ShapeError(f"expected an (N, K, K) array, got {mats.shape}")
        w, v = np.linalg.eigh(mats)
        return cls(w[:, ::-1].copy(), v[:, :, ::-1].copy(), provenance)


def _sidecar(csv_path: Path) -> Path:
    return csv_path.with_suffix(".json")


def write_batch(batch: SampleBatch, csv_path: str | Path) -> tuple[Path, Path]:
    """Write ``batch`` as CSV plus JSON sidecar; return both paths."""
    csv_path = Path(csv_path)
    K = batch.K
    header = ",".join(f"s_{i + 1}_{j + 1}" for i in range(K) for j in range(K))
    with open(csv_path, "w", newline="") as fh:
        fh.write(header + "\n")
        for s in range(0, len(batch), COMPOSE_BLOCK):
            e = min(s + COMPOSE_BLOCK, len(batch))
            idx = np.arange(s, e) if batch.indices is None else batch.indices[s:e]
            blk = compose_batch(batch.lambdas[idx], batch.gammas[idx])
            np.savetxt(fh, blk.reshape(e - s, K * K), fmt=FLOAT_FMT, delimiter=",")
    side = _sidecar(csv_path)
    side.write_text(json.dumps(batch.provenance.to_dict(), indent=2, sort_keys=True) + "\n")
    return csv_path, side


def read_batch(csv_path: str | Path) -> SampleBatch:
    """Read a batch written by :func:`write_batch`."""
    csv_path = Path(csv_path)
    prov = Provenance.from_dict(json.loads(_sidecar(csv_path).read_text()))
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[0] == 0:
        raise EmptyInputError(f"{csv_path} holds no samples")
    K = int(round(np.sqrt(data.shape[1])))
    if K * K != data.shape[1] or K != prov.K:
        raise ShapeError(f"{csv_path}: {data.shape[1]} columns do not match K = {prov.K}")
    return SampleBatch.from_matrices(data.reshape(-1, K, K), prov)
