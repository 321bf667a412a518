"""Random-matrix and random-scalar primitives.

Every draw in the package goes through a :class:`RandomStream`.  A stream is
identified by ``(seed, stream_index, *path)`` and maps onto a numpy
``SeedSequence`` spawn key, so sub-streams are independent and can be created
in any order (or in parallel) without changing the variates they produce.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np
from numpy.typing import NDArray

from .errors import NumericalError, ParameterError

__all__ = [
    "RandomStream",
    "sample_haar_orthogonal",
    "sample_haar_batch",
    "sample_inverse_gamma",
    "block_ranges",
    "map_blocks",
    "DRAW_BLOCK",
]

_U64 = 2**64
T = TypeVar("T")


class RandomStream:
    """A reproducible, seedable source of variates.

    Parameters
    ----------
    seed : int
        Master seed, an unsigned 64-bit integer.
    stream_index : int
        Index of the parallel sub-stream for this seed.
    path : sequence of int, optional
        Further nesting below ``stream_index``; normally produced by
        :meth:`substream` rather than passed by hand.

    Notes
    -----
    Instances are single-owner.  Hand each worker its own sub-stream instead
    of sharing one stream across threads.
    """

    def __init__(self, seed: int, stream_index: int = 0, path: Sequence[int] = ()):
        seed = int(seed)
        stream_index = int(stream_index)
        if not 0 <= seed < _U64:
            raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
        if stream_index < 0:
            raise ParameterError(f"stream_index must be non-negative, got {stream_index}")
        path = tuple(int(p) for p in path)
        if any(p < 0 for p in path):
            raise ParameterError("sub-stream path entries must be non-negative")
        self.seed = seed
        self.stream_index = stream_index
        self.path = path
        self._generator: np.random.Generator | None = None

    @property
    def key(self) -> tuple[int, ...]:
        return (self.stream_index, *self.path)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
            self._generator = np.random.Generator(np.random.PCG64(ss))
        return self._generator

    def substream(self, *indices: int) -> "RandomStream":
        """Return the independent child stream at ``indices`` below this one."""
        return RandomStream(self.seed, self.stream_index, self.path + tuple(indices))

    def __repr__(self) -> str:
        extra = f", path={self.path}" if self.path else ""
        return f"RandomStream(seed={self.seed}, stream_index={self.stream_index}{extra})"


def _as_generator(rng: RandomStream | np.random.Generator) -> np.random.Generator:
    if isinstance(rng, RandomStream):
        return rng.generator
    return rng


def sample_haar_batch(K: int, n: int, rng: RandomStream | np.random.Generator) -> NDArray[np.float64]:
    """Draw ``n`` Haar-distributed ``K x K`` orthogonal matrices, shape ``(n, K, K)``.

    Each matrix is the Q factor of a standard Gaussian matrix, with column j
    multiplied by ``sign(R_jj)`` so that R has a positive diagonal.  Without
    that correction the QR output is not Haar distributed.
    """
    K = int(K)
    if K < 1:
        raise ParameterError(f"dimension K must be >= 1, got {K}")
    if n < 0:
        raise ParameterError(f"number of draws must be >= 0, got {n}")
    gen = _as_generator(rng)
    a = gen.standard_normal((n, K, K))
    q, r = np.linalg.qr(a)
    signs = np.where(np.diagonal(r, axis1=1, axis2=2) < 0.0, -1.0, 1.0)
    return q * signs[:, None, :]


def sample_haar_orthogonal(K: int, rng: RandomStream | np.random.Generator) -> NDArray[np.float64]:
    """Draw a single Haar-distributed ``K x K`` orthogonal matrix."""
    return sample_haar_batch(K, 1, rng)[0]


def sample_inverse_gamma(shape, scale, rng: RandomStream | np.random.Generator, size=None):
    """Inverse-gamma variates with density proportional to ``x**(-shape-1) * exp(-scale/x)``.

    Computed as ``scale / G`` with ``G ~ Gamma(shape, 1)``, i.e. the reciprocal of
    a ``Gamma(shape, rate=scale)`` variate.  ``shape`` and ``scale`` broadcast
    against each other and against ``size``.
    """
    shape_arr = np.asarray(shape, dtype=np.float64)
    scale_arr = np.asarray(scale, dtype=np.float64)
    if not np.all(np.isfinite(shape_arr)) or np.any(shape_arr <= 0.0):
        raise ParameterError("inverse-gamma shape must be positive and finite")
    if not np.all(np.isfinite(scale_arr)) or np.any(scale_arr <= 0.0):
        raise ParameterError("inverse-gamma scale must be positive and finite")
    if size is None:
        size = np.broadcast_shapes(shape_arr.shape, scale_arr.shape)
    g = _as_generator(rng).standard_gamma(shape_arr, size=size)
    out = scale_arr / g
    if not np.all(np.isfinite(out)) or np.any(out <= 0.0):
        # standard_gamma can underflow to 0 for very small shapes
        raise NumericalError("inverse-gamma draw is not a finite positive number")
    if out.ndim == 0:
        return float(out)
    return out


def block_ranges(n: int, block: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into consecutive ``(start, stop)`` blocks of size ``block``."""
    return [(s, min(s + block, n)) for s in range(0, n, block)]


def map_blocks(fn: Callable[[int, int, int], T], n: int, block: int, threads: int = 1) -> list[T]:
    """Apply ``fn(block_index, start, stop)`` over blocks of ``range(n)``, in block order.

    Results do not depend on ``threads`` as long as ``fn`` derives its
    randomness from ``block_index`` alone.
    """
    ranges = block_ranges(n, block)
    if threads <= 1 or len(ranges) <= 1:
        return [fn(i, s, e) for i, (s, e) in enumerate(ranges)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, i, s, e) for i, (s, e) in enumerate(ranges)]
        return [f.result() for f in futures]


# Draws per sub-stream block.  Fixed so that output does not depend on the
# number of worker threads.
DRAW_BLOCK = 256
