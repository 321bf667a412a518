"""Moment estimators, closed-form moments for psi = c I, error metrics and test functions."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from .batch import COMPOSE_BLOCK, SampleBatch
from .errors import ConditioningError, EmptyInputError, MomentNonexistenceError, ParameterError, ShapeError
from .params import compose_batch

__all__ = [
    "TestFunction",
    "MomentReport",
    "entry",
    "trace",
    "determinant",
    "inv_sqrt_det",
    "gaussian_likelihood",
    "moment_estimator",
    "moment_report",
    "theoretical_moment_identity",
    "error_ep",
    "sir_estimator",
    "e1_sir",
]

# inverse powers refuse samples whose condition number exceeds this
MAX_CONDITION = 1e14


@dataclass(frozen=True)
class TestFunction:
    """A real function of an SPD matrix together with its square-integrability threshold.

    ``nu_threshold(K)`` is the value nu must strictly exceed for the function
    to be square integrable.  Built-in catalog entries raise when used below
    that threshold; user functions only warn.
    """

    __test__ = False  # not a pytest class

    name: str
    func: Callable[[NDArray], float]
    nu_threshold: Callable[[int], float]
    builtin: bool = False

    def __call__(self, sigma: NDArray) -> float:
        return self.func(sigma)


def entry(i: int, j: int) -> TestFunction:
    """``Sigma[i, j]`` (0-based)."""
    return TestFunction(f"entry({i},{j})", lambda s: s[i, j], lambda K: 3.0, builtin=True)


def trace() -> TestFunction:
    return TestFunction("trace", lambda s: float(np.trace(s)), lambda K: 3.0, builtin=True)


def determinant() -> TestFunction:
    return TestFunction("determinant", lambda s: float(np.linalg.det(s)), lambda K: 2.0 * K + 1.0, builtin=True)


def _inv_sqrt_det(s: NDArray) -> float:
    sign, logdet = np.linalg.slogdet(s)
    if sign <= 0:
        raise ConditioningError("matrix is not positive definite")
    return float(np.exp(-0.5 * logdet))


def inv_sqrt_det() -> TestFunction:
    return TestFunction("inv_sqrt_det", _inv_sqrt_det, lambda K: 1.0, builtin=True)


def gaussian_likelihood(x: NDArray, u: NDArray | None = None, c: float = 1.0) -> TestFunction:
    """``c |Sigma|^(-1/2) exp(-tr(Sigma^-1 S) / 2)`` with ``S = sum_t (x_t - u)(x_t - u)^T``.

    ``x`` has one observation per row.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    u = np.zeros(x.shape[1]) if u is None else np.asarray(u, dtype=np.float64)
    d = x - u
    scatter = d.T @ d

    def f(s: NDArray) -> float:
        return float(c * _inv_sqrt_det(s) * np.exp(-0.5 * np.trace(np.linalg.solve(s, scatter))))

    return TestFunction("gaussian_likelihood", f, lambda K: 1.0, builtin=True)


def _pool_average(batch: SampleBatch, values: Callable[[NDArray], NDArray]) -> NDArray:
    """``(1/N) sum_n v(Sigma_n)`` evaluated once per distinct pool entry.

    ``values(idx)`` returns the stacked values for pool entries ``idx``.
    Accumulation is strictly sequential over used pool entries so that
    different value shapes (a matrix vs one of its entries) sum identically.
    """
    N = len(batch)
    if N == 0:
        raise EmptyInputError("batch is empty")
    counts = batch.counts()
    used = np.flatnonzero(counts)
    acc = None
    for s in range(0, used.size, COMPOSE_BLOCK):
        idx = used[s : s + COMPOSE_BLOCK]
        vals = np.asarray(values(idx), dtype=np.float64)
        contrib = counts[idx].reshape((-1,) + (1,) * (vals.ndim - 1)) * vals
        if acc is not None:
            contrib = np.concatenate([acc[None], contrib])
        acc = np.cumsum(contrib, axis=0)[-1]
    return acc / N


def moment_estimator(batch: SampleBatch, p: int) -> NDArray[np.float64]:
    """Sample mean of ``Sigma**p`` computed from the eigen-factors, ``Gamma diag(lambda**p) Gamma^T``."""
    if p < 0:
        lam = batch.lambdas[batch.counts() > 0]
        if np.any(lam[:, -1] <= 0.0) or np.any(lam[:, 0] / lam[:, -1] > MAX_CONDITION):
            raise ConditioningError(f"a sample is numerically singular; cannot form Sigma**{p}")
    return _pool_average(batch, lambda idx: compose_batch(batch.lambdas[idx], batch.gammas[idx], p))


def theoretical_moment_identity(nu: float, c: float, p: int, K: int) -> NDArray[np.float64]:
    """Closed-form ``E[Sigma**p]`` under ``SIW(nu, c I_K, 1)`` for ``p`` in ``{-1, 1, 2}``."""
    if c <= 0:
        raise ParameterError(f"c must be positive, got {c}")
    if p == -1:
        if nu <= 1:
            raise MomentNonexistenceError("E[Sigma^-1] requires nu > 1")
        value = 2.0 * (nu - 1.0) / c
    elif p == 1:
        if nu <= 2:
            raise MomentNonexistenceError("E[Sigma] requires nu > 2")
        value = c / (2.0 * (nu - 2.0))
    elif p == 2:
        if nu <= 3:
            raise MomentNonexistenceError("E[Sigma^2] requires nu > 3")
        value = c**2 / (4.0 * (nu - 2.0) * (nu - 3.0))
    else:
        raise ParameterError(f"closed form only available for p in {{-1, 1, 2}}, got {p}")
    return value * np.eye(int(K))


def error_ep(estimate: NDArray, truth: NDArray) -> float:
    """Mean absolute entrywise error ``sum_ij |estimate_ij - truth_ij| / K**2``."""
    a = np.asarray(estimate, dtype=np.float64)
    b = np.asarray(truth, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).mean())


def _check_integrability(batch: SampleBatch, f) -> None:
    if not isinstance(f, TestFunction):
        return
    threshold = f.nu_threshold(batch.K)
    if batch.provenance.nu > threshold:
        return
    msg = f"{f.name} is not square integrable unless nu > {threshold:g} (batch has nu = {batch.provenance.nu:g})"
    if f.builtin:
        raise MomentNonexistenceError(msg)
    warnings.warn(msg, RuntimeWarning, stacklevel=3)


def sir_estimator(batch: SampleBatch, f: TestFunction | Callable[[NDArray], float]) -> float:
    """``(1/N) sum_n f(Sigma_n)`` over the samples of ``batch``."""
    _check_integrability(batch, f)

    def values(idx):
        mats = compose_batch(batch.lambdas[idx], batch.gammas[idx])
        return np.array([f(m) for m in mats], dtype=np.float64)

    return float(_pool_average(batch, values))


def e1_sir(batch_a: SampleBatch, batch_b: SampleBatch) -> float:
    """Mean absolute entrywise gap between the sample means of two independent batches."""
    if batch_a.K != batch_b.K:
        raise ShapeError(f"batches have different K: {batch_a.K} vs {batch_b.K}")
    return error_ep(moment_estimator(batch_a, 1), moment_estimator(batch_b, 1))


@dataclass(frozen=True, eq=False)
class MomentReport:
    p: int
    estimate: NDArray[np.float64]
    truth: NDArray[np.float64] | None = None
    e_p: float | None = None

    def to_json(self) -> str:
        return json.dumps(
            {
                "p": self.p,
                "estimate": np.asarray(self.estimate).tolist(),
                "truth": None if self.truth is None else np.asarray(self.truth).tolist(),
                "e_p": self.e_p,
            },
            sort_keys=True,
        )


def moment_report(batch: SampleBatch, p: int, truth: NDArray | None = None) -> MomentReport:
    est = moment_estimator(batch, p)
    if truth is None:
        return MomentReport(p, est)
    return MomentReport(p, est, np.asarray(truth, dtype=np.float64), error_ep(est, truth))
