"""Distribution parameters and the eigen-factor representation of a covariance draw."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import ParameterError, ShapeError

__all__ = ["SIWParams", "EigenFactor", "compose", "compose_batch", "SYMMETRY_TOL"]

SYMMETRY_TOL = 1e-10


def _readonly(a: NDArray) -> NDArray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SIWParams:
    """Parameters of the Shrinkage Inverse-Wishart law with ``b = 1``.

    Parameters
    ----------
    nu : float
        Degree of freedom, must exceed 1.
    psi : array_like
        ``K x K`` symmetric positive-definite scale matrix.
    """

    nu: float
    psi: NDArray[np.float64]
    b: int = field(default=1, init=False)
    _min_eig: float = field(default=0.0, init=False, repr=False)

    def __post_init__(self) -> None:
        nu = float(self.nu)
        if not np.isfinite(nu) or nu <= 1.0:
            raise ParameterError(f"nu must be a finite number > 1, got {self.nu}")
        psi = np.asarray(self.psi, dtype=np.float64)
        if psi.ndim != 2 or psi.shape[0] != psi.shape[1] or psi.shape[0] < 1:
            raise ShapeError(f"psi must be a non-empty square matrix, got shape {psi.shape}")
        if not np.all(np.isfinite(psi)):
            raise ParameterError("psi contains non-finite entries")
        asym = float(np.max(np.abs(psi - psi.T)))
        if asym > SYMMETRY_TOL:
            raise ParameterError(f"psi is not symmetric (max |psi - psi^T| = {asym:.3g})")
        min_eig = float(np.linalg.eigvalsh(psi)[0])
        if min_eig <= 0.0:
            raise ParameterError(f"psi is not positive definite (min eigenvalue {min_eig:.3g})")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "psi", _readonly(psi))
        object.__setattr__(self, "_min_eig", min_eig)

    @classmethod
    def identity(cls, nu: float, c: float, K: int) -> "SIWParams":
        """Parameters with ``psi = c * I_K``."""
        c = float(c)
        if not np.isfinite(c) or c <= 0.0:
            raise ParameterError(f"scale c must be positive, got {c}")
        if int(K) < 1:
            raise ParameterError(f"dimension K must be >= 1, got {K}")
        return cls(nu, c * np.eye(int(K)))

    @property
    def K(self) -> int:
        return self.psi.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of ``psi``."""
        return self._min_eig

    def identity_scale(self) -> float | None:
        """Return ``c`` if ``psi == c * I`` exactly, else ``None``."""
        c = float(self.psi[0, 0])
        if np.array_equal(self.psi, c * np.eye(self.K)):
            return c
        return None


@dataclass(frozen=True, eq=False)
class EigenFactor:
    """A covariance draw stored as ``(lambdas, gamma)`` with ``Sigma = gamma diag(lambdas) gamma^T``."""

    lambdas: NDArray[np.float64]
    gamma: NDArray[np.float64]

    def __post_init__(self) -> None:
        lam = _readonly(self.lambdas)
        g = _readonly(self.gamma)
        if lam.ndim != 1 or g.shape != (lam.size, lam.size):
            raise ParameterError("lambdas must be length K and gamma K x K")
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "gamma", g)

    @property
    def K(self) -> int:
        return self.lambdas.size

    def compose(self, power: float = 1) -> NDArray[np.float64]:
        return compose_batch(self.lambdas[None], self.gamma[None], power)[0]


def compose_batch(lambdas: NDArray, gammas: NDArray, power: float = 1) -> NDArray[np.float64]:
    """Stacked ``gamma diag(lambdas**power) gamma^T`` for arrays of shape ``(n, K)`` and ``(n, K, K)``.

    The result is symmetrized so each matrix is exactly symmetric.
    """
    lam = np.asarray(lambdas, dtype=np.float64)
    if power != 1:
        lam = lam**power
    out = (gammas * lam[:, None, :]) @ np.swapaxes(gammas, 1, 2)
    return 0.5 * (out + np.swapaxes(out, 1, 2))


def compose(factor: EigenFactor) -> NDArray[np.float64]:
    """Dense ``Sigma`` for a single eigen-factor."""
    return factor.compose()
