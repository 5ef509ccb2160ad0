"""Log-domain machinery for scaled and balanced kernels.

The iterate of both solvers is a matrix of the form

    P_ij = exp(eta * (x_i + y_j - C_ij))

stored only through the cost matrix, ``eta`` and the potentials. The Gibbs
kernel ``exp(-eta * C)`` is never formed on its own.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DualPotentials, check_cost_matrix

MAX_EXPONENT = 700.0


def logsumexp(a, axis=None) -> np.ndarray:
    """Max-shifted ``log(sum(exp(a)))``; entries equal to ``-inf`` are allowed."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def softmin(values, eta: float) -> float:
    """Smooth minimum ``-log(sum(exp(-eta * a))) / eta``.

    Lies in ``[min(a) - log(m)/eta, min(a)]`` for ``m`` values.
    """
    a = np.asarray(values, dtype=float).ravel()
    if a.size == 0:
        raise ValueError("softmin of an empty sequence")
    if not eta > 0:
        raise ValueError(f"eta must be positive, got {eta!r}")
    if not np.all(np.isfinite(a)):
        raise ValueError("softmin needs finite values")
    amin = float(np.min(a))
    return amin - float(np.log(np.sum(np.exp(-eta * (a - amin))))) / eta


@dataclass(frozen=True)
class LogScaledMatrix:
    """Implicit positive matrix ``exp(eta * (x_i + y_j - C_ij))``."""

    C: np.ndarray
    eta: float
    potentials: DualPotentials

    def __post_init__(self):
        C = check_cost_matrix(self.C)
        object.__setattr__(self, "C", C)
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be a positive finite number, got {self.eta!r}")
        object.__setattr__(self, "eta", float(self.eta))
        if self.potentials.x.shape != (C.shape[0],):
            raise ValueError("potentials do not match the cost matrix size")

    @classmethod
    def initial(cls, C, eta: float, mode: str = "scaling") -> "LogScaledMatrix":
        C = check_cost_matrix(C)
        return cls(C, eta, DualPotentials.zeros(C.shape[0], mode))

    @property
    def n(self) -> int:
        return self.C.shape[0]

    @property
    def mode(self) -> str:
        return self.potentials.mode

    @property
    def x(self) -> np.ndarray:
        return self.potentials.x

    @property
    def y(self) -> np.ndarray:
        return self.potentials.col

    def with_potentials(self, x, y=None) -> "LogScaledMatrix":
        if self.mode == "balancing":
            return LogScaledMatrix(self.C, self.eta, DualPotentials(x, None, "balancing"))
        return LogScaledMatrix(self.C, self.eta, DualPotentials(x, y, "scaling"))

    def log_entries(self) -> np.ndarray:
        return self.eta * (self.x[:, None] + self.y[None, :] - self.C)


def materialize(M: LogScaledMatrix) -> np.ndarray:
    """Exponentiate the represented matrix. For reporting and tests only."""
    L = M.log_entries()
    if np.max(L) > MAX_EXPONENT:
        raise OverflowError(
            f"represented matrix has an entry exp({np.max(L):.1f}); normalize the "
            "costs to a smaller range or lower eta before materializing"
        )
    return np.exp(L)


def log_marginals(M: LogScaledMatrix) -> tuple:
    """Log row sums and log column sums of the represented matrix."""
    L = M.log_entries()
    return logsumexp(L, axis=1), logsumexp(L, axis=0)


def log_mass(M: LogScaledMatrix) -> float:
    return logsumexp(M.log_entries())


def dual_objective(M: LogScaledMatrix, mu=None, nu=None) -> float:
    """Entropic dual objective at the current potentials.

    Scaling mode: ``<mu,x> + <nu,y> + smin_ij(C_ij - x_i - y_j)``.
    Balancing mode: ``smin_ij(C_ij - x_i + x_j)``; marginals must be omitted.
    Either way the softmin term is ``-log(total mass of P) / eta``.
    """
    if M.mode == "balancing":
        if mu is not None or nu is not None:
            raise ValueError("balancing-mode dual objective takes no marginals")
        return -log_mass(M) / M.eta
    if mu is None or nu is None:
        raise ValueError("scaling-mode dual objective needs both mu and nu")
    mu = np.asarray(mu, dtype=float)
    nu = np.asarray(nu, dtype=float)
    if mu.shape != (M.n,) or nu.shape != (M.n,):
        raise ValueError("marginal lengths do not match the cost matrix")
    return float(mu @ M.x) + float(nu @ M.y) - log_mass(M) / M.eta
