"""Shared domain types, marginals and divergences.

Distributions, cost matrices and couplings are plain float ndarrays that
have passed through one of the ``check_*`` validators; the structured
results (cycles, potentials, reports) are small dataclasses.

Vertex and atom indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np

SIMPLEX_ATOL = 1e-12


class NumericalError(ArithmeticError):
    """A solver produced a non-finite quantity."""


def check_distribution(weights, name: str = "distribution") -> np.ndarray:
    """Validate a probability vector and return it as a 1-d float array."""
    arr = np.asarray(weights, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} has negative entries")
    total = float(np.sum(arr))
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise ValueError(
            f"{name} must lie on the simplex (entries sum to 1 within "
            f"{SIMPLEX_ATOL:g}); sum is {total!r}"
        )
    return arr


def check_cost_matrix(C, name: str = "cost") -> np.ndarray:
    """Validate a dense square cost matrix with finite entries."""
    arr = np.asarray(C, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] == 0:
        raise ValueError(f"{name} must be a nonempty square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must have finite entries (complete graph)")
    return arr


def check_nonnegative_matrix(P, name: str = "P") -> np.ndarray:
    arr = np.asarray(P, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must have finite nonnegative entries")
    return arr


def check_coupling(P, name: str = "coupling") -> np.ndarray:
    """Validate an element of the n x n simplex."""
    arr = check_nonnegative_matrix(P, name)
    total = float(np.sum(arr))
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise ValueError(f"{name} must have total mass 1; got {total!r}")
    return arr


@dataclass(frozen=True)
class Cycle:
    """A simple directed cycle, stored rotated so the smallest vertex is first.

    A 1-tuple is a self-loop. The closing edge runs from the last vertex
    back to the first.
    """

    vertices: tuple

    def __post_init__(self):
        verts = tuple(int(v) for v in self.vertices)
        if not verts:
            raise ValueError("a cycle needs at least one vertex")
        if len(set(verts)) != len(verts):
            raise ValueError(f"cycle vertices must be distinct: {verts}")
        if min(verts) < 0:
            raise ValueError("cycle vertices must be nonnegative indices")
        k = verts.index(min(verts))
        object.__setattr__(self, "vertices", verts[k:] + verts[:k])

    def __len__(self):
        return len(self.vertices)

    def edges(self):
        v = self.vertices
        return [(v[t], v[(t + 1) % len(v)]) for t in range(len(v))]

    def mean_cost(self, C) -> float:
        C = np.asarray(C, dtype=float)
        rows, cols = zip(*self.edges())
        return float(np.sum(C[list(rows), list(cols)])) / len(self)

    def to_matrix(self, n: int) -> np.ndarray:
        """Normalized cycle matrix: 1/|cycle| on each edge."""
        if max(self.vertices) >= n:
            raise ValueError(f"cycle {self.vertices} does not fit in n={n}")
        P = np.zeros((n, n))
        for i, j in self.edges():
            P[i, j] = 1.0 / len(self)
        return P


@dataclass(frozen=True)
class DualPotentials:
    """Dual variables in cost units.

    In ``"balancing"`` mode only ``x`` is stored and ``y`` is derived as ``-x``.
    """

    x: np.ndarray
    y: Optional[np.ndarray] = None
    mode: str = "scaling"

    def __post_init__(self):
        if self.mode not in ("scaling", "balancing"):
            raise ValueError(f"unknown potential mode {self.mode!r}")
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if self.mode == "balancing":
            if self.y is not None:
                raise ValueError("balancing potentials carry x only (y = -x)")
        else:
            y = np.zeros_like(x) if self.y is None else np.asarray(self.y, dtype=float)
            if y.shape != x.shape:
                raise ValueError("x and y must have the same length")
            object.__setattr__(self, "y", y)

    @property
    def col(self) -> np.ndarray:
        """Column potentials (``y`` in scaling mode, ``-x`` in balancing mode)."""
        return -self.x if self.mode == "balancing" else self.y

    @classmethod
    def zeros(cls, n: int, mode: str = "scaling") -> "DualPotentials":
        if mode == "balancing":
            return cls(np.zeros(n), None, "balancing")
        return cls(np.zeros(n), np.zeros(n), "scaling")


@dataclass
class TraceRecord:
    iteration: int
    dual: float
    imbalance: float
    extra: dict = field(default_factory=dict)


@dataclass
class SolveReport:
    """Outcome of a solve: value estimate, bracket, certificate and trace."""

    kind: str
    value: float
    lower_bound: float
    upper_bound: float
    iterations: int
    converged: bool
    certificate: Union[np.ndarray, Cycle, None] = None
    trace: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower_bound > self.upper_bound:
            raise ValueError(
                f"lower_bound {self.lower_bound!r} exceeds upper_bound {self.upper_bound!r}"
            )

    def dual_trace(self) -> np.ndarray:
        return np.array([rec.dual for rec in self.trace])


def row_marginals(P) -> np.ndarray:
    return np.sum(np.asarray(P, dtype=float), axis=1)


def col_marginals(P) -> np.ndarray:
    return np.sum(np.asarray(P, dtype=float), axis=0)


def transport_cost(P, C) -> float:
    """Frobenius inner product <P, C>."""
    P = np.asarray(P, dtype=float)
    C = np.asarray(C, dtype=float)
    if P.shape != C.shape:
        raise ValueError(f"dimension mismatch: P is {P.shape}, C is {C.shape}")
    return float(np.sum(P * C))


def _xlogy_sum(p: np.ndarray, q: Any = None) -> float:
    # 0 log 0 = 0
    mask = p > 0
    if q is None:
        return float(np.sum(p[mask] * np.log(p[mask])))
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def entropy(P) -> float:
    """Return ``sum_ij P_ij log P_ij``.

    The sign is the unnegated one, so the value is <= 0 on couplings and
    equals 0 exactly at point masses. The entropic objectives in this package
    add ``entropy(P) / eta`` to the linear cost.
    """
    return _xlogy_sum(np.asarray(P, dtype=float).ravel())


def kl_divergence(p, q) -> float:
    """Generalized KL divergence ``sum p log(p/q) - sum p + sum q``.

    Works for unnormalized nonnegative vectors and reduces to the usual KL
    divergence on probability vectors. Returns ``inf`` when ``p_i > 0`` and
    ``q_i = 0`` for some i.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    if np.any((p > 0) & (q == 0)):
        return float("inf")
    return _xlogy_sum(p, q) - float(np.sum(p)) + float(np.sum(q))


def hellinger_imbalance(r, c) -> float:
    """``sum_i (sqrt(r_i) - sqrt(c_i))**2``."""
    r = np.asarray(r, dtype=float)
    c = np.asarray(c, dtype=float)
    if r.shape != c.shape:
        raise ValueError(f"length mismatch: {r.shape} vs {c.shape}")
    return float(np.sum((np.sqrt(r) - np.sqrt(c)) ** 2))
