"""Matrix balancing (Osborne) and the minimum mean cycle pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    Cycle,
    NumericalError,
    SolveReport,
    TraceRecord,
    check_cost_matrix,
    check_nonnegative_matrix,
)
from .kernel import LogScaledMatrix, dual_objective, logsumexp

log = logging.getLogger(__name__)

STRATEGIES = ("cyclic", "random", "greedy")


@dataclass(frozen=True)
class OsborneConfig:
    eta: float
    imbalance_tolerance: float = 1e-4
    max_updates: int = 200_000
    strategy: str = "greedy"
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if not self.imbalance_tolerance > 0:
            raise ValueError("imbalance_tolerance must be positive")
        if self.max_updates < 0:
            raise ValueError("max_updates must be nonnegative")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "random" and self.seed is None:
            raise ValueError("the random strategy needs a seed")


def parse_strategy(text: str) -> tuple:
    """Parse ``cyclic``, ``greedy`` or ``random:SEED`` into ``(strategy, seed)``."""
    name, _, arg = text.partition(":")
    if name == "random":
        try:
            return "random", int(arg)
        except ValueError:
            raise ValueError(f"random strategy needs an integer seed, got {text!r}") from None
    if name in ("cyclic", "greedy") and not arg:
        return name, None
    raise ValueError(f"unknown strategy {text!r}; use cyclic, greedy or random:SEED")


def _offdiag_log_sums(M: LogScaledMatrix) -> tuple:
    L = M.log_entries()
    np.fill_diagonal(L, -np.inf)
    return logsumexp(L, axis=1), logsumexp(L, axis=0)


def offdiagonal_sums(M: LogScaledMatrix) -> tuple:
    """Off-diagonal row and column sums ``(rho, gamma)`` of the represented matrix."""
    log_rho, log_gamma = _offdiag_log_sums(M)
    return np.exp(log_rho), np.exp(log_gamma)


def _scores(log_rho, log_gamma):
    # Hellinger terms, shifted to a common scale to avoid overflow; also
    # returns the shift so callers can undo it.
    shift = float(max(np.max(log_rho), np.max(log_gamma)))
    rho = np.exp(log_rho - shift)
    gamma = np.exp(log_gamma - shift)
    return (np.sqrt(rho) - np.sqrt(gamma)) ** 2, rho, gamma, shift


def osborne_update(M: LogScaledMatrix, i: int) -> LogScaledMatrix:
    """Balance coordinate ``i`` exactly.

    Uses off-diagonal sums, since the diagonal entry ``P_ii`` is unchanged
    by any similarity scaling. Afterwards row ``i`` and column ``i`` have
    equal off-diagonal sums ``sqrt(rho_i * gamma_i)``.
    """
    if M.mode != "balancing":
        raise ValueError("osborne_update needs a balancing-mode matrix")
    if M.n < 2:
        raise ValueError("nothing to balance in a 1x1 matrix")
    if not 0 <= i < M.n:
        raise IndexError(f"coordinate {i} out of range for n={M.n}")
    log_rho, log_gamma = _offdiag_log_sums(M)
    return _apply_update(M, i, log_rho[i], log_gamma[i])


def _apply_update(M, i, log_rho_i, log_gamma_i):
    x = M.x.copy()
    x[i] += (log_gamma_i - log_rho_i) / (2.0 * M.eta)
    return M.with_potentials(x)


def choose_coordinate(M: LogScaledMatrix, cfg: OsborneConfig, step: int) -> int:
    """Pick the coordinate to balance at update number ``step``.

    ``cyclic`` sweeps 0..n-1 in order, ``random`` draws uniformly from a
    generator seeded by ``(seed, step)``, and ``greedy`` takes the largest
    Hellinger term ``(sqrt(rho_i) - sqrt(gamma_i))**2`` (smallest index on ties).
    """
    n = M.n
    if cfg.strategy == "cyclic":
        return step % n
    if cfg.strategy == "random":
        return int(np.random.default_rng([cfg.seed, step]).integers(n))
    scores, *_ = _scores(*_offdiag_log_sums(M))
    return int(np.argmax(scores))


def run_osborne(C, cfg: OsborneConfig):
    """Balance ``exp(-eta * C)`` by single-coordinate updates from ``x = 0``.

    Stops once ``sum_i (sqrt(rho_i) - sqrt(gamma_i))**2`` is at most
    ``imbalance_tolerance`` times the off-diagonal mass, or after
    ``max_updates`` updates. The trace has one record per update (plus the
    start) with the balancing dual objective and the relative imbalance;
    ``extra`` carries the coordinate, its log off-diagonal sums before the
    update, and the log total mass after it.
    """
    C = check_cost_matrix(C)
    n = C.shape[0]
    if n < 2:
        raise ValueError("run_osborne needs n >= 2")
    M = LogScaledMatrix.initial(C, cfg.eta, mode="balancing")

    log_rho, log_gamma = _offdiag_log_sums(M)
    scores, rho, gamma, _ = _scores(log_rho, log_gamma)
    imbalance = float(np.sum(scores) / np.sum(rho))
    dual = dual_objective(M)
    trace = [TraceRecord(0, dual, imbalance, {"log_mass": -cfg.eta * dual})]
    converged = imbalance <= cfg.imbalance_tolerance
    step = 0
    while not converged and step < cfg.max_updates:
        if cfg.strategy == "greedy":
            i = int(np.argmax(scores))
        else:
            i = choose_coordinate(M, cfg, step)
        M = _apply_update(M, i, log_rho[i], log_gamma[i])
        step += 1
        dual = dual_objective(M)
        if not np.isfinite(dual):
            raise NumericalError(f"non-finite dual objective at update {step}")
        prev_rho, prev_gamma = log_rho[i], log_gamma[i]
        log_rho, log_gamma = _offdiag_log_sums(M)
        scores, rho, gamma, _ = _scores(log_rho, log_gamma)
        imbalance = float(np.sum(scores) / np.sum(rho))
        trace.append(
            TraceRecord(
                step, dual, imbalance,
                {
                    "coordinate": i,
                    "log_rho": float(prev_rho),
                    "log_gamma": float(prev_gamma),
                    "log_mass": -cfg.eta * dual,
                },
            )
        )
        converged = imbalance <= cfg.imbalance_tolerance
    log.debug("osborne stopped after %d updates, imbalance %.3e", step, imbalance)
    report = SolveReport(
        kind="balance",
        value=dual,
        lower_bound=dual,
        upper_bound=dual,
        iterations=step,
        converged=converged,
        trace=trace,
        extra={"imbalance": imbalance},
    )
    return M, report


def mmc_lower_bound(C, x) -> float:
    """``min_ij C_ij + x_i - x_j``, a lower bound on the minimum cycle mean for any x."""
    C = check_cost_matrix(C)
    x = np.asarray(x, dtype=float)
    return float(np.min(C + x[:, None] - x[None, :]))


def extract_cycle_greedy(C, x) -> Cycle:
    """Best cycle found by greedy walks on the reduced costs ``C_ij + x_i - x_j``.

    From every start vertex, follow the cheapest outgoing edge (self-loops
    included, smallest index on ties) until a vertex repeats.
    """
    C = check_cost_matrix(C)
    n = C.shape[0]
    x = np.asarray(x, dtype=float)
    succ = np.argmin(C + x[:, None] - x[None, :], axis=1)
    best, best_mean = None, np.inf
    for start in range(n):
        seen = {}
        path = []
        v = start
        while v not in seen:
            seen[v] = len(path)
            path.append(v)
            v = int(succ[v])
        cyc = Cycle(tuple(path[seen[v]:]))
        mean = cyc.mean_cost(C)
        if mean < best_mean:
            best, best_mean = cyc, mean
    return best


def decompose_circulation(P, rtol: float = 1e-10) -> list:
    """Split a circulation into weighted simple cycles.

    Returns ``[(weight, Cycle), ...]`` with
    ``sum(weight * cycle.to_matrix(n)) == P`` up to rounding. Each round
    walks the support along the heaviest outgoing edge until a vertex
    repeats and removes the bottleneck flow from that cycle.
    """
    P = check_nonnegative_matrix(P)
    mass = float(np.sum(P))
    if mass == 0:
        return []
    r, c = P.sum(axis=1), P.sum(axis=0)
    if np.sum(np.abs(r - c)) > rtol * mass:
        raise ValueError(
            "matrix is not a circulation (row and column sums differ by "
            f"{np.sum(np.abs(r - c)):.3e}); balance it first"
        )
    Q = P.copy()
    floor = 1e-14 * mass
    Q[Q <= floor] = 0.0
    out = []
    max_rounds = int(np.count_nonzero(Q))
    for _ in range(max_rounds):
        rows = np.flatnonzero(Q.sum(axis=1) > 0)
        if rows.size == 0:
            break
        v = int(rows[0])
        seen, path = {}, []
        while v not in seen:
            nxt = int(np.argmax(Q[v]))
            if Q[v, nxt] <= 0:
                break
            seen[v] = len(path)
            path.append(v)
            v = nxt
        if v not in seen:
            # dead end from rounding residue: drop the edge that led here
            if path:
                Q[path[-1], v] = 0.0
            continue
        verts = path[seen[v]:]
        cyc = Cycle(tuple(verts))
        edges = cyc.edges()
        rows_idx, cols_idx = zip(*edges)
        bottleneck = float(np.min(Q[list(rows_idx), list(cols_idx)]))
        for i, j in edges:
            Q[i, j] -= bottleneck
            if Q[i, j] <= floor:
                Q[i, j] = 0.0
        out.append((bottleneck * len(cyc), cyc))
    return out


def solve_mmc(C, epsilon: float, strategy: str = "greedy", seed=None,
              imbalance_tolerance: float = 1e-4, max_updates: int = 200_000) -> SolveReport:
    """Approximate the minimum cycle mean to within ``epsilon`` with a certified bracket.

    Runs Osborne on normalized costs with ``eta = 4 log(n+1) / epsilon'``.
    The balanced potentials give the lower bound ``min_ij(C_ij - x_i + x_j)``
    (never below ``min(C)``) and seed a greedy cycle extraction whose mean is
    the upper bound and the reported value. The best self-loop is always
    compared against that cycle.
    """
    C = check_cost_matrix(C)
    n = C.shape[0]
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    scale = float(np.max(np.abs(C)))
    if scale == 0.0:
        scale = 1.0
    eps = epsilon / scale
    eta = 4.0 * np.log(n + 1) / eps

    if n == 1:
        trace, iterations, converged_inner = [], 0, True
        z = np.zeros(1)
    else:
        cfg = OsborneConfig(eta=eta, imbalance_tolerance=imbalance_tolerance,
                            max_updates=max_updates, strategy=strategy, seed=seed)
        M, inner = run_osborne(C / scale, cfg)
        # balanced potentials enter reduced costs with the opposite sign
        z = -M.x * scale
        trace = inner.trace
        for rec in trace:
            rec.dual *= scale
        iterations, converged_inner = inner.iterations, inner.converged

    lower = max(mmc_lower_bound(C, z), float(np.min(C)))
    cycle = extract_cycle_greedy(C, z)
    upper = cycle.mean_cost(C)
    k = int(np.argmin(np.diag(C)))
    if C[k, k] < upper:
        cycle, upper = Cycle((k,)), float(C[k, k])
    lower = min(lower, upper)
    return SolveReport(
        kind="mmc",
        value=upper,
        lower_bound=lower,
        upper_bound=upper,
        iterations=iterations,
        converged=bool(upper - lower <= epsilon),
        certificate=cycle,
        trace=trace,
        extra={"eta": eta / scale, "scale": scale, "balanced": converged_inner},
    )
