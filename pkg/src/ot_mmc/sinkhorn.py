"""Matrix scaling (Sinkhorn) and the entropic optimal transport pipeline."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import (
    NumericalError,
    SolveReport,
    TraceRecord,
    check_cost_matrix,
    check_distribution,
    check_nonnegative_matrix,
    entropy,
    kl_divergence,
    transport_cost,
)
from .kernel import LogScaledMatrix, dual_objective, log_marginals, materialize

log = logging.getLogger(__name__)

# eta times the normalized cost range; beyond this, float64 potentials lose
# too many digits in the exponent.
MAX_ETA = 1e7


@dataclass(frozen=True)
class SinkhornConfig:
    eta: float
    marginal_tolerance: float = 1e-9
    max_iterations: int = 10_000
    trace_every: int = 1

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta!r}")
        if not self.marginal_tolerance > 0:
            raise ValueError("marginal_tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.trace_every < 1:
            raise ValueError("trace_every must be at least 1")


def _positive_marginal(w, name):
    w = check_distribution(w, name)
    if np.any(w <= 0):
        raise ValueError(
            f"{name} must be strictly positive; drop zero-mass atoms before solving"
        )
    return w


def sinkhorn_row_step(M: LogScaledMatrix, mu) -> LogScaledMatrix:
    """Fix rows: shift ``x`` so the represented matrix has row sums ``mu``."""
    if M.mode != "scaling":
        raise ValueError("row step needs a scaling-mode matrix")
    mu = _positive_marginal(mu, "mu")
    log_r, _ = log_marginals(M)
    return M.with_potentials(M.x + (np.log(mu) - log_r) / M.eta, M.y)


def sinkhorn_col_step(M: LogScaledMatrix, nu) -> LogScaledMatrix:
    """Fix columns: shift ``y`` so the represented matrix has column sums ``nu``."""
    if M.mode != "scaling":
        raise ValueError("column step needs a scaling-mode matrix")
    nu = _positive_marginal(nu, "nu")
    _, log_c = log_marginals(M)
    return M.with_potentials(M.x, M.y + (np.log(nu) - log_c) / M.eta)


def run_sinkhorn(C, mu, nu, cfg: SinkhornConfig):
    """Alternate row and column steps from zero potentials.

    Each sweep is a row step followed by a column step, so every sweep ends
    with total mass one. The trace holds one record per sweep (plus the
    starting point at iteration 0) with the dual objective after the sweep,
    the l1 marginal error, and in ``extra`` the dual after the row step and
    the KL imbalances ``KL(mu || r(P))`` and ``KL(nu || c(P))`` measured just
    before the corresponding step.
    """
    C = check_cost_matrix(C)
    mu = _positive_marginal(mu, "mu")
    nu = _positive_marginal(nu, "nu")
    if mu.size != C.shape[0] or nu.size != C.shape[0]:
        raise ValueError("marginal lengths do not match the cost matrix")

    M = LogScaledMatrix.initial(C, cfg.eta)
    dual = dual_objective(M, mu, nu)
    log_r, log_c = log_marginals(M)
    err = float(np.sum(np.abs(np.exp(log_r) - mu)) + np.sum(np.abs(np.exp(log_c) - nu)))
    trace = [TraceRecord(0, dual, err)]
    converged = False
    it = 0
    while it < cfg.max_iterations:
        it += 1
        log_r, _ = log_marginals(M)
        kl_row = kl_divergence(mu, np.exp(log_r))
        M = M.with_potentials(M.x + (np.log(mu) - log_r) / M.eta, M.y)
        dual_row = dual_objective(M, mu, nu)

        _, log_c = log_marginals(M)
        kl_col = kl_divergence(nu, np.exp(log_c))
        M = M.with_potentials(M.x, M.y + (np.log(nu) - log_c) / M.eta)
        dual = dual_objective(M, mu, nu)
        if not (np.isfinite(dual) and np.isfinite(dual_row)):
            raise NumericalError(f"non-finite dual objective at sweep {it}")

        log_r, log_c = log_marginals(M)
        err = float(np.sum(np.abs(np.exp(log_r) - mu)) + np.sum(np.abs(np.exp(log_c) - nu)))
        converged = err <= cfg.marginal_tolerance
        if it % cfg.trace_every == 0 or converged or it == cfg.max_iterations:
            trace.append(
                TraceRecord(
                    it, dual, err,
                    {"dual_row": dual_row, "kl_row": kl_row, "kl_col": kl_col},
                )
            )
        if converged:
            break
    log.debug("sinkhorn stopped after %d sweeps, l1 error %.3e", it, err)

    report = SolveReport(
        kind="scale",
        value=dual,
        lower_bound=dual,
        upper_bound=dual,
        iterations=it,
        converged=converged,
        trace=trace,
        extra={"marginal_error": err},
    )
    return M, report


def regularized_cost(P, C, eta: float) -> float:
    """Entropic OT objective ``<P, C> + entropy(P) / eta`` (convex in P)."""
    return transport_cost(P, C) + entropy(P) / eta


def round_to_coupling(P, mu, nu) -> np.ndarray:
    """Project a nonnegative matrix onto the couplings of ``mu`` and ``nu``.

    Rows are shrunk to at most ``mu``, columns to at most ``nu``, and the
    remaining deficit is filled by a rank-one correction. The l1 change is at
    most twice the l1 marginal error of the input.
    """
    P = check_nonnegative_matrix(P)
    mu = check_distribution(mu, "mu")
    nu = check_distribution(nu, "nu")
    if mu.size != P.shape[0] or nu.size != P.shape[0]:
        raise ValueError("marginal lengths do not match P")
    if not np.sum(P) > 0:
        raise ValueError("cannot round a matrix with zero total mass")

    r = P.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        a = np.where(r > mu, mu / r, 1.0)
    Q = P * a[:, None]
    c = Q.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(c > nu, nu / c, 1.0)
    Q = Q * b[None, :]

    err_r = mu - Q.sum(axis=1)
    err_c = nu - Q.sum(axis=0)
    # clip float noise; the true deficits are nonnegative
    err_r = np.maximum(err_r, 0.0)
    err_c = np.maximum(err_c, 0.0)
    deficit = float(np.sum(err_r))
    if deficit > 0:
        Q = Q + np.outer(err_r, err_c) / deficit
    return Q


def eta_for_epsilon(epsilon: float, n: int) -> float:
    """Regularization for accuracy ``epsilon`` on costs with sup-norm one."""
    return 4.0 * np.log(max(n, 2)) / epsilon


def solve_ot(C, mu, nu, epsilon: float, max_iterations: int = 10_000) -> SolveReport:
    """Approximate optimal transport to within ``epsilon``.

    Costs are normalized to sup-norm one, Sinkhorn runs with
    ``eta = 4 log(n) / epsilon'`` until the l1 marginal error is below
    ``epsilon' / 8`` and the iterate is rounded to a feasible coupling. The
    reported value is the cost of that coupling (so it is also an upper
    bound); the lower bound is the dual objective minus ``2 log(n) / eta``.
    """
    C = check_cost_matrix(C)
    mu = _positive_marginal(mu, "mu")
    nu = _positive_marginal(nu, "nu")
    n = C.shape[0]
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    scale = float(np.max(np.abs(C)))
    if scale == 0.0:
        scale = 1.0
    eps = epsilon / scale
    eta = eta_for_epsilon(eps, n)
    if eta > MAX_ETA:
        raise ValueError(
            f"epsilon={epsilon:g} needs eta={eta:.3g} on normalized costs, beyond the "
            f"exponent budget {MAX_ETA:g}; rescale the costs or loosen epsilon"
        )
    cfg = SinkhornConfig(eta=eta, marginal_tolerance=eps / 8, max_iterations=max_iterations)
    M, inner = run_sinkhorn(C / scale, mu, nu, cfg)

    P = round_to_coupling(materialize(M), mu, nu)
    value = transport_cost(P, C)
    lower = scale * (inner.value - 2.0 * np.log(max(n, 2)) / eta)
    # float noise in a tight bracket
    lower = min(lower, value)
    for rec in inner.trace:
        rec.dual *= scale
        if "dual_row" in rec.extra:
            rec.extra["dual_row"] *= scale
    return SolveReport(
        kind="ot",
        value=value,
        lower_bound=lower,
        upper_bound=value,
        iterations=inner.iterations,
        converged=inner.converged,
        certificate=P,
        trace=inner.trace,
        extra={"eta": eta / scale, "scale": scale, "marginal_error": inner.extra["marginal_error"]},
    )
