"""Exact reference solvers for desk-scale instances."""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Cycle, check_cost_matrix, check_distribution
from .sinkhorn import round_to_coupling

BRUTE_FORCE_MAX_N = 8
MAX_DENOMINATOR = 512
COST_QUANTUM = 2.0 ** -30


def karp_mmc(C):
    """Minimum mean cycle by Karp's walk-length dynamic program.

    ``d[k, v]`` is the cheapest walk of exactly ``k`` edges ending at ``v``
    (from any start). The optimal cycle is recovered from the parent chain
    of the minimizing end vertex: every cycle on that walk has the optimal
    mean.

    Returns ``(value, cycle)``.
    """
    C = check_cost_matrix(C)
    n = C.shape[0]
    d = np.empty((n + 1, n))
    parent = np.zeros((n + 1, n), dtype=int)
    d[0] = 0.0
    for k in range(1, n + 1):
        cand = d[k - 1][:, None] + C
        parent[k] = np.argmin(cand, axis=0)
        d[k] = cand[parent[k], np.arange(n)]

    ks = np.arange(n)
    ratios = (d[n][None, :] - d[:n]) / (n - ks)[:, None]
    worst = np.max(ratios, axis=0)
    v = int(np.argmin(worst))
    value = float(worst[v])

    # walk back from level n; n+1 vertices on n nodes must repeat
    walk = [v]
    for k in range(n, 0, -1):
        v = int(parent[k, v])
        walk.append(v)
    first = {}
    for pos, u in enumerate(walk):
        if u in first:
            back = walk[first[u]:pos]
            return value, Cycle(tuple(reversed(back)))
        first[u] = pos
    raise AssertionError("walk of length n without a repeated vertex")


def _simple_cycles(n):
    # canonical form: smallest vertex first, emitted in lexicographic order
    for s in range(n):
        path = [s]
        on_path = {s}

        def extend():
            yield tuple(path)
            for w in range(s + 1, n):
                if w not in on_path:
                    path.append(w)
                    on_path.add(w)
                    yield from extend()
                    path.pop()
                    on_path.discard(w)

        yield from extend()


def brute_force_mmc(C):
    """Minimum mean cycle by enumerating every simple cycle (n <= 8).

    Ties go to the lexicographically smallest vertex sequence.
    """
    C = check_cost_matrix(C)
    n = C.shape[0]
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force enumeration is limited to n <= {BRUTE_FORCE_MAX_N}")
    best, best_val = None, math.inf
    for verts in _simple_cycles(n):
        k = len(verts)
        total = sum(C[verts[t], verts[(t + 1) % k]] for t in range(k))
        val = total / k
        if val < best_val:
            best, best_val = verts, val
    return float(best_val), Cycle(best)


def _integer_masses(w, limit, name):
    fracs = [Fraction(float(v)).limit_denominator(limit) for v in w]
    L = 1
    for f in fracs:
        L = L * f.denominator // math.gcd(L, f.denominator)
    if L > limit:
        raise ValueError(f"{name} needs common denominator {L} > {limit}")
    counts = [int(f * L) for f in fracs]
    approx = np.array(counts, dtype=float) / L
    if sum(counts) != L or np.max(np.abs(approx - w)) > 1e-12:
        raise ValueError(
            f"{name} is not representable by rationals with denominator <= {limit}"
        )
    return L, counts


def _cancel_support_cycles(counts, cost):
    """Remove cycles from the bipartite support of an optimal integer plan.

    For an optimal plan, every alternating cycle in the support has zero net
    cost, so pushing flow around it keeps optimality. Ends at a spanning
    forest, i.e. a vertex of the transportation polytope.
    """
    n = counts.shape[0]
    while True:
        cyc = _find_bipartite_cycle(counts > 0, n)
        if cyc is None:
            return counts
        # cyc alternates row->col->row...; even positions are (row, col) edges
        # taken with sign +, odd positions with sign -
        plus = cyc[0::2]
        minus = cyc[1::2]
        delta = sum(cost[i, j] for i, j in plus) - sum(cost[i, j] for i, j in minus)
        if delta > 0:
            plus, minus = minus, plus
        theta = min(counts[i, j] for i, j in minus)
        for i, j in plus:
            counts[i, j] += theta
        for i, j in minus:
            counts[i, j] -= theta


def _find_bipartite_cycle(support, n):
    # nodes 0..n-1 are rows, n..2n-1 are columns
    adj = [[] for _ in range(2 * n)]
    for i, j in zip(*np.nonzero(support)):
        adj[i].append(n + j)
        adj[n + j].append(i)
    visited = [False] * (2 * n)
    for root in range(2 * n):
        if visited[root] or not adj[root]:
            continue
        parent = {root: -1}
        stack = [root]
        visited[root] = True
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w == parent[u]:
                    continue
                if w in parent:
                    return _cycle_edges(u, w, parent, n)
                parent[w] = u
                visited[w] = True
                stack.append(w)
    return None


def _cycle_edges(u, w, parent, n):
    # path root->u and root->w meet at the lowest common ancestor
    def chain(a):
        out = [a]
        while parent[a] != -1:
            a = parent[a]
            out.append(a)
        return out

    pu, pw = chain(u), chain(w)
    anc = set(pu)
    lca = next(a for a in pw if a in anc)
    nodes = pu[: pu.index(lca) + 1] + list(reversed(pw[: pw.index(lca)]))
    # closed walk u -> ... -> lca -> ... -> w -> u
    edges = []
    for a, b in zip(nodes, nodes[1:] + nodes[:1]):
        i, j = (a, b - n) if a < n else (b, a - n)
        edges.append((i, j))
    # orient so edges alternate with consistent sign; the walk has even length
    return edges


def exact_ot(C, mu, nu, denominator_limit: int = MAX_DENOMINATOR):
    """Exact optimal transport for marginals with a small common denominator.

    Each atom of mass ``k/L`` is split into ``k`` unit atoms and the
    resulting ``L x L`` assignment problem is solved on costs quantized to
    multiples of ``2**-30``. The contracted plan is then pushed to a vertex
    of the transportation polytope.

    Returns ``(value, plan)``.
    """
    C = check_cost_matrix(C)
    mu = check_distribution(mu, "mu")
    nu = check_distribution(nu, "nu")
    n = C.shape[0]
    if mu.size != n or nu.size != n:
        raise ValueError("marginal lengths do not match the cost matrix")
    if denominator_limit > MAX_DENOMINATOR:
        raise ValueError(f"denominator_limit must be <= {MAX_DENOMINATOR}")
    Lm, _ = _integer_masses(mu, denominator_limit, "mu")
    Ln, _ = _integer_masses(nu, denominator_limit, "nu")
    L = Lm * Ln // math.gcd(Lm, Ln)
    if L > denominator_limit:
        raise ValueError(f"mu and nu need common denominator {L} > {denominator_limit}")
    a = np.rint(mu * L).astype(int)
    b = np.rint(nu * L).astype(int)

    qcost = np.rint(C / COST_QUANTUM).astype(np.int64)
    rows = np.repeat(np.arange(n), a)
    cols = np.repeat(np.arange(n), b)
    r_ind, c_ind = linear_sum_assignment(qcost[np.ix_(rows, cols)])
    counts = np.zeros((n, n), dtype=np.int64)
    np.add.at(counts, (rows[r_ind], cols[c_ind]), 1)
    counts = _cancel_support_cycles(counts, qcost)

    plan = counts / L
    return float(np.sum(plan * C)), plan


def random_feasible_coupling(mu, nu, seed) -> np.ndarray:
    """Round an iid uniform matrix onto the couplings of ``mu`` and ``nu``."""
    mu = check_distribution(mu, "mu")
    nu = check_distribution(nu, "nu")
    if mu.size != nu.size:
        raise ValueError("mu and nu must have the same length")
    rng = np.random.default_rng(seed)
    return round_to_coupling(rng.uniform(size=(mu.size, nu.size)), mu, nu)
