"""Dense two-phase simplex for small bounded linear programs.

Solves ``max c^T x  s.t.  A x <= b,  lo <= x <= hi``. Pricing is
Dantzig's rule with lowest-index ties; after a run of degenerate pivots
the solver switches to Bland's rule for the rest of the solve, which
rules out cycling. The final basic solution is recomputed from the
original data, so accumulated tableau error does not leak into ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_TOL = 1e-9
_DEGENERATE_RUN = 30


@dataclass
class LpProblem:
    c: np.ndarray
    A: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = len(self.c)
        self.A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, n)
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        self.lo = np.zeros(n) if self.lo is None else np.asarray(self.lo, dtype=float).ravel()
        self.hi = np.full(n, np.inf) if self.hi is None else np.asarray(self.hi, dtype=float).ravel()
        if len(self.b_ub) != len(self.A) or len(self.lo) != n or len(self.hi) != n:
            raise ValueError("inconsistent LP dimensions")
        if not (np.isfinite(self.c).all() and np.isfinite(self.A).all() and np.isfinite(self.b_ub).all()):
            raise ValueError("LP coefficients must be finite")
        if (self.lo > self.hi).any():
            raise ValueError("lower bound above upper bound")

    @property
    def n(self) -> int:
        return len(self.c)

    def to_text(self) -> str:
        """Plain-text dump: objective, one row per constraint, then bounds."""
        fmt = lambda v: " ".join(f"{x:.17g}" for x in v)
        lines = [f"max {fmt(self.c)}"]
        lines += [f"{fmt(row)} <= {rhs:.17g}" for row, rhs in zip(self.A, self.b_ub)]
        lines += [f"x{j} in [{lo:.17g}, {hi:.17g}]" for j, (lo, hi) in enumerate(zip(self.lo, self.hi))]
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    iterations: int = field(default=0, compare=False)

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    def __init__(self, M: np.ndarray, rhs: np.ndarray, basis: list[int]):
        self.T = np.hstack([M, rhs[:, None]])
        self.basis = basis
        self.iterations = 0
        self.bland = False
        self._degenerate = 0

    def pivot(self, r: int, j: int) -> None:
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        self.basis[r] = j
        self.iterations += 1

    def optimize(self, cost: np.ndarray, allowed: int) -> bool:
        """Maximize ``cost`` over the first ``allowed`` columns; False if unbounded."""
        T = self.T
        limit = 100 * (T.shape[0] + T.shape[1]) + 1000
        for _ in range(limit):
            reduced = cost[:allowed] - cost[self.basis] @ T[:, :allowed]
            reduced[self.basis] = 0.0
            candidates = np.flatnonzero(reduced > _TOL)
            if len(candidates) == 0:
                return True
            if self.bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(reduced[candidates])])
            col = T[:, j]
            rows = np.flatnonzero(col > _TOL)
            if len(rows) == 0:
                return False
            ratios = T[rows, -1] / col[rows]
            best = ratios.min()
            ties = rows[ratios <= best + _TOL * max(1.0, abs(best))]
            r = int(min(ties, key=lambda i: self.basis[i]))
            if best <= _TOL:
                self._degenerate += 1
                if self._degenerate >= _DEGENERATE_RUN:
                    self.bland = True
            else:
                self._degenerate = 0
            self.pivot(r, j)
        raise RuntimeError("simplex iteration limit reached")


def _standardize(p: LpProblem):
    """Rewrite bounds so every working variable is ``>= 0``.

    Returns ``(x0, T, G, h, cost)`` with ``x = x0 + T y`` and constraints
    ``G y <= h``.
    """
    n = p.n
    x0 = np.zeros(n)
    cols = []
    upper = []
    for j in range(n):
        lo, hi = p.lo[j], p.hi[j]
        e = np.zeros(n)
        e[j] = 1.0
        if np.isfinite(lo):
            x0[j] = lo
            if hi - lo > 0:
                cols.append(e)
                upper.append(hi - lo)
        elif np.isfinite(hi):
            x0[j] = hi
            cols.append(-e)
            upper.append(np.inf)
        else:
            cols += [e, -e]
            upper += [np.inf, np.inf]
    T = np.array(cols).T if cols else np.zeros((n, 0))
    upper = np.array(upper)
    G = p.A @ T
    h = p.b_ub - p.A @ x0
    bounded = np.flatnonzero(np.isfinite(upper))
    if len(bounded):
        G = np.vstack([G, np.eye(T.shape[1])[bounded]])
        h = np.concatenate([h, upper[bounded]])
    return x0, T, G, h, T.T @ p.c


def solve(problem: LpProblem) -> LpSolution:
    x0, Tmap, G, h, cost = _standardize(problem)
    m, n = G.shape
    if n == 0:
        if (h >= -_TOL).all():
            return LpSolution(OPTIMAL, x0.copy(), float(problem.c @ x0))
        return LpSolution(INFEASIBLE)
    scale = np.abs(cost).max()
    if scale > 0:
        cost = cost / scale

    neg = np.flatnonzero(h < 0)
    sign = np.where(h < 0, -1.0, 1.0)
    # columns: y | slacks | artificials
    M = np.hstack([G * sign[:, None], np.diag(sign), np.zeros((m, len(neg)))])
    for a, i in enumerate(neg):
        M[i, n + m + a] = 1.0
    rhs = h * sign
    basis = [n + i for i in range(m)]
    for a, i in enumerate(neg):
        basis[i] = n + m + a
    tab = _Tableau(M, rhs, basis)
    total = n + m + len(neg)

    if len(neg):
        phase1 = np.zeros(total)
        phase1[n + m :] = -1.0
        tab.optimize(phase1, total)
        if -phase1[tab.basis] @ tab.T[:, -1] > 1e-7 * max(1.0, np.abs(rhs).max()):
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
        keep = []
        for r in range(len(tab.basis)):
            if tab.basis[r] < n + m:
                keep.append(r)
                continue
            j = np.flatnonzero(np.abs(tab.T[r, : n + m]) > _TOL)
            if len(j):
                tab.pivot(r, int(j[0]))
                keep.append(r)
        tab.T = tab.T[keep]
        tab.basis = [tab.basis[r] for r in keep]
        tab.T = np.hstack([tab.T[:, : n + m], tab.T[:, -1:]])

    phase2 = np.concatenate([cost, np.zeros(m)])
    if not tab.optimize(phase2, n + m):
        return LpSolution(UNBOUNDED, iterations=tab.iterations)

    # recompute the basic solution from the original equality system
    Aeq = np.hstack([G, np.eye(m)])
    z = np.zeros(n + m)
    z[tab.basis] = np.linalg.lstsq(Aeq[:, tab.basis], h, rcond=None)[0]
    y = np.maximum(z[:n], 0.0)
    x = x0 + Tmap @ y
    x = np.minimum(np.maximum(x, problem.lo), problem.hi)
    return LpSolution(OPTIMAL, x, float(problem.c @ x), tab.iterations)
