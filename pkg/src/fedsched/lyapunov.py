"""Virtual queues, auxiliary variables and the per-slot scheduling LP.

Decision vector layout used by :func:`build_slot_lp`::

    x = [s_0 .. s_{K-1}, lam_{0,0} .. lam_{0,B-1}, lam_{1,0} .. lam_{K-1,B-1}]

All objective coefficients are non-negative, and the feasible region is a
bipartite matching polytope with a per-client "scheduled" indicator
stacked on top. That region has integral vertices, so rounding only has to
clean up numerical noise and break ties deterministically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import lp
from .errors import RoundingError

MAXIMIZER = "maximizer"
LITERAL = "literal"
_ROUND_TOL = 1e-8
_FRAC = 1e-9


@dataclass(frozen=True)
class VirtualQueues:
    q: float = 0.0
    g: float = 0.0
    nu_sum: float = 0.0
    slots: int = 0

    @property
    def nu_tilde(self) -> float:
        """Running mean of past auxiliaries ``nu`` (0 before the first slot)."""
        return self.nu_sum / self.slots if self.slots else 0.0


@dataclass
class SlotInputs:
    sizes: np.ndarray
    beta: float
    queues: VirtualQueues
    info: np.ndarray  # (K, B) exploration value j_{k,b}
    mask: np.ndarray  # (K, B) feasibility, already gated
    phi: float = 1.0  # drift-penalty trade-off
    explore: float = 1.0  # exploration weight
    horizon: int = 100
    l0: float | None = None
    rb_budget: int | None = None

    def __post_init__(self):
        self.sizes = np.asarray(self.sizes, dtype=np.int64)
        self.mask = np.asarray(self.mask, dtype=bool)
        self.info = np.broadcast_to(np.asarray(self.info, dtype=float), self.mask.shape)
        if self.mask.ndim != 2 or self.mask.shape[0] != len(self.sizes):
            raise ValueError(f"mask shape {self.mask.shape} does not match K={len(self.sizes)}")
        if self.l0 is None:
            self.l0 = float(self.K)
        if not self.l0 > 0:
            raise ValueError("l0 must be > 0")
        if self.rb_budget is None:
            self.rb_budget = self.B

    @property
    def K(self) -> int:
        return self.mask.shape[0]

    @property
    def B(self) -> int:
        return self.mask.shape[1]

    @property
    def D(self) -> int:
        return int(self.sizes.sum())


@dataclass
class ScheduleDecision:
    s: np.ndarray  # (K,) bool
    lam: np.ndarray  # (K, B) bool
    nu: float = 0.0
    l: float = 0.0
    objective: float = 0.0
    lp_objective: float | None = field(default=None, compare=False)

    @classmethod
    def empty(cls, K: int, B: int, nu: float = 0.0, l: float = 0.0) -> "ScheduleDecision":
        return cls(np.zeros(K, bool), np.zeros((K, B), bool), nu, l)

    @property
    def rb_of(self) -> np.ndarray:
        """Assigned RB per client, -1 where none."""
        if self.lam.shape[1] == 0:
            return np.full(len(self.s), -1)
        has = self.lam.any(axis=1)
        return np.where(has, self.lam.argmax(axis=1), -1)

    @property
    def allocated(self) -> int:
        return int(self.lam.sum())


def penalty_slope(nu_tilde: float, phi: float, D: int, T: int) -> float:
    return phi * D * T * (1.0 - nu_tilde) ** (T - 1)


def auxiliary_optimal(q, g, nu_tilde, phi, explore, D, T, beta, l0, rule: str = MAXIMIZER) -> tuple[float, float]:
    """Per-slot auxiliaries ``(nu, l)`` from the two threshold tests.

    ``chi = q - phi D T (1 - nu_tilde)^(T-1)``. The ``maximizer`` rule picks
    the values that minimize the drift-plus-penalty bound (``nu = 1 - beta``
    when ``chi <= 0``, ``l = l0`` when ``g <= phi * explore``). The
    ``literal`` rule applies the opposite inequalities (``chi >= 0`` and
    ``g >= phi * explore``).
    """
    chi = q - penalty_slope(nu_tilde, phi, D, T)
    thr = phi * explore
    if rule == MAXIMIZER:
        high_nu, high_l = chi <= 0, g <= thr
    elif rule == LITERAL:
        high_nu, high_l = chi >= 0, g >= thr
    else:
        raise ValueError(f"unknown auxiliary rule {rule!r}")
    return (1.0 - beta if high_nu else 0.0), (float(l0) if high_l else 0.0)


def slot_weights(inputs: SlotInputs, quantity_aware: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Objective weights ``Theta`` (per client) and ``Omega`` (per link)."""
    q, g = inputs.queues.q, inputs.queues.g
    share = inputs.sizes / inputs.D if quantity_aware else np.full(inputs.K, 1.0 / inputs.K)
    theta = q * (1.0 - inputs.beta) * share
    omega = g * inputs.info
    return theta, omega


def build_slot_lp(inputs: SlotInputs, quantity_aware: bool = True) -> lp.LpProblem:
    K, B = inputs.K, inputs.B
    theta, omega = slot_weights(inputs, quantity_aware)
    n = K + K * B
    rows, rhs = [], []
    lam = lambda k, b: K + k * B + b
    for k in range(K):  # s_k <= sum_b lam_kb
        r = np.zeros(n)
        r[k] = 1.0
        r[K + k * B : K + (k + 1) * B] = -1.0
        rows.append(r)
        rhs.append(0.0)
    for k in range(K):  # one RB per client
        r = np.zeros(n)
        r[K + k * B : K + (k + 1) * B] = 1.0
        rows.append(r)
        rhs.append(1.0)
    for b in range(B):  # one client per RB
        r = np.zeros(n)
        r[[lam(k, b) for k in range(K)]] = 1.0
        rows.append(r)
        rhs.append(1.0)
    r = np.zeros(n)
    r[:K] = 1.0
    rows.append(r)
    rhs.append(float(inputs.rb_budget))
    hi = np.concatenate([inputs.mask.any(axis=1), inputs.mask.ravel()]).astype(float)
    c = np.concatenate([theta, omega.ravel()])
    return lp.LpProblem(c, np.array(rows).reshape(-1, n), np.array(rhs), np.zeros(n), hi)


def decision_objective(s, lam, theta, omega) -> float:
    return float(np.dot(theta, s) + np.sum(omega * lam))


def round_solution(sol: lp.LpSolution, inputs: SlotInputs, quantity_aware: bool = True,
                   work_conserving: bool = True) -> ScheduleDecision:
    """Integer schedule from an optimal slot LP solution.

    Clients are visited by ``Theta`` descending (lowest index on ties); a
    client with any lambda mass takes the unused RB of largest ``Omega``
    within its support, lowest index first. ``s`` follows the clients that
    got an RB, truncated at the RB budget. With ``work_conserving`` any
    client still without an RB then takes a free feasible one, which never
    lowers the objective since every weight is non-negative.
    """
    if not sol.optimal:
        raise RoundingError(f"slot LP not optimal: {sol.status}")
    K, B = inputs.K, inputs.B
    theta, omega = slot_weights(inputs, quantity_aware)
    s_frac = sol.x[:K]
    lam_frac = sol.x[K:].reshape(K, B)
    order = sorted(range(K), key=lambda k: (-theta[k], k))
    used = np.zeros(B, bool)
    lam = np.zeros((K, B), bool)

    def take(k, candidates):
        free = [b for b in candidates if not used[b] and inputs.mask[k, b]]
        if not free:
            return False
        best = max(free, key=lambda b: (omega[k, b], -b))
        lam[k, best] = used[best] = True
        return True

    # integral assignments first so fractional clients cannot steal their RBs
    for k in order:
        whole = np.flatnonzero(lam_frac[k] >= 1 - _FRAC)
        if len(whole):
            take(k, whole)
    for k in order:
        if not lam[k].any() and lam_frac[k].sum() > _FRAC:
            take(k, np.flatnonzero(lam_frac[k] > _FRAC)) or take(k, range(B))
    s = np.zeros(K, bool)
    for k in order:
        if s.sum() >= inputs.rb_budget:
            break
        if lam[k].any() and (s_frac[k] > _FRAC or work_conserving):
            s[k] = True
    if work_conserving:
        for k in order:
            if not lam[k].any() and s.sum() < inputs.rb_budget and take(k, range(B)):
                s[k] = True
    value = decision_objective(s, lam, theta, omega)
    if value < sol.objective - _ROUND_TOL * max(1.0, abs(sol.objective)):
        raise RoundingError(f"rounded objective {value!r} below LP optimum {sol.objective!r}")
    return ScheduleDecision(s, lam, objective=value, lp_objective=sol.objective)


def solve_slot(inputs: SlotInputs, quantity_aware: bool = True, rule: str = MAXIMIZER,
               work_conserving: bool = True) -> ScheduleDecision:
    """Auxiliaries, slot LP, simplex and rounding for one slot."""
    qs = inputs.queues
    nu, l = auxiliary_optimal(qs.q, qs.g, qs.nu_tilde, inputs.phi, inputs.explore, inputs.D,
                              inputs.horizon, inputs.beta, inputs.l0, rule)
    sol = lp.solve(build_slot_lp(inputs, quantity_aware))
    dec = round_solution(sol, inputs, quantity_aware, work_conserving)
    return replace(dec, nu=nu, l=l)


def utilization(s, sizes, beta: float) -> float:
    sizes = np.asarray(sizes)
    return float((1.0 - beta) * np.dot(np.asarray(s, float), sizes) / sizes.sum())


def update_queues(queues: VirtualQueues, nu: float, l: float, decision: ScheduleDecision,
                  inputs: SlotInputs) -> VirtualQueues:
    u = utilization(decision.s, inputs.sizes, inputs.beta)
    explored = float(np.sum(inputs.info * decision.lam))
    return VirtualQueues(
        q=max(0.0, queues.q + nu - u),
        g=max(0.0, queues.g + l - explored),
        nu_sum=queues.nu_sum + nu,
        slots=queues.slots + 1,
    )


def dpp_bound_terms(queues: VirtualQueues, nu: float, l: float, decision: ScheduleDecision,
                    inputs: SlotInputs) -> float:
    """Per-slot drift-plus-penalty bound without the constant drift term."""
    u = utilization(decision.s, inputs.sizes, inputs.beta)
    explored = float(np.sum(inputs.info * decision.lam))
    slope = penalty_slope(queues.nu_tilde, inputs.phi, inputs.D, inputs.horizon)
    return queues.q * (nu - u) + queues.g * (l - explored) - slope * nu - inputs.phi * inputs.explore * l


def check_decision(dec: ScheduleDecision, mask=None, rb_budget: int | None = None) -> list[str]:
    """Names of violated scheduling constraints (empty when the decision is valid)."""
    bad = []
    per_client = dec.lam.sum(axis=1)
    if (dec.s.astype(int) > per_client).any() or (per_client > 1).any():
        bad.append("link")
    if (dec.lam.sum(axis=0) > 1).any():
        bad.append("ofdma")
    budget = dec.lam.shape[1] if rb_budget is None else rb_budget
    if dec.s.sum() > budget:
        bad.append("rb_budget")
    if mask is not None and (dec.lam & ~np.asarray(mask, bool)).any():
        bad.append("mask")
    return bad
