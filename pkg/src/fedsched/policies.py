"""The six scheduling policies and the per-round simulation step.

Policy names are the strings accepted on the command line: ``QAW-GPR``,
``QAW``, ``QUNAW``, ``RANDOM``, ``PF`` and ``IDEAL``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import lyapunov as ly
from .compute import ComputeParams, ComputeSnapshot, snapshot
from .errors import ConfigError, UndefinedMetricError
from .fl_dual import DualTrainer
from .gpr import LinkPredictors
from .wireless import ChannelBook, feasible_mask

QAW_GPR, QAW, QUNAW, RANDOM, PF, IDEAL = "QAW-GPR", "QAW", "QUNAW", "RANDOM", "PF", "IDEAL"
POLICY_NAMES = (QAW_GPR, QAW, QUNAW, RANDOM, PF, IDEAL)
_PILOT_USERS = (QAW, QUNAW, PF)  # policies that need true CSI and pay for it with an RB


@dataclass(frozen=True)
class PolicyKind:
    name: str
    use_computation_gate: bool = True
    pilot_rb_reserved: bool = True
    random_compute_gate: bool = False
    pf_compute_gate: bool = True

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ConfigError(f"unknown policy {self.name!r}; expected one of {', '.join(POLICY_NAMES)}")

    @property
    def uses_lp(self) -> bool:
        return self.name in (QAW_GPR, QAW, QUNAW)

    @property
    def uses_gpr(self) -> bool:
        return self.name == QAW_GPR

    @property
    def quantity_aware(self) -> bool:
        return self.name != QUNAW

    def usable_rbs(self, B: int) -> int:
        if self.pilot_rb_reserved and self.name in _PILOT_USERS:
            return max(0, B - 1)
        return B


@dataclass
class PfState:
    avg: np.ndarray
    eps: float = 0.01
    factor: float = 0.9

    @classmethod
    def fresh(cls, K: int, eps: float = 0.01, factor: float = 0.9) -> "PfState":
        if not (eps > 0 and 0 < factor < 1):
            raise ValueError("PF needs eps > 0 and EWMA factor in (0, 1)")
        return cls(np.zeros(K), eps, factor)

    def scores(self, feasible) -> np.ndarray:
        return np.asarray(feasible, float) / (self.avg + self.eps)

    def update(self, delivered) -> None:
        self.avg = self.factor * self.avg + np.asarray(delivered, float)


@dataclass
class SlotState:
    t: int
    sizes: np.ndarray
    true_sinr: np.ndarray  # (K, B)
    gamma0: float
    compute: ComputeSnapshot
    queues: ly.VirtualQueues
    beta: float = 0.7
    phi: float = 1.0
    explore: float = 1.0
    horizon: int = 100
    l0: float | None = None
    pred_sinr: np.ndarray | None = None  # QAW-GPR only
    info: np.ndarray | None = None  # QAW-GPR only
    aux_rule: str = ly.MAXIMIZER
    work_conserving: bool = True

    @property
    def K(self) -> int:
        return self.true_sinr.shape[0]

    @property
    def B(self) -> int:
        return self.true_sinr.shape[1]


def decision_mask(policy: PolicyKind, state: SlotState) -> np.ndarray:
    """Links the policy believes usable: wireless gate, compute gate, pilot RB removed."""
    view = state.pred_sinr if policy.uses_gpr else state.true_sinr
    mask = feasible_mask(view, state.gamma0)
    gate = policy.use_computation_gate
    if policy.name == PF:
        gate = gate and policy.pf_compute_gate
    if gate:
        mask &= state.compute.feasible[:, None]
    mask[:, policy.usable_rbs(state.B):] = False
    return mask


def _greedy_pf(policy: PolicyKind, state: SlotState, pf: PfState, mask: np.ndarray) -> ly.ScheduleDecision:
    K, B = state.K, state.B
    dec = ly.ScheduleDecision.empty(K, B)
    score = pf.scores(mask.any(axis=1))
    budget = policy.usable_rbs(B)
    for k in sorted(range(K), key=lambda k: (-score[k], k)):
        if dec.s.sum() >= budget or score[k] <= 0:
            break
        free = np.flatnonzero(mask[k] & ~dec.lam.any(axis=0))
        if len(free):
            b = int(free[np.argmax(state.true_sinr[k, free])])
            dec.lam[k, b] = dec.s[k] = True
    return dec


def _random(policy: PolicyKind, state: SlotState, rng: np.random.Generator) -> ly.ScheduleDecision:
    K, B = state.K, state.B
    dec = ly.ScheduleDecision.empty(K, B)
    pool = np.arange(K)
    if policy.random_compute_gate and policy.use_computation_gate:
        pool = pool[state.compute.feasible]
    n_rb = policy.usable_rbs(B)
    m = min(n_rb, len(pool))
    if m == 0:
        return dec
    chosen = rng.choice(pool, size=m, replace=False)
    rbs = rng.permutation(n_rb)[:m]
    dec.s[chosen] = True
    dec.lam[chosen, rbs] = True
    return dec


def decide(policy: PolicyKind, state: SlotState, pf: PfState | None = None,
           rng: np.random.Generator | None = None) -> ly.ScheduleDecision:
    K, B = state.K, state.B
    if policy.name == IDEAL:
        return ly.ScheduleDecision(np.ones(K, bool), np.zeros((K, B), bool))
    if policy.name == RANDOM:
        return _random(policy, state, rng if rng is not None else np.random.default_rng(0))
    mask = decision_mask(policy, state)
    if policy.name == PF:
        return _greedy_pf(policy, state, pf if pf is not None else PfState.fresh(K), mask)
    info = state.info if policy.uses_gpr and state.info is not None else np.zeros((K, B))
    inputs = ly.SlotInputs(state.sizes, state.beta, state.queues, info, mask, state.phi, state.explore,
                           state.horizon, state.l0, rb_budget=policy.usable_rbs(B))
    return ly.solve_slot(inputs, policy.quantity_aware, state.aux_rule, state.work_conserving)


def delivered(policy: PolicyKind, dec: ly.ScheduleDecision, state: SlotState) -> np.ndarray:
    """Uploads that reach the server: the TRUE channel and compute time decide."""
    if policy.name == IDEAL:
        return dec.s.copy()
    rb = dec.rb_of
    ok = dec.s & (rb >= 0)
    idx = np.flatnonzero(ok)
    ok[idx] = state.true_sinr[idx, rb[idx]] >= state.gamma0
    return ok & state.compute.feasible


@dataclass
class Environment:
    """Everything fixed for one run: channels, compute process and scheduler constants."""

    channels: ChannelBook
    compute: ComputeParams
    sizes: np.ndarray
    local_passes: int
    gamma0: float = 1.2
    beta: float = 0.7
    phi: float = 1.0
    explore: float = 1.0
    horizon: int = 100
    l0: float | None = None
    aux_rule: str = ly.MAXIMIZER
    work_conserving: bool = True
    gpr_sinr: str = "plugin"  # or "expected"
    link_power: float = 1.2


@dataclass
class RunState:
    trainer: DualTrainer
    rng: np.random.Generator
    queues: ly.VirtualQueues = field(default_factory=ly.VirtualQueues)
    predictors: LinkPredictors | None = None
    pf: PfState | None = None
    t: int = 0


@dataclass
class RoundRecord:
    t: int
    decision: ly.ScheduleDecision
    delivered: np.ndarray
    allocated: int
    successes: int
    violations: list[str]
    q: float
    g: float


def predicted_view(env: Environment, predictors: LinkPredictors, t: int) -> tuple[np.ndarray, np.ndarray]:
    """Predicted SINR and exploration value for every link at slot ``t``.

    Never-sampled links are treated as feasible so the scheduler can explore
    them. In ``expected`` mode the SINR uses ``E|h|^2 = |mean|^2 + var * P_h``
    instead of the bare posterior mean.
    """
    mean, var = predictors.predict_all(t)
    ch = env.channels
    power = np.abs(mean) ** 2
    if env.gpr_sinr == "expected":
        power = power + var * env.link_power
    elif env.gpr_sinr != "plugin":
        raise ConfigError(f"unknown gpr_sinr mode {env.gpr_sinr!r}")
    pred = ch.tx_power * power / ch.noise
    cold = np.array([[len(m) == 0 for m in row] for row in predictors.models], dtype=bool)
    pred[cold] = np.inf
    return pred, var


def run_round(policy: PolicyKind, state: RunState, env: Environment) -> RoundRecord:
    """One round: compute snapshot, prediction, scheduling, uploads, aggregation, queues."""
    t = state.t
    comp = snapshot(env.compute, env.sizes, env.local_passes, t)
    true_sinr = env.channels.at(t)
    pred = info = None
    if policy.uses_gpr:
        pred, info = predicted_view(env, state.predictors, t)
    slot = SlotState(t, env.sizes, true_sinr, env.gamma0, comp, state.queues, env.beta, env.phi, env.explore,
                     env.horizon, env.l0, pred, info, env.aux_rule, env.work_conserving)
    dec = decide(policy, slot, state.pf, state.rng)
    violations = [] if policy.name == IDEAL else ly.check_decision(dec, _audit_mask(policy, slot),
                                                                   policy.usable_rbs(slot.B))
    ok = delivered(policy, dec, slot)
    # local updates depend only on the broadcast state, so computing them for
    # the delivering clients alone gives the same result as computing all of them
    state.trainer.apply({int(k): state.trainer.local_update(int(k)) for k in np.flatnonzero(ok)})
    inputs = ly.SlotInputs(env.sizes, env.beta, state.queues, info if info is not None else np.zeros_like(true_sinr),
                           np.ones_like(true_sinr, bool), env.phi, env.explore, env.horizon, env.l0)
    state.queues = ly.update_queues(state.queues, dec.nu, dec.l, dec, inputs)
    if state.predictors is not None:
        for k, b in zip(*np.nonzero(dec.lam)):
            state.predictors.observe(int(k), int(b), t, env.channels.h[k, b, t])
    if state.pf is not None:
        state.pf.update(ok)
    state.t += 1
    return RoundRecord(t, dec, ok, dec.allocated, int(ok.sum()), violations, state.queues.q, state.queues.g)


def _audit_mask(policy: PolicyKind, slot: SlotState) -> np.ndarray | None:
    """Mask the decision must respect; RANDOM is allowed to ignore feasibility."""
    if policy.name == RANDOM:
        mask = np.ones((slot.K, slot.B), bool)
        mask[:, policy.usable_rbs(slot.B):] = False
        return mask
    return decision_mask(policy, slot)


def rb_utilization(records: Sequence[RoundRecord]) -> float:
    """Successful uploads over allocated RBs."""
    allocated = sum(r.allocated for r in records)
    if allocated == 0:
        raise UndefinedMetricError("no RB was ever allocated")
    return sum(r.successes for r in records if r.allocated) / allocated
