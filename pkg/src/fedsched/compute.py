"""Stochastic client compute power and the computation-time gate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class ComputeParams:
    mean_power: float = 1.0  # mean of the exponential power process
    cycles_per_sample: float = 1e-3
    power_per_cycles: float = 1.0
    tau0: float = 1.2
    seed: int = 0

    def __post_init__(self):
        if min(self.mean_power, self.cycles_per_sample, self.power_per_cycles, self.tau0) <= 0:
            raise ValueError("compute parameters must be strictly positive")


@dataclass
class ComputeSnapshot:
    power: np.ndarray
    time: np.ndarray
    feasible: np.ndarray


def draw_power(params: ComputeParams, K: int, t: int) -> np.ndarray:
    """i.i.d. exponential power per client for slot ``t``, reproducible per (seed, t)."""
    rng = np.random.default_rng([params.seed, t])
    return rng.exponential(params.mean_power, size=K)


def computation_time(D_k, M_k, P, params: ComputeParams):
    """Minimum local computation time ``c_s D_k M_k / (P^(1/3) / kappa)``."""
    P = np.asarray(P, dtype=float)
    if (P <= 0).any():
        raise DomainError("available power must be positive")
    out = params.cycles_per_sample * np.asarray(D_k) * np.asarray(M_k) * params.power_per_cycles / np.cbrt(P)
    return float(out) if out.ndim == 0 else out


def compute_feasible(tau, tau0: float):
    return np.asarray(tau) <= tau0


def snapshot(params: ComputeParams, sizes, M: int, t: int) -> ComputeSnapshot:
    sizes = np.asarray(sizes)
    power = draw_power(params, len(sizes), t)
    tau = np.asarray(computation_time(sizes, M, power, params), dtype=float)
    return ComputeSnapshot(power, tau, compute_feasible(tau, params.tau0))
