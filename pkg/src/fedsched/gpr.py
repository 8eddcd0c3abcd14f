"""Gaussian-process channel prediction with a periodic kernel.

Each (client, RB) link keeps the ``window`` most recent channel samples.
Real and imaginary parts are two independent zero-mean GPs sharing one
kernel matrix, so a single solve serves both and the posterior variance
is the same for either component.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ColdStartError, OrderingError


@dataclass(frozen=True)
class GprHyper:
    length: float = 2.0
    period: float = 5.0
    window: int = 20
    jitter: float = 1e-9

    def __post_init__(self):
        if not (self.length > 0 and self.period > 0 and self.window >= 1 and self.jitter >= 0):
            raise ValueError(f"invalid GPR hyper-parameters {self}")


def kernel(t_m, t_n, hyper: GprHyper):
    """``exp(-sin^2(pi (t_m - t_n) / period) / length)``; broadcasts over arrays."""
    d = np.subtract(t_m, t_n, dtype=float)
    return np.exp(-np.sin(np.pi * d / hyper.period) ** 2 / hyper.length)


@dataclass
class GprLinkModel:
    hyper: GprHyper = field(default_factory=GprHyper)
    times: deque = field(default_factory=deque)
    values: deque = field(default_factory=deque)
    _factor: tuple | None = field(default=None, repr=False)
    _weights: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.times)

    def _solve(self):
        if self._factor is None:
            ts = np.fromiter(self.times, dtype=float)
            C = kernel(ts[:, None], ts[None, :], self.hyper) + self.hyper.jitter * np.eye(len(ts))
            self._factor = cho_factor(C, lower=True)
            self._weights = cho_solve(self._factor, np.fromiter(self.values, dtype=complex))
        return self._factor, self._weights


def observe(model: GprLinkModel, t: float, h: complex) -> GprLinkModel:
    if model.times and t <= model.times[-1]:
        raise OrderingError(f"observation at t={t} is not after t={model.times[-1]}")
    model.times.append(t)
    model.values.append(complex(h))
    while len(model.times) > model.hyper.window:
        model.times.popleft()
        model.values.popleft()
    model._factor = None
    model._weights = None
    return model


def predict(model: GprLinkModel, t: float) -> tuple[complex, float]:
    """Posterior mean and variance of the channel at ``t``.

    Raises ColdStartError on an empty buffer; callers then treat the link
    as unexplored (mean 0, variance 1).
    """
    if not model.times:
        raise ColdStartError("no observations for this link")
    factor, weights = model._solve()
    c = kernel(t, np.fromiter(model.times, dtype=float), model.hyper)
    mean = complex(c @ weights)
    var = 1.0 - float(c @ cho_solve(factor, c))
    return mean, min(1.0, max(0.0, var))


def predict_or_prior(model: GprLinkModel, t: float) -> tuple[complex, float]:
    try:
        return predict(model, t)
    except ColdStartError:
        return 0j, 1.0


def information(model: GprLinkModel, t: float) -> float:
    """Exploration value of sampling the link at ``t``: its posterior variance."""
    return predict_or_prior(model, t)[1]


class LinkPredictors:
    """One GPR model per (client, RB) link."""

    def __init__(self, clients: int, rbs: int, hyper: GprHyper):
        self.hyper = hyper
        self.models = [[GprLinkModel(hyper) for _ in range(rbs)] for _ in range(clients)]

    def predict_all(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        K, B = len(self.models), len(self.models[0]) if self.models else 0
        mean = np.zeros((K, B), dtype=complex)
        var = np.ones((K, B))
        for k in range(K):
            for b in range(B):
                mean[k, b], var[k, b] = predict_or_prior(self.models[k][b], t)
        return mean, var

    def observe(self, k: int, b: int, t: float, h: complex) -> None:
        observe(self.models[k][b], t, h)
