"""Dual-decomposed federated training for linear models.

The regularized primal ``F(w) = (1/D) sum_i f(x_i^T w) + xi/2 ||w||^2`` is
trained through its dual ``psi(theta) = -(1/D) sum_i f*(-theta_i) - xi/2 ||v||^2``
with ``v = X^T theta / (xi D)`` and ``w = v``. Clients improve their own
block of ``theta`` against a local quadratic surrogate and ship
``dv_k = X_k^T dtheta_k / (xi D)``; the server adds the delivered ``dv_k``.

Multi-class labels are handled one-vs-rest: ``theta`` and ``v`` carry one
column per binary problem and all columns share the schedule.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit
from scipy.special import xlogy

from .errors import DomainError, UndefinedRatioError

QUADRATIC = "quadratic"
LOGISTIC = "logistic"
_KIND = {QUADRATIC: 0, LOGISTIC: 1}


@dataclass(frozen=True)
class LossSpec:
    kind: str = LOGISTIC
    xi: float = 1.0

    def __post_init__(self):
        if self.kind not in _KIND:
            raise ValueError(f"unknown loss {self.kind!r}")
        if not self.xi > 0:
            raise ValueError("regularization xi must be > 0")


def encode_labels(y: np.ndarray, n_classes: int) -> np.ndarray:
    """+-1 targets, one column for binary problems, one per class otherwise."""
    y = np.asarray(y)
    if n_classes <= 2:
        return np.where(y == 1, 1.0, -1.0)[:, None]
    return np.where(y[:, None] == np.arange(n_classes)[None, :], 1.0, -1.0)


def predict_labels(X: np.ndarray, W: np.ndarray) -> np.ndarray:
    scores = X @ W
    if W.shape[1] == 1:
        return (scores[:, 0] > 0).astype(np.int64)
    return np.argmax(scores, axis=1)


def _check_dims(X, W):
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError("features must be a non-empty 2-D array")
    if W.shape[0] != X.shape[1]:
        raise ValueError(f"model has dimension {W.shape[0]}, features have {X.shape[1]}")


def _as_cols(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def primal_loss(W, X, Y, spec: LossSpec) -> float:
    W, Y = _as_cols(W), _as_cols(Y)
    X = np.asarray(X, dtype=float)
    _check_dims(X, W)
    Z = X @ W
    if spec.kind == QUADRATIC:
        data = 0.5 * (Z - Y) ** 2
    else:
        data = np.logaddexp(0.0, -Y * Z)
    return float(data.sum() / len(X) + 0.5 * spec.xi * np.sum(W * W))


def conjugate_neg(theta, Y, kind: str) -> np.ndarray:
    """Elementwise ``f*(-theta)``."""
    if kind == QUADRATIC:
        return 0.5 * theta**2 - theta * Y
    a = theta * Y
    if (a < -1e-12).any() or (a > 1 + 1e-12).any():
        raise DomainError("logistic duals need theta*y in [0, 1]")
    a = np.clip(a, 0.0, 1.0)
    return xlogy(a, a) + xlogy(1 - a, 1 - a)


def dual_vector(theta, X, xi: float, D: int) -> np.ndarray:
    return np.asarray(X).T @ _as_cols(theta) / (xi * D)


def dual_objective(theta, X, Y, spec: LossSpec) -> float:
    theta, Y = _as_cols(theta), _as_cols(Y)
    D = len(theta)
    v = dual_vector(theta, X, spec.xi, D)
    return float(-conjugate_neg(theta, Y, spec.kind).sum() / D - 0.5 * spec.xi * np.sum(v * v))


def local_surrogate(delta, theta_k, X_k, Y_k, v, spec: LossSpec, eta: float, D: int, K: int) -> float:
    """Client-side quadratic model of the dual change for an update ``delta``."""
    delta, theta_k, Y_k, v = _as_cols(delta), _as_cols(theta_k), _as_cols(Y_k), _as_cols(v)
    r = X_k.T @ delta
    val = -conjugate_neg(theta_k + delta, Y_k, spec.kind).sum() / D
    val -= spec.xi / K * 0.5 * np.sum(v * v)
    val -= np.sum(r * v) / D
    val -= eta / spec.xi / (2.0 * D * D) * np.sum(r * r)
    return float(val)


@njit(cache=True)
def _coordinate_passes(X, Y, A, W, scale, passes, kind, bisect_iters, tol):
    """Cyclic exact coordinate ascent on the local surrogate, in place on ``A``.

    Returns ``X^T (A_new - A_old)`` and the number of passes run.
    """
    n, d = X.shape
    C = Y.shape[1]
    R = np.zeros((d, C))
    u = np.empty(d)
    sq = np.zeros(n)
    for i in range(n):
        for j in range(d):
            sq[i] += X[i, j] * X[i, j]
    done = 0
    for c in range(C):
        for j in range(d):
            u[j] = W[j, c]
        for p in range(passes):
            biggest = 0.0
            for i in range(n):
                xu = 0.0
                for j in range(d):
                    xu += X[i, j] * u[j]
                k = scale * sq[i]
                if kind == 0:
                    step = (Y[i, c] - A[i, c] - xu) / (1.0 + k)
                else:
                    y = Y[i, c]
                    a0 = min(1.0, max(0.0, A[i, c] * y))
                    g0 = y * xu
                    lo = 0.0
                    hi = 1.0
                    for _ in range(bisect_iters):
                        mid = 0.5 * (lo + hi)
                        if np.log(mid / (1.0 - mid)) + g0 + k * (mid - a0) > 0.0:
                            hi = mid
                        else:
                            lo = mid
                    a = 0.5 * (lo + hi)
                    h_new = a * np.log(a) + (1.0 - a) * np.log(1.0 - a)
                    h_old = 0.0
                    if 0.0 < a0 < 1.0:
                        h_old = a0 * np.log(a0) + (1.0 - a0) * np.log(1.0 - a0)
                    gain = -h_new + h_old - g0 * (a - a0) - 0.5 * k * (a - a0) ** 2
                    if gain < 0.0:
                        a = a0
                    step = (a - a0) * y
                if step != 0.0:
                    A[i, c] += step
                    for j in range(d):
                        u[j] += scale * step * X[i, j]
                        R[j, c] += step * X[i, j]
                    if abs(step) > biggest:
                        biggest = abs(step)
            if p + 1 > done:
                done = p + 1
            if biggest <= tol:
                break
    return R, done


def local_dual_update(
    X_k,
    Y_k,
    theta_k,
    v,
    M: int,
    eta: float,
    spec: LossSpec,
    D: int,
    exact: bool = False,
    bisect_iters: int = 20,
) -> tuple[np.ndarray, np.ndarray]:
    """Approximately maximize the local surrogate from ``delta = 0``.

    Runs ``M`` cyclic coordinate-ascent passes (or solves to convergence
    when ``exact``). Returns ``(dtheta_k, dv_k)``.
    """
    X_k = np.ascontiguousarray(X_k, dtype=float)
    Y_k, theta_k, v = _as_cols(Y_k), _as_cols(theta_k), _as_cols(v)
    scale = eta / (spec.xi * D)
    if len(X_k) == 0 or (M == 0 and not exact):
        return np.zeros_like(theta_k), np.zeros_like(v)
    if exact and spec.kind == QUADRATIC:
        lhs = np.eye(len(X_k)) + scale * X_k @ X_k.T
        delta = np.linalg.solve(lhs, Y_k - theta_k - X_k @ v)
        return delta, X_k.T @ delta / (spec.xi * D)
    A = np.ascontiguousarray(theta_k.copy())
    passes, tol, iters = (100000, 1e-13, max(bisect_iters, 50)) if exact else (int(M), -1.0, bisect_iters)
    R, _ = _coordinate_passes(
        X_k, np.ascontiguousarray(Y_k), A, np.ascontiguousarray(v), scale, passes, _KIND[spec.kind], iters, tol
    )
    return A - theta_k, R / (spec.xi * D)


def aggregate(v, delivered: Sequence[bool], dvs: Sequence[np.ndarray | None]) -> np.ndarray:
    """``v + sum`` of delivered client updates, summed in client order."""
    out = np.array(v, dtype=float, copy=True)
    for ok, dv in zip(delivered, dvs):
        if ok and dv is not None:
            out += dv
    return out


def measure_beta(X_k, Y_k, theta_k, v, delta, spec: LossSpec, eta: float, D: int, K: int) -> float:
    """Remaining-over-achieved ratio of local surrogate improvement for ``delta``."""
    best, _ = local_dual_update(X_k, Y_k, theta_k, v, 0, eta, spec, D, exact=True)
    g = lambda d: local_surrogate(d, theta_k, X_k, Y_k, v, spec, eta, D, K)
    g0, gd, gs = g(np.zeros_like(_as_cols(theta_k))), g(delta), g(best)
    denom = gd - g0
    if abs(denom) <= 1e-15 * max(1.0, abs(g0)):
        raise UndefinedRatioError("update achieves no local improvement")
    return max(0.0, (gs - gd) / denom)


def convergence_bound(schedule, sizes, beta: float, D: int | None = None, T: int | None = None) -> float:
    """Upper bound ``D (1 - (1 - beta) sum_t sum_k D_k s_k(t) / (T D))^T`` on the loss gap.

    ``schedule`` is a ``(T, K)`` 0/1 array of rounds by clients.
    """
    S = np.asarray(schedule, dtype=np.int64).reshape(-1, len(sizes))
    sizes = np.asarray(sizes, dtype=np.int64)
    D = int(sizes.sum()) if D is None else int(D)
    T = len(S) if T is None else int(T)
    if T < 1:
        raise ValueError("T must be >= 1")
    used = int((S * sizes[None, :]).sum())
    if used == 0:
        return float(D)
    frac = used / (T * D)
    return float(D * (beta + (1.0 - beta) * (1.0 - frac)) ** T)


def centralized_baseline(X, Y, spec: LossSpec, tol: float = 1e-12, max_iter: int = 200) -> tuple[np.ndarray, float]:
    """Exact minimizer of the primal: normal equations or damped Newton."""
    X = np.asarray(X, dtype=float)
    Y = _as_cols(Y)
    if len(X) == 0:
        raise ValueError("empty dataset")
    D, d = X.shape
    H0 = X.T @ X / D + spec.xi * np.eye(d)
    if spec.kind == QUADRATIC:
        W = np.linalg.solve(H0, X.T @ Y / D)
        return W, primal_loss(W, X, Y, spec)
    W = np.zeros((d, Y.shape[1]))
    for c in range(Y.shape[1]):
        w, y = W[:, c], Y[:, c]
        f = lambda w: primal_loss(w, X, y, spec)
        for it in range(max_iter):
            z = X @ w
            p = 0.5 * (1.0 - np.tanh(0.5 * y * z))  # sigmoid(-y z)
            grad = -X.T @ (y * p) / D + spec.xi * w
            if np.linalg.norm(grad) <= tol:
                break
            hess = (X * (p * (1 - p))[:, None]).T @ X / D + spec.xi * np.eye(d)
            step = np.linalg.solve(hess, grad)
            decrement = grad @ step
            t = 1.0
            # near the optimum the loss change drops below float resolution;
            # the full Newton step is then safe and converges quadratically
            if decrement > 1e-10:
                fw = f(w)
                while f(w - t * step) > fw - 0.25 * t * decrement and t > 1e-12:
                    t *= 0.5
            w = w - t * step
        else:
            raise RuntimeError("Newton iteration did not converge")
        W[:, c] = w
    return W, primal_loss(W, X, Y, spec)


@dataclass
class DualState:
    theta: np.ndarray  # (D, C)
    v: np.ndarray  # (d, C)
    round: int = 0

    @classmethod
    def zeros(cls, D: int, d: int, C: int) -> "DualState":
        return cls(np.zeros((D, C)), np.zeros((d, C)))

    @property
    def w(self) -> np.ndarray:
        return self.v


@dataclass
class ClientUpdate:
    dtheta: np.ndarray
    dv: np.ndarray


@dataclass
class DualTrainer:
    """The training state shared by the server and the clients of one run."""

    X: np.ndarray
    Y: np.ndarray
    client_rows: list[np.ndarray]
    spec: LossSpec
    local_passes: int
    eta: float
    exact: bool = False
    bisect_iters: int = 20
    state: DualState = field(init=False)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.Y = _as_cols(self.Y)
        self.state = DualState.zeros(len(self.X), self.X.shape[1], self.Y.shape[1])

    @property
    def D(self) -> int:
        return len(self.X)

    @property
    def K(self) -> int:
        return len(self.client_rows)

    def local_update(self, k: int) -> ClientUpdate:
        rows = self.client_rows[k]
        dtheta, dv = local_dual_update(
            self.X[rows],
            self.Y[rows],
            self.state.theta[rows],
            self.state.v,
            self.local_passes,
            self.eta,
            self.spec,
            self.D,
            exact=self.exact,
            bisect_iters=self.bisect_iters,
        )
        return ClientUpdate(dtheta, dv)

    def apply(self, updates: dict[int, ClientUpdate]) -> None:
        """Aggregate delivered updates; undelivered clients keep their old duals."""
        ks = sorted(updates)
        self.state.v = aggregate(self.state.v, [True] * len(ks), [updates[k].dv for k in ks])
        for k in ks:
            self.state.theta[self.client_rows[k]] += updates[k].dtheta
        self.state.round += 1

    def primal(self) -> float:
        return primal_loss(self.state.w, self.X, self.Y, self.spec)

    def dual(self) -> float:
        return dual_objective(self.state.theta, self.X, self.Y, self.spec)

    def consistency_error(self) -> float:
        fresh = dual_vector(self.state.theta, self.X, self.spec.xi, self.D)
        return float(np.abs(fresh - self.state.v).max())
