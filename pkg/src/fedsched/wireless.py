"""Correlated Rayleigh uplink, SINR, rate and RB feasibility.

Each (client, RB) link is a sum of ``n_sinusoids`` equal-power tones with
random phases. Tone frequencies sit near integer harmonics ``n`` of
``1/doppler_period`` with a small stratified offset, so the gain is
Rayleigh-like at any instant, nearly periodic with the Doppler period, and
drifts slowly away from exact periodicity.

Harmonic ``n`` is drawn with probability proportional to
``I_|n|(1 / (2 smoothness))`` (modified Bessel function). That is the
Fourier spectrum of ``exp(-sin^2(pi tau / period) / smoothness)``, so the
autocorrelation of the gain follows the periodic kernel used for channel
prediction. ``smoothness = 0`` spreads tones uniformly over all harmonics
(white within one period).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ive

from .errors import ConstraintViolation


@dataclass(frozen=True)
class ChannelParams:
    clients: int
    rbs: int
    mean_snr: float = 1.2
    tx_power: float = 1.0
    noise: float = 1.0
    doppler_period: float = 5.0
    n_sinusoids: int = 32
    doppler_spread: float = 0.02
    smoothness: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not (self.mean_snr > 0 and self.tx_power > 0 and self.noise > 0):
            raise ValueError("mean_snr, tx_power and noise must be positive")
        if self.doppler_period < 2 or self.n_sinusoids < 1:
            raise ValueError("doppler_period >= 2 and n_sinusoids >= 1 required")
        if self.smoothness < 0 or self.doppler_spread < 0:
            raise ValueError("smoothness and doppler_spread must be >= 0")

    @property
    def link_power(self) -> float:
        """Mean ``|h|^2`` giving the configured mean SNR."""
        return self.mean_snr * self.noise / self.tx_power


@dataclass
class ChannelBook:
    h: np.ndarray  # (K, B, T) complex gains
    tx_power: float
    noise: float

    @property
    def sinr(self) -> np.ndarray:
        return sinr(self.h, self.tx_power, self.noise)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.h.shape

    def at(self, t: int) -> np.ndarray:
        """True SINR matrix ``(K, B)`` of slot ``t``."""
        return sinr(self.h[:, :, t], self.tx_power, self.noise)


def harmonic_weights(period: int, smoothness: float) -> tuple[np.ndarray, np.ndarray]:
    """Harmonics ``n`` (centred on 0) and their probabilities."""
    n = np.arange(-((period - 1) // 2), period // 2 + 1)
    if smoothness == 0:
        return n, np.full(len(n), 1.0 / len(n))
    w = ive(np.abs(n), 1.0 / (2.0 * smoothness))
    return n, w / w.sum()


def tone_frequencies(params: ChannelParams, rng: np.random.Generator) -> np.ndarray:
    K, B, n = params.clients, params.rbs, params.n_sinusoids
    if n == 1:
        return np.full((K, B, 1), 1.0 / params.doppler_period)
    support, prob = harmonic_weights(int(round(params.doppler_period)), params.smoothness)
    harmonic = support[rng.choice(len(support), size=(K, B, n), p=prob)]
    # stratified offsets keep tones apart, so per-link time averages settle quickly
    offset = params.doppler_spread * ((np.arange(n) + rng.uniform(0, 1, (K, B, n))) / n - 0.5)
    return (harmonic + offset) / params.doppler_period


def gen_channels(params: ChannelParams, T: int) -> ChannelBook:
    """Complex gains for slots ``0..T-1``; a longer horizon extends a shorter one."""
    if T < 1:
        raise ValueError("T must be >= 1")
    rng = np.random.default_rng(params.seed)
    freq = tone_frequencies(params, rng)
    phase = rng.uniform(0, 2 * np.pi, size=freq.shape)
    amp = np.sqrt(params.link_power / params.n_sinusoids)
    h = np.empty((params.clients, params.rbs, T), dtype=np.complex128)
    chunk = max(1, 2**22 // max(1, freq.size))
    for start in range(0, T, chunk):
        t = np.arange(start, min(T, start + chunk), dtype=float)
        h[:, :, start : start + len(t)] = amp * np.exp(
            1j * (2 * np.pi * freq[..., None] * t + phase[..., None])
        ).sum(axis=2)
    return ChannelBook(h, params.tx_power, params.noise)


def sinr(h, p: float, N0: float):
    """``p |h|^2 / N0``; interference is zero under orthogonal RB allocation."""
    return p * np.abs(h) ** 2 / N0


def rate(lambda_row, sinr_row) -> float:
    """Uplink spectral efficiency ``sum_b lambda_b log2(1 + sinr_b)``."""
    lam = np.asarray(lambda_row)
    if lam.sum() > 1:
        raise ConstraintViolation("a client may occupy at most one RB")
    return float(np.sum(lam * np.log2(1.0 + np.asarray(sinr_row, dtype=float))))


def feasible_mask(sinr_matrix, gamma0: float) -> np.ndarray:
    if not gamma0 > 0:
        raise ValueError("gamma0 must be positive")
    return np.asarray(sinr_matrix) >= gamma0


def write_trace(path: str | Path, book: ChannelBook) -> None:
    K, B, T = book.shape
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["t", "k", "b", "re", "im"])
        for t in range(T):
            for k in range(K):
                for b in range(B):
                    z = book.h[k, b, t]
                    w.writerow([t, k, b, f"{z.real:.17g}", f"{z.imag:.17g}"])


def read_trace(path: str | Path, tx_power: float = 1.0, noise: float = 1.0) -> ChannelBook:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))[1:]
    idx = np.array([[int(r[0]), int(r[1]), int(r[2])] for r in rows])
    T, K, B = idx.max(axis=0) + 1
    h = np.zeros((K, B, T), dtype=np.complex128)
    for (t, k, b), r in zip(idx, rows):
        h[k, b, t] = complex(float(r[3]), float(r[4]))
    return ChannelBook(h, tx_power, noise)
