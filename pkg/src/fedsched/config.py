"""Flat ``key = value`` run configuration."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Iterable

from .datasets import INFINITE, Infinite, parse_alpha
from .errors import ConfigError
from .lyapunov import LITERAL, MAXIMIZER
from .policies import POLICY_NAMES

AUTO = "auto"


@dataclass
class SystemConfig:
    # system and training constants
    clients: int = 10
    rbs: int = 6
    beta: float = 0.7
    tx_power: float = 1.0
    noise: float = 1.0
    rounds: int = 100
    local_passes: int = 10
    eta: float | str = AUTO  # "auto" means K
    xi: float = 1.0
    phi: float = 1.0
    explore: float = 1.0
    gamma0: float = 1.2
    tau0: float = 1.2
    gpr_length: float = 2.0
    gpr_period: float = 5.0
    gpr_window: int = 20
    gpr_jitter: float = 1e-9
    # channel
    mean_snr: float = 1.2
    doppler_period: float = 5.0
    n_sinusoids: int = 32
    doppler_spread: float = 0.02
    channel_smoothness: float | str = AUTO  # "auto" means gpr_length
    # compute
    mean_power: float = 1.0
    cycles_per_sample: float = 3e-4
    power_per_cycles: float = 1.0
    # data
    dataset: str = "blobs"
    samples: int = 1250
    blob_classes: int = 10
    blob_dim: int = 20
    blob_spread: float = 1.0
    mnist_images: str = ""
    mnist_labels: str = ""
    mnist_limit: int = 0
    loss: str = "logistic"
    test_fraction: float = 0.2
    zipf_sigma: float = 1.017
    dirichlet_alpha: float | Infinite = INFINITE
    shuffle_sizes: bool = True
    # policy
    policy: str = "QAW"
    use_computation_gate: bool = True
    pilot_rb_reserved: bool = True
    random_compute_gate: bool = False
    pf_compute_gate: bool = True
    pf_eps: float = 0.01
    pf_factor: float = 0.9
    l0: float | str = AUTO  # "auto" means K
    aux_rule: str = MAXIMIZER
    work_conserving: bool = True
    gpr_sinr: str = "plugin"
    exact_local: bool = False
    bisect_iters: int = 20
    queue_envelope: float = 50.0  # max q allowed, in units of (1 - beta)
    # bookkeeping
    seed: int = 0
    run_id: str = ""
    output: str = ""
    trace_output: str = ""

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.policy not in POLICY_NAMES:
            raise ConfigError(f"policy must be one of {', '.join(POLICY_NAMES)}, got {self.policy!r}")
        if self.dataset not in ("blobs", "mnist"):
            raise ConfigError(f"dataset must be blobs or mnist, got {self.dataset!r}")
        if self.loss not in ("logistic", "quadratic"):
            raise ConfigError(f"loss must be logistic or quadratic, got {self.loss!r}")
        if self.aux_rule not in (MAXIMIZER, LITERAL):
            raise ConfigError(f"aux_rule must be {MAXIMIZER} or {LITERAL}")
        if self.gpr_sinr not in ("plugin", "expected"):
            raise ConfigError("gpr_sinr must be plugin or expected")
        if self.clients < 1 or self.rbs < 0 or self.rounds < 1 or self.local_passes < 0:
            raise ConfigError("need clients >= 1, rbs >= 0, rounds >= 1, local_passes >= 0")
        if not 0 <= self.beta < 1:
            raise ConfigError("beta must lie in [0, 1)")
        if not 0 < self.test_fraction < 1:
            raise ConfigError("test_fraction must lie in (0, 1)")
        for name in ("eta", "l0"):
            v = getattr(self, name)
            if v != AUTO and not (isinstance(v, (int, float)) and v > 0):
                raise ConfigError(f"{name} must be positive or 'auto'")
        c = self.channel_smoothness
        if c != AUTO and not (isinstance(c, (int, float)) and c >= 0):
            raise ConfigError("channel_smoothness must be >= 0 or 'auto'")

    @property
    def eta_value(self) -> float:
        return float(self.clients) if self.eta == AUTO else float(self.eta)

    @property
    def l0_value(self) -> float:
        return float(self.clients) if self.l0 == AUTO else float(self.l0)

    def smoothness_value(self) -> float:
        return float(self.gpr_length) if self.channel_smoothness == AUTO else float(self.channel_smoothness)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return "".join(f"{f.name} = {format_value(getattr(self, f.name))}\n" for f in fields(self))


FIELD_NAMES = tuple(f.name for f in fields(SystemConfig))


def format_value(v: Any) -> str:
    if v is INFINITE:
        return "inf"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_value(key: str, text: str) -> Any:
    if key not in FIELD_NAMES:
        raise ConfigError(f"unknown config key {key!r}")
    default = getattr(SystemConfig, key, None)
    text = text.strip()
    try:
        if key == "dirichlet_alpha":
            return parse_alpha(text)
        if key in ("eta", "l0", "channel_smoothness"):
            return AUTO if text.lower() == AUTO else float(text)
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            v = float(text)
            if math.isnan(v):
                raise ValueError("NaN")
            return v
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad value for {key}: {text!r} ({e})") from None
    return text


def parse_lines(lines: Iterable[str]) -> dict[str, Any]:
    out = {}
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value', got {raw.rstrip()!r}")
        key, text = (s.strip() for s in line.split("=", 1))
        out[key] = parse_value(key, text)
    return out


def load_config(path: str | Path | None = None, overrides: Iterable[str] = ()) -> SystemConfig:
    """Defaults, then the file, then ``key=value`` overrides, in that order."""
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        values.update(parse_lines(text.splitlines()))
    values.update(parse_lines(overrides))
    return SystemConfig(**values)
