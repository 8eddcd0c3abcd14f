"""Federated learning over a wireless uplink with Lyapunov client scheduling."""

from .config import SystemConfig, load_config
from .harness import MetricsRow, run, simulate, sweep

__all__ = ["SystemConfig", "load_config", "MetricsRow", "run", "simulate", "sweep"]
__version__ = "0.1.0"
