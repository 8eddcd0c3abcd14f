"""Seeded experiment runs, metric rows and parameter sweeps."""

from __future__ import annotations

import csv
import hashlib
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from . import datasets, wireless
from .compute import ComputeParams
from .config import SystemConfig, parse_value
from .errors import ConfigError
from .fl_dual import DualTrainer, LossSpec, centralized_baseline, encode_labels, predict_labels, convergence_bound
from .gpr import GprHyper, LinkPredictors
from .policies import Environment, PfState, PolicyKind, RoundRecord, RunState, run_round

SEED_LABELS = ("data", "split", "partition", "channel", "compute", "policy")


def sub_seed(master: int, label: str) -> int:
    """Independent stream seed: ``master`` xor a stable 63-bit hash of ``label``."""
    digest = hashlib.blake2b(label.encode("utf-8"), digest_size=8).digest()
    return (int(master) ^ int.from_bytes(digest, "little")) & (2**63 - 1)


@dataclass
class MetricsRow:
    run_id: str
    policy: str
    seed: int
    t: int
    primal: float
    dual: float
    f0: float
    gap: float
    bound: float
    test_accuracy: float
    q: float
    g: float
    scheduled: str
    allocated: int
    successes: int
    utilization: float


CSV_HEADER = tuple(f.name for f in fields(MetricsRow))


def _fmt(v) -> str:
    if isinstance(v, float):
        return "%.17g" % v
    return str(v)


def rows_to_csv(rows: Sequence[MetricsRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([_fmt(getattr(r, k)) for k in CSV_HEADER])
    return buf.getvalue()


def write_csv(path: str | Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(text)


def bitmask_hex(flags) -> str:
    """Client ``k`` maps to bit ``k``."""
    return hex(sum(1 << int(k) for k in np.flatnonzero(flags)))


@dataclass
class Problem:
    """Data side of a run: global training set, held-out split and partition."""

    X: np.ndarray
    y: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    n_classes: int
    clients: list[datasets.ClientDataset]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([c.size for c in self.clients], dtype=np.int64)


def load_problem(cfg: SystemConfig) -> Problem:
    if cfg.dataset == "mnist":
        if not (cfg.mnist_images and cfg.mnist_labels):
            raise ConfigError("dataset=mnist needs mnist_images and mnist_labels")
        X, y = datasets.load_mnist_idx(cfg.mnist_images, cfg.mnist_labels, cfg.mnist_limit or None)
        n_classes = 10
    else:
        n_classes = cfg.blob_classes
        per_class = -(-cfg.samples // n_classes)
        X, y = datasets.synth_blobs(n_classes, cfg.blob_dim, per_class, cfg.blob_spread, sub_seed(cfg.seed, "data"))
        X, y = X[: cfg.samples], y[: cfg.samples]
    order = np.random.default_rng(sub_seed(cfg.seed, "split")).permutation(len(y))
    n_test = int(round(cfg.test_fraction * len(y)))
    test, train = order[:n_test], np.sort(order[n_test:])
    X_tr, y_tr = X[train], y[train]
    spec = datasets.PartitionSpec(len(y_tr), cfg.clients, cfg.zipf_sigma, cfg.dirichlet_alpha, n_classes,
                                  sub_seed(cfg.seed, "partition"))
    clients, _ = datasets.partition(X_tr, y_tr, spec, shuffle_sizes=cfg.shuffle_sizes)
    return Problem(X_tr, y_tr, X[test], y[test], n_classes, clients)


def loss_spec(cfg: SystemConfig) -> LossSpec:
    return LossSpec(cfg.loss, cfg.xi)


def baseline(cfg: SystemConfig, problem: Problem | None = None) -> tuple[np.ndarray, float]:
    problem = problem or load_problem(cfg)
    return centralized_baseline(problem.X, encode_labels(problem.y, problem.n_classes), loss_spec(cfg))


def channel_params(cfg: SystemConfig) -> wireless.ChannelParams:
    return wireless.ChannelParams(cfg.clients, cfg.rbs, cfg.mean_snr, cfg.tx_power, cfg.noise, cfg.doppler_period,
                                  cfg.n_sinusoids, cfg.doppler_spread, cfg.smoothness_value(), sub_seed(cfg.seed, "channel"))


def compute_params(cfg: SystemConfig) -> ComputeParams:
    return ComputeParams(cfg.mean_power, cfg.cycles_per_sample, cfg.power_per_cycles, cfg.tau0,
                         sub_seed(cfg.seed, "compute"))


def policy_kind(cfg: SystemConfig) -> PolicyKind:
    return PolicyKind(cfg.policy, cfg.use_computation_gate, cfg.pilot_rb_reserved, cfg.random_compute_gate,
                      cfg.pf_compute_gate)


@dataclass
class RunResult:
    rows: list[MetricsRow]
    records: list[RoundRecord]
    channels: wireless.ChannelBook
    sizes: np.ndarray
    f0: float
    max_q: float

    @property
    def final_gap(self) -> float:
        return self.rows[-1].gap

    @property
    def violations(self) -> int:
        return sum(len(r.violations) for r in self.records)


def simulate(cfg: SystemConfig) -> RunResult:
    """Run one seeded experiment for ``cfg.rounds`` rounds."""
    problem = load_problem(cfg)
    spec = loss_spec(cfg)
    Y = encode_labels(problem.y, problem.n_classes)
    _, f0 = centralized_baseline(problem.X, Y, spec)
    sizes = problem.sizes
    chp = channel_params(cfg)
    book = wireless.gen_channels(chp, cfg.rounds)
    env = Environment(book, compute_params(cfg), sizes, cfg.local_passes, cfg.gamma0, cfg.beta, cfg.phi,
                      cfg.explore, cfg.rounds, cfg.l0_value, cfg.aux_rule, cfg.work_conserving, cfg.gpr_sinr,
                      chp.link_power)
    trainer = DualTrainer(problem.X, Y, [c.indices for c in problem.clients], spec, cfg.local_passes,
                          cfg.eta_value, exact=cfg.exact_local, bisect_iters=cfg.bisect_iters)
    policy = policy_kind(cfg)
    state = RunState(trainer, np.random.default_rng(sub_seed(cfg.seed, "policy")))
    if policy.uses_gpr:
        state.predictors = LinkPredictors(cfg.clients, cfg.rbs,
                                          GprHyper(cfg.gpr_length, cfg.gpr_period, cfg.gpr_window, cfg.gpr_jitter))
    if policy.name == "PF":
        state.pf = PfState.fresh(cfg.clients, cfg.pf_eps, cfg.pf_factor)

    run_id = cfg.run_id or f"{cfg.policy}_seed{cfg.seed}"
    D = int(sizes.sum())
    rows, records = [], []
    history = np.zeros((cfg.rounds, cfg.clients), dtype=np.int64)
    alloc = succ = 0
    max_q = 0.0
    for t in range(cfg.rounds):
        rec = run_round(policy, state, env)
        records.append(rec)
        history[t] = rec.delivered
        alloc += rec.allocated
        succ += rec.successes if rec.allocated else 0
        max_q = max(max_q, rec.q)
        primal = trainer.primal()
        acc = float(np.mean(predict_labels(problem.X_test, trainer.state.w) == problem.y_test))
        rows.append(MetricsRow(
            run_id, cfg.policy, cfg.seed, t, primal, trainer.dual(), f0, primal - f0,
            convergence_bound(history[: t + 1], sizes, cfg.beta, D, t + 1), acc, rec.q, rec.g,
            bitmask_hex(rec.decision.s), rec.allocated, rec.successes,
            succ / alloc if alloc else float("nan"),
        ))
    if cfg.trace_output:
        wireless.write_trace(cfg.trace_output, book)
    return RunResult(rows, records, book, sizes, f0, max_q)


def run(cfg: SystemConfig) -> list[MetricsRow]:
    res = simulate(cfg)
    if cfg.output:
        write_csv(cfg.output, rows_to_csv(res.rows))
    return res.rows


def thread_cap() -> int:
    env = os.environ.get("FEDSCHED_THREADS", "")
    try:
        n = int(env) if env else (os.cpu_count() or 1)
    except ValueError:
        raise ConfigError(f"FEDSCHED_THREADS must be an integer, got {env!r}") from None
    return max(1, n)


def _cell(cfg: SystemConfig) -> tuple[list[MetricsRow], int, float]:
    res = simulate(cfg)
    return res.rows, res.violations, res.max_q


@dataclass
class SweepSummary:
    axis: str
    value: str
    policy: str
    seeds: int
    mean_final_gap: float
    std_final_gap: float
    mean_final_accuracy: float
    mean_utilization: float


def sweep(base: SystemConfig, axis: str, values: Sequence[str], seeds: int,
          threads: int | None = None) -> tuple[list[MetricsRow], list[SweepSummary]]:
    """Every (value, seed) cell of an axis sweep; rows come back in (value, seed) order."""
    if seeds < 1:
        raise ConfigError("seeds must be >= 1")
    parsed = [parse_value(axis, str(v)) for v in values]
    cells = [base.replace(**{axis: v}, seed=base.seed + i, run_id="") for v in parsed for i in range(seeds)]
    for c in cells:
        c.validate()
    threads = min(threads or thread_cap(), len(cells))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]
    rows, summary = [], []
    for j, v in enumerate(parsed):
        chunk = results[j * seeds : (j + 1) * seeds]
        label = f"{axis}={v}"
        for rs, _, _ in chunk:
            for r in rs:
                r.run_id = f"{label}_seed{r.seed}"
                rows.append(r)
        finals = np.array([rs[-1].gap for rs, _, _ in chunk])
        utils = np.array([rs[-1].utilization for rs, _, _ in chunk])
        summary.append(SweepSummary(
            axis, str(v), chunk[0][0][0].policy, seeds, float(finals.mean()),
            float(finals.std(ddof=1)) if seeds > 1 else 0.0,
            float(np.mean([rs[-1].test_accuracy for rs, _, _ in chunk])),
            float(np.nanmean(utils)) if np.isfinite(utils).any() else float("nan"),
        ))
    return rows, summary


def summary_to_csv(summary: Sequence[SweepSummary]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    keys = list(asdict(summary[0])) if summary else [f.name for f in fields(SweepSummary)]
    w.writerow(keys)
    for s in summary:
        w.writerow([_fmt(v) for v in asdict(s).values()])
    return buf.getvalue()
