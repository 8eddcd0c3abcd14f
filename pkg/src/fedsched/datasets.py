"""Training data generation, ingestion and non-IID partitioning.

Dataset-size heterogeneity follows a Zipf law over client rank and
class heterogeneity follows per-client Dirichlet class proportions.
All real-valued allocations are turned into integers by largest-remainder
apportionment so totals are conserved exactly.
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import IdxFormatError, InfeasiblePartitionError


class Infinite(enum.Enum):
    """Sentinel for an infinite Dirichlet concentration (proportional split)."""

    ALPHA = "infinite"

    def __str__(self) -> str:
        return "inf"


INFINITE = Infinite.ALPHA
Alpha = Union[float, Infinite]

# Below this concentration a client's proposal is a single class.
SINGLE_CLASS_ALPHA = 1e-6

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


def parse_alpha(value: str | float | Infinite) -> Alpha:
    if isinstance(value, Infinite):
        return value
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinite", "infinity"):
        return INFINITE
    alpha = float(value)
    if alpha == float("inf"):
        return INFINITE
    if not alpha > 0:
        raise InfeasiblePartitionError(f"dirichlet alpha must be > 0, got {alpha}")
    return alpha


@dataclass(frozen=True)
class PartitionSpec:
    total_samples: int
    clients: int
    zipf_sigma: float = 0.0
    dirichlet_alpha: Alpha = INFINITE
    class_count: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.clients < 1 or self.total_samples < self.clients:
            raise InfeasiblePartitionError(
                f"need total_samples >= clients >= 1, got D={self.total_samples}, K={self.clients}"
            )
        if self.class_count < 1:
            raise InfeasiblePartitionError("class_count must be >= 1")
        if self.zipf_sigma < 0:
            raise InfeasiblePartitionError("zipf_sigma must be >= 0")


@dataclass
class ClientDataset:
    client_id: int
    X: np.ndarray
    y: np.ndarray
    indices: np.ndarray  # rows of the global training matrix

    @property
    def size(self) -> int:
        return len(self.y)


def largest_remainder(weights: Sequence[float], total: int) -> np.ndarray:
    """Apportion ``total`` integer units proportionally to ``weights``.

    Remainders are handed out by descending fractional part, ties to the
    lowest index, so the result is deterministic.
    """
    w = np.asarray(weights, dtype=float)
    if total == 0 or w.sum() <= 0:
        return np.zeros(len(w), dtype=np.int64)
    quotas = total * w / w.sum()
    base = np.floor(quotas).astype(np.int64)
    short = int(total - base.sum())
    order = np.argsort(-(quotas - base), kind="stable")
    base[order[:short]] += 1
    return base


def zipf_sizes(total: int, clients: int, sigma: float) -> list[int]:
    """Per-client dataset sizes ``D_k`` proportional to ``k**-sigma``.

    Sizes sum to ``total`` exactly, are non-increasing in ``k`` and are at
    least 1 each.
    """
    if clients < 1 or total < clients:
        raise InfeasiblePartitionError(f"cannot split {total} samples over {clients} clients")
    if sigma < 0:
        raise InfeasiblePartitionError("zipf sigma must be >= 0")
    ranks = np.arange(1, clients + 1, dtype=float)
    sizes = largest_remainder(ranks**-sigma, total)
    # heavy tails can round the smallest clients to zero
    for k in np.flatnonzero(sizes == 0):
        sizes[int(np.argmax(sizes))] -= 1
        sizes[k] = 1
    sizes = np.sort(sizes)[::-1]
    return [int(s) for s in sizes]


def dirichlet_class_split(
    sizes: Sequence[int],
    class_totals: Sequence[int],
    alpha: Alpha,
    seed: int,
) -> np.ndarray:
    """Per-client per-class sample counts, shape ``(K, C)``.

    Clients are filled in order. Each client draws class proportions from
    ``Dir(alpha)`` (the current class availability for an infinite alpha,
    a single availability-weighted class for alpha <= 1e-6), asks for its
    ``D_k`` samples by largest remainder, and any request that exceeds the
    remaining stock of a class spills into the other classes in order of
    preference. The last client takes whatever is left, which keeps row
    and column sums exact.
    """
    sizes = np.asarray(sizes, dtype=np.int64)
    avail = np.asarray(class_totals, dtype=np.int64).copy()
    if sizes.sum() != avail.sum():
        raise InfeasiblePartitionError(
            f"client sizes sum to {sizes.sum()} but class totals sum to {avail.sum()}"
        )
    if (sizes < 0).any() or (avail < 0).any():
        raise InfeasiblePartitionError("negative counts")
    alpha = parse_alpha(alpha)
    K, C = len(sizes), len(avail)
    rng = np.random.default_rng(seed)
    counts = np.zeros((K, C), dtype=np.int64)
    for k in range(K):
        need = int(sizes[k])
        if k == K - 1:
            counts[k] = avail
            break
        if need == 0:
            continue
        if alpha is INFINITE:
            pref = avail / avail.sum()
        elif alpha <= SINGLE_CLASS_ALPHA:
            pref = np.zeros(C)
            pref[rng.choice(C, p=avail / avail.sum())] = 1.0
        else:
            pref = rng.dirichlet(np.full(C, alpha))
        take = np.minimum(largest_remainder(pref, need), avail)
        short = need - int(take.sum())
        if short:
            order = sorted(range(C), key=lambda c: (-pref[c], -(avail[c] - take[c]), c))
            for c in order:
                extra = min(short, int(avail[c] - take[c]))
                take[c] += extra
                short -= extra
                if short == 0:
                    break
        counts[k] = take
        avail -= take
    return counts


def assign_samples(
    X: np.ndarray, y: np.ndarray, counts: np.ndarray, seed: int
) -> list[ClientDataset]:
    """Hand out samples per class from a seeded shuffled pool, without replacement."""
    rng = np.random.default_rng(seed)
    K, C = counts.shape
    pools = []
    for c in range(C):
        idx = np.flatnonzero(y == c)
        if len(idx) != counts[:, c].sum():
            raise InfeasiblePartitionError(f"class {c}: {len(idx)} samples, counts need {counts[:, c].sum()}")
        pools.append(rng.permutation(idx))
    cursor = np.zeros(C, dtype=np.int64)
    clients = []
    for k in range(K):
        parts = []
        for c in range(C):
            n = counts[k, c]
            parts.append(pools[c][cursor[c] : cursor[c] + n])
            cursor[c] += n
        idx = np.sort(np.concatenate(parts)) if parts else np.zeros(0, dtype=np.int64)
        clients.append(ClientDataset(k, X[idx], y[idx], idx))
    return clients


def partition(
    X: np.ndarray, y: np.ndarray, spec: PartitionSpec, shuffle_sizes: bool = False
) -> tuple[list[ClientDataset], np.ndarray]:
    """Split ``(X, y)`` over ``spec.clients`` clients; returns clients and the count matrix.

    With ``shuffle_sizes`` the Zipf sizes are dealt to client ids in a
    seeded random order instead of largest-first.
    """
    if len(y) != spec.total_samples:
        raise InfeasiblePartitionError(f"spec says D={spec.total_samples}, data has {len(y)}")
    sizes = np.array(zipf_sizes(spec.total_samples, spec.clients, spec.zipf_sigma))
    rng = np.random.default_rng(spec.seed)
    if shuffle_sizes:
        sizes = sizes[rng.permutation(spec.clients)]
    class_totals = np.bincount(y, minlength=spec.class_count)
    counts = dirichlet_class_split(sizes, class_totals, spec.dirichlet_alpha, int(rng.integers(2**63)))
    clients = assign_samples(X, y, counts, int(rng.integers(2**63)))
    return clients, counts


def write_partition_csv(path: str | Path, counts: np.ndarray) -> None:
    counts = np.asarray(counts)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["client_id", "D_k"] + [f"count_class_{c}" for c in range(counts.shape[1])])
        for k, row in enumerate(counts):
            w.writerow([k, int(row.sum())] + [int(v) for v in row])


def read_partition_csv(path: str | Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))[1:]
    return np.array([[int(v) for v in r[2:]] for r in rows], dtype=np.int64)


def _read_idx(path: str | Path, magic: int) -> tuple[tuple[int, ...], bytes]:
    data = Path(path).read_bytes()
    if len(data) < 4:
        raise IdxFormatError(f"{path}: truncated header")
    (got,) = struct.unpack(">I", data[:4])
    if got != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{got:08x}, expected 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise IdxFormatError(f"{path}: truncated header")
    dims = struct.unpack(">" + "I" * ndim, data[4:head])
    need = int(np.prod(dims))
    if len(data) - head < need:
        raise IdxFormatError(f"{path}: truncated body ({len(data) - head} of {need} bytes)")
    return dims, data[head : head + need]


def load_mnist_idx(
    images_path: str | Path, labels_path: str | Path, limit: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Read an MNIST image/label IDX pair.

    Returns ``X`` of shape ``(n, rows*cols)`` scaled to [0, 1] and integer
    labels ``y``, with ``n = min(limit, file count)``.
    """
    idims, ibody = _read_idx(images_path, IMAGES_MAGIC)
    ldims, lbody = _read_idx(labels_path, LABELS_MAGIC)
    if idims[0] != ldims[0]:
        raise IdxFormatError(f"{idims[0]} images but {ldims[0]} labels")
    n = idims[0] if limit is None else min(int(limit), idims[0])
    X = np.frombuffer(ibody, dtype=np.uint8).reshape(idims[0], -1)[:n].astype(np.float64) / 255.0
    y = np.frombuffer(lbody, dtype=np.uint8)[:n].astype(np.int64)
    if (y > 9).any():
        raise IdxFormatError("label outside 0-9")
    return X, y


def write_mnist_idx(images_path: str | Path, labels_path: str | Path, images: np.ndarray, labels: np.ndarray) -> None:
    """Write ``uint8`` images ``(n, rows, cols)`` and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, r, c = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IMAGES_MAGIC, n, r, c) + images.tobytes())
    Path(labels_path).write_bytes(struct.pack(">II", LABELS_MAGIC, len(labels)) + labels.tobytes())


def blob_centers(n_classes: int, dim: int) -> np.ndarray:
    if n_classes <= dim:
        return 2.0 * np.eye(n_classes, dim)
    if dim < 2:
        raise ValueError("more classes than dimensions needs dim >= 2")
    ang = 2 * np.pi * np.arange(n_classes) / n_classes
    centers = np.zeros((n_classes, dim))
    centers[:, 0] = 2.0 * np.cos(ang)
    centers[:, 1] = 2.0 * np.sin(ang)
    return centers


def synth_blobs(
    n_classes: int, dim: int, per_class: int, spread: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Isotropic Gaussian clusters around fixed, linearly separable centers."""
    if min(n_classes, dim, per_class) < 1:
        raise ValueError("counts must be >= 1")
    rng = np.random.default_rng(seed)
    centers = blob_centers(n_classes, dim)
    y = np.repeat(np.arange(n_classes), per_class)
    X = centers[y] + spread * rng.standard_normal((len(y), dim))
    order = rng.permutation(len(y))
    return X[order], y[order]
