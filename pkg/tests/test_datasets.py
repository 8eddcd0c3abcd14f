import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fedsched import datasets as ds
from fedsched.errors import IdxFormatError, InfeasiblePartitionError


def test_zipf_balanced_600_per_client():
    assert ds.zipf_sizes(6000, 10, 0) == [600] * 10


def test_zipf_single_client_and_two_clients():
    assert ds.zipf_sizes(300, 1, 2.5) == [300]
    assert ds.zipf_sizes(300, 2, 1) == [200, 100]


def test_zipf_rejects_fewer_samples_than_clients():
    with pytest.raises(InfeasiblePartitionError):
        ds.zipf_sizes(5, 10, 1.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.integers(0, 5000), st.floats(0, 4))
def test_zipf_properties(K, extra, sigma):
    D = K + extra
    sizes = ds.zipf_sizes(D, K, sigma)
    assert sum(sizes) == D
    assert min(sizes) >= 1
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    if sigma == 0:
        assert max(sizes) - min(sizes) <= 1


def test_dirichlet_infinite_gives_uniform_classes():
    counts = ds.dirichlet_class_split([250] * 10, [250] * 10, ds.INFINITE, seed=3)
    assert (counts == 25).all()


def test_dirichlet_tiny_alpha_means_one_class_per_client():
    counts = ds.dirichlet_class_split([100] * 10, [100] * 10, 1e-7, seed=1)
    # every client but the last (which takes the remainder) draws a single class
    assert all((row > 0).sum() == 1 for row in counts[:-1])


def test_dirichlet_inconsistent_totals():
    with pytest.raises(InfeasiblePartitionError):
        ds.dirichlet_class_split([10, 10], [5, 5], 1.0, 0)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(1, 8), st.integers(0, 10**6),
       st.sampled_from([1e-7, 0.1, 1.0, 10.0, ds.INFINITE]), st.floats(0, 2))
def test_dirichlet_conserves_rows_and_columns(K, C, seed, alpha, sigma):
    rng = np.random.default_rng(seed)
    totals = rng.integers(0, 60, C)
    totals[0] += K
    sizes = ds.zipf_sizes(int(totals.sum()), K, sigma)
    counts = ds.dirichlet_class_split(sizes, totals, alpha, seed)
    assert (counts >= 0).all()
    assert counts.sum(axis=1).tolist() == sizes
    assert counts.sum(axis=0).tolist() == totals.tolist()


def test_partition_is_reproducible_and_exact():
    X, y = ds.synth_blobs(4, 3, 50, 0.5, seed=2)
    spec = ds.PartitionSpec(200, 5, 1.0, 0.5, 4, seed=9)
    a, ca = ds.partition(X, y, spec)
    b, cb = ds.partition(X, y, spec)
    assert (ca == cb).all()
    idx = np.concatenate([c.indices for c in a])
    assert sorted(idx.tolist()) == list(range(200))
    for c, c2 in zip(a, b):
        assert np.array_equal(c.X, c2.X) and c.size == len(c.X)


def test_partition_shuffle_keeps_size_multiset():
    X, y = ds.synth_blobs(2, 2, 100, 0.5, seed=0)
    spec = ds.PartitionSpec(200, 6, 1.2, ds.INFINITE, 2, seed=4)
    plain, _ = ds.partition(X, y, spec)
    shuffled, _ = ds.partition(X, y, spec, shuffle_sizes=True)
    assert sorted(c.size for c in plain) == sorted(c.size for c in shuffled)


def test_partition_spec_validation():
    with pytest.raises(InfeasiblePartitionError):
        ds.PartitionSpec(3, 4)
    with pytest.raises(InfeasiblePartitionError):
        ds.parse_alpha(0)
    assert ds.parse_alpha("inf") is ds.INFINITE


def test_partition_csv_roundtrip(tmp_path):
    counts = np.array([[1, 2], [3, 0]])
    ds.write_partition_csv(tmp_path / "p.csv", counts)
    text = (tmp_path / "p.csv").read_text()
    assert text.splitlines()[0] == "client_id,D_k,count_class_0,count_class_1"
    assert text.splitlines()[1] == "0,3,1,2"
    assert (ds.read_partition_csv(tmp_path / "p.csv") == counts).all()


@pytest.fixture
def idx_pair(tmp_path):
    rng = np.random.default_rng(0)
    imgs = rng.integers(0, 256, (30, 28, 28), dtype=np.uint8)
    labels = rng.integers(0, 10, 30, dtype=np.uint8)
    ip, lp = tmp_path / "img.idx", tmp_path / "lab.idx"
    ds.write_mnist_idx(ip, lp, imgs, labels)
    return ip, lp, imgs, labels


def test_mnist_idx_load(idx_pair):
    ip, lp, imgs, labels = idx_pair
    X, y = ds.load_mnist_idx(ip, lp, limit=20)
    assert X.shape == (20, 784)
    assert X.min() >= 0 and X.max() <= 1
    assert np.allclose(X * 255, imgs[:20].reshape(20, -1))
    assert (y == labels[:20]).all()
    X0, y0 = ds.load_mnist_idx(ip, lp, limit=0)
    assert len(X0) == 0 and len(y0) == 0


def test_mnist_idx_errors(idx_pair, tmp_path):
    ip, lp, *_ = idx_pair
    bad = tmp_path / "bad.idx"
    bad.write_bytes(b"\x00\x00\x08\x02" + ip.read_bytes()[4:])
    with pytest.raises(IdxFormatError):
        ds.load_mnist_idx(bad, lp)
    short = tmp_path / "short.idx"
    short.write_bytes(ip.read_bytes()[:-5])
    with pytest.raises(IdxFormatError):
        ds.load_mnist_idx(short, lp)
    few = tmp_path / "few.idx"
    ds.write_mnist_idx(tmp_path / "x.idx", few, np.zeros((3, 2, 2)), np.zeros(4))
    with pytest.raises(IdxFormatError):
        ds.load_mnist_idx(ip, few)


def test_blobs_separable_and_deterministic():
    X, y = ds.synth_blobs(2, 2, 50, 0.1, seed=7)
    assert X.shape == (100, 2)
    # the centers are 2*e_0 and 2*e_1, so x0 - x1 separates them
    margin = np.where(y == 0, 1, -1) * (X[:, 0] - X[:, 1])
    assert margin.min() > 0
    X2, y2 = ds.synth_blobs(2, 2, 50, 0.1, seed=7)
    assert X.tobytes() == X2.tobytes() and y.tobytes() == y2.tobytes()
    Xc, yc = ds.synth_blobs(3, 4, 5, 0.0, seed=1)
    assert np.array_equal(Xc, ds.blob_centers(3, 4)[yc])
