import numpy as np
import pytest

from fedsched import cli, harness
from fedsched.config import SystemConfig, load_config, parse_lines, parse_value
from fedsched.datasets import INFINITE
from fedsched.errors import ConfigError
from fedsched.fl_dual import convergence_bound

SMALL = dict(clients=4, rbs=3, rounds=8, samples=200, blob_classes=2, blob_dim=5, local_passes=2)


def small(**kw):
    return SystemConfig(**{**SMALL, **kw})


def test_defaults_and_derived_values():
    cfg = SystemConfig()
    assert (cfg.clients, cfg.rbs, cfg.beta, cfg.rounds, cfg.local_passes) == (10, 6, 0.7, 100, 10)
    assert (cfg.gamma0, cfg.tau0, cfg.gpr_length, cfg.gpr_period, cfg.gpr_window) == (1.2, 1.2, 2.0, 5.0, 20)
    assert cfg.eta_value == 10.0 and cfg.l0_value == 10.0
    assert cfg.smoothness_value() == 2.0
    assert cfg.replace(eta=0.5).eta_value == 0.5


def test_parse_values_and_errors():
    assert parse_value("rbs", " 4 ") == 4
    assert parse_value("dirichlet_alpha", "inf") == INFINITE
    assert parse_value("eta", "AUTO") == "auto"
    assert parse_value("use_computation_gate", "false") is False
    with pytest.raises(ConfigError):
        parse_value("no_such_key", "1")
    with pytest.raises(ConfigError):
        parse_value("beta", "nan")
    with pytest.raises(ConfigError):
        parse_value("rbs", "two")
    with pytest.raises(ConfigError):
        parse_lines(["rbs 3"])
    with pytest.raises(ConfigError):
        SystemConfig(beta=1.0)
    with pytest.raises(ConfigError):
        SystemConfig(policy="RR")


def test_config_file_override_order(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("# comment\nrbs = 3\nbeta = 0.5  # trailing\n\n", encoding="utf-8")
    cfg = load_config(path, ["rbs=2"])
    assert cfg.rbs == 2 and cfg.beta == 0.5
    assert load_config(path).rbs == 3
    back = parse_lines(cfg.to_text().splitlines())
    assert SystemConfig(**back) == cfg
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_sub_seeds_are_label_based():
    assert harness.sub_seed(0, "channel") != harness.sub_seed(0, "compute")
    assert harness.sub_seed(3, "channel") == harness.sub_seed(3, "channel")
    assert harness.sub_seed(3, "channel") != harness.sub_seed(4, "channel")


def test_rows_and_gap_recomputation():
    res = harness.simulate(small(policy="QAW"))
    assert len(res.rows) == 8 and [r.t for r in res.rows] == list(range(8))
    for r in res.rows:
        assert r.gap == r.primal - r.f0
        assert r.dual <= r.primal
        assert int(r.scheduled, 16) < 2**4
    text = harness.rows_to_csv(res.rows)
    assert text.splitlines()[0] == ",".join(harness.CSV_HEADER)
    assert "\r" not in text


def test_byte_identical_reruns(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    harness.run(small(policy="QAW-GPR", output=str(a)))
    harness.run(small(policy="QAW-GPR", output=str(b)))
    assert a.read_bytes() == b.read_bytes()


def test_channel_trace_shared_across_policies(tmp_path):
    traces = []
    for name in ("QAW", "RANDOM", "IDEAL"):
        path = tmp_path / f"{name}.csv"
        harness.simulate(small(policy=name, trace_output=str(path)))
        traces.append(path.read_bytes())
    assert traces[0] == traces[1] == traces[2]


@pytest.mark.parametrize("name", ["QAW", "QUNAW", "QAW-GPR", "PF", "RANDOM"])
def test_no_rbs_means_no_progress(name):
    res = harness.simulate(small(policy=name, rbs=0, rounds=5))
    assert all(r.successes == 0 for r in res.records)
    D = int(res.sizes.sum())
    assert res.rows[-1].bound == convergence_bound(np.zeros((5, 4)), res.sizes, 0.7) == D
    assert len({r.primal for r in res.rows}) == 1


def test_ideal_converges_on_separable_data():
    cfg = SystemConfig(policy="IDEAL", clients=4, rounds=200, samples=100, blob_classes=2, blob_dim=5,
                       blob_spread=0.3, xi=0.1, exact_local=True)
    res = harness.simulate(cfg)
    assert res.final_gap < 1e-3
    assert res.rows[-1].test_accuracy == 1.0


def test_sweep_single_cell_reduces_to_run():
    base = small(policy="QAW", seed=5)
    rows, summary = harness.sweep(base, "rbs", ["3"], 1, threads=1)
    ref = harness.simulate(base).rows
    assert [(r.t, r.primal, r.gap) for r in rows] == [(r.t, r.primal, r.gap) for r in ref]
    assert summary[0].mean_final_gap == ref[-1].gap and summary[0].std_final_gap == 0.0
    with pytest.raises(ConfigError):
        harness.sweep(base, "bogus", ["1"], 1)


def test_sweep_order_and_seeds():
    rows, summary = harness.sweep(small(rounds=3), "rbs", ["1", "2"], 2, threads=1)
    assert [s.value for s in summary] == ["1", "2"]
    assert [(r.run_id, r.seed) for r in rows[::3]] == [("rbs=1_seed0", 0), ("rbs=1_seed1", 1),
                                                       ("rbs=2_seed0", 0), ("rbs=2_seed1", 1)]
    assert "mean_final_gap" in harness.summary_to_csv(summary).splitlines()[0]


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("FEDSCHED_THREADS", "3")
    assert harness.thread_cap() == 3
    monkeypatch.setenv("FEDSCHED_THREADS", "x")
    with pytest.raises(ConfigError):
        harness.thread_cap()


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "o.csv"
    sets = [f"--set={k}={v}" for k, v in SMALL.items()]
    assert cli.main(["run", *sets, f"--set=output={out}"]) == 0
    assert out.read_text().startswith("run_id,")
    assert cli.main(["run", "--set=bogus=1"]) == 1
    assert cli.main(["run", *sets, "--set=dataset=mnist", "--set=mnist_images=/nonexistent",
                     "--set=mnist_labels=/nonexistent"]) == 2
    assert cli.main(["baseline", *sets]) == 0
    assert "f0 = " in capsys.readouterr().out
    summ = tmp_path / "s.csv"
    assert cli.main(["sweep", *sets, "--axis=rbs", "--values=2,3", f"--summary={summ}",
                     f"--set=output={tmp_path / 'rows.csv'}"]) == 0
    assert len(summ.read_text().splitlines()) == 3
