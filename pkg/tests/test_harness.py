import math
import sys

import numpy as np
import pytest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from nmcontrol.config import ConfigError, parse_config
from nmcontrol.harness import (NO_TLS_BOUND, SweepSpec, derive_seed, read_pulse_csv,
                               run_nonmarkov, run_optimize, run_random_targets, run_simulate,
                               run_sweep, run_table1)
from nmcontrol.io import read_csv

FAST = {"control": {"n_slices": 100},
        "optimizer": {"n_starts": 1, "max_iterations": 8, "seed": 3}}


def _fast(**sections):
    raw = {k: dict(v) for k, v in FAST.items()}
    for k, v in sections.items():
        raw.setdefault(k, {}).update(v)
    return parse_config(raw)


def _strip_wall(text):
    """Drop the wall-time column so files can be compared byte for byte."""
    lines = text.splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    i = body[0].split(",").index("wall_time_s")
    return [ln for ln in lines if ln.startswith("#")] + [
        ",".join(c for j, c in enumerate(ln.split(",")) if j != i) for ln in body]


def test_derive_seed():
    assert derive_seed(0, 1) == derive_seed(0, 1)
    assert len({derive_seed(0, i) for i in range(50)}) == 50
    assert derive_seed(1, 0) != derive_seed(0, 1)


def test_run_optimize_exports(tmp_path):
    cfg = _fast()
    res, trace, summary = run_optimize(cfg, str(tmp_path), n_det_samples=20)
    for name in ("pulse.csv", "history.csv", "determinant.csv", "channel.txt", "summary.toml"):
        text = (tmp_path / name).read_text()
        assert cfg.hash in text, name
    s = tomllib.loads((tmp_path / "summary.toml").read_text())
    assert s["config_hash"] == cfg.hash
    assert s["final_error"] == pytest.approx(res.final_error)
    assert s["beats_no_tls_bound"] == (res.final_error < NO_TLS_BOUND)
    header, rows = read_csv(tmp_path / "pulse.csv")
    delta = np.array([float(r[1]) for r in rows])
    # ramp: first and last slices rise linearly towards the free edge values
    assert abs(delta[0]) < abs(delta[5]) or delta[5] == 0
    assert len(rows) == 100 and len(trace.times) == 20
    back = read_pulse_csv(tmp_path / "pulse.csv", cfg)
    np.testing.assert_allclose(back.values, res.best_control.values, rtol=1e-12, atol=1e-12)
    assert back.total_time == pytest.approx(40.0)


def test_identity_trivial_model():
    cfg = parse_config({"model": {"anharmonicity_mhz": 0.0, "qudit_t1_ns": math.inf, "tls": []},
                        "control": {"ramp_time_ns": 0.0},
                        "optimizer": {"target": "identity"}})
    res, _, summary = run_optimize(cfg, n_det_samples=5)
    assert res.final_error <= 1e-12 and res.n_iterations == 0


def test_uncoupled_reports_bound():
    cfg = _fast(model={"tls": [{"coupling_mhz": 0.0, "t1_ns": 1000.0}]})
    _, _, summary = run_optimize(cfg, n_det_samples=5)
    assert summary["final_error"] >= NO_TLS_BOUND and not summary["beats_no_tls_bound"]


def test_sweep_spec_validation():
    raw = _fast().raw
    with pytest.raises(ConfigError, match="at most two"):
        SweepSpec(raw, (("a", [1]), ("b", [1]), ("c", [1])))
    with pytest.raises(ConfigError, match="no values"):
        SweepSpec(raw, (("qudit_t1_ns", []),))
    with pytest.raises(ConfigError, match="unknown sweep parameter"):
        SweepSpec(raw, (("colour", [1]),))
    with pytest.raises(ConfigError):
        SweepSpec(raw, (("qudit_t1_ns", [-5.0]),))
    spec = SweepSpec(raw, (("qudit_t1_ns", [1, 2]), ("coupling_mhz", [0, 5, 9])))
    assert len(spec.points()) == 6 and spec.points()[1] == {"qudit_t1_ns": 1, "coupling_mhz": 5}


def test_sweep_reproducible_and_worker_independent(tmp_path):
    raw = _fast().raw
    axes = (("qudit_t1_ns", [1000.0, 5000.0]), ("coupling_mhz", [0.0, 60.0]))
    run_sweep(SweepSpec(raw, axes), str(tmp_path / "a"))
    run_sweep(SweepSpec(raw, axes), str(tmp_path / "b"))
    res = run_sweep(SweepSpec(raw, axes, workers=2), str(tmp_path / "c"))
    a, b, c = (_strip_wall((tmp_path / d / "sweep.csv").read_text()) for d in "abc")
    assert a == b == c
    assert a[0].startswith("# config_hash: ")
    assert len(res.rows) == 4 and res.columns[:2] == ["qudit_t1_ns", "coupling_mhz"]
    assert list(res.column("seed")) == [derive_seed(3, i) for i in range(4)]


def test_single_point_sweep_matches_optimize():
    cfg = _fast()
    res = run_sweep(SweepSpec(cfg.raw, (("qudit_t1_ns", [5000.0]),)))
    seeded = parse_config(dict(cfg.raw, optimizer=dict(cfg.raw["optimizer"],
                                                       seed=derive_seed(3, 0))))
    direct, _, _ = run_optimize(seeded, n_det_samples=2)
    assert res.rows[0][1] == direct.final_error
    assert res.rows[0][2] == direct.n_iterations


def test_point_failure_recorded():
    raw = _fast().raw
    res = run_sweep(SweepSpec(raw, (("gate_time_ns", [40.0, 4.0]),)))
    assert math.isfinite(res.rows[0][1])
    assert math.isnan(res.rows[1][1]) and res.rows[1][-1].startswith("failed:")


def test_table1_layout():
    cfg = _fast(table1={"detunings_mhz": [450.0], "couplings_mhz": [40.0],
                        "t1s_ns": [200.0, 40.0]},
                optimizer={"max_iterations": 2})
    res = run_table1(cfg)
    assert res.columns[:3] == ["delta2_mhz", "coupling2_mhz", "t1_2_ns"]
    assert [r[:3] for r in res.rows] == [[450.0, 40.0, 200.0], [450.0, 40.0, 40.0]]
    assert all(r[-1] != "failed" and math.isfinite(r[3]) for r in res.rows)


def test_random_targets(tmp_path):
    cfg = _fast(optimizer={"max_iterations": 3})
    res, summary = run_random_targets(cfg, 2, str(tmp_path))
    again, _ = run_random_targets(cfg, 2)
    assert [r[:5] for r in res.rows] == [r[:5] for r in again.rows]
    assert summary["n_targets"] == 2 and len(res.rows) == 2
    assert summary["max_over_u1"] == pytest.approx(summary["max_error"] / summary["u1_error"])
    assert (tmp_path / "random_targets_summary.toml").exists()
    one, s1 = run_random_targets(cfg, 1, reference=False)
    assert one.rows[0][:5] == res.rows[0][:5] and "u1_error" not in s1
    with pytest.raises(ConfigError):
        run_random_targets(cfg, 0)


def test_nonmarkov_from_pulse(tmp_path):
    cfg = _fast(nonmarkov={"n_samples": 30})
    run_optimize(cfg, str(tmp_path), n_det_samples=30)
    tr = run_nonmarkov(cfg, str(tmp_path / "pulse.csv"), str(tmp_path / "nm"))
    header, rows = read_csv(tmp_path / "determinant.csv")
    np.testing.assert_allclose(tr.det_abs, [float(r[1]) for r in rows], rtol=1e-10)
    assert (tmp_path / "nm" / "determinant.csv").exists()


def test_simulate(tmp_path):
    cfg = parse_config({"model": {"tls": [], "qudit_t1_ns": 20.0},
                        "control": {"ramp_time_ns": 0.0, "n_slices": 40, "gate_time_ns": 20.0},
                        "simulate": {"n_samples": 11, "initial_level": 1}})
    times, states, final, err = run_simulate(cfg, None, str(tmp_path))
    p1 = np.real([s[1, 1] for s in states])
    np.testing.assert_allclose(p1, np.exp(-times / 20.0), rtol=1e-9)
    header, rows = read_csv(tmp_path / "populations.csv")
    assert header[:3] == ["t_ns", "p0", "p1"] and len(rows) == 11
    with pytest.raises(ConfigError, match="initial_level"):
        run_simulate(parse_config({"simulate": {"initial_level": 7}}))
