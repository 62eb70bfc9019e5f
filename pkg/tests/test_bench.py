"""Scenario configs, the batch runner, metrics honesty, and validation."""

import json
import os

import numpy as np
import pytest

from qpsafe import bench, qp
from qpsafe.bench import (ConfigError, RunMetrics, ScenarioConfig,
                          check_assertions, resolve_output_dir, run_scenario,
                          run_suite, validate)

CASE1 = """
[scenario]
t_end = 0.5
x0 = [0.0, 0.0]

[model]
builtin = "spring_cart"
case = 1

[controller]
variant = "CbfClfQp"
eps = 0.2
p = 1e2

[barrier]
x_max = 0.01
alpha_lift = 5.0
gamma = 1e6
"""


def write_config(tmp_path, text, name="scenario.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_unknown_section_rejected(tmp_path):
    path = write_config(tmp_path, CASE1 + "\n[nonsense]\nfoo = 1\n")
    with pytest.raises(ConfigError, match="unknown section"):
        ScenarioConfig.from_file(path)


def test_unknown_key_rejected(tmp_path):
    path = write_config(tmp_path, CASE1.replace("case = 1",
                                                "case = 1\nwheels = 4"))
    with pytest.raises(ConfigError, match="unknown key wheels"):
        ScenarioConfig.from_file(path)


def test_required_keys(tmp_path):
    for cut, msg in (("t_end = 0.5", "t_end"), ("x0 = [0.0, 0.0]", "x0"),
                     ('builtin = "spring_cart"', "builtin"),
                     ('variant = "CbfClfQp"', "variant"),
                     ("eps = 0.2", "eps")):
        path = write_config(tmp_path, CASE1.replace(cut, ""))
        with pytest.raises(ConfigError, match=msg):
            ScenarioConfig.from_file(path)


def test_half_open_input_box_rejected(tmp_path):
    path = write_config(tmp_path, CASE1.replace("p = 1e2",
                                                "p = 1e2\nu_min = -5.0"))
    with pytest.raises(ConfigError, match="u_min and u_max"):
        ScenarioConfig.from_file(path)


def test_bad_model_parameters(tmp_path):
    path = write_config(tmp_path, CASE1.replace("case = 1",
                                                "case = 1\nmass = -1.0"))
    with pytest.raises(ConfigError, match="must be positive"):
        ScenarioConfig.from_file(path)
    path = write_config(tmp_path, CASE1.replace("case = 1",
                                                "case = 1\nlength = 2.0"))
    cfg = ScenarioConfig.from_file(path)
    with pytest.raises(ConfigError, match="bad model parameters"):
        cfg.build_pair()


def test_unknown_builtin_and_missing_file(tmp_path):
    path = write_config(tmp_path, CASE1.replace('"spring_cart"', '"rocket"'))
    with pytest.raises(ConfigError, match="unknown model"):
        ScenarioConfig.from_file(path)
    with pytest.raises(ConfigError, match="missing config"):
        ScenarioConfig.from_file(str(tmp_path / "nope.toml"))


def test_hybrid_only_for_bouncing(tmp_path):
    path = write_config(tmp_path, CASE1.replace("case = 1",
                                                "case = 1\nhybrid = true"))
    with pytest.raises(ConfigError, match="bouncing_mass"):
        ScenarioConfig.from_file(path).build_pair()


def test_run_writes_artifacts_and_metrics_match_csv(tmp_path):
    path = write_config(tmp_path, CASE1, "short_case1.toml")
    cfg = ScenarioConfig.from_file(path)
    traj, metrics = run_scenario(cfg, output_root=str(tmp_path / "out"))
    out = tmp_path / "out" / "short_case1"
    csv_path = out / "short_case1_trajectory.csv"
    json_path = out / "short_case1_metrics.json"
    assert csv_path.is_file() and json_path.is_file()

    lines = csv_path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    assert len(rows) == metrics.n_ticks == 50

    # Metrics honesty: the reported minimum must equal the h column as
    # re-read from disk, not a separately computed value.
    h_idx = header.index("h")
    h_col = np.array([float(r[h_idx]) for r in rows])
    assert metrics.min_h == pytest.approx(np.min(h_col), abs=0.0)

    stored = json.loads(json_path.read_text())
    assert stored["min_h"] == metrics.min_h
    assert stored["qp_failures"] == 0
    assert stored["stop_reason"] is None


def test_reruns_are_byte_identical(tmp_path):
    path = write_config(tmp_path, CASE1, "det.toml")
    cfg = ScenarioConfig.from_file(path)
    run_scenario(cfg, output_root=str(tmp_path / "a"))
    run_scenario(cfg, output_root=str(tmp_path / "b"))
    a = (tmp_path / "a" / "det" / "det_trajectory.csv").read_bytes()
    b = (tmp_path / "b" / "det" / "det_trajectory.csv").read_bytes()
    assert a == b


INFEASIBLE = """
[scenario]
t_end = 0.5
x0 = [0.0, 0.0]

[model]
builtin = "inverted_pendulum"

[controller]
variant = "RobustClfQp"
eps = 0.5

[bounds]
clf_d1 = 1.0
"""


def test_error_stop_keeps_partial_run(tmp_path):
    # Constant-offset CLF uncertainty is infeasible at the target (the
    # robustified decay row needs mu_v <= -d1 while lgv pins mu_v = 0).
    path = write_config(tmp_path, INFEASIBLE, "stuck.toml")
    cfg = ScenarioConfig.from_file(path)
    traj, metrics = run_scenario(cfg, output_root=str(tmp_path / "out"))
    assert traj.stop_reason == "controller_error"
    assert metrics.stop_reason == "controller_error"
    assert metrics.n_ticks == 1
    assert metrics.qp_failures == 1
    csv_path = tmp_path / "out" / "stuck" / "stuck_trajectory.csv"
    assert csv_path.is_file()
    assert "controller_error" in csv_path.read_text()


def test_settle_time_semantics(tmp_path):
    text = """
[scenario]
t_end = 4.0
x0 = [0.5, 0.0]

[model]
builtin = "inverted_pendulum"

[controller]
variant = "ClfQp"
eps = 0.5
"""
    path = write_config(tmp_path, text, "settle.toml")
    cfg = ScenarioConfig.from_file(path)
    traj, metrics = run_scenario(cfg, output_root=str(tmp_path / "out"))
    assert metrics.settle_time is not None
    k = int(round(metrics.settle_time * cfg.ctrl_rate))
    errs = np.array([abs(x[0]) for x in traj.states])
    assert errs[k] < 0.02 * errs[0]
    assert np.all(errs[:k] >= 0.02 * errs[0])


def test_clock_states_lifted(tmp_path):
    text = CASE1.replace("case = 1", "case = 3").replace("t_end = 0.5",
                                                         "t_end = 0.1")
    path = write_config(tmp_path, text, "clock.toml")
    cfg = ScenarioConfig.from_file(path)
    traj, _ = run_scenario(cfg, output_root=str(tmp_path / "out"))
    x0 = traj.states[0]
    assert x0.shape == (4,)
    assert np.array_equal(x0, [0.0, 0.0, 0.0, 1.0])
    # The clock stays on the unit circle while driving the disturbance.
    s, c = traj.final_state[2], traj.final_state[3]
    assert s * s + c * c == pytest.approx(1.0, abs=1e-9)


def _metrics(**over):
    base = dict(name="m", n_ticks=10, stop_reason=None,
                max_output_error=0.02, settle_time=1.0, min_h=0.001,
                violation_time=None, max_delta=0.1, w_final=2.0,
                theorem1_verdict="holds", qp_failures=0,
                mean_solve_time=1e-4, max_solve_time=2e-4)
    base.update(over)
    return RunMetrics(**base)


def _cfg_with_asserts(**asserts):
    data = {"scenario": {"t_end": 1.0, "x0": [0.0, 0.0], "name": "m"},
            "model": {"builtin": "inverted_pendulum"},
            "controller": {"variant": "ClfQp", "eps": 0.5},
            "assert": asserts}
    return ScenarioConfig(data)


def test_assertion_checks():
    assert check_assertions(_cfg_with_asserts(min_h_ge=-1e-6), _metrics()) \
        == []
    assert check_assertions(_cfg_with_asserts(min_h_ge=0.01), _metrics())
    assert check_assertions(_cfg_with_asserts(min_h_lt=0.0), _metrics())
    assert not check_assertions(_cfg_with_asserts(min_h_lt=0.0),
                                _metrics(min_h=-0.2))
    assert check_assertions(_cfg_with_asserts(violation=True), _metrics())
    assert not check_assertions(_cfg_with_asserts(violation=True),
                                _metrics(violation_time=0.5))
    assert check_assertions(_cfg_with_asserts(max_qp_failures=0),
                            _metrics(qp_failures=2))
    assert check_assertions(_cfg_with_asserts(settle_time_le=0.5),
                            _metrics())
    assert check_assertions(_cfg_with_asserts(settle_time_le=0.5),
                            _metrics(settle_time=None))
    assert check_assertions(_cfg_with_asserts(w_finite=True),
                            _metrics(w_final=None))
    assert check_assertions(_cfg_with_asserts(max_delta_le=0.01),
                            _metrics())
    assert not check_assertions(_cfg_with_asserts(max_delta_le=0.01),
                                _metrics(max_delta=None))
    assert check_assertions(_cfg_with_asserts(max_output_error_le=0.01),
                            _metrics())


def test_non_finite_metrics_serialize_as_null():
    m = _metrics(w_final=float("inf"), min_h=float("nan"))
    d = m.as_dict()
    assert d["w_final"] is None and d["min_h"] is None
    json.dumps(d)


def test_output_dir_precedence(tmp_path, monkeypatch):
    cfg = _cfg_with_asserts()
    monkeypatch.delenv(bench.OUTPUT_ROOT_ENV, raising=False)
    assert resolve_output_dir(cfg) == os.path.join("qpsafe_runs", "m")
    monkeypatch.setenv(bench.OUTPUT_ROOT_ENV, str(tmp_path / "env"))
    assert resolve_output_dir(cfg) == str(tmp_path / "env" / "m")
    assert resolve_output_dir(cfg, output_root="given") \
        == os.path.join("given", "m")
    data = {"scenario": {"t_end": 1.0, "x0": [0.0], "output_dir": "here"},
            "model": {"builtin": "inverted_pendulum"},
            "controller": {"variant": "ClfQp", "eps": 0.5}}
    cfg2 = ScenarioConfig(data, base_dir=str(tmp_path))
    assert resolve_output_dir(cfg2) == os.path.join(str(tmp_path), "here")
    assert resolve_output_dir(cfg2, output_root="given") \
        == os.path.join("given", "scenario")


def test_suite_runs_and_flags_failures(tmp_path):
    ok = write_config(tmp_path, CASE1 + "\n[assert]\nmin_h_ge = -1e-6\n",
                      "a_ok.toml")
    bad = write_config(tmp_path, CASE1 + "\n[assert]\nmin_h_ge = 0.5\n",
                       "b_bad.toml")
    result = run_suite([ok, bad], output_root=str(tmp_path / "out"))
    assert result.exit_code == 1
    assert len(result.rows) == 2
    assert len(result.failures) == 1
    table = result.table()
    assert "a_ok" in table and "b_bad [FAIL]" in table


def test_suite_expands_directories(tmp_path):
    write_config(tmp_path, CASE1, "one.toml")
    write_config(tmp_path, CASE1, "two.toml")
    (tmp_path / "notes.txt").write_text("ignored")
    result = run_suite([str(tmp_path)], output_root=str(tmp_path / "out"))
    assert [name for name, _, _ in result.rows] == ["one", "two"]
    assert result.exit_code == 0
    with pytest.raises(ConfigError, match="missing config"):
        run_suite([str(tmp_path / "gone.toml")])


def test_suite_parallel_matches_serial(tmp_path):
    paths = [write_config(tmp_path, CASE1, "p%d.toml" % i)
             for i in range(3)]
    serial = run_suite(paths, output_root=str(tmp_path / "s"), jobs=1)
    parallel = run_suite(paths, output_root=str(tmp_path / "p"), jobs=3)
    for (_, ms, _), (_, mp) in zip(
            [(n, m, f) for n, m, f in serial.rows],
            [(n, m) for n, m, _ in parallel.rows]):
        assert ms.min_h == mp.min_h
        assert ms.n_ticks == mp.n_ticks


def test_validate_passes_and_perturbation_fails():
    report = validate()
    assert report.ok
    names = [c["name"] for c in report.checks]
    assert names == ["lyapunov_residual", "qp_vs_enumeration",
                     "fd_lie_oracle", "robust_corner_max",
                     "nominal_recovery"]
    assert "PASSED" in report.format()

    broken = validate(lyapunov_perturb=1e-6)
    assert not broken.ok
    assert [c["name"] for c in broken.checks if not c["passed"]] \
        == ["lyapunov_residual"]
    assert "FAILED" in broken.format()

    with pytest.raises(ValueError, match="tol_scale"):
        validate(tol_scale=0.0)
    assert not validate(tol_scale=1e-16).ok


def test_dump_qp_round_trips(tmp_path):
    path = write_config(tmp_path, CASE1, "dump.toml")
    cfg = ScenarioConfig.from_file(path)
    out = bench.dump_qp(cfg, 3, output_root=str(tmp_path / "out"))
    assert out.endswith("dump_tick3_qp.txt")
    p = qp.load_problem(out)
    assert p.var_names == ["u0", "mu0", "delta"]
    assert p.ineq_labels == ["clf", "cbf"]
    assert p.eq_labels == ["io0"]
    sol = qp.solve_qp(p)
    assert sol.status == "optimal"
    with pytest.raises(ValueError, match="nonnegative"):
        bench.dump_qp(cfg, -1)
    with pytest.raises(ValueError, match="beyond the scenario horizon"):
        bench.dump_qp(cfg, 10000, output_root=str(tmp_path / "out"))


def test_bench_qp_times_every_backend():
    stats = bench.bench_qp(repeat=10)
    assert set(stats) == set(qp.available_backends())
    for row in stats.values():
        assert row["solves"] == 10
        assert 0.0 < row["mean_s"] <= row["max_s"]
        assert row["p95_s"] <= row["max_s"]
