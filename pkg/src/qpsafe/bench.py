"""Scenario configs, the batch runner, run metrics, and validation suites.

A scenario is one TOML file with nested sections (scenario, model,
controller, barrier, bounds, monitor, assert). run_scenario() executes
the closed loop deterministically and writes the trajectory CSV plus a
metrics JSON; run_suite() batches scenarios into a comparison table and
turns embedded assertions into a process exit code; validate() re-runs
the fast numerical oracles (Lyapunov residuals, QP brute force, finite
difference Lie derivatives, robust corner sufficiency, nominal
recovery) without touching any scenario.
"""

import concurrent.futures
import json
import os
import sys

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import certify, controllers, iolin, linalg, models, qp, robust, sim

OUTPUT_ROOT_ENV = "QPSAFE_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "qpsafe_runs"

_SCHEMA = {
    "scenario": {"name", "seed", "t_end", "ctrl_rate", "substeps", "x0",
                 "output_dir"},
    "model": {"builtin", "case", "target", "mass", "length", "true_mass",
              "true_length", "cart_mass", "load_mass", "damping", "spring",
              "dist_amp", "dist_hz", "hybrid", "restitution", "max_events"},
    "controller": {"variant", "eps", "p", "p2", "two_delta", "fallback",
                   "u_min", "u_max"},
    "barrier": {"x_max", "alpha_lift", "gamma", "coordinate"},
    "bounds": {"clf_d1", "clf_d2", "cbf_d1", "cbf_d2", "clf_d1_mode",
               "per_constraint"},
    "monitor": {"enabled", "w_bar"},
    "assert": {"min_h_ge", "min_h_lt", "max_qp_failures", "settle_time_le",
               "violation", "w_finite", "max_delta_le",
               "max_output_error_le"},
}

_POSITIVE_MODEL_KEYS = ("mass", "length", "true_mass", "true_length",
                        "cart_mass", "load_mass", "spring")
_NONNEGATIVE_MODEL_KEYS = ("damping", "dist_amp", "dist_hz")


class ConfigError(ValueError):
    """Invalid or missing scenario configuration."""


def _check_sections(data, path):
    for section, content in data.items():
        if section not in _SCHEMA:
            raise ConfigError("%s: unknown section [%s]" % (path, section))
        if not isinstance(content, dict):
            raise ConfigError("%s: [%s] must be a table" % (path, section))
        extra = set(content) - _SCHEMA[section]
        if extra:
            raise ConfigError("%s: unknown key %s in [%s]"
                              % (path, ", ".join(sorted(extra)), section))


class ScenarioConfig:
    """Validated scenario description, independent of any run state."""

    def __init__(self, data, name=None, path="<config>", base_dir="."):
        _check_sections(data, path)
        sc = data.get("scenario", {})
        self.name = str(sc.get("name", name or "scenario"))
        self.seed = int(sc.get("seed", 0))
        if "t_end" not in sc:
            raise ConfigError("%s: scenario.t_end is required" % path)
        self.t_end = float(sc["t_end"])
        self.ctrl_rate = float(sc.get("ctrl_rate", 100.0))
        self.substeps = int(sc.get("substeps", 10))
        if self.t_end <= 0 or self.ctrl_rate <= 0 or self.substeps < 1:
            raise ConfigError("%s: t_end, ctrl_rate, substeps must be "
                              "positive" % path)
        if "x0" not in sc:
            raise ConfigError("%s: scenario.x0 is required" % path)
        self.x0 = np.asarray(sc["x0"], dtype=float)
        self.output_dir = sc.get("output_dir")
        if self.output_dir is not None:
            self.output_dir = os.path.join(base_dir, str(self.output_dir))

        model = dict(data.get("model", {}))
        if "builtin" not in model:
            raise ConfigError("%s: model.builtin is required" % path)
        if model["builtin"] not in models.builtin_models():
            raise ConfigError("%s: unknown model %r" % (path,
                                                        model["builtin"]))
        for key in _POSITIVE_MODEL_KEYS:
            if key in model and not model[key] > 0:
                raise ConfigError("%s: model.%s must be positive"
                                  % (path, key))
        for key in _NONNEGATIVE_MODEL_KEYS:
            if key in model and model[key] < 0:
                raise ConfigError("%s: model.%s must be nonnegative"
                                  % (path, key))
        self.model = model

        ctrl = dict(data.get("controller", {}))
        for key in ("variant", "eps"):
            if key not in ctrl:
                raise ConfigError("%s: controller.%s is required"
                                  % (path, key))
        if (("u_min" in ctrl) != ("u_max" in ctrl)):
            raise ConfigError("%s: u_min and u_max come together" % path)
        self.controller = ctrl
        self.barrier = data.get("barrier")
        self.bounds = data.get("bounds")
        self.monitor_enabled = bool(data.get("monitor", {}).get("enabled",
                                                                False))
        self.w_bar = float(data.get("monitor", {}).get("w_bar", np.inf))
        self.asserts = dict(data.get("assert", {}))
        self.path = path

    @classmethod
    def from_file(cls, path):
        if not os.path.isfile(path):
            raise ConfigError("missing config: %s" % path)
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        name = os.path.splitext(os.path.basename(path))[0]
        return cls(data, name=name, path=path,
                   base_dir=os.path.dirname(os.path.abspath(path)))

    def build_pair(self):
        """Truth/nominal plant pair plus an optional hybrid spec."""
        model = dict(self.model)
        builtin = model.pop("builtin")
        hybrid = None
        if model.pop("hybrid", False):
            if builtin != "bouncing_mass":
                raise ConfigError("%s: hybrid mode is only available for "
                                  "bouncing_mass" % self.path)
            hybrid = models.bouncing_mass_hybrid(
                restitution=model.pop("restitution", 0.5),
                max_events=model.pop("max_events", 100))
        else:
            model.pop("restitution", None)
            model.pop("max_events", None)
        factory = models.builtin_models()[builtin]
        try:
            pair = factory(**model)
        except TypeError as exc:
            raise ConfigError("%s: bad model parameters: %s"
                              % (self.path, exc))
        return pair, hybrid

    def build_spec(self, nominal_model):
        ctrl = self.controller
        clf = certify.build_res_clf(nominal_model.m, float(ctrl["eps"]))
        constraints = []
        if "u_min" in ctrl:
            constraints = controllers.saturation(ctrl["u_min"],
                                                 ctrl["u_max"])
        cbf = None
        if self.barrier is not None:
            cbf = self._build_barrier(nominal_model)
        bounds = None
        if self.bounds is not None:
            bounds = self._build_bounds(len(constraints))
        return controllers.ControllerSpec(
            ctrl["variant"], clf, cbf=cbf, constraints=constraints,
            bounds=bounds, p=float(ctrl.get("p", controllers.
                                            DEFAULT_PENALTY)),
            p2=float(ctrl["p2"]) if "p2" in ctrl else None,
            two_delta=bool(ctrl.get("two_delta", False)),
            fallback=ctrl.get("fallback", "error"))

    def _build_barrier(self, nominal_model):
        bar = self.barrier
        if "x_max" not in bar:
            raise ConfigError("%s: barrier.x_max is required" % self.path)
        coord = int(bar.get("coordinate", 0))
        if not 0 <= coord < nominal_model.n:
            raise ConfigError("%s: barrier.coordinate out of range"
                              % self.path)
        x_max = float(bar["x_max"])
        grad0 = np.zeros(nominal_model.n)
        grad0[coord] = -1.0
        h, grad = certify.rd2_lift(
            lambda x: x_max - x[coord], lambda x: grad0,
            float(bar.get("alpha_lift", certify.DEFAULT_LIFT_ALPHA)))
        return certify.ReciprocalBarrier(
            h, grad, gamma=float(bar.get("gamma", certify.DEFAULT_GAMMA)))

    def _build_bounds(self, n_constraints):
        b = self.bounds
        per = b.get("per_constraint")
        if per is None:
            per = [(0.0, 0.0)] * n_constraints
        return robust.UncertaintyBounds(
            clf_d1=float(b.get("clf_d1", 0.0)),
            clf_d2=float(b.get("clf_d2", 0.0)),
            cbf_d1=float(b.get("cbf_d1", 0.0)),
            cbf_d2=float(b.get("cbf_d2", 0.0)),
            per_constraint=per,
            clf_d1_mode=b.get("clf_d1_mode", "constant"))


class RunMetrics:
    """Scalar summary of one closed-loop run."""

    def __init__(self, name, n_ticks, stop_reason, max_output_error,
                 settle_time, min_h, violation_time, max_delta, w_final,
                 theorem1_verdict, qp_failures, mean_solve_time,
                 max_solve_time):
        self.name = name
        self.n_ticks = n_ticks
        self.stop_reason = stop_reason
        self.max_output_error = max_output_error
        self.settle_time = settle_time
        self.min_h = min_h
        self.violation_time = violation_time
        self.max_delta = max_delta
        self.w_final = w_final
        self.theorem1_verdict = theorem1_verdict
        self.qp_failures = qp_failures
        self.mean_solve_time = mean_solve_time
        self.max_solve_time = max_solve_time

    def as_dict(self):
        out = dict(self.__dict__)
        for key, val in out.items():
            if isinstance(val, float) and not np.isfinite(val):
                out[key] = None
        return out


def _diag_column(traj, name):
    return np.array([sim._diag_value(d, name) for d in traj.diagnostics])


def _first_time(times, mask):
    idx = np.nonzero(mask)[0]
    return float(times[idx[0]]) if idx.size else None


def compute_metrics(cfg, traj, pair, clf, monitor):
    """Summarize a trajectory; barrier stats come from the same values
    that land in the CSV h column (metrics honesty)."""
    times = np.asarray(traj.times)
    states = [pair.observe(x) for x in traj.states]
    errs = np.array([np.max(np.abs(pair.nominal.y(x))) for x in states])
    err_final = float(np.max(np.abs(pair.nominal.y(
        pair.observe(traj.final_state)))))
    max_err = float(max(np.max(errs), err_final)) if errs.size else err_final
    settle = None
    if errs.size and errs[0] > 0.0:
        settle = _first_time(times, errs < 0.02 * errs[0])
    elif errs.size:
        settle = 0.0

    h_col = _diag_column(traj, "h")
    have_h = np.isfinite(h_col)
    min_h = float(np.min(h_col[have_h])) if np.any(have_h) else None
    violation = _first_time(times, have_h & (h_col < 0.0))

    delta_col = _diag_column(traj, "delta")
    have_d = np.isfinite(delta_col)
    max_delta = float(np.max(delta_col[have_d])) if np.any(have_d) else None

    status = [sim._diag_status(d) for d in traj.diagnostics]
    qp_failures = sum(1 for s in status
                      if ("infeasible" in s or "iteration_cap" in s
                          or s == "controller_error"))

    solve_col = _diag_column(traj, "solve_time")
    have_s = np.isfinite(solve_col)
    mean_solve = float(np.mean(solve_col[have_s])) if np.any(have_s) \
        else None
    max_solve = float(np.max(solve_col[have_s])) if np.any(have_s) else None

    w_final = None
    verdict = None
    if monitor is not None:
        w_final = float(monitor.w)
        verdict = _theorem1_verdict(cfg, traj, pair, clf, monitor)

    return RunMetrics(
        name=cfg.name, n_ticks=len(traj), stop_reason=traj.stop_reason,
        max_output_error=max_err, settle_time=settle, min_h=min_h,
        violation_time=violation, max_delta=max_delta, w_final=w_final,
        theorem1_verdict=verdict, qp_failures=qp_failures,
        mean_solve_time=mean_solve, max_solve_time=max_solve)


def _theorem1_verdict(cfg, traj, pair, clf, monitor):
    """Re-check the exponential bound at every tick by replaying w."""
    replay = certify.RelaxMonitor(monitor.rate, monitor.v0,
                                  monitor.eta0_norm, w_bar=monitor.w_bar)
    dt = 1.0 / cfg.ctrl_rate
    v_col = _diag_column(traj, "v_eps")
    d_col = _diag_column(traj, "d_eps")
    holds = True
    for i, t in enumerate(traj.times):
        if not np.isfinite(v_col[i]):
            continue
        x_obs = pair.observe(traj.states[i])
        eta = iolin.transverse(iolin.lie_bundle(pair.nominal, x_obs)).eta
        if not certify.theorem1_bound_check(replay, clf, eta, t)["holds"]:
            holds = False
        if np.isfinite(d_col[i]) and v_col[i] > certify.V_FLOOR:
            replay.w += (d_col[i] / v_col[i]) * dt
    return "holds" if holds else "violated"


def resolve_output_dir(cfg, output_root=None):
    if output_root is not None:
        return os.path.join(output_root, cfg.name)
    if cfg.output_dir is not None:
        return cfg.output_dir
    root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
    return os.path.join(root, cfg.name)


def run_scenario(cfg, output_root=None):
    """Execute one scenario; write CSV + JSON; return (traj, metrics)."""
    pair, hybrid = cfg.build_pair()
    spec = cfg.build_spec(pair.nominal)
    x0 = models.lift_initial_state(pair, cfg.x0)
    monitor = None
    on_event = None
    if cfg.monitor_enabled:
        eta0 = iolin.transverse(iolin.lie_bundle(pair.nominal,
                                                 cfg.x0)).eta
        monitor = certify.RelaxMonitor.for_clf(spec.clf, eta0,
                                               w_bar=cfg.w_bar)
        if hybrid is not None:
            on_event = lambda t, x_minus, x_plus: monitor.log_event(t)
    controller = controllers.Controller(spec, pair.nominal, monitor=monitor,
                                        tick_dt=1.0 / cfg.ctrl_rate)
    traj = sim.simulate(pair, controller, x0, cfg.t_end,
                        ctrl_rate=cfg.ctrl_rate, substeps=cfg.substeps,
                        hybrid=hybrid, on_event=on_event)
    metrics = compute_metrics(cfg, traj, pair, spec.clf, monitor)

    out_dir = resolve_output_dir(cfg, output_root)
    os.makedirs(out_dir, exist_ok=True)
    sim.write_trajectory_csv(traj, os.path.join(
        out_dir, "%s_trajectory.csv" % cfg.name))
    if traj.events:
        sim.write_events_csv(traj, os.path.join(
            out_dir, "%s_events.csv" % cfg.name))
    with open(os.path.join(out_dir, "%s_metrics.json" % cfg.name),
              "w") as fh:
        json.dump(metrics.as_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return traj, metrics


def check_assertions(cfg, metrics):
    """Evaluate the [assert] section; returns failure descriptions."""
    failures = []

    def fail(key, text):
        failures.append("%s: %s %s" % (cfg.name, key, text))

    a = cfg.asserts
    if "min_h_ge" in a:
        if metrics.min_h is None or metrics.min_h < a["min_h_ge"]:
            fail("min_h_ge", "min_h=%s < %g" % (metrics.min_h,
                                                a["min_h_ge"]))
    if "min_h_lt" in a:
        if metrics.min_h is None or not metrics.min_h < a["min_h_lt"]:
            fail("min_h_lt", "min_h=%s not < %g" % (metrics.min_h,
                                                    a["min_h_lt"]))
    if "max_qp_failures" in a and metrics.qp_failures > a["max_qp_failures"]:
        fail("max_qp_failures", "%d > %d" % (metrics.qp_failures,
                                             a["max_qp_failures"]))
    if "settle_time_le" in a:
        if metrics.settle_time is None \
                or metrics.settle_time > a["settle_time_le"]:
            fail("settle_time_le", "settle_time=%s" % metrics.settle_time)
    if "violation" in a:
        has = metrics.violation_time is not None
        if has != bool(a["violation"]):
            fail("violation", "violation_time=%s" % metrics.violation_time)
    if "w_finite" in a and a["w_finite"]:
        if metrics.w_final is None or not np.isfinite(metrics.w_final):
            fail("w_finite", "w_final=%s" % metrics.w_final)
    if "max_delta_le" in a:
        if metrics.max_delta is not None \
                and metrics.max_delta > a["max_delta_le"]:
            fail("max_delta_le", "max_delta=%g" % metrics.max_delta)
    if "max_output_error_le" in a \
            and metrics.max_output_error > a["max_output_error_le"]:
        fail("max_output_error_le", "max=%g" % metrics.max_output_error)
    return failures


def _suite_worker(job):
    path, output_root = job
    cfg = ScenarioConfig.from_file(path)
    _, metrics = run_scenario(cfg, output_root=output_root)
    return cfg.name, metrics, check_assertions(cfg, metrics)


def _expand_suite_paths(paths):
    out = []
    for p in paths:
        if os.path.isdir(p):
            found = sorted(
                os.path.join(p, f) for f in os.listdir(p)
                if f.endswith(".toml"))
            out.extend(found)
        elif os.path.isfile(p):
            out.append(p)
        else:
            raise ConfigError("missing config: %s" % p)
    return out


_TABLE_COLUMNS = (
    ("scenario", "name", "%s"),
    ("ticks", "n_ticks", "%d"),
    ("max|y|", "max_output_error", "%.4g"),
    ("settle_s", "settle_time", "%.3g"),
    ("min_h", "min_h", "%.4g"),
    ("viol_s", "violation_time", "%.4g"),
    ("max_delta", "max_delta", "%.3g"),
    ("w", "w_final", "%.3g"),
    ("thm1", "theorem1_verdict", "%s"),
    ("qp_fail", "qp_failures", "%d"),
    ("t_solve_max", "max_solve_time", "%.2e"),
)


class SuiteResult:
    def __init__(self, rows, failures):
        self.rows = rows
        self.failures = failures

    @property
    def exit_code(self):
        return 1 if self.failures else 0

    def table(self):
        header = [c[0] for c in _TABLE_COLUMNS]
        body = []
        for name, metrics, failures in self.rows:
            cells = []
            for _, attr, fmt in _TABLE_COLUMNS:
                val = getattr(metrics, attr)
                cells.append("-" if val is None else fmt % val)
            if failures:
                cells[0] = cells[0] + " [FAIL]"
            body.append(cells)
        widths = [max(len(h), *(len(r[i]) for r in body)) if body
                  else len(h) for i, h in enumerate(header)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for cells in body:
            lines.append("  ".join(c.ljust(w)
                                   for c, w in zip(cells, widths)))
        return "\n".join(lines)


def run_suite(paths, output_root=None, jobs=1):
    """Run many scenarios; collect metrics and assertion failures."""
    config_paths = _expand_suite_paths(paths)
    jobs = max(1, int(jobs))
    items = [(p, output_root) for p in config_paths]
    if jobs > 1 and len(items) > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=jobs) as pool:
            results = list(pool.map(_suite_worker, items))
    else:
        results = [_suite_worker(job) for job in items]
    failures = [f for _, _, fs in results for f in fs]
    return SuiteResult(results, failures)


class ValidationReport:
    def __init__(self, checks):
        self.checks = checks

    @property
    def ok(self):
        return all(c["passed"] for c in self.checks)

    def format(self):
        lines = []
        for c in self.checks:
            lines.append("%-24s %s  worst=%.3e  tol=%.3e"
                         % (c["name"], "PASS" if c["passed"] else "FAIL",
                            c["worst"], c["tol"]))
        lines.append("validation %s" % ("PASSED" if self.ok else "FAILED"))
        return "\n".join(lines)


def _random_small_qp(rng):
    n = int(rng.integers(2, 5))
    mi = int(rng.integers(0, 7))
    me = int(rng.integers(0, n))
    mat = rng.normal(size=(n, n))
    h = mat.T @ mat + 0.5 * np.eye(n)
    f = rng.normal(size=n)
    a_ineq = rng.normal(size=(mi, n)) if mi else None
    b_ineq = rng.normal(size=mi) + 0.5 if mi else None
    a_eq = rng.normal(size=(me, n)) if me else None
    b_eq = rng.normal(size=me) if me else None
    return qp.QpProblem(h, f, a_ineq, b_ineq, a_eq, b_eq)


def _check_lyapunov(rng, tol, perturb):
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 9))
        a = rng.normal(size=(n, n)) - (2.0 + n) * np.eye(n)
        mat = rng.normal(size=(n, n))
        q = mat.T @ mat + 0.5 * np.eye(n)
        p = linalg.solve_lyapunov(a, q)
        if perturb:
            p = p + perturb * np.eye(n)
        scale = max(1.0, float(np.max(np.abs(q))))
        res = float(np.max(np.abs(a.T @ p + p @ a + q))) / scale
        if not linalg.is_positive_definite(p):
            res = max(res, np.inf)
        worst = max(worst, res)
    return {"name": "lyapunov_residual", "worst": worst, "tol": tol,
            "passed": worst <= tol}


def _check_qp_oracle(rng, tol):
    worst = 0.0
    for _ in range(150):
        p = _random_small_qp(rng)
        got = qp.solve_qp(p)
        want = qp.solve_qp_by_enumeration(p)
        if got.status != want.status:
            worst = max(worst, np.inf)
            continue
        if got.status == "optimal":
            scale = 1.0 + float(np.max(np.abs(want.z)))
            worst = max(worst, float(np.max(np.abs(got.z - want.z)))
                        / scale)
    return {"name": "qp_vs_enumeration", "worst": worst, "tol": tol,
            "passed": worst <= tol}


def _check_fd_lie(rng, tol):
    worst = 0.0
    pairs = [models.spring_cart(case=c) for c in (1, 4)] \
        + [models.inverted_pendulum(target=0.3), models.bouncing_mass()]
    for pair in pairs:
        for _ in range(20):
            x = rng.uniform(-0.5, 0.5, size=pair.nominal.n)
            lb = iolin.lie_bundle(pair.nominal, x)
            fd = iolin.fd_lie_oracle(pair.nominal, x)
            for name in ("y", "ydot", "lf2y", "lglfy"):
                a = getattr(lb, name)
                b = getattr(fd, name)
                scale = 1.0 + float(np.max(np.abs(a)))
                worst = max(worst,
                            float(np.max(np.abs(a - b))) / scale)
    return {"name": "fd_lie_oracle", "worst": worst, "tol": tol,
            "passed": worst <= tol}


def _check_robust_corners(rng, tol):
    worst = 0.0
    for _ in range(200):
        sol = {"mu_c": float(rng.normal(scale=3.0))}
        pair = (float(rng.uniform(0, 2)), float(rng.uniform(0, 0.95)))
        corner = robust.corner_uncertainty_margin("constraint", sol, pair)
        sampled = robust.sample_uncertainty_margin("constraint", sol, pair,
                                                   n_samples=500)
        worst = max(worst, abs(corner - sampled))
    return {"name": "robust_corner_max", "worst": worst, "tol": tol,
            "passed": worst <= tol}


def _check_nominal_recovery(rng, tol):
    model = models.inverted_pendulum().nominal
    clf = certify.build_res_clf(1, 0.5)
    srob = controllers.ControllerSpec("RobustClfQp", clf,
                                      bounds=robust.UncertaintyBounds())
    snom = controllers.ControllerSpec("ClfQp", clf)
    worst = 0.0
    for _ in range(20):
        x = np.array([rng.uniform(-1, 1), rng.uniform(-2, 2)])
        u_r, _ = controllers.control(srob, x, model)
        u_n, _ = controllers.control(snom, x, model)
        worst = max(worst, float(np.max(np.abs(u_r - u_n))))
    return {"name": "nominal_recovery", "worst": worst, "tol": tol,
            "passed": worst <= tol}


def validate(tol_scale=1.0, lyapunov_perturb=0.0, seed=0):
    """Fast numerical oracle suites; tol_scale < 1 tightens thresholds."""
    if tol_scale <= 0:
        raise ValueError("tol_scale must be positive")
    rng = np.random.default_rng(seed)
    checks = [
        _check_lyapunov(rng, 1e-10 * tol_scale, lyapunov_perturb),
        _check_qp_oracle(rng, 1e-7 * tol_scale),
        _check_fd_lie(rng, 1e-5 * tol_scale),
        _check_robust_corners(rng, 1e-12 * tol_scale),
        _check_nominal_recovery(rng, 1e-8 * tol_scale),
    ]
    return ValidationReport(checks)


def dump_qp(cfg, tick, output_root=None):
    """Write the full QP assembled at one tick of a scenario run."""
    if tick < 0:
        raise ValueError("tick must be nonnegative")
    horizon = int(round(cfg.t_end * cfg.ctrl_rate))
    if tick >= horizon:
        raise ValueError("tick %d beyond the scenario horizon (%d ticks)"
                         % (tick, horizon))
    pair, hybrid = cfg.build_pair()
    spec = cfg.build_spec(pair.nominal)
    x0 = models.lift_initial_state(pair, cfg.x0)
    controller = controllers.Controller(spec, pair.nominal)
    traj = sim.simulate(pair, controller, x0, (tick + 1) / cfg.ctrl_rate,
                        ctrl_rate=cfg.ctrl_rate, substeps=cfg.substeps,
                        hybrid=hybrid)
    if tick >= len(traj):
        raise ValueError("run stopped after %d ticks (%s), tick %d not "
                         "reached" % (len(traj), traj.stop_reason, tick))
    x_obs = pair.observe(traj.states[tick])
    problem = controllers.assemble(spec, x_obs, pair.nominal,
                                   t=traj.times[tick])
    out_dir = resolve_output_dir(cfg, output_root)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "%s_tick%d_qp.txt" % (cfg.name, tick))
    qp.dump_problem(problem, path)
    return path


def bench_qp(repeat=200, seed=0):
    """Time both solver backends on controller-scale tick QPs."""
    rng = np.random.default_rng(seed)
    pair = models.spring_cart(case=2)
    clf = certify.build_res_clf(1, 0.2)
    cons = controllers.saturation(-50.0, 50.0)
    cons.append(controllers.PlantConstraint([1.0], 30.0, label="drive"))
    bounds = robust.UncertaintyBounds(
        clf_d1=3.0, clf_d2=0.7, cbf_d1=12000.0, cbf_d2=0.7,
        per_constraint=[(0.0, 0.0), (0.0, 0.0), (5.0, 0.3)],
        clf_d1_mode="state_scaled")
    h, grad = certify.rd2_lift(lambda x: 0.01 - x[0],
                               lambda x: np.array([-1.0, 0.0]), 5.0)
    cbf = certify.ReciprocalBarrier(h, grad, gamma=1e6)
    spec = controllers.ControllerSpec(
        "RobustCbfClfQpRobustConstraints", clf, cbf=cbf, bounds=bounds,
        constraints=cons, p=1e2)
    problems = []
    while len(problems) < 25:
        x = np.array([rng.uniform(-0.08, -0.005), rng.uniform(-0.05, 0.05)])
        if cbf.h(x) <= 0:
            continue
        problems.append(controllers.reduced_problem(spec, x, pair.nominal))
    out = {}
    for backend in qp.available_backends():
        for p in problems:
            qp.solve_qp(p, backend=backend)
        times = []
        for i in range(repeat):
            sol = qp.solve_qp(problems[i % len(problems)], backend=backend)
            times.append(sol.solve_time)
        times = np.array(times)
        out[backend] = {
            "solves": int(times.size),
            "mean_s": float(np.mean(times)),
            "p95_s": float(np.percentile(times, 95)),
            "max_s": float(np.max(times)),
        }
    return out
