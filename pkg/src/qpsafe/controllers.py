"""Per-tick QP controllers built from CLF, CBF, and robust row machinery.

Six variants share one assembly: a min-norm virtual input mu with an
optional relaxation delta, the IO-linearization equality tying u to mu,
barrier and plant-constraint rows, and (for robust variants) the two-row
min-max reductions with their coupling equalities.

assemble() exposes the full decision vector
    [u (m); mu (m); mu_v?; mu_b?; mu_c? (k); delta? (1 or 2)]
for inspection and dump tooling. control() solves an equivalent reduced
QP in (mu, delta) only, eliminating u and the coupling variables
analytically, and maps the solution back to the physical input.
"""

import numpy as np

from . import certify, iolin, qp, robust

DEFAULT_PENALTY = 1e4
U_REGULARIZATION = 1e-10
ACTIVE_SET_TOL = 1e-7
ROBUST_MARGIN_TOL = 1e-9

VARIANTS = {
    "ClfQp": {
        "relaxed": False, "robust_clf": False, "cbf": None,
        "constraints": None},
    "ClfQpConstraints": {
        "relaxed": True, "robust_clf": False, "cbf": None,
        "constraints": "nominal"},
    "CbfClfQp": {
        "relaxed": True, "robust_clf": False, "cbf": "nominal",
        "constraints": "nominal"},
    "RobustClfQp": {
        "relaxed": False, "robust_clf": True, "cbf": None,
        "constraints": None},
    "RobustClfQpConstraints": {
        "relaxed": True, "robust_clf": True, "cbf": None,
        "constraints": "exact_only"},
    "RobustCbfClfQpRobustConstraints": {
        "relaxed": True, "robust_clf": True, "cbf": "robust",
        "constraints": "robust"},
}

FALLBACKS = ("error", "hold", "saturate")


class ControllerError(RuntimeError):
    """QP failure surfaced under the error-stop fallback policy."""


class PlantConstraint:
    """One linear input constraint a(x) . u <= b(x).

    a and b may be constants or callables of the state. Constraints whose
    coefficients do not involve the model (pure input bounds) should set
    model_independent=True: mismatch cannot perturb them, so robust
    variants keep them as exact rows.
    """

    def __init__(self, a, b, model_independent=False, label="limit"):
        self._a = a if callable(a) else np.atleast_1d(
            np.asarray(a, dtype=float))
        self._b = b if callable(b) else float(b)
        self.model_independent = bool(model_independent)
        self.label = str(label)

    def row(self, x):
        a = self._a(x) if callable(self._a) else self._a
        b = self._b(x) if callable(self._b) else self._b
        return np.atleast_1d(np.asarray(a, dtype=float)), float(b)


def saturation(u_min, u_max):
    """Box input bounds as model-independent constraints, one row each."""
    u_min = np.atleast_1d(np.asarray(u_min, dtype=float))
    u_max = np.atleast_1d(np.asarray(u_max, dtype=float))
    if u_min.shape != u_max.shape:
        raise ValueError("u_min and u_max must have the same shape")
    if np.any(u_min > u_max):
        raise ValueError("u_min exceeds u_max")
    m = u_min.size
    out = []
    for j in range(m):
        e = np.zeros(m)
        e[j] = 1.0
        out.append(PlantConstraint(e.copy(), u_max[j],
                                   model_independent=True,
                                   label="u%d_max" % j))
        out.append(PlantConstraint(-e, -u_min[j],
                                   model_independent=True,
                                   label="u%d_min" % j))
    return out


class ControllerSpec:
    """Immutable description of one controller variant.

    p penalizes the CLF relaxation delta; two_delta switches the robust
    relaxed CLF to separate (delta_1, delta_2) on the two min-max rows
    with penalties (p, p2). fallback picks the infeasibility policy.
    """

    def __init__(self, variant, clf, cbf=None, constraints=None, bounds=None,
                 p=DEFAULT_PENALTY, p2=None, two_delta=False,
                 fallback="error"):
        if variant not in VARIANTS:
            raise ValueError("unknown variant %r (choose from %s)"
                             % (variant, ", ".join(sorted(VARIANTS))))
        rules = VARIANTS[variant]
        constraints = list(constraints or [])
        if rules["cbf"] is None and cbf is not None:
            raise ValueError("%s does not use a barrier" % variant)
        if rules["cbf"] is not None and cbf is None:
            raise ValueError("%s requires a barrier" % variant)
        if rules["robust_clf"] and bounds is None:
            raise ValueError("%s requires uncertainty bounds" % variant)
        if not rules["robust_clf"] and bounds is not None:
            raise ValueError("%s takes no uncertainty bounds" % variant)
        if rules["constraints"] is None and constraints:
            raise ValueError("%s admits no plant constraints" % variant)
        if rules["constraints"] == "exact_only":
            for c in constraints:
                if not c.model_independent:
                    raise ValueError(
                        "%s keeps constraints as exact rows; constraint %r "
                        "depends on the model, use the unified robust "
                        "variant instead" % (variant, c.label))
        if rules["constraints"] == "robust":
            per = bounds.per_constraint
            if len(per) != len(constraints):
                raise ValueError(
                    "bounds.per_constraint has %d entries for %d constraints"
                    % (len(per), len(constraints)))
            for c, (d1, d2) in zip(constraints, per):
                if c.model_independent and (d1 != 0.0 or d2 != 0.0):
                    raise ValueError(
                        "constraint %r is model independent; its bounds "
                        "must be zero" % c.label)
        if two_delta and variant != "RobustClfQpConstraints":
            raise ValueError("two_delta applies only to "
                             "RobustClfQpConstraints")
        if p <= 0.0:
            raise ValueError("penalty p must be positive")
        if p2 is not None and p2 <= 0.0:
            raise ValueError("penalty p2 must be positive")
        if fallback not in FALLBACKS:
            raise ValueError("fallback must be one of %s"
                             % ", ".join(FALLBACKS))
        self.variant = variant
        self.clf = clf
        self.cbf = cbf
        self.constraints = constraints
        self.bounds = bounds
        self.p = float(p)
        self.p2 = float(p) if p2 is None else float(p2)
        self.two_delta = bool(two_delta)
        self.fallback = fallback

    @property
    def relaxed(self):
        return VARIANTS[self.variant]["relaxed"]

    @property
    def robust_clf(self):
        return VARIANTS[self.variant]["robust_clf"]

    @property
    def cbf_mode(self):
        return VARIANTS[self.variant]["cbf"]

    @property
    def n_delta(self):
        if not self.relaxed:
            return 0
        return 2 if self.two_delta else 1

    def robustified_constraints(self):
        """(index, constraint, bounds pair) for rows that get mu_c."""
        if VARIANTS[self.variant]["constraints"] != "robust":
            return []
        return [(i, c, self.bounds.per_constraint[i])
                for i, c in enumerate(self.constraints)
                if not c.model_independent]

    def __repr__(self):
        return "ControllerSpec(variant=%s, m=%d)" % (self.variant,
                                                     self.clf.m)


class TickDiagnostics:
    """Solution record for one control tick; absent channels stay None."""

    def __init__(self, u, mu, qp_status, v_eps, solve_time, mu_v=None,
                 mu_b=None, mu_c=None, delta=None, delta2=None, h=None,
                 b_barrier=None, active_set=None, d_eps=None,
                 kkt_worst=None):
        self.u = u
        self.mu = mu
        self.mu_v = mu_v
        self.mu_b = mu_b
        self.mu_c = mu_c
        self.delta = delta
        self.delta2 = delta2
        self.v_eps = v_eps
        self.h = h
        self.b_barrier = b_barrier
        self.qp_status = qp_status
        self.active_set = [] if active_set is None else list(active_set)
        self.solve_time = solve_time
        self.d_eps = d_eps
        self.kkt_worst = kkt_worst


class _Layout:
    """Column bookkeeping for the full decision vector."""

    def __init__(self, m, has_mu_v, has_mu_b, k_mu_c, n_delta):
        self.m = m
        self.u = slice(0, m)
        self.mu = slice(m, 2 * m)
        idx = 2 * m
        names = ["u%d" % j for j in range(m)] + ["mu%d" % j for j in range(m)]
        self.mu_v = None
        self.mu_b = None
        if has_mu_v:
            self.mu_v = idx
            names.append("mu_v")
            idx += 1
        if has_mu_b:
            self.mu_b = idx
            names.append("mu_b")
            idx += 1
        self.mu_c = list(range(idx, idx + k_mu_c))
        names.extend("mu_c%d" % j for j in range(k_mu_c))
        idx += k_mu_c
        self.delta = list(range(idx, idx + n_delta))
        names.extend(["delta", "delta2"][:n_delta])
        idx += n_delta
        self.n = idx
        self.var_names = names


def _tick_terms(spec, x, nominal_model, t=None):
    """Lie bundle, transverse CLF terms, and barrier terms at x."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("state contains non-finite entries")
    bundle = iolin.lie_bundle(nominal_model, x)
    eta = iolin.transverse(bundle).eta
    terms = certify.clf_terms(spec.clf, eta)
    bt = None
    if spec.cbf_mode is not None:
        bt = certify.barrier_terms(spec.cbf, nominal_model, x, t=t)
    d_inv = np.linalg.solve(bundle.lglfy, np.eye(bundle.m))
    u_ff = -d_inv @ bundle.lf2y
    return bundle, eta, terms, bt, d_inv, u_ff


def _delta_cols_for_label(label, delta_cols):
    # Two-delta mode pairs delta with the Psi_1^p row and delta2 with
    # the Psi_1^n row; single-delta mode shares one column.
    if not delta_cols:
        return None
    if len(delta_cols) == 1:
        return delta_cols[0]
    return delta_cols[0] if label.endswith("_pos") else delta_cols[1]


def assemble(spec, x, nominal_model, t=None):
    """Full QP over [u; mu; mu_v?; mu_b?; mu_c?; delta?] at state x.

    The returned problem carries layout, ineq_labels, and eq_labels
    attributes for dump tooling and tests.
    """
    bundle, eta, terms, bt, d_inv, u_ff = _tick_terms(
        spec, x, nominal_model, t=t)
    m = bundle.m
    robust_cons = spec.robustified_constraints()
    layout = _Layout(m, has_mu_v=spec.robust_clf,
                     has_mu_b=spec.cbf_mode == "robust",
                     k_mu_c=len(robust_cons), n_delta=spec.n_delta)
    n = layout.n

    h_mat = np.zeros((n, n))
    h_mat[layout.u, layout.u] = 2.0 * U_REGULARIZATION * np.eye(m)
    h_mat[layout.mu, layout.mu] = 2.0 * np.eye(m)
    for j, col in enumerate(layout.delta):
        h_mat[col, col] = 2.0 * (spec.p if j == 0 else spec.p2)
    f_lin = np.zeros(n)

    eq_rows, eq_rhs, eq_labels = [], [], []
    io = np.zeros((m, n))
    io[:, layout.u] = np.eye(m)
    io[:, layout.mu] = -d_inv
    for j in range(m):
        eq_rows.append(io[j])
        eq_rhs.append(u_ff[j])
        eq_labels.append("io%d" % j)

    ineq_rows, ineq_rhs, ineq_labels = [], [], []

    def add_ineq(a, b, label):
        ineq_rows.append(a)
        ineq_rhs.append(b)
        ineq_labels.append(label)

    def add_eq(a, b, label):
        eq_rows.append(a)
        eq_rhs.append(b)
        eq_labels.append(label)

    if spec.robust_clf:
        rr = robust.robust_clf_rows(spec.clf, terms, spec.bounds,
                                    relaxed=spec.relaxed)
        for (a_loc, b), label in zip(rr.ineq_rows, rr.labels):
            a = np.zeros(n)
            a[layout.mu_v] = a_loc[m]
            col = _delta_cols_for_label(label, layout.delta)
            if col is not None:
                a[col] = -1.0
            add_ineq(a, b, label)
        a_loc, b_eq = rr.coupling_eqs[0]
        a = np.zeros(n)
        a[layout.mu] = a_loc[:m]
        a[layout.mu_v] = a_loc[m]
        add_eq(a, b_eq, rr.coupling_labels[0])
    else:
        a_row, b = certify.clf_row(spec.clf, eta, relaxed=spec.relaxed)
        a = np.zeros(n)
        a[layout.mu] = a_row[:m]
        if spec.relaxed:
            a[layout.delta[0]] = -1.0
        add_ineq(a, b, "clf")

    if spec.cbf_mode == "nominal":
        a = np.zeros(n)
        a[layout.u] = bt["row"][0]
        add_ineq(a, bt["row"][1], "cbf")
    elif spec.cbf_mode == "robust":
        rr = robust.robust_cbf_rows(bt, spec.bounds)
        for (a_loc, b), label in zip(rr.ineq_rows, rr.labels):
            a = np.zeros(n)
            a[layout.mu_b] = a_loc[m]
            add_ineq(a, b, label)
        a_loc, b_eq = rr.coupling_eqs[0]
        a = np.zeros(n)
        a[layout.u] = a_loc[:m]
        a[layout.mu_b] = a_loc[m]
        add_eq(a, b_eq, rr.coupling_labels[0])

    robust_index = {i: slot for slot, (i, _, _) in enumerate(robust_cons)}
    for i, con in enumerate(spec.constraints):
        a_row, b_row = con.row(np.asarray(x, dtype=float))
        if a_row.shape != (m,):
            raise ValueError("constraint %r row has shape %s, expected (%d,)"
                             % (con.label, a_row.shape, m))
        if i in robust_index:
            slot = robust_index[i]
            rr = robust.robust_constraint_rows(
                a_row, b_row, spec.bounds.per_constraint[i])
            for (a_loc, b), label in zip(rr.ineq_rows, rr.labels):
                a = np.zeros(n)
                a[layout.mu_c[slot]] = a_loc[m]
                add_ineq(a, b, "%s_%s" % (con.label, label.split("_")[-1]))
            a_loc, b_eq = rr.coupling_eqs[0]
            a = np.zeros(n)
            a[layout.u] = a_loc[:m]
            a[layout.mu_c[slot]] = a_loc[m]
            add_eq(a, b_eq, "mu_c%d_viol" % slot)
        else:
            a = np.zeros(n)
            a[layout.u] = a_row
            add_ineq(a, b_row, con.label)

    problem = qp.QpProblem(
        h_mat, f_lin,
        a_ineq=np.array(ineq_rows) if ineq_rows else None,
        b_ineq=np.array(ineq_rhs) if ineq_rows else None,
        a_eq=np.array(eq_rows), b_eq=np.array(eq_rhs),
        var_names=layout.var_names)
    problem.layout = layout
    problem.ineq_labels = ineq_labels
    problem.eq_labels = eq_labels
    return problem


class _ReducedQp:
    """QP over [mu; delta?] with u and couplings eliminated analytically.

    Rows are normalized to unit inf-norm for conditioning; KKT residuals
    are checked on the unnormalized rows. Affine maps reconstruct u,
    mu_v, mu_b, and mu_c from the solved mu.
    """

    def __init__(self, spec, x, nominal_model, t=None):
        bundle, eta, terms, bt, d_inv, u_ff = _tick_terms(
            spec, x, nominal_model, t=t)
        m = bundle.m
        self.m = m
        self.spec = spec
        self.terms = terms
        self.bt = bt
        self.d_inv = d_inv
        self.u_ff = u_ff
        self.eta = eta
        n_delta = spec.n_delta
        n = m + n_delta
        self.n = n
        self.delta_cols = list(range(m, m + n_delta))

        # Objective (mu^T mu + p delta^2 + reg ||u(mu)||^2) scaled by
        # 1/(1+p) so the Hessian stays near unit size for large p.
        scale = 1.0 / (1.0 + spec.p)
        h_mat = np.zeros((n, n))
        h_mat[:m, :m] = 2.0 * (np.eye(m)
                               + U_REGULARIZATION * d_inv.T @ d_inv)
        for j, col in enumerate(self.delta_cols):
            h_mat[col, col] = 2.0 * (spec.p if j == 0 else spec.p2)
        f_lin = np.zeros(n)
        f_lin[:m] = 2.0 * U_REGULARIZATION * (d_inv.T @ u_ff)
        self.h_mat = h_mat * scale
        self.f_lin = f_lin * scale

        rows, rhs, labels = [], [], []

        def add(a_mu, delta_col, b, label):
            a = np.zeros(n)
            a[:m] = a_mu
            if delta_col is not None:
                a[delta_col] = -1.0
            rows.append(a)
            rhs.append(b)
            labels.append(label)

        if spec.robust_clf:
            d1_eff = spec.bounds.clf_effective_d1(
                np.linalg.norm(terms["lgv"]))
            psi0 = (terms["lfv"] + (spec.clf.c3 / spec.clf.eps) * terms["v"]
                    + d1_eff)
            for sign, tag in ((1.0, "pos"), (-1.0, "neg")):
                label = "clf_robust_%s" % tag
                col = _delta_cols_for_label(label, self.delta_cols)
                add((1.0 + sign * spec.bounds.clf_d2) * terms["lgv"],
                    col if spec.relaxed else None, -psi0, label)
        else:
            a_row, b = certify.clf_row(spec.clf, eta, relaxed=spec.relaxed)
            add(a_row[:m], self.delta_cols[0] if spec.relaxed else None,
                b, "clf")

        if spec.cbf_mode == "nominal":
            lgb_mu = bt["row"][0] @ d_inv
            add(lgb_mu, None, bt["row"][1] - bt["row"][0] @ u_ff, "cbf")
        elif spec.cbf_mode == "robust":
            beta0 = bt["lfb"] + bt["lgb"] @ u_ff
            beta = bt["lgb"] @ d_inv
            gamma_over_b = spec.cbf.gamma * bt["h"]
            psi0 = spec.bounds.cbf_d1 - gamma_over_b
            for sign, tag in ((1.0, "pos"), (-1.0, "neg")):
                w = 1.0 + sign * spec.bounds.cbf_d2
                add(w * beta, None, -psi0 - w * beta0, "cbf_robust_%s" % tag)
            self.cbf_affine = (beta0, beta)
        self.constraint_affine = []

        robust_ids = {i for i, _, _ in spec.robustified_constraints()}
        for i, con in enumerate(spec.constraints):
            a_row, b_row = con.row(np.asarray(x, dtype=float))
            a_mu = a_row @ d_inv
            c0 = a_row @ u_ff - b_row
            if i in robust_ids:
                d1, d2 = spec.bounds.per_constraint[i]
                for sign, tag in ((1.0, "pos"), (-1.0, "neg")):
                    w = 1.0 + sign * d2
                    add(w * a_mu, None, -d1 - w * c0,
                        "%s_%s" % (con.label, tag))
                self.constraint_affine.append((i, c0, a_mu))
            else:
                add(a_mu, None, b_row - a_row @ u_ff, con.label)

        self.labels = labels
        a_ineq = np.array(rows) if rows else np.zeros((0, n))
        b_ineq = np.array(rhs) if rhs else np.zeros(0)
        norms = np.maximum(np.max(np.abs(a_ineq), axis=1), 1e-12) \
            if rows else np.zeros(0)
        self.row_norms = norms
        self.problem = qp.QpProblem(
            self.h_mat, self.f_lin,
            a_ineq=a_ineq / norms[:, None] if rows else None,
            b_ineq=b_ineq / norms if rows else None)
        self.raw = qp.QpProblem(self.h_mat, self.f_lin,
                                a_ineq=a_ineq if rows else None,
                                b_ineq=b_ineq if rows else None)

    def extract(self, z):
        mu = np.asarray(z[:self.m], dtype=float)
        u = self.u_ff + self.d_inv @ mu
        deltas = [float(z[c]) for c in self.delta_cols]
        out = {"u": u, "mu": mu,
               "delta": deltas[0] if deltas else None,
               "delta2": deltas[1] if len(deltas) > 1 else None}
        if self.spec.robust_clf:
            out["mu_v"] = float(self.terms["lgv"] @ mu)
        if self.spec.cbf_mode == "robust":
            beta0, beta = self.cbf_affine
            out["mu_b"] = float(beta0 + beta @ mu)
        if self.constraint_affine:
            out["mu_c"] = [float(c0 + a_mu @ mu)
                           for _, c0, a_mu in self.constraint_affine]
        return out


def _saturation_box(spec, x, m):
    """Input box implied by model-independent single-axis rows."""
    lo = np.full(m, -np.inf)
    hi = np.full(m, np.inf)
    for con in spec.constraints:
        if not con.model_independent:
            continue
        a_row, b_row = con.row(x)
        nz = np.nonzero(a_row)[0]
        if nz.size != 1:
            continue
        j = nz[0]
        if a_row[j] > 0:
            hi[j] = min(hi[j], b_row / a_row[j])
        else:
            lo[j] = max(lo[j], b_row / a_row[j])
    return lo, hi


def _check_robust_margins(spec, red, sol_map):
    """Debug oracle: sampled box conditions must hold at the solution."""
    rate = spec.clf.c3 / spec.clf.eps
    checks = []
    if spec.robust_clf:
        deltas = [d for d in (sol_map["delta"], sol_map["delta2"])
                  if d is not None]
        d1_eff = spec.bounds.clf_effective_d1(
            np.linalg.norm(red.terms["lgv"]))
        checks.append(("clf", {
            "lfv": red.terms["lfv"], "v": red.terms["v"], "rate": rate,
            "mu_v": sol_map["mu_v"],
            "delta": max(deltas) if deltas else 0.0,
        }, (d1_eff, spec.bounds.clf_d2)))
    if spec.cbf_mode == "robust":
        checks.append(("cbf", {
            "mu_b": sol_map["mu_b"],
            "gamma_over_b": spec.cbf.gamma * red.bt["h"],
        }, (spec.bounds.cbf_d1, spec.bounds.cbf_d2)))
    for slot, (i, _, _) in enumerate(spec.robustified_constraints()):
        checks.append(("constraint", {"mu_c": sol_map["mu_c"][slot]},
                       spec.bounds.per_constraint[i]))
    for kind, sol, pair in checks:
        margin = robust.sample_uncertainty_margin(kind, sol, pair,
                                                  n_samples=100)
        if margin > ROBUST_MARGIN_TOL:
            raise ControllerError(
                "sampled %s condition violated by %.3e at the QP solution"
                % (kind, margin))


class Controller:
    """Stateful per-simulation wrapper: spec, fallback cache, monitor.

    tick(x, t) solves the reduced QP and returns (u, TickDiagnostics).
    A RelaxMonitor passed with tick_dt accumulates the relaxation
    integral from the predicted Vdot at each solution. debug=True runs
    the sampled uncertainty oracle every tick on robust variants.
    """

    def __init__(self, spec, nominal_model, monitor=None, tick_dt=None,
                 debug=False, warm_start=False, max_iter=None):
        if nominal_model.m != spec.clf.m:
            raise ValueError("model has %d inputs but the CLF covers %d"
                             % (nominal_model.m, spec.clf.m))
        if monitor is not None and tick_dt is None:
            raise ValueError("monitor requires tick_dt")
        self.spec = spec
        self.model = nominal_model
        self.monitor = monitor
        self.tick_dt = tick_dt
        self.debug = bool(debug)
        self.warm_start = bool(warm_start)
        self.max_iter = max_iter
        self._last_u = None
        self._warm = None

    def tick(self, x, t=None):
        x = np.asarray(x, dtype=float)
        red = _ReducedQp(self.spec, x, self.model, t=t)
        kwargs = {}
        if self.max_iter is not None:
            kwargs["max_iter"] = self.max_iter
        sol = qp.solve_qp(red.problem,
                          warm_start=self._warm if self.warm_start else None,
                          **kwargs)
        if sol.status != "optimal":
            return self._fallback(x, red, sol)
        if self.warm_start:
            slack = red.problem.a_ineq @ sol.z - red.problem.b_ineq
            self._warm = (sol.z,
                          np.nonzero(np.abs(slack) <= ACTIVE_SET_TOL)[0])
        sol_map = red.extract(sol.z)
        diag = self._diagnostics(red, sol, sol_map)
        if self.debug:
            _check_robust_margins(self.spec, red, sol_map)
        self._last_u = sol_map["u"]
        return sol_map["u"], diag

    def _diagnostics(self, red, sol, sol_map):
        # KKT is evaluated on the unnormalized rows: multipliers of the
        # normalized problem scale back by the row norms.
        lam = sol.ineq_multipliers / red.row_norms \
            if red.row_norms.size else sol.ineq_multipliers
        raw_sol = qp.QpSolution(sol.z, lam, sol.eq_multipliers, sol.status,
                                None)
        kkt = qp.kkt_residuals(red.raw, raw_sol)
        active = []
        if red.problem.a_ineq.shape[0]:
            slack = red.problem.a_ineq @ sol.z - red.problem.b_ineq
            active = [red.labels[i] for i in
                      np.nonzero(np.abs(slack) <= ACTIVE_SET_TOL)[0]]
        rate = self.spec.clf.c3 / self.spec.clf.eps
        vdot_pred = red.terms["lfv"] + float(
            red.terms["lgv"] @ sol_map["mu"])
        d_eps = max(0.0, vdot_pred + rate * red.terms["v"])
        if self.monitor is not None:
            certify.monitor_update(self.monitor, red.terms["v"], vdot_pred,
                                   self.tick_dt)
            d_eps = self.monitor.last_d_eps
        return TickDiagnostics(
            u=sol_map["u"], mu=sol_map["mu"], qp_status=sol.status,
            v_eps=red.terms["v"], solve_time=sol.solve_time,
            mu_v=sol_map.get("mu_v"), mu_b=sol_map.get("mu_b"),
            mu_c=sol_map.get("mu_c"), delta=sol_map["delta"],
            delta2=sol_map["delta2"],
            h=red.bt["h"] if red.bt else None,
            b_barrier=red.bt["b"] if red.bt else None,
            active_set=active, d_eps=d_eps, kkt_worst=kkt.worst())

    def _fallback(self, x, red, sol):
        policy = self.spec.fallback
        if policy == "error":
            raise ControllerError(
                "QP %s for %s at x=%s" % (sol.status, self.spec.variant,
                                          np.array2string(x, precision=6)))
        if policy == "hold" and self._last_u is not None:
            u = self._last_u
        else:
            lo, hi = _saturation_box(self.spec, x, red.m)
            u = np.clip(red.u_ff, lo, hi)
        status = "%s_%s" % (sol.status, "hold" if policy == "hold"
                            and self._last_u is not None else "saturate")
        diag = TickDiagnostics(
            u=u, mu=None, qp_status=status, v_eps=red.terms["v"],
            solve_time=sol.solve_time,
            h=red.bt["h"] if red.bt else None,
            b_barrier=red.bt["b"] if red.bt else None,
            d_eps=None)
        self._last_u = u
        return u, diag


def reduced_problem(spec, x, nominal_model, t=None):
    """The QP actually solved at a tick, over [mu; delta?] only."""
    return _ReducedQp(spec, x, nominal_model, t=t).problem


def control(spec, x, nominal_model, t=None, debug=False):
    """One-shot solve: assemble the reduced QP at x and return (u, diag)."""
    return Controller(spec, nominal_model, debug=debug).tick(x, t=t)
