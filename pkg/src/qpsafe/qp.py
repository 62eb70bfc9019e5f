"""Dense convex QP solver for controller-scale problems.

min 1/2 z^T H z + f^T z   s.t.  A_ineq z <= b_ineq,  A_eq z = b_eq

Equality constraints are eliminated by null-space projection before the
primal active-set iteration runs, so the reduced problem must be strictly
convex. A feasible starting point is produced by an elastic phase: one extra
variable bounds all violations under an exact L1 penalty, which is escalated
twice before the problem is declared infeasible.

Two interchangeable backends implement the hot loop: a compiled extension
(qpsafe._asqp) and a numpy fallback (qpsafe._asqp_py). Selection happens at
import, overridable with QPSAFE_QP_BACKEND={cython,python}.
"""

import itertools
import os
import time

import numpy as np

from . import _asqp_py

try:
    from . import _asqp
except ImportError:
    _asqp = None

ITERATION_CAP_DEFAULT = 200


def available_backends():
    names = ["python"]
    if _asqp is not None:
        names.insert(0, "cython")
    return names


def default_backend():
    env = os.environ.get("QPSAFE_QP_BACKEND", "").strip().lower()
    if env:
        return env
    return "cython" if _asqp is not None else "python"


def _backend_module(name):
    if name == "python":
        return _asqp_py
    if name == "cython":
        if _asqp is None:
            raise RuntimeError(
                "cython backend requested but qpsafe._asqp is not built; "
                "reinstall the package or set QPSAFE_QP_BACKEND=python"
            )
        return _asqp
    raise ValueError("unknown QP backend %r (use 'cython' or 'python')" % name)


class QpProblem:
    """Dense QP data. Arrays are copied to float64 and validated on build."""

    def __init__(self, h, f_lin, a_ineq=None, b_ineq=None, a_eq=None, b_eq=None,
                 var_names=None):
        self.h = np.array(h, dtype=float, ndmin=2)
        self.f_lin = np.array(f_lin, dtype=float).ravel()
        n = self.f_lin.size
        self.a_ineq = (np.zeros((0, n)) if a_ineq is None
                       else np.array(a_ineq, dtype=float, ndmin=2))
        self.b_ineq = (np.zeros(0) if b_ineq is None
                       else np.array(b_ineq, dtype=float).ravel())
        self.a_eq = (np.zeros((0, n)) if a_eq is None
                     else np.array(a_eq, dtype=float, ndmin=2))
        self.b_eq = (np.zeros(0) if b_eq is None
                     else np.array(b_eq, dtype=float).ravel())
        if var_names is None:
            var_names = ["z%d" % i for i in range(n)]
        self.var_names = list(var_names)
        self.validate()

    @property
    def n(self):
        return self.f_lin.size

    def validate(self):
        n = self.n
        if self.h.shape != (n, n):
            raise ValueError("H shape %s does not match %d variables" % (self.h.shape, n))
        for mat, vec, tag in ((self.a_ineq, self.b_ineq, "ineq"),
                              (self.a_eq, self.b_eq, "eq")):
            if mat.shape[1] != n and mat.shape[0] > 0:
                raise ValueError("a_%s has %d columns, expected %d" % (tag, mat.shape[1], n))
            if mat.shape[0] != vec.size:
                raise ValueError("a_%s/b_%s row mismatch" % (tag, tag))
        if len(self.var_names) != n:
            raise ValueError("var_names length mismatch")
        entries = [self.h, self.f_lin, self.a_ineq, self.b_ineq, self.a_eq, self.b_eq]
        if not all(np.all(np.isfinite(e)) for e in entries):
            raise ValueError("non-finite entries in QP data")
        hmax = max(1.0, float(np.max(np.abs(self.h))) if n else 1.0)
        if n and np.max(np.abs(self.h - self.h.T)) > 1e-10 * hmax:
            raise ValueError("H is not symmetric")

    def objective(self, z):
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.h @ z + self.f_lin @ z)


class KktResiduals:
    def __init__(self, stationarity, primal_ineq, primal_eq, dual_nonneg,
                 complementarity):
        self.stationarity = stationarity
        self.primal_ineq = primal_ineq
        self.primal_eq = primal_eq
        self.dual_nonneg = dual_nonneg
        self.complementarity = complementarity

    def worst(self):
        return max(self.stationarity, self.primal_ineq, self.primal_eq,
                   self.dual_nonneg, self.complementarity)

    def as_dict(self):
        return {
            "stationarity": self.stationarity,
            "primal_ineq": self.primal_ineq,
            "primal_eq": self.primal_eq,
            "dual_nonneg": self.dual_nonneg,
            "complementarity": self.complementarity,
        }

    def __repr__(self):
        return "KktResiduals(%s)" % ", ".join(
            "%s=%.3e" % kv for kv in self.as_dict().items())


class QpSolution:
    def __init__(self, z, ineq_multipliers, eq_multipliers, status, kkt,
                 iterations=0, solve_time=0.0, certificate=None):
        self.z = z
        self.ineq_multipliers = ineq_multipliers
        self.eq_multipliers = eq_multipliers
        self.status = status
        self.kkt = kkt
        self.iterations = iterations
        self.solve_time = solve_time
        self.certificate = certificate

    def __repr__(self):
        return "QpSolution(status=%s, z=%s)" % (self.status, self.z)


def kkt_residuals(p, s):
    """Max-norm KKT residuals of solution s on problem p.

    stationarity: |H z + f + A_ineq^T lam + A_eq^T nu|_inf
    primal_ineq:  largest positive violation of A_ineq z <= b_ineq
    primal_eq:    |A_eq z - b_eq|_inf
    dual_nonneg:  largest negative inequality multiplier, as a magnitude
    complementarity: max_i |lam_i * (A_ineq z - b_ineq)_i|
    """
    z = np.asarray(s.z, dtype=float)
    lam = np.asarray(s.ineq_multipliers, dtype=float)
    nu = np.asarray(s.eq_multipliers, dtype=float)
    grad = p.h @ z + p.f_lin
    if p.a_ineq.shape[0]:
        grad = grad + p.a_ineq.T @ lam
    if p.a_eq.shape[0]:
        grad = grad + p.a_eq.T @ nu
    stationarity = float(np.max(np.abs(grad))) if grad.size else 0.0
    if p.a_ineq.shape[0]:
        slack = p.a_ineq @ z - p.b_ineq
        primal_ineq = float(max(0.0, np.max(slack)))
        dual_nonneg = float(max(0.0, -np.min(lam)))
        complementarity = float(np.max(np.abs(lam * slack)))
    else:
        primal_ineq = dual_nonneg = complementarity = 0.0
    if p.a_eq.shape[0]:
        primal_eq = float(np.max(np.abs(p.a_eq @ z - p.b_eq)))
    else:
        primal_eq = 0.0
    return KktResiduals(stationarity, primal_ineq, primal_eq, dual_nonneg,
                        complementarity)


def _eliminate_equalities(p):
    """Return (z_particular, null_basis) for A_eq z = b_eq via QR of A_eq^T."""
    me = p.a_eq.shape[0]
    n = p.n
    if me == 0:
        return np.zeros(n), np.eye(n)
    q, r = np.linalg.qr(p.a_eq.T, mode="complete")
    diag = np.abs(np.diag(r[:me, :me])) if me <= n else np.zeros(0)
    scale = max(1.0, float(np.max(np.abs(p.a_eq))))
    if me > n or diag.size < me or np.min(diag) <= 1e-12 * scale:
        raise ValueError("equality constraints are rank deficient")
    w = np.zeros(n)
    w[:me] = np.linalg.solve(r[:me, :me].T, p.b_eq)
    return q @ w, q[:, me:]


def solve_qp(p, warm_start=None, max_iter=ITERATION_CAP_DEFAULT, backend=None):
    """Solve the QP. Returns a QpSolution with status in
    {'optimal', 'infeasible', 'iteration_cap'}.

    warm_start: optional (z, active_indices) pair from a previous solve on a
    problem with the same shape; used only if z is still feasible. Off unless
    passed explicitly, so repeated solves are reproducible by default.
    """
    t0 = time.perf_counter()
    core = _backend_module(backend or default_backend())

    z_p, basis = _eliminate_equalities(p)
    h_r = basis.T @ p.h @ basis
    h_r = np.ascontiguousarray(0.5 * (h_r + h_r.T))
    f_r = basis.T @ (p.h @ z_p + p.f_lin)
    a_r = np.ascontiguousarray(p.a_ineq @ basis)
    b_r = np.ascontiguousarray(p.b_ineq - p.a_ineq @ z_p)
    n_r = h_r.shape[0]
    mi = a_r.shape[0]
    feas_tol = 1e-9 * (1.0 + (float(np.max(np.abs(b_r))) if mi else 0.0))

    def finish(z_r, lam, status, iters, certificate=None):
        z = z_p + basis @ z_r if n_r else z_p
        nu = _recover_eq_multipliers(p, z, lam)
        sol = QpSolution(z, lam, nu, status, None, iters,
                         time.perf_counter() - t0, certificate)
        sol.kkt = kkt_residuals(p, sol)
        return sol

    if n_r == 0:
        lam = np.zeros(mi)
        status = "optimal"
        if mi and np.max(p.a_ineq @ z_p - p.b_ineq) > feas_tol:
            status = "infeasible"
        return finish(np.zeros(0), lam, status, 0)

    try:
        np.linalg.cholesky(h_r)
    except np.linalg.LinAlgError:
        raise ValueError("objective is not strictly convex on the "
                         "equality-constraint null space")

    # Start from the unconstrained minimizer when it is feasible.
    z_uc = np.linalg.solve(h_r, -f_r)
    start = None
    if mi == 0 or np.max(a_r @ z_uc - b_r) <= feas_tol:
        start = (z_uc, np.zeros(0, dtype=np.intp))
    elif warm_start is not None:
        z_w = np.asarray(warm_start[0], dtype=float)
        if z_w.size == p.n:
            z_wr = basis.T @ (z_w - z_p)
            slack = a_r @ z_wr - b_r
            if np.max(slack) <= feas_tol:
                active = [int(i) for i in warm_start[1]
                          if 0 <= int(i) < mi and slack[int(i)] >= -feas_tol]
                start = (z_wr, np.asarray(active, dtype=np.intp))

    if start is None:
        z0, w0, certificate, best, clean = _elastic_start(
            core, h_r, f_r, a_r, b_r, z_uc, feas_tol)
        if z0 is None:
            if not clean:
                return finish(best, np.zeros(mi), "iteration_cap", 0)
            lam = certificate if certificate is not None else np.zeros(mi)
            return finish(best, lam, "infeasible", 0, certificate)
        start = (z0, w0)

    z_r, lam, _, code, iters = core.iterate(
        np.ascontiguousarray(h_r), np.ascontiguousarray(f_r), a_r, b_r,
        np.ascontiguousarray(start[0], dtype=float),
        np.asarray(start[1], dtype=np.intp), max_iter)
    if code == _asqp_py.NUMERICAL and core is not _asqp_py:
        z_r, lam, _, code, iters = _asqp_py.iterate(
            h_r, f_r, a_r, b_r, np.array(start[0], dtype=float),
            np.asarray(start[1], dtype=np.intp), max_iter)
    status = {_asqp_py.OPTIMAL: "optimal",
              _asqp_py.ITERATION_CAP: "iteration_cap",
              _asqp_py.NUMERICAL: "iteration_cap"}[code]
    return finish(z_r, lam, status, iters)


def _recover_eq_multipliers(p, z, lam):
    me = p.a_eq.shape[0]
    if me == 0:
        return np.zeros(0)
    rhs = -(p.h @ z + p.f_lin)
    if p.a_ineq.shape[0]:
        rhs = rhs - p.a_ineq.T @ lam
    nu, *_ = np.linalg.lstsq(p.a_eq.T, rhs, rcond=None)
    return nu


def _elastic_start(core, h, f, a, b, z_uc, feas_tol):
    """Feasible point for A z <= b via the elastic problem in (z, t).

    Returns (z0, active_rows, None, None, True) on success, or
    (None, None, certificate, best_z, clean) when the system is infeasible
    even under the escalated penalty; clean is False when the verdict came
    from an elastic solve that hit its own iteration cap. The elastic budget
    is internal so that a small caller-side cap on the main iteration cannot
    turn a feasible problem into a bogus infeasibility report.
    """
    n = h.shape[0]
    mi = a.shape[0]
    max_iter = max(ITERATION_CAP_DEFAULT, 10 * (mi + n + 1))
    a_e = np.zeros((mi + 1, n + 1))
    a_e[:mi, :n] = a
    a_e[:mi, n] = -1.0
    a_e[mi, n] = -1.0
    b_e = np.concatenate([b, [0.0]])
    t0 = float(max(0.0, np.max(a @ z_uc - b))) + 1.0
    z0 = np.concatenate([z_uc, [t0]])

    grad_scale = 1.0 + float(np.max(np.abs(f))) + float(np.max(np.abs(h))) * (
        1.0 + float(np.max(np.abs(z_uc))))
    penalty = 1e6 * grad_scale
    for _ in range(3):
        # The exact-penalty property needs only the linear coefficient to
        # dominate the multipliers; the quadratic t-weight exists for
        # positive definiteness and stays at gradient scale, since putting
        # the full penalty there makes the elastic KKT systems so ill
        # conditioned that the start point inherits visible infeasibility.
        h_e = np.zeros((n + 1, n + 1))
        h_e[:n, :n] = h
        h_e[n, n] = grad_scale
        f_e = np.concatenate([f, [penalty]])
        z_e, lam_e, w_e, code, _ = core.iterate(
            np.ascontiguousarray(h_e), np.ascontiguousarray(f_e),
            np.ascontiguousarray(a_e), np.ascontiguousarray(b_e),
            np.ascontiguousarray(z0), np.zeros(0, dtype=np.intp), max_iter)
        if code == _asqp_py.NUMERICAL and core is not _asqp_py:
            z_e, lam_e, w_e, code, _ = _asqp_py.iterate(
                h_e, f_e, a_e, b_e, z0.copy(), np.zeros(0, dtype=np.intp),
                max_iter)
        t_star = float(z_e[n])
        if code != _asqp_py.NUMERICAL and t_star <= 10.0 * feas_tol:
            # Restart the main iteration with an empty working set: the
            # elastic active rows can be rank deficient once t is dropped.
            return (np.array(z_e[:n]), np.zeros(0, dtype=np.intp),
                    None, None, True)
        penalty *= 100.0

    cert = np.maximum(lam_e[:mi], 0.0)
    total = float(np.sum(cert))
    if total > 0.0:
        cert = cert / total
    return None, None, cert, np.array(z_e[:n]), code == _asqp_py.OPTIMAL


def solve_qp_by_enumeration(p):
    """Exhaustive active-set oracle for small problems.

    Tries every subset of inequality rows as the active set, solves the
    resulting equality-constrained KKT system, and keeps the best candidate
    that is primal feasible with nonnegative multipliers. Exponential in the
    number of rows; meant for cross-checking solve_qp, not production use.
    """
    n = p.n
    mi = p.a_ineq.shape[0]
    me = p.a_eq.shape[0]
    scale = 1.0 + (float(np.max(np.abs(p.b_ineq))) if mi else 0.0)
    tol = 1e-7 * scale
    best = None
    for k in range(0, mi + 1):
        for subset in itertools.combinations(range(mi), k):
            rows = np.array(subset, dtype=int)
            a_act = np.vstack([p.a_ineq[rows], p.a_eq]) if rows.size or me else np.zeros((0, n))
            b_act = np.concatenate([p.b_ineq[rows], p.b_eq])
            dim = n + a_act.shape[0]
            kkt = np.zeros((dim, dim))
            kkt[:n, :n] = p.h
            kkt[:n, n:] = a_act.T
            kkt[n:, :n] = a_act
            rhs = np.concatenate([-p.f_lin, b_act])
            sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
            if np.max(np.abs(kkt @ sol - rhs)) > tol:
                continue
            z = sol[:n]
            lam_act = sol[n:n + rows.size]
            if rows.size and np.min(lam_act) < -tol:
                continue
            if mi and np.max(p.a_ineq @ z - p.b_ineq) > tol:
                continue
            if me and np.max(np.abs(p.a_eq @ z - p.b_eq)) > tol:
                continue
            obj = p.objective(z)
            if best is None or obj < best[0] - 1e-12 * (1.0 + abs(obj)):
                lam = np.zeros(mi)
                lam[rows] = np.maximum(lam_act, 0.0)
                nu = sol[n + rows.size:]
                best = (obj, z, lam, nu)
    if best is None:
        return QpSolution(np.zeros(n), np.zeros(mi), np.zeros(me),
                          "infeasible", None)
    _, z, lam, nu = best
    sol = QpSolution(z, lam, nu, "optimal", None)
    sol.kkt = kkt_residuals(p, sol)
    return sol


def _format_matrix(name, mat, out):
    mat = np.atleast_2d(mat)
    out.append("%s %d %d" % (name, mat.shape[0], mat.shape[1]))
    for row in mat:
        out.append(" ".join("%.17g" % v for v in row))


def dump_problem(p, path):
    """Write the problem to a text file, one matrix per section, 17
    significant digits so float64 values round-trip exactly. Row labels
    attached by the controller assembly are kept when present."""
    out = ["qpsafe-qp 1", "var_names " + " ".join(p.var_names)]
    for tag in ("ineq_labels", "eq_labels"):
        labels = getattr(p, tag, None)
        if labels:
            out.append(tag + " " + " ".join(labels))
    _format_matrix("h", p.h, out)
    _format_matrix("f_lin", p.f_lin.reshape(1, -1), out)
    _format_matrix("a_ineq", p.a_ineq.reshape(-1, p.n), out)
    _format_matrix("b_ineq", p.b_ineq.reshape(1, -1) if p.b_ineq.size else np.zeros((0, 0)), out)
    _format_matrix("a_eq", p.a_eq.reshape(-1, p.n), out)
    _format_matrix("b_eq", p.b_eq.reshape(1, -1) if p.b_eq.size else np.zeros((0, 0)), out)
    with open(path, "w") as fh:
        fh.write("\n".join(out) + "\n")


def load_problem(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines or not lines[0].startswith("qpsafe-qp"):
        raise ValueError("not a qpsafe QP dump: %s" % path)
    var_names = lines[1].split()[1:]
    labels = {}
    i = 2
    while i < len(lines) and lines[i].split()[0] in ("ineq_labels",
                                                     "eq_labels"):
        parts = lines[i].split()
        labels[parts[0]] = parts[1:]
        i += 1
    sections = {}
    while i < len(lines):
        name, rows, cols = lines[i].split()
        rows, cols = int(rows), int(cols)
        block = np.zeros((rows, cols))
        for r in range(rows):
            vals = lines[i + 1 + r].split()
            if len(vals) != cols:
                raise ValueError("bad row length in section %s" % name)
            block[r] = [float(v) for v in vals]
        sections[name] = block
        i += 1 + rows
    n = len(var_names)
    p = QpProblem(
        sections["h"], sections["f_lin"].ravel(),
        sections["a_ineq"].reshape(-1, n), sections["b_ineq"].ravel(),
        sections["a_eq"].reshape(-1, n), sections["b_eq"].ravel(),
        var_names)
    for tag, vals in labels.items():
        setattr(p, tag, vals)
    return p
