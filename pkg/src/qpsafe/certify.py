"""Stability and safety certificates for the linearized output dynamics.

Rapidly-exponentially-stabilizing CLFs: with transverse dynamics
etadot = F eta + G mu, a stabilizing gain K gives A_cl = F - G K, the
Lyapunov solution P, and the eps-scaled P_eps whose quadratic form V_eps
decays at rate c3/eps when the CLF inequality is enforced.

Reciprocal barriers: B = 1/h blows up at the boundary of the safe set
{h >= 0}; enforcing Bdot <= gamma/B keeps h positive. Position-only limits
(relative degree 2) are lifted to h = hdot0 + alpha h0 first.

The relaxation monitor integrates the granted CLF relaxation so the
exponential-decay claim can be re-checked against the logged trajectory.
"""

import numpy as np

from .linalg import solve_lyapunov, eig_sym_extremes

DEFAULT_GAMMA = 1.0
DEFAULT_LIFT_ALPHA = 5.0
V_FLOOR = 1e-9
BOUND_SLACK = 1e-6


class SafetyViolated(RuntimeError):
    """The state left the safe set (h <= 0): distinct from numerics."""

    def __init__(self, h, x=None, t=None):
        msg = "barrier violated: h = %.6g" % h
        if t is not None:
            msg += " at t = %.6f s" % t
        super().__init__(msg)
        self.h = float(h)
        self.x = None if x is None else np.asarray(x, dtype=float)
        self.t = t

    def diagnostics(self):
        nan = float("nan")
        return {"qp_status": "safety_violated", "h": self.h,
                "v_eps": nan, "delta": nan, "d_eps": nan, "b_barrier": nan}


def _transverse_fg(m):
    f = np.zeros((2 * m, 2 * m))
    f[:m, m:] = np.eye(m)
    g = np.zeros((2 * m, m))
    g[m:, :] = np.eye(m)
    return f, g


class ResClf:
    """Rapidly-exponentially-stabilizing CLF data for m output channels."""

    def __init__(self, p_eps, p_base, eps, c1, c2, c3, k_gain):
        self.p_eps = np.asarray(p_eps, dtype=float)
        self.p_base = np.asarray(p_base, dtype=float)
        self.eps = float(eps)
        self.c1 = float(c1)
        self.c2 = float(c2)
        self.c3 = float(c3)
        self.k_gain = np.asarray(k_gain, dtype=float)

    @property
    def m(self):
        return self.p_eps.shape[0] // 2

    def v(self, eta):
        eta = np.asarray(eta, dtype=float)
        return float(eta @ self.p_eps @ eta)


def build_res_clf(m, eps, k_gain=None, q=None):
    """Solve for P and assemble the eps-scaled CLF.

    Defaults: K = [I, 2I] (critically damped channels) and Q = I. A user
    gain that fails to make F - G K Hurwitz is rejected.
    """
    if not 0.0 < eps <= 1.0:
        raise ValueError("eps must lie in (0, 1]")
    f, g = _transverse_fg(m)
    if k_gain is None:
        k_gain = np.hstack([np.eye(m), 2.0 * np.eye(m)])
    else:
        k_gain = np.atleast_2d(np.asarray(k_gain, dtype=float))
        if k_gain.shape != (m, 2 * m):
            raise ValueError("k_gain must be m x 2m")
    if q is None:
        q = np.eye(2 * m)
    else:
        q = np.asarray(q, dtype=float)
    a_cl = f - g @ k_gain
    if np.max(np.linalg.eigvals(a_cl).real) >= 0.0:
        raise ValueError("gain does not stabilize the transverse dynamics")
    p = solve_lyapunov(a_cl, q)
    scale = np.diag(np.concatenate([np.full(m, 1.0 / eps), np.ones(m)]))
    p_eps = scale @ p @ scale
    p_min, p_max = eig_sym_extremes(p)
    q_min, _ = eig_sym_extremes(q)
    return ResClf(p_eps, p, eps, c1=p_min, c2=p_max, c3=q_min / p_max,
                  k_gain=k_gain)


def clf_terms(clf, eta):
    """V_eps and its Lie derivatives along the transverse dynamics.

    Returns {"v", "lfv", "lgv"} with Vdot = lfv + lgv @ mu.
    """
    eta = np.asarray(eta, dtype=float)
    m = clf.m
    f, g = _transverse_fg(m)
    v = float(eta @ clf.p_eps @ eta)
    lfv = float(eta @ (f.T @ clf.p_eps + clf.p_eps @ f) @ eta)
    lgv = 2.0 * (eta @ clf.p_eps @ g)
    return {"v": v, "lfv": lfv, "lgv": lgv}


def clf_row(clf, eta, relaxed=True):
    """Inequality row enforcing Vdot + (c3/eps) V <= delta (or <= 0).

    Returns (a_row, b) over the variables (mu, delta); strict mode omits
    the delta column.
    """
    terms = clf_terms(clf, eta)
    b = -terms["lfv"] - (clf.c3 / clf.eps) * terms["v"]
    if relaxed:
        a_row = np.concatenate([terms["lgv"], [-1.0]])
    else:
        a_row = np.array(terms["lgv"], dtype=float)
    return a_row, float(b)


class ReciprocalBarrier:
    """Safe set {h >= 0} certified through B = 1/h.

    grad_h returns dh/dx so the barrier derivative can be taken along any
    model's vector fields. gamma bounds the allowed growth Bdot <= gamma/B.
    """

    def __init__(self, h, grad_h, gamma=DEFAULT_GAMMA, lift_alpha=None):
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        self.h = h
        self.grad_h = grad_h
        self.gamma = float(gamma)
        self.lift_alpha = lift_alpha


def rd2_lift(h0, grad_h0, alpha):
    """Lift a position-only limit to relative degree one.

    For a mechanical state x = [q; qdot] and h0 depending on q alone,
    h = hdot0 + alpha h0 has LgB != 0 and h >= 0 for all t forces
    h0 >= 0 whenever h0(0) >= 0 (comparison lemma). The returned gradient
    drops curvature of h0, which is exact for the affine limits shipped
    here. Returns (h, grad_h).
    """
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")

    def h(x):
        x = np.asarray(x, dtype=float)
        d = x.shape[0] // 2
        g0 = np.asarray(grad_h0(x), dtype=float)
        return alpha * float(h0(x)) + float(g0[:d] @ x[d:])

    def grad(x):
        x = np.asarray(x, dtype=float)
        d = x.shape[0] // 2
        g0 = np.asarray(grad_h0(x), dtype=float)
        out = alpha * g0.astype(float)
        out[d:] = out[d:] + g0[:d]
        return out

    return h, grad


def barrier_terms(cbf, model, x, t=None):
    """Barrier values and the QP row L_gB u <= gamma/B - L_fB at x.

    Raises SafetyViolated when h(x) <= 0; numerical trouble elsewhere
    surfaces as ordinary exceptions.
    """
    x = np.asarray(x, dtype=float)
    hv = float(cbf.h(x))
    if hv <= 0.0:
        raise SafetyViolated(hv, x=x, t=t)
    b = 1.0 / hv
    grad = np.asarray(cbf.grad_h(x), dtype=float)
    inv_h2 = 1.0 / (hv * hv)
    lfb = -float(grad @ model.f(x)) * inv_h2
    lgb = -(grad @ model.g(x)) * inv_h2
    row = (np.array(lgb, dtype=float), float(cbf.gamma / b - lfb))
    return {"h": hv, "b": b, "lfb": lfb, "lgb": lgb, "row": row}


class RelaxMonitor:
    """Accumulates the scaled CLF relaxation w along one trajectory.

    rate is c3/eps for the CLF in force; v0 and eta0_norm freeze the
    initial condition the exponential bounds are measured against.
    """

    def __init__(self, rate, v0, eta0_norm, w_bar=np.inf):
        if rate <= 0.0:
            raise ValueError("decay rate must be positive")
        self.rate = float(rate)
        self.v0 = float(v0)
        self.eta0_norm = float(eta0_norm)
        self.w_bar = float(w_bar)
        self.w = 0.0
        self.last_d_eps = 0.0
        self.per_step_log = []

    @classmethod
    def for_clf(cls, clf, eta0, w_bar=np.inf):
        eta0 = np.asarray(eta0, dtype=float)
        return cls(clf.c3 / clf.eps, clf.v(eta0),
                   float(np.linalg.norm(eta0)), w_bar=w_bar)

    @property
    def within_cap(self):
        return self.w <= self.w_bar

    def log_event(self, t):
        """Record w at a hybrid event (per-step relaxation tally)."""
        self.per_step_log.append((float(t), self.w))


def monitor_update(mon, v_eps, vdot_measured, dt):
    """Accumulate w += (d_eps / V_eps) dt with d_eps clamped at zero.

    Below the V floor the quotient is singular and the contribution is
    skipped. Returns the monitor; the granted d_eps is left on
    mon.last_d_eps for diagnostics.
    """
    d_eps = max(0.0, vdot_measured + mon.rate * v_eps)
    mon.last_d_eps = d_eps
    if v_eps > V_FLOOR:
        mon.w += (d_eps / v_eps) * dt
    return mon


def theorem1_bound_check(mon, clf, eta_t, t):
    """Re-check the exponential bounds against a logged state.

    V-form: V_eps(t) <= exp(-(c3/eps) t + w(t)) V_eps(0).
    eta-form: ||eta(t)|| <= sqrt(c2/c1) (1/eps) exp(w_bar/2)
              exp(-c3 t / (2 eps)) ||eta(0)||.
    Margins are (value - bound)/bound; holds needs both <= 1e-6.
    """
    eta_t = np.asarray(eta_t, dtype=float)
    v_t = clf.v(eta_t)
    v_bound = np.exp(-mon.rate * t + mon.w) * mon.v0
    v_margin = _rel_margin(v_t, v_bound)

    eta_norm = float(np.linalg.norm(eta_t))
    growth = np.exp(0.5 * mon.w_bar) if np.isfinite(mon.w_bar) else np.inf
    eta_bound = (np.sqrt(clf.c2 / clf.c1) / clf.eps * growth
                 * np.exp(-0.5 * mon.rate * t) * mon.eta0_norm)
    eta_margin = _rel_margin(eta_norm, eta_bound)

    margin = max(v_margin, eta_margin)
    return {"holds": margin <= BOUND_SLACK, "margin": margin,
            "v_margin": v_margin, "eta_margin": eta_margin}


def _rel_margin(value, bound):
    if not np.isfinite(bound):
        return -1.0
    if bound <= 0.0:
        # Degenerate zero bound: either exactly met or violated outright.
        return 0.0 if value <= 0.0 else np.inf
    return (value - bound) / bound
