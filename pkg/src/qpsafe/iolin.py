"""Input-output linearization for relative-degree-2 outputs.

The model supplies closed-form Lie derivatives; a finite-difference oracle
built on short Runge-Kutta flows cross-checks them. With the decoupling
matrix LgLfy invertible, u = -(LgLfy)^-1 Lf2y + (LgLfy)^-1 mu renders the
output dynamics yddot = mu on the matching plant. On a mismatched plant the
same law yields yddot = (I + Delta2) mu + Delta1; uncertainty_between
extracts those residual terms from the two Lie bundles.
"""

import numpy as np

COND_LIMIT = 1e8


class RelativeDegreeError(RuntimeError):
    """Decoupling matrix is singular (or nearly so) at this state."""


class LieBundle:
    """Outputs and Lie derivatives at one state: y, ydot, Lf2y, LgLfy."""

    def __init__(self, y, ydot, lf2y, lglfy):
        self.y = np.atleast_1d(np.asarray(y, dtype=float))
        self.ydot = np.atleast_1d(np.asarray(ydot, dtype=float))
        self.lf2y = np.atleast_1d(np.asarray(lf2y, dtype=float))
        self.lglfy = np.atleast_2d(np.asarray(lglfy, dtype=float))
        m = self.y.shape[0]
        if (self.ydot.shape != (m,) or self.lf2y.shape != (m,)
                or self.lglfy.shape != (m, m)):
            raise ValueError("inconsistent Lie bundle dimensions")
        for part in (self.y, self.ydot, self.lf2y, self.lglfy):
            if not np.all(np.isfinite(part)):
                raise ValueError("non-finite Lie bundle entry")

    @property
    def m(self):
        return self.y.shape[0]

    @property
    def cond(self):
        return float(np.linalg.cond(self.lglfy))


class TransverseState:
    """Stacked transverse coordinates eta = [y; ydot]."""

    def __init__(self, eta):
        self.eta = np.atleast_1d(np.asarray(eta, dtype=float))
        if not np.all(np.isfinite(self.eta)):
            raise ValueError("non-finite transverse state")


def lie_bundle(model, x):
    """Evaluate the model's closed-form Lie derivatives at x."""
    x = np.asarray(x, dtype=float)
    raw = model.lie(x)
    bundle = LieBundle(raw["y"], raw["ydot"], raw["lf2y"], raw["lglfy"])
    if bundle.cond > COND_LIMIT:
        raise RelativeDegreeError(
            "decoupling matrix condition %.3g exceeds %.1g at x=%s"
            % (bundle.cond, COND_LIMIT, x))
    return bundle


def _flow(model, x, u, dt):
    # One RK4 step of xdot = f + g u; local error O(dt^5) is negligible
    # against the finite-difference truncation handled by the callers.
    def xdot(s):
        return model.f(s) + model.g(s) @ u

    k1 = xdot(x)
    k2 = xdot(x + 0.5 * dt * k1)
    k3 = xdot(x + 0.5 * dt * k2)
    k4 = xdot(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _second_diff(model, x, u, h):
    # d2/dt2 y(flow(t)) at t=0 by central second difference.
    yp = model.y(_flow(model, x, u, h))
    ym = model.y(_flow(model, x, u, -h))
    y0 = model.y(x)
    return (yp - 2.0 * y0 + ym) / (h * h)


def _yddot(model, x, u, h):
    # Richardson extrapolation kills the O(h^2) truncation term.
    d_h = _second_diff(model, x, u, h)
    d_h2 = _second_diff(model, x, u, 0.5 * h)
    return (4.0 * d_h2 - d_h) / 3.0


def fd_lie_oracle(model, x, h_fd=1e-6):
    """Finite-difference estimate of the Lie bundle along short flows.

    ydot comes from a first central difference with step h_fd; the
    second-derivative quantities use a widened step sqrt(h_fd) with
    Richardson extrapolation, since a second difference at h_fd itself
    would sit on the float64 roundoff floor.
    """
    x = np.asarray(x, dtype=float)
    m = model.m
    u0 = np.zeros(m)
    y0 = model.y(x)

    yp = model.y(_flow(model, x, u0, h_fd))
    ym = model.y(_flow(model, x, u0, -h_fd))
    ydot = (yp - ym) / (2.0 * h_fd)

    h2 = np.sqrt(h_fd)
    lf2y = _yddot(model, x, u0, h2)
    # yddot is exactly affine in a held input, so unit input steps recover
    # the decoupling matrix column by column.
    lglfy = np.zeros((m, m))
    for j in range(m):
        ej = np.zeros(m)
        ej[j] = 1.0
        lglfy[:, j] = _yddot(model, x, ej, h2) - lf2y
    return LieBundle(y0, ydot, lf2y, lglfy)


def io_control(bundle, mu):
    """Feedback-linearizing input u = -(LgLfy)^-1 Lf2y + (LgLfy)^-1 mu."""
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if bundle.cond > COND_LIMIT:
        raise RelativeDegreeError(
            "decoupling matrix condition %.3g exceeds %.1g"
            % (bundle.cond, COND_LIMIT))
    return np.linalg.solve(bundle.lglfy, mu - bundle.lf2y)


def transverse(bundle):
    """Transverse state eta = [y; ydot]."""
    return TransverseState(np.concatenate([bundle.y, bundle.ydot]))


def uncertainty_between(true_bundle, nominal_bundle):
    """Model-mismatch terms (Delta1, Delta2) at one state.

    Under the nominal feedback-linearizing law applied to the true plant,
    yddot = (I + Delta2) mu + Delta1. Both vanish when the bundles match.
    """
    inv_nom = np.linalg.inv(nominal_bundle.lglfy)
    ratio = true_bundle.lglfy @ inv_nom
    delta2 = ratio - np.eye(nominal_bundle.m)
    delta1 = true_bundle.lf2y - ratio @ nominal_bundle.lf2y
    return delta1, delta2
