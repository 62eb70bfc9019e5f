"""Closed-loop simulation: RK4 between ticks, zero-order-hold inputs.

The controller runs at a fixed rate and sees only the observed (nominal
coordinate) state; integration always uses the truth plant. Guard
crossings of an optional HybridSpec are located by bisection to 1e-9 s
and the reset map is applied on the positive side of the guard.
"""

import numpy as np

EVENT_TIME_TOL = 1e-9


class SimulationError(RuntimeError):
    """Raised when integration or the event logic cannot continue."""

    def __init__(self, message, last_state=None, last_time=None):
        super().__init__(message)
        self.last_state = last_state
        self.last_time = last_time


class Trajectory:
    """Per-tick record of a closed-loop run.

    states holds the truth state at each tick (before the tick's input is
    applied); inputs the held input for the following interval; diagnostics
    whatever record the controller returned for the tick. final_state and
    final_time describe the state after the last integration interval.
    """

    def __init__(self, times, states, inputs, diagnostics, events,
                 final_state, final_time, stop_reason=None):
        self.times = np.asarray(times, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.inputs = np.asarray(inputs, dtype=float)
        self.diagnostics = list(diagnostics)
        self.events = list(events)
        self.final_state = np.asarray(final_state, dtype=float)
        self.final_time = float(final_time)
        self.stop_reason = stop_reason
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0.0):
            raise ValueError("tick times must be strictly increasing")
        if not (len(self.times) == len(self.states) == len(self.inputs)
                == len(self.diagnostics)):
            raise ValueError("one state, input and diagnostics row per tick")

    def __len__(self):
        return len(self.times)


def step_rk4(model, x, u, dt):
    """One classical Runge-Kutta step of xdot = f(x) + g(x) u, u held."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    x = np.asarray(x, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))

    def xdot(s):
        return model.f(s) + model.g(s) @ u

    k1 = xdot(x)
    k2 = xdot(x + 0.5 * dt * k1)
    k3 = xdot(x + 0.5 * dt * k2)
    k4 = xdot(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise SimulationError(
            "state became non-finite during an RK4 step",
            last_state=x)
    return out


def _advance(model, x, u, t, dt, hybrid, events, on_event):
    """Integrate one substep, locating and applying guard crossings."""
    if hybrid is None:
        return step_rk4(model, x, u, dt)
    remaining = dt
    while remaining > EVENT_TIME_TOL:
        x_next = step_rk4(model, x, u, remaining)
        if hybrid.guard(x_next) > 0.0 or hybrid.guard(x) <= 0.0:
            return x_next
        # Bracket [0, remaining] on the substep; bisect the step width
        # until the crossing is pinned to 1e-9 s, then reset from the
        # positive side so guard(x+) > 0 holds structurally.
        lo, hi = 0.0, remaining
        while hi - lo > EVENT_TIME_TOL:
            mid = 0.5 * (lo + hi)
            if hybrid.guard(step_rk4(model, x, u, mid)) > 0.0:
                lo = mid
            else:
                hi = mid
        x_minus = step_rk4(model, x, u, lo) if lo > 0.0 else x
        x_plus = np.asarray(hybrid.reset(x_minus), dtype=float)
        if hybrid.guard(x_plus) <= 0.0:
            raise SimulationError(
                "reset map left the state on the guard surface",
                last_state=x_plus, last_time=t + lo)
        events.append((t + lo, "reset"))
        if len(events) > hybrid.max_events:
            raise SimulationError(
                "hybrid event count exceeded max_events=%d"
                % hybrid.max_events, last_state=x_plus, last_time=t + lo)
        if on_event is not None:
            on_event(t + lo, x_minus, x_plus)
        x = x_plus
        t = t + lo
        remaining = remaining - lo
    return x


def simulate(pair, controller, x0, t_end, ctrl_rate=100.0, substeps=10,
             hybrid=None, on_event=None):
    """Run the loop: observe, tick the controller, hold u, integrate.

    The controller is any object with tick(x_obs, t) -> (u, diagnostics).
    A SafetyViolated raised by the tick is recorded as a final
    "safety_violated" diagnostics row and stops the run; any other
    controller error is re-raised with the tick index attached.
    """
    from .certify import SafetyViolated
    from .controllers import ControllerError

    if t_end <= 0.0 or ctrl_rate <= 0.0 or substeps < 1:
        raise ValueError("t_end, ctrl_rate and substeps must be positive")
    n_ticks = int(round(t_end * ctrl_rate))
    if n_ticks < 1:
        raise ValueError("t_end shorter than one controller tick")
    dt_tick = 1.0 / ctrl_rate
    dt_sub = dt_tick / substeps
    m = pair.truth.m

    x = np.asarray(x0, dtype=float)
    if x.shape != (pair.truth.n,):
        raise ValueError("x0 must have the truth state dimension %d"
                         % pair.truth.n)

    times, states, inputs, diags, events = [], [], [], [], []
    stop_reason = None
    t = 0.0
    for k in range(n_ticks):
        t = k * dt_tick
        x_obs = pair.observe(x)
        try:
            u, diag = controller.tick(x_obs, t)
        except SafetyViolated as exc:
            times.append(t)
            states.append(x.copy())
            inputs.append(np.full(m, np.nan))
            diags.append(exc.diagnostics())
            stop_reason = "safety_violated"
            break
        except ControllerError:
            # Error-stop fallback policy: keep the partial run so batch
            # metrics can report the failure instead of crashing.
            times.append(t)
            states.append(x.copy())
            inputs.append(np.full(m, np.nan))
            diags.append({"qp_status": "controller_error"})
            stop_reason = "controller_error"
            break
        except Exception as exc:
            raise SimulationError(
                "controller failed at tick %d (t=%.6f s): %s"
                % (k, t, exc), last_state=x, last_time=t) from exc
        u = np.atleast_1d(np.asarray(u, dtype=float))
        times.append(t)
        states.append(x.copy())
        inputs.append(u.copy())
        diags.append(diag)
        for j in range(substeps):
            x = _advance(pair.truth, x, u, t + j * dt_sub, dt_sub,
                         hybrid, events, on_event)
        t = (k + 1) * dt_tick

    return Trajectory(times, states, inputs, diags, events,
                      final_state=x, final_time=t, stop_reason=stop_reason)


_CSV_FIELDS = ("v_eps", "delta", "d_eps", "h", "b_barrier")


def _diag_value(diag, name):
    if diag is None:
        return float("nan")
    if isinstance(diag, dict):
        v = diag.get(name, float("nan"))
    else:
        v = getattr(diag, name, float("nan"))
    return float("nan") if v is None else float(v)


def _diag_status(diag):
    if diag is None:
        return ""
    status = diag.get("qp_status") if isinstance(diag, dict) else \
        getattr(diag, "qp_status", "")
    return status or ""


def write_trajectory_csv(traj, path):
    """Emit the per-tick table: t,x*,u*,V,delta,d_eps,h,B,qp_status."""
    n = traj.states.shape[1] if len(traj) else 0
    m = traj.inputs.shape[1] if len(traj) else 0
    cols = ["t"]
    cols += ["x%d" % i for i in range(n)]
    cols += ["u%d" % i for i in range(m)]
    cols += ["V", "delta", "d_eps", "h", "B", "qp_status"]
    lines = [",".join(cols)]
    for i in range(len(traj)):
        row = ["%.17g" % traj.times[i]]
        row += ["%.17g" % v for v in traj.states[i]]
        row += ["%.17g" % v for v in traj.inputs[i]]
        diag = traj.diagnostics[i]
        row += ["%.17g" % _diag_value(diag, f) for f in _CSV_FIELDS]
        row.append(_diag_status(diag))
        lines.append(",".join(row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def write_events_csv(traj, path):
    """Emit the hybrid-event sidecar: t_event,kind."""
    lines = ["t_event,kind"]
    for t_event, kind in traj.events:
        lines.append("%.17g,%s" % (t_event, kind))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
