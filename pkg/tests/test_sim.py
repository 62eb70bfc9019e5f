"""Plant catalogue, RK4 stepping, and the closed-loop simulator."""

import numpy as np
import pytest

from qpsafe import models, sim
from qpsafe.iolin import lie_bundle, io_control


def _autonomous(n, f):
    return models.ControlAffineModel(
        "auto", n, 1, f, lambda x: np.zeros((n, 1)))


class ConstantInput:
    def __init__(self, u):
        self.u = np.atleast_1d(np.asarray(u, dtype=float))

    def tick(self, x, t):
        return self.u, None


class FeedforwardIO:
    """Pure feedforward on the nominal model: mu = 0, u = u_ff."""

    def __init__(self, nominal):
        self.nominal = nominal

    def tick(self, x, t):
        return io_control(lie_bundle(self.nominal, x), np.zeros(1)), None


def test_rk4_zero_field_holds_state():
    mdl = _autonomous(2, lambda x: np.zeros(2))
    out = sim.step_rk4(mdl, [3.0, -1.0], [7.0], 0.5)
    assert np.array_equal(out, [3.0, -1.0])


def test_rk4_matches_exponential():
    mdl = _autonomous(1, lambda x: -x)
    out = sim.step_rk4(mdl, [1.0], [0.0], 0.1)
    assert abs(out[0] - np.exp(-0.1)) < 1e-7


def test_rk4_double_integrator_exact():
    mdl = models.ControlAffineModel(
        "di", 2, 1, lambda x: np.array([x[1], 0.0]),
        lambda x: np.array([[0.0], [1.0]]))
    out = sim.step_rk4(mdl, [0.0, 0.0], [1.0], 0.1)
    # Polynomial dynamics: RK4 reproduces x = u t^2/2, v = u t exactly.
    assert out == pytest.approx([0.005, 0.1], abs=1e-15)


def test_rk4_rejects_bad_dt_and_nonfinite():
    mdl = _autonomous(1, lambda x: -x)
    with pytest.raises(ValueError):
        sim.step_rk4(mdl, [1.0], [0.0], 0.0)
    blowup = _autonomous(1, lambda x: x * x * 1e300)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(sim.SimulationError) as err:
            sim.step_rk4(blowup, [1.0], [0.0], 1.0)
    assert err.value.last_state is not None


def test_rk4_fourth_order_slope():
    # Halving dt cuts the one-step-per-interval error about 16x.
    pair = models.inverted_pendulum()
    mdl = pair.truth
    x0 = np.array([0.4, 0.0])
    u = np.array([0.3])

    def integrate(dt, t_end=0.32):
        x = x0.copy()
        for _ in range(int(round(t_end / dt))):
            x = sim.step_rk4(mdl, x, u, dt)
        return x

    ref = integrate(1e-4)
    errs = [np.linalg.norm(integrate(dt) - ref) for dt in (0.02, 0.01)]
    ratio = errs[0] / errs[1]
    assert 12.0 < ratio < 20.0


def test_simulate_zero_order_hold_and_tick_grid():
    pair = models.spring_cart(1)
    traj = sim.simulate(pair, ConstantInput([0.5]), [0.0, 0.0], 0.2,
                        ctrl_rate=100.0, substeps=10)
    assert len(traj) == 20
    assert traj.times == pytest.approx(np.arange(20) / 100.0)
    # Input columns are piecewise constant with breakpoints only at ticks.
    assert np.all(traj.inputs == 0.5)
    assert traj.final_time == pytest.approx(0.2)


def test_simulate_feedforward_holds_setpoint_without_mismatch():
    pair = models.spring_cart(1)
    target = pair.nominal.params["target_m"]
    x0 = np.array([target, 0.0])
    traj = sim.simulate(pair, FeedforwardIO(pair.nominal), x0, 1.0)
    # Already at the set-point with matching models: u_ff keeps it there.
    assert abs(traj.final_state[0] - target) < 1e-9
    assert abs(traj.final_state[1]) < 1e-9


def test_simulate_feedforward_mismatch_leaves_tracking_error():
    pair = models.spring_cart(4)
    target = pair.nominal.params["target_m"]
    x0 = np.array([target, 0.0, 0.0, 0.0])
    traj = sim.simulate(pair, FeedforwardIO(pair.nominal), x0, 2.0)
    # The unmodeled coupling spring pulls the cart off the target and the
    # nominal feedforward cannot hold it there: the error is strictly
    # positive.
    assert abs(traj.final_state[0] - target) > 1e-6


def test_simulate_controller_error_carries_tick_index():
    pair = models.spring_cart(1)

    class Broken:
        def tick(self, x, t):
            if t >= 0.05:
                raise RuntimeError("sensor dropout")
            return np.zeros(1), None

    with pytest.raises(sim.SimulationError, match="tick 5"):
        sim.simulate(pair, Broken(), [0.0, 0.0], 1.0)


def test_bouncing_mass_first_event_and_reset_velocity():
    pair = models.bouncing_mass()
    hyb = models.bouncing_mass_hybrid(restitution=0.5)
    hits = []
    traj = sim.simulate(pair, ConstantInput([0.0]), [1.0, 0.0], 1.0,
                        hybrid=hyb,
                        on_event=lambda t, xm, xp: hits.append((xm, xp)))
    t_event, kind = traj.events[0]
    assert kind == "reset"
    assert t_event == pytest.approx(np.sqrt(2.0 / 9.81), abs=1e-6)
    # Impact speed sqrt(2 g h) = 4.429 m/s, halved and flipped by the reset.
    x_minus, x_plus = hits[0]
    assert x_minus[1] == pytest.approx(-np.sqrt(2.0 * 9.81), abs=1e-3)
    assert x_plus[1] == pytest.approx(0.5 * np.sqrt(2.0 * 9.81), abs=1e-3)


def test_hybrid_guard_positive_after_every_reset():
    pair = models.bouncing_mass()
    hyb = models.bouncing_mass_hybrid(restitution=0.5, max_events=30)
    seen = []

    def on_event(t, x_minus, x_plus):
        seen.append((t, hyb.guard(x_plus)))

    # 1.2 s covers three bounces but stays short of the Zeno pile-up.
    traj = sim.simulate(pair, ConstantInput([0.0]), [1.0, 0.0], 1.2,
                        hybrid=hyb, on_event=on_event)
    assert len(seen) == len(traj.events) >= 2
    assert all(g > 0.0 for _, g in seen)
    # Bisection pins each event to 1e-9 s: check against ballistic times.
    t1 = np.sqrt(2.0 / 9.81)
    assert abs(traj.events[0][0] - t1) < 1e-6
    assert abs(traj.events[1][0] - 2.0 * t1) < 1e-6


def test_hybrid_event_budget_enforced():
    pair = models.bouncing_mass()
    hyb = models.bouncing_mass_hybrid(restitution=0.9, max_events=2)
    with pytest.raises(sim.SimulationError, match="max_events"):
        sim.simulate(pair, ConstantInput([0.0]), [1.0, 0.0], 5.0,
                     hybrid=hyb)


def test_spring_cart_cases():
    c1 = models.spring_cart(1)
    assert c1.truth.params == pytest.approx(c1.nominal.params)
    c2 = models.spring_cart(2)
    assert c2.truth.params["mass_kg"] == pytest.approx(
        c2.nominal.params["mass_kg"] + 1.5)
    c4 = models.spring_cart(4)
    assert c4.truth.n == 4 and c4.nominal.n == 2
    assert c4.observe(np.array([1.0, 2.0, 3.0, 4.0])) == pytest.approx(
        [1.0, 2.0])
    for case in (3, 5, 6):
        pair = models.spring_cart(case)
        assert pair.truth.n > pair.nominal.n
        assert pair.truth.params["dist_amp_N"] == 2.0
        assert pair.truth.params["dist_hz"] == 1.5
    with pytest.raises(ValueError):
        models.spring_cart(7)


def test_disturbance_clock_produces_sinusoidal_force():
    pair = models.spring_cart(3)
    mdl = pair.truth
    # Integrate the autonomous clock; acceleration of the free cart must
    # track (a sin(2 pi f t) - c v)/m.
    x = np.array([0.0, 0.0, 0.0, 1.0])
    dt = 1e-3
    for k in range(500):
        x = sim.step_rk4(mdl, x, [0.0], dt)
    t = 500 * dt
    assert x[2] == pytest.approx(np.sin(2 * np.pi * 1.5 * t), abs=1e-9)
    acc = mdl.f(x)[1]
    expected = (2.0 * x[2] - 2.0 * x[1]) / mdl.params["mass_kg"]
    assert acc == pytest.approx(expected, rel=1e-12)


def test_plant_pair_dimension_checks():
    a = _autonomous(2, lambda x: np.zeros(2))
    b = _autonomous(3, lambda x: np.zeros(3))
    with pytest.raises(ValueError, match="observe"):
        models.PlantPair(b, a)
    pair = models.PlantPair(b, a, observe=lambda x: x[:2])
    assert pair.observe(np.array([1.0, 2.0, 3.0])) == pytest.approx([1, 2])
    with pytest.raises(ValueError):
        models.ControlAffineModel("bad", 0, 1, None, None)


def test_trajectory_validation_and_csv_round_trip(tmp_path):
    pair = models.spring_cart(1)
    diag = {"v_eps": 1.25, "delta": 0.0, "d_eps": 0.0, "h": 0.05,
            "b_barrier": 20.0, "qp_status": "optimal"}

    class WithDiag:
        def tick(self, x, t):
            return np.array([0.25]), dict(diag)

    traj = sim.simulate(pair, WithDiag(), [0.0, 0.0], 0.05)
    csv = tmp_path / "run.csv"
    sim.write_trajectory_csv(traj, csv)
    lines = csv.read_text().strip().split("\n")
    assert lines[0] == "t,x0,x1,u0,V,delta,d_eps,h,B,qp_status"
    first = lines[1].split(",")
    assert float(first[0]) == 0.0
    assert float(first[4]) == 1.25
    assert first[-1] == "optimal"
    # 17 significant digits: values survive a text round trip bit-exactly.
    assert float(lines[2].split(",")[1]) == traj.states[1][0]

    events = tmp_path / "events.csv"
    sim.write_events_csv(traj, events)
    assert events.read_text().startswith("t_event,kind")

    with pytest.raises(ValueError):
        sim.Trajectory([0.0, 0.0], [[0.0], [0.0]], [[0.0], [0.0]],
                       [None, None], [], [0.0], 0.1)


def test_simulate_csv_deterministic(tmp_path):
    pair = models.spring_cart(3)

    class Damped:
        def tick(self, x, t):
            return np.array([-3.0 * x[0] - 1.0 * x[1]]), None

    blobs = []
    for name in ("a.csv", "b.csv"):
        traj = sim.simulate(pair, Damped(), [0.01, 0.0, 0.0, 1.0], 0.5)
        path = tmp_path / name
        sim.write_trajectory_csv(traj, path)
        blobs.append(path.read_bytes())
    assert blobs[0] == blobs[1]


def test_builtin_catalogue_names():
    cat = models.builtin_models()
    assert set(cat) == {"spring_cart", "inverted_pendulum", "bouncing_mass"}
    pair = cat["inverted_pendulum"](true_mass=1.5)
    assert pair.truth.params["mass_kg"] == 1.5
    assert pair.nominal.params["mass_kg"] == 1.0
