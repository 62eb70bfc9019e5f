"""Lie bundles, the finite-difference oracle, and the IO-linearizing map."""

import numpy as np
import pytest

from qpsafe import models, sim
from qpsafe.iolin import (LieBundle, RelativeDegreeError, _flow,
                          fd_lie_oracle, io_control, lie_bundle, transverse,
                          uncertainty_between)


def _double_integrator(mass=1.0, target=0.0):
    def lie(x):
        return {"y": np.array([x[0] - target]),
                "ydot": np.array([x[1]]),
                "lf2y": np.array([0.0]),
                "lglfy": np.array([[1.0 / mass]])}

    return models.ControlAffineModel(
        "di", 2, 1,
        lambda x: np.array([x[1], 0.0]),
        lambda x: np.array([[0.0], [1.0 / mass]]),
        y=lambda x: np.array([x[0] - target]), lie=lie)


def _operating_states(model, rng, count):
    return [rng.uniform(-0.6, 0.6, model.n) for _ in range(count)]


def test_lie_bundle_double_integrator():
    mdl = _double_integrator(mass=2.0, target=0.5)
    lb = lie_bundle(mdl, [1.0, -0.25])
    assert lb.y == pytest.approx([0.5])
    assert lb.ydot == pytest.approx([-0.25])
    assert lb.lf2y == pytest.approx([0.0])
    assert lb.lglfy[0, 0] == pytest.approx(0.5)


def test_lie_bundle_spring_cart_at_rest():
    mdl = models.spring_cart(1).nominal
    lb = lie_bundle(mdl, [0.0, 0.0])
    assert lb.y == pytest.approx([-0.02])
    assert lb.ydot == pytest.approx([0.0])
    assert lb.lf2y == pytest.approx([0.0])
    assert lb.lglfy[0, 0] == pytest.approx(1.0 / 0.75)


def test_lie_bundle_pendulum_gravity_term():
    mdl = models.inverted_pendulum().nominal
    theta = 0.3
    lb = lie_bundle(mdl, [theta, 0.0])
    assert lb.lf2y == pytest.approx([9.81 * np.sin(theta)], rel=1e-12)


def test_lie_bundle_flags_singular_decoupling():
    def lie(x):
        return {"y": np.array([x[0]]), "ydot": np.array([x[1]]),
                "lf2y": np.array([0.0]), "lglfy": np.array([[1e-12]])}

    mdl = models.ControlAffineModel(
        "sing", 2, 1, lambda x: np.array([x[1], 0.0]),
        lambda x: np.array([[0.0], [1e-12]]),
        y=lambda x: np.array([x[0]]), lie=lie)
    # Condition number of a 1x1 matrix is 1; force a genuine 2x2 failure.
    def lie2(x):
        return {"y": x[:2], "ydot": x[2:4],
                "lf2y": np.zeros(2),
                "lglfy": np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12]])}

    mdl2 = models.ControlAffineModel(
        "sing2", 4, 2, lambda x: np.zeros(4), lambda x: np.zeros((4, 2)),
        y=lambda x: x[:2], lie=lie2)
    with pytest.raises(RelativeDegreeError):
        lie_bundle(mdl2, np.zeros(4))
    del mdl


def test_fd_oracle_double_integrator_near_exact():
    mdl = _double_integrator()
    fd = fd_lie_oracle(mdl, [0.3, -0.7])
    lb = lie_bundle(mdl, [0.3, -0.7])
    assert fd.ydot == pytest.approx(lb.ydot, abs=1e-9)
    assert fd.lf2y == pytest.approx(lb.lf2y, abs=1e-9)
    assert fd.lglfy == pytest.approx(lb.lglfy, abs=1e-9)


@pytest.mark.parametrize("builder", [
    lambda: models.spring_cart(1).nominal,
    lambda: models.spring_cart(3).truth,
    lambda: models.spring_cart(4).truth,
    lambda: models.spring_cart(6).truth,
    lambda: models.inverted_pendulum().nominal,
    lambda: models.bouncing_mass().nominal,
])
def test_fd_oracle_agreement_over_random_states(builder):
    mdl = builder()
    rng = np.random.default_rng(11)
    for x in _operating_states(mdl, rng, 100):
        lb = lie_bundle(mdl, x)
        fd = fd_lie_oracle(mdl, x)
        for a, b in ((lb.ydot, fd.ydot), (lb.lf2y, fd.lf2y),
                     (lb.lglfy, fd.lglfy)):
            rel = np.max(np.abs(a - b)) / (1.0 + np.max(np.abs(a)))
            assert rel <= 1e-5


def test_fd_oracle_second_order_convergence():
    # Between two steps inside the truncation regime the error drops
    # about quadratically (Richardson pushes the measured order higher,
    # so only a lower bound is asserted).
    mdl = models.inverted_pendulum().nominal
    x = np.array([0.7, 0.4])
    exact = lie_bundle(mdl, x)
    errs = []
    for h in (0.05, 0.005):
        fd = fd_lie_oracle(mdl, x, h_fd=h)
        errs.append(abs(fd.ydot[0] - exact.ydot[0]))
    assert errs[0] / max(errs[1], 1e-300) > 50.0


def test_io_control_cancellation_and_division():
    lb = LieBundle([0.0], [0.0], [3.0], [[1.5]])
    assert io_control(lb, [3.0]) == pytest.approx([0.0])
    lb2 = LieBundle([0.0], [0.0], [0.0], [[2.0]])
    assert io_control(lb2, [4.0]) == pytest.approx([2.0])


def _measured_yddot_error(pair, mu, x0, ctrl_rate):
    class HeldMu:
        def tick(self, x, t):
            return io_control(lie_bundle(pair.nominal, x), mu), None

    traj = sim.simulate(pair, HeldMu(), x0, 0.4, ctrl_rate=ctrl_rate,
                        substeps=2)
    y = np.array([pair.truth.y(s)[0] for s in traj.states])
    dt = traj.times[1] - traj.times[0]
    ydd = (y[2:] - 2.0 * y[1:-1] + y[:-2]) / (dt * dt)
    return np.max(np.abs(ydd - mu[0]))


def test_exact_linearization_yddot_equals_mu():
    # truth == nominal, state-independent Lie terms: the loop is exactly
    # yddot = mu, so the second difference of logged y recovers mu.
    pair = models.PlantPair(_double_integrator(mass=2.0),
                            _double_integrator(mass=2.0))
    assert _measured_yddot_error(pair, np.array([0.8]), [0.2, 0.0],
                                 1000.0) < 1e-9


def test_exact_linearization_zoh_bias_shrinks_with_rate():
    # On a nonlinear plant the held input tracks mu only at tick instants;
    # the residual is first order in the tick length and vanishes with it.
    pair = models.inverted_pendulum()
    mu = np.array([0.8])
    e_slow = _measured_yddot_error(pair, mu, [0.2, 0.0], 1000.0)
    e_fast = _measured_yddot_error(pair, mu, [0.2, 0.0], 4000.0)
    assert e_slow < 5e-3
    assert e_slow / max(e_fast, 1e-300) > 3.0


def test_uncertainty_terms_vanish_without_mismatch():
    pair = models.spring_cart(1)
    rng = np.random.default_rng(5)
    for x in _operating_states(pair.nominal, rng, 25):
        d1, d2 = uncertainty_between(lie_bundle(pair.truth, x),
                                     lie_bundle(pair.nominal, x))
        assert np.max(np.abs(d1)) <= 1e-12
        assert np.max(np.abs(d2)) <= 1e-12


def test_uncertainty_terms_match_loaded_cart():
    # Truth mass 2.25 vs nominal 0.75: Delta2 = m_nom/m_true - 1 = -2/3,
    # and Delta1 picks up the damping-term mismatch.
    pair = models.spring_cart(2)
    x = np.array([0.01, 0.3])
    d1, d2 = uncertainty_between(lie_bundle(pair.truth, x),
                                 lie_bundle(pair.nominal, x))
    assert d2[0, 0] == pytest.approx(0.75 / 2.25 - 1.0, rel=1e-12)
    lf2_true = -2.0 * 0.3 / 2.25
    lf2_nom = -2.0 * 0.3 / 0.75
    assert d1[0] == pytest.approx(lf2_true - (1.0 + d2[0, 0]) * lf2_nom,
                                  rel=1e-12)


def test_closed_loop_uncertainty_relation_measured():
    # On the mismatched pair under the nominal IO law with held mu, the
    # measured yddot equals (1 + Delta2) mu + Delta1 at the tick state.
    pair = models.spring_cart(2)
    mu = np.array([1.2])
    x = np.array([0.004, 0.05])
    d1, d2 = uncertainty_between(lie_bundle(pair.truth, x),
                                 lie_bundle(pair.nominal, x))
    u = io_control(lie_bundle(pair.nominal, x), mu)
    h = 1e-3
    yp = pair.truth.y(_flow(pair.truth, x, u, h))[0]
    ym = pair.truth.y(_flow(pair.truth, x, u, -h))[0]
    y0 = pair.truth.y(x)[0]
    ydd = (yp - 2.0 * y0 + ym) / (h * h)
    assert ydd == pytest.approx((1.0 + d2[0, 0]) * mu[0] + d1[0], abs=1e-6)


def test_transverse_stacking():
    lb = LieBundle([1.0], [2.0], [0.0], [[1.0]])
    assert transverse(lb).eta == pytest.approx([1.0, 2.0])
    zero = LieBundle([0.0], [0.0], [0.0], [[1.0]])
    assert transverse(zero).eta == pytest.approx([0.0, 0.0])
    two = LieBundle([1.0, 2.0], [3.0, 4.0], [0.0, 0.0], np.eye(2))
    assert transverse(two).eta == pytest.approx([1.0, 2.0, 3.0, 4.0])


def test_lie_bundle_validation():
    with pytest.raises(ValueError):
        LieBundle([1.0], [2.0, 3.0], [0.0], [[1.0]])
    with pytest.raises(ValueError):
        LieBundle([np.inf], [0.0], [0.0], [[1.0]])
