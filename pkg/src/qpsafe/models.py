"""Control-affine plant models and the built-in experiment catalogue.

A model is xdot = f(x) + g(x) u with outputs y(x) of relative degree two.
Closed-form Lie derivatives travel with the model so the controller layer
never differentiates numerically. A PlantPair bundles the truth plant used
for integration with the nominal plant the controller is allowed to see;
any parameter (or even state-dimension) difference between the two is the
model uncertainty under study.

Disturbance forces are modeled with autonomous clock states
(s' = w c, c' = -w s, force = a s) so every drift field stays autonomous
and integrators need no explicit time argument.
"""

import numpy as np

GRAVITY = 9.81


class ControlAffineModel:
    """Container for one control-affine plant.

    f(x) returns the drift (n,), g(x) the input matrix (n, m), y(x) the
    tracking outputs (m,), and lie(x) a dict with the closed-form bundle
    {"y", "ydot", "lf2y", "lglfy"} used by the feedback-linearizing layer.
    """

    def __init__(self, name, n, m, f, g, y=None, lie=None, params=None):
        if n < 1 or m < 1:
            raise ValueError("state and input dimensions must be positive")
        self.name = name
        self.n = int(n)
        self.m = int(m)
        self.f = f
        self.g = g
        self.y = y
        self.lie = lie
        self.params = dict(params or {})

    def __repr__(self):
        return "ControlAffineModel(%r, n=%d, m=%d)" % (
            self.name, self.n, self.m)


class PlantPair:
    """Truth plant plus the nominal plant the controller believes in.

    observe maps a truth state to nominal coordinates; it defaults to the
    identity, which requires equal state dimensions. A truth plant with
    extra (unmodeled) states supplies its own projection.
    """

    def __init__(self, truth, nominal, observe=None):
        if truth.m != nominal.m:
            raise ValueError("truth and nominal input dimensions differ")
        if observe is None:
            if truth.n != nominal.n:
                raise ValueError(
                    "truth has %d states, nominal %d: an observe map is "
                    "required" % (truth.n, nominal.n))
            observe = lambda x: np.asarray(x, dtype=float)
        self.truth = truth
        self.nominal = nominal
        self.observe = observe

    def __repr__(self):
        return "PlantPair(truth=%r, nominal=%r)" % (
            self.truth.name, self.nominal.name)


class HybridSpec:
    """Guard/reset description for plants with a switching surface.

    The guard is a scalar function of the state; a crossing from positive
    to nonpositive during integration triggers the reset map. The reset
    must return a state with guard(x) > 0 again.
    """

    def __init__(self, guard, reset, max_events=100):
        if max_events < 1:
            raise ValueError("max_events must be at least 1")
        self.guard = guard
        self.reset = reset
        self.max_events = int(max_events)


def _cart_output(target):
    def y(x):
        return np.array([x[0] - target])
    return y


def _cart_lie(mass, damping, target, spring=0.0, partner=None, force=None):
    """Closed-form Lie bundle for one cart driven through y = x1 - xd.

    spring/partner describe an optional coupling spring to a second cart
    whose position lives at state index partner; force(x) is an optional
    additive force on this cart (disturbance clock readout).
    """

    def lie(x):
        acc = -damping * x[1]
        if spring:
            acc += spring * (x[partner] - x[0])
        if force is not None:
            acc += force(x)
        return {
            "y": np.array([x[0] - target]),
            "ydot": np.array([x[1]]),
            "lf2y": np.array([acc / mass]),
            "lglfy": np.array([[1.0 / mass]]),
        }
    return lie


def _single_cart(name, mass, damping, target):
    def f(x):
        return np.array([x[1], -damping * x[1] / mass])

    def g(x):
        return np.array([[0.0], [1.0 / mass]])

    return ControlAffineModel(
        name, 2, 1, f, g,
        y=_cart_output(target),
        lie=_cart_lie(mass, damping, target),
        params={"mass_kg": mass, "damping_Ns_per_m": damping,
                "target_m": target})


def _cart_with_clock(name, mass, damping, target, amp, hz):
    # States (x1, v1, s, c); the clock reads out force amp*s on the cart.
    w = 2.0 * np.pi * hz

    def f(x):
        return np.array([
            x[1],
            (-damping * x[1] + amp * x[2]) / mass,
            w * x[3],
            -w * x[2],
        ])

    def g(x):
        return np.array([[0.0], [1.0 / mass], [0.0], [0.0]])

    return ControlAffineModel(
        name, 4, 1, f, g,
        y=_cart_output(target),
        lie=_cart_lie(mass, damping, target, force=lambda x: amp * x[2]),
        params={"mass_kg": mass, "damping_Ns_per_m": damping,
                "target_m": target, "dist_amp_N": amp, "dist_hz": hz})


def _two_carts(name, m1, m2, damping, spring, target,
               amp=0.0, hz=0.0, shake_cart1=False, shake_cart2=False):
    """Cart 1 (actuated) coupled to a free cart 2 by a spring.

    With a nonzero amplitude, clock states (s, c) are appended and the
    force amp*s is applied to whichever carts are flagged.
    """
    clocked = amp != 0.0
    w = 2.0 * np.pi * hz

    def f(x):
        k_force = spring * (x[2] - x[0])
        f1 = -damping * x[1] + k_force
        f2 = -damping * x[3] - k_force
        if clocked:
            if shake_cart1:
                f1 += amp * x[4]
            if shake_cart2:
                f2 += amp * x[4]
            return np.array([x[1], f1 / m1, x[3], f2 / m2,
                             w * x[5], -w * x[4]])
        return np.array([x[1], f1 / m1, x[3], f2 / m2])

    def g(x):
        col = np.zeros((6 if clocked else 4, 1))
        col[1, 0] = 1.0 / m1
        return col

    force = None
    if clocked and shake_cart1:
        force = lambda x: amp * x[4]

    return ControlAffineModel(
        name, 6 if clocked else 4, 1, f, g,
        y=_cart_output(target),
        lie=_cart_lie(m1, damping, target, spring=spring, partner=2,
                      force=force),
        params={"mass1_kg": m1, "mass2_kg": m2,
                "damping_Ns_per_m": damping, "spring_N_per_m": spring,
                "target_m": target, "dist_amp_N": amp, "dist_hz": hz})


def spring_cart(case, target=0.02, cart_mass=0.75, load_mass=1.5,
                damping=2.0, spring=200.0, dist_amp=2.0, dist_hz=1.5):
    """Six-case cart family with growing truth/nominal mismatch.

    Case 1: truth == nominal single cart.
    Case 2: truth cart carries an extra load mass.
    Case 3: case 2 plus a sinusoidal shaking force on the cart.
    Case 4: loaded cart coupled by a spring to a second loaded cart the
            nominal model knows nothing about.
    Case 5: case 4 with the shaking force applied to both carts.
    Case 6: case 4 with the sinusoid applied to the second cart only.
    """
    nominal = _single_cart("cart_nominal", cart_mass, damping, target)
    loaded = cart_mass + load_mass
    if case == 1:
        truth = _single_cart("cart_case1", cart_mass, damping, target)
    elif case == 2:
        truth = _single_cart("cart_case2", loaded, damping, target)
    elif case == 3:
        truth = _cart_with_clock("cart_case3", loaded, damping, target,
                                 dist_amp, dist_hz)
    elif case == 4:
        truth = _two_carts("cart_case4", loaded, loaded, damping, spring,
                           target)
    elif case == 5:
        truth = _two_carts("cart_case5", loaded, loaded, damping, spring,
                           target, amp=dist_amp, hz=dist_hz,
                           shake_cart1=True, shake_cart2=True)
    elif case == 6:
        truth = _two_carts("cart_case6", loaded, loaded, damping, spring,
                           target, amp=dist_amp, hz=dist_hz,
                           shake_cart2=True)
    else:
        raise ValueError("unknown spring_cart case %r (expected 1..6)" % case)
    if truth.n == nominal.n:
        observe = None
    else:
        observe = lambda x: np.asarray(x[:2], dtype=float)
    return PlantPair(truth, nominal, observe=observe)


def _pendulum(name, mass, length, target):
    # theta'' = (G/l) sin(theta) + u / (m l^2), inverted at theta = 0.
    ml2 = mass * length * length

    def f(x):
        return np.array([x[1], GRAVITY / length * np.sin(x[0])])

    def g(x):
        return np.array([[0.0], [1.0 / ml2]])

    def lie(x):
        return {
            "y": np.array([x[0] - target]),
            "ydot": np.array([x[1]]),
            "lf2y": np.array([GRAVITY / length * np.sin(x[0])]),
            "lglfy": np.array([[1.0 / ml2]]),
        }

    return ControlAffineModel(
        name, 2, 1, f, g,
        y=lambda x: np.array([x[0] - target]), lie=lie,
        params={"mass_kg": mass, "length_m": length, "target_rad": target})


def inverted_pendulum(target=0.0, mass=1.0, length=1.0,
                      true_mass=None, true_length=None):
    """Torque-driven inverted pendulum, uncertain mass/length.

    The truth parameters default to the nominal ones (no mismatch).
    """
    truth = _pendulum("pendulum_true",
                      mass if true_mass is None else true_mass,
                      length if true_length is None else true_length,
                      target)
    nominal = _pendulum("pendulum_nominal", mass, length, target)
    return PlantPair(truth, nominal)


def bouncing_mass(target=0.0):
    """Vertical point mass under gravity; pairs with bouncing_mass_hybrid."""

    def f(x):
        return np.array([x[1], -GRAVITY])

    def g(x):
        return np.array([[0.0], [1.0]])

    def lie(x):
        return {
            "y": np.array([x[0] - target]),
            "ydot": np.array([x[1]]),
            "lf2y": np.array([-GRAVITY]),
            "lglfy": np.array([[1.0]]),
        }

    model = ControlAffineModel(
        "bouncing_mass", 2, 1, f, g,
        y=lambda x: np.array([x[0] - target]), lie=lie,
        params={"mass_kg": 1.0, "target_m": target})
    return PlantPair(model, model)


def bouncing_mass_hybrid(restitution=0.5, max_events=100):
    """Ground impact for the bouncing mass: velocity reversal at height 0."""

    def guard(x):
        return x[0]

    def reset(x):
        return np.array([x[0], -restitution * x[1]])

    return HybridSpec(guard, reset, max_events=max_events)


def lift_initial_state(pair, x_obs0):
    """Embed an observed initial state into the truth coordinates.

    Hidden states start at rest; a disturbance clock starts at
    (s, c) = (0, 1) so the force reads amp*sin(w t) from t = 0.
    """
    x_obs0 = np.atleast_1d(np.asarray(x_obs0, dtype=float))
    if x_obs0.shape != (pair.nominal.n,):
        raise ValueError("initial state must have the nominal dimension %d"
                         % pair.nominal.n)
    x = np.zeros(pair.truth.n)
    x[:pair.nominal.n] = x_obs0
    if pair.truth.params.get("dist_amp_N", 0.0) != 0.0:
        x[-1] = 1.0
    return x


def builtin_models():
    """Named constructors for the shipped plants."""
    return {
        "spring_cart": spring_cart,
        "inverted_pendulum": inverted_pendulum,
        "bouncing_mass": bouncing_mass,
    }
