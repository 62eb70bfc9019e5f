"""Min-max robust conditions reduced to linear row pairs.

Each uncertain scalar condition has the form

    base + Delta1 + (1 + Delta2) s <= rhs

with s a scalar coupling variable (the nominal value of the uncertain
channel) and (Delta1, Delta2) ranging over a box |Delta1| <= d1_max,
|Delta2| <= d2_max with d2_max < 1. The worst case over the box is
attained at corners because the expression is affine in both Deltas,
which collapses the min-max into exactly two inequality rows

    (base + d1_max - rhs) + (1 + d2_max) s <= 0
    (base + d1_max - rhs) + (1 - d2_max) s <= 0

plus one equality defining s from the decision variables. A sampling
oracle re-checks solved QP points against the original box condition.
"""

import numpy as np


class UncertaintyBounds:
    """Box bounds on the (Delta1, Delta2) mismatch channels.

    One pair for the CLF channel, one for the CBF channel, and one per
    robustified plant constraint. clf_d1_mode selects whether the CLF
    additive bound is a constant or scales with ||L_gV|| (state_scaled).
    """

    def __init__(self, clf_d1=0.0, clf_d2=0.0, cbf_d1=0.0, cbf_d2=0.0,
                 per_constraint=None, clf_d1_mode="constant"):
        pairs = [("clf", clf_d1, clf_d2), ("cbf", cbf_d1, cbf_d2)]
        per_constraint = [tuple(map(float, pc))
                          for pc in (per_constraint or [])]
        for i, (d1, d2) in enumerate(per_constraint):
            pairs.append(("constraint %d" % i, d1, d2))
        for label, d1, d2 in pairs:
            if d1 < 0.0 or d2 < 0.0:
                raise ValueError("%s bounds must be nonnegative" % label)
            if d2 >= 1.0:
                raise ValueError(
                    "%s d2_max=%g >= 1: the two-row reduction degenerates"
                    % (label, d2))
        if clf_d1_mode not in ("constant", "state_scaled"):
            raise ValueError("clf_d1_mode must be constant or state_scaled")
        self.clf_d1 = float(clf_d1)
        self.clf_d2 = float(clf_d2)
        self.cbf_d1 = float(cbf_d1)
        self.cbf_d2 = float(cbf_d2)
        self.per_constraint = per_constraint
        self.clf_d1_mode = clf_d1_mode

    @classmethod
    def zeros(cls, n_constraints=0):
        return cls(per_constraint=[(0.0, 0.0)] * n_constraints)

    def clf_effective_d1(self, lgv_norm):
        """Additive CLF bound, scaled by ||L_gV|| in state_scaled mode."""
        if self.clf_d1_mode == "state_scaled":
            return self.clf_d1 * float(lgv_norm)
        return self.clf_d1

    @property
    def all_zero(self):
        return (self.clf_d1 == 0.0 and self.clf_d2 == 0.0
                and self.cbf_d1 == 0.0 and self.cbf_d2 == 0.0
                and all(d1 == 0.0 and d2 == 0.0
                        for d1, d2 in self.per_constraint))


class RobustRows:
    """Two inequality rows plus the coupling equality for one condition.

    Row vectors live in a local column space documented by the builder;
    the controller embeds them into the full decision vector.
    """

    def __init__(self, ineq_rows, coupling_eqs, labels, coupling_labels):
        self.ineq_rows = [(np.asarray(a, dtype=float), float(b))
                          for a, b in ineq_rows]
        self.coupling_eqs = [(np.asarray(a, dtype=float), float(b))
                             for a, b in coupling_eqs]
        self.labels = list(labels)
        self.coupling_labels = list(coupling_labels)
        if len(self.labels) != len(self.ineq_rows):
            raise ValueError("one label per inequality row")
        for a, _ in self.coupling_eqs:
            if np.max(np.abs(a)) == 0.0:
                raise ValueError("degenerate coupling row")


def _two_rows(psi0_max, d2_max, s_col, n_cols, rhs_col=None, label=""):
    # psi0_max + (1 +- d2) s <= 0, optionally minus a relaxation column.
    rows = []
    labels = []
    for sign, tag in ((1.0, "pos"), (-1.0, "neg")):
        a = np.zeros(n_cols)
        a[s_col] = 1.0 + sign * d2_max
        if rhs_col is not None:
            a[rhs_col] = -1.0
        rows.append((a, -psi0_max))
        labels.append("%s_%s" % (label, tag))
    return rows, labels


def robust_clf_rows(clf, terms, bounds, relaxed=True):
    """Robust CLF condition over local columns [mu (m), mu_v, delta?].

    terms is the clf_terms dict at the current state. Produces
    {Psi0_max + (1 +- d2) mu_v <= delta} with
    Psi0_max = L_fV + (c3/eps)V + d1_eff, plus mu_v = L_gV . mu.
    With relaxed=False the delta column is omitted.
    """
    lgv = np.asarray(terms["lgv"], dtype=float)
    m = lgv.shape[0]
    d1_eff = bounds.clf_effective_d1(np.linalg.norm(lgv))
    psi0 = terms["lfv"] + (clf.c3 / clf.eps) * terms["v"] + d1_eff
    n_cols = m + 2 if relaxed else m + 1
    rows, labels = _two_rows(psi0, bounds.clf_d2, s_col=m, n_cols=n_cols,
                             rhs_col=m + 1 if relaxed else None,
                             label="clf_robust")
    coupling = np.zeros(n_cols)
    coupling[:m] = -lgv
    coupling[m] = 1.0
    return RobustRows(rows, [(coupling, 0.0)], labels, ["mu_v_viol"])


def robust_cbf_rows(bt, bounds):
    """Robust CBF condition over local columns [u (m), mu_b].

    bt is the barrier_terms dict. Produces
    {(d1 - gamma/B) + (1 +- d2) mu_b <= 0} with mu_b = L_fB + L_gB u.
    """
    lgb = np.asarray(bt["lgb"], dtype=float)
    m = lgb.shape[0]
    gamma_over_b = bt["row"][1] + bt["lfb"]
    psi0 = bounds.cbf_d1 - gamma_over_b
    rows, labels = _two_rows(psi0, bounds.cbf_d2, s_col=m, n_cols=m + 1,
                             label="cbf_robust")
    coupling = np.zeros(m + 1)
    coupling[:m] = -lgb
    coupling[m] = 1.0
    return RobustRows(rows, [(coupling, bt["lfb"])], labels, ["mu_b_viol"])


def robust_constraint_rows(a_c_row, b_c_row, bounds_i):
    """One robust plant constraint over local columns [u (m), mu_c].

    Produces {d1 + (1 +- d2) mu_c <= 0} with mu_c = a_c . u - b_c.
    Zero bounds reduce exactly to the nominal a_c . u <= b_c. Constraints
    that do not depend on the model (pure input bounds) should use zero
    bounds: their rows are unaffected by mismatch.
    """
    a_c = np.atleast_1d(np.asarray(a_c_row, dtype=float))
    m = a_c.shape[0]
    d1, d2 = float(bounds_i[0]), float(bounds_i[1])
    if d1 < 0.0 or d2 < 0.0:
        raise ValueError("constraint bounds must be nonnegative")
    if d2 >= 1.0:
        raise ValueError("constraint d2_max >= 1 rejected")
    rows, labels = _two_rows(d1, d2, s_col=m, n_cols=m + 1,
                             label="constraint_robust")
    coupling = np.zeros(m + 1)
    coupling[:m] = -a_c
    coupling[m] = 1.0
    return RobustRows(rows, [(coupling, -float(b_c_row))], labels,
                      ["mu_c_viol"])


def _condition_parts(condition_kind, solution):
    if condition_kind == "clf":
        base = solution["lfv"] + solution["rate"] * solution["v"]
        return base, solution["mu_v"], solution.get("delta", 0.0)
    if condition_kind == "cbf":
        return 0.0, solution["mu_b"], solution["gamma_over_b"]
    if condition_kind == "constraint":
        return 0.0, solution["mu_c"], 0.0
    raise ValueError("unknown condition kind %r" % condition_kind)


def corner_uncertainty_margin(condition_kind, solution, bounds_pair):
    """Worst margin over the 4 box corners (exact for affine conditions)."""
    base, s, rhs = _condition_parts(condition_kind, solution)
    d1, d2 = bounds_pair
    worst = -np.inf
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            worst = max(worst, base + s1 * d1 + (1.0 + s2 * d2) * s - rhs)
    return worst


def sample_uncertainty_margin(condition_kind, solution, bounds_pair,
                              n_samples=200, seed=0):
    """Worst (LHS - RHS) of the box condition at solved decision values.

    Samples the 4 corners plus uniform interior draws; a feasible QP
    solution must come out <= 1e-9. bounds_pair is the effective
    (d1_max, d2_max) for this condition.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    base, s, rhs = _condition_parts(condition_kind, solution)
    d1, d2 = bounds_pair
    worst = corner_uncertainty_margin(condition_kind, solution, bounds_pair)
    rng = np.random.default_rng(seed)
    draws1 = rng.uniform(-d1, d1, n_samples - 4)
    draws2 = rng.uniform(-d2, d2, n_samples - 4)
    vals = base + draws1 + (1.0 + draws2) * s - rhs
    if vals.size:
        worst = max(worst, float(np.max(vals)))
    return worst
