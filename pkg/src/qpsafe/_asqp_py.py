"""Pure-numpy active-set core, the fallback when the compiled kernel is absent.

Solves min 1/2 z^T H z + f^T z subject to A z <= b from a FEASIBLE start z0,
H symmetric positive definite. The orchestration in qp.py (equality
elimination, elastic phase-1, status mapping) never changes between backends;
only this inner iteration does.

Status codes: 0 optimal, 1 iteration cap, 2 numerical failure.
"""

import numpy as np

OPTIMAL = 0
ITERATION_CAP = 1
NUMERICAL = 2


def _eq_solve(h, a_w, f, b_w, hinv_at_w):
    """Minimizer of the objective restricted to A_w z = b_w, via the Schur
    complement on H's inverse, plus one iterative-refinement pass."""
    if a_w.shape[0] == 0:
        z = np.linalg.solve(h, -f)
        r = h @ z + f
        z -= np.linalg.solve(h, r)
        return z, np.zeros(0)
    s = a_w @ hinv_at_w
    hf = np.linalg.solve(h, f)
    lam = np.linalg.solve(s, -(b_w + a_w @ hf))
    z = -hf - hinv_at_w @ lam
    # One refinement pass against the original KKT system.
    r1 = h @ z + f + a_w.T @ lam
    r2 = a_w @ z - b_w
    dl = np.linalg.solve(s, r2 - a_w @ np.linalg.solve(h, r1))
    dz = -np.linalg.solve(h, r1 + a_w.T @ dl)
    return z + dz, lam + dl


def iterate(h, f, a, b, z0, w0, max_iter):
    """Run the primal active-set loop. Returns (z, lam, w, status, n_iter).

    Blocking-constraint selection: smallest step ratio wins, lowest index on
    exact ties. Leaving constraint: most negative multiplier, lowest index on
    exact ties.
    """
    n = h.shape[0]
    mi = a.shape[0]
    z = np.array(z0, dtype=float)
    w = list(w0)
    lam_full = np.zeros(mi)
    stall = 0
    full_step = False

    hinv_at = np.linalg.solve(h, a.T) if mi else np.zeros((n, 0))

    for it in range(1, max_iter + 1):
        a_w = a[w] if w else np.zeros((0, n))
        g = h @ z + f
        hg = np.linalg.solve(h, g)
        if w:
            s = a_w @ hinv_at[:, w]
            try:
                lam_w = np.linalg.solve(s, -(a_w @ hg))
            except np.linalg.LinAlgError:
                return z, lam_full, np.array(w, dtype=int), NUMERICAL, it
            p = -hg - hinv_at[:, w] @ lam_w
        else:
            lam_w = np.zeros(0)
            p = -hg

        # After an unblocked full step the iterate already minimizes over the
        # current working set, so go straight to the multiplier test: the
        # recomputed step there is pure roundoff and can sit above the
        # stationarity tolerance when the multipliers are large.
        if full_step or np.max(np.abs(p)) <= 1e-11 * (1.0 + np.max(np.abs(z))):
            full_step = False
            dual_scale = 1.0 + (np.max(np.abs(lam_w)) if w else 0.0)
            if not w or np.min(lam_w) >= -1e-9 * dual_scale:
                b_w = b[w] if w else np.zeros(0)
                try:
                    z, lam_w = _eq_solve(h, a_w, f, b_w, hinv_at[:, w])
                except np.linalg.LinAlgError:
                    return z, lam_full, np.array(w, dtype=int), NUMERICAL, it
                lam_full[:] = 0.0
                if w:
                    lam_full[w] = np.maximum(lam_w, 0.0)
                return z, lam_full, np.array(w, dtype=int), OPTIMAL, it
            # Drop the worst multiplier; argmin takes the first on exact
            # ties. After a long degenerate stall, fall back to the lowest
            # negative index (Bland's rule) to break cycles.
            if stall > mi + n + 10:
                neg = [i for i, v in enumerate(lam_w)
                       if v < -1e-9 * dual_scale]
                w.pop(min(neg, key=lambda i: w[i]))
            else:
                w.pop(int(np.argmin(lam_w)))
            continue

        pmax = float(np.max(np.abs(p)))
        excluded = np.zeros(mi, dtype=bool)
        while True:
            alpha = 1.0
            blocker = -1
            for i in range(mi):
                if excluded[i] or i in w:
                    continue
                d = float(a[i] @ p)
                if d <= 1e-13 * (1.0 + pmax * float(np.max(np.abs(a[i])))):
                    continue
                slack = float(b[i] - a[i] @ z)
                r = max(slack, 0.0) / d
                if r < alpha:
                    alpha = r
                    blocker = i
            # A blocker in the span of the working rows cannot truly
            # block: A_w p = 0 forces its slack derivative to zero, so
            # any measured step ratio is roundoff. Adding it would make
            # the KKT system singular; rescan without it.
            if blocker >= 0 and _dependent(a, hinv_at, w, blocker):
                excluded[blocker] = True
                continue
            break
        z = z + alpha * p
        stall = stall + 1 if alpha <= 1e-14 else 0
        full_step = blocker < 0
        if blocker >= 0:
            w.append(blocker)

    return z, lam_full, np.array(w, dtype=int), ITERATION_CAP, max_iter


def _dependent(a, hinv_at, w, i):
    """True when row i adds no new direction over the working set,
    measured by the next Schur-complement pivot in the H^{-1} metric."""
    q_new = float(a[i] @ hinv_at[:, i])
    if not w:
        return q_new <= 0.0
    v = a[w] @ hinv_at[:, i]
    try:
        rho = q_new - float(v @ np.linalg.solve(a[w] @ hinv_at[:, w], v))
    except np.linalg.LinAlgError:
        return True
    return rho <= 1e-12 * q_new
