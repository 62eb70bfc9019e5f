"""Small dense matrix helpers: Lyapunov solve, symmetric eigen extremes, PD test.

Everything here operates on plain numpy arrays at controller scale (n <= ~10),
so exact dense methods are preferred over anything iterative.
"""

import numpy as np

SYM_TOL = 1e-12
LYAP_RESIDUAL_TOL = 1e-10
PD_PIVOT_TOL = 1e-12


def _as_square(m, name):
    a = np.atleast_2d(np.asarray(m, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError("%s must be square, got shape %s" % (name, (a.shape,)))
    if not np.all(np.isfinite(a)):
        raise ValueError("%s has non-finite entries" % name)
    return a


def _check_symmetric(a, name):
    if a.shape[0] and np.max(np.abs(a - a.T)) > SYM_TOL * max(1.0, np.max(np.abs(a))):
        raise ValueError("%s is not symmetric within %g" % (name, SYM_TOL))


def solve_lyapunov(a_cl, q):
    """Solve A^T P + P A + Q = 0 for symmetric positive definite P.

    a_cl must be Hurwitz and q symmetric positive definite. Uses the
    Kronecker-sum vectorization with a dense solve, which is exact at the
    small sizes used here. Accepts scalars and returns a matching shape.
    """
    scalar_in = np.ndim(a_cl) == 0
    a = _as_square(a_cl, "a_cl")
    qm = _as_square(q, "q")
    if a.shape != qm.shape:
        raise ValueError("dimension mismatch: a_cl %s vs q %s" % (a.shape, qm.shape))
    _check_symmetric(qm, "q")

    eigs = np.linalg.eigvals(a)
    worst = float(np.max(eigs.real))
    if worst >= 0.0:
        raise ValueError(
            "a_cl is not Hurwitz: max real part of eigenvalues = %.6g" % worst
        )

    n = a.shape[0]
    eye = np.eye(n)
    # vec_row(A^T P + P A) = (A^T (x) I + I (x) A^T) vec_row(P)
    k = np.kron(a.T, eye) + np.kron(eye, a.T)
    p = np.linalg.solve(k, -qm.reshape(-1)).reshape(n, n)
    p = 0.5 * (p + p.T)

    residual = np.max(np.abs(a.T @ p + p @ a + qm))
    if residual > LYAP_RESIDUAL_TOL * max(1.0, np.max(np.abs(qm))):
        raise ValueError("Lyapunov residual %.3e exceeds tolerance" % residual)
    if scalar_in:
        return float(p[0, 0])
    return p


def eig_sym_extremes(m):
    """Return (lambda_min, lambda_max) of a symmetric matrix."""
    a = _as_square(m, "m")
    _check_symmetric(a, "m")
    w = np.linalg.eigvalsh(a)
    return float(w[0]), float(w[-1])


def is_positive_definite(m):
    """True iff m is symmetric with a Cholesky factorization whose pivots
    all exceed the pivot threshold. Non-symmetric input returns False."""
    try:
        a = _as_square(m, "m")
    except ValueError:
        return False
    if a.shape[0] == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > SYM_TOL * scale:
        return False
    n = a.shape[0]
    l = np.zeros((n, n))
    for j in range(n):
        s = a[j, j] - np.dot(l[j, :j], l[j, :j])
        if s <= PD_PIVOT_TOL * scale:
            return False
        l[j, j] = np.sqrt(s)
        for i in range(j + 1, n):
            l[i, j] = (a[i, j] - np.dot(l[i, :j], l[j, :j])) / l[j, j]
    return True
