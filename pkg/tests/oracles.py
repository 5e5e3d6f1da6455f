"""Independent reference implementations used to check the package.

Nothing here imports from ``onsager_corpora``. Each oracle takes a
different route to the same number: half-space intersection instead of
polygon clipping, adaptive quadrature instead of fixed nodes, an
assignment solver instead of a transport LP, plain Picard iteration
instead of the safeguarded solver.
"""

from __future__ import annotations

import numpy as np
from scipy import integrate
from scipy.optimize import linear_sum_assignment
from scipy.spatial import ConvexHull, HalfspaceIntersection


# --- geometry ---------------------------------------------------------------


def rhombus_vertices(angle):
    """Unit-side rhombus with smaller angle ``angle``, long diagonal on the x-axis."""
    c, s = np.cos(angle / 2), np.sin(angle / 2)
    return np.array([[c, 0.0], [0.0, s], [-c, 0.0], [0.0, -s]])


def _halfspaces(vertices):
    """Rows ``(a, b, c)`` with ``a x + b y + c <= 0`` inside a CCW convex polygon."""
    rows = []
    for i in range(len(vertices)):
        p, q = vertices[i], vertices[(i + 1) % len(vertices)]
        nx, ny = q[1] - p[1], p[0] - q[0]  # outward normal of a CCW edge
        rows.append([nx, ny, -(nx * p[0] + ny * p[1])])
    return np.array(rows)


def intersection_area(poly_a, poly_b):
    """Area of the intersection of two convex polygons containing the origin."""
    hs = np.vstack([_halfspaces(poly_a), _halfspaces(poly_b)])
    pts = HalfspaceIntersection(hs, np.zeros(2)).intersections
    return float(ConvexHull(pts).volume)


def rhombus_symdiff(p, q):
    """``area(R_p) + area(R_q) - 2 area(R_p & R_q)`` with ``area(R_p) = sin p``."""
    if min(p, q) < 1e-9:
        # a degenerate rhombus is a segment: the symmetric difference is the other area
        return float(np.sin(max(p, q)))
    inter = intersection_area(rhombus_vertices(p), rhombus_vertices(q))
    return float(np.sin(p) + np.sin(q) - 2.0 * inter)


def wedge(u, v):
    """2-D wedge product ``u ^ v``."""
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def unit(angle):
    angle = np.asarray(angle, dtype=float)
    return np.stack([np.cos(angle), np.sin(angle)], axis=-1)


def two_rod_wedge(p, q):
    """``|e(p1)^e(p2) - e(q1)^e(q2)|^2``: the signed parallelogram areas of two two-rods.

    ``e(p1) ^ e(p2) = sin(p2 - p1)``; the orientation convention flips both
    areas at once, so the squared difference matches the package kernel.
    """
    a = wedge(unit(p[..., 1]), unit(p[..., 0]))
    b = wedge(unit(q[..., 1]), unit(q[..., 0]))
    return (a - b) ** 2


# --- densities and energies -------------------------------------------------


def entropy(values, weights):
    v = np.asarray(values, dtype=float)
    out = 0.0
    for vi, wi in zip(v, weights):
        if vi > 0:
            out += vi * np.log(vi) * wi
    return out


def free_energy(K, weights, f, b):
    """Plain double sum ``sum f log f w + b/2 sum_ij k_ij f_i f_j w_i w_j``."""
    fw = f * weights
    return entropy(f, weights) + 0.5 * b * float(fw @ K @ fw)


def picard_solve(K, weights, b, f0=None, tol=1e-13, max_iter=200_000, damping=0.5):
    """Damped Picard iteration ``f <- (1-t) f + t exp(-b K f w) / Z`` on an explicit matrix."""
    n = K.shape[0]
    f = np.ones(n) if f0 is None else np.array(f0, dtype=float)
    for _ in range(max_iter):
        u = K @ (f * weights)
        g = np.exp(-b * (u - u.min()))
        g /= g @ weights
        if np.abs(g - f) @ weights < tol:
            return g
        f = (1 - damping) * f + damping * g
    raise RuntimeError("picard iteration did not converge")


# --- self-consistency integrals ---------------------------------------------


def h_two_rod(a, b):
    """``int_0^{2 pi} (sin t - a) exp(-b (sin t - a)^2) dt`` by adaptive quadrature."""
    def fun(t):
        u = np.sin(t) - a
        return u * np.exp(-b * u * u)

    breaks = np.linspace(0, 2 * np.pi, 65)
    return float(sum(integrate.quad(fun, lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
                     for lo, hi in zip(breaks[:-1], breaks[1:])))


def h_sized_two_rod(a, b, L=1.0):
    """Normalized ``h_b(a)`` for rods with lengths: ``x1 x2`` is reduced to one variable.

    For ``x1, x2`` uniform on ``[0, L]`` the product ``t = x1 x2 / L^2`` has
    density ``-log t`` on ``[0, 1]``, so the triple integral collapses to a
    double one in ``(t, theta)``.
    """
    L2 = L * L

    def inner(theta):
        s = np.sin(theta)

        def fun(t):
            u = L2 * t * s - a
            return -np.log(t) * u * np.exp(-b * u * u)

        return integrate.quad(fun, 0.0, 1.0, epsabs=1e-14, epsrel=1e-12, limit=200)[0]

    breaks = np.linspace(0, 2 * np.pi, 33)
    total = sum(integrate.quad(inner, lo, hi, epsabs=1e-13, epsrel=1e-11, limit=100)[0]
                for lo, hi in zip(breaks[:-1], breaks[1:]))
    return float(total / (2 * np.pi))


# --- transport --------------------------------------------------------------


def w1_equal_atoms(x, y, metric):
    """W1 between uniform empirical measures with the same number of atoms (optimal assignment)."""
    cost = np.array([[metric(xi, yj) for yj in y] for xi in x])
    r, c = linear_sum_assignment(cost)
    return float(cost[r, c].mean())


def w1_line(x, mu, nu):
    """W1 on the real line: integral of ``|F_mu - F_nu|``."""
    order = np.argsort(x)
    x = np.asarray(x)[order]
    diff = np.cumsum((np.asarray(mu) - np.asarray(nu))[order])[:-1]
    return float(np.sum(np.abs(diff) * np.diff(x)))
