"""Scalar self-consistency equations for the two-rod models.

For two-rods (example 1) every Onsager solution has the form
``f = exp(-b (sin(p1 - p2) - a)**2) / Z`` where the order parameter ``a``
solves ``a = [sin theta]_b(a)``, i.e. is a zero of::

    h_b(a) = int_0^{2 pi} u exp(-b u**2) dtheta,   u = sin(theta) - a.

For two-rods with lengths in ``[0, L]`` (example 2) the same holds with
``u = x1 x2 sin(theta) - a`` and the integral taken over
``[0, L]^2 x [0, 2 pi]`` against the normalized measure.

Circle nodes are paired antipodally (``theta`` with ``theta + pi``) so that
``h_b(0) = 0`` and ``h_b(-a) = -h_b(a)`` hold exactly in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import bisect

SCAN_POINTS = 2001
ROOT_XTOL = 1e-12
DEDUP_TOL = 1e-9
MERGE_ZERO_TOL = 1e-4

CIRCLE_NODES = 8192
EX2_X_NODES = 64
EX2_THETA_NODES = 64


@dataclass(frozen=True)
class BranchPoint:
    """One root ``a`` of the self-consistency equation at inverse temperature ``b``.

    ``stable_hint`` is the sign of the residual just left and right of the
    root (``"+-"`` means ``a -> [u + a]_b(a)`` pulls towards the root).
    """

    b: float
    a: float
    h_value: float
    residual: float
    stable_hint: str
    gamma: float = float("nan")
    energy: float = float("nan")


@lru_cache(maxsize=8)
def _circle_half(n: int):
    # nodes theta_k in [0, pi); partners theta_k + pi carry -sin(theta_k)
    theta = np.pi * np.arange(n // 2) / (n // 2)
    return np.sin(theta)


@lru_cache(maxsize=8)
def _ex2_half(nx: int, nt: int, L: float):
    # Gauss-Legendre in x1, x2 on [0, L], periodic trapezoid in theta
    t, w = np.polynomial.legendre.leggauss(nx)
    x = 0.5 * L * (t + 1.0)
    wx = w / w.sum()
    s = _circle_half(nt)
    area = (x[:, None, None] * x[None, :, None] * s[None, None, :]).ravel()
    weight = (wx[:, None, None] * wx[None, :, None] * np.full(s.size, 1.0 / nt)[None, None, :]).ravel()
    return area, weight


def _half_nodes(example: int, L: float = 1.0, resolution=None):
    """Half of a symmetric quadrature: (s, weight) with partners at ``-s``."""
    if example == 1:
        n = CIRCLE_NODES if resolution is None else int(resolution)
        s = _circle_half(n)
        return s, np.full(s.size, 1.0 / n)
    if example == 2:
        if resolution is None:
            nx, nt = EX2_X_NODES, EX2_THETA_NODES
        elif np.isscalar(resolution):
            nx = nt = int(resolution)
        else:
            nx, nt = (int(r) for r in resolution)
        return _ex2_half(nx, nt, float(L))
    raise ValueError(f"example must be 1 or 2, got {example!r}")


def _a_bound(example: int, L: float) -> float:
    return 1.0 if example == 1 else float(L) ** 2


def _check_a(a, example, L):
    bound = _a_bound(example, L)
    if abs(a) > bound * (1 + 1e-12):
        raise ValueError(f"order parameter {a} outside [-{bound}, {bound}]")


def _paired_sums(a, b, s, w, phi_plus=None, phi_minus=None):
    """``sum phi e^{-b u^2} w`` over node pairs ``(s, -s)``, shifted by ``shift``."""
    up = s - a
    um = -s - a
    shift = min(float(np.min(up * up)), float(np.min(um * um)))
    ep = np.exp(-b * (up * up - shift))
    em = np.exp(-b * (um * um - shift))
    return ep, em, up, um, shift


def weighted_average(phi, a: float, b: float, example: int = 1, L: float = 1.0, resolution=None) -> float:
    """Gibbs average ``[phi]_b(a)`` under the weight ``exp(-b u**2)``.

    ``phi`` is a callable of the area variable ``s`` (``sin theta`` for
    example 1, ``x1 x2 sin theta`` for example 2) or one of the strings
    ``"u"``, ``"sin"``, ``"sin2"``, ``"one"``.
    """
    if b < 0:
        raise ValueError("b must be >= 0")
    s, w = _half_nodes(example, L, resolution)
    ep, em, up, um, _ = _paired_sums(a, b, s, w)
    if callable(phi):
        fp, fm = phi(s), phi(-s)
    elif phi == "u":
        fp, fm = up, um
    elif phi == "sin":
        fp, fm = s, -s
    elif phi == "sin2":
        fp, fm = s * s, s * s
    elif phi == "one":
        return 1.0
    else:
        raise ValueError(f"unknown observable {phi!r}")
    num = np.dot(fp * ep + fm * em, w)
    den = np.dot(ep + em, w)
    return float(num / den)


def residual(a: float, b: float, example: int = 1, L: float = 1.0, resolution=None) -> float:
    """Normalized residual ``[u]_b(a) = [s]_b(a) - a``; same sign as ``h``."""
    _check_a(a, example, L)
    return weighted_average("u", a, b, example, L, resolution)


def h(a: float, b: float, example: int = 1, L: float = 1.0, resolution=None) -> float:
    """Self-consistency function whose zeros are the admissible order parameters.

    Example 1: ``int_0^{2 pi} u exp(-b u^2) dtheta``. Example 2:
    ``int u exp(-b u^2) dmu'`` over ``[0, L]^2 x [0, 2 pi]`` (normalized measure).
    """
    _check_a(a, example, L)
    if b < 0:
        raise ValueError("b must be >= 0")
    s, w = _half_nodes(example, L, resolution)
    up = s - a
    um = -s - a
    val = float(np.dot(up * np.exp(-b * up * up) + um * np.exp(-b * um * um), w))
    return 2 * np.pi * val if example == 1 else val


def _reduced_integrand(s, a, b, L):
    """``(e^{-b a^2} - e^{-b (L s - a)^2}) / s`` with a series branch near ``s = 0``."""
    s = np.asarray(s, dtype=float)
    z = b * L * s * (2 * a - L * s)
    out = np.empty_like(s)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, s)
    # away from s = 0 the two exponentials differ enough to subtract directly;
    # this also avoids 0 * inf once exp(-b a^2) underflows
    big = ~small
    out[big] = (np.exp(-b * a * a) - np.exp(-b * (L * s[big] - a) ** 2)) / safe[big]
    zs = z[small]
    out[small] = -np.exp(-b * a * a) * b * L * (2 * a - L * s[small]) * (1 + zs / 2 + zs * zs / 6)
    return out


def h_reduced(a: float, b: float, L: float = 1.0, x_nodes: int = 400, theta_nodes: int = 2048) -> float:
    """Example 2 residual after integrating out the second rod length analytically.

    Uses ``du/dx2 = x1 sin(theta)`` to write ``int u e^{-b u^2} dmu'`` as
    ``1 / (4 pi b L^2) int_0^{2pi} int_0^L (e^{-b a^2} - e^{-b (L x sin theta - a)^2}) / (x sin theta) dx dtheta``.
    Independent of :func:`h` and used to cross-check it.
    """
    _check_a(a, 2, L)
    if not b > 0:
        raise ValueError("the reduced form needs b > 0")
    t, wt = np.polynomial.legendre.leggauss(x_nodes)
    x = 0.5 * L * (t + 1.0)
    wx = 0.5 * L * wt
    theta = 2 * np.pi * np.arange(theta_nodes) / theta_nodes
    s = x[:, None] * np.sin(theta)[None, :]
    vals = _reduced_integrand(s, a, b, L)
    integral = float(np.einsum("ij,i->", vals, wx)) * (2 * np.pi / theta_nodes)
    return integral / (4 * np.pi * b * L * L)


def _bisect(fun, lo, hi):
    return bisect(fun, lo, hi, xtol=ROOT_XTOL, rtol=4 * np.finfo(float).eps, maxiter=200)


def branch_energy(a: float, b: float, example: int = 1, L: float = 1.0, resolution=None):
    """Free energy and ``gamma`` of the closed-form state with order parameter ``a``.

    The state ``f = e^{-b u^2} / Z`` depends on the configuration only through
    the area variable, so its energy is evaluated on the reduced quadrature.
    Returns ``(energy, gamma)`` with ``gamma = int s^2 f``.
    """
    s, w = _half_nodes(example, L, resolution)
    ep, em, up, um, shift = _paired_sums(a, b, s, w)
    z = float(np.dot(ep + em, w))
    fp, fm = ep / z, em / z
    m1 = float(np.dot(s * fp - s * fm, w))
    gamma = float(np.dot(s * s * (fp + fm), w))
    # U(s) = s^2 - 2 m1 s + gamma
    entropy = float(np.dot(fp * np.log(np.maximum(fp, 1e-300)) + fm * np.log(np.maximum(fm, 1e-300)), w))
    interaction = float(np.dot((s * s - 2 * m1 * s + gamma) * fp + (s * s + 2 * m1 * s + gamma) * fm, w))
    return entropy + 0.5 * b * interaction, gamma


def find_branches(b: float, example: int = 1, scan_resolution: int = SCAN_POINTS, L: float = 1.0,
                  resolution=None) -> list:
    """All roots of the self-consistency equation at ``b``, sorted by ``a``.

    Sign-change scan of ``[0, A]`` (``A = 1`` or ``L**2``) at the spacing of
    ``scan_resolution`` points over ``[-A, A]``, bisection to ``1e-12``,
    roots within ``1e-4`` of zero merged into ``a = 0`` (which is always a
    root), duplicates within ``1e-9`` dropped. Negative roots are the
    mirror images of the positive ones, since ``h`` is exactly odd.
    """
    if b < 0:
        raise ValueError("b must be >= 0")
    bound = _a_bound(example, L)
    # h is exactly odd, so scan a >= 0 only and mirror the roots
    grid = np.linspace(0.0, bound, scan_resolution // 2 + 1)
    fun = lambda a: residual(a, b, example, L, resolution)  # noqa: E731
    vals = np.array([fun(a) for a in grid])
    pos = []
    for i in range(grid.size - 1):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0.0:
            pos.append(float(grid[i]))
        elif v0 * v1 < 0:
            pos.append(float(_bisect(fun, grid[i], grid[i + 1])))
    if vals[-1] == 0.0:
        pos.append(float(grid[-1]))
    pos = sorted(r for r in pos if r >= MERGE_ZERO_TOL)
    kept = []
    for r in pos:
        if not kept or r - kept[-1] > DEDUP_TOL:
            kept.append(r)
    unique = [-r for r in reversed(kept)] + [0.0] + kept
    out = []
    step = 2 * bound / (scan_resolution - 1)
    for r in unique:
        left = fun(max(r - 0.5 * step, -bound))
        right = fun(min(r + 0.5 * step, bound))
        hint = ("+" if left > 0 else "-") + ("+" if right > 0 else "-")
        energy, gamma = branch_energy(r, b, example, L, resolution)
        out.append(BranchPoint(
            b=float(b), a=r, h_value=h(r, b, example, L, resolution),
            residual=fun(r), stable_hint=hint, gamma=gamma, energy=energy,
        ))
    return out


def branch_sweep(b_schedule, example: int = 1, scan_resolution: int = SCAN_POINTS, L: float = 1.0,
                 resolution=None) -> list:
    """``[(b, [BranchPoint, ...]), ...]`` along an increasing schedule."""
    sched = [float(b) for b in b_schedule]
    if any(b1 <= b0 for b0, b1 in zip(sched, sched[1:])):
        raise ValueError("b_schedule must be strictly increasing")
    return [(b, find_branches(b, example, scan_resolution, L, resolution)) for b in sched]


def bifurcation_estimate(b_lo: float, b_hi: float, example: int = 1, tol: float = 1e-3, L: float = 1.0) -> float:
    """Smallest ``b`` in ``[b_lo, b_hi]`` (to ``tol``) at which ``a = 0`` loses stability.

    Located by the sign of ``d[u]_b/da`` at ``a = 0``; nonzero roots are born
    there. Reported as an empirical threshold.
    """
    eps = 1e-6

    def slope(b):
        return residual(eps, b, example, L) / eps

    if slope(b_lo) > 0 or slope(b_hi) < 0:
        raise ValueError("no change of stability in the bracket")
    return float(bisect(slope, b_lo, b_hi, xtol=tol))


def branch_density(a: float, b: float, space, example: int = 1):
    """Closed-form state ``exp(-b (s - a)^2) / Z`` on a full configuration space.

    ``space`` must carry the axes expected by :func:`kernel.assemble` for the
    corresponding two-rod kernel.
    """
    from .space import Density

    pts = space.points
    if example == 1:
        s = np.sin(pts[:, 0] - pts[:, 1]) if space.dim == 2 else np.sin(pts[:, 0])
    else:
        theta = pts[:, 2] - pts[:, 3] if space.dim == 4 else pts[:, 2]
        s = pts[:, 0] * pts[:, 1] * np.sin(theta)
    e = -b * (s - a) ** 2
    return Density.normalized(np.exp(e - e.max()), space)
