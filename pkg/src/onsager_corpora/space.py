"""Quadrature discretizations of compact metric probability spaces.

A :class:`DiscreteSpace` is a finite set of points carrying nonnegative
quadrature weights that sum to one, together with a per-axis metric
(periodic arc distance or absolute difference) combined by the max rule.
Densities are stored with respect to these weights, so ``sum(f * w)`` is
the integral of ``f`` against the reference measure.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree
from scipy.special import xlogy

WEIGHT_SUM_TOL = 1e-12
MASS_TOL = 1e-10

DEFAULT_PERIODIC_RESOLUTION = 256
DEFAULT_INTERVAL_RESOLUTION = 64


@dataclass(frozen=True)
class Axis:
    """One coordinate axis: a circle of given period or a closed interval."""

    kind: str
    lo: float
    hi: float
    rule: str = "trapezoid"

    def __post_init__(self):
        if self.kind not in ("periodic", "interval"):
            raise ValueError(f"unknown axis kind {self.kind!r}")
        if not self.hi > self.lo:
            raise ValueError(f"axis requires lo < hi, got [{self.lo}, {self.hi}]")
        if self.rule not in ("trapezoid", "gauss"):
            raise ValueError(f"unknown quadrature rule {self.rule!r}")

    @classmethod
    def periodic(cls, period: float = 2 * np.pi, start: float = 0.0) -> "Axis":
        return cls("periodic", float(start), float(start + period))

    @classmethod
    def interval(cls, lo: float, hi: float, rule: str = "trapezoid") -> "Axis":
        return cls("interval", float(lo), float(hi), rule)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def default_resolution(self) -> int:
        if self.kind == "periodic":
            return DEFAULT_PERIODIC_RESOLUTION
        return DEFAULT_INTERVAL_RESOLUTION

    def nodes(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Quadrature nodes and normalized weights with ``n`` points."""
        if n < 2:
            raise ValueError(f"resolution must be >= 2, got {n}")
        if self.kind == "periodic":
            x = self.lo + self.length * np.arange(n) / n
            return x, np.full(n, 1.0 / n)
        if self.rule == "gauss":
            t, w = np.polynomial.legendre.leggauss(n)
            return self.lo + 0.5 * (t + 1.0) * self.length, w / w.sum()
        x = np.linspace(self.lo, self.hi, n)
        w = np.ones(n)
        w[0] = w[-1] = 0.5
        return x, w / w.sum()

    def distance(self, x, y):
        d = np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        if self.kind == "periodic":
            d = np.mod(d, self.length)
            d = np.minimum(d, self.length - d)
        return d

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "lo": self.lo, "hi": self.hi}
        if self.kind == "interval":
            out["rule"] = self.rule
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Axis":
        kind = d.get("kind")
        if kind == "periodic":
            if "period" in d:
                return cls.periodic(float(d["period"]), float(d.get("lo", 0.0)))
            return cls("periodic", float(d.get("lo", 0.0)), float(d.get("hi", 2 * np.pi)))
        if kind == "interval":
            return cls.interval(float(d["lo"]), float(d["hi"]), d.get("rule", "trapezoid"))
        raise ValueError(f"unknown axis kind {kind!r}")


@dataclass(frozen=True, eq=False)
class DiscreteSpace:
    """Finite quadrature model of a compact metric probability space.

    Attributes
    ----------
    points : ndarray of shape (n, dim)
        Coordinates, one column per axis.
    weights : ndarray of shape (n,)
        Quadrature weights of the reference probability measure.
    axes : tuple of Axis
        Axis descriptors; the metric is the max of per-axis distances.
    shape : tuple of int or None
        Grid shape when the points form a C-ordered tensor grid.
    """

    points: np.ndarray
    weights: np.ndarray
    axes: tuple
    shape: tuple | None = None
    _hash: str = field(default="", repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.asarray(self.weights, dtype=float)
        if pts.shape[0] != w.shape[0]:
            raise ValueError("points and weights disagree in length")
        if pts.shape[1] != len(self.axes):
            raise ValueError("point dimension does not match number of axes")
        if np.any(w < 0):
            raise ValueError("quadrature weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {w.sum()!r}, expected 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "axes", tuple(self.axes))

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return len(self.axes)

    def __len__(self):
        return self.n

    def coordinate(self, axis: int) -> np.ndarray:
        return self.points[:, axis]

    def pairwise_distance(self, x, y) -> np.ndarray:
        """Product (max) metric between coordinate arrays ``x`` and ``y``.

        ``x`` and ``y`` broadcast against each other with the axis index last.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.dim == 0:
            return np.zeros(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]))
        out = None
        for j, ax in enumerate(self.axes):
            dj = ax.distance(x[..., j], y[..., j])
            out = dj if out is None else np.maximum(out, dj)
        return out

    def distance_matrix(self, rows=None, cols=None) -> np.ndarray:
        r = self.points if rows is None else self.points[rows]
        c = self.points if cols is None else self.points[cols]
        return self.pairwise_distance(r[:, None, :], c[None, :, :])

    def distance_to_set(self, members, upper: float | None = None) -> np.ndarray:
        """Distance from every grid point to the point set ``members``.

        With ``upper`` given, distances beyond it are reported as ``inf``.
        """
        members = np.unique(np.asarray(members, dtype=int))
        if members.size == 0:
            raise ValueError("empty point set")
        out = np.zeros(self.n)
        rest = np.ones(self.n, dtype=bool)
        rest[members] = False
        out[rest] = self.distance_to_points(self.points[rest], self.points[members], upper)
        return out

    def distance_to_points(self, x, targets, upper: float | None = None) -> np.ndarray:
        """Distance from each row of ``x`` to the nearest row of ``targets``.

        Uses a max-norm k-d tree; periodic axes are handled by the tree's
        box wrapping and interval axes by a box wide enough never to wrap.
        Distances beyond ``upper`` (if given) come back as ``inf``.
        """
        x = np.asarray(x, dtype=float).reshape(-1, self.dim)
        targets = np.asarray(targets, dtype=float).reshape(-1, self.dim)
        if targets.shape[0] == 0:
            raise ValueError("empty point set")
        if x.shape[0] == 0:
            return np.zeros(0)
        if self.dim == 0:
            return np.zeros(x.shape[0])
        box = np.empty(self.dim)
        xs = np.empty_like(x)
        ts = np.empty_like(targets)
        for j, ax in enumerate(self.axes):
            if ax.kind == "periodic":
                box[j] = ax.length
                xs[:, j] = np.mod(x[:, j] - ax.lo, ax.length)
                ts[:, j] = np.mod(targets[:, j] - ax.lo, ax.length)
            else:
                span = max(ax.hi, x[:, j].max(), targets[:, j].max()) - min(ax.lo, x[:, j].min(), targets[:, j].min())
                box[j] = 4.0 * span + 1.0
                base = min(ax.lo, x[:, j].min(), targets[:, j].min())
                xs[:, j] = x[:, j] - base
                ts[:, j] = targets[:, j] - base
        # guard against values landing exactly on the box edge after mod
        xs = np.where(xs >= box, xs - box, xs)
        ts = np.where(ts >= box, ts - box, ts)
        tree = cKDTree(ts, boxsize=box)
        ub = np.inf if upper is None else float(upper) * (1 + 1e-12) + 1e-300
        d, _ = tree.query(xs, k=1, p=np.inf, distance_upper_bound=ub)
        return d

    def integrate(self, values) -> float:
        return float(np.dot(np.asarray(values, dtype=float), self.weights))

    def descriptor(self) -> dict:
        d = {"axes": [a.to_dict() for a in self.axes]}
        if self.shape is not None:
            d["resolution"] = list(self.shape)
        else:
            d["n_points"] = self.n
        return d

    def descriptor_hash(self) -> str:
        if not self._hash:
            h = hashlib.sha256()
            h.update(json.dumps(self.descriptor(), sort_keys=True).encode())
            h.update(np.ascontiguousarray(self.points).tobytes())
            h.update(np.ascontiguousarray(self.weights).tobytes())
            object.__setattr__(self, "_hash", h.hexdigest()[:16])
        return self._hash

    def same_as(self, other: "DiscreteSpace") -> bool:
        if self is other:
            return True
        return (
            self.n == other.n
            and self.axes == other.axes
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )


def build_space(axes: Sequence, resolution=None) -> DiscreteSpace:
    """Tensor-product quadrature grid over ``axes``.

    Parameters
    ----------
    axes : sequence of Axis or dict
        Axis descriptors.
    resolution : int or sequence of int, optional
        Points per axis. Defaults to 256 for periodic axes and 64 for
        interval axes.

    Examples
    --------
    >>> s = build_space([Axis.periodic()], 4)
    >>> s.weights.tolist()
    [0.25, 0.25, 0.25, 0.25]
    """
    axes = [a if isinstance(a, Axis) else Axis.from_dict(a) for a in axes]
    if not axes:
        raise ValueError("at least one axis is required")
    if resolution is None:
        res = [a.default_resolution for a in axes]
    elif np.isscalar(resolution):
        res = [int(resolution)] * len(axes)
    else:
        res = [int(r) for r in resolution]
        if len(res) != len(axes):
            raise ValueError("one resolution per axis is required")
    for r in res:
        if r < 2:
            raise ValueError(f"resolution must be >= 2 per axis, got {r}")
    nodes = [a.nodes(r) for a, r in zip(axes, res)]
    grids = np.meshgrid(*[x for x, _ in nodes], indexing="ij")
    points = np.stack([g.ravel() for g in grids], axis=1)
    w = nodes[0][1]
    for _, wj in nodes[1:]:
        w = np.outer(w, wj).ravel()
    return DiscreteSpace(points, w / w.sum(), tuple(axes), tuple(res))


def point_space() -> DiscreteSpace:
    """The one-point probability space (identity for :func:`product_space`)."""
    return DiscreteSpace(np.zeros((1, 0)), np.ones(1), (), ())


def product_space(a: DiscreteSpace, b: DiscreteSpace) -> DiscreteSpace:
    """Product space with product measure and max-combined metric.

    Points are ordered with the index of ``a`` varying slowest, so the
    weight vector is ``np.outer(a.weights, b.weights).ravel()``.
    """
    ia, ib = np.meshgrid(np.arange(a.n), np.arange(b.n), indexing="ij")
    points = np.concatenate([a.points[ia.ravel()], b.points[ib.ravel()]], axis=1)
    w = np.outer(a.weights, b.weights).ravel()
    w = w / w.sum()
    shape = None
    if a.shape is not None and b.shape is not None:
        shape = tuple(a.shape) + tuple(b.shape)
    return DiscreteSpace(points, w, a.axes + b.axes, shape)


class Density:
    """Probability density with respect to the weights of a DiscreteSpace."""

    __slots__ = ("values", "space")

    def __init__(self, values, space: DiscreteSpace, check: bool = True):
        v = np.array(values, dtype=float)
        if v.shape != (space.n,):
            raise ValueError(f"density has shape {v.shape}, expected ({space.n},)")
        if check:
            if not np.all(np.isfinite(v)):
                raise ValueError("density contains non-finite values")
            if np.any(v < 0):
                raise ValueError("density must be nonnegative")
            mass = float(np.dot(v, space.weights))
            if abs(mass - 1.0) > MASS_TOL:
                raise ValueError(f"density has mass {mass!r}, expected 1")
        v.setflags(write=False)
        self.values = v
        self.space = space

    @classmethod
    def uniform(cls, space: DiscreteSpace) -> "Density":
        return cls(np.ones(space.n), space)

    @classmethod
    def normalized(cls, values, space: DiscreteSpace) -> "Density":
        """Rescale nonnegative ``values`` to unit mass."""
        v = np.asarray(values, dtype=float)
        if np.any(v < 0):
            raise ValueError("density must be nonnegative")
        mass = float(np.dot(v, space.weights))
        if not mass > 0:
            raise ValueError("cannot normalize a density with zero mass")
        return cls(v / mass, space)

    @classmethod
    def point_mass(cls, space: DiscreteSpace, index: int) -> "Density":
        v = np.zeros(space.n)
        v[index] = 1.0 / space.weights[index]
        return cls(v, space)

    @classmethod
    def indicator(cls, space: DiscreteSpace, mask) -> "Density":
        return cls.normalized(np.asarray(mask, dtype=float), space)

    @property
    def mass(self) -> float:
        return float(np.dot(self.values, self.space.weights))

    def measure(self) -> np.ndarray:
        """Point masses ``f_i w_i`` of the measure ``f dmu``."""
        return self.values * self.space.weights

    def l1_distance(self, other: "Density") -> float:
        _check_same(self.space, other.space)
        return float(np.dot(np.abs(self.values - other.values), self.space.weights))

    def __repr__(self):
        return f"Density(n={self.space.n}, mass={self.mass:.12g})"


def _check_same(a: DiscreteSpace, b: DiscreteSpace):
    if not a.same_as(b):
        raise ValueError("densities live on different spaces")


def entropy(f: Density) -> float:
    """Relative entropy ``sum f log f w`` with ``0 log 0 = 0``."""
    v = np.asarray(f.values)
    if np.any(v < 0):
        raise ValueError("entropy requires a nonnegative density")
    return float(np.dot(xlogy(v, v), f.space.weights))


def _transport_cost(rho: np.ndarray, space: DiscreteSpace, points: np.ndarray | None = None) -> float:
    """Exact W1 cost of a zero-mass signed measure under ``min(d, 2)``."""
    # entries below 1e-14 of the total variation are roundoff; they move the cost by < 2e-14 tv
    floor = 1e-14 * float(np.abs(rho).sum())
    pos = np.flatnonzero(rho > floor)
    neg = np.flatnonzero(rho < -floor)
    if pos.size == 0 or neg.size == 0:
        return 0.0
    pts = space.points if points is None else points
    scale = float(rho[pos].sum())
    # solve at unit mass so solver tolerances are relative, and rebalance roundoff
    a = rho[pos] / scale
    b = -rho[neg] / float(-rho[neg].sum())
    cost = np.minimum(space.pairwise_distance(pts[pos][:, None, :], pts[neg][None, :, :]), 2.0)
    m, k = cost.shape
    rows = np.repeat(np.arange(m), k)
    cols = np.tile(np.arange(k), m)
    from scipy.sparse import coo_matrix

    a_eq = coo_matrix(
        (np.ones(2 * m * k), (np.concatenate([rows, m + cols]), np.tile(np.arange(m * k), 2))),
        shape=(m + k, m * k),
    ).tocsr()
    b_eq = np.concatenate([a, b])
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        # HiGHS presolve can misjudge feasibility when marginals span many decades
        res = linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs",
                      options={"presolve": False})
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun) * scale


def _coarsen(space: DiscreteSpace, rho: np.ndarray, bins: int):
    """Aggregate ``rho`` into per-axis bins; returns (rho_c, reps, radius)."""
    keys = np.zeros(space.n, dtype=np.int64)
    for j, ax in enumerate(space.axes):
        t = (space.points[:, j] - ax.lo) / ax.length
        if ax.kind == "periodic":
            t = np.mod(t, 1.0)
        kj = np.clip((t * bins).astype(np.int64), 0, bins - 1)
        keys = keys * bins + kj
    uniq, inv = np.unique(keys, return_inverse=True)
    rho_c = np.bincount(inv, weights=rho, minlength=uniq.size)
    order = np.argsort(inv, kind="stable")
    groups = np.split(order, np.cumsum(np.bincount(inv, minlength=uniq.size))[:-1])
    reps = np.zeros((uniq.size, space.dim))
    radius = 0.0
    for c, members in enumerate(groups):
        pts = space.points[members]
        # medoid of the coordinate mean; periodic wrap makes the mean approximate only
        d = space.pairwise_distance(pts, pts.mean(axis=0)[None, :])
        rep = pts[np.argmin(d)]
        reps[c] = rep
        radius = max(radius, float(space.pairwise_distance(pts, rep[None, :]).max()))
    return rho_c, reps, radius


def bl_distance(f: Density, g: Density, max_exact_pairs: int = 250_000) -> float:
    """Bounded-Lipschitz distance between ``f dmu`` and ``g dmu``.

    The supremum of ``int phi d(f - g)mu`` over test functions with
    ``|phi| <= 1`` and Lipschitz constant ``<= 1``. For balanced measures it
    equals the Wasserstein-1 distance under the truncated metric
    ``min(d, 2)``, which is what is computed:

    * single interval axis of length <= 2: exact, from cumulative sums;
    * small supports (``|supp rho+| * |supp rho-| <= max_exact_pairs``):
      exact transport LP;
    * otherwise an upper bound: exact transport between per-axis binned
      aggregates plus twice the binning radius, capped by the total
      variation ``sum |f - g| w``.
    """
    _check_same(f.space, g.space)
    space = f.space
    rho = (f.values - g.values) * space.weights
    tv = float(np.abs(rho).sum())
    if tv == 0.0:
        return 0.0
    if space.dim == 1 and space.axes[0].kind == "interval" and space.axes[0].length <= 2.0:
        order = np.argsort(space.points[:, 0])
        x = space.points[order, 0]
        c = np.cumsum(rho[order])[:-1]
        return float(np.dot(np.abs(c), np.diff(x)))
    npos = int(np.count_nonzero(rho > 0))
    nneg = int(np.count_nonzero(rho < 0))
    if npos * nneg <= max_exact_pairs:
        return min(tv, _transport_cost(rho, space))
    bins = 64
    while True:
        rho_c, reps, radius = _coarsen(space, rho, bins)
        npos = int(np.count_nonzero(rho_c > 0))
        nneg = int(np.count_nonzero(rho_c < 0))
        if npos * nneg <= max_exact_pairs or bins <= 2:
            break
        bins //= 2
    return min(tv, _transport_cost(rho_c, space, reps) + 2.0 * radius)
