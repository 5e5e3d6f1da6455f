"""Interaction kernels on discrete spaces.

Three closed-form kernels are provided, each a nonnegative symmetric
function vanishing on the diagonal:

* ``two_rod_area``: squared difference of the oriented triangle areas
  ``sin(p1 - p2)`` of two unit two-rods on the torus;
* ``sized_two_rod_area``: the same with rod lengths, ``x1 x2 sin(p1 - p2)``;
* ``rhombus_symdiff``: area of the symmetric difference of two aligned
  unit-side rhombi parameterized by their smaller angle.

Tabulated kernels (``custom-tabulated``) are accepted as dense matrices and
must pass :func:`validate` before use.

Squared-difference kernels ``k(p, q) = (phi(p) - phi(q))**2`` are held in
factored form, so applying them to a density costs O(n) and never
materializes the n-by-n matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .space import DiscreteSpace

KINDS = ("two_rod_area", "sized_two_rod_area", "rhombus_symdiff", "custom-tabulated")

VALIDATION_TOL = 1e-10
DENSE_LIMIT = 16384
HALF_PI = 0.5 * np.pi


def two_rod_kernel(p, q):
    """``(sin(p1 - p2) - sin(q1 - q2))**2`` for angle pairs on the last axis."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    return (np.sin(p[..., 0] - p[..., 1]) - np.sin(q[..., 0] - q[..., 1])) ** 2


def sized_two_rod_kernel(x, y, L=1.0):
    """Kernel for two-rods with lengths.

    ``x`` and ``y`` hold ``(x1, x2, p1, p2)`` on the last axis; the value is
    ``(x1 x2 sin(p1 - p2) - y1 y2 sin(q1 - q2))**2``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not L > 0:
        raise ValueError("maximum rod length L must be positive")
    for z in (x, y):
        lengths = z[..., :2]
        if np.any(lengths < 0) or np.any(lengths > L):
            raise ValueError(f"rod lengths must lie in [0, {L}]")
    return (_sized_area(x) - _sized_area(y)) ** 2


def _sized_area(z):
    return z[..., 0] * z[..., 1] * np.sin(z[..., 2] - z[..., 3])


def rhombus_kernel(p, q):
    """Symmetric-difference area of unit-side rhombi with smaller angles ``p``, ``q``.

    Evaluates ``8 sin^2(d/4) / sin(d/2) * B(p, q)`` with ``d = |p - q|`` through
    the identity ``8 sin^2(d/4) / sin(d/2) = 4 tan(d/4)``, which is exact,
    vanishes at ``d = 0`` and has no cancellation near the diagonal.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any((p < 0) | (p > HALF_PI)) or np.any((q < 0) | (q > HALF_PI)):
        raise ValueError("rhombus angles must lie in [0, pi/2]")
    d = np.abs(p - q)
    s = 0.25 * (p + q)
    bracket = (
        np.sin(s) ** 2 * np.sin(0.5 * p) * np.sin(0.5 * q)
        + np.cos(s) ** 2 * np.cos(0.5 * p) * np.cos(0.5 * q)
    )
    return 4.0 * np.tan(0.25 * d) * bracket


def rhombus_slope(p):
    """Leading coefficient of ``k(p, p + eps)`` in ``eps``: ``sin^4(p/2) + cos^4(p/2)``."""
    p = np.asarray(p, dtype=float)
    return np.sin(0.5 * p) ** 4 + np.cos(0.5 * p) ** 4


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus its parameters.

    ``sized_two_rod_area`` takes ``L`` (maximum rod length). ``custom-tabulated``
    takes either ``matrix`` (array) or ``path`` (dense matrix file).
    """

    kind: str
    parameters: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "sized_two_rod_area":
            L = float(self.parameters.get("L", 1.0))
            if not L > 0:
                raise ValueError("sized_two_rod_area requires L > 0")
        if self.kind == "custom-tabulated":
            if "matrix" not in self.parameters and "path" not in self.parameters:
                raise ValueError("custom-tabulated kernel needs 'matrix' or 'path'")

    def to_dict(self) -> dict:
        params = {k: v for k, v in self.parameters.items() if k != "matrix"}
        return {"kind": self.kind, "parameters": params}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], dict(d.get("parameters") or {}))


class KernelMatrix:
    """Symmetric interaction matrix ``k(p_i, p_j)`` over a DiscreteSpace.

    Either ``dense`` (an n-by-n array) or ``feature`` (a per-point vector
    ``phi`` with ``k_ij = (phi_i - phi_j)**2``) must be given.
    """

    def __init__(self, space: DiscreteSpace, dense=None, feature=None, spec: KernelSpec | None = None,
                 seed: int = 0):
        if (dense is None) == (feature is None):
            raise ValueError("give exactly one of dense or feature")
        self.space = space
        self.spec = spec
        if dense is not None:
            dense = np.array(dense, dtype=float)
            if dense.shape != (space.n, space.n):
                raise ValueError(f"kernel matrix has shape {dense.shape}, space has {space.n} points")
            dense.setflags(write=False)
            self._dense = dense
            self._feature = None
        else:
            feature = np.array(feature, dtype=float)
            if feature.shape != (space.n,):
                raise ValueError("feature vector must have one entry per point")
            feature.setflags(write=False)
            self._dense = None
            self._feature = feature
        self.seed = seed
        self._lipschitz = None

    @property
    def n(self) -> int:
        return self.space.n

    @property
    def is_factored(self) -> bool:
        return self._feature is not None

    @property
    def feature(self):
        return self._feature

    def block(self, rows=None, cols=None) -> np.ndarray:
        if self._dense is not None:
            d = self._dense
            if rows is not None:
                d = d[rows]
            if cols is not None:
                d = d[:, cols]
            return d
        r = self._feature if rows is None else self._feature[rows]
        c = self._feature if cols is None else self._feature[cols]
        return (np.atleast_1d(r)[:, None] - np.atleast_1d(c)[None, :]) ** 2

    @property
    def entries(self) -> np.ndarray:
        """Dense matrix; factored kernels are materialized up to ``DENSE_LIMIT`` points."""
        if self._dense is None and self.n > DENSE_LIMIT:
            raise ValueError(f"refusing to materialize a {self.n}x{self.n} kernel")
        return self.block()

    def column(self, j: int) -> np.ndarray:
        return self.block(None, [j])[:, 0]

    def apply(self, v) -> np.ndarray:
        """``sum_j k_ij v_j`` (no quadrature weights)."""
        v = np.asarray(v, dtype=float)
        if self._dense is not None:
            return self._dense @ v
        phi = self._feature
        s0 = v.sum(axis=0)
        s1 = phi @ v
        s2 = (phi * phi) @ v
        if v.ndim == 1:
            return phi * phi * s0 - 2.0 * phi * s1 + s2
        return np.outer(phi * phi, s0) - 2.0 * np.outer(phi, s1) + s2[None, :]

    @property
    def sup_norm(self) -> float:
        if self._dense is not None:
            return float(np.max(np.abs(self._dense)))
        return float((self._feature.max() - self._feature.min()) ** 2)

    @property
    def lipschitz_estimate(self) -> float:
        if self._lipschitz is None:
            self._lipschitz = estimate_lipschitz(self, seed=self.seed)
        return self._lipschitz

    def __repr__(self):
        form = "factored" if self.is_factored else "dense"
        kind = self.spec.kind if self.spec else "unspecified"
        return f"KernelMatrix({kind}, n={self.n}, {form})"


def _neighbor_pairs(space: DiscreteSpace, rng, n_pairs: int):
    """Index pairs one grid step apart (plus random pairs for non-grids)."""
    n = space.n
    i = rng.integers(0, n, size=n_pairs)
    if space.shape is not None and int(np.prod(space.shape)) == n:
        multi = np.array(np.unravel_index(i, space.shape))
        # king moves: under the max metric the steepest direction may be diagonal
        step = rng.integers(-1, 2, size=multi.shape)
        still = ~step.any(axis=0)
        step[0, still] = 1
        for a, axis in enumerate(space.axes):
            m = space.shape[a]
            moved = multi[a] + step[a]
            if axis.kind == "periodic":
                moved = np.mod(moved, m)
            else:
                moved = np.where((moved < 0) | (moved >= m), multi[a] - step[a], moved)
            multi[a] = moved
        j = np.ravel_multi_index(tuple(multi), space.shape)
    else:
        j = rng.integers(0, n, size=n_pairs)
    keep = i != j
    return i[keep], j[keep]


def estimate_lipschitz(k: KernelMatrix, n_pairs: int = 2048, n_probe: int = 256, seed: int = 0) -> float:
    """Empirical ``max |k(p_i, s) - k(p_j, s)| / d(p_i, p_j)`` over sampled triples.

    Pairs are mostly grid neighbours, where finite-difference slopes approach
    the sup of the gradient, plus random far pairs.
    """
    space = k.space
    rng = np.random.default_rng(seed)
    i1, j1 = _neighbor_pairs(space, rng, n_pairs)
    i2 = rng.integers(0, space.n, size=n_pairs // 4)
    j2 = rng.integers(0, space.n, size=n_pairs // 4)
    keep = i2 != j2
    i = np.concatenate([i1, i2[keep]])
    j = np.concatenate([j1, j2[keep]])
    s = rng.choice(space.n, size=min(n_probe, space.n), replace=False)
    d = space.pairwise_distance(space.points[i], space.points[j])
    ok = d > 0
    i, j, d = i[ok], j[ok], d[ok]
    best = 0.0
    for start in range(0, i.size, 512):
        sl = slice(start, start + 512)
        diff = np.abs(k.block(i[sl], s) - k.block(j[sl], s)).max(axis=1)
        best = max(best, float((diff / d[sl]).max()))
    return best


def assemble(spec: KernelSpec, space: DiscreteSpace, seed: int = 0) -> KernelMatrix:
    """Evaluate ``spec`` on every pair of grid points.

    Axis layouts expected per kind:

    * ``two_rod_area``: ``(p1, p2)``, or a single angle axis ``theta = p1 - p2``;
    * ``sized_two_rod_area``: ``(x1, x2, p1, p2)`` or reduced ``(x1, x2, theta)``;
    * ``rhombus_symdiff``: one axis ``p`` in ``[0, pi/2]``.
    """
    pts = space.points
    dim = space.dim
    if spec.kind == "two_rod_area":
        if dim == 2:
            phi = np.sin(pts[:, 0] - pts[:, 1])
        elif dim == 1:
            phi = np.sin(pts[:, 0])
        else:
            raise ValueError(f"two_rod_area needs 1 or 2 axes, space has {dim}")
        return KernelMatrix(space, feature=phi, spec=spec, seed=seed)
    if spec.kind == "sized_two_rod_area":
        L = float(spec.parameters.get("L", 1.0))
        if dim not in (3, 4):
            raise ValueError(f"sized_two_rod_area needs 3 or 4 axes, space has {dim}")
        x1, x2 = pts[:, 0], pts[:, 1]
        tol = 1e-12 * L
        if np.any(x1 < -tol) or np.any(x2 < -tol) or np.any(x1 > L + tol) or np.any(x2 > L + tol):
            raise ValueError(f"rod length axes must lie within [0, {L}]")
        theta = pts[:, 2] - pts[:, 3] if dim == 4 else pts[:, 2]
        return KernelMatrix(space, feature=x1 * x2 * np.sin(theta), spec=spec, seed=seed)
    if spec.kind == "rhombus_symdiff":
        if dim != 1:
            raise ValueError(f"rhombus_symdiff needs 1 axis, space has {dim}")
        p = np.clip(pts[:, 0], 0.0, HALF_PI)
        dense = rhombus_kernel(p[:, None], p[None, :])
        dense = 0.5 * (dense + dense.T)
        return KernelMatrix(space, dense=dense, spec=spec, seed=seed)
    matrix = spec.parameters.get("matrix")
    if matrix is None:
        matrix = load_tabulated(spec.parameters["path"])
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (space.n, space.n):
        raise ValueError(f"tabulated kernel has shape {matrix.shape}, space has {space.n} points")
    return KernelMatrix(space, dense=matrix, spec=spec, seed=seed)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`; ``passed`` is the overall verdict."""

    passed: bool
    max_symmetry_violation: float
    symmetry_witness: tuple | None
    max_diagonal: float
    diagonal_witness: int | None
    min_entry: float
    min_witness: tuple | None
    lipschitz_estimate: float
    sup_norm: float
    exhaustive: bool
    failures: list

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "max_symmetry_violation": self.max_symmetry_violation,
            "symmetry_witness": list(self.symmetry_witness) if self.symmetry_witness else None,
            "max_diagonal": self.max_diagonal,
            "diagonal_witness": self.diagonal_witness,
            "min_entry": self.min_entry,
            "min_witness": list(self.min_witness) if self.min_witness else None,
            "lipschitz_estimate": self.lipschitz_estimate,
            "sup_norm": self.sup_norm,
            "exhaustive": self.exhaustive,
            "failures": list(self.failures),
        }


def validate(k: KernelMatrix, tol: float = VALIDATION_TOL, max_rows: int = 4096) -> ValidationReport:
    """Check symmetry, zero diagonal and nonnegativity of ``k``.

    Matrices with more than ``max_rows`` points are checked on a random
    row/column sample (``exhaustive=False`` in the report); the diagonal is
    always checked in full.
    """
    n = k.n
    rng = np.random.default_rng(k.seed)
    if n <= max_rows:
        idx = np.arange(n)
        exhaustive = True
    else:
        idx = np.sort(rng.choice(n, size=max_rows, replace=False))
        exhaustive = False
    sym, sym_at = 0.0, None
    mn, mn_at = np.inf, None
    for start in range(0, idx.size, 1024):
        rows = idx[start:start + 1024]
        blk = k.block(rows, idx)
        blk_t = k.block(idx, rows).T
        asym = np.abs(blk - blk_t)
        a = np.unravel_index(np.argmax(asym), asym.shape)
        if asym[a] > sym:
            sym, sym_at = float(asym[a]), (int(rows[a[0]]), int(idx[a[1]]))
        m = np.unravel_index(np.argmin(blk), blk.shape)
        if blk[m] < mn:
            mn, mn_at = float(blk[m]), (int(rows[m[0]]), int(idx[m[1]]))
    if k.is_factored:
        diag = (k.feature - k.feature) ** 2
    else:
        diag = np.diagonal(k.block())
    di = int(np.argmax(np.abs(diag)))
    dmax = float(np.abs(diag[di]))
    failures = []
    if sym >= tol:
        failures.append({"condition": "symmetry", "index": list(sym_at), "magnitude": sym})
    if dmax >= tol:
        failures.append({"condition": "zero_diagonal", "index": di, "magnitude": dmax})
    if mn < 0:
        failures.append({"condition": "nonnegative", "index": list(mn_at), "magnitude": mn})
    return ValidationReport(
        passed=not failures,
        max_symmetry_violation=sym,
        symmetry_witness=sym_at if sym > 0 else None,
        max_diagonal=dmax,
        diagonal_witness=di if dmax > 0 else None,
        min_entry=mn,
        min_witness=mn_at if mn < 0 else None,
        lipschitz_estimate=k.lipschitz_estimate,
        sup_norm=k.sup_norm,
        exhaustive=exhaustive,
        failures=failures,
    )


def save_tabulated(path, matrix) -> None:
    """Write a dense matrix: ``# dimension N`` header, then N rows of reals."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("tabulated kernels must be square")
    np.savetxt(path, matrix, fmt="%.17g", header=f"dimension {matrix.shape[0]}")


def load_tabulated(path) -> np.ndarray:
    """Read a matrix written by :func:`save_tabulated`."""
    path = Path(path)
    with path.open() as fh:
        header = fh.readline()
    parts = header.lstrip("#").split()
    if len(parts) != 2 or parts[0] != "dimension":
        raise ValueError(f"{path}: missing '# dimension N' header")
    n = int(parts[1])
    data = np.loadtxt(path, ndmin=2)
    if data.shape != (n, n):
        raise ValueError(f"{path}: header says {n}x{n}, found {data.shape}")
    return data
