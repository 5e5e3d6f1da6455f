"""Zero-temperature diagnostics: zero sets, concentration and the selection test.

Low-temperature states concentrate on sets ``A`` on which the kernel
vanishes pairwise. This module extracts such sets from a kernel matrix,
measures how much mass a state puts near them, and checks numerically
whether a candidate set ``A1`` can be ruled out as a limit support by a
kernel-non-increasing, measure-expanding injection ``T`` into a
neighborhood of another zero set ``A0``.

Every check here is a sampled, grid-level verification. A passing
selection test means the hypotheses were numerically satisfied on the
sampled pairs and test sets; it is not a proof.
"""

from __future__ import annotations

import math

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .kernel import KernelMatrix, rhombus_kernel, rhombus_slope
from .space import Density, DiscreteSpace, bl_distance

DEFAULT_TAU_FRACTION = 1e-3
SUPERSAMPLE = {1: 32, 2: 8}
BLOCK_CELLS = 16
FD_STEP = 1e-6

SELECTION_NOTE = (
    "selection hypotheses numerically satisfied on sampled pairs and test sets; "
    "not a proof. T is checked for injectivity modulo grid snapping only."
)


def default_tau(k: KernelMatrix) -> float:
    """Zero-set threshold ``1e-3 * sup_norm``."""
    return DEFAULT_TAU_FRACTION * k.sup_norm


@dataclass(frozen=True)
class ZeroSet:
    """Grid points of a candidate limit support.

    Attributes
    ----------
    member_indices : ndarray of int
        Sorted grid indices in the set.
    tolerance : float
        Kernel threshold ``tau`` used to admit the set.
    pairwise_max : float
        ``max k(p, q)`` over pairs of members; never exceeds ``tolerance``.
    label : str
        Free-form name carried into reports.
    """

    member_indices: np.ndarray
    tolerance: float
    pairwise_max: float
    label: str = ""

    def __post_init__(self):
        m = np.unique(np.asarray(self.member_indices, dtype=int))
        if m.size == 0:
            raise ValueError("a zero set needs at least one member")
        m.setflags(write=False)
        object.__setattr__(self, "member_indices", m)
        if self.pairwise_max > self.tolerance:
            raise ValueError(
                f"set {self.label!r} has pairwise kernel max {self.pairwise_max:.3g} > tau {self.tolerance:.3g}"
            )

    @property
    def size(self) -> int:
        return int(self.member_indices.size)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "size": self.size,
            "tolerance": self.tolerance,
            "pairwise_max": self.pairwise_max,
        }


def _pairwise_max(k: KernelMatrix, members: np.ndarray) -> float:
    if k.is_factored:
        phi = k.feature[members]
        return float((phi.max() - phi.min()) ** 2)
    best = 0.0
    for chunk in np.array_split(members, max(1, members.size // 512)):
        best = max(best, float(k.block(chunk, members).max()))
    return best


def zero_set(k: KernelMatrix, members, tau: float | None = None, label: str = "") -> ZeroSet:
    """Wrap ``members`` as a ZeroSet after checking ``max k <= tau`` on them."""
    tau = default_tau(k) if tau is None else float(tau)
    members = np.unique(np.asarray(members, dtype=int))
    if members.size == 0:
        raise ValueError("empty candidate set")
    return ZeroSet(members, tau, _pairwise_max(k, members), label)


def level_set(k: KernelMatrix, value: float, tau: float | None = None, label: str = "") -> ZeroSet:
    """Points with ``|phi - value| <= sqrt(tau) / 2`` for a factored kernel.

    For ``k = (phi(p) - phi(q))**2`` this is the grid version of the level
    set ``{phi = value}``; every pair in it has ``k <= tau``. If no grid point
    is that close, the nearest level of ``phi`` is used instead.
    """
    if not k.is_factored:
        raise ValueError("level sets need a kernel of the form (phi(p) - phi(q))**2")
    tau = default_tau(k) if tau is None else float(tau)
    gap = np.abs(k.feature - value)
    members = np.flatnonzero(gap <= 0.5 * np.sqrt(tau))
    if members.size == 0:
        members = np.flatnonzero(gap <= gap.min() + 1e-12)
    return zero_set(k, members, tau, label or f"phi={value:g}")


@dataclass
class ZeroPairs:
    """Threshold graph ``{(i, j) : k(p_i, p_j) <= tau}``.

    For factored kernels the graph is held implicitly through the sorted
    feature values; for dense kernels it is a sparse adjacency matrix.
    """

    kernel: KernelMatrix
    tau: float
    degree: np.ndarray
    adjacency: object = None
    _labels: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_pairs(self) -> int:
        """Number of ordered pairs, diagonal included."""
        return int(self.degree.sum())

    @property
    def is_diagonal_only(self) -> bool:
        return bool(np.all(self.degree == 1))

    @property
    def is_complete(self) -> bool:
        return bool(np.all(self.degree == self.kernel.n))

    def contains(self, i, j) -> np.ndarray:
        i = np.atleast_1d(np.asarray(i, dtype=int))
        j = np.atleast_1d(np.asarray(j, dtype=int))
        vals = np.array([self.kernel.block([a], [b])[0, 0] for a, b in zip(i, j)])
        return vals <= self.tau

    def components(self) -> np.ndarray:
        """Connected-component label of every grid point."""
        if self._labels is None:
            if self.adjacency is not None:
                _, labels = connected_components(self.adjacency, directed=False)
            else:
                phi = self.kernel.feature
                order = np.argsort(phi, kind="stable")
                breaks = np.diff(phi[order]) > np.sqrt(self.tau)
                labels = np.empty(phi.size, dtype=int)
                labels[order] = np.concatenate([[0], np.cumsum(breaks)])
            self._labels = labels
        return self._labels

    def component_sets(self, min_size: int = 1) -> list:
        """Components as ZeroSets (only those that are cliques at ``tau``)."""
        labels = self.components()
        out = []
        for lab in np.unique(labels):
            members = np.flatnonzero(labels == lab)
            if members.size < min_size:
                continue
            pm = _pairwise_max(self.kernel, members)
            if pm <= self.tau:
                out.append(ZeroSet(members, self.tau, pm, f"component {lab}"))
        return out

    def to_dict(self) -> dict:
        labels = self.components()
        return {
            "tau": self.tau,
            "n_points": int(self.kernel.n),
            "n_pairs": self.n_pairs,
            "diagonal_only": self.is_diagonal_only,
            "complete": self.is_complete,
            "n_components": int(np.unique(labels).size),
            "max_degree": int(self.degree.max()),
        }


def zero_pairs(k: KernelMatrix, tau: float | None = None) -> ZeroPairs:
    """Graph of grid pairs on which the kernel is at most ``tau``.

    ``tau`` defaults to ``1e-3 * sup_norm``.
    """
    tau = default_tau(k) if tau is None else float(tau)
    if tau < 0:
        raise ValueError("tau must be >= 0")
    n = k.n
    if k.is_factored:
        phi = k.feature
        srt = np.sort(phi)
        r = np.sqrt(tau)
        # count |phi_j - phi_i| <= r, with a tiny guard so exact ties land inside
        hi = np.searchsorted(srt, phi + r * (1 + 1e-15) + 1e-300, side="right")
        lo = np.searchsorted(srt, phi - r * (1 + 1e-15) - 1e-300, side="left")
        deg = (hi - lo).astype(np.int64)
        if tau == 0:
            deg = np.array([np.count_nonzero(phi == v) for v in phi])
        return ZeroPairs(k, tau, deg)
    rows, cols = [], []
    for chunk in np.array_split(np.arange(n), max(1, n // 512)):
        bi, bj = np.nonzero(k.block(chunk, None) <= tau)
        rows.append(chunk[bi])
        cols.append(bj)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    adj = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n)).tocsr()
    deg = np.diff(adj.indptr).astype(np.int64)
    return ZeroPairs(k, tau, deg, adj)


_MASK_CACHE: dict = {}


def _neighborhood_mask(space: DiscreteSpace, zs: ZeroSet, eps: float) -> np.ndarray:
    """Grid points within ``eps`` of ``zs`` (cached per space, set and radius)."""
    key = (space.descriptor_hash(), hash(zs.member_indices.tobytes()), float(eps))
    mask = _MASK_CACHE.get(key)
    if mask is None:
        if len(_MASK_CACHE) > 64:
            _MASK_CACHE.clear()
        mask = space.distance_to_set(zs.member_indices, upper=eps) <= eps
        mask.setflags(write=False)
        _MASK_CACHE[key] = mask
    return mask


@dataclass
class ConcentrationReport:
    """Mass of a state near candidate limit supports.

    Attributes
    ----------
    b : float
    eps : float
    labels : list of str
    mass_in_neighborhood : list of float
        ``sum g w`` over the metric ``eps``-neighborhood of each candidate.
    two_over_b_energy : float
        ``2 E_b[g] / b``, read from the state itself.
    bl_to_candidate : list of float
        Bounded-Lipschitz distance from ``g dmu`` to the normalized uniform
        measure on each candidate.
    """

    b: float
    eps: float
    labels: list
    mass_in_neighborhood: list
    two_over_b_energy: float
    bl_to_candidate: list

    def to_rows(self) -> list:
        return [
            (self.b, lab, self.eps, m, self.two_over_b_energy, d)
            for lab, m, d in zip(self.labels, self.mass_in_neighborhood, self.bl_to_candidate)
        ]


def concentration(state, candidates, eps: float, with_bl: bool = True) -> ConcentrationReport:
    """Concentration of ``state.density`` near each candidate ZeroSet."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    if isinstance(candidates, ZeroSet):
        candidates = [candidates]
    if not candidates:
        raise ValueError("at least one candidate set is required")
    g = state.density
    space = g.space
    meas = g.measure()
    masses, bls, labels = [], [], []
    for zs in candidates:
        if zs.size == 0:
            raise ValueError("empty candidate set")
        mask = _neighborhood_mask(space, zs, eps)
        # exactly rounded sums keep masses monotone in eps
        masses.append(min(1.0, math.fsum(meas[mask])))
        labels.append(zs.label)
        if with_bl:
            ind = np.zeros(space.n)
            ind[zs.member_indices] = 1.0
            bls.append(bl_distance(g, Density.indicator(space, ind)))
        else:
            bls.append(float("nan"))
    return ConcentrationReport(float(state.b), float(eps), labels, masses, state.two_over_b_energy, bls)


def neighborhood_volume_profile(zs: ZeroSet, space: DiscreteSpace, eps_list) -> list:
    """``[(eps, mu(B(A, eps))), ...]`` for the metric neighborhoods of ``A``."""
    if zs.size == 0:
        raise ValueError("empty set")
    eps_list = [float(e) for e in eps_list]
    d = space.distance_to_set(zs.member_indices, upper=max(eps_list) if eps_list else None)
    w = space.weights
    return [(e, min(1.0, math.fsum(w[d <= e]))) for e in eps_list]


def kernel_neighborhood_profile(k: KernelMatrix, zs: ZeroSet, tau_list) -> list:
    """Largest measure of a grid interval containing ``A`` with kernel diameter ``<= tau``.

    This is the one-axis version of "how much room is there around ``A``
    before pairs stop being nearly zero-interaction". Only defined for
    spaces with one axis, where contiguous intervals can be enumerated.
    """
    space = k.space
    if space.dim != 1:
        raise ValueError("kernel neighborhoods are enumerated on one-axis spaces only")
    order = np.argsort(space.points[:, 0], kind="stable")
    pos = np.empty_like(order)
    pos[order] = np.arange(order.size)
    lo_m, hi_m = int(pos[zs.member_indices].min()), int(pos[zs.member_indices].max())
    kk = k.block(order, order)
    w = space.weights[order]
    cw = np.concatenate([[0.0], np.cumsum(w)])
    out = []
    for tau in tau_list:
        best = 0.0
        # kernel diameter of [i, j] is max over the sub-block; grow j monotonically
        for i in range(lo_m, -1, -1):
            if kk[i, hi_m] > tau and i < lo_m:
                break
            sub = kk[i:hi_m + 1, i:hi_m + 1]
            if sub.max() > tau:
                break
            j = hi_m
            while j + 1 < kk.shape[0] and kk[i:j + 2, j + 1].max() <= tau:
                j += 1
            best = max(best, cw[j + 1] - cw[i])
        out.append((float(tau), float(best)))
    return out


# --- selection test ---------------------------------------------------------


@dataclass
class SelectionSpec:
    """Inputs of the selection test.

    ``map_T`` takes an ``(m, dim)`` coordinate array and returns the images
    with the same shape. ``eps0`` and ``eps1`` are metric radii.
    """

    set0: ZeroSet
    set1: ZeroSet
    map_T: Callable
    c: float
    eps0: float
    eps1: float
    name: str = ""

    def __post_init__(self):
        if not self.c > 1:
            raise ValueError("expansion constant c must be > 1")
        if not (self.eps0 > 0 and self.eps1 > 0):
            raise ValueError("eps0 and eps1 must be > 0")


@dataclass
class SelectionReport:
    """Verdict of :func:`selection_test`.

    ``conditions`` maps each checked condition to a dict with ``passed``,
    ``margin`` and, on failure, a ``witness``.
    """

    passed: bool
    conditions: dict
    failed: list
    note: str = SELECTION_NOTE
    name: str = ""

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "failed": list(self.failed),
            "note": self.note,
            "conditions": self.conditions,
        }


def pointwise_kernel(k: KernelMatrix):
    """Kernel as a function of raw coordinates, or ``None`` for tabulated kernels."""
    if k.spec is None:
        return None
    dim = k.space.dim
    kind = k.spec.kind
    if kind == "two_rod_area":
        def phi(x):
            return np.sin(x[..., 0] - x[..., 1]) if dim == 2 else np.sin(x[..., 0])
    elif kind == "sized_two_rod_area":
        def phi(x):
            th = x[..., 2] - x[..., 3] if dim == 4 else x[..., 2]
            return x[..., 0] * x[..., 1] * np.sin(th)
    elif kind == "rhombus_symdiff":
        return lambda x, y: rhombus_kernel(np.clip(x[..., 0], 0, np.pi / 2), np.clip(y[..., 0], 0, np.pi / 2))
    else:
        return None
    return lambda x, y: (phi(x) - phi(y)) ** 2


def _axis_nodes(space: DiscreteSpace):
    if space.shape is None or len(space.shape) != space.dim:
        raise ValueError("snapping needs a tensor-product grid")
    return [ax.nodes(n)[0] for ax, n in zip(space.axes, space.shape)]


def snap(space: DiscreteSpace, coords, tol: float = 1e-9):
    """Nearest grid index of each coordinate row; ``-1`` where outside the space."""
    coords = np.atleast_2d(np.asarray(coords, dtype=float))
    nodes = _axis_nodes(space)
    idx = np.zeros(coords.shape[0], dtype=np.int64)
    ok = np.ones(coords.shape[0], dtype=bool)
    for j, (ax, x) in enumerate(zip(space.axes, nodes)):
        c = coords[:, j]
        n = x.size
        if ax.kind == "periodic":
            t = np.mod(c - ax.lo, ax.length) / ax.length * n
            ij = np.mod(np.rint(t).astype(np.int64), n)
        else:
            ok &= (c >= ax.lo - tol * ax.length) & (c <= ax.hi + tol * ax.length)
            mids = 0.5 * (x[1:] + x[:-1])
            ij = np.searchsorted(mids, c)
        idx = idx * n + ij
    idx[~ok] = -1
    return idx


def _wrap_delta(space: DiscreteSpace, d: np.ndarray) -> np.ndarray:
    d = d.copy()
    for j, ax in enumerate(space.axes):
        if ax.kind == "periodic":
            d[..., j] = np.mod(d[..., j] + 0.5 * ax.length, ax.length) - 0.5 * ax.length
    return d


def jacobian_estimate(space: DiscreteSpace, T: Callable, points, step: float = FD_STEP) -> np.ndarray:
    """``|det DT|`` by central differences along each axis at ``points``."""
    points = np.atleast_2d(points)
    m, dim = points.shape
    J = np.empty((m, dim, dim))
    for j in range(dim):
        e = np.zeros(dim)
        e[j] = step
        d = _wrap_delta(space, T(points + e) - T(points - e))
        J[:, :, j] = d / (2 * step)
    return np.abs(np.linalg.det(J))


def _supersample(space: DiscreteSpace, idx: np.ndarray, r: int):
    """Sub-cell sample points and weights for the grid cells ``idx``."""
    nodes = _axis_nodes(space)
    spacing = []
    for ax, x in zip(space.axes, nodes):
        if ax.kind == "periodic":
            spacing.append(np.full(x.size, ax.length / x.size))
        else:
            edges = np.concatenate([[x[0]], 0.5 * (x[1:] + x[:-1]), [x[-1]]])
            spacing.append(np.diff(edges))
    dim = space.dim
    offs1 = (np.arange(r) + 0.5) / r - 0.5
    offs = np.stack(np.meshgrid(*([offs1] * dim), indexing="ij"), axis=-1).reshape(-1, dim)
    multi = np.array(np.unravel_index(idx, space.shape)).T
    h = np.stack([spacing[j][multi[:, j]] for j in range(dim)], axis=1)
    centers = space.points[idx].copy()
    # interval end cells are half cells; centre them inside the interval
    for j, (ax, x) in enumerate(zip(space.axes, nodes)):
        if ax.kind == "interval":
            lo_end = multi[:, j] == 0
            hi_end = multi[:, j] == x.size - 1
            centers[lo_end, j] += 0.5 * h[lo_end, j]
            centers[hi_end, j] -= 0.5 * h[hi_end, j]
    pts = centers[:, None, :] + offs[None, :, :] * h[:, None, :]
    w = np.repeat(space.weights[idx] / offs.shape[0], offs.shape[0])
    return pts.reshape(-1, dim), w, np.repeat(idx, offs.shape[0])


def _blocks(space: DiscreteSpace, mask: np.ndarray, s: int):
    """Grid-aligned blocks of ``s`` cells per axis lying entirely inside ``mask``."""
    shape = space.shape
    multi = np.array(np.unravel_index(np.arange(space.n), shape)).T
    key = multi // s
    bkey = np.ravel_multi_index(key.T, tuple(-(-n // s) for n in shape))
    blocks = []
    for kval in np.unique(bkey[mask]):
        members = np.flatnonzero(bkey == kval)
        if members.size == s ** space.dim and mask[members].all():
            blocks.append(members)
    return blocks


def selection_test(spec: SelectionSpec, k: KernelMatrix, space: DiscreteSpace | None = None,
                   samples: int = 4000, seed: int = 0, supersample: int | None = None,
                   block_cells: int = BLOCK_CELLS, n_unions: int = 64) -> SelectionReport:
    """Check the selection hypotheses for ``T: B1(eps1) -> B0(eps0)`` on the grid.

    Conditions
    ----------
    in_space
        every image of a grid point or sub-cell sample of ``B1`` lies in the space.
    maps_into_B0
        images are within ``eps0`` (plus one grid spacing) of ``A0``.
    injective
        distinct grid points of ``B1`` snap to distinct grid points.
    kernel_nonincreasing
        ``k(T p, T q) <= k(p, q)`` on all sampled pairs of ``B1``.
    measure_expanding
        ``mu(T(B)) >= c mu(B)``, estimated two ways: (a) pushforward of a
        sub-cell sampling of ``B1`` onto grid blocks and random unions of
        blocks; (b) the finite-difference Jacobian ``|det DT| >= c``.
    separation
        ``k(p, q) > 0`` for sampled ``p`` in ``A1`` and ``q`` outside ``B1``.
    """
    space = k.space if space is None else space
    if not space.same_as(k.space):
        raise ValueError("kernel and space disagree")
    if supersample is None:
        supersample = SUPERSAMPLE.get(space.dim, 4)
    rng = np.random.default_rng(seed)
    T = spec.map_T
    kfun = pointwise_kernel(k)
    conds = {}

    d1 = space.distance_to_set(spec.set1.member_indices)
    in_b1 = np.flatnonzero(d1 < spec.eps1)
    if in_b1.size == 0:
        raise ValueError("B1(eps1) contains no grid points")
    pts = space.points[in_b1]
    img = np.asarray(T(pts), dtype=float)

    # sub-cell samples restricted to the continuous neighborhood B1(eps1)
    sub_pts, sub_w, sub_src = _supersample(space, in_b1, supersample)
    sub_d = space.distance_to_points(sub_pts, space.points[spec.set1.member_indices])
    keep = sub_d < spec.eps1
    per_cell = supersample ** space.dim
    full_cell = keep.reshape(-1, per_cell).all(axis=1)
    sub_full = np.repeat(full_cell, per_cell)[keep]
    sub_pts, sub_w, sub_src = sub_pts[keep], sub_w[keep], sub_src[keep]
    sub_img = np.asarray(T(sub_pts), dtype=float)

    # in_space
    snapped = snap(space, img)
    sub_snapped = snap(space, sub_img)
    bad = np.flatnonzero(snapped < 0)
    bad_sub = np.flatnonzero(sub_snapped < 0)
    conds["in_space"] = {
        "passed": bool(bad.size == 0 and bad_sub.size == 0),
        "margin": int(bad.size + bad_sub.size),
        "witness": (
            {"index": int(in_b1[bad[0]]), "image": img[bad[0]].tolist()} if bad.size
            else {"sample": sub_pts[bad_sub[0]].tolist(), "image": sub_img[bad_sub[0]].tolist()} if bad_sub.size
            else None
        ),
    }

    # maps_into_B0 (continuous images against the grid set A0, one spacing of slack)
    spacing = max(ax.length / n for ax, n in zip(space.axes, space.shape))
    dist0 = space.distance_to_points(img, space.points[spec.set0.member_indices])
    worst = int(np.argmax(dist0))
    limit0 = spec.eps0 + spacing
    conds["maps_into_B0"] = {
        "passed": bool(dist0[worst] < limit0),
        "margin": float(limit0 - dist0[worst]),
        "witness": None if dist0[worst] < limit0 else {"index": int(in_b1[worst]), "distance": float(dist0[worst])},
    }

    # injective modulo snapping
    valid = snapped[snapped >= 0]
    uniq, counts = np.unique(valid, return_counts=True)
    dup = uniq[counts > 1]
    witness = None
    if dup.size:
        src = in_b1[snapped == dup[0]]
        witness = {"indices": src[:2].tolist(), "target": int(dup[0])}
    conds["injective"] = {"passed": bool(dup.size == 0), "margin": int(-dup.size), "witness": witness}

    # kernel_nonincreasing on sampled pairs (grid points plus sub-cell samples)
    pool = np.concatenate([pts, sub_pts])
    pool_img = np.concatenate([img, sub_img])
    m = min(samples, pool.shape[0] ** 2)
    a = rng.integers(0, pool.shape[0], m)
    b = rng.integers(0, pool.shape[0], m)
    if kfun is not None:
        k_orig = kfun(pool[a], pool[b])
        k_img = kfun(pool_img[a], pool_img[b])
    else:
        sp = np.concatenate([in_b1, sub_src])
        si = np.concatenate([snapped, sub_snapped])
        ok = (si[a] >= 0) & (si[b] >= 0)
        a, b = a[ok], b[ok]
        k_orig = np.array([k.block([sp[i]], [sp[j]])[0, 0] for i, j in zip(a, b)])
        k_img = np.array([k.block([si[i]], [si[j]])[0, 0] for i, j in zip(a, b)])
    tol = 1e-12 * max(1.0, k.sup_norm)
    excess = k_img - k_orig
    w_i = int(np.argmax(excess)) if excess.size else 0
    ok_k = bool(excess.size == 0 or excess[w_i] <= tol)
    conds["kernel_nonincreasing"] = {
        "passed": ok_k,
        "margin": float(-excess[w_i]) if excess.size else 0.0,
        "pairs_checked": int(excess.size),
        "witness": None if ok_k else {
            "p": pool[a[w_i]].tolist(), "q": pool[b[w_i]].tolist(),
            "k_pq": float(k_orig[w_i]), "k_TpTq": float(k_img[w_i]),
        },
    }

    # measure_expanding (a): pushforward of the sampled measure onto grid blocks
    push = np.bincount(sub_snapped[sub_snapped >= 0], weights=sub_w[sub_snapped >= 0], minlength=space.n)
    covered = push > 0
    ok_snap = sub_snapped >= 0
    touched_by_partial = np.zeros(space.n, dtype=bool)
    touched_by_partial[sub_snapped[ok_snap & ~sub_full]] = True
    # blocks well inside the image: every cell and its axis neighbours receive mass,
    # and only from source cells lying entirely inside B1
    interior = covered & ~touched_by_partial
    multi = np.array(np.unravel_index(np.arange(space.n), space.shape)).T
    for j, (ax, n) in enumerate(zip(space.axes, space.shape)):
        for step in (-1, 1):
            nb = multi.copy()
            nb[:, j] += step
            if ax.kind == "periodic":
                nb[:, j] %= n
                inside = np.ones(space.n, dtype=bool)
            else:
                inside = (nb[:, j] >= 0) & (nb[:, j] < n)
                nb[:, j] = np.clip(nb[:, j], 0, n - 1)
            flat = np.ravel_multi_index(nb.T, space.shape)
            interior &= np.where(inside, covered[flat] & ~touched_by_partial[flat], True)
    s = block_cells
    blocks = _blocks(space, interior, s)
    while not blocks and s > 1:
        s //= 2
        blocks = _blocks(space, interior, s)
    ratios = []
    for blk in blocks:
        ratios.append(space.weights[blk].sum() / push[blk].sum())
    for _ in range(n_unions if len(blocks) > 1 else 0):
        pick = rng.choice(len(blocks), size=rng.integers(2, min(len(blocks), 8) + 1), replace=False)
        u = np.concatenate([blocks[i] for i in pick])
        ratios.append(space.weights[u].sum() / push[u].sum())
    # whole neighborhood: mu(T(B1)) against mu(B1)
    total_ratio = float(space.weights[covered].sum() / sub_w.sum())
    inconclusive = not ratios
    ratios = np.array(ratios) if ratios else np.array([np.nan])
    allowance = spec.c * space.dim / (s * supersample)
    jac = jacobian_estimate(space, T, pts)
    jac_med = float(np.median(jac))
    jac_min = float(jac.min())
    r_min = float(ratios.min())
    ok_push = (not inconclusive) and r_min >= spec.c - allowance
    ok_jac = jac_min >= spec.c * (1 - 1e-6)
    conds["measure_expanding"] = {
        "passed": bool(ok_push and ok_jac),
        "margin": float(min(r_min - spec.c, jac_min - spec.c)),
        "pushforward_min_ratio": r_min,
        "pushforward_total_ratio": total_ratio,
        "snap_allowance": allowance,
        "n_test_sets": 0 if inconclusive else int(ratios.size),
        "inconclusive": inconclusive,
        "block_cells": int(s),
        "jacobian_min": jac_min,
        "jacobian_median": jac_med,
        "witness": None if ok_push and ok_jac else {
            "ratio": r_min, "jacobian": jac_min, "required": spec.c,
            "index": int(in_b1[int(np.argmin(jac))]),
        },
    }

    # separation: k(p, q) > 0 for p in A1, q outside B1
    outside = np.flatnonzero(d1 >= spec.eps1)
    if outside.size == 0:
        conds["separation"] = {"passed": True, "margin": float("inf"), "witness": None}
    else:
        mm = min(samples, spec.set1.size * outside.size)
        pa = spec.set1.member_indices[rng.integers(0, spec.set1.size, mm)]
        qa = outside[rng.integers(0, outside.size, mm)]
        # always include the outside points closest to A1
        near = outside[np.argsort(d1[outside], kind="stable")[: min(outside.size, 256)]]
        pa = np.concatenate([pa, np.repeat(spec.set1.member_indices[:1], near.size)])
        qa = np.concatenate([qa, near])
        if k.is_factored:
            vals = (k.feature[pa] - k.feature[qa]) ** 2
        else:
            vals = np.array([k.block([i], [j])[0, 0] for i, j in zip(pa, qa)])
        wi = int(np.argmin(vals))
        conds["separation"] = {
            "passed": bool(vals[wi] > 0),
            "margin": float(vals[wi]),
            "witness": None if vals[wi] > 0 else {"p": int(pa[wi]), "q": int(qa[wi])},
        }

    failed = [name for name, cnd in conds.items() if not cnd["passed"]]
    return SelectionReport(not failed, conds, failed, name=spec.name)


# --- comparison maps for the built-in examples -----------------------------


def two_rod_selection(k: KernelMatrix, c: float = 1.2, eps: float = 0.3, tau: float = 1e-12) -> SelectionSpec:
    """Area-0 set ``{sin(p1 - p2) = 0}`` against the area-1/2 set ``{sin(p1 - p2) = 1}``.

    ``T`` shifts ``p1`` so that the difference ``D = p1 - p2`` in ``(-eps, eps)``
    goes to ``pi/2 - c (eps - D)`` and ``D`` in ``(pi - eps, pi + eps)`` goes
    to ``pi/2 - c (pi - eps - D)``; ``p2`` is unchanged.

    With the max metric the distance from ``(p1, p2)`` to the diagonal
    ``{D = 0}`` is ``|D| / 2``, so the metric radii are ``eps1 = eps / 2`` and
    ``eps0 = c * eps``. On a grid with spacing ``h`` in ``D``, ``eps`` is moved
    to the nearest ``(m + 1/2) h`` so that the two pieces never snap onto the
    same target cell next to ``D = pi/2``.
    """
    space = k.space
    if space.dim != 2:
        raise ValueError("the two-rod comparison map acts on (p1, p2)")
    if space.shape is not None:
        h = 2 * np.pi / space.shape[0]
        eps = (max(1, int(round(eps / h - 0.5))) + 0.5) * h
    set1 = level_set(k, 0.0, tau, "area 0")
    set0 = level_set(k, 1.0, tau, "area 1/2, positive")

    def T(x):
        x = np.atleast_2d(x)
        D = np.mod(x[:, 0] - x[:, 1] + np.pi / 2, 2 * np.pi) - np.pi / 2  # D in [-pi/2, 3pi/2)
        near0 = D < np.pi / 2
        newD = np.where(near0, np.pi / 2 - c * (eps - D), np.pi / 2 - c * (np.pi - eps - D))
        p1 = np.mod(x[:, 1] + newD, 2 * np.pi)
        return np.stack([p1, x[:, 1]], axis=1)

    return SelectionSpec(set0, set1, T, c, c * eps, eps / 2, "two-rod area 0 -> area 1/2")


def rhombus_selection(k: KernelMatrix, q_index: int, c: float | None = None, eps: float = 0.05) -> SelectionSpec:
    """Singleton ``{q}`` against ``{pi/2}`` with ``T(p) = pi/2 - c (q + eps - p)``.

    ``q`` is the grid point ``q_index``. ``c`` should lie in
    ``(1, sin^4(q/2) + cos^4(q/2) + 1/2)``; the default is the midpoint of
    that interval. ``eps`` should be small compared with ``pi/2 - q``.
    """
    space = k.space
    q = float(space.points[q_index, 0])
    if c is None:
        c = 1.0 + 0.5 * (rhombus_slope(q) - 0.5)
    top = int(np.argmax(space.points[:, 0]))
    set1 = zero_set(k, [q_index], 0.0, f"q={q:.6g}")
    set0 = zero_set(k, [top], 0.0, "pi/2")

    def T(x):
        x = np.atleast_2d(x)
        return np.pi / 2 - c * (q + eps - x)

    return SelectionSpec(set0, set1, T, c, 2 * c * eps, eps, f"rhombus q={q:.4f} -> pi/2")


def identity_selection(spec: SelectionSpec, c: float = 1.5) -> SelectionSpec:
    """Same sets as ``spec`` but with ``T`` the identity and ``A0 = A1``."""
    return SelectionSpec(spec.set1, spec.set1, lambda x: np.array(np.atleast_2d(x), dtype=float), c,
                         spec.eps1, spec.eps1, "identity")
