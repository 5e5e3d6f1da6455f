"""Mean-field potentials, free energies and the Onsager fixed-point solver.

For a density ``f`` on a discrete space with weights ``w`` and kernel ``k``::

    U[f]_i   = sum_j k_ij f_j w_j
    E_b[f]   = sum_i (log f_i + b/2 U[f]_i) f_i w_i
    T_b[f]   = exp(-b U[f]) / Z_b[f],   Z_b[f] = sum_i exp(-b U[f]_i) w_i

Solutions of ``f = T_b[f]`` are computed by damped Picard iteration with a
step-halving safeguard on the free energy.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .kernel import KernelMatrix
from .space import MASS_TOL, Density, DiscreteSpace, entropy

log = logging.getLogger(__name__)

INIT_KINDS = ("uniform", "perturbed", "tabulated")


@dataclass
class SolverConfig:
    """Damped fixed-point iteration settings.

    ``init`` selects the starting density: ``uniform``; ``perturbed``, i.e.
    ``1 + amplitude * s(p)`` with ``s`` the kernel's area feature scaled to
    ``[-1, 1]`` (``sin(p1 - p2)`` for two-rods) or, for dense kernels, seeded
    uniform noise; or ``tabulated`` (``init_values`` holds the density).

    ``acceleration='anderson'`` mixes the last ``anderson_memory`` iterates;
    mixed candidates still pass the positivity and energy safeguard.

    ``point_seeds > 0`` makes :func:`continue_in_b` also solve from that many
    point-mass Gibbs seeds (see :func:`point_seed_candidates`) at every
    ``b`` and keep the lowest free energy. Dense kernels only.
    """

    damping: float = 0.5
    max_iterations: int = 10_000
    tolerance: float = 1e-10
    b_schedule: tuple = ()
    init: str = "uniform"
    amplitude: float = 0.1
    seed: int = 0
    init_values: np.ndarray | None = field(default=None, repr=False)
    acceleration: str = "none"
    anderson_memory: int = 5
    point_seeds: int = 0

    def __post_init__(self):
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must lie in (0, 1], got {self.damping}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        sched = tuple(float(b) for b in self.b_schedule)
        if any(b < 0 for b in sched):
            raise ValueError("b_schedule entries must be >= 0")
        if any(b1 <= b0 for b0, b1 in zip(sched, sched[1:])):
            raise ValueError("b_schedule must be strictly increasing")
        self.b_schedule = sched
        if self.init not in INIT_KINDS:
            raise ValueError(f"init must be one of {INIT_KINDS}")
        if self.init == "tabulated" and self.init_values is None:
            raise ValueError("init='tabulated' needs init_values")
        if self.acceleration not in ("none", "anderson"):
            raise ValueError("acceleration must be 'none' or 'anderson'")
        if self.anderson_memory < 1:
            raise ValueError("anderson_memory must be >= 1")
        if self.point_seeds < 0:
            raise ValueError("point_seeds must be >= 0")


@dataclass
class OnsagerState:
    """Result of :func:`solve` at one inverse temperature ``b``."""

    density: Density
    potential: np.ndarray
    b: float
    log_partition: float
    energy: float
    residual: float
    converged: bool = True
    iterations: int = 0
    trace: list = field(default_factory=list, repr=False)

    @property
    def partition(self) -> float:
        return float(np.exp(self.log_partition))

    @property
    def two_over_b_energy(self) -> float:
        return 2.0 * self.energy / self.b if self.b > 0 else float("nan")

    @property
    def status(self) -> str:
        return "converged" if self.converged else "not_converged"


def _check_space(k: KernelMatrix, f: Density):
    if not k.space.same_as(f.space):
        raise ValueError("kernel and density live on different spaces")


def potential(k: KernelMatrix, f: Density) -> np.ndarray:
    """``U[f](p_i) = sum_j k(p_i, p_j) f_j w_j``."""
    _check_space(k, f)
    v = f.values * f.space.weights
    if k.is_factored:
        # (phi_i - phi_j)^2 summed against v, written as a nonnegative sum
        phi = k.feature
        m0 = v.sum()
        c = np.dot(phi, v) / m0
        return m0 * (phi - c) ** 2 + np.dot((phi - c) ** 2, v)
    return k.apply(v)


def interaction(k: KernelMatrix, f: Density, u=None) -> float:
    """``sum U[f] f w``, the mean potential."""
    if u is None:
        u = potential(k, f)
    return float(np.dot(u, f.values * f.space.weights))


def free_energy(k: KernelMatrix, f: Density, b: float) -> float:
    """``E_b[f] = int f log f dmu + b/2 int U[f] f dmu``."""
    if b < 0:
        raise ValueError("b must be >= 0")
    return entropy(f) + 0.5 * b * interaction(k, f)


def _gibbs(u: np.ndarray, b: float, w: np.ndarray):
    """Normalized ``exp(-b u)`` and its log partition, max-shifted."""
    z = -b * u
    m = z.max()
    e = np.exp(z - m)
    s = float(np.dot(e, w))
    return e / s, float(np.log(s) + m)


def onsager_map(k: KernelMatrix, f: Density, b: float):
    """Apply ``f -> exp(-b U[f]) / Z_b[f]``.

    Returns
    -------
    g : Density
        The image density.
    partition : float
        ``Z_b[f]`` (may underflow to 0 for very large ``b``; use
        :func:`onsager_map_log` for the log partition).
    """
    g, logz = onsager_map_log(k, f, b)
    return g, float(np.exp(logz))


def onsager_map_log(k: KernelMatrix, f: Density, b: float):
    u = potential(k, f)
    vals, logz = _gibbs(u, b, f.space.weights)
    return Density(vals, f.space), logz


def initial_density(k: KernelMatrix, cfg: SolverConfig) -> Density:
    """Starting density described by ``cfg.init``."""
    space = k.space
    if cfg.init == "uniform":
        return Density.uniform(space)
    if cfg.init == "tabulated":
        return Density.normalized(cfg.init_values, space)
    return Density.normalized(_perturbation(k, cfg), space)


def _perturbation(k: KernelMatrix, cfg: SolverConfig) -> np.ndarray:
    """Seeded factor ``1 + amplitude * s`` with ``s`` in ``[-1, 1]``."""
    if k.is_factored:
        s = k.feature / max(np.abs(k.feature).max(), 1e-300)
    else:
        s = np.random.default_rng(cfg.seed).uniform(-1.0, 1.0, size=k.space.n)
    vals = 1.0 + cfg.amplitude * s
    if np.any(vals < 0):
        raise ValueError("perturbation amplitude makes the initial density negative")
    return vals


def _energy_terms(k, vals, w, b):
    f = Density(vals, k.space, check=False)
    u = potential(k, f)
    ent = float(np.dot(xlogy(vals, vals), w))
    inter = float(np.dot(u, vals * w))
    return ent + 0.5 * b * inter, ent, inter, u


def _anderson(xs, gs):
    """Anderson (type II) extrapolation from iterates ``xs`` and images ``gs``."""
    r = [g - x for x, g in zip(xs, gs)]
    df = np.stack([r[i + 1] - r[i] for i in range(len(r) - 1)], axis=1)
    dg = np.stack([gs[i + 1] - gs[i] for i in range(len(gs) - 1)], axis=1)
    gamma, *_ = np.linalg.lstsq(df, r[-1], rcond=None)
    return gs[-1] - dg @ gamma


def solve(k: KernelMatrix, cfg: SolverConfig, b: float, init: Density | None = None,
          callback=None) -> OnsagerState:
    """Solve the Onsager equation at fixed ``b`` by safeguarded damped iteration.

    Each step proposes ``(1 - t) f + t T_b[f]``. The direction ``T_b[f] - f``
    is a descent direction of ``E_b``, so the step ``t`` (starting at
    ``cfg.damping``) is halved until the free energy does not increase, and
    is allowed to grow back towards ``cfg.damping`` after accepted steps.
    With Anderson acceleration the mixed point is tried first and kept only
    if it is positive and does not raise the energy.

    Stops when the L1 residual ``||f - T_b[f]||`` drops below
    ``cfg.tolerance`` and then returns ``T_b[f]``. Reaching
    ``cfg.max_iterations`` first returns the last state with
    ``converged=False``; it does not raise.

    ``callback(iteration, values)``, if given, sees every iterate including
    the starting density (iteration 0). ``values`` is read-only.
    """
    if b < 0:
        raise ValueError("b must be >= 0")
    if init is None:
        init = initial_density(k, cfg)
    _check_space(k, init)
    w = k.space.weights
    f = np.array(init.values, dtype=float)
    energy, ent, inter, u = _energy_terms(k, f, w, b)
    t_max = cfg.damping
    t = t_max
    trace = []
    converged = False
    it = 0
    g, logz = _gibbs(u, b, w)
    residual = float(np.dot(np.abs(f - g), w))
    hist_x, hist_g = [f], [g]
    while True:
        trace.append((it, energy, residual, t))
        if callback is not None:
            view = f.view()
            view.setflags(write=False)
            callback(it, view)
        if residual < cfg.tolerance:
            converged = True
            break
        if it >= cfg.max_iterations:
            break
        it += 1
        slack = 64 * np.finfo(float).eps * (abs(ent) + 0.5 * b * abs(inter) + 1.0)
        accepted = False
        if cfg.acceleration == "anderson" and len(hist_x) > 1:
            cand = _anderson(hist_x, hist_g)
            if np.all(cand > 0) and np.all(np.isfinite(cand)):
                cand = cand / float(np.dot(cand, w))
                e_c, ent_c, inter_c, u_c = _energy_terms(k, cand, w, b)
                accepted = e_c <= energy + slack
            if not accepted:
                hist_x, hist_g = hist_x[-1:], hist_g[-1:]
        if not accepted:
            while True:
                cand = (1.0 - t) * f + t * g
                e_c, ent_c, inter_c, u_c = _energy_terms(k, cand, w, b)
                if e_c <= energy + slack or t < 1e-12:
                    break
                t *= 0.5
            t_next = min(2.0 * t, t_max)
        else:
            t_next = t
        f, energy, ent, inter, u = cand, e_c, ent_c, inter_c, u_c
        mass = float(np.dot(f, w))
        if abs(mass - 1.0) > 0.1 * MASS_TOL:
            f = f / mass
        t = t_next
        g, logz = _gibbs(u, b, w)
        residual = float(np.dot(np.abs(f - g), w))
        if cfg.acceleration == "anderson":
            hist_x = (hist_x + [f])[-(cfg.anderson_memory + 1):]
            hist_g = (hist_g + [g])[-(cfg.anderson_memory + 1):]
    if converged:
        # one undamped step: log f is then exactly -b U - log Z up to the tiny residual,
        # also in the far tails where the L1 residual cannot see relative errors
        f = g
        energy, ent, inter, u = _energy_terms(k, f, w, b)
        g, logz = _gibbs(u, b, w)
        residual = float(np.dot(np.abs(f - g), w))
    if not converged:
        log.warning("b=%g: no convergence after %d iterations (residual %.3e)", b, it, residual)
    return OnsagerState(
        density=Density(f, k.space),
        potential=u,
        b=float(b),
        log_partition=logz,
        energy=energy,
        residual=residual,
        converged=converged,
        iterations=it,
        trace=trace,
    )


def first_variation(k: KernelMatrix, f: Density, b: float) -> np.ndarray:
    """``log f + 1 + b U[f]``, the L2(mu) gradient of ``E_b`` at ``f``."""
    if np.any(f.values <= 0):
        raise ValueError("first variation needs a strictly positive density")
    return np.log(f.values) + 1.0 + b * potential(k, f)


def projected_variation(k: KernelMatrix, f: Density, b: float) -> float:
    """Sup norm of the first variation with its ``f dmu`` mean removed.

    Vanishes exactly at solutions of the Onsager equation, where
    ``log f + b U[f]`` is the constant ``-log Z``. Points where ``f`` is
    below the smallest normal double (Gibbs tails that underflowed to zero
    or to a subnormal with only a few significant bits) carry no mass and
    are skipped.
    """
    _check_space(k, f)
    support = f.values >= np.finfo(float).tiny
    v = np.log(f.values[support]) + 1.0 + b * potential(k, f)[support]
    return float(np.max(np.abs(v - np.dot(v, f.measure()[support]))))


def gateaux_check(k: KernelMatrix, f: Density, b: float, n_directions: int = 8, step: float = 1e-5,
                  seed: int = 0) -> float:
    """Compare the analytic first variation with central differences of ``E_b``.

    Random directions ``h`` with ``int h dmu = 0`` are scaled so that
    ``f +- step h`` stay positive. Returns the largest
    ``|D_analytic - D_fd| / max(|D_analytic|, ||h||_1)``.
    """
    _check_space(k, f)
    v = first_variation(k, f, b)
    w = f.space.weights
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_directions):
        h = rng.standard_normal(f.space.n)
        h -= np.dot(h, w)
        h *= 0.5 * np.min(f.values / np.maximum(np.abs(h), 1e-300))
        plus = Density(f.values + step * h, f.space, check=False)
        minus = Density(f.values - step * h, f.space, check=False)
        fd = (free_energy(k, plus, b) - free_energy(k, minus, b)) / (2 * step)
        exact = float(np.dot(v * h, w))
        scale = max(abs(exact), float(np.dot(np.abs(h), w)))
        worst = max(worst, abs(exact - fd) / scale)
    return worst


POINT_SEED_LIMIT = 4096


def point_seed_candidates(k: KernelMatrix, b: float, m: int) -> list:
    """The ``m`` most promising point-mass seeds at inverse temperature ``b``.

    For every grid point ``q`` the seed ``exp(-b k(., q)) / Z`` is the
    Onsager image of the point mass at ``q``. All ``n`` seeds are scored by
    their free energy in one batched pass and the ``m`` lowest are returned
    as densities, best first.

    At large ``b`` nearly every concentrated density is close to a fixed
    point, so continuation alone can stay on a metastable branch whose
    peak is pinned to a grid node. Solving from these seeds reaches the
    competing branches.

    Raises
    ------
    ValueError
        For factored kernels or more than ``POINT_SEED_LIMIT`` points, where
        the ``n``-by-``n`` seed table is not affordable.
    """
    if k.is_factored or k.n > POINT_SEED_LIMIT:
        raise ValueError(f"point seeds need a dense kernel with at most {POINT_SEED_LIMIT} points")
    w = k.space.weights
    K = k.entries
    z = -b * K
    z -= z.max(axis=0, keepdims=True)
    G = np.exp(z)
    G /= w @ G
    wg = w[:, None] * G
    energy = np.sum(xlogy(G, G) * w[:, None], axis=0) + 0.5 * b * np.sum((K @ wg) * wg, axis=0)
    order = np.argsort(energy, kind="stable")[:m]
    return [Density(G[:, j], k.space, check=False) for j in order]


def continue_in_b(k: KernelMatrix, cfg: SolverConfig, init: Density | None = None) -> list:
    """Solve along ``cfg.b_schedule``, warm-starting each ``b`` from the previous solution.

    Non-converged steps are kept (``converged=False``) and the schedule goes on.
    With ``init='perturbed'`` every warm start is multiplied by the same
    seeded perturbation factor before solving. Without it a symmetric state
    found at small ``b`` (where it is the only fixed point) would be carried
    along the whole schedule, since symmetric inputs stay symmetric.

    With ``cfg.point_seeds > 0`` the warm-started state at each ``b`` is
    compared with the solutions started from the best point-mass seeds;
    the converged state of lowest free energy is kept.
    """
    if not cfg.b_schedule:
        raise ValueError("b_schedule is empty")
    if cfg.point_seeds and (k.is_factored or k.n > POINT_SEED_LIMIT):
        raise ValueError(f"point seeds need a dense kernel with at most {POINT_SEED_LIMIT} points")
    states = []
    current = init
    factor = _perturbation(k, cfg) if cfg.init == "perturbed" else None
    for b in cfg.b_schedule:
        if current is not None and factor is not None:
            current = Density.normalized(current.values * factor, k.space)
        state = solve(k, cfg, b, current)
        if cfg.point_seeds:
            for seed in point_seed_candidates(k, b, cfg.point_seeds):
                alt = solve(k, cfg, b, seed)
                if alt.converged and (not state.converged or alt.energy < state.energy):
                    state = alt
        states.append(state)
        current = state.density
        log.info("b=%g energy=%.6g residual=%.2e 2E/b=%.4g", b, state.energy, state.residual,
                 state.two_over_b_energy)
    return states


def trace_rows(states) -> list:
    """Flatten solver traces into ``(b, iteration, energy, residual, 2E/b)`` rows."""
    rows = []
    for s in states:
        for it, e, r, _ in s.trace:
            rows.append((s.b, it, e, r, 2.0 * e / s.b if s.b > 0 else float("nan")))
    return rows


def sum_kernel_product(k1: KernelMatrix, k2: KernelMatrix, space: DiscreteSpace) -> KernelMatrix:
    """Kernel ``k1(p1, q1) + k2(p2, q2)`` on ``product_space(k1.space, k2.space)``."""
    n1, n2 = k1.n, k2.n
    if space.n != n1 * n2:
        raise ValueError("product space does not match factor kernels")
    a = k1.entries
    c = k2.entries
    dense = a[:, None, :, None] + c[None, :, None, :]
    return KernelMatrix(space, dense=dense.reshape(n1 * n2, n1 * n2))
