import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from onsager_corpora import limit as lm
from onsager_corpora.kernel import KernelMatrix, KernelSpec, assemble
from onsager_corpora.solver import SolverConfig, continue_in_b, solve
from onsager_corpora.space import Axis, build_space


@pytest.fixture(scope="module")
def rhombus():
    return assemble(KernelSpec("rhombus_symdiff"), build_space([Axis.interval(0, np.pi / 2)], 257))


@pytest.fixture(scope="module")
def two_rod():
    return assemble(KernelSpec("two_rod_area"), build_space([Axis.periodic(), Axis.periodic()], 128))


def test_zero_pairs_contain_diagonal(rhombus, two_rod):
    for k in (rhombus, two_rod):
        zp = lm.zero_pairs(k, 0.0)
        assert np.all(zp.degree >= 1)
        assert zp.n_pairs >= k.n


def test_rhombus_zero_pairs_are_diagonal_only(rhombus):
    zp = lm.zero_pairs(rhombus, 1e-6)
    assert zp.is_diagonal_only
    assert zp.to_dict()["n_components"] == rhombus.n


def test_two_rod_zero_pairs_split_into_level_sets(two_rod):
    zp = lm.zero_pairs(two_rod, 1e-12)
    comps = zp.component_sets()
    phi = two_rod.feature
    for zs in comps:
        assert np.ptp(phi[zs.member_indices]) <= 1e-6
    assert any(np.allclose(phi[zs.member_indices], 0.0, atol=1e-12) for zs in comps)


def test_zero_set_rejects_nonzero_pairs(rhombus):
    with pytest.raises(ValueError):
        lm.zero_set(rhombus, [0, 100], tau=1e-6)
    assert lm.zero_set(rhombus, [5], tau=0.0).size == 1


def test_level_set_members_have_small_pairwise_kernel(two_rod):
    zs = lm.level_set(two_rod, 1.0)
    assert zs.pairwise_max <= zs.tolerance
    assert np.all(np.abs(two_rod.feature[zs.member_indices] - 1.0) <= 0.5 * np.sqrt(zs.tolerance))


@pytest.fixture(scope="module")
def rhombus_states(rhombus):
    return continue_in_b(rhombus, SolverConfig(acceleration="anderson", b_schedule=(10, 100, 200)))


@given(st.lists(st.floats(1e-3, 1.6), min_size=2, max_size=6))
def test_concentration_monotone_in_eps(rhombus, rhombus_states, eps_list):
    top = lm.zero_set(rhombus, [rhombus.n - 1], 0.0, "top")
    eps_list = sorted(eps_list)
    masses = [lm.concentration(rhombus_states[-1], top, e, with_bl=False).mass_in_neighborhood[0]
              for e in eps_list]
    assert all(m1 >= m0 for m0, m1 in zip(masses, masses[1:]))


def test_concentration_energy_is_the_solver_number(rhombus, rhombus_states):
    top = lm.zero_set(rhombus, [rhombus.n - 1], 0.0, "top")
    for s in rhombus_states:
        rep = lm.concentration(s, [top], 0.1)
        assert rep.two_over_b_energy == s.two_over_b_energy
        assert rep.to_rows()[0][1] == "top"


def test_full_space_profile_is_one(rhombus):
    everything = lm.ZeroSet(np.arange(rhombus.n), 10.0, 0.0, "all")
    for _, m in lm.neighborhood_volume_profile(everything, rhombus.space, [1e-3, 0.1, 1.0]):
        assert m == pytest.approx(1.0)


def test_two_rod_profiles_symmetric(two_rod):
    plus = lm.level_set(two_rod, 1.0)
    minus = lm.level_set(two_rod, -1.0)
    eps = [0.01, 0.05, 0.1, 0.3]
    pp = lm.neighborhood_volume_profile(plus, two_rod.space, eps)
    pm = lm.neighborhood_volume_profile(minus, two_rod.space, eps)
    np.testing.assert_allclose([m for _, m in pp], [m for _, m in pm], rtol=1e-12)


def test_kernel_profile_largest_near_top_among_bounded_away_points(rhombus):
    top = lm.zero_set(rhombus, [rhombus.n - 1], 0.0)
    ref = lm.kernel_neighborhood_profile(rhombus, top, [0.01])[0][1]
    for qi in (0, 64, 128, 200):
        other = lm.kernel_neighborhood_profile(rhombus, lm.zero_set(rhombus, [qi], 0.0), [0.01])[0][1]
        assert other < ref


def test_two_rod_selection_passes_and_identity_fails(two_rod):
    spec = lm.two_rod_selection(two_rod)
    rep = lm.selection_test(spec, two_rod)
    assert rep.passed, rep.failed
    ident = lm.selection_test(lm.identity_selection(spec), two_rod)
    assert not ident.passed and "measure_expanding" in ident.failed
    assert "not a proof" in rep.note or "numerically" in rep.note


@pytest.mark.parametrize("q", [np.pi / 4, 3 * np.pi / 8, np.pi / 8])
def test_rhombus_selection_passes(rhombus, q):
    qi = int(lm.snap(rhombus.space, [[q]])[0])
    rep = lm.selection_test(lm.rhombus_selection(rhombus, qi, eps=0.03), rhombus)
    assert rep.passed, (rep.failed, rep.conditions)


def test_rhombus_selection_with_too_large_c_breaks_kernel_condition(rhombus):
    qi = int(lm.snap(rhombus.space, [[np.pi / 4]])[0])
    rep = lm.selection_test(lm.rhombus_selection(rhombus, qi, c=1.6, eps=0.03), rhombus)
    assert "kernel_nonincreasing" in rep.failed
    w = rep.conditions["kernel_nonincreasing"]["witness"]
    assert w["k_TpTq"] > w["k_pq"]


def test_selection_verdict_does_not_depend_on_sampling_seed(rhombus):
    qi = int(lm.snap(rhombus.space, [[np.pi / 4]])[0])
    spec = lm.rhombus_selection(rhombus, qi, eps=0.03)
    verdicts = {lm.selection_test(spec, rhombus, seed=s).passed for s in range(4)}
    assert verdicts == {True}


def test_kernel_condition_invariant_under_constant_shift(rhombus):
    qi = int(lm.snap(rhombus.space, [[np.pi / 4]])[0])
    K = rhombus.block()
    for c in (None, 1.6):
        verdicts = []
        for shift in (0.0, 3.0):
            tab = KernelMatrix(rhombus.space, dense=K + shift, spec=KernelSpec("custom-tabulated", {"matrix": K}))
            spec = lm.rhombus_selection(rhombus, qi, c=c, eps=0.03)
            rep = lm.selection_test(spec, tab)
            verdicts.append(rep.conditions["kernel_nonincreasing"]["passed"])
        assert verdicts[0] == verdicts[1]


def test_selection_spec_validates_inputs(rhombus):
    zs = lm.zero_set(rhombus, [3], 0.0)
    with pytest.raises(ValueError):
        lm.SelectionSpec(zs, zs, lambda x: x, 1.0, 0.1, 0.1)
    with pytest.raises(ValueError):
        lm.SelectionSpec(zs, zs, lambda x: x, 1.5, 0.0, 0.1)


def test_snap_flags_points_outside(rhombus):
    idx = lm.snap(rhombus.space, [[-0.5], [0.0], [np.pi / 2], [2.0]])
    assert idx.tolist() == [-1, 0, rhombus.n - 1, -1]


def test_jacobian_of_affine_map():
    space = build_space([Axis.interval(0, 1)], 11)
    J = lm.jacobian_estimate(space, lambda x: 0.2 + 1.7 * (x - 0.1), space.points[:5])
    np.testing.assert_allclose(J, 1.7, rtol=1e-8)


def test_concentration_at_converged_state_near_top(rhombus):
    s = solve(rhombus, SolverConfig(acceleration="anderson"), 50.0)
    top = lm.zero_set(rhombus, [rhombus.n - 1], 0.0)
    rep = lm.concentration(s, top, 0.5)
    assert 0 < rep.mass_in_neighborhood[0] <= 1
    assert rep.bl_to_candidate[0] > 0
