import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from onsager_corpora import branch as br
from onsager_corpora.kernel import KernelSpec, assemble
from onsager_corpora.solver import onsager_map
from onsager_corpora.space import Axis, build_space

bs = st.floats(0, 5000, allow_nan=False)
aa = st.floats(-1, 1, allow_nan=False)


@given(bs)
def test_zero_is_always_an_exact_root(b):
    assert br.h(0.0, b) == 0.0
    assert br.h(0.0, b, example=2) == 0.0


@given(aa, bs)
def test_h_is_exactly_odd(a, b):
    assert br.h(-a, b) == -br.h(a, b)
    assert br.h(-a, b, example=2) == -br.h(a, b, example=2)


@pytest.mark.parametrize("a, b", [(0.3, 1.0), (0.72, 5.0), (0.92, 50.0), (0.5, 200.0), (0.96, 200.0), (1.0, 1000.0)])
def test_h_matches_adaptive_quadrature(a, b):
    assert br.h(a, b) == pytest.approx(oracles.h_two_rod(a, b), abs=1e-12)


@pytest.mark.parametrize("a, b", [(0.01, 10.0), (0.05, 50.0), (0.2, 10.0)])
def test_h_sized_matches_reduced_oracle(a, b):
    ref = oracles.h_sized_two_rod(a, b)
    assert br.h(a, b, example=2) == pytest.approx(ref, abs=1e-10)
    assert br.h_reduced(a, b) == pytest.approx(ref, abs=1e-10)


@given(bs)
def test_h_negative_at_one(b):
    assert br.h(1.0, b) < 0


def test_only_zero_root_at_small_b():
    roots = br.find_branches(1.0)
    assert [p.a for p in roots] == [0.0]


def test_three_roots_at_b_200_with_small_residual():
    roots = br.find_branches(200.0)
    a = [p.a for p in roots]
    assert len(a) == 3 and a[1] == 0.0 and a[0] == -a[2]
    assert a[2] > 0.9
    assert all(abs(p.h_value) < 1e-10 for p in roots)
    # nonzero branches are the energy minimizers
    assert roots[0].energy == pytest.approx(roots[2].energy, rel=1e-12)
    assert roots[2].energy < roots[1].energy


def test_roots_satisfy_self_consistency_on_the_full_torus():
    b = 50.0
    a = br.find_branches(b)[-1].a
    space = build_space([Axis.periodic(), Axis.periodic()], 128)
    k = assemble(KernelSpec("two_rod_area"), space)
    f = br.branch_density(a, b, space)
    g, _ = onsager_map(k, f, b)
    assert f.l1_distance(g) < 1e-8


def test_bifurcation_lies_between_one_and_five():
    bc = br.bifurcation_estimate(1.0, 5.0)
    assert 1.0 < bc < 5.0
    assert len(br.find_branches(bc * 1.05)) == 3
    assert len(br.find_branches(bc * 0.95)) == 1


def test_sized_rods_only_zero_root():
    for b in (50.0, 1000.0):
        assert [p.a for p in br.find_branches(b, example=2, scan_resolution=401)] == [0.0]


def test_sweep_rejects_unsorted_schedule():
    with pytest.raises(ValueError):
        br.branch_sweep([5, 1])


def test_a_outside_range_rejected():
    with pytest.raises(ValueError):
        br.residual(1.5, 10.0)
