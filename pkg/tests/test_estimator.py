import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from onsager_corpora.estimator import OnsagerSolver
from onsager_corpora.kernel import KernelSpec, assemble
from onsager_corpora.solver import SolverConfig, solve
from onsager_corpora.space import Axis, build_space


@pytest.fixture(scope="module")
def kernel():
    return assemble(KernelSpec("rhombus_symdiff"), build_space([Axis.interval(0, np.pi / 2)], 32))


def test_fit_matches_functional_solve(kernel):
    est = OnsagerSolver(b=20.0).fit(kernel)
    ref = solve(kernel, SolverConfig(acceleration="anderson"), 20.0)
    np.testing.assert_array_equal(est.density_, ref.density.values)
    assert est.converged_ and est.energy_ == ref.energy
    assert est.score() == pytest.approx(-ref.energy)


def test_schedule_fit_keeps_every_state(kernel):
    est = OnsagerSolver(b_schedule=[1, 10, 50]).fit(kernel)
    assert [s.b for s in est.states_] == [1, 10, 50] and est.b_ == 50


def test_transform_is_one_map_step(kernel):
    est = OnsagerSolver(b=5.0).fit(kernel)
    out = est.transform(est.density_[None, :])
    np.testing.assert_allclose(out[0], est.density_, atol=1e-9)


def test_bare_matrix_and_params(kernel):
    est = OnsagerSolver(b=3.0, damping=0.3).fit(np.zeros((4, 4)))
    np.testing.assert_allclose(est.density_, 1.0)
    c = clone(est)
    assert c.get_params()["damping"] == 0.3 and not hasattr(c, "density_")
    with pytest.raises(NotFittedError):
        c.score()
    with pytest.raises(ValueError):
        OnsagerSolver().fit(np.zeros((3, 4)))
