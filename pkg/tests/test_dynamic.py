import numpy as np
import pytest
from hypothesis import given, strategies as st

from privmas.errors import ConfigurationError
from privmas.graph import WeightedGraph, circle, complete, directed_cycle, path
from privmas.observation import ObservationLog
from privmas.schedules import constant, geometric
from privmas.dynamic import (Ball, Box, Halfspace, ReferenceSignal, constant_reference, convex_set_from_spec,
                             draw_noise, run_alg1, run_alg2)

SETS = {
    "box": Box(np.array([-1.0, 0.0, 2.0]), np.array([1.0, 0.5, 2.0])),
    "ball": Ball(np.array([0.3, -0.2, 1.0]), 0.7),
    "halfspace": Halfspace(np.array([1.0, -2.0, 0.5]), 0.3),
}


@pytest.mark.parametrize("kind", sorted(SETS))
def test_projection_properties_on_random_points(kind):
    X = SETS[kind]
    rng = np.random.default_rng(17)
    pts = rng.normal(scale=5.0, size=(10_000, 3))
    proj = np.array([X.project(p) for p in pts])
    assert all(X.contains(p) for p in proj)
    again = np.array([X.project(p) for p in proj])
    np.testing.assert_allclose(again, proj, rtol=0, atol=1e-12)
    a, b = pts[::2], pts[1::2]
    pa, pb = proj[::2], proj[1::2]
    lhs = np.linalg.norm(pa - pb, axis=1)
    rhs = np.linalg.norm(a - b, axis=1)
    assert np.all(lhs <= rhs * (1 + 1e-12) + 1e-12)


@pytest.mark.parametrize("kind", sorted(SETS))
def test_projection_is_nearest_point(kind):
    # variational inequality: (y - P y) . (z - P y) <= 0 for every z in X
    X = SETS[kind]
    rng = np.random.default_rng(5)
    for _ in range(200):
        y = rng.normal(scale=4.0, size=3)
        p = X.project(y)
        z = X.sample(rng, 3)
        assert (y - p) @ (z - p) <= 1e-9


def test_ball_projection_example():
    np.testing.assert_allclose(Ball(np.zeros(2), 1.0).project([3.0, 4.0]), [0.6, 0.8])


def test_halfspace_projection_example():
    np.testing.assert_allclose(Halfspace(np.array([0.0, 1.0]), 1.0).project([2.0, 5.0]), [2.0, 1.0])


def test_set_construction_errors():
    with pytest.raises(ConfigurationError):
        Box(1.0, 0.0)
    with pytest.raises(ConfigurationError):
        Ball(0.0, -1.0)
    with pytest.raises(ConfigurationError):
        Halfspace(np.zeros(2), 1.0)
    with pytest.raises(ConfigurationError):
        convex_set_from_spec({"kind": "simplex"})
    assert isinstance(convex_set_from_spec({"kind": "ball", "radius": 2}), Ball)


def test_noise_kinds():
    rng = np.random.default_rng(0)
    assert np.all(draw_noise(rng, "laplace", 0.0, (3,)) == 0)
    with pytest.raises(ConfigurationError):
        draw_noise(rng, "cauchy", 1.0, (3,))
    lap = draw_noise(rng, "laplace", 2.0, 200_000)
    assert abs(lap.std() - 2.0 * np.sqrt(2)) < 0.03


class TestReference:
    def test_kinds(self):
        ramp = ReferenceSignal("ramp", value=[0.0, 1.0], slope=[1.0, 2.0])
        np.testing.assert_array_equal(ramp(3)[:, 0], [3.0, 7.0])
        sin = ReferenceSignal("sinusoid", value=[0.0], amplitude=[2.0], omega=np.pi / 2)
        assert sin(1)[0, 0] == pytest.approx(2.0)
        tab = ReferenceSignal("table", values=[[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(tab(10)[:, 0], [3.0, 4.0])
        assert tab.m == 2 and tab.dim == 1

    def test_bad_kind(self):
        with pytest.raises(ConfigurationError):
            ReferenceSignal("square", value=[1.0])


class TestAlg1:
    def test_single_agent_tracks_exactly(self):
        g = WeightedGraph.from_edges(1, [])
        ref = ReferenceSignal("sinusoid", value=[0.3], amplitude=[1.7], omega=0.37)
        run = run_alg1(g, ref, 500, nu=constant(5.0), seed=1)
        expected = np.stack([ref(k) for k in range(501)])
        np.testing.assert_array_equal(run.trajectory, expected)

    @pytest.mark.parametrize("m", [2, 5, 10])
    def test_noise_free_constant_reference(self, m):
        ref = constant_reference(np.linspace(-3.0, 4.0, m))
        # a summable forgetting factor removes the steady-state offset it would otherwise leave
        run = run_alg1(circle(m, 0.3), ref, 3000, chi=constant(1.0), alpha=geometric(0.95))
        assert run.errors[-1] < 1e-6

    def test_identical_references_stay_put(self):
        run = run_alg1(complete(4, 0.2), constant_reference([1.25] * 4), 50)
        assert np.all(run.trajectory == 1.25)

    def test_noise_reaches_log(self):
        log = ObservationLog()
        run_alg1(path(3, 0.3), constant_reference([0.0, 1.0, 2.0]), 4, nu=constant(1.0), seed=0, log=log)
        assert len(log) == 4 * 4
        assert not any(m.payload in (0.0, 1.0, 2.0) for m in log)

    def test_ramp_tracking_under_constant_gain(self):
        ref = ReferenceSignal("ramp", value=[0.0, 1.0, 2.0], slope=[0.01, 0.01, 0.01])
        run = run_alg1(complete(3, 0.3), ref, 2000, chi=constant(1.0), alpha=geometric(0.95))
        assert run.errors[-1] < 1e-6

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_is_reported(self):
        with pytest.raises(ConfigurationError, match="diverged"):
            run_alg1(complete(4, 0.9), constant_reference([0.0, 1.0, 2.0, 3.0]), 5000, chi=constant(5.0))

    def test_directed_rejected(self):
        with pytest.raises(ConfigurationError):
            run_alg1(directed_cycle(3), constant_reference([0.0, 1.0, 2.0]), 1)

    def test_agent_count_mismatch(self):
        with pytest.raises(ConfigurationError):
            run_alg1(circle(4), constant_reference([0.0, 1.0, 2.0]), 1)


class TestAlg2:
    @given(st.integers(0, 10_000), st.sampled_from(sorted(SETS)))
    def test_iterates_feasible(self, seed, kind):
        X = SETS[kind]
        ref = ReferenceSignal("sinusoid", value=np.zeros((4, 3)), amplitude=np.ones((4, 3)) * 3, omega=0.2)
        run = run_alg2(circle(4, 0.3), ref, X, 60, nu=constant(2.0), seed=seed)
        assert all(X.contains(x) for frame in run.trajectory for x in frame)

    def test_box_clamps_large_reference(self):
        X = Box(np.array([-1.0]), np.array([1.0]))
        run = run_alg2(path(2, 0.3), constant_reference([10.0, 20.0]), X, 50, gamma=constant(1.0))
        np.testing.assert_array_equal(run.final, [[1.0], [1.0]])

    def test_initial_point_projected(self):
        X = Ball(np.zeros(1), 1.0)
        run = run_alg2(path(2, 0.3), constant_reference([0.0, 0.0]), X, 0, x0=[5.0, -5.0])
        np.testing.assert_array_equal(run.trajectory[0], [[1.0], [-1.0]])

    def test_unsupported_set(self):
        with pytest.raises(ConfigurationError):
            run_alg2(path(2), constant_reference([0.0, 0.0]), object(), 1)
