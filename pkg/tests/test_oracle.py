import numpy as np
import pytest

from fdgm import oracle
from fdgm.errors import OracleFailure


def scalar_problem(a=1.0, b=0.0, gamma=0.0, lo=-1.0, hi=1.0):
    return oracle.LocalProblem(np.array([[a]]), np.array([b]), gamma,
                               np.array([lo]), np.array([hi]))


def grid_argmax(lp, w, points=200_001):
    """Independent 1-d oracle: dense grid maximization of w'x - f(x)."""
    xs = np.linspace(lp.lower[0], lp.upper[0], points)
    vals = w[0] * xs - (lp.quad[0, 0] * xs ** 2 + lp.linear[0] * xs
                        + lp.l1_weight * np.abs(xs))
    return xs[np.argmax(vals)]


def grid_argmax_2d(lp, w, spacing):
    xs = np.arange(lp.lower[0], lp.upper[0] + spacing / 2, spacing)
    ys = np.arange(lp.lower[1], lp.upper[1] + spacing / 2, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    vals = pts @ w - (np.einsum("mi,ij,mj->m", pts, lp.quad, pts)
                      + pts @ lp.linear
                      + lp.l1_weight * np.abs(pts).sum(axis=1))
    i = int(np.argmax(vals))
    return pts[i], float(vals[i])


class TestLocalProblem:
    def test_derived_constants(self):
        lp = scalar_problem(a=2.0)
        assert lp.theta == 2.0
        assert lp.lipschitz == 0.5

    def test_rejects_indefinite(self):
        with pytest.raises(ValueError):
            scalar_problem(a=-1.0)

    def test_rejects_box_without_origin(self):
        with pytest.raises(ValueError):
            oracle.LocalProblem(np.eye(1), np.zeros(1), 0.0,
                                np.array([0.5]), np.array([1.0]))

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            oracle.LocalProblem(np.array([[1.0, 0.3], [0.0, 1.0]]),
                                np.zeros(2), 0.0, -np.ones(2), np.ones(2))

    def test_instance_aggregates(self):
        inst = oracle.ProblemInstance([scalar_problem(a=2.0), scalar_problem(a=0.5)])
        assert inst.theta_min == 0.5
        assert inst.lipschitz == 2.0
        assert inst.lipschitz == max(lp.lipschitz for lp in inst.locals)


class TestConjugateArgmax:
    def test_symmetric_max_at_zero(self):
        assert oracle.conjugate_argmax(scalar_problem(), [0.0])[0] == 0.0

    def test_boundary_clip(self):
        # interior maximizer 2 clipped to the box edge
        x = oracle.conjugate_argmax(scalar_problem(), [4.0])
        assert abs(x[0] - 1.0) <= 1e-12

    def test_l1_stationarity(self):
        # w - 2x - gamma = 0 at x = 0.25 for the positive branch
        x = oracle.conjugate_argmax(scalar_problem(gamma=0.5), [1.0])
        assert abs(x[0] - 0.25) <= 1e-9
        g = grid_argmax(scalar_problem(gamma=0.5), np.array([1.0]))
        assert abs(x[0] - g) <= 1e-5

    def test_rejects_bad_tol(self):
        with pytest.raises(ValueError):
            oracle.conjugate_argmax(scalar_problem(), [0.0], tol=0.0)

    def test_iteration_cap_carries_residual(self):
        # interior optimum with an active l1 kink: a handful of iterations
        # cannot satisfy an impossible tolerance
        lp = scalar_problem()
        with pytest.raises(OracleFailure) as exc:
            oracle._solve_composite((2 * lp.quad)[None], (lp.linear - 0.3)[None],
                                    np.array([0.1]), lp.lower[None],
                                    lp.upper[None], np.array([0.37]),
                                    tol=1e-300, max_iter=5)
        assert exc.value.residual > 0

    def test_feasibility_exact(self):
        rng = np.random.default_rng(3)
        inst = oracle.generate_instance(8, 3, (0.5, 2.0), box_range=(0.3, 1.0),
                                        gamma=0.3, seed=1)
        for lp in inst.locals:
            x = oracle.conjugate_argmax(lp, rng.normal(size=3) * 3)
            assert np.all(x >= lp.lower) and np.all(x <= lp.upper)


class TestConjugateValue:
    def test_zero_dual(self):
        assert oracle.conjugate_value(scalar_problem(), [0.0]) == 0.0

    def test_clipped_value(self):
        assert abs(oracle.conjugate_value(scalar_problem(), [4.0]) - 3.0) <= 1e-12

    def test_matches_grid_2d(self):
        inst = oracle.generate_instance(3, 2, (0.5, 2.0), box_range=(0.3, 0.8),
                                        gamma=0.4, seed=5)
        rng = np.random.default_rng(8)
        for lp in inst.locals:
            w = rng.normal(size=2)
            _, grid_val = grid_argmax_2d(lp, w, spacing=1.5e-3)
            val = oracle.conjugate_value(lp, w)
            assert val >= grid_val - 1e-12
            assert abs(val - grid_val) <= 1e-5


class TestObjectiveValue:
    def test_zero_at_origin(self):
        assert oracle.objective_value(scalar_problem(b=3.7, gamma=2.0), [0.0]) == 0.0

    def test_known_value(self):
        assert oracle.objective_value(scalar_problem(a=2.0, b=1.0, lo=-5, hi=5),
                                      [1.0]) == 3.0

    def test_termwise_recomputation(self):
        rng = np.random.default_rng(12)
        inst = oracle.generate_instance(4, 2, (0.5, 2.0), gamma=0.7, seed=3)
        for lp in inst.locals:
            x = rng.normal(size=2)
            by_terms = sum(lp.quad[i, j] * x[i] * x[j]
                           for i in range(2) for j in range(2)) \
                + sum(lp.linear[i] * x[i] for i in range(2)) \
                + lp.l1_weight * (abs(x[0]) + abs(x[1]))
            assert abs(oracle.objective_value(lp, x) - by_terms) <= 1e-12


class TestGenerateInstance:
    def test_eigenvalues_in_range(self):
        for seed in range(5):
            inst = oracle.generate_instance(6, 4, (2.0, 3.0), seed=seed)
            for lp in inst.locals:
                eigs = np.linalg.eigvalsh(lp.quad)
                assert np.max(np.abs(lp.quad - lp.quad.T)) == 0.0
                assert 2.0 - 1e-9 <= eigs[0] and eigs[-1] <= 3.0 + 1e-9
                assert lp.theta == eigs[0]

    def test_reproducible(self):
        a = oracle.generate_instance(5, 3, (1.0, 2.0), seed=77)
        b = oracle.generate_instance(5, 3, (1.0, 2.0), seed=77)
        for la, lb in zip(a.locals, b.locals):
            assert np.array_equal(la.quad, lb.quad)
            assert np.array_equal(la.linear, lb.linear)
            assert np.array_equal(la.lower, lb.lower)

    def test_invalid_ranges(self):
        with pytest.raises(ValueError):
            oracle.generate_instance(4, 2, (0.0, 1.0), seed=0)
        with pytest.raises(ValueError):
            oracle.generate_instance(4, 2, (2.0, 1.0), seed=0)
        with pytest.raises(ValueError):
            oracle.generate_instance(4, 2, (1.0, 2.0), box_range=(-1.0, 1.0), seed=0)

    def test_unconstrained_boxes(self):
        inst = oracle.generate_instance(4, 2, (1.0, 2.0), box_range=None, seed=0)
        assert inst.is_unconstrained


class TestDualProperties:
    """Conjugate-map regularity on random instances."""

    def setup_method(self):
        self.inst = oracle.generate_instance(6, 3, (0.8, 2.5),
                                             box_range=(0.4, 1.2),
                                             gamma=0.3, seed=21)

    def test_lipschitz_gradient(self):
        rng = np.random.default_rng(0)
        for lp in self.inst.locals:
            for _ in range(40):
                u = rng.normal(size=3) * 2
                v = rng.normal(size=3) * 2
                xu = oracle.conjugate_argmax(lp, u)
                xv = oracle.conjugate_argmax(lp, v)
                lhs = np.linalg.norm(xu - xv)
                rhs = lp.lipschitz * np.linalg.norm(u - v) * (1 + 1e-6) + 2e-10
                assert lhs <= rhs

    def test_gradient_identity_finite_difference(self):
        rng = np.random.default_rng(1)
        h = 1e-5
        for lp in self.inst.locals[:3]:
            w = rng.normal(size=3)
            x = oracle.conjugate_argmax(lp, w)
            for coord in range(3):
                e = np.zeros(3)
                e[coord] = h
                fd = (oracle.conjugate_value(lp, w + e)
                      - oracle.conjugate_value(lp, w - e)) / (2 * h)
                assert abs(fd - x[coord]) <= 1e-4

    def test_monotone_argmax_map(self):
        rng = np.random.default_rng(2)
        for lp in self.inst.locals:
            for _ in range(40):
                u = rng.normal(size=3) * 2
                v = rng.normal(size=3) * 2
                xu = oracle.conjugate_argmax(lp, u)
                xv = oracle.conjugate_argmax(lp, v)
                assert (u - v) @ (xu - xv) >= -1e-10


class TestBatch:
    def test_batch_matches_single(self):
        inst = oracle.generate_instance(7, 4, (0.5, 3.0), box_range=(0.4, 1.0),
                                        gamma=0.2, seed=9)
        w = np.random.default_rng(4).normal(size=(7, 4))
        batch = oracle.batch_conjugate_argmax(inst, w)
        for i, lp in enumerate(inst.locals):
            single = oracle.conjugate_argmax(lp, w[i])
            assert np.linalg.norm(batch[i] - single) <= 1e-8

    def test_active_mask(self):
        inst = oracle.generate_instance(5, 2, (1.0, 2.0), seed=9)
        w = np.random.default_rng(5).normal(size=(5, 2))
        x0 = np.zeros((5, 2))
        active = np.array([True, False, True, False, False])
        out = oracle.batch_conjugate_argmax(inst, w, x0=x0, active=active)
        assert np.all(out[~active] == 0.0)
        assert np.all(out[active] != 0.0)

    def test_batch_objective(self):
        inst = oracle.generate_instance(5, 3, (1.0, 2.0), gamma=0.4, seed=2)
        x = np.random.default_rng(6).normal(size=(5, 3))
        vals = oracle.batch_objective(inst, x)
        for i, lp in enumerate(inst.locals):
            assert abs(vals[i] - oracle.objective_value(lp, x[i])) <= 1e-12


def test_instance_round_trip(tmp_path):
    inst = oracle.generate_instance(4, 3, (0.7, 1.9), box_range=(0.3, 1.1),
                                    gamma=0.25, seed=31)
    path = tmp_path / "instance.txt"
    oracle.write_instance(inst, path)
    back = oracle.read_instance(path)
    assert back.n == inst.n and back.dim == inst.dim
    for la, lb in zip(inst.locals, back.locals):
        assert np.array_equal(la.quad, lb.quad)
        assert np.array_equal(la.linear, lb.linear)
        assert np.array_equal(la.lower, lb.lower)
        assert np.array_equal(la.upper, lb.upper)
        assert la.l1_weight == lb.l1_weight
        assert la.theta == lb.theta
