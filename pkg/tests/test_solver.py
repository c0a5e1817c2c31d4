import numpy as np
import pytest

from fdgm import certify, graphs, oracle, solver
from fdgm.errors import InvalidConfig


def analytic_pair():
    """f1 = x^2 - 2x, f2 = x^2 over [-10, 10]: x* = 0.5, F* = -0.5."""
    lp1 = oracle.LocalProblem(np.array([[1.0]]), np.array([-2.0]), 0.0,
                              np.array([-10.0]), np.array([10.0]))
    lp2 = oracle.LocalProblem(np.array([[1.0]]), np.array([0.0]), 0.0,
                              np.array([-10.0]), np.array([10.0]))
    return oracle.ProblemInstance([lp1, lp2])


def small_instance(n=6, d=3, gamma=0.2, seed=13):
    return oracle.generate_instance(n, d, (0.8, 2.0), box_range=(0.5, 1.2),
                                    b_range=(-1.0, 1.0), gamma=gamma, seed=seed)


class TestComputeDelta:
    def test_metropolis_two(self):
        inst = small_instance()
        assert solver.compute_delta("metropolis_two", inst,
                                    weights_kind="metropolis") == 2.0
        with pytest.raises(InvalidConfig):
            solver.compute_delta("metropolis_two", inst, weights_kind="laplacian")

    def test_gossip_laplacian_gives_2L(self):
        inst = small_instance()
        seq = graphs.generate_sequence("gossip", inst.n, inst.n - 1, 20, seed=3)
        delta = solver.compute_delta("spectral", inst, seq, "laplacian")
        assert abs(delta - 2.0 * inst.lipschitz) <= 1e-12
        # single-edge snapshots: the degree term of the Example-1 rule
        # cannot beat the exact spectral value
        delta2 = solver.compute_delta("laplacian_degree", inst, seq, "laplacian")
        assert delta2 <= delta + 1e-12

    def test_conservative_product(self):
        # L=1, h_upper=1 (Laplacian), n=50 -> 50
        lp = oracle.LocalProblem(np.eye(2), np.zeros(2), 0.0,
                                 -np.ones(2), np.ones(2))
        inst = oracle.ProblemInstance([lp] * 50)
        seq = graphs.generate_sequence("full_static", 50, 1, 3, seed=0)
        assert solver.compute_delta("conservative_Lhn", inst, seq,
                                    "laplacian") == 50.0

    def test_manual(self):
        inst = small_instance()
        assert solver.compute_delta("manual", inst, manual=3.5) == 3.5
        with pytest.raises(InvalidConfig):
            solver.compute_delta("manual", inst)


class TestStepSizePolicy:
    def test_interval_validation(self):
        with pytest.raises(InvalidConfig):
            solver.StepSizePolicy(2.0, 0.5, 1.0)   # alpha_max = 2/delta
        with pytest.raises(InvalidConfig):
            solver.StepSizePolicy(2.0, 0.0, 0.5)
        pol = solver.StepSizePolicy(2.0, 0.1, 0.5)
        assert pol.alpha(0) == 0.5

    def test_rho_formula(self):
        pol = solver.constant_policy(2.0, 0.5)
        assert pol.rho == 0.25
        mixed = solver.StepSizePolicy(2.0, 0.05, 0.5)
        assert mixed.rho == min(0.05 - 0.05 ** 2, 0.5 - 0.25)

    def test_sequence_schedule(self):
        arr = np.array([0.1, 0.2, 0.3])
        pol = solver.StepSizePolicy(2.0, 0.1, 0.5, ("sequence", arr))
        assert pol.alpha(2) == 0.3
        with pytest.raises(InvalidConfig):
            solver.StepSizePolicy(2.0, 0.2, 0.5, ("sequence", arr))

    def test_curvature_check_rejects_small_delta(self):
        inst = small_instance()
        seq = graphs.generate_sequence("windowed_tree", inst.n, 3, 30, seed=1)
        pol = solver.constant_policy(1e-3, 1e-4)
        with pytest.raises(InvalidConfig):
            pol.validate(inst, seq, "laplacian")

    def test_unsafe_policy_skips_checks(self):
        pol = solver.constant_policy(2.0, 1.7, enforce=False)
        assert pol.alpha(0) == 1.7


class TestInitState:
    def test_zeros(self):
        inst = analytic_pair()
        st = solver.init_state(inst)
        assert np.all(st.w == 0.0)
        # x_i^0 maximizes -f_i over the box
        assert abs(st.x[0, 0] - 1.0) <= 1e-9   # argmin of x^2-2x
        assert abs(st.x[1, 0] - 0.0) <= 1e-9

    def test_random_sum_zero(self):
        inst = small_instance()
        st = solver.init_state(inst, "random_sum_c", seed=4)
        assert np.linalg.norm(st.w.sum(axis=0)) <= 1e-12

    def test_random_sum_c(self):
        inst = small_instance(d=3)
        c = np.array([1.0, 0.0, 0.0])
        st = solver.init_state(inst, "random_sum_c", seed=4, target=c)
        assert np.linalg.norm(st.w.sum(axis=0) - c) <= 1e-12


class TestStep:
    def test_consensus_fixed_point(self):
        inst = small_instance(gamma=0.0)
        g = graphs.GraphSnapshot(inst.n, [(i, i + 1) for i in range(inst.n - 1)])
        wm = graphs.laplacian_weights(g)
        w = np.tile(np.array([0.3, -0.1, 0.2]), (inst.n, 1))
        x = oracle.batch_conjugate_argmax(inst, w)
        x[:] = x[0]   # identical primal blocks annihilate the update
        st = solver.SolverState(0, w, x, np.zeros(3))
        st2 = solver.step(st, g, wm, 0.1, inst)
        assert np.array_equal(st2.w, st.w)

    def test_two_node_example(self):
        inst = analytic_pair()
        g = graphs.GraphSnapshot(2, [(0, 1)])
        wm = graphs.laplacian_weights(g)
        st = solver.SolverState(0, np.zeros((2, 1)),
                                np.array([[0.0], [2.0]]), np.zeros(1))
        st2 = solver.step(st, g, wm, 0.25, inst)
        assert st2.w.ravel().tolist() == [0.5, -0.5]

    def test_sum_preserved_random_states(self):
        inst = small_instance()
        rng = np.random.default_rng(6)
        for _ in range(20):
            n_edges = int(rng.integers(1, 8))
            pairs = {(int(a), int(b)) for a, b in
                     rng.integers(0, inst.n, size=(n_edges, 2)) if a != b}
            if not pairs:
                continue
            g = graphs.GraphSnapshot(inst.n, pairs)
            wm = graphs.metropolis_weights(g, inst.lipschitz_per_node)
            w = rng.normal(size=(inst.n, 3))
            x = oracle.batch_conjugate_argmax(inst, w)
            st = solver.SolverState(0, w, x, np.zeros(3))
            st2 = solver.step(st, g, wm, 0.3, inst)
            assert np.linalg.norm(st2.w.sum(0) - st.w.sum(0)) <= 1e-12

    def test_isolated_nodes_untouched(self):
        inst = small_instance()
        g = graphs.GraphSnapshot(inst.n, [(0, 1)])
        wm = graphs.laplacian_weights(g)
        st = solver.init_state(inst, "random_sum_c", seed=8)
        st2 = solver.step(st, g, wm, 0.2, inst)
        assert np.array_equal(st2.w[2:], st.w[2:])
        assert np.array_equal(st2.x[2:], st.x[2:])


class TestRun:
    def test_two_node_converges_to_half(self):
        inst = analytic_pair()
        seq = graphs.generate_sequence("full_static", 2, 1, 200, seed=0)
        pol = solver.default_policy("metropolis", inst, seq)
        res = solver.run(inst, seq, "metropolis", pol, horizon=200,
                         record_every=50)
        assert np.allclose(res.state.x, 0.5, atol=1e-8)

    def test_metrics_against_reference(self):
        inst = small_instance()
        seq = graphs.generate_sequence("windowed_tree", inst.n, 3, 600, seed=2)
        ref = certify.solve_centralized(inst)
        pol = solver.default_policy("metropolis", inst, seq)
        res = solver.run(inst, seq, "metropolis", pol, horizon=600,
                         record_every=25, reference=ref)
        first, last = res.records[0], res.records[-1]
        assert last.k == 600
        assert last.dual_gap <= 1e-8
        assert last.primal_error <= 1e-4
        assert last.feasibility_gap <= last.primal_error + 1e-12
        assert first.dual_gap >= last.dual_gap
        # descent certificate with the Lemma constant
        assert res.diagnostics["worst_descent_slack"] <= 1e-8
        assert res.diagnostics["max_dual_feasibility_violation"] <= 1e-8

    def test_monotone_descent_randomized_steps(self):
        inst = small_instance()
        horizon = 400
        seq = graphs.generate_sequence("windowed_tree", inst.n, 3, horizon, seed=5)
        rng = np.random.default_rng(11)
        alpha_max = 0.5
        steps = rng.uniform(0.1 * alpha_max, alpha_max, size=horizon)
        pol = solver.StepSizePolicy(2.0, 0.1 * alpha_max, alpha_max,
                                    ("sequence", steps), "metropolis_two")
        res = solver.run(inst, seq, "metropolis", pol, horizon=horizon)
        assert res.diagnostics["worst_monotonicity"] <= 1e-8
        assert res.diagnostics["worst_descent_slack"] <= 1e-8

    def test_resource_target_preserved(self):
        inst = small_instance(d=3)
        seq = graphs.generate_sequence("windowed_tree", inst.n, 3, 300, seed=9)
        pol = solver.default_policy("metropolis", inst, seq)
        c = np.array([1.0, -2.0, 0.5])
        res = solver.run(inst, seq, "metropolis", pol, init="random_sum_c",
                         init_seed=3, resource_target=c, horizon=300,
                         record_every=100)
        assert np.linalg.norm(res.state.w.sum(axis=0) - c) \
            <= 1e-8 * (1 + np.abs(c).max())
        assert res.diagnostics["max_dual_feasibility_violation"] <= 1e-8

    def test_checkpoints_at_window_boundaries(self):
        inst = small_instance()
        seq = graphs.generate_sequence("windowed_tree", inst.n, 4, 40, seed=2)
        pol = solver.default_policy("metropolis", inst, seq)
        res = solver.run(inst, seq, "metropolis", pol, horizon=40)
        assert sorted(res.checkpoints) == list(range(0, 41, 4))

    def test_dual_value_matches_run_metric(self):
        inst = small_instance()
        seq = graphs.generate_sequence("windowed_tree", inst.n, 3, 30, seed=2)
        pol = solver.default_policy("metropolis", inst, seq)
        res = solver.run(inst, seq, "metropolis", pol, horizon=30,
                         record_every=30)
        d_direct = solver.dual_value(inst, res.state.w)
        assert abs(d_direct - res.records[-1].dual_value) <= 1e-9


class TestGapHelpers:
    def test_feasibility_gap_zero_at_consensus(self):
        x = np.tile([1.0, 2.0], (5, 1))
        assert solver.feasibility_gap(x) == 0.0

    def test_feasibility_gap_two_points(self):
        assert abs(solver.feasibility_gap(np.array([[0.0], [2.0]]))
                   - np.sqrt(2.0)) <= 1e-14

    def test_consensus_projection_shape_and_sum(self):
        x = np.random.default_rng(0).normal(size=(4, 3))
        p = solver.consensus_projection(x)
        assert p.shape == x.shape
        assert np.allclose(p.sum(axis=0), 0.0, atol=1e-12)

    def test_dual_value_at_zero(self):
        inst = analytic_pair()
        # D(0) = sum_i max_{X_i} (-f_i): 1 for f1 (at x=1), 0 for f2
        assert abs(solver.dual_value(inst, np.zeros((2, 1))) - 1.0) <= 1e-10


class TestCsv:
    def test_round_trip_and_format(self, tmp_path):
        inst = small_instance()
        seq = graphs.generate_sequence("windowed_tree", inst.n, 3, 60, seed=2)
        pol = solver.default_policy("metropolis", inst, seq)
        ref = certify.solve_centralized(inst)
        res = solver.run(inst, seq, "metropolis", pol, horizon=60,
                         record_every=20, reference=ref)
        path = tmp_path / "m.csv"
        solver.write_csv(res.records, path)
        text = path.read_text()
        assert text.splitlines()[0] == "k,D,dual_gap,primal_err,feas_gap,F_gap"
        rows = solver.read_csv(path)
        assert [r[0] for r in rows] == [0, 20, 40, 60]
        assert rows[-1][1] == res.records[-1].dual_value

    def test_deterministic_rerun_bitwise(self, tmp_path):
        inst = small_instance()
        seq = graphs.generate_sequence("windowed_tree", inst.n, 3, 80, seed=2)
        pol = solver.default_policy("metropolis", inst, seq)
        paths = []
        for tag in ("a", "b"):
            res = solver.run(inst, seq, "metropolis", pol, horizon=80,
                             record_every=10)
            p = tmp_path / f"{tag}.csv"
            solver.write_csv(res.records, p)
            paths.append(p.read_bytes())
        assert paths[0] == paths[1]
