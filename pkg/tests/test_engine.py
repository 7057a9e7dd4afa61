import numpy as np
import pandas as pd
import pytest

from gradcf.data import TabularPreprocessor, prepare
from gradcf.engine import (Constraints, CounterfactualExplainer,
                           Hyperparameters, InfeasibleConstraintsError,
                           apply_constraints, discretize, generate, perturb,
                           resolve_constraints, project)
from gradcf.network import NeuralNet
from gradcf.optim import Adam
from gradcf.schema import Feature, FeatureSchema
from gradcf.synthetic import make_blobs


@pytest.fixture(scope="module")
def toy():
    """Linear-sigmoid model with boundary x0 = 0 over two plain features."""
    schema = FeatureSchema([Feature("x0", "continuous"), Feature("x1", "continuous")],
                           label="y")
    rng = np.random.default_rng(0)
    frame = pd.DataFrame({"x0": rng.normal(scale=1.0, size=60),
                          "x1": rng.normal(scale=1.0, size=60)})
    pre = TabularPreprocessor(schema).fit(frame)
    # weights in encoded space so the boundary stays x0_enc = -mean/std shifted
    w = np.array([[1.0], [0.0]]) * pre.scale_["x0"]
    b = np.array([pre.mean_["x0"]])
    net = NeuralNet([w], [b], "sigmoid")
    X_obs = pre.transform(frame)
    return schema, pre, net, X_obs


class TestGenerateToy:
    def test_boundary_crossing_and_proximity_pressure(self, toy):
        schema, pre, net, X_obs = toy
        hp = Hyperparameters(max_iterations=300, max_perturbations=1, seed=0)
        query = {"x0": -2.0, "x1": 0.0}
        assert net.forward(pre.transform_row(query)).predicted_class == 0
        result = generate(net, query, 1, schema, pre, X_obs, hp)
        rows = result.set_frame
        probs = result.target_probs
        assert (probs > 0.5).mean() >= 0.8
        assert result.target_confidence > 0.5
        # the uninformative coordinate stays near the query under proximity pressure
        assert np.abs(rows["x1"].to_numpy()).mean() < np.abs(rows["x0"].to_numpy() + 2).mean() + 1.5

    def test_all_features_fixed_is_infeasible(self, toy):
        schema, pre, net, X_obs = toy
        constraints = Constraints(features_to_fix=["x0", "x1"])
        with pytest.raises(InfeasibleConstraintsError, match="infeasible"):
            generate(net, {"x0": -2.0, "x1": 0.0}, 1, schema, pre, X_obs,
                     Hyperparameters(max_iterations=10), constraints)

    def test_same_seed_bit_identical(self, toy):
        schema, pre, net, X_obs = toy
        hp = Hyperparameters(max_iterations=120, max_perturbations=2, seed=11)
        a = generate(net, {"x0": -2.0, "x1": 0.5}, 1, schema, pre, X_obs, hp)
        b = generate(net, {"x0": -2.0, "x1": 0.5}, 1, schema, pre, X_obs, hp)
        np.testing.assert_array_equal(a.set_relaxed, b.set_relaxed)
        assert a.breakdown.total == b.breakdown.total
        assert a.trace == b.trace

    def test_target_equal_to_prediction_rejected(self, toy):
        schema, pre, net, X_obs = toy
        with pytest.raises(ValueError, match="already classified"):
            generate(net, {"x0": 3.0, "x1": 0.0}, 1, schema, pre, X_obs,
                     Hyperparameters(max_iterations=10))

    def test_requires_fit_before_explain(self, toy):
        schema, pre, net, _ = toy
        explainer = CounterfactualExplainer(net, schema, pre)
        with pytest.raises(RuntimeError, match="fit"):
            explainer.explain({"x0": -2.0, "x1": 0.0}, 1)

    def test_best_loss_is_min_of_trace(self, toy):
        schema, pre, net, X_obs = toy
        hp = Hyperparameters(max_iterations=150, max_perturbations=2, seed=4)
        result = generate(net, {"x0": -1.5, "x1": 1.0}, 1, schema, pre, X_obs, hp)
        totals = [rec["total"] for rec in result.trace]
        assert result.breakdown.total == pytest.approx(min(totals))

    def test_trace_format(self, toy):
        schema, pre, net, X_obs = toy
        hp = Hyperparameters(max_iterations=40, max_perturbations=1, seed=0,
                             tau_loss=0.0)  # force a restart
        result = generate(net, {"x0": -2.0, "x1": 0.0}, 1, schema, pre, X_obs, hp)
        keys = {"t", "restart", "total", "val", "prox", "spars", "spars_smooth",
                "plaus", "div", "cat", "perturbed"}
        assert all(set(rec) == keys for rec in result.trace)
        assert result.restarts_used == 1
        assert not result.threshold_met
        marks = [rec for rec in result.trace if rec["perturbed"]]
        assert len(marks) == 1 and marks[0]["restart"] == 1 and marks[0]["t"] == 0


class TestConstraints:
    def test_vary_and_fix_mutually_exclusive(self):
        with pytest.raises(ValueError, match="not both"):
            Constraints(features_to_vary=["a"], features_to_fix=["b"])

    def test_unknown_feature_name(self, toy):
        schema, pre, net, X_obs = toy
        with pytest.raises(KeyError, match="unknown feature"):
            resolve_constraints(Constraints(features_to_fix=["nope"]), schema, pre,
                                np.zeros(2))

    def test_no_constraints_projection_limits_to_observed_range(self, toy):
        schema, pre, net, X_obs = toy
        query = {"x0": 0.0, "x1": 0.0}
        Xp = X_obs[:3].copy()
        out = apply_constraints(Xp, query, Constraints(), pre)
        np.testing.assert_array_equal(out, Xp)  # observed rows are inside the box

    def test_fixed_feature_snaps_back(self, toy):
        schema, pre, net, X_obs = toy
        query = {"x0": -2.0, "x1": 0.7}
        out = apply_constraints(np.array([[5.0, 5.0]]), query,
                                Constraints(features_to_fix=["x1"]), pre)
        assert out[0, 1] == pytest.approx(pre.encode_value("x1", 0.7))

    def test_direction_increase_clamps(self, toy):
        schema, pre, net, X_obs = toy
        query = {"x0": 0.5, "x1": 0.0}
        qe = pre.transform_row(query)
        spec = resolve_constraints(Constraints(directions={"x0": "increase"}),
                                   schema, pre, qe)
        candidate = np.array([[pre.encode_value("x0", 0.2), 0.0]])
        out = project(candidate, spec)
        assert out[0, 0] == pytest.approx(qe[0])

    def test_range_clamps_in_raw_units(self, toy):
        schema, pre, net, X_obs = toy
        query = {"x0": 0.0, "x1": 0.0}
        qe = pre.transform_row(query)
        spec = resolve_constraints(
            Constraints(permitted_ranges={"x0": [-0.5, 0.5]}), schema, pre, qe)
        out = project(np.array([[pre.encode_value("x0", 3.0), 0.0]]), spec)
        back = pre.inverse_transform(out)
        assert back["x0"].iloc[0] == pytest.approx(0.5)

    def test_empty_interval_is_infeasible(self, toy):
        schema, pre, net, X_obs = toy
        query = {"x0": 2.0, "x1": 0.0}
        qe = pre.transform_row(query)
        with pytest.raises(InfeasibleConstraintsError, match="x0"):
            resolve_constraints(Constraints(permitted_ranges={"x0": [-1.0, 0.0]},
                                            directions={"x0": "increase"}),
                                schema, pre, qe)

    def test_schema_immutable_defaults_apply(self):
        schema = FeatureSchema([Feature("a", "continuous", immutable=True),
                                Feature("b", "continuous")], label="y")
        assert Constraints().fixed_feature_names(schema) == {"a"}
        # explicit vary overrides the schema default
        assert Constraints(features_to_vary=["a", "b"]).fixed_feature_names(schema) == set()


class TestPerturb:
    def test_zero_scale_is_identity(self):
        rng = np.random.default_rng(0)
        Xp = rng.standard_normal((3, 4))
        out = perturb(Xp, np.zeros(4), 0.0, 0.01, np.random.default_rng(1))
        np.testing.assert_array_equal(out, Xp)

    def test_replicated_query_untouched(self):
        q = np.array([1.0, -1.0, 0.0])
        Xp = np.tile(q, (4, 1))
        out = perturb(Xp, q, 0.5, 0.01, np.random.default_rng(2))
        np.testing.assert_array_equal(out, Xp)

    def test_only_changed_dims_move(self):
        q = np.zeros(3)
        Xp = np.array([[0.5, 0.0, 0.0]])
        out = perturb(Xp, q, 0.5, 0.01, np.random.default_rng(3))
        assert out[0, 0] != 0.5
        np.testing.assert_array_equal(out[0, 1:], Xp[0, 1:])


class TestAdam:
    def test_first_step_magnitude_is_learning_rate(self):
        adam = Adam([(3,)], lr=0.05)
        [out] = adam.step([np.zeros(3)], [np.array([0.4, -2.0, 10.0])])
        np.testing.assert_allclose(np.abs(out), 0.05, rtol=1e-3)

    def test_zero_gradient_keeps_parameters(self):
        adam = Adam([(2,)], lr=0.1)
        params = [np.array([1.0, -1.0])]
        for _ in range(5):
            params = adam.step(params, [np.zeros(2)])
        np.testing.assert_array_equal(params[0], np.array([1.0, -1.0]))

    def test_identical_streams_stay_identical(self):
        a, b = Adam([(2,)], lr=0.05), Adam([(2,)], lr=0.05)
        pa, pb = [np.zeros(2)], [np.zeros(2)]
        rng = np.random.default_rng(0)
        for _ in range(10):
            g = [rng.normal(size=2)]
            pa, pb = a.step(pa, g), b.step(pb, g)
        np.testing.assert_array_equal(pa[0], pb[0])


class TestDiscretize:
    def test_tie_breaks_to_lower_index(self, blobs):
        pre = blobs.preprocessor
        schema = blobs.schema
        enc = np.zeros((1, schema.encoded_width))
        block = schema.block("c0")
        enc[0, block.start] = 0.5
        enc[0, block.start + 1] = 0.5
        frame = discretize(enc, schema, pre)
        assert frame["c0"].iloc[0] == "a"

    def test_exact_one_hot_decodes(self, blobs):
        pre, schema = blobs.preprocessor, blobs.schema
        enc = np.zeros((1, schema.encoded_width))
        block = schema.block("c0")
        enc[0, block.start + 1] = 1.0
        assert discretize(enc, schema, pre)["c0"].iloc[0] == "b"

    def test_continuous_round_trip(self, blobs):
        pre, schema = blobs.preprocessor, blobs.schema
        enc = np.zeros((1, schema.encoded_width))
        enc[0, schema.block("x0").start] = 1.234
        raw = discretize(enc, schema, pre)["x0"].iloc[0]
        assert pre.encode_value("x0", raw) == pytest.approx(1.234, abs=1e-9)


class TestBenchmarkRun:
    def test_constraint_safety_every_iteration(self, blobs, blobs_model):
        # fixed dims must equal the query's encoding after every projection,
        # which the returned relaxed matrix witnesses for the final iterate
        from gradcf.evaluation import query_row, select_queries
        hp = Hyperparameters(max_iterations=150, max_perturbations=1, seed=0)
        pos = select_queries(blobs, blobs_model, 1, limit=1)[0]
        query = query_row(blobs, pos)
        constraints = Constraints(features_to_fix=["x1", "c0"],
                                  directions={"x2": "increase"})
        result = generate(blobs_model, query, 1, blobs.schema, blobs.preprocessor,
                          blobs.X_train, hp, constraints)
        qe = result.query_encoded
        fixed_dims = list(range(*blobs.schema.block("x1").indices(99))) + \
            list(range(*blobs.schema.block("c0").indices(99)))
        for dim in fixed_dims:
            np.testing.assert_array_equal(result.set_relaxed[:, dim],
                                          np.full(len(result.set_relaxed), qe[dim]))
        # presentation form: fixed features bit-identical to the query values
        assert (result.set_frame["x1"] == query["x1"]).all()
        assert (result.set_frame["c0"] == query["c0"]).all()
        assert (result.set_frame["x2"].astype(float) >= float(query["x2"])).all()

    def test_one_hot_blocks_exactly_one_hot_after_discretize(self, blobs, blobs_model):
        from gradcf.evaluation import query_row, select_queries
        hp = Hyperparameters(max_iterations=120, max_perturbations=0, seed=1)
        pos = select_queries(blobs, blobs_model, 1, limit=1)[0]
        result = generate(blobs_model, query_row(blobs, pos), 1, blobs.schema,
                          blobs.preprocessor, blobs.X_train, hp)
        for _, block in blobs.schema.categorical_blocks():
            sub = result.set_encoded[:, block]
            np.testing.assert_array_equal(sub.sum(axis=1), np.ones(len(sub)))
            assert set(np.unique(sub)) <= {0.0, 1.0}

    def test_running_best_non_increasing(self, blobs, blobs_model):
        from gradcf.evaluation import query_row, select_queries
        hp = Hyperparameters(max_iterations=150, max_perturbations=2, seed=2)
        pos = select_queries(blobs, blobs_model, 1, limit=1)[0]
        result = generate(blobs_model, query_row(blobs, pos), 1, blobs.schema,
                          blobs.preprocessor, blobs.X_train, hp)
        best = np.minimum.accumulate([rec["total"] for rec in result.trace])
        assert (np.diff(best) <= 0).all()
