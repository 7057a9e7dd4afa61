import numpy as np
import pytest

from gradcf.attribution import (AttributionReport, GradientHistory,
                                compute_attributions, fixed_feature_analysis)
from gradcf.engine import Hyperparameters, generate
from gradcf.evaluation import query_row, select_queries
from gradcf.schema import Feature, FeatureSchema
from helpers import fd_gradient

MIXED = FeatureSchema(
    [Feature("x0", "continuous"),
     Feature("c0", "categorical", categories=("a", "b")),
     Feature("x1", "continuous")],
    label="y")  # width 4


class TestHistory:
    def test_shape_contract(self):
        hist = GradientHistory(3, 4)
        hist.record(np.zeros((3, 4)))
        assert hist.steps == 1
        with pytest.raises(ValueError, match="shape"):
            hist.record(np.zeros((2, 4)))

    def test_empty_history_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            GradientHistory(2, 3).mean_gradient()

    def test_recorded_arrays_are_copies(self):
        hist = GradientHistory(1, 2)
        g = np.ones((1, 2))
        hist.record(g)
        g[:] = 99.0
        np.testing.assert_array_equal(hist.mean_gradient(), np.ones(2))


class TestComputeAttributions:
    def test_zero_history_gives_zero_scores(self):
        hist = GradientHistory(2, 4)
        hist.record(np.zeros((2, 4)))
        report = compute_attributions(hist, MIXED)
        assert all(v == 0.0 for _, v in report.scores)

    def test_cancellation_over_steps(self):
        hist = GradientHistory(1, 4)
        g = np.array([[1.0, -2.0, 0.5, 3.0]])
        hist.record(g)
        hist.record(-g)
        report = compute_attributions(hist, MIXED)
        assert all(v == pytest.approx(0.0, abs=1e-15) for _, v in report.scores)

    def test_one_hot_group_collapses_by_euclidean_norm(self):
        hist = GradientHistory(1, 4)
        hist.record(np.array([[0.0, 3.0, 4.0, 0.0]]))
        report = compute_attributions(hist, MIXED)
        assert report.score("c0") == pytest.approx(5.0)

    def test_scaling_gradients_scales_scores_and_keeps_ranking(self):
        rng = np.random.default_rng(0)
        g = rng.standard_normal((2, 4))
        h1, h2 = GradientHistory(2, 4), GradientHistory(2, 4)
        h1.record(g)
        h2.record(3.0 * g)
        r1 = compute_attributions(h1, MIXED)
        r2 = compute_attributions(h2, MIXED)
        for name, value in r1.scores:
            assert r2.score(name) == pytest.approx(3.0 * value)
        assert [n for n, _ in r1.scores] == [n for n, _ in r2.scores]

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(1)
        g = rng.standard_normal((1, 4))
        hist = GradientHistory(1, 4)
        hist.record(g)
        base = compute_attributions(hist, MIXED)
        # feature order x1, c0, x0 permutes the encoded dims (2->0, block 1..2->1..2, 0->3)
        permuted_schema = FeatureSchema(
            [Feature("x1", "continuous"),
             Feature("c0", "categorical", categories=("a", "b")),
             Feature("x0", "continuous")],
            label="y")
        perm = [3, 1, 2, 0]
        hist2 = GradientHistory(1, 4)
        hist2.record(g[:, perm])
        swapped = compute_attributions(hist2, permuted_schema)
        for name in ("x0", "x1", "c0"):
            assert swapped.score(name) == pytest.approx(base.score(name))

    def test_linear_model_ordering_matches_weights(self, teacher):
        dataset, net, weights = teacher
        hp = Hyperparameters(max_iterations=150, max_perturbations=0, seed=0)
        pos = select_queries(dataset, net, 1, limit=1)[0]
        result = generate(net, query_row(dataset, pos), 1, dataset.schema,
                          dataset.preprocessor, dataset.X_train, hp)
        report = compute_attributions(result.history, dataset.schema, target=1)
        expected = [f"x{j}" for j in np.argsort(-np.abs(weights))]
        assert [n for n, _ in report.scores] == expected
        # cross-check the first recorded step against a finite-difference oracle
        first = result.history._grads[0]
        X0 = None  # re-derive the initial matrix from the engine's seeding rule
        rng = np.random.default_rng([0, 0])
        from gradcf.engine import Constraints, project, resolve_constraints
        qe = result.query_encoded
        spec = resolve_constraints(Constraints(), dataset.schema, dataset.preprocessor, qe)
        X0 = project(rng.standard_normal((hp.n_counterfactuals, 6)), spec)
        fd = fd_gradient(lambda Z: float(net.predict_proba(Z)[:, 0].sum()), X0)
        np.testing.assert_allclose(first, fd, rtol=1e-4, atol=1e-7)


class TestReportSerialization:
    def test_json_shape_and_order(self, tmp_path):
        report = AttributionReport({"a": 0.1, "b": 0.9, "c": 0.5}, steps=7,
                                   target=1, query_id="q0")
        doc = report.to_dict()
        assert [e["feature"] for e in doc["scores"]] == ["b", "c", "a"]
        assert doc["steps"] == 7 and doc["target"] == 1
        path = tmp_path / "attr.json"
        report.save_json(path)
        assert path.exists()

    def test_csv_export(self, tmp_path):
        report = AttributionReport({"a": 0.25, "b": 0.75}, steps=2, target=0)
        path = tmp_path / "attr.csv"
        report.save_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "feature,attr"
        assert lines[1].startswith("b,")


class TestFixedFeatureAnalysis:
    def test_uninformative_feature_barely_matters(self, teacher):
        dataset, net, weights = teacher
        hp = Hyperparameters(max_iterations=200, max_perturbations=1, seed=0)
        queries = [query_row(dataset, p)
                   for p in select_queries(dataset, net, 1, limit=4)]
        fixed = fixed_feature_analysis(net, queries, 1, "x5", dataset.schema,
                                       dataset.preprocessor, dataset.X_train, hp)
        free = []
        for q in queries:
            res = generate(net, q, 1, dataset.schema, dataset.preprocessor,
                           dataset.X_train, hp)
            free.append(res.target_confidence)
        assert fixed["validity"] == pytest.approx(float(np.mean(free)), abs=0.05)

    def test_blocking_the_only_informative_feature(self):
        from gradcf.data import prepare
        from gradcf.network import NeuralNet
        from gradcf.synthetic import make_single_informative
        frame, schema = make_single_informative(n_samples=200, seed=0)
        ds = prepare(frame, schema, seed=0)
        w = np.zeros((5, 1))
        w[0, 0] = 3.0
        net = NeuralNet([w], [np.zeros(1)], "sigmoid")
        hp = Hyperparameters(max_iterations=150, max_perturbations=1, seed=0)
        queries = [query_row(ds, p) for p in select_queries(ds, net, 1, limit=3)]
        row = fixed_feature_analysis(net, queries, 1, "x0", schema,
                                     ds.preprocessor, ds.X_train, hp)
        assert row["validity"] <= 0.5
        assert row["n_valid"] == 0 and row["proximity"] is None  # the "-" marker
