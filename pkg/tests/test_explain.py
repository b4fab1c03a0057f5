import json
import re

import numpy as np
import pytest

from bizsurv.explain import (
    UnexplainableInput,
    explain_tabular,
    explain_text,
    render_explanation,
    vocabulary_from_columns,
    weighted_ridge,
)
from bizsurv.learn import Dataset, predict_proba, train_classifier
from bizsurv.text import preprocess


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def planted(X):
    return sigmoid(3 * X[:, 0] - 2 * X[:, 1])


def standardized_background(n, d, seed):
    """Background whose columns have mean 0 and (population) std 1 exactly."""
    B = np.random.default_rng(seed).normal(size=(n, d))
    return (B - B.mean(axis=0)) / B.std(axis=0)


VOCAB = ["great", "tasty", "slow", "rude", "cheap", "cozy", "loud", "fresh"]


def indicator_model(token, vocab=VOCAB):
    j = vocab.index(token)
    return lambda X: np.where(np.asarray(X)[:, j] > 0, 0.9, 0.2)


class TestWeightedRidge:
    def test_matches_augmented_least_squares(self):
        rng = np.random.default_rng(0)
        Z, y, w = rng.normal(size=(80, 4)), rng.normal(size=80), rng.random(80) + 0.1
        alpha = 0.7
        coef, intercept, r2 = weighted_ridge(Z, y, w, alpha)
        # Stack sqrt(w)-scaled rows with sqrt(alpha) penalty rows on the slopes only.
        A = np.vstack([np.sqrt(w)[:, None] * np.c_[np.ones(80), Z], np.c_[np.zeros(4), np.sqrt(alpha) * np.eye(4)]])
        b = np.r_[np.sqrt(w) * y, np.zeros(4)]
        sol = np.linalg.lstsq(A, b, rcond=None)[0]
        np.testing.assert_allclose(coef, sol[1:], atol=1e-10)
        assert intercept == pytest.approx(sol[0], abs=1e-10)
        assert 0.0 <= r2 <= 1.0


class TestTabular:
    def test_constant_model_has_no_signal(self):
        B = np.random.default_rng(0).normal(size=(300, 6))
        e = explain_tabular(lambda X: np.full(len(X), 0.7), B[0], B, k=6, num_samples=500, seed=1)
        assert len(e.entries) == 6
        assert all(abs(x.weight) <= 1e-6 for x in e.entries)
        assert "no salient features" in render_explanation(e, "html")

    def test_planted_model_quartile_mode(self):
        hits = 0
        for trial in range(100):
            rng = np.random.default_rng(trial)
            B = rng.normal(size=(500, 5))
            x = np.r_[1.5, 1.5, rng.normal(size=3)]
            e = explain_tabular(planted, x, B, k=5, num_samples=2000, seed=trial,
                                feature_names=["x1", "x2", "n1", "n2", "n3"])
            top = [(en.feature, np.sign(en.weight)) for en in e.entries[:2]]
            hits += set(top) == {("x1", 1.0), ("x2", -1.0)}
        assert hits >= 95

    def test_linear_model_continuous_mode(self):
        w = np.array([0.08, -0.05, 0.02, -0.01, 0.0, 0.0])
        B = standardized_background(400, 6, 3)
        hits, r2 = 0, []
        for trial in range(100):
            x = B[trial]
            e = explain_tabular(lambda X: 0.5 + X @ w, x, B, k=6, num_samples=1000, seed=trial, mode="continuous")
            top = [(en.feature, np.sign(en.weight)) for en in e.entries[:2]]
            hits += top == [("x0", 1.0), ("x1", -1.0)]
            signs_ok = all(np.sign(en.weight) == np.sign(w[int(en.feature[1:])]) for en in e.entries[:4])
            hits -= not signs_ok
            r2.append(e.local_fit_r2)
        assert hits >= 95
        assert min(r2) >= 0.9

    def test_conditions_and_ordering(self):
        B = np.random.default_rng(4).normal(size=(400, 3)) * [1, 10, 100]
        B[:, 2] = np.round(B[:, 2] > 0)
        e = explain_tabular(planted, np.array([2.0, -30.0, 1.0]), B, k=3, num_samples=800, seed=0,
                            feature_names=["reviews", "price", "flag"])
        weights = [abs(x.weight) for x in e.entries]
        assert weights == sorted(weights, reverse=True)
        conds = {x.feature: x.condition for x in e.entries}
        assert re.fullmatch(r"reviews > -?[\d.]+", conds["reviews"])
        assert re.fullmatch(r"price <= -?[\d.]+", conds["price"])
        assert conds["flag"] == "flag = 1"

    def test_zero_variance_feature_excluded(self):
        B = np.random.default_rng(5).normal(size=(200, 3))
        B[:, 1] = 4.0
        e = explain_tabular(planted, B[0], B, k=3, num_samples=300, seed=0, feature_names=["a", "b", "c"])
        assert e.excluded == ("b",)
        assert "b" not in {x.feature for x in e.entries}
        assert json.loads(render_explanation(e))["excluded_constant_features"] == ["b"]

    def test_deterministic_and_predicted_class(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(300, 4))
        y = (X[:, 0] + 0.3 * rng.normal(size=300) > 0).astype(int)
        d = Dataset(tuple(map(str, range(300))), X, y, ("a", "b", "c", "d"))
        m = train_classifier("GBDT", d, seed=0)
        a = explain_tabular(m, X[3], d, k=4, num_samples=1000, seed=11, instance_id="r3")
        b = explain_tabular(m, X[3], d, k=4, num_samples=1000, seed=11, instance_id="r3")
        assert render_explanation(a) == render_explanation(b)
        assert a.predicted_class == int(predict_proba(m, X[3:4])[0] >= 0.5)
        assert a.probability == predict_proba(m, X[3:4])[0]
        assert 0.0 <= a.local_fit_r2 <= 1.0

    def test_json_schema(self):
        B = np.random.default_rng(7).normal(size=(200, 12))
        e = explain_tabular(planted, B[0], B, num_samples=400, seed=2)
        doc = json.loads(render_explanation(e, "json"))
        assert doc["type"] == "tabular" and len(doc["entries"]) == 10
        assert set(doc["entries"][0]) == {"feature", "condition", "weight"}
        assert doc["config"]["num_samples"] == 400 and doc["config"]["seed"] == 2
        html = render_explanation(e, "html")
        assert html.startswith("<!DOCTYPE html>") and "<svg" in html


class TestText:
    def test_indicator_token_ranks_first(self):
        e = explain_text(indicator_model("great"), "Great tacos, slow service but cozy and fresh",
                         vocabulary=VOCAB, seed=0)
        assert e.word_weights[0][0] == "great" and e.word_weights[0][1] > 0
        assert all(abs(w) < abs(e.word_weights[0][1]) / 10 for _, w in e.word_weights[1:])

    def test_only_source_tokens(self):
        text = "rude staff, loud room"
        e = explain_text(indicator_model("rude"), text, vocabulary=VOCAB, seed=3)
        assert {t for t, _ in e.word_weights} <= set(preprocess(text))

    def test_deterministic(self):
        a = explain_text(indicator_model("cheap"), "cheap and cheerful, fresh", vocabulary=VOCAB, seed=5)
        b = explain_text(indicator_model("cheap"), "cheap and cheerful, fresh", vocabulary=VOCAB, seed=5)
        assert a == b

    def test_unexplainable(self):
        with pytest.raises(UnexplainableInput, match="unexplainable input"):
            explain_text(indicator_model("great"), "nothing known here", vocabulary=VOCAB)

    def test_trained_bow_model(self):
        rng = np.random.default_rng(8)
        cols = tuple(f"L:bow__{t}" for t in VOCAB)
        X = rng.poisson(0.5, size=(400, len(VOCAB))).astype(float)
        y = (X[:, 0] > 0).astype(int)
        m = train_classifier("LR", Dataset(tuple(map(str, range(400))), X, y, cols))
        assert vocabulary_from_columns(m.columns) == VOCAB
        e = explain_text(m, "great food, loud music", num_samples=500, seed=0)
        assert e.word_weights[0][0] == "great"

    def test_html_highlights_are_source_words(self):
        text = "Great tacos! Slow service."
        e = explain_text(indicator_model("great"), text, vocabulary=VOCAB, seed=0)
        html = render_explanation(e, "html")
        marked = re.findall(r"<mark[^>]*>([^<]*)</mark>", html)
        assert marked and set(marked) <= set(text.split())


def test_unknown_format_lists_supported():
    e = explain_text(indicator_model("great"), "great", vocabulary=VOCAB, num_samples=10)
    with pytest.raises(ValueError, match="json, html"):
        render_explanation(e, "pdf")
