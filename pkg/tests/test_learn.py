import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bizsurv.learn import (
    ABLATION_ROWS,
    Dataset,
    DatasetError,
    GBDTParams,
    MLPParams,
    SchemaMismatch,
    ablation_table,
    assemble_dataset,
    load_model,
    majority_vote,
    oversample,
    parse_families,
    predict_proba,
    roc_auc,
    save_model,
    smote,
    stratified_split,
    train_classifier,
)
from bizsurv.learn.models import TrainedModel, mlp_init, mlp_loss_and_grad, model_from_bytes, model_to_bytes


def pairwise_auc(scores, labels):
    """O(P*N) reference: correctly ordered pairs plus half the ties."""
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    good = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
    return good / (len(pos) * len(neg))


def blobs(n=400, seed=0, gap=4.0):
    rng = np.random.default_rng(seed)
    y = (rng.random(n) < 0.5).astype(int)
    X = rng.normal(size=(n, 2)) + gap * np.c_[y, y]
    return Dataset(tuple(f"r{i}" for i in range(n)), X, y, ("x1", "x2"))


def _dataset(X, y, cols=None):
    cols = cols or tuple(f"f{j}" for j in range(X.shape[1]))
    return Dataset(tuple(f"r{i:05d}" for i in range(len(y))), np.asarray(X, float), np.asarray(y), cols)


class TestSplit:
    def test_ninety_ten(self):
        y = np.array([1] * 90 + [0] * 10)
        d = _dataset(np.zeros((100, 1)), y)
        train, test = stratified_split(d, 0.2, seed=1)
        assert test.class_counts() == {0: 2, 1: 18}
        assert len(train) == 80 and not set(train.ids) & set(test.ids)

    def test_deterministic(self):
        d = _dataset(np.zeros((60, 1)), np.r_[np.ones(40), np.zeros(20)].astype(int))
        assert stratified_split(d, 0.3, 5)[1].ids == stratified_split(d, 0.3, 5)[1].ids
        assert stratified_split(d, 0.3, 5)[1].ids != stratified_split(d, 0.3, 6)[1].ids

    def test_large_proportions(self):
        rng = np.random.default_rng(0)
        y = (rng.random(10_000) < 0.13).astype(int)
        _, test = stratified_split(_dataset(np.zeros((10_000, 1)), y), 0.2, 3)
        for cls in (0, 1):
            assert abs(test.class_counts()[cls] - 0.2 * (y == cls).sum()) <= 1

    def test_tiny_class_is_fatal(self):
        with pytest.raises(DatasetError):
            stratified_split(_dataset(np.zeros((5, 1)), np.array([1, 1, 1, 1, 0])), 0.2, 0)


class TestSmote:
    def test_two_point_minority_on_diagonal(self):
        res = smote(np.array([[0.0, 0.0], [1.0, 1.0]]), 200, k=1, rng=np.random.default_rng(0))
        assert np.allclose(res.rows[:, 0], res.rows[:, 1])
        assert (res.rows >= 0).all() and (res.rows <= 1).all()

    def test_amount_reaches_balance(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 3))
        y = np.array([1] * 90 + [0] * 10)
        Xo, yo, info = oversample(X, y, amount=1.0, k=5, rng=rng)
        assert abs((yo == 0).sum() - (yo == 1).sum()) <= 1
        assert info["synthetic"] == 80
        np.testing.assert_array_equal(Xo[:100], X)

    def test_k_lowered_when_minority_small(self, caplog):
        res = smote(np.eye(3), 10, k=5, rng=np.random.default_rng(0))
        assert res.k == 2
        assert "k=2" in caplog.text

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 40), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_points_inside_minority_hull_box(self, n, k, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, 3))
        res = smote(X, 50, k=k, rng=rng)
        assert (res.rows >= X.min(axis=0) - 1e-12).all() and (res.rows <= X.max(axis=0) + 1e-12).all()
        assert ((res.gap >= 0) & (res.gap <= 1)).all()


class TestModels:
    def test_mlp_gradient_check(self):
        rng = np.random.default_rng(0)
        params = mlp_init(1, 3, rng, 0.1)
        params["b1"] = rng.normal(size=3)
        assert sum(v.size for v in params.values()) == 10
        Z = rng.normal(size=(25, 1))
        y = (rng.random(25) < 0.5).astype(float)
        _, grads = mlp_loss_and_grad(params, Z, y, l2=0.01)
        h = 1e-6
        for name, value in params.items():
            for idx in np.ndindex(value.shape):
                plus = {k: v.copy() for k, v in params.items()}
                minus = {k: v.copy() for k, v in params.items()}
                plus[name][idx] += h
                minus[name][idx] -= h
                numeric = (mlp_loss_and_grad(plus, Z, y, 0.01)[0] - mlp_loss_and_grad(minus, Z, y, 0.01)[0]) / (2 * h)
                analytic = grads[name][idx]
                assert abs(numeric - analytic) <= 1e-4 * max(abs(numeric), abs(analytic), 1e-8)

    def test_gbdt_loss_nonincreasing(self):
        d = blobs(500, seed=2, gap=1.0)
        m = train_classifier("GBDT", d, GBDTParams(n_trees=60), seed=0)
        losses = np.array(m.info["train_loss"])
        assert len(losses) == 61
        assert (np.diff(losses) <= 1e-12).all()

    @pytest.mark.parametrize("kind", ["LR", "GBDT", "MLP"])
    def test_separable_blobs(self, kind):
        train, test = blobs(400, seed=0), blobs(200, seed=1)
        m = train_classifier(kind, train, seed=3)
        assert roc_auc(predict_proba(m, test), test.y).auc >= 0.95

    @pytest.mark.parametrize("kind", ["LR", "GBDT", "MLP"])
    def test_same_seed_bit_identical(self, kind):
        d, probe = blobs(300, seed=4, gap=1.5), blobs(50, seed=5)
        a, b = train_classifier(kind, d, seed=7), train_classifier(kind, d, seed=7)
        assert model_to_bytes(a) == model_to_bytes(b)
        assert predict_proba(a, probe).tobytes() == predict_proba(b, probe).tobytes()

    @pytest.mark.parametrize("kind", ["LR", "GBDT", "MLP"])
    def test_constant_labels(self, kind):
        d = _dataset(np.random.default_rng(0).normal(size=(50, 2)), np.ones(50, dtype=int))
        m = train_classifier(kind, d, seed=0)
        assert (predict_proba(m, d) >= 0.99).all()

    def test_zero_weight_lr_and_empty_gbdt(self):
        cols = ("a", "b")
        lr = TrainedModel("LR", {"weights": np.zeros(2), "bias": np.zeros(1), "mean": np.zeros(2),
                                 "scale": np.ones(2)}, cols)
        assert (predict_proba(lr, np.random.default_rng(0).normal(size=(5, 2))) == 0.5).all()
        y = np.array([1] * 30 + [0] * 10)
        g = train_classifier("GBDT", _dataset(np.random.default_rng(1).normal(size=(40, 2)), y),
                             GBDTParams(n_trees=0))
        np.testing.assert_allclose(predict_proba(g, np.zeros((3, 2))), 0.75)

    def test_schema_mismatch(self):
        m = train_classifier("LR", blobs(100))
        with pytest.raises(SchemaMismatch):
            predict_proba(m, np.zeros((2, 3)))
        with pytest.raises(SchemaMismatch):
            predict_proba(m, pd.DataFrame(np.zeros((2, 2)), columns=["x2", "x1"]))

    def test_serialisation_roundtrip(self, tmp_path):
        d = blobs(200, seed=8)
        for kind in ("LR", "GBDT", "MLP"):
            m = train_classifier(kind, d, MLPParams(epochs=3) if kind == "MLP" else None, seed=1)
            save_model(m, tmp_path / f"{kind}.bin", "test")
            back = load_model(tmp_path / f"{kind}.bin")
            assert back.kind == kind and back.columns == m.columns
            np.testing.assert_array_equal(predict_proba(back, d), predict_proba(m, d))
        with pytest.raises(ValueError):
            model_from_bytes(b"nope")

    def test_probabilities_in_unit_interval(self):
        d = blobs(200, seed=9, gap=0.5)
        for kind in ("LR", "GBDT", "MLP"):
            p = predict_proba(train_classifier(kind, d), d.X * 100)
            assert ((p >= 0) & (p <= 1)).all()


class TestAuc:
    def test_examples(self):
        assert roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]).auc == 1.0
        assert roc_auc([0.5] * 6, [0, 1, 0, 1, 1, 0]).auc == 0.5

    def test_single_class_names_missing(self):
        with pytest.raises(ValueError, match="negative"):
            roc_auc([0.1, 0.2], [1, 1])

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(2, 60))
            s = np.round(rng.random(n), int(rng.integers(1, 4)))
            y = rng.integers(0, 2, n)
            y[:2] = [0, 1]
            assert roc_auc(s, y).auc == pytest.approx(pairwise_auc(s, y), abs=1e-9)

    @settings(max_examples=100, deadline=None)
    # Dyadic scores keep 2s + 1 and exp(s) strictly monotone in floating point.
    @given(st.lists(st.tuples(st.integers(-40, 40).map(lambda i: i / 8), st.integers(0, 1)), min_size=2, max_size=50))
    def test_monotone_invariance_and_curve_shape(self, pairs):
        s = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs])
        if y.min() == y.max():
            return
        r = roc_auc(s, y)
        assert roc_auc(2 * s + 1, y).auc == pytest.approx(r.auc, abs=1e-12)
        assert roc_auc(np.exp(s), y).auc == pytest.approx(r.auc, abs=1e-12)
        pts = np.array(r.roc_points)
        assert tuple(pts[0]) == (0.0, 0.0) and tuple(pts[-1]) == (1.0, 1.0)
        assert (np.diff(pts, axis=0) >= 0).all()


class TestVoting:
    def _lr(self, bias):
        return TrainedModel("LR", {"weights": np.zeros(1), "bias": np.array([bias]), "mean": np.zeros(1),
                                   "scale": np.ones(1)}, ("x",))

    def test_majority(self):
        models = [self._lr(2.0), self._lr(1.0), self._lr(-3.0)]
        assert majority_vote(models, np.zeros((1, 1))).labels.tolist() == [1]

    def test_even_split_uses_mean(self):
        # Probabilities 0.8 and 0.42 split the vote; their mean is 0.61.
        models = [self._lr(np.log(0.8 / 0.2)), self._lr(np.log(0.42 / 0.58))]
        v = majority_vote(models, np.zeros((1, 1)))
        assert v.votes[:, 0].tolist() == [1, 0]
        assert v.mean_proba[0] == pytest.approx(0.61) and v.labels.tolist() == [1]

    def test_identical_models_same_auc(self):
        d = blobs(200, seed=3, gap=1.0)
        m = train_classifier("LR", d)
        v = majority_vote([m, m, m], d.X)
        assert roc_auc(v.mean_proba, d.y).auc == roc_auc(predict_proba(m, d), d.y).auc


class TestAblationPlumbing:
    def test_rows_and_family_parsing(self):
        assert [r for r, _ in ABLATION_ROWS] == ["G", "U", "A", "L", "GU", "ALL", "-GU", "-G", "-U", "-A", "-L"]
        assert parse_families("-U") == ("G", "A", "L")
        assert parse_families("all") == ("G", "U", "A", "L")
        with pytest.raises(ValueError):
            parse_families("GX")

    def test_single_family_row_is_single_model(self):
        y = np.array([1, 0, 1, 0])
        probs = {"G": {"GBDT": np.array([0.9, 0.2, 0.4, 0.6])}, "U": {"GBDT": np.array([0.1, 0.2, 0.9, 0.3])}}
        table, skipped = ablation_table(probs, y, ["GBDT"])
        assert table.loc["G", "GBDT"] == roc_auc(probs["G"]["GBDT"], y).auc
        assert table.loc["GU", "GBDT"] == roc_auc((probs["G"]["GBDT"] + probs["U"]["GBDT"]) / 2, y).auc
        assert "A" in skipped and "ALL" in skipped
        assert set(table.index) == {"G", "U", "GU"}

    def test_assemble(self):
        g = pd.DataFrame({"a": [1.0, 2.0, 3.0]}, index=["x", "y", "z"])
        a = pd.DataFrame({"b": [1, 0], "c": [5, 6]}, index=["y", "z"])
        labels = pd.Series({"x": 1, "y": 0, "z": 1, "w": 0})
        d = assemble_dataset({"G": g, "A": a}, labels, ["G", "A"])
        assert d.columns == ("G:a", "A:b", "A:c")
        assert d.ids == ("y", "z") and d.y.tolist() == [0, 1]
        assert d.meta["dropped"]["G"] == 1 and len(d) <= min(len(g), len(a))
        with pytest.raises(DatasetError):
            assemble_dataset({"G": g}, pd.Series({"q": 1}), ["G"])
