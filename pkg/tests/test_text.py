import string
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _builders import business, review, snapshot
from bizsurv.text import (
    SEP,
    Polarity,
    Vocabulary,
    build_vocabulary,
    bow_vector,
    compute_text_features,
    polarity,
    preprocess,
    select_extreme_reviews,
    stopwords,
)


class TestPreprocess:
    def test_examples(self):
        assert preprocess("The food was GREAT!") == ["food", "great"]
        assert preprocess("") == []
        assert preprocess("don't stop-believing") == ["don't", "stop-believing"]

    def test_sep_is_reserved(self):
        assert SEP not in preprocess(f"good {SEP} bad")
        assert SEP not in build_vocabulary([["a", SEP, SEP]]).terms

    @settings(max_examples=200, deadline=None)
    @given(st.text(alphabet=string.ascii_letters + string.punctuation + " \t\n'éü", max_size=80))
    def test_idempotent_and_clean(self, text):
        toks = preprocess(text)
        assert preprocess(" ".join(toks)) == toks
        stop = stopwords()
        for t in toks:
            assert t == t.lower() and t not in stop
            assert t and not all(c in string.punctuation for c in t)


class TestPolarity:
    def test_default_map(self):
        assert polarity(1) is Polarity.NEGATIVE
        assert polarity(2) is Polarity.NEGATIVE
        assert polarity(3) is Polarity.POSITIVE
        assert polarity(4) is Polarity.POSITIVE
        assert polarity(5) is Polarity.POSITIVE

    def test_drop3_map(self):
        assert polarity(3, "drop3") is Polarity.NEUTRAL
        assert polarity(5, "drop3") is Polarity.POSITIVE


class TestVocabulary:
    def test_min_rule(self):
        corpus = [[f"t{i}" for i in range(12)]]
        assert len(build_vocabulary(corpus)) == 12

    def test_tie_rule(self):
        v = build_vocabulary([["pear", "apple", "fig", "fig"]], size=3)
        assert v.terms == ("fig", "apple", "pear")

    def test_empty_corpus_is_fatal(self):
        with pytest.raises(ValueError):
            build_vocabulary([[], []])

    def test_counting_oracle_and_order_independence(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(3000)]
        corpus = [[words[int(j)] for j in rng.zipf(1.3, size=int(rng.integers(3, 30))) % 3000] for _ in range(5000)]
        counts = {}
        for doc in corpus:
            for t in doc:
                counts[t] = counts.get(t, 0) + 1
        want = sorted(counts, key=lambda t: (-counts[t], t))[:1000]
        v = build_vocabulary(corpus)
        assert list(v.terms) == want
        assert build_vocabulary(corpus[::-1]).terms == v.terms


class TestBow:
    def test_examples(self):
        v = Vocabulary(("good", "food"))
        assert bow_vector([["good", "food"], ["good"]], v).tolist() == [2, 1]
        assert bow_vector([["zzz", "yyy"]], v).tolist() == [0, 0]

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.lists(st.sampled_from("abcdefgh"), max_size=10), max_size=10))
    def test_bounded_and_order_free(self, docs):
        v = Vocabulary(tuple("abcde"))
        b = bow_vector(docs, v)
        assert b.sum() <= sum(len(d) for d in docs)
        assert (bow_vector(docs[::-1], v) == b).all()


class TestExtremeReviews:
    def test_best_and_worst(self):
        revs = [review("r1", "a", stars=1, text="awful"), review("r2", "a", stars=3, text="fine"),
                review("r3", "a", stars=5, text="superb")]
        ex = select_extreme_reviews(revs, np.random.default_rng(0))
        assert ex.best.review_id == "r3" and ex.worst.review_id == "r1"
        assert ex.tokens == ("awful", SEP, "superb")

    def test_single_review_used_twice(self):
        ex = select_extreme_reviews([review("r1", "a", stars=4, text="tasty")], np.random.default_rng(0))
        assert ex.best == ex.worst
        assert ex.tokens == ("tasty", SEP, "tasty")

    def test_tie_pick_is_seeded(self):
        revs = [review(f"r{i}", "a", stars=5, text=f"t{i}") for i in range(6)] + [review("rx", "a", stars=2)]
        picks = {select_extreme_reviews(revs, np.random.default_rng(9)).best.review_id for _ in range(5)}
        assert len(picks) == 1
        many = {select_extreme_reviews(revs, np.random.default_rng(s)).best.review_id for s in range(40)}
        assert len(many) > 1

    def test_no_reviews(self):
        with pytest.raises(ValueError):
            select_extreme_reviews([], np.random.default_rng(0))


class TestTextFeatures:
    def test_bow_table_matches_dictionary_count(self):
        texts = ["Great tacos, great salsa!", "Cold fries. Rude staff", "tacos tacos tacos", "The salsa was cold"]
        revs = [review(f"r{i}", "ab"[i % 2], stars=1 + i, text=t) for i, t in enumerate(texts)]
        s = snapshot([business("a"), business("b"), business("c")], revs)
        tf = compute_text_features(s, ["a", "b", "c"], vocab_size=1000)
        assert list(tf.bow.index) == ["a", "b"]
        for bid in ("a", "b"):
            want = Counter(t for r in revs if r.business_id == bid for t in preprocess(r.text))
            row = tf.bow.loc[bid]
            for term in tf.vocabulary.terms:
                assert row[f"bow__{term}"] == want.get(term, 0)
        assert tf.report["without_reviews"] == 1
        assert {p["polarity"] for p in tf.polarity_records} <= {"Positive", "Negative"}
        assert SEP not in tf.vocabulary
