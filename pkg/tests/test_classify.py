import numpy as np
import pytest

from textent.classify import (LabeledCorpus, SoftmaxClassifier,
                              assign_dev_split, classify, encode_corpus,
                              preprocess_corpus, read_labeled_corpus,
                              run_classification, train_classifier)
from textent.corpus import (Annotation, build_vocabularies, compile_document,
                            normalize)
from textent.errors import EmptyTrainSet, MalformedFile
from textent.model import ModelParameters, encode
from textent.train import init_parameters
from textent.model import TrainConfig

from helpers import raw_doc, write_jsonl


def ann(start, end, entity="E", score=1.0):
    return Annotation(start=start, end=end, entity=entity, score=score)


def labeled(docs, labels, split=None):
    return LabeledCorpus(documents=docs, labels=labels,
                         classes=sorted(set(labels)),
                         split=split or ["train"] * len(docs))


class TestPreprocess:
    def test_rare_word_removed_everywhere(self):
        # "quad" appears 4 times across the corpus, below the cutoff of 5
        docs = [raw_doc("a", ["keep", "quad", "keep", "quad"]),
                raw_doc("b", ["keep", "quad", "keep", "quad", "keep"])]
        out = preprocess_corpus(labeled(docs, ["x", "y"]), min_count=5,
                                min_score=0.0)
        assert out.documents[0].tokens == ["keep", "keep"]
        assert out.documents[1].tokens == ["keep", "keep", "keep"]

    def test_min_count_one_and_zero_score_only_lowercases(self):
        docs = [raw_doc("a", ["Mixed", "CASE"],
                        annotations=[ann(0, 1, "E", 0.01)])]
        out = preprocess_corpus(labeled(docs, ["x"]), min_count=1, min_score=0.0)
        assert out.documents[0].tokens == ["mixed", "case"]
        assert len(out.documents[0].annotations) == 1

    def test_boundary_entity_count_survives(self):
        docs = [raw_doc(str(i), ["tok"] * 5, annotations=[ann(0, 1, "E", 0.05)])
                for i in range(5)]
        out = preprocess_corpus(labeled(docs, ["x"] * 5), min_count=5,
                                min_score=0.05)
        assert all(len(d.annotations) == 1 for d in out.documents)

    def test_low_score_annotations_dropped(self):
        docs = [raw_doc("a", ["t"] * 5, annotations=[ann(0, 1, "E", 0.04)])]
        out = preprocess_corpus(labeled(docs, ["x"]), min_count=1, min_score=0.05)
        assert out.documents[0].annotations == []

    def test_spans_remapped_after_splicing(self):
        # "rare" occurs once and is spliced out before the annotated span
        docs = [raw_doc("a", ["rare", "keep", "keep", "keep"],
                        annotations=[ann(1, 3, "E")]),
                raw_doc("b", ["keep", "keep"], annotations=[ann(0, 1, "E")])]
        out = preprocess_corpus(labeled(docs, ["x", "y"]), min_count=2,
                                min_score=0.0)
        doc = out.documents[0]
        assert doc.tokens == ["keep", "keep", "keep"]
        assert (doc.annotations[0].start, doc.annotations[0].end) == (0, 2)

    def test_annotation_dropped_when_span_vanishes(self):
        docs = [raw_doc("a", ["rare", "keep", "keep"],
                        annotations=[ann(0, 1, "E")]),
                raw_doc("b", ["keep"] * 3)]
        out = preprocess_corpus(labeled(docs, ["x", "y"]), min_count=2,
                                min_score=0.0)
        assert out.documents[0].annotations == []

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(12)]
        docs = []
        for i in range(10):
            tokens = [words[rng.integers(len(words))] for _ in range(15)]
            anns = [ann(j, j + 1, f"E{rng.integers(3)}", float(rng.random()))
                    for j in range(3)]
            docs.append(raw_doc(str(i), tokens, annotations=anns))
        corpus = labeled(docs, ["x"] * 10)
        once = preprocess_corpus(corpus, min_count=4, min_score=0.3)
        twice = preprocess_corpus(once, min_count=4, min_score=0.3)
        for d1, d2 in zip(once.documents, twice.documents):
            assert d1.tokens == d2.tokens
            assert d1.annotations == d2.annotations


def tiny_model(seed=0, variant="full", d=6):
    docs = [raw_doc("k1", ["alpha", "beta", "gamma", "delta"], target="T1",
                    annotations=[ann(0, 1, "E1"), ann(1, 2, "E2")]),
            raw_doc("k2", ["beta", "gamma", "epsilon"], target="T2",
                    annotations=[ann(0, 1, "E1")])]
    docs = [normalize(d_) for d_ in docs]
    vocab = build_vocabularies(docs, 1, 1)
    cfg = TrainConfig(dim=d, variant=variant, k=1, epochs=0, seed=seed)
    return init_parameters(vocab, cfg), vocab


class TestEncodeCorpus:
    def test_out_of_vocabulary_document_is_the_zero_vector(self):
        params, vocab = tiny_model()
        corpus = labeled([raw_doc("q", ["unknown", "tokens"])], ["x"])
        vectors = encode_corpus(corpus, params, vocab)
        np.testing.assert_array_equal(vectors[0], 0.0)

    def test_identical_content_gives_identical_vectors(self):
        params, vocab = tiny_model()
        docs = [raw_doc("q1", ["alpha", "beta"]), raw_doc("q2", ["alpha", "beta"])]
        vectors = encode_corpus(labeled(docs, ["x", "y"]), params, vocab)
        np.testing.assert_array_equal(vectors[0], vectors[1])

    def test_matches_direct_encoding(self):
        params, vocab = tiny_model()
        doc = raw_doc("q", ["alpha", "gamma", "zzz"],
                      annotations=[ann(0, 1, "E1")])
        vectors = encode_corpus(labeled([doc], ["x"]), params, vocab)
        compiled = compile_document(doc, vocab, 0, 0, require_target=False)
        np.testing.assert_allclose(vectors[0], encode(compiled, params).v,
                                   atol=1e-12)


class TestClassify:
    def test_zero_classifier_is_uniform_and_picks_class_zero(self):
        clf = SoftmaxClassifier(W_c=np.zeros((3, 4)), bias=np.zeros(3))
        label, probs = classify(np.ones(4), clf)
        assert label == 0
        np.testing.assert_allclose(probs, 1.0 / 3.0)

    def test_logit_shift_does_not_change_the_label(self):
        rng = np.random.default_rng(1)
        W = rng.normal(size=(4, 3))
        v = rng.normal(size=3)
        base, _ = classify(v, SoftmaxClassifier(W_c=W, bias=np.zeros(4)))
        shifted, _ = classify(v, SoftmaxClassifier(W_c=W, bias=np.full(4, 7.5)))
        assert base == shifted

    def test_hand_argmax(self):
        clf = SoftmaxClassifier(W_c=np.array([[1.0], [2.0], [0.5]]),
                                bias=np.zeros(3))
        label, probs = classify(np.ones(1), clf)
        assert label == 1
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)


def separable_vectors(rng, n_classes=4, per_class=40, d=12, scale=3.0):
    centers = rng.normal(scale=scale, size=(n_classes, d))
    X, y = [], []
    for k in range(n_classes):
        for _ in range(per_class):
            X.append(centers[k] + rng.normal(scale=0.4, size=d))
            y.append(k)
    return np.asarray(X), np.asarray(y)


class TestTrainClassifier:
    def test_separable_two_class_problem(self):
        rng = np.random.default_rng(2)
        X, y = separable_vectors(rng, n_classes=2, per_class=60)
        idx = rng.permutation(len(y))
        train_idx, dev_idx, test_idx = idx[:80], idx[80:90], idx[90:]
        fit = train_classifier(X, y, train_idx, dev_idx, 2, epochs=40, seed=0)
        correct = [classify(X[i], fit.classifier)[0] == y[i] for i in test_idx]
        assert np.mean(correct) >= 0.99

    def test_zero_epochs_is_the_zero_classifier(self):
        X = np.ones((4, 3))
        fit = train_classifier(X, [0, 1, 0, 1], [0, 1], [2], 2, epochs=0, seed=0)
        np.testing.assert_array_equal(fit.classifier.W_c, 0.0)
        assert fit.best_epoch == 0
        _, probs = classify(X[0], fit.classifier)
        np.testing.assert_allclose(probs, 0.5)

    def test_snapshot_is_the_best_dev_epoch(self):
        rng = np.random.default_rng(3)
        X, y = separable_vectors(rng, n_classes=3, per_class=30)
        idx = rng.permutation(len(y))
        fit = train_classifier(X, y, idx[:60], idx[60:80], 3, epochs=25, seed=1)
        curve = fit.dev_accuracy
        assert curve[fit.best_epoch - 1] == max(curve)
        assert curve[fit.best_epoch - 1] >= curve[0]

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        X, y = separable_vectors(rng, n_classes=2, per_class=20)
        a = train_classifier(X, y, range(30), range(30, 40), 2, 10, seed=5)
        b = train_classifier(X, y, range(30), range(30, 40), 2, 10, seed=5)
        assert a.best_epoch == b.best_epoch
        np.testing.assert_array_equal(a.classifier.W_c, b.classifier.W_c)

    def test_empty_train_set(self):
        with pytest.raises(EmptyTrainSet):
            train_classifier(np.ones((2, 2)), [0, 1], [], [0], 2, 1, seed=0)


class TestSplits:
    def test_dev_fraction_comes_out_of_train(self):
        docs = [raw_doc(str(i), ["a"]) for i in range(20)]
        split = ["train"] * 15 + ["test"] * 5
        corpus = labeled(docs, ["x"] * 20, split=split)
        out = assign_dev_split(corpus, 0.2, seed=0)
        assert out.split.count("dev") == 3
        assert out.split.count("test") == 5
        assert out.split.count("train") == 12

    def test_deterministic_for_a_seed(self):
        docs = [raw_doc(str(i), ["a"]) for i in range(30)]
        corpus = labeled(docs, ["x"] * 30)
        a = assign_dev_split(corpus, 0.1, seed=7).split
        b = assign_dev_split(corpus, 0.1, seed=7).split
        assert a == b


class TestLabeledCorpusFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, [
            {"id": "1", "label": "sci", "tokens": ["quark", "lepton"],
             "annotations": [{"start": 0, "end": 1, "entity": "Quark",
                              "score": 0.7}]},
            {"id": "2", "label": "auto", "tokens": ["engine"], "split": "test"},
        ])
        corpus = read_labeled_corpus(path)
        assert corpus.classes == ["auto", "sci"]
        assert corpus.split == ["train", "test"]
        assert corpus.documents[0].annotations[0].entity == "Quark"

    def test_missing_label_rejected(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, [{"id": "1", "tokens": ["a"]}])
        with pytest.raises(MalformedFile):
            read_labeled_corpus(path)

    def test_unknown_split_rejected(self, tmp_path):
        path = tmp_path / "docs.jsonl"
        write_jsonl(path, [{"id": "1", "label": "x", "tokens": ["a"],
                            "split": "holdout"}])
        with pytest.raises(MalformedFile):
            read_labeled_corpus(path)


def themed_corpus(rng, vocab_themes, n_per_class=30, doc_len=12, test_frac=0.3):
    docs, labels, split = [], [], []
    for label, words in vocab_themes.items():
        for i in range(n_per_class):
            tokens = [words[rng.integers(len(words))] for _ in range(doc_len)]
            docs.append(raw_doc(f"{label}{i}", tokens))
            labels.append(label)
            split.append("test" if i < n_per_class * test_frac else "train")
    return LabeledCorpus(documents=docs, labels=labels,
                         classes=sorted(vocab_themes), split=split)


class TestRunClassification:
    def build(self, rng, per_class=50, doc_len=20):
        themes = {f"cls{k}": [f"t{k}w{j}" for j in range(6)] for k in range(3)}
        kb_docs = [raw_doc(f"kb{k}", themes[f"cls{k}"] * 2, target=f"T{k}")
                   for k in range(3)]
        vocab = build_vocabularies([normalize(d) for d in kb_docs], 1, 1)
        # a frozen encoder with unit-scale rows, as a trained model would have
        params = ModelParameters(
            variant="word", a=rng.normal(size=(vocab.n_words, 8)),
            b=rng.normal(size=(vocab.n_ctx_entities, 8)),
            c=rng.normal(size=(vocab.n_target_entities, 8)))
        corpus = themed_corpus(rng, themes, n_per_class=per_class,
                               doc_len=doc_len)
        return params, vocab, corpus

    def test_frozen_encoder_protocol(self):
        rng = np.random.default_rng(6)
        params, vocab, corpus = self.build(rng)
        report = run_classification(params, vocab, corpus, dev_frac=0.2,
                                    seed=0, epochs=200, min_count=1,
                                    min_score=0.0)
        assert report["accuracy"] >= 0.95
        assert set(report["per_class_f1"]) == {"cls0", "cls1", "cls2"}
        assert report["finetuned_encoder"] is False

    def test_finetune_flag_runs_and_reports(self):
        rng = np.random.default_rng(7)
        params, vocab, corpus = self.build(rng, per_class=15, doc_len=10)
        report = run_classification(params, vocab, corpus, dev_frac=0.1,
                                    seed=0, epochs=10, min_count=1,
                                    min_score=0.0, finetune=True)
        assert report["finetuned_encoder"] is True
        assert 0.0 <= report["accuracy"] <= 1.0
