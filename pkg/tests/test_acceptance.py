"""Acceptance suite: one test per release criterion, each printing a verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  Every tolerance is asserted, not logged.
"""

import math
import time

import numpy as np
import pytest

from textent.corpus import ENTITY_TOKEN_PREFIX
from textent.classify import classify, train_classifier
from textent.metrics import (breakeven_point, classification_report,
                             macro_f1_entities, micro_f1, precision_at_1,
                             rank_types, strict_accuracy)
from textent.model import (TrainConfig, encode, full_softmax_rank,
                           sample_negatives, sampled_softmax_loss)
from textent.sgns import (SgnsConfig, SgnsParameters, build_sampling_table,
                          sgns_pair_step, train_skipgram)
from textent.train import train
from textent.typing_eval import run_typing_evaluation, tune_thresholds
from textent.vectors import VectorStore, cosine, load_vectors, save_vectors
from textent.cli import dispatch

from helpers import (clique_sentences, fd_max_rel_error, random_instance,
                     toy_kb, typed_kb, write_jsonl)
from test_metrics import (ref_bep, ref_classification, ref_macro, ref_micro,
                          ref_p_at_1, ref_strict, random_assignments)
from test_typing import exhaustive_best_f1, f1_at
from test_cli import kb_rows, labeled_rows, typing_rows


def verdict(name, ok, detail=""):
    print(f"[acceptance] {name}: {'PASS' if ok else 'FAIL'} {detail}".rstrip())
    assert ok, f"{name}: {detail}"


def test_criterion_01_gradient_oracle():
    started = time.monotonic()
    rng = np.random.default_rng(20240101)
    worst = 0.0
    variants = ("full", "word", "entity")
    for i in range(1000):
        params, doc, negs = random_instance(rng, variants[i % 3])
        worst = max(worst, fd_max_rel_error(params, doc, negs))
    elapsed = time.monotonic() - started
    verdict("gradient-oracle",
            worst < 1e-4 and elapsed < 30.0,
            f"(max rel err {worst:.3e}, {elapsed:.1f}s, 1000 instances)")


def test_criterion_02_closed_form_losses():
    k = 100
    c = np.zeros((500, 12))
    loss, probs = sampled_softmax_loss(np.zeros(12), 3,
                                       np.arange(k) + 100, c)
    sampled_exact = loss == math.log(k + 1)

    params = SgnsParameters(syn0=np.zeros((40, 9)), syn1=np.zeros((40, 9)))
    pair_loss = sgns_pair_step(0, 1, np.arange(15) + 2, params, lr=0.0)
    sgns_exact = pair_loss == (1 + 15) * math.log(2)

    rng = np.random.default_rng(2)
    v = rng.normal(size=6)
    cmat = rng.normal(size=(40, 6))
    negs = np.array([1, 5, 5, 9])
    base, _ = sampled_softmax_loss(v, 0, negs, cmat)
    shift_ok = True
    for alpha in (-200.0, 0.37, 55.0):
        shifted = cmat + alpha * v / np.dot(v, v)
        loss, _ = sampled_softmax_loss(v, 0, negs, shifted)
        shift_ok = shift_ok and abs(loss - base) < 1e-9

    verdict("closed-form-losses", sampled_exact and sgns_exact and shift_ok,
            f"(sampled={sampled_exact}, sgns={sgns_exact}, shift={shift_ok})")


def test_criterion_03_overfit_oracle():
    started = time.monotonic()
    dataset = toy_kb(n_targets=50, words_per_target=4, n_ctx=20, doc_len=30,
                     seed=7)
    config = TrainConfig(dim=16, variant="full", k=10, dropout=0.2,
                         batch_size=25, epochs=200, seed=13, threads=1)
    result = train(dataset, None, config)
    hits = 0
    for doc in dataset.documents:
        v = encode(doc, result.params).v
        hits += full_softmax_rank(v, result.params.c, doc.target) == 1
    rate = hits / len(dataset.documents)
    elapsed = time.monotonic() - started
    verdict("overfit-oracle", rate >= 0.95 and elapsed < 120.0,
            f"(rank-1 rate {rate:.3f}, {elapsed:.1f}s)")


def test_criterion_04_end_to_end_typing():
    started = time.monotonic()
    dataset, typing_data = typed_kb(n_types=5, entities_per_type=40, seed=3)
    reports = {}
    for variant in ("full", "word", "entity"):
        config = TrainConfig(dim=16, variant=variant, k=10, dropout=0.2,
                             batch_size=20, epochs=50, seed=5, threads=1)
        result = train(dataset, None, config)
        vectors = {name: result.params.c[i]
                   for i, name in enumerate(dataset.vocab.target_entities)}
        reports[variant] = run_typing_evaluation(
            vectors, typing_data, epochs=100, seed=5, hidden=64, batch_size=32)
    elapsed = time.monotonic() - started
    full, word, entity = (reports[v] for v in ("full", "word", "entity"))
    ordering = full["p_at_1"] >= max(word["p_at_1"], entity["p_at_1"]) - 0.02
    ok = (full["p_at_1"] >= 0.90 and full["micro_f1"] >= 0.85 and ordering
          and elapsed < 300.0)
    verdict("end-to-end-typing", ok,
            f"(P@1 full={full['p_at_1']:.3f} word={word['p_at_1']:.3f} "
            f"entity={entity['p_at_1']:.3f}, micro={full['micro_f1']:.3f}, "
            f"{elapsed:.1f}s)")


def test_criterion_05_metric_oracle_equivalence():
    rng = np.random.default_rng(55)
    ok = True
    for _ in range(1000):
        gold, pred, probs, ranked = random_assignments(rng)
        ok &= abs(precision_at_1(ranked, gold) - ref_p_at_1(ranked, gold)) <= 1e-12
        ok &= abs(breakeven_point(ranked, gold) - ref_bep(ranked, gold)) <= 1e-12
        ok &= abs(strict_accuracy(pred, gold) - ref_strict(pred, gold)) <= 1e-12
        ok &= abs(micro_f1(pred, gold) - ref_micro(pred, gold)) <= 1e-12
        ok &= abs(macro_f1_entities(pred, gold) - ref_macro(pred, gold)) <= 1e-12
    classes = ["a", "b", "c"]
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        gold_l = [classes[i] for i in rng.integers(0, 3, size=n)]
        pred_l = [classes[i] for i in rng.integers(0, 3, size=n)]
        rep = classification_report(pred_l, gold_l, classes)
        acc, macro, f1s = ref_classification(pred_l, gold_l, classes)
        ok &= abs(rep.accuracy - acc) <= 1e-12
        ok &= abs(rep.macro_f1 - macro) <= 1e-12

    # frozen hand tallies
    ok &= micro_f1([{1}, {3, 4}], [{1, 2}, {3}]) == 2 / 3
    rep = classification_report(["a", "b", "b", "b"], ["a", "a", "b", "b"],
                                ["a", "b"])
    ok &= abs(rep.macro_f1 - (2 / 3 + 0.8) / 2) <= 1e-15
    verdict("metric-oracle-equivalence", ok, "(2000 random instances)")


def test_criterion_06_threshold_tuning_oracle():
    rng = np.random.default_rng(66)
    ok = True
    for _ in range(100):
        n_entities = int(rng.integers(3, 25))
        n_types = int(rng.integers(1, 7))
        names = [f"e{i}" for i in range(n_entities)]
        probs = {n: rng.random(n_types) for n in names}
        gold = {n: {t for t in range(n_types) if rng.random() < 0.35}
                for n in names}
        theta = tune_thresholds(probs, gold, n_types)
        P = np.asarray([probs[n] for n in names])
        for t in range(n_types):
            members = np.array([t in gold[n] for n in names])
            ok &= abs(f1_at(P[:, t], members, theta[t])
                      - exhaustive_best_f1(P[:, t], members)) <= 1e-15
    verdict("threshold-tuning-oracle", ok, "(100 random dev sets)")


def test_criterion_07_determinism(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    typing = tmp_path / "typing.tsv"
    labeled = tmp_path / "labeled.jsonl"
    write_jsonl(corpus, kb_rows())
    typing.write_text(typing_rows())
    write_jsonl(labeled, labeled_rows())

    def run(tag):
        d = tmp_path / tag
        d.mkdir()
        out = {
            "data": d / "data.txe", "vec": d / "pre.vec",
            "model": d / "model.txm", "enc": d / "vectors.tsv",
            "typing": d / "typing.json", "classify": d / "classify.json",
            "nn": d / "nn.tsv",
        }
        common = ["--seed", "11", "--threads", "1"]
        steps = [
            ["build-corpus", "--input", str(corpus), "--output",
             str(out["data"]), "--min-word-count", "1", "--min-entity-count",
             "1", "--min-links", "0"],
            ["pretrain", "--corpus", str(corpus), "--output", str(out["vec"]),
             "--dim", "12", "--window", "3", "--negatives", "4",
             "--min-count", "1", "--epochs", "2"],
            ["train", "--data", str(out["data"]), "--init", str(out["vec"]),
             "--output", str(out["model"]), "--dim", "12", "--negatives", "3",
             "--dropout", "0.2", "--batch-size", "6", "--epochs", "10"],
            ["encode", "--model", str(out["model"]), "--vocab",
             str(out["data"]), "--input", str(corpus), "--output",
             str(out["enc"])],
            ["eval-typing", "--model", str(out["model"]), "--vocab",
             str(out["data"]), "--dataset", str(typing), "--report",
             str(out["typing"]), "--hidden", "12", "--epochs", "6"],
            ["eval-classify", "--model", str(out["model"]), "--vocab",
             str(out["data"]), "--corpus", str(labeled), "--report",
             str(out["classify"]), "--min-count", "1", "--min-score", "0.0",
             "--epochs", "6"],
            ["nn", "--model", str(out["model"]), "--vocab", str(out["data"]),
             "--text", "astro0 astro1", "--top", "4", "--output",
             str(out["nn"])],
        ]
        for argv in steps:
            assert dispatch(argv + common) == 0, argv[0]
        return out

    first = run("run1")
    second = run("run2")
    identical = all(first[k].read_bytes() == second[k].read_bytes()
                    for k in first)

    # embedding file round trip is exact
    rng = np.random.default_rng(12)
    store = VectorStore({f"{ENTITY_TOKEN_PREFIX}n{i}": rng.normal(size=6)
                         for i in range(30)})
    save_vectors(store, tmp_path / "rt.vec")
    loaded = load_vectors(tmp_path / "rt.vec")
    round_trip = all(np.array_equal(loaded[n], v) for n, v in store.items())

    verdict("determinism", identical and round_trip,
            f"(7 subcommands bit-identical={identical}, "
            f"round-trip exact={round_trip})")


def test_criterion_08_classification_sanity():
    rng = np.random.default_rng(88)
    n_classes, per_class, d = 4, 60, 12
    centers = rng.normal(scale=3.0, size=(n_classes, d))
    X, y = [], []
    for k in range(n_classes):
        for _ in range(per_class):
            X.append(centers[k] + rng.normal(scale=0.5, size=d))
            y.append(k)
    X, y = np.asarray(X), np.asarray(y)
    idx = rng.permutation(len(y))
    train_idx, dev_idx, test_idx = idx[:150], idx[150:180], idx[180:]
    fit = train_classifier(X, y, train_idx, dev_idx, n_classes, epochs=60,
                           seed=4)
    accuracy = float(np.mean([classify(X[i], fit.classifier)[0] == y[i]
                              for i in test_idx]))
    curve = fit.dev_accuracy
    snapshot_ok = curve[fit.best_epoch - 1] == max(curve)
    verdict("classification-sanity", accuracy >= 0.95 and snapshot_ok,
            f"(test accuracy {accuracy:.3f}, best epoch {fit.best_epoch} "
            f"is argmax of dev curve: {snapshot_ok})")


def test_criterion_09_pretraining_sanity():
    sentences, cliques = clique_sentences(n_cliques=2, tokens_per_clique=10,
                                          n_sentences=200, sentence_len=12,
                                          seed=9)
    config = SgnsConfig(dim=32, window=3, negatives=5, min_count=1, epochs=5,
                        subsample_threshold=0.0, initial_lr=0.05, seed=17)
    vectors = train_skipgram(sentences, config)
    intra, inter = [], []
    tokens = [t for clique in cliques for t in clique]
    of = {t: k for k, clique in enumerate(cliques) for t in clique}
    for i, t1 in enumerate(tokens):
        for t2 in tokens[i + 1:]:
            sim = cosine(vectors[t1], vectors[t2])
            (intra if of[t1] == of[t2] else inter).append(sim)
    margin = float(np.mean(intra)) - float(np.mean(inter))
    verdict("pretraining-sanity", margin >= 0.2,
            f"(intra {np.mean(intra):.3f}, inter {np.mean(inter):.3f}, "
            f"margin {margin:.3f})")


def test_criterion_10_sampler_statistics():
    rng = np.random.default_rng(1010)
    n_targets, target, k, calls = 50, 7, 100, 10000
    counts = np.zeros(n_targets, dtype=np.int64)
    for _ in range(calls):
        draws = sample_negatives(target, k, n_targets, rng)
        counts += np.bincount(draws, minlength=n_targets)
    total = calls * k
    never_target = counts[target] == 0
    p = 1.0 / (n_targets - 1)
    sigma = math.sqrt(total * p * (1 - p))
    others = np.delete(counts, target)
    uniform_ok = bool(np.all(np.abs(others - total * p) <= 3 * sigma))

    weights = rng.integers(1, 500, size=40)
    table = build_sampling_table(weights, power=0.75)
    draws = table.sample(rng, 10 ** 6)
    freq = np.bincount(draws, minlength=40)
    probs = table.probabilities
    sigmas = np.sqrt(10 ** 6 * probs * (1 - probs))
    unigram_ok = bool(np.all(np.abs(freq - 10 ** 6 * probs) <= 3 * sigmas))

    verdict("sampler-statistics", never_target and uniform_ok and unigram_ok,
            f"(target never drawn={never_target}, uniform within 3 sigma="
            f"{uniform_ok}, unigram^0.75 within 3 sigma={unigram_ok})")
