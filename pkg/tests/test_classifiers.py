import numpy as np
import pytest

from serkit.cache import extract_records
from serkit.classifiers import (LogRegConfig, LstmConfig, Model, Normalizer, finetune_frozen,
                                predict, predict_proba, train_logreg, train_lstm,
                                train_multitask, train_svm_ovr, trunk_names)
from serkit.classifiers.svm import rbf_kernel, smo_binary
from serkit.corpus import SplitSpec, SynthConfig, generate_synthetic_corpus, load_manifest, \
    split_speaker_disjoint
from serkit.errors import (FeatureKindMismatch, LabelMismatch, ShapeMismatch, SingleClass,
                           VariantMismatch)

SMALL = dict(hidden_size=8, num_layers=1, epochs=3, batch_size=8)


def blobs(n=200, d=10, sep=6.0, seed=0):
    rng = np.random.default_rng(seed)
    y = np.array(["anger", "sad"] * (n // 2))
    X = rng.normal(size=(n, d))
    X[y == "anger", 0] += sep
    return X, y


def xor(n=200, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[1, 1], [-1, -1], [1, -1], [-1, 1]], dtype=float)
    k = np.arange(n) % 4
    X = centers[k] + 0.2 * rng.normal(size=(n, 2))
    y = np.where(k < 2, "happy", "neutral")
    return X, y


# --- logistic regression --------------------------------------------------------

def test_logreg_blobs_and_descent():
    X, y = blobs()
    m = train_logreg(X, y)
    acc = np.mean([p.emotion for p in predict(m, X, "is09")] == y)
    assert acc >= 0.99
    assert m.history["final_loss"] <= m.history["initial_loss"]


def test_logreg_errors():
    X, y = blobs(20)
    with pytest.raises(SingleClass):
        train_logreg(X, ["sad"] * 20)
    with pytest.raises(Exception):
        train_logreg(X, y[:10])


def test_zero_weight_logreg_tie_break():
    m = Model("logreg", "is09", ("anger", "happy", "sad"),
              {"head.W": np.zeros((3, 384)), "head.b": np.zeros(3)},
              Normalizer(np.zeros(384), np.ones(384)))
    x = np.random.default_rng(0).normal(size=384)
    p = predict(m, x)
    assert p.emotion == "anger" and p.confidence == pytest.approx(1 / 3)
    probs, _ = predict_proba(m, x[None])
    assert np.allclose(probs, 1 / 3)


def test_feature_kind_mismatch():
    m = Model("logreg", "is09", ("anger", "sad"),
              {"head.W": np.zeros((2, 384)), "head.b": np.zeros(2)},
              Normalizer(np.zeros(384), np.ones(384)))
    with pytest.raises(FeatureKindMismatch):
        predict(m, np.zeros((120, 13)))


def test_normalizer_leakage_sentinel():
    X, y = blobs(100)
    train, test = X[:60], X[60:] + 3.0
    m = train_logreg(train, y[:60])
    fitted = Normalizer.fit(train)
    assert np.array_equal(m.normalizer.mean, fitted.mean)
    pooled = Normalizer.fit(np.vstack([train, test]))
    assert not np.allclose(pooled.mean, fitted.mean)


# --- SVM ------------------------------------------------------------------------

def _kkt(X, y, gamma, C, sol):
    K = rbf_kernel(X, X, gamma)
    f = K @ (sol.alpha * y) - sol.rho
    margin = y * f
    a = sol.alpha
    res = np.zeros_like(a)
    lo, hi = a <= 1e-12, a >= C - 1e-12
    mid = ~lo & ~hi
    res[lo] = np.maximum(0, 1 - margin[lo])
    res[hi] = np.maximum(0, margin[hi] - 1)
    res[mid] = np.abs(margin[mid] - 1)
    G = (y[:, None] * y[None, :] * K) @ a - 1.0
    up = ((y > 0) & (a < C)) | ((y < 0) & (a > 0))
    low = ((y > 0) & (a > 0)) | ((y < 0) & (a < C))
    gap = np.max(-y[up] * G[up]) - np.min(-y[low] * G[low])
    return res.max(), gap


def test_svm_separable_kkt():
    X, labels = blobs(120, d=4, sep=8.0, seed=3)
    m = train_svm_ovr(X, labels)
    assert np.mean([p.emotion for p in predict(m, X, "is09")] == labels) == 1.0
    Xn = m.normalizer.apply(X)
    gamma = m.arch["gamma"]
    y = np.where(labels == "anger", 1.0, -1.0)
    sol = smo_binary(lambda i: rbf_kernel(Xn, Xn[i:i + 1], gamma)[:, 0], y, 1.0, 1e-3)
    worst, gap = _kkt(Xn, y, gamma, 1.0, sol)
    assert gap <= 1e-3
    assert worst <= 1e-3
    assert np.all((sol.alpha >= 0) & (sol.alpha <= 1.0)) and abs(sol.alpha @ y) < 1e-9


def test_svm_xor_beats_linear():
    X, y = xor()
    svm = train_svm_ovr(X, y)
    lin = train_logreg(X, y)
    acc_svm = np.mean([p.emotion for p in predict(svm, X, "is09")] == y)
    acc_lin = np.mean([p.emotion for p in predict(lin, X, "is09")] == y)
    assert acc_svm >= 0.95 and acc_lin <= 0.6


def test_svm_conflicting_duplicates_terminate():
    X, y = blobs(40, d=3, seed=4)
    X = np.vstack([X, X[:1], X[:1]])
    y = np.concatenate([y, ["anger", "sad"]])
    m = train_svm_ovr(X, y)
    probs, _ = predict_proba(m, X, "is09")
    assert np.allclose(probs.sum(axis=1), 1.0)


# --- LSTM -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def k2_corpus(tmp_path_factory):
    manifest = generate_synthetic_corpus(
        SynthConfig(classes=2, languages=1, speakers=3, utterances=50, seed=21),
        tmp_path_factory.mktemp("k2"))
    recs = load_manifest(manifest)
    cache = extract_records(recs, ("mfcc_seq",))
    train, test, _ = split_speaker_disjoint(recs, SplitSpec("synthetic", [], 0))
    return (cache.matrix(train, "mfcc_seq"), np.array([r.emotion for r in train]),
            cache.matrix(test, "mfcc_seq"), np.array([r.emotion for r in test]))


def _acc(model, X, y):
    return float(np.mean([p.emotion for p in predict(model, X, "mfcc_seq")] == y))


@pytest.mark.slow
def test_lstm_learns_two_classes(k2_corpus):
    Xtr, ytr, Xte, yte = k2_corpus
    m = train_lstm(Xtr, ytr, LstmConfig(hidden_size=32, epochs=50))
    assert _acc(m, Xte, yte) >= 0.9
    probs, _ = predict_proba(m, Xte)
    assert np.allclose(probs.sum(axis=1), 1.0)


@pytest.mark.slow
def test_lstm_shuffled_labels_near_chance(k2_corpus):
    Xtr, ytr, Xte, yte = k2_corpus
    accs = []
    for seed in range(5):
        y_perm = np.random.default_rng(100 + seed).permutation(ytr)
        m = train_lstm(Xtr, y_perm, LstmConfig(hidden_size=16, num_layers=1, seed=seed))
        accs.append(_acc(m, Xte, yte))
    assert all(0.3 <= a <= 0.7 for a in accs), accs


def test_lstm_shape_and_class_errors(tiny_corpus):
    _, recs, cache = tiny_corpus
    X = cache.matrix(recs, "mfcc_seq")
    y = [r.emotion for r in recs]
    with pytest.raises(ShapeMismatch):
        train_lstm(X[:, :100], y, LstmConfig(**SMALL))
    with pytest.raises(SingleClass):
        train_lstm(X, ["sad"] * len(y), LstmConfig(**SMALL))


def test_lstm_deterministic(tiny_corpus):
    _, recs, cache = tiny_corpus
    X = cache.matrix(recs, "mfcc_seq")
    y = [r.emotion for r in recs]
    a = train_lstm(X, y, LstmConfig(**SMALL, seed=3))
    b = train_lstm(X, y, LstmConfig(**SMALL, seed=3))
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


def test_is09_lstm_length_one(tiny_corpus):
    _, recs, cache = tiny_corpus
    m = train_lstm(cache.matrix(recs, "is09"), [r.emotion for r in recs],
                   LstmConfig(**SMALL), feature_kind="is09")
    assert len(predict(m, cache.matrix(recs[:3], "is09"), "is09")) == 3


# --- fine-tuning ----------------------------------------------------------------

@pytest.fixture(scope="module")
def base_model(tiny_corpus):
    _, recs, cache = tiny_corpus
    X = cache.matrix(recs, "mfcc_seq")
    y = [r.emotion for r in recs]
    return train_lstm(X, y, LstmConfig(**SMALL, penultimate=6)), X, y


def test_finetune_freezes_trunk(base_model):
    base, X, y = base_model
    tuned = finetune_frozen(base, X, y, LstmConfig(**SMALL, val_fraction=0.0))
    for k in trunk_names(base.params):
        assert tuned.params[k].tobytes() == base.params[k].tobytes()
    assert not np.array_equal(tuned.params["pen.W"], base.params["pen.W"])
    assert np.array_equal(tuned.params["head.W"], base.params["head.W"])
    head = finetune_frozen(base, X, y, LstmConfig(**SMALL, val_fraction=0.0, train_head=True))
    assert not np.array_equal(head.params["head.W"], base.params["head.W"])


def test_finetune_zero_epochs_identity(base_model):
    base, X, y = base_model
    same = finetune_frozen(base, X, y, LstmConfig(**{**SMALL, "epochs": 0}))
    assert all(same.params[k].tobytes() == base.params[k].tobytes() for k in base.params)
    assert np.array_equal(same.normalizer.mean, base.normalizer.mean)


def test_finetune_errors(base_model, tiny_corpus):
    base, X, y = base_model
    with pytest.raises(LabelMismatch):
        finetune_frozen(base, X, ["fear"] * len(y))
    lin = train_logreg(tiny_corpus[2].matrix(tiny_corpus[1], "is09"), y)
    with pytest.raises(VariantMismatch):
        finetune_frozen(lin, X, y)


# --- multi-task -----------------------------------------------------------------

def test_mtl_lambda_zero_matches_single(bilingual_tiny):
    _, recs, cache = bilingual_tiny
    X = cache.matrix(recs, "mfcc_seq")
    y = [r.emotion for r in recs]
    lang = [r.language for r in recs]
    cfg = LstmConfig(**SMALL, seed=4, lambda_lang=0.0)
    single = train_lstm(X, y, cfg)
    mtl = train_multitask(X, y, lang, cfg)
    for k in single.params:
        assert mtl.params[k].tobytes() == single.params[k].tobytes()
    assert mtl.history["emotion_loss"] == single.history["emotion_loss"]


def test_mtl_fits_and_probabilities(bilingual_tiny):
    _, recs, cache = bilingual_tiny
    X = cache.matrix(recs, "mfcc_seq")
    y = np.array([r.emotion for r in recs])
    lang = np.array([r.language for r in recs])
    m = train_multitask(X, y, lang, LstmConfig(hidden_size=16, num_layers=1, epochs=60,
                                               val_fraction=0.0, lr=1e-2, batch_size=8))
    preds = predict(m, X, "mfcc_seq")
    fitted = [i for i, p in enumerate(preds) if p.emotion == y[i] and p.language == lang[i]]
    assert len(fitted) >= 0.9 * len(y)
    one = predict(m, X[fitted[0]])
    assert (one.emotion, one.language) == (y[fitted[0]], lang[fitted[0]])
    pe, pl = predict_proba(m, X)
    assert np.allclose(pe.sum(axis=1), 1.0) and np.allclose(pl.sum(axis=1), 1.0)


def test_mtl_errors(bilingual_tiny):
    _, recs, cache = bilingual_tiny
    X = cache.matrix(recs, "mfcc_seq")
    y = [r.emotion for r in recs]
    with pytest.raises(LabelMismatch):
        train_multitask(X, y, ["synthA"] * (len(y) - 1), LstmConfig(**SMALL))
    with pytest.raises(SingleClass):
        train_multitask(X, y, ["synthA"] * len(y), LstmConfig(**SMALL))
