"""Emotion classifiers: logistic regression, one-vs-rest RBF SVM and
stacked LSTMs (plain, frozen-trunk fine-tuned, multi-task)."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .linear import LogRegConfig, logreg_proba, train_logreg
from .model import EmotionModel, Model, MtlModel, Normalizer, check_kind, infer_feature_kind
from .recurrent import (LstmConfig, finetune_frozen, recurrent_proba, train_lstm,
                        train_multitask, trunk_names)
from .svm import SvmConfig, svm_decision, svm_proba, train_svm_ovr

__all__ = [
    "LogRegConfig", "LstmConfig", "SvmConfig", "Model", "EmotionModel", "MtlModel",
    "Normalizer", "Prediction", "finetune_frozen", "predict", "predict_proba",
    "svm_decision", "train_logreg", "train_lstm", "train_multitask", "train_svm_ovr",
    "trunk_names",
]


class Prediction(NamedTuple):
    emotion: str
    confidence: float
    language: str | None = None
    language_confidence: float | None = None


def predict_proba(model: Model, X, kind=None):
    """(emotion probabilities (n, K), language probabilities (n, L) or None).

    SVM probabilities are a softmax over decision values, not calibrated.
    """
    X = np.asarray(X, dtype=np.float64)
    kind = check_kind(model, X, kind)
    single = X.ndim == (1 if kind == "is09" else 2)
    if single:
        X = X[None]
    if model.variant == "logreg":
        probs, lang = logreg_proba(model, X), None
    elif model.variant == "svm":
        probs, lang = svm_proba(model, X), None
    else:
        probs, lang = recurrent_proba(model, X)
    return probs, lang


def predict(model: Model, X, kind=None):
    """Argmax predictions; ties go to the lowest class index.

    Returns one :class:`Prediction` for a single example, else a list.
    """
    X = np.asarray(X, dtype=np.float64)
    kind = kind or infer_feature_kind(X)
    single = X.ndim == (1 if kind == "is09" else 2)
    probs, lang = predict_proba(model, X, kind)
    out = []
    for n in range(probs.shape[0]):
        k = int(np.argmax(probs[n]))
        if lang is None:
            out.append(Prediction(model.labels[k], float(probs[n, k])))
        else:
            j = int(np.argmax(lang[n]))
            out.append(Prediction(model.labels[k], float(probs[n, k]),
                                  model.languages[j], float(lang[n, j])))
    return out[0] if single else out
