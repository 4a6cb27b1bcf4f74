"""Stacked-LSTM emotion classifiers, frozen-trunk fine-tuning and the
multi-task (emotion + language) variant.

Every recurrent model reads the final top-layer hidden state of the trunk.
The emotion path is ``[penultimate dense + ReLU] -> head``; the multi-task
model adds a ``lang`` head reading the same hidden state.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import LabelMismatch, NumericFailure, ShapeMismatch, SingleClass, VariantMismatch
from ..nn import (Adam, dense_backward, dense_forward, init_dense, init_lstm, lstm_backward,
                  lstm_forward, softmax, softmax_xent)
from .linear import encode_labels
from .model import Model, Normalizer, frame_mask

TRUNK_PREFIX = "lstm"


@dataclass
class LstmConfig:
    hidden_size: int = 128
    num_layers: int = 2
    penultimate: int = 0          # 0: no extra dense layer; transfer bases use 64
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    patience: int = 5
    val_fraction: float = 0.1
    seed: int = 0
    lambda_lang: float = 1.0
    train_head: bool = False      # fine-tuning: also update the softmax head
    refit_normalizer: bool = False  # fine-tuning: input statistics from the target train split


def _streams(seed):
    """Independent RNGs for trunk init, emotion head init, language head init, data order."""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def _as_sequences(X, feature_kind):
    X = np.asarray(X, dtype=np.float64)
    if feature_kind == "is09":
        if X.ndim != 2:
            raise ShapeMismatch("IS09 input must be (n, 384)")
        return X[:, None, :], np.ones((X.shape[0], 1), dtype=bool)
    if X.ndim != 3:
        raise ShapeMismatch("sequence input must be (n, frames, coefficients)")
    return X, frame_mask(X)


def _prepare(model_or_norm, X, feature_kind):
    seqs, mask = _as_sequences(X, feature_kind)
    return model_or_norm.apply(seqs, mask)


# ---------------------------------------------------------------------------
# forward / backward for the composed networks

def _emotion_from_hidden(params, h, has_pen):
    cache = {"h": h}
    a = h
    if has_pen:
        pre = dense_forward(h, params, "pen")
        a = np.maximum(pre, 0.0)
        cache["pre"] = pre
    cache["a"] = a
    return dense_forward(a, params, "head"), cache


def _emotion_backward(params, cache, dlogits, has_pen):
    grads, da = dense_backward(cache["a"], dlogits, params, "head")
    if not has_pen:
        return grads, da
    dpre = da * (cache["pre"] > 0)
    g, dh = dense_backward(cache["h"], dpre, params, "pen")
    grads.update(g)
    return grads, dh


def forward_logits(params, arch, seqs):
    """Emotion logits and, for multi-task models, language logits."""
    _, h, _ = lstm_forward(seqs, params, TRUNK_PREFIX)
    logits, _ = _emotion_from_hidden(params, h, arch.get("penultimate", 0) > 0)
    lang = dense_forward(h, params, "lang") if "lang.W" in params else None
    return logits, lang


def _make_step(arch, lam):
    has_pen = arch.get("penultimate", 0) > 0

    def step(params, seqs, y, y_lang=None, need_grads=True):
        _, h, cache = lstm_forward(seqs, params, TRUNK_PREFIX)
        logits, ecache = _emotion_from_hidden(params, h, has_pen)
        loss, dlogits = softmax_xent(logits, y)
        parts = {"emotion": loss}
        if y_lang is not None:
            lang_logits = dense_forward(h, params, "lang")
            lang_loss, dlang = softmax_xent(lang_logits, y_lang)
            parts["language"] = lang_loss
            if lam:
                loss = loss + lam * lang_loss
        if not need_grads:
            return loss, parts, None
        grads, dh = _emotion_backward(params, ecache, dlogits, has_pen)
        if y_lang is not None:
            g, dh_lang = dense_backward(h, lam * dlang, params, "lang")
            grads.update(g)
            if lam:
                dh = dh + dh_lang
        grads.update(lstm_backward(cache, params, d_final=dh)[0])
        return loss, parts, grads

    return step


# ---------------------------------------------------------------------------
# training loop

def _split_validation(n, frac, rng):
    order = rng.permutation(n)
    n_val = int(round(frac * n)) if n >= 10 else 0
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def fit(params, step, seqs, targets, cfg: LstmConfig, rng, trainable=None, lang_targets=None):
    """Mini-batch Adam with early stopping on a held-out slice of the data.

    ``step(params, seqs, y, y_lang, need_grads)`` returns (loss, parts,
    grads). Only names in ``trainable`` (default: all) are updated. The
    returned parameters are those with the lowest validation loss seen,
    the untrained starting point included.
    """
    trainable = sorted(params if trainable is None else trainable)
    tr, va = _split_validation(len(targets), cfg.val_fraction, rng)
    opt = Adam(lr=cfg.lr)
    history = {"train_loss": [], "val_loss": [], "emotion_loss": [], "language_loss": []}

    def val_loss():
        if len(va) == 0:
            return np.inf
        yl = None if lang_targets is None else lang_targets[va]
        return step(params, seqs[va], targets[va], yl, need_grads=False)[0]

    best, best_params, since = val_loss(), copy.deepcopy(params), 0
    n_step = 0
    for epoch in range(cfg.epochs):
        order = tr[rng.permutation(len(tr))]
        total, parts_sum, count = 0.0, {}, 0
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            yl = None if lang_targets is None else lang_targets[idx]
            loss, parts, grads = step(params, seqs[idx], targets[idx], yl)
            n_step += 1
            if not np.isfinite(loss):
                raise NumericFailure(f"non-finite loss at optimizer step {n_step}")
            opt.step(params, {k: grads[k] for k in trainable})
            total += loss * len(idx)
            for k, v in parts.items():
                parts_sum[k] = parts_sum.get(k, 0.0) + v * len(idx)
            count += len(idx)
        history["train_loss"].append(total / count)
        history["emotion_loss"].append(parts_sum["emotion"] / count)
        if "language" in parts_sum:
            history["language_loss"].append(parts_sum["language"] / count)
        current = val_loss()
        history["val_loss"].append(current)
        if len(va) == 0 or current < best:
            best, best_params, since = current, copy.deepcopy(params), 0
        else:
            since += 1
            if since >= cfg.patience:
                break
    history["best_val_loss"] = best
    history["epochs_run"] = len(history["train_loss"])
    return best_params, history


def _init_params(arch, streams, with_lang=False):
    trunk_rng, head_rng, lang_rng, _ = streams
    params = init_lstm(trunk_rng, arch["input_size"], arch["hidden_size"], arch["num_layers"],
                       TRUNK_PREFIX)
    top = arch["hidden_size"]
    if arch.get("penultimate", 0) > 0:
        params.update(init_dense(head_rng, top, arch["penultimate"], "pen"))
        top = arch["penultimate"]
    params.update(init_dense(head_rng, top, arch["num_classes"], "head"))
    if with_lang:
        params.update(init_dense(lang_rng, arch["hidden_size"], arch["num_languages"], "lang"))
    return params


def _setup(X, y, cfg, feature_kind):
    seqs, mask = _as_sequences(X, feature_kind)
    if feature_kind == "mfcc_seq" and seqs.shape[1:] != (120, 13):
        raise ShapeMismatch(f"MFCC sequences must be (120, 13), got {seqs.shape[1:]}")
    if seqs.shape[0] != len(y):
        raise ShapeMismatch(f"{seqs.shape[0]} sequences vs {len(y)} labels")
    targets, labels = encode_labels(y)
    if len(labels) < 2:
        raise SingleClass("need at least two classes")
    norm = Normalizer.fit(seqs, mask)
    arch = {"input_size": seqs.shape[2], "hidden_size": cfg.hidden_size,
            "num_layers": cfg.num_layers, "penultimate": cfg.penultimate,
            "num_classes": len(labels), "seq_len": seqs.shape[1]}
    return norm.apply(seqs, mask), targets, labels, norm, arch


def train_lstm(X, y, cfg: LstmConfig = None, feature_kind="mfcc_seq"):
    """Train trunk and head end to end; IS09 vectors become length-1 sequences."""
    cfg = cfg or LstmConfig()
    seqs, targets, labels, norm, arch = _setup(X, y, cfg, feature_kind)
    streams = _streams(cfg.seed)
    params = _init_params(arch, streams)
    params, history = fit(params, _make_step(arch, 0.0), seqs, targets, cfg, streams[3])
    model = Model("lstm", feature_kind, labels, params, norm, arch=arch,
                  config=asdict(cfg), history=history)
    return model.finalize()


def train_multitask(X, y_emotion, y_language, cfg: LstmConfig = None, feature_kind="mfcc_seq"):
    """Shared trunk with emotion and language heads; loss = xent_e + lambda * xent_lang.

    With the same seed, data and ``lambda_lang = 0`` the trunk and emotion
    head follow exactly the :func:`train_lstm` trajectory.
    """
    cfg = cfg or LstmConfig()
    if len(y_emotion) != len(y_language):
        raise LabelMismatch(f"{len(y_emotion)} emotion labels vs {len(y_language)} language labels")
    if len(y_language) == 0:
        raise LabelMismatch("empty label vectors")
    if cfg.lambda_lang < 0:
        raise ValueError("lambda_lang must be >= 0")
    seqs, targets, labels, norm, arch = _setup(X, y_emotion, cfg, feature_kind)
    languages = tuple(sorted({str(v) for v in y_language}))
    lang_targets = np.array([languages.index(str(v)) for v in y_language])
    if len(languages) < 2:
        raise SingleClass("need at least two languages")
    arch["num_languages"] = len(languages)
    streams = _streams(cfg.seed)
    params = _init_params(arch, streams, with_lang=True)
    params, history = fit(params, _make_step(arch, cfg.lambda_lang), seqs, targets, cfg,
                          streams[3], lang_targets=lang_targets)
    model = Model("mtl", feature_kind, labels, params, norm, arch=arch, languages=languages,
                  config=asdict(cfg), history=history)
    return model.finalize()


def trunk_names(params):
    return sorted(k for k in params if k.startswith(TRUNK_PREFIX))


def finetune_frozen(base: Model, X, y, cfg: LstmConfig = None):
    """Fine-tune the dense layers of an LSTM model with its trunk frozen.

    Only ``pen.*`` is trained unless ``cfg.train_head`` is set, in which case
    the softmax head is trained as well. With ``cfg.refit_normalizer`` the
    input statistics are refitted on the target training data; otherwise
    the base normalizer is kept. The trunk output is computed once since
    it cannot change.
    """
    cfg = cfg or LstmConfig()
    if base.variant != "lstm":
        raise VariantMismatch(f"fine-tuning needs an lstm model, got {base.variant}")
    has_pen = base.arch.get("penultimate", 0) > 0
    trainable = ([k for k in base.params if k.startswith("pen.")] if has_pen else [])
    if cfg.train_head or not has_pen:
        trainable += ["head.W", "head.b"]
    index = {lab: i for i, lab in enumerate(base.labels)}
    unknown = sorted({str(v) for v in y} - set(index))
    if unknown:
        raise LabelMismatch(f"labels not known to the base model: {unknown}")
    targets = np.array([index[str(v)] for v in y])
    raw, mask = _as_sequences(X, base.feature_kind)
    norm = Normalizer.fit(raw, mask) if cfg.refit_normalizer else base.normalizer
    seqs = norm.apply(raw, mask)
    params = copy.deepcopy(base.params)
    _, hidden, _ = lstm_forward(seqs, params, TRUNK_PREFIX)

    def step(p, h, t, _lang=None, need_grads=True):
        logits, ecache = _emotion_from_hidden(p, h, has_pen)
        loss, dlogits = softmax_xent(logits, t)
        if not need_grads:
            return loss, {"emotion": loss}, None
        grads, _ = _emotion_backward(p, ecache, dlogits, has_pen)
        return loss, {"emotion": loss}, grads

    rng = _streams(cfg.seed)[3]
    tuned, history = fit(params, step, hidden, targets, cfg, rng, trainable=trainable)
    for k in trunk_names(base.params):
        tuned[k] = base.params[k]
    model = Model("lstm", base.feature_kind, base.labels, tuned, norm,
                  arch=dict(base.arch), config={**base.config, "finetune": asdict(cfg)},
                  history=history)
    return model.finalize()


def recurrent_proba(model: Model, X):
    seqs = _prepare(model.normalizer, X, model.feature_kind)
    logits, lang = forward_logits(model.params, model.arch, seqs)
    return softmax(logits), (None if lang is None else softmax(lang))
