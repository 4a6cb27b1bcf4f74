"""Multinomial logistic regression by full-batch gradient descent."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DimensionMismatch, SingleClass
from ..nn import softmax
from .model import Model, Normalizer


@dataclass
class LogRegConfig:
    l2: float = 1e-4
    tol: float = 1e-5
    max_iter: int = 10000


def encode_labels(y, labels=None):
    from ..corpus import EMOTIONS
    y = [str(v) for v in y]
    if labels is None:
        present = set(y)
        labels = tuple([e for e in EMOTIONS if e in present] + sorted(present - set(EMOTIONS)))
    index = {lab: i for i, lab in enumerate(labels)}
    return np.array([index[v] for v in y], dtype=np.int64), tuple(labels)


def _loss_grad(W, Xb, Y, l2):
    n = Xb.shape[0]
    P = softmax(Xb @ W.T)
    loss = -np.mean(np.log(np.maximum(P[Y.astype(bool)], 1e-300)))
    G = (P - Y).T @ Xb / n
    reg = W.copy()
    reg[:, -1] = 0.0   # bias column is not penalized
    return loss + 0.5 * l2 * np.sum(reg * reg), G + l2 * reg


def train_logreg(X, y, cfg: LogRegConfig = None, feature_kind="is09"):
    cfg = cfg or LogRegConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch("logistic regression needs a 2-D feature matrix")
    if X.shape[0] != len(y):
        raise DimensionMismatch(f"{X.shape[0]} feature rows vs {len(y)} labels")
    targets, labels = encode_labels(y)
    if len(labels) < 2:
        raise SingleClass("need at least two classes")
    norm = Normalizer.fit(X)
    Xb = np.hstack([norm.apply(X), np.ones((X.shape[0], 1))])
    Y = np.eye(len(labels))[targets]
    # Boehning bound on the softmax Hessian gives a safe constant step
    lipschitz = 0.5 * np.linalg.eigvalsh(Xb.T @ Xb / Xb.shape[0])[-1] + cfg.l2
    step = 1.0 / lipschitz
    W = np.zeros((len(labels), Xb.shape[1]))
    loss0, grad = _loss_grad(W, Xb, Y, cfg.l2)
    loss, it = loss0, 0
    while it < cfg.max_iter and np.linalg.norm(grad) >= cfg.tol:
        W -= step * grad
        loss, grad = _loss_grad(W, Xb, Y, cfg.l2)
        it += 1
    model = Model("logreg", feature_kind, labels,
                  {"head.W": W[:, :-1].copy(), "head.b": W[:, -1].copy()}, norm,
                  arch={"input_size": X.shape[1], "num_classes": len(labels)},
                  config=asdict(cfg))
    model.history = {"initial_loss": loss0, "final_loss": loss, "iterations": it,
                     "grad_norm": float(np.linalg.norm(grad))}
    return model.finalize()


def logreg_proba(model, X):
    Z = model.normalizer.apply(X) @ model.params["head.W"].T + model.params["head.b"]
    return softmax(Z)
