"""One-vs-rest soft-margin SVMs with an RBF kernel, trained by SMO.

The binary solver follows the classic SMO decomposition with second-order
working-set selection: pick the maximal violating index ``i``, then the
``j`` giving the largest guaranteed decrease of the dual objective, solve
the two-variable subproblem analytically and clip to the box.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import DimensionMismatch, NoConvergence, SingleClass
from ..nn import softmax
from .linear import encode_labels
from .model import Model, Normalizer

TAU = 1e-12
DENSE_KERNEL_LIMIT = 4000


@dataclass
class SvmConfig:
    C: float = 1.0
    gamma: float | None = None      # None: 1 / (d * var(X))
    tol: float = 1e-3
    max_iter_factor: int = 100
    cache_columns: int = 2000


def rbf_kernel(A, B, gamma):
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(d2, 0.0))


class _KernelColumns:
    """Kernel columns, precomputed for small problems and LRU-cached otherwise."""

    def __init__(self, X, gamma, cache_columns):
        self.X, self.gamma = X, gamma
        self.full = rbf_kernel(X, X, gamma) if len(X) <= DENSE_KERNEL_LIMIT else None
        self.cache = OrderedDict()
        self.limit = cache_columns

    def __call__(self, i):
        if self.full is not None:
            return self.full[:, i]
        col = self.cache.get(i)
        if col is None:
            col = rbf_kernel(self.X, self.X[i:i + 1], self.gamma)[:, 0]
            self.cache[i] = col
            if len(self.cache) > self.limit:
                self.cache.popitem(last=False)
        else:
            self.cache.move_to_end(i)
        return col


@dataclass
class BinarySvm:
    alpha: np.ndarray
    rho: float
    iterations: int
    gap: float


def smo_binary(kernel, y, C=1.0, tol=1e-3, max_iter=None):
    """Solve the soft-margin dual for labels ``y`` in {-1, +1}.

    ``kernel(i)`` returns column ``i`` of the kernel matrix. Stops when the
    maximal KKT violation ``m - M`` drops below ``tol``.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.shape[0]
    max_iter = 100 * n if max_iter is None else max_iter
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.ones(n)   # RBF kernel has unit diagonal
    pos = y > 0
    it = 0
    while True:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (pos & (alpha > 0)) | (~pos & (alpha < C))
        minus_yg = -y * G
        if not up.any() or not low.any():
            gap = 0.0
            break
        score_up = np.where(up, minus_yg, -np.inf)
        i = int(np.argmax(score_up))
        m = score_up[i]
        M = np.min(np.where(low, minus_yg, np.inf))
        gap = m - M
        if gap < tol:
            break
        if it >= max_iter:
            raise NoConvergence(f"SMO did not reach tolerance {tol} in {max_iter} iterations "
                                f"(gap {gap:.3g})")
        Ki = kernel(i)
        b = m - minus_yg
        cand = low & (b > 0)
        quad = diag[i] + diag - 2.0 * Ki
        quad = np.where(quad > 0, quad, TAU)
        obj = np.where(cand, -(b * b) / quad, np.inf)
        j = int(np.argmin(obj))
        Kj = kernel(j)
        yi, yj = y[i], y[j]
        Qij = yi * yj * Ki[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if yi != yj:
            q = diag[i] + diag[j] + 2.0 * Qij
            q = q if q > 0 else TAU
            delta = (-G[i] - G[j]) / q
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:   # C_i - C_j == 0
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            q = diag[i] + diag[j] - 2.0 * Qij
            q = q if q > 0 else TAU
            delta = (G[i] - G[j]) / q
            s = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if s > C:
                if ai > C:
                    ai, aj = C, s - C
            elif aj < 0:
                aj, ai = 0.0, s
            if s > C:
                if aj > C:
                    aj, ai = C, s - C
            elif ai < 0:
                ai, aj = 0.0, s
        alpha[i], alpha[j] = ai, aj
        G += y * (yi * (ai - ai_old) * Ki + yj * (aj - aj_old) * Kj)
        it += 1
    return BinarySvm(alpha, _rho(alpha, y, G, C), it, float(gap))


def _rho(alpha, y, G, C):
    yG = y * G
    at_upper = alpha >= C
    at_lower = alpha <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        return float(yG[free].mean())
    ub_set = (at_upper & (y < 0)) | (at_lower & (y > 0))
    lb_set = (at_upper & (y > 0)) | (at_lower & (y < 0))
    ub = yG[ub_set].min() if ub_set.any() else np.inf
    lb = yG[lb_set].max() if lb_set.any() else -np.inf
    return float((ub + lb) / 2.0)


def default_gamma(X):
    X = np.asarray(X, dtype=np.float64)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def train_svm_ovr(X, y, cfg: SvmConfig = None, feature_kind="is09"):
    cfg = cfg or SvmConfig()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != len(y):
        raise DimensionMismatch("SVM needs an (n, d) matrix with n labels")
    targets, labels = encode_labels(y)
    if len(labels) < 2:
        raise SingleClass("need at least two classes")
    norm = Normalizer.fit(X)
    Xn = norm.apply(X)
    gamma = cfg.gamma if cfg.gamma is not None else default_gamma(Xn)
    kernel = _KernelColumns(Xn, gamma, cfg.cache_columns)
    coefs, rhos, info = [], [], []
    for k in range(len(labels)):
        yk = np.where(targets == k, 1.0, -1.0)
        sol = smo_binary(kernel, yk, cfg.C, cfg.tol, cfg.max_iter_factor * len(yk))
        coefs.append(sol.alpha * yk)
        rhos.append(sol.rho)
        info.append({"iterations": sol.iterations, "gap": sol.gap,
                     "support_vectors": int(np.count_nonzero(sol.alpha))})
    coef = np.array(coefs)
    keep = np.any(coef != 0, axis=0)
    params = {"svm.sv": Xn[keep], "svm.coef": coef[:, keep], "svm.rho": np.array(rhos)}
    model = Model("svm", feature_kind, labels, params, norm,
                  arch={"input_size": X.shape[1], "num_classes": len(labels),
                        "gamma": float(np.float32(gamma)), "C": cfg.C},
                  config=asdict(cfg))
    model.history = {"binary": info}
    return model.finalize()


def svm_decision(model, X):
    Xn = model.normalizer.apply(np.atleast_2d(X))
    K = rbf_kernel(Xn, model.params["svm.sv"], model.arch["gamma"])
    return K @ model.params["svm.coef"].T - model.params["svm.rho"]


def svm_proba(model, X):
    """Softmax over decision values; an uncalibrated confidence score."""
    return softmax(svm_decision(model, X))
