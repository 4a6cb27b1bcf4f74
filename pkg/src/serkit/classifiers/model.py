from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FeatureKindMismatch
from ..features import IS09_DIM, NUM_CEPS, NUM_FRAMES

VARIANTS = ("logreg", "svm", "lstm", "mtl")
STD_FLOOR = 1e-8


def as_f32_exact(a):
    """Round to float32 precision but keep float64 storage.

    Trained models are finalized this way so that serializing their
    parameters as float32 loses nothing and reloaded models predict
    bit-for-bit the same.
    """
    return np.asarray(a, dtype=np.float64).astype(np.float32).astype(np.float64)


@dataclass
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X, mask=None):
        """Per-dimension statistics over the last axis.

        For sequences pass ``mask`` (selecting valid, non-padding frames)
        so padding rows do not pull the statistics toward zero.
        """
        X = np.asarray(X, dtype=np.float64)
        rows = X.reshape(-1, X.shape[-1])
        if mask is not None:
            rows = rows[np.asarray(mask).reshape(-1)]
        mean = rows.mean(axis=0)
        std = np.maximum(rows.std(axis=0), STD_FLOOR)
        return cls(as_f32_exact(mean), as_f32_exact(std))

    def apply(self, X, mask=None):
        X = np.asarray(X, dtype=np.float64)
        out = (X - self.mean) / self.std
        if mask is not None:
            out = np.where(np.asarray(mask)[..., None], out, 0.0)
        return out


def frame_mask(seqs):
    """True for frames holding audio; trailing all-zero rows are padding."""
    seqs = np.asarray(seqs)
    nonzero = np.any(seqs != 0, axis=-1)
    # padding is only ever appended, so a frame is valid if any later frame is
    return np.flip(np.logical_or.accumulate(np.flip(nonzero, axis=-1), axis=-1), axis=-1)


@dataclass
class Model:
    """A trained classifier of any variant.

    ``params`` maps parameter names to float64 arrays; ``arch`` holds the
    scalar architecture description needed to rebuild the forward pass.
    The multi-task variant additionally carries ``languages`` and a
    ``lang.*`` head.
    """
    variant: str
    feature_kind: str
    labels: tuple
    params: dict
    normalizer: Normalizer
    arch: dict = field(default_factory=dict)
    languages: tuple = ()
    config: dict = field(default_factory=dict)
    history: dict = field(default_factory=dict)

    def finalize(self):
        self.params = {k: as_f32_exact(v) for k, v in self.params.items()}
        self.normalizer = Normalizer(as_f32_exact(self.normalizer.mean),
                                     as_f32_exact(self.normalizer.std))
        return self


# MTL model shares the container; kept as a name for readability at call sites
MtlModel = Model
EmotionModel = Model


def infer_feature_kind(X):
    X = np.asarray(X)
    if X.shape[-2:] == (NUM_FRAMES, NUM_CEPS):
        return "mfcc_seq"
    if X.shape[-1] == IS09_DIM and X.ndim <= 2:
        return "is09"
    raise FeatureKindMismatch(f"cannot infer feature kind from shape {X.shape}")


def check_kind(model, X, kind=None):
    kind = kind or infer_feature_kind(X)
    if kind != model.feature_kind:
        raise FeatureKindMismatch(f"model expects {model.feature_kind} features, got {kind}")
    return kind
