"""Mask generator: per-frame mask logits, confidence scores and inference-time selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numeric import MlpParams, ShapeError, as_matrix, mlp_apply


class SelectionError(ValueError):
    pass


@dataclass
class MaskFeatureVolume:
    data: np.ndarray  # (T, H', W', D)
    stride: int = 4

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 4:
            raise ShapeError(f"mask features must be (T, H, W, D), got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("mask features must be finite")

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def D(self) -> int:
        return self.data.shape[3]

    def frame_matrix(self, t: int) -> np.ndarray:
        """Frame ``t`` (zero-based) as an (H'*W') x D matrix."""
        return self.data[t].reshape(-1, self.D)


@dataclass
class PredictionSet:
    masks: np.ndarray  # (N2, T, H', W') logits
    scores: np.ndarray  # (N2,) in (0, 1)
    score_logits: np.ndarray | None = None

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=np.float64)
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if self.masks.ndim != 4 or self.masks.shape[0] != self.scores.shape[0]:
            raise ShapeError(f"masks {self.masks.shape} vs scores {self.scores.shape}")
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores must be finite")


def segment(fm: MaskFeatureVolume, global_out, hs: MlpParams) -> np.ndarray:
    """Mask logits of shape (N2, T, H', W'): each pixel feature dotted with H_s(query)."""
    g = as_matrix(global_out)
    if g.shape[1] != fm.D or hs.in_width != fm.D or hs.out_width != fm.D:
        raise ShapeError(
            f"queries width {g.shape[1]}, head {hs.in_width}->{hs.out_width}, features {fm.D}"
        )
    weights = mlp_apply(hs, g)  # N2 x D
    return np.einsum("thwd,nd->nthw", fm.data, weights)


def binarize(logits) -> np.ndarray:
    """Foreground where sigmoid(logit) > 0.5, i.e. logit > 0; ties go to background."""
    return np.asarray(logits) > 0.0


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def classify_logits(global_out, sentence_feature, hc: MlpParams) -> np.ndarray:
    g = as_matrix(global_out)
    fe = np.asarray(sentence_feature, dtype=np.float64).reshape(-1)
    if fe.shape[0] != g.shape[1] or hc.in_width != 2 * g.shape[1] or hc.out_width != 1:
        raise ShapeError(
            f"classifier {hc.in_width}->{hc.out_width} for queries of width {g.shape[1]}"
            f" and sentence feature of width {fe.shape[0]}"
        )
    joined = np.hstack([g, np.tile(fe, (g.shape[0], 1))])
    return mlp_apply(hc, joined)[:, 0]


def classify(global_out, sentence_feature, hc: MlpParams) -> np.ndarray:
    return sigmoid(classify_logits(global_out, sentence_feature, hc))


def select(p: PredictionSet | np.ndarray, mode: str = "single", sigma: float = 0.5) -> list[int]:
    scores = p.scores if isinstance(p, PredictionSet) else np.asarray(p, dtype=np.float64).reshape(-1)
    if scores.size == 0:
        raise SelectionError("cannot select from an empty prediction set")
    if mode == "single":
        return [int(np.argmax(scores))]  # argmax returns the first maximum
    if mode == "multi":
        return [int(i) for i in np.flatnonzero(scores > sigma)]
    raise SelectionError(f"unknown selection mode {mode!r}")
