"""Encoder input assembly: positional embeddings plus global/object query concatenation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .masks import GeometrySpec
from .numeric import ShapeError, as_matrix


@dataclass
class QueryBundle:
    geometry: GeometrySpec
    features: np.ndarray

    def __post_init__(self):
        self.features = as_matrix(self.features)
        if self.features.shape[0] != self.geometry.total:
            raise ShapeError(
                f"bundle has {self.features.shape[0]} rows, geometry needs {self.geometry.total}"
            )
        if not np.all(np.isfinite(self.features)):
            raise ValueError("query features must be finite")

    @property
    def D(self) -> int:
        return self.features.shape[1]

    @property
    def global_rows(self) -> np.ndarray:
        return self.features[: self.geometry.N2]

    @property
    def object_rows(self) -> np.ndarray:
        return self.features[self.geometry.N2 :]

    def replace(self, features) -> "QueryBundle":
        return QueryBundle(self.geometry, features)


@dataclass
class PositionalEmbeddings:
    object_pe: np.ndarray  # N1 x D, supplied (learned elsewhere)
    frame_pe: np.ndarray  # T x D, sinusoidal

    @classmethod
    def with_sinusoidal(cls, object_pe, T) -> "PositionalEmbeddings":
        object_pe = as_matrix(object_pe)
        return cls(object_pe, sinusoidal_pe(T, object_pe.shape[1]))

    @classmethod
    def zeros(cls, g: GeometrySpec, D: int) -> "PositionalEmbeddings":
        return cls(np.zeros((g.N1, D)), np.zeros((g.T, D)))


def sinusoidal_pe(T: int, D: int) -> np.ndarray:
    """Row t holds sin/cos pairs of t / 10000**(2c/D); t is zero-based."""
    if D % 2:
        raise ValueError(f"sinusoidal embedding needs an even width, got {D}")
    t = np.arange(T, dtype=np.float64)[:, None]
    freq = 10000.0 ** (2.0 * np.arange(D // 2) / D)
    angle = t / freq[None, :]
    out = np.empty((T, D))
    out[:, 0::2] = np.sin(angle)
    out[:, 1::2] = np.cos(angle)
    return out


def assemble(
    g: GeometrySpec, frame_embeddings, pe: PositionalEmbeddings, global_init
) -> QueryBundle:
    obj = as_matrix(frame_embeddings)
    D = obj.shape[1]
    glob = np.asarray(global_init, dtype=np.float64).reshape(g.N2, -1) if g.N2 else np.zeros((0, D))
    if obj.shape[0] != g.T * g.N1:
        raise ShapeError(f"expected {g.T * g.N1} frame object rows, got {obj.shape[0]}")
    opes, fpes = as_matrix(pe.object_pe), as_matrix(pe.frame_pe)
    if opes.shape != (g.N1, D) or fpes.shape[0] < g.T or fpes.shape[1] != D or glob.shape[1] != D:
        raise ShapeError("positional embeddings or global queries do not match the geometry")
    # row (i-1)*N1 + (j-1) gets PE_o[j] + PE_t[i]
    added = obj + np.tile(opes, (g.T, 1)) + np.repeat(fpes[: g.T], g.N1, axis=0)
    return QueryBundle(g, np.vstack([glob, added]))


def init_queries_from_sentence(sentence_feature, n: int) -> np.ndarray:
    v = np.asarray(sentence_feature, dtype=np.float64).reshape(-1)
    return np.tile(v, (n, 1))


def sentence_feature(word_embeddings) -> np.ndarray:
    return as_matrix(word_embeddings).mean(axis=0)
