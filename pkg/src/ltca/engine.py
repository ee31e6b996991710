"""Masked attention layers: dense O(n^2) reference, sparse per-row gather, rolled-key fast path.

One layer computes ``softmax(M + Q K^T [/ sqrt(d_head)]) V + X`` where ``Q, K, V`` are affine
transforms of the layer input ``X`` and ``M`` is the additive form of an :class:`AllowList`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import masks
from .masks import AllowList, GeometrySpec, MaskSpec
from .numeric import (
    DegenerateRowError,
    MacCounter,
    MlpParams,
    ShapeError,
    as_matrix,
    matmul,
    mlp_apply,
    row_softmax,
)
from .queries import QueryBundle

# exp, normaliser accumulate and divide per (query, key) pair, per head
SOFTMAX_MACS_PER_PAIR = 3


@dataclass
class LayerParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    bq: np.ndarray
    bk: np.ndarray
    bv: np.ndarray
    ffn: MlpParams | None = None

    def __post_init__(self):
        for name in ("wq", "wk", "wv"):
            w = as_matrix(getattr(self, name))
            if w.shape[0] != w.shape[1]:
                raise ShapeError(f"{name} must be square, got {w.shape}")
            setattr(self, name, w)
        D = self.wq.shape[0]
        if self.wk.shape[0] != D or self.wv.shape[0] != D:
            raise ShapeError("wq, wk, wv must share one width")
        for name in ("bq", "bk", "bv"):
            b = np.asarray(getattr(self, name), dtype=np.float64).reshape(-1)
            if b.shape[0] != D:
                raise ShapeError(f"{name} has length {b.shape[0]}, expected {D}")
            setattr(self, name, b)
        if self.ffn is not None and (self.ffn.in_width != D or self.ffn.out_width != D):
            raise ShapeError("feed-forward block must map D -> D")

    @property
    def D(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def identity(cls, D, value_scale=1.0):
        eye = np.eye(D)
        z = np.zeros(D)
        return cls(eye, eye, value_scale * eye, z, z, z)

    @classmethod
    def random(cls, D, rng, scale=None):
        s = 1.0 / math.sqrt(D) if scale is None else scale
        w = [rng.normal(0.0, s, (D, D)) for _ in range(3)]
        b = [rng.normal(0.0, 0.1, D) for _ in range(3)]
        return cls(*w, *b)


@dataclass
class LtcaConfig:
    layers: list[tuple[LayerParams, MaskSpec]] = field(default_factory=list)
    scale_scores: bool = True
    heads: int = 1
    layer_norm: bool = False

    def __post_init__(self):
        widths = {p.D for p, _ in self.layers}
        if len(widths) > 1:
            raise ShapeError(f"layers disagree on width: {sorted(widths)}")
        if widths and next(iter(widths)) % self.heads:
            raise ShapeError(f"width {next(iter(widths))} not divisible by {self.heads} heads")

    def allow_lists(self, g: GeometrySpec) -> list[AllowList]:
        """Realise every layer's mask, rejecting any that leaves a query without keys."""
        out = []
        for k, (_, spec) in enumerate(self.layers):
            a = masks.build(spec, g)
            check_rows(a, where=f"layer {k}")
            out.append(a)
        return out


def check_rows(m: AllowList, where: str = "mask") -> None:
    empty = m.empty_rows()
    if empty:
        shown = empty[:8]
        raise DegenerateRowError(f"{where}: queries {shown}{'...' if len(empty) > 8 else ''} attend no key")


def _transforms(x, p: LayerParams, counter):
    q = matmul(x, p.wq, counter) + p.bq
    k = matmul(x, p.wk, counter) + p.bk
    v = matmul(x, p.wv, counter) + p.bv
    return q, k, v


def _check(q: QueryBundle, p: LayerParams, m: AllowList, heads: int) -> None:
    if q.D != p.D:
        raise ShapeError(f"bundle width {q.D} != layer width {p.D}")
    if m.geometry != q.geometry:
        raise ShapeError("mask geometry does not match the query bundle")
    if p.D % heads:
        raise ShapeError(f"width {p.D} not divisible by {heads} heads")
    check_rows(m)


def attention_dense(
    q: QueryBundle,
    p: LayerParams,
    m: AllowList,
    scale_scores: bool = True,
    heads: int = 1,
    counter: MacCounter | None = None,
) -> QueryBundle:
    _check(q, p, m, heads)
    x = q.features
    n, D = x.shape
    dh = D // heads
    Q, K, V = _transforms(x, p, counter)
    additive = masks.to_additive(m)
    out = np.empty_like(x)
    for h in range(heads):
        cols = slice(h * dh, (h + 1) * dh)
        logits = matmul(Q[:, cols], K[:, cols].T, counter)
        if scale_scores:
            logits = logits / math.sqrt(dh)
        weights = row_softmax(additive + logits)
        out[:, cols] = matmul(weights, V[:, cols], counter)
    if counter is not None:
        counter.add(n * n * heads * SOFTMAX_MACS_PER_PAIR + n * D)
    return q.replace(out + x)


def attention_sparse(
    q: QueryBundle,
    p: LayerParams,
    m: AllowList,
    scale_scores: bool = True,
    heads: int = 1,
    counter: MacCounter | None = None,
) -> QueryBundle:
    _check(q, p, m, heads)
    x = q.features
    n, D = x.shape
    dh = D // heads
    Q, K, V = _transforms(x, p, counter)
    Qh = Q.reshape(n, heads, dh)
    Kh = K.reshape(n, heads, dh)
    Vh = V.reshape(n, heads, dh)
    out = np.empty((n, heads, dh))
    for i, keys in enumerate(m.rows):
        s = np.einsum("khd,hd->hk", Kh[keys], Qh[i])
        if scale_scores:
            s = s / math.sqrt(dh)
        s = s - s.max(axis=1, keepdims=True)
        e = np.exp(s)
        wts = e / e.sum(axis=1, keepdims=True)
        out[i] = np.einsum("hk,khd->hd", wts, Vh[keys])
    if counter is not None:
        pairs = m.pair_count()
        counter.add(pairs * (2 * D + heads * SOFTMAX_MACS_PER_PAIR) + n * D)
    return q.replace(out.reshape(n, D) + x)


def rolled_supported(spec: MaskSpec, g: GeometrySpec) -> bool:
    if isinstance(spec, masks.Dilated):
        return g.N2 == 0
    if isinstance(spec, masks.Union) and len(spec.parts) == 2:
        kinds = sorted(type(s).__name__ for s in spec.parts)
        return kinds == ["Dilated", "Global"] and g.N2 > 0
    return False


def attention_rolled(
    q: QueryBundle,
    p: LayerParams,
    spec: MaskSpec,
    scale_scores: bool = True,
    counter: MacCounter | None = None,
) -> QueryBundle:
    """Single-head fast path for ``Dilated`` or ``Dilated | Global`` masks.

    Keys and values are rolled along the frame axis once per window offset, so every
    object query scores a fixed-width band instead of gathering an index list.
    """
    g = q.geometry
    if not rolled_supported(spec, g):
        raise ValueError(f"rolled path handles Dilated or Dilated|Global only, got {spec!r}")
    dil = spec if isinstance(spec, masks.Dilated) else next(
        s for s in spec.parts if isinstance(s, masks.Dilated)
    )
    x = q.features
    n, D = x.shape
    T, N1, N2 = g.T, g.N1, g.N2
    Q, K, V = _transforms(x, p, counter)
    scale = 1.0 / math.sqrt(D) if scale_scores else 1.0

    Qo = Q[N2:].reshape(T, N1, D)
    Ko = K[N2:].reshape(T, N1, D)
    Vo = V[N2:].reshape(T, N1, D)
    reach = dil.w // 2
    t = np.arange(T)
    score_blocks, value_blocks = [], []
    valid_pairs = 0
    for m in range(-reach, reach + 1):
        shift = dil.d * m
        valid = (t + shift >= 0) & (t + shift < T)
        valid_pairs += int(valid.sum()) * N1 * N1
        kr = np.roll(Ko, -shift, axis=0)
        vr = np.roll(Vo, -shift, axis=0)
        s = np.einsum("tad,tbd->tab", Qo, kr) * scale
        s[~valid] = -np.inf
        score_blocks.append(s)
        value_blocks.append(vr)
    if N2:
        sg = np.einsum("tad,gd->tag", Qo, K[:N2]) * scale
        score_blocks.append(sg)
        value_blocks.append(None)
    scores = np.concatenate(score_blocks, axis=2)
    scores = scores - scores.max(axis=2, keepdims=True)
    e = np.exp(scores)
    wts = e / e.sum(axis=2, keepdims=True)

    obj_out = np.zeros((T, N1, D))
    col = 0
    for vb in value_blocks:
        if vb is None:
            obj_out += np.einsum("tag,gd->tad", wts[:, :, col : col + N2], V[:N2])
            col += N2
        else:
            obj_out += np.einsum("tab,tbd->tad", wts[:, :, col : col + N1], vb)
            col += N1

    out = np.empty_like(x)
    out[N2:] = obj_out.reshape(T * N1, D)
    if N2:
        gw = row_softmax(matmul(Q[:N2], K.T) * scale)
        out[:N2] = matmul(gw, V)
    if counter is not None:
        pairs = valid_pairs + 2 * N2 * T * N1 + N2 * N2
        counter.add(pairs * (2 * D + SOFTMAX_MACS_PER_PAIR) + n * D)
    return q.replace(out + x)


def layer_norm(x, eps=1e-5):
    mu = x.mean(axis=1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps)


def apply_layer(
    q: QueryBundle,
    p: LayerParams,
    m: AllowList,
    cfg: LtcaConfig,
    dense: bool = False,
    counter: MacCounter | None = None,
) -> QueryBundle:
    attend = attention_dense if dense else attention_sparse
    out = attend(q, p, m, scale_scores=cfg.scale_scores, heads=cfg.heads, counter=counter)
    if cfg.layer_norm:
        out = out.replace(layer_norm(out.features))
    if p.ffn is not None:
        y = out.features + mlp_apply(p.ffn, out.features, counter)
        out = out.replace(layer_norm(y) if cfg.layer_norm else y)
    return out


def ltca_forward(
    q: QueryBundle,
    cfg: LtcaConfig,
    dense: bool = False,
    counter: MacCounter | None = None,
    allow_lists: list[AllowList] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Run every layer in order and split the result into (global rows, object rows)."""
    if allow_lists is None:
        allow_lists = cfg.allow_lists(q.geometry)
    if len(allow_lists) != len(cfg.layers):
        raise ShapeError("one allow-list per layer required")
    for (p, _), m in zip(cfg.layers, allow_lists):
        q = apply_layer(q, p, m, cfg, dense=dense, counter=counter)
    return q.global_rows.copy(), q.object_rows.copy()


def pair_count(spec: MaskSpec, g: GeometrySpec) -> int:
    return masks.build(spec, g).pair_count()
