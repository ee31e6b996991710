import math

import numpy as np
import pytest

from ltca import masks
from ltca.engine import (
    LayerParams,
    LtcaConfig,
    attention_dense,
    attention_rolled,
    attention_sparse,
    ltca_forward,
    pair_count,
)
from ltca.masks import Dilated, GeometrySpec, Global, Random, ShiftWindow, Union, Window
from ltca.numeric import DegenerateRowError, MacCounter, MlpParams, ShapeError
from ltca.queries import PositionalEmbeddings, QueryBundle, assemble
from ltca.verify import random_union


def loop_attention(x, p, allowed, scale):
    """Scalar reference: one softmax per row over the permitted keys only."""
    n, D = x.shape
    Q = x @ p.wq + p.bq
    K = x @ p.wk + p.bk
    V = x @ p.wv + p.bv
    out = np.zeros_like(x)
    for i in range(n):
        keys = [j for j in range(n) if allowed[i][j]]
        s = [sum(Q[i, c] * K[j, c] for c in range(D)) / (math.sqrt(D) if scale else 1.0) for j in keys]
        mx = max(s)
        e = [math.exp(v - mx) for v in s]
        z = sum(e)
        for c in range(D):
            out[i, c] = sum(e[k] / z * V[j, c] for k, j in enumerate(keys)) + x[i, c]
    return out


def bundle(g, D, seed=0):
    return QueryBundle(g, np.random.default_rng(seed).normal(size=(g.total, D)))


def test_self_only_identity_doubles():
    g = GeometrySpec(1, 1, 0)
    q = QueryBundle(g, [[0.7, -1.2]])
    m = masks.build_window(g, 0)
    for attend in (attention_dense, attention_sparse):
        np.testing.assert_array_equal(attend(q, LayerParams.identity(2), m).features, [[1.4, -2.4]])


def test_zero_value_transform_is_identity():
    g = GeometrySpec(5, 2, 2)
    q = bundle(g, 4)
    p = LayerParams.random(4, np.random.default_rng(1))
    p.wv[:] = 0.0
    p.bv[:] = 0.0
    m = masks.build(Union((Window(2), Global())), g)
    for attend in (attention_dense, attention_sparse):
        assert np.array_equal(attend(q, p, m).features, q.features)


def test_two_query_closed_form():
    g = GeometrySpec(2, 1, 0)
    q = QueryBundle(g, [[1.0], [0.0]])
    m = masks.build_full(g)
    e = math.e
    for scale in (True, False):
        out = attention_dense(q, LayerParams.identity(1), m, scale_scores=scale).features
        assert out[0, 0] == pytest.approx(e / (e + 1) + 1, abs=1e-15)
        # row 1 has logits [0, 0]
        assert out[1, 0] == pytest.approx(0.5, abs=1e-15)


@pytest.mark.parametrize("scale", [True, False])
def test_dense_and_sparse_match_scalar_loop(scale):
    g = GeometrySpec(6, 2, 1)
    rng = np.random.default_rng(4)
    q = bundle(g, 5, seed=5)
    p = LayerParams.random(5, rng)
    m = masks.build(Union((Dilated(2, 2), Random(2, 1), Global())), g)
    ref = loop_attention(q.features, p, m.dense(), scale)
    np.testing.assert_allclose(attention_dense(q, p, m, scale_scores=scale).features, ref, atol=1e-12)
    np.testing.assert_allclose(attention_sparse(q, p, m, scale_scores=scale).features, ref, atol=1e-12)


def test_full_mask_sparse_equals_dense():
    g = GeometrySpec(7, 3, 2)
    q = bundle(g, 8, 2)
    p = LayerParams.random(8, np.random.default_rng(2))
    m = masks.build_full(g)
    d = attention_dense(q, p, m).features
    s = attention_sparse(q, p, m).features
    assert np.max(np.abs(d - s)) <= 1e-9


def test_randomised_sparse_vs_dense():
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(40):
        g = GeometrySpec(int(rng.integers(1, 25)), int(rng.integers(1, 4)), int(rng.integers(0, 4)))
        D = int(rng.integers(1, 17))
        q = bundle(g, D, int(rng.integers(0, 1000)))
        p = LayerParams.random(D, rng)
        m = masks.build(random_union(rng, g), g)
        worst = max(worst, float(np.max(np.abs(attention_dense(q, p, m).features - attention_sparse(q, p, m).features))))
    assert worst <= 1e-9


def test_multi_head_matches_per_head_oracle():
    g = GeometrySpec(5, 2, 1)
    D, H = 8, 2
    rng = np.random.default_rng(6)
    q = bundle(g, D, 6)
    p = LayerParams.random(D, rng)
    m = masks.build(Union((Window(2), Global())), g)
    dense = attention_dense(q, p, m, heads=H).features
    sparse = attention_sparse(q, p, m, heads=H).features
    np.testing.assert_allclose(dense, sparse, atol=1e-12)
    # each head is single-head attention on its column slice, residual added once
    x = q.features
    Q, K, V = x @ p.wq + p.bq, x @ p.wk + p.bk, x @ p.wv + p.bv
    allowed = m.dense()
    ref = np.zeros_like(x)
    for h in range(H):
        c = slice(4 * h, 4 * h + 4)
        s = np.where(allowed, Q[:, c] @ K[:, c].T / 2.0, -np.inf)
        w = np.exp(s - s.max(axis=1, keepdims=True))
        ref[:, c] = (w / w.sum(axis=1, keepdims=True)) @ V[:, c]
    np.testing.assert_allclose(dense, ref + x, atol=1e-12)


def test_empty_row_rejected():
    g = GeometrySpec(4, 1, 1)
    q = bundle(g, 2)
    m = masks.build_window(g, 2)  # global row empty
    with pytest.raises(DegenerateRowError):
        attention_sparse(q, LayerParams.identity(2), m)
    with pytest.raises(DegenerateRowError):
        attention_dense(q, LayerParams.identity(2), m)
    cfg = LtcaConfig([(LayerParams.identity(2), Window(2))])
    with pytest.raises(DegenerateRowError):
        cfg.allow_lists(g)


def test_shape_errors():
    g = GeometrySpec(3, 1, 0)
    with pytest.raises(ShapeError):
        attention_sparse(bundle(g, 3), LayerParams.identity(2), masks.build_window(g, 2))
    with pytest.raises(ShapeError):
        attention_sparse(bundle(g, 2), LayerParams.identity(2), masks.build_window(GeometrySpec(3, 1, 1), 2))
    with pytest.raises(ShapeError):
        LayerParams(np.eye(2), np.eye(3), np.eye(2), np.zeros(2), np.zeros(2), np.zeros(2))
    with pytest.raises(ShapeError):
        LtcaConfig([(LayerParams.identity(2), Window(1)), (LayerParams.identity(3), Window(1))])


def test_permutation_equivariance_within_frame():
    g = GeometrySpec(5, 3, 2)
    D = 6
    rng = np.random.default_rng(9)
    obj = rng.normal(size=(15, D))
    ope = rng.normal(size=(3, D))
    glob = rng.normal(size=(2, D))
    p = LayerParams.random(D, rng)
    perm = np.array([2, 0, 1])
    frame = 3
    slots = g.frame_slots(frame) - g.N2
    obj_p = obj.copy()
    obj_p[slots] = obj[slots][perm]
    # the PE_o rows travel with their queries: add them before assembly
    pe0 = PositionalEmbeddings(np.zeros((3, D)), np.zeros((5, D)))
    with_pe = obj + np.tile(ope, (5, 1))
    with_pe_p = with_pe.copy()
    with_pe_p[slots] = with_pe[slots][perm]
    for spec in (Window(2), Dilated(2, 2), Global(), Union((Dilated(4, 2), Global()))):
        if g.N2 and not isinstance(spec, (Global, Union)):
            spec = Union((spec, Global()))
        m = masks.build(spec, g)
        a = attention_sparse(assemble(g, with_pe, pe0, glob), p, m).features
        b = attention_sparse(assemble(g, with_pe_p, pe0, glob), p, m).features
        rows = g.frame_slots(frame)
        np.testing.assert_allclose(b[rows], a[rows][perm], atol=1e-12)
        others = np.setdiff1d(np.arange(g.total), rows)
        np.testing.assert_allclose(b[others], a[others], atol=1e-12)


def test_mac_counter_affine_in_pairs():
    g = GeometrySpec(12, 2, 2)
    D = 8
    q = bundle(g, D)
    p = LayerParams.random(D, np.random.default_rng(0))
    seen = []
    for spec in (Union((Window(0), Global())), Union((Window(4), Global())), Union((Dilated(2, 3), Random(5, 1), Global()))):
        m = masks.build(spec, g)
        c = MacCounter()
        attention_sparse(q, p, m, counter=c)
        seen.append((m.pair_count(), c.total))
    (p0, c0), (p1, c1), (p2, c2) = seen
    slope = (c1 - c0) / (p1 - p0)
    assert slope == 2 * D + 3
    assert c2 == c0 + slope * (p2 - p0)


def test_pair_count():
    assert pair_count(Window(2), GeometrySpec(4, 2, 0)) == 40
    assert pair_count(Global(), GeometrySpec(3, 1, 1)) == 7
    g = GeometrySpec(10, 2, 2)
    parts = (Dilated(2, 2), Random(3, 0), Global())
    assert pair_count(Union(parts), g) <= sum(pair_count(s, g) for s in parts)


def test_ltca_forward_trivial_cases():
    g = GeometrySpec(3, 2, 1)
    q = bundle(g, 4)
    gl, ob = ltca_forward(q, LtcaConfig([]))
    assert np.array_equal(gl, q.global_rows) and np.array_equal(ob, q.object_rows)
    p = LayerParams.random(4, np.random.default_rng(1))
    p.wv[:] = 0
    p.bv[:] = 0
    gl, ob = ltca_forward(q, LtcaConfig([(p, Union((Window(2), Global())))]))
    assert np.array_equal(gl, q.global_rows) and np.array_equal(ob, q.object_rows)


def test_ltca_forward_stacked_matches_dense():
    g = GeometrySpec(10, 2, 2)
    rng = np.random.default_rng(12)
    q = bundle(g, 6, 3)
    spec = Union((Dilated(2, 2), Random(2, 5), Global()))
    cfg = LtcaConfig([(LayerParams.random(6, rng), spec), (LayerParams.random(6, rng), spec)])
    gs, os_ = ltca_forward(q, cfg)
    gd, od = ltca_forward(q, cfg, dense=True)
    assert max(np.max(np.abs(gs - gd)), np.max(np.abs(os_ - od))) <= 1e-9
    assert gs.shape == (2, 6) and os_.shape == (20, 6)


def test_optional_sublayers_agree_between_paths():
    g = GeometrySpec(6, 2, 1)
    D = 4
    rng = np.random.default_rng(13)
    ffn = MlpParams([(rng.normal(size=(D, 8)), rng.normal(size=8)), (rng.normal(size=(8, D)), rng.normal(size=D))])
    p = LayerParams.random(D, rng)
    p.ffn = ffn
    cfg = LtcaConfig([(p, Union((Window(2), Global())))], layer_norm=True, heads=2)
    q = bundle(g, D)
    gs, os_ = ltca_forward(q, cfg)
    gd, od = ltca_forward(q, cfg, dense=True)
    np.testing.assert_allclose(gs, gd, atol=1e-9)
    np.testing.assert_allclose(os_, od, atol=1e-9)
    np.testing.assert_allclose(os_.mean(axis=1), 0.0, atol=1e-12)


@pytest.mark.parametrize(
    "g,spec",
    [
        (GeometrySpec(9, 2, 0), Dilated(2, 2)),
        (GeometrySpec(11, 3, 2), Union((Dilated(4, 3), Global()))),
        (GeometrySpec(5, 1, 1), Union((Global(), Dilated(20, 1)))),
    ],
)
def test_rolled_path_matches_gather(g, spec):
    D = 6
    q = bundle(g, D, 4)
    p = LayerParams.random(D, np.random.default_rng(4))
    m = masks.build(spec, g)
    c_roll, c_gather = MacCounter(), MacCounter()
    rolled = attention_rolled(q, p, spec, counter=c_roll).features
    gathered = attention_sparse(q, p, m, counter=c_gather).features
    assert np.max(np.abs(rolled - gathered)) <= 1e-9
    assert c_roll.total == c_gather.total


def test_rolled_path_rejects_other_patterns():
    g = GeometrySpec(4, 1, 1)
    with pytest.raises(ValueError):
        attention_rolled(bundle(g, 2), LayerParams.identity(2), Union((Window(2), Random(1, 0), Global())))
