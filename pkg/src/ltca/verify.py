"""Randomised verification suites: mask formulas vs builders, sparse vs dense attention."""

from __future__ import annotations

import time

import numpy as np

from . import masks
from .engine import LayerParams, LtcaConfig, attention_dense, attention_sparse, ltca_forward
from .masks import GeometrySpec
from .queries import QueryBundle


def random_geometry(rng, max_t=32, max_n1=4, max_n2=4, min_n2=0) -> GeometrySpec:
    return GeometrySpec(
        int(rng.integers(1, max_t + 1)), int(rng.integers(1, max_n1 + 1)), int(rng.integers(min_n2, max_n2 + 1))
    )


def family_specs(rng, g: GeometrySpec) -> list:
    """One randomly parameterised spec for each family that is valid on ``g``."""
    out = [
        masks.Window(int(rng.integers(0, 2 * g.T + 1))),
        masks.Dilated(int(rng.integers(0, 2 * g.T + 1)), int(rng.integers(1, g.T + 1))),
        masks.Random(int(rng.integers(0, g.T + 1)), int(rng.integers(0, 2**31))),
        masks.ShiftWindow(w_s := int(rng.integers(1, g.T + 1)), int(rng.integers(0, w_s))),
    ]
    if g.N2:
        out.append(masks.Global())
    return out


def random_union(rng, g: GeometrySpec):
    """A union that leaves no query without keys: Global when N2 > 0, else a local window."""
    pool = family_specs(rng, g)
    local = [s for s in pool if not isinstance(s, masks.Global)]
    picks = [local[i] for i in sorted(rng.choice(len(local), size=int(rng.integers(0, 3)), replace=False))]
    if g.N2:
        picks.append(masks.Global())
    elif not any(isinstance(s, (masks.Window, masks.Dilated)) for s in picks):
        picks.append(masks.Dilated(int(rng.integers(0, 5)), int(rng.integers(1, 4))))
    return masks.Union(tuple(picks))


def formula_suite(trials=1000, seed=0, mutate=False, max_t=32) -> dict:
    rng = np.random.default_rng(seed)
    checked = failures = 0
    first_failure = None
    t0 = time.perf_counter()
    for trial in range(trials):
        g = random_geometry(rng, max_t=max_t)
        for spec in family_specs(rng, g):
            a = masks.build(spec, g)
            if mutate and trial == 0 and checked == 0:
                a = a.without(g.N2, g.N2) if a.allows(g.N2, g.N2) else a.with_pair(g.N2, g.N2)
            checked += 1
            if not masks.verify_against_formula(a, spec):
                failures += 1
                if first_failure is None:
                    first_failure = {"geometry": [g.T, g.N1, g.N2], "spec": masks.spec_to_dict(spec)}
    return {
        "suite": "mask_formula",
        "trials": trials,
        "checked": checked,
        "failures": failures,
        "first_failure": first_failure,
        "seconds": round(time.perf_counter() - t0, 3),
    }


def random_bundle(rng, g: GeometrySpec, D: int) -> QueryBundle:
    return QueryBundle(g, rng.normal(size=(g.total, D)))


def oracle_suite(trials=200, seed=0, max_t=24, max_n1=3, max_n2=3, max_d=16, stack=3) -> dict:
    """Max |sparse - dense| over single layers and over stacked forward passes."""
    rng = np.random.default_rng(seed)
    layer_dev = stack_dev = 0.0
    t0 = time.perf_counter()
    for _ in range(trials):
        g = random_geometry(rng, max_t, max_n1, max_n2)
        D = int(rng.integers(1, max_d + 1))
        q = random_bundle(rng, g, D)
        p = LayerParams.random(D, rng)
        spec = random_union(rng, g)
        m = masks.build(spec, g)
        scale = bool(rng.integers(0, 2))
        dense = attention_dense(q, p, m, scale_scores=scale).features
        sparse = attention_sparse(q, p, m, scale_scores=scale).features
        layer_dev = max(layer_dev, float(np.max(np.abs(dense - sparse))))

        if stack:
            cfg = LtcaConfig([(LayerParams.random(D, rng), random_union(rng, g)) for _ in range(stack)])
            gd, od = ltca_forward(q, cfg, dense=True)
            gs, os_ = ltca_forward(q, cfg)
            dev = max(np.max(np.abs(gd - gs), initial=0.0), np.max(np.abs(od - os_), initial=0.0))
            stack_dev = max(stack_dev, float(dev))
    return {
        "suite": "sparse_vs_dense",
        "trials": trials,
        "max_layer_deviation": layer_dev,
        "max_stack_deviation": stack_dev,
        "seconds": round(time.perf_counter() - t0, 3),
    }
