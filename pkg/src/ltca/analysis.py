"""Receptive-field reachability over stacked masks, and analytic multiply-accumulate counts."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import masks
from .engine import SOFTMAX_MACS_PER_PAIR
from .masks import GeometrySpec, MaskSpec


@dataclass
class ReachabilityReport:
    geometry: GeometrySpec
    # per_layer[k-1][i, j]: information from query j has reached query i after k layers
    per_layer: list[np.ndarray]
    diameter: int | None
    max_frame_span: list[int]

    def to_dict(self, include_matrices: bool = False) -> dict:
        g = self.geometry
        out = {
            "geometry": {"T": g.T, "N1": g.N1, "N2": g.N2},
            "layers": len(self.per_layer),
            "diameter": self.diameter if self.diameter is not None else "unreachable",
            "max_frame_span": list(self.max_frame_span),
            "reachable_fraction": [round(float(r.mean()), 6) for r in self.per_layer],
        }
        if include_matrices:
            out["matrices"] = [r.astype(int).tolist() for r in self.per_layer]
        return out


def layer_spec(specs, k: int) -> MaskSpec:
    """Spec for zero-based layer ``k``; a short list repeats cyclically."""
    return specs[k % len(specs)]


def _frames(g: GeometrySpec) -> np.ndarray:
    q = np.arange(g.total)
    return np.where(q < g.N2, 0, (q - g.N2) // g.N1 + 1)


def frame_span(g: GeometrySpec, reach: np.ndarray) -> int:
    phi = _frames(g)
    obj = phi > 0
    both = reach & obj[:, None] & obj[None, :]
    if not both.any():
        return 0
    dist = np.abs(phi[:, None] - phi[None, :])
    return int(dist[both].max())


def reachability(specs, g: GeometrySpec, K: int) -> ReachabilityReport:
    """Compose the allow relations of K stacked layers.

    Query i reads key j, so content flows j -> i; the residual path keeps each query's own
    content, hence the identity is added to every layer's relation.
    """
    if K < 1:
        raise ValueError("need at least one layer")
    specs = list(specs)
    if not specs:
        raise ValueError("need at least one mask spec")
    n = g.total
    eye = np.eye(n, dtype=bool)
    reach = eye.copy()
    per_layer = []
    diameter = None
    for k in range(K):
        step = masks.build(layer_spec(specs, k), g).dense() | eye
        reach = (step.astype(np.int64) @ reach.astype(np.int64)) > 0
        per_layer.append(reach)
        if diameter is None and reach.all():
            diameter = k + 1
    spans = [frame_span(g, r) for r in per_layer]
    return ReachabilityReport(g, per_layer, diameter, spans)


def reseed(spec: MaskSpec, seed: int) -> MaskSpec:
    if isinstance(spec, masks.Random):
        return dataclasses.replace(spec, seed=seed)
    if isinstance(spec, masks.Union):
        return masks.Union(tuple(reseed(p, seed) for p in spec.parts))
    return spec


def seed_sweep(specs, g: GeometrySpec, K: int, seeds) -> dict:
    """Diameter statistics of random-containing spec lists over several seeds."""
    diam = []
    for s in seeds:
        rep = reachability([reseed(sp, s) for sp in specs], g, K)
        diam.append(rep.diameter)
    finite = [d for d in diam if d is not None]
    return {
        "seeds": list(seeds),
        "diameters": [d if d is not None else "unreachable" for d in diam],
        "unreachable": len(diam) - len(finite),
        "mean_diameter": float(np.mean(finite)) if finite else None,
        "min_diameter": min(finite) if finite else None,
    }


def ascii_grid(reach: np.ndarray, on: str = "#", off: str = ".") -> str:
    return "\n".join("".join(on if v else off for v in row) for row in reach)


def layer_macs(pairs: int, n: int, D: int, heads: int = 1) -> dict:
    transforms = 3 * n * D * D
    pair_term = pairs * (2 * D + heads * SOFTMAX_MACS_PER_PAIR)
    residual = n * D
    return {
        "pairs": pairs,
        "transform_macs": transforms,
        "pair_macs": pair_term,
        "residual_macs": residual,
        "macs": transforms + pair_term + residual,
    }


def cost_report(specs, g: GeometrySpec, D: int, K: int | None = None, heads: int = 1) -> dict:
    """Analytic MAC counts for K layers (default: one per spec) of the sparse attention path."""
    specs = list(specs)
    K = len(specs) if K is None else K
    n = g.total
    layers = []
    for k in range(K):
        pairs = masks.build(layer_spec(specs, k), g).pair_count()
        layers.append({"layer": k, **layer_macs(pairs, n, D, heads)})
    return {
        "geometry": {"T": g.T, "N1": g.N1, "N2": g.N2},
        "D": D,
        "layers": layers,
        "total_macs": sum(l["macs"] for l in layers),
        "total_pairs": sum(l["pairs"] for l in layers),
    }
