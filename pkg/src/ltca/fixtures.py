"""Synthetic scenes standing in for extracted video features, plus the golden fixture bundle."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import masks
from .engine import LayerParams, LtcaConfig
from .heads import MaskFeatureVolume
from .masks import GeometrySpec
from .numeric import MlpParams, write_ltf

GENERATOR = "numpy Philox via SeedSequence((seed, stream))"


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream])))


@dataclass
class SyntheticScene:
    T: int = 8
    H: int = 12
    W: int = 12
    D: int = 16
    seed: int = 0
    N1: int = 2
    bump_width: float = 1.5
    noise: float = 0.01
    margin: int = 2

    def __post_init__(self):
        if self.H <= 2 * self.margin or self.W <= 2 * self.margin:
            raise ValueError("grid too small for the blob margin")
        if self.D < 1 or self.T < 1 or self.N1 < 1:
            raise ValueError("scene dimensions must be positive")


@dataclass
class SceneData:
    scene: SyntheticScene
    features: MaskFeatureVolume
    frame_embeddings: np.ndarray  # (T*N1, D); slot 0 of each frame carries the blob direction
    sentence: np.ndarray  # (D,)
    centers: np.ndarray  # (T, 2) integer (row, col)
    direction: np.ndarray = field(repr=False, default=None)


def _unit(v):
    return v / np.linalg.norm(v)


def blob_path(s: SyntheticScene) -> np.ndarray:
    """Integer blob centres moving on a straight line between two interior points."""
    rng = _rng(s.seed, 1)
    lo = s.margin
    start = np.array([rng.integers(lo, s.H - lo), rng.integers(lo, s.W - lo)])
    end = np.array([rng.integers(lo, s.H - lo), rng.integers(lo, s.W - lo)])
    frac = np.linspace(0.0, 1.0, s.T)[:, None] if s.T > 1 else np.zeros((1, 1))
    return np.rint(start + frac * (end - start)).astype(np.int64)


def gen_scene(s: SyntheticScene) -> SceneData:
    direction = _unit(_rng(s.seed, 0).normal(size=s.D))
    centers = blob_path(s)
    rows = np.arange(s.H)[:, None]
    cols = np.arange(s.W)[None, :]
    noise_rng = _rng(s.seed, 2)
    data = np.empty((s.T, s.H, s.W, s.D))
    for t, (cr, cc) in enumerate(centers):
        bump = np.exp(-((rows - cr) ** 2 + (cols - cc) ** 2) / (2.0 * s.bump_width**2))
        data[t] = bump[:, :, None] * direction + s.noise * noise_rng.normal(size=(s.H, s.W, s.D))

    distract = _rng(s.seed, 3).normal(size=(s.T, s.N1, s.D))
    distract /= np.linalg.norm(distract, axis=2, keepdims=True)
    distract[:, 0, :] = direction
    return SceneData(
        scene=s,
        features=MaskFeatureVolume(data),
        frame_embeddings=distract.reshape(s.T * s.N1, s.D),
        sentence=direction.copy(),
        centers=centers,
        direction=direction,
    )


# --- golden bundle ----------------------------------------------------------

GOLDEN_SCENE = SyntheticScene(T=8, H=12, W=12, D=16, seed=7, N1=2)
GOLDEN_N2 = 3


def golden_layer_specs(seed: int = 0) -> list:
    return [
        masks.Union((masks.Dilated(2, 2), masks.Random(2, seed), masks.Global())),
        masks.Union((masks.Window(2), masks.Random(2, seed + 1), masks.Global())),
    ]


def golden_params(D: int, seed: int = 0):
    """Identity-style encoder layers, identity segmentation head, seeded linear classifier."""
    rng = _rng(seed, 10)
    layers = [LayerParams.identity(D, value_scale=0.5) for _ in range(2)]
    hs = MlpParams.identity(D, depth=3)
    hc = MlpParams([(rng.normal(0.0, 0.3, (2 * D, 1)), np.zeros(1))])
    object_pe = 0.05 * rng.normal(size=(GOLDEN_SCENE.N1, D))
    global_offsets = 0.1 * rng.normal(size=(GOLDEN_N2, D))
    return layers, hs, hc, object_pe, global_offsets


def golden_config(seed: int = 0, scale_scores: bool = True) -> LtcaConfig:
    layers, *_ = golden_params(GOLDEN_SCENE.D)
    return LtcaConfig(list(zip(layers, golden_layer_specs(seed))), scale_scores=scale_scores)


def _write_mlp(out: Path, prefix: str, p: MlpParams) -> dict:
    entries = []
    for k, (w, b) in enumerate(p.layers):
        write_ltf(out / f"{prefix}_w{k}.ltf", w)
        write_ltf(out / f"{prefix}_b{k}.ltf", b.reshape(1, -1))
        entries.append({"w": f"{prefix}_w{k}.ltf", "b": f"{prefix}_b{k}.ltf"})
    return {"activation": p.activation, "layers": entries}


def write_golden(out, scene: SyntheticScene = GOLDEN_SCENE, n2: int = GOLDEN_N2, seed: int = 0) -> Path:
    """Write scene tensors, parameters, layers.json and manifest.json into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    data = gen_scene(scene)
    D = scene.D
    layers, hs, hc, object_pe, global_offsets = golden_params(D, seed)
    s = scene

    write_ltf(out / "mask_features.ltf", data.features.data.reshape(-1, D))
    write_ltf(out / "frame_embeddings.ltf", data.frame_embeddings)
    write_ltf(out / "sentence.ltf", data.sentence.reshape(1, -1))
    write_ltf(out / "object_pe.ltf", object_pe)
    write_ltf(out / "global_offsets.ltf", global_offsets)

    layer_entries = []
    for k, (p, spec) in enumerate(zip(layers, golden_layer_specs(seed))):
        entry = {"mask": masks.spec_to_dict(spec)}
        for name in ("wq", "wk", "wv"):
            write_ltf(out / f"l{k}_{name}.ltf", getattr(p, name))
            entry[name] = f"l{k}_{name}.ltf"
        for name in ("bq", "bk", "bv"):
            write_ltf(out / f"l{k}_{name}.ltf", getattr(p, name).reshape(1, -1))
            entry[name] = f"l{k}_{name}.ltf"
        layer_entries.append(entry)
    layers_doc = {
        "scale_scores": True,
        "heads": 1,
        "layer_norm": False,
        "layers": layer_entries,
        "hs": _write_mlp(out, "hs", hs),
        "hc": _write_mlp(out, "hc", hc),
    }
    (out / "layers.json").write_text(json.dumps(layers_doc, indent=2, sort_keys=True) + "\n")

    manifest = {
        "geometry": {"T": s.T, "N1": s.N1, "N2": n2},
        "D": D,
        "mask_shape": [s.T, s.H, s.W],
        "stride": 4,
        "scene": {"seed": s.seed, "bump_width": s.bump_width, "noise": s.noise},
        "centers": data.centers.tolist(),
        "generator": GENERATOR,
        "frame_pe": "sinusoidal, zero-based frame index, base 10000",
        "mask_features": "mask_features.ltf",
        "frame_embeddings": "frame_embeddings.ltf",
        "sentence": "sentence.ltf",
        "object_pe": "object_pe.ltf",
        "global_offsets": "global_offsets.ltf",
        "layers": "layers.json",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out / "manifest.json"
