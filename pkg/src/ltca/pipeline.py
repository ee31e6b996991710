"""End-to-end inference over a fixture bundle: assemble, encode, segment, classify, select."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, masks
from .engine import LayerParams, LtcaConfig, ltca_forward
from .heads import MaskFeatureVolume, PredictionSet, binarize, classify_logits, segment, select, sigmoid
from .masks import GeometrySpec
from .numeric import MlpParams, read_ltf, write_ltf
from .queries import PositionalEmbeddings, assemble, init_queries_from_sentence


@dataclass
class Bundle:
    geometry: GeometrySpec
    features: MaskFeatureVolume
    frame_embeddings: np.ndarray
    sentence: np.ndarray
    object_pe: np.ndarray
    global_offsets: np.ndarray
    config: LtcaConfig
    hs: MlpParams
    hc: MlpParams
    centers: np.ndarray | None = None


def _vec(path) -> np.ndarray:
    return read_ltf(path).reshape(-1)


def load_mlp(doc: dict, base: Path) -> MlpParams:
    layers = [(read_ltf(base / e["w"]), _vec(base / e["b"])) for e in doc["layers"]]
    return MlpParams(layers, activation=doc.get("activation", "relu"))


def load_config(path) -> tuple[LtcaConfig, MlpParams | None, MlpParams | None]:
    """Parse a layers JSON; tensor paths resolve relative to the JSON file."""
    path = Path(path)
    base = path.parent
    doc = json.loads(path.read_text())
    layers = []
    for e in doc["layers"]:
        if "mask" in e:
            spec = masks.spec_from_dict(e["mask"])
        else:
            spec = masks.spec_from_json((base / e["mask_path"]).read_text())
        ffn = load_mlp(e["ffn"], base) if "ffn" in e else None
        p = LayerParams(
            *(read_ltf(base / e[k]) for k in ("wq", "wk", "wv")),
            *(_vec(base / e[k]) for k in ("bq", "bk", "bv")),
            ffn=ffn,
        )
        layers.append((p, spec))
    cfg = LtcaConfig(
        layers,
        scale_scores=bool(doc.get("scale_scores", True)),
        heads=int(doc.get("heads", 1)),
        layer_norm=bool(doc.get("layer_norm", False)),
    )
    hs = load_mlp(doc["hs"], base) if "hs" in doc else None
    hc = load_mlp(doc["hc"], base) if "hc" in doc else None
    return cfg, hs, hc


def load_bundle(manifest_path, layers_path=None) -> Bundle:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    m = json.loads(manifest_path.read_text())
    g = GeometrySpec(m["geometry"]["T"], m["geometry"]["N1"], m["geometry"]["N2"])
    T, H, W = m["mask_shape"]
    fm = read_ltf(base / m["mask_features"]).reshape(T, H, W, m["D"])
    cfg, hs, hc = load_config(layers_path or base / m["layers"])
    if hs is None or hc is None:
        raise ValueError("layers JSON must define both 'hs' and 'hc' heads for inference")
    return Bundle(
        geometry=g,
        features=MaskFeatureVolume(fm, stride=m.get("stride", 4)),
        frame_embeddings=read_ltf(base / m["frame_embeddings"]),
        sentence=_vec(base / m["sentence"]),
        object_pe=read_ltf(base / m["object_pe"]),
        global_offsets=read_ltf(base / m["global_offsets"]) if "global_offsets" in m else None,
        config=cfg,
        hs=hs,
        hc=hc,
        centers=np.asarray(m["centers"]) if "centers" in m else None,
    )


def with_mask(cfg: LtcaConfig, spec=None, seed: int | None = None) -> LtcaConfig:
    layers = []
    for p, s in cfg.layers:
        s = spec if spec is not None else s
        if seed is not None:
            s = analysis.reseed(s, seed)
        layers.append((p, s))
    return LtcaConfig(layers, cfg.scale_scores, cfg.heads, cfg.layer_norm)


def run(b: Bundle, cfg: LtcaConfig | None = None, dense: bool = False) -> PredictionSet:
    cfg = cfg or b.config
    g = b.geometry
    pe = PositionalEmbeddings.with_sinusoidal(b.object_pe, g.T)
    glob = init_queries_from_sentence(b.sentence, g.N2)
    if b.global_offsets is not None:
        glob = glob + b.global_offsets
    q = assemble(g, b.frame_embeddings, pe, glob)
    global_out, _ = ltca_forward(q, cfg, dense=dense)
    logits = segment(b.features, global_out, b.hs)
    score_logits = classify_logits(global_out, b.sentence, b.hc)
    return PredictionSet(logits, sigmoid(score_logits), score_logits)


def write_pgm(path, mask) -> None:
    img = np.where(mask, 255, 0).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def write_outputs(pred: PredictionSet, out, mode: str, sigma: float) -> dict:
    out = Path(out)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    n2, T, H, W = pred.masks.shape
    for i in range(n2):
        for t in range(T):
            write_pgm(out / "masks" / f"q{i}_t{t}.pgm", binarize(pred.masks[i, t]))
    write_ltf(out / "mask_logits.ltf", pred.masks.reshape(n2 * T, H * W))
    (out / "scores.json").write_text(json.dumps([float(s) for s in pred.scores]) + "\n")
    chosen = select(pred, mode, sigma)
    selection = {"mode": mode, "sigma": sigma, "selected": chosen}
    (out / "selection.json").write_text(json.dumps(selection, sort_keys=True) + "\n")
    return selection
