"""Dense float64 kernels: deterministic matmul, masked row softmax, MLPs, LTF tensor I/O.

Matrices are plain 2-D ``numpy.float64`` arrays. ``matmul`` accumulates the inner
dimension strictly left to right so results match a scalar triple loop bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class ShapeError(ValueError):
    pass


class DegenerateRowError(ValueError):
    """A softmax row had no finite entry, i.e. the query was allowed no keys."""


class MacCounter:
    """Multiply-accumulate tally threaded through the attention kernels."""

    def __init__(self):
        self.total = 0

    def add(self, n):
        self.total += int(n)

    def reset(self):
        self.total = 0


def as_matrix(x) -> np.ndarray:
    a = np.asarray(x, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {a.shape}")
    return a


def matmul(a, b, counter: MacCounter | None = None) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} x {b.shape}")
    out = np.zeros((a.shape[0], b.shape[1]))
    # One rank-1 update per inner index keeps the per-element sum order fixed.
    for k in range(a.shape[1]):
        out += a[:, k : k + 1] * b[k : k + 1, :]
    if counter is not None:
        counter.add(a.shape[0] * a.shape[1] * b.shape[1])
    return out


def row_softmax(logits) -> np.ndarray:
    x = as_matrix(logits)
    row_max = x.max(axis=1, keepdims=True)
    bad = ~np.isfinite(row_max[:, 0])
    if bad.any():
        raise DegenerateRowError(f"rows {np.flatnonzero(bad).tolist()} have no finite logit")
    e = np.exp(x - row_max)
    return e / e.sum(axis=1, keepdims=True)


ACTIVATIONS = {
    "relu": lambda x: np.maximum(x, 0.0),
    "gelu": lambda x: 0.5 * x * (1.0 + np.tanh(0.7978845608028654 * (x + 0.044715 * x**3))),
    "tanh": np.tanh,
    "identity": lambda x: x,
}


@dataclass
class MlpParams:
    """Stack of affine layers ``x @ weight + bias``; ``activation`` runs between layers only."""

    layers: list[tuple[np.ndarray, np.ndarray]]
    activation: str = "relu"

    def __post_init__(self):
        if not self.layers:
            raise ShapeError("MLP needs at least one layer")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        fixed = []
        prev = None
        for w, b in self.layers:
            w = as_matrix(w)
            b = np.asarray(b, dtype=np.float64).reshape(-1)
            if b.shape[0] != w.shape[1]:
                raise ShapeError(f"bias length {b.shape[0]} != layer width {w.shape[1]}")
            if prev is not None and w.shape[0] != prev:
                raise ShapeError(f"layer input {w.shape[0]} does not chain from width {prev}")
            prev = w.shape[1]
            fixed.append((w, b))
        self.layers = fixed

    @property
    def in_width(self) -> int:
        return self.layers[0][0].shape[0]

    @property
    def out_width(self) -> int:
        return self.layers[-1][0].shape[1]

    @classmethod
    def identity(cls, width, depth=1):
        eye = np.eye(width)
        return cls([(eye, np.zeros(width)) for _ in range(depth)], activation="identity")


def mlp_apply(p: MlpParams, x, counter: MacCounter | None = None) -> np.ndarray:
    x = as_matrix(x)
    if x.shape[1] != p.in_width:
        raise ShapeError(f"MLP expects width {p.in_width}, got {x.shape[1]}")
    act = ACTIVATIONS[p.activation]
    last = len(p.layers) - 1
    for i, (w, b) in enumerate(p.layers):
        x = matmul(x, w, counter) + b
        if i != last:
            x = act(x)
    return x


# --- LTF tensor files -------------------------------------------------------

_LE_F64 = np.dtype("<f8")


def write_ltf(path, m) -> None:
    m = as_matrix(m)
    rows, cols = m.shape
    with open(path, "wb") as fh:
        fh.write(f"ltf {rows} {cols}\n".encode("ascii"))
        fh.write(np.ascontiguousarray(m, dtype=_LE_F64).tobytes())


def read_ltf(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise ValueError(f"{path}: missing LTF header")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 3 or parts[0] != "ltf":
        raise ValueError(f"{path}: bad LTF header {raw[:nl]!r}")
    rows, cols = int(parts[1]), int(parts[2])
    body = raw[nl + 1 :]
    if len(body) != rows * cols * 8:
        raise ValueError(f"{path}: expected {rows * cols * 8} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype=_LE_F64).astype(np.float64).reshape(rows, cols)
