"""Attention allow-lists for window, dilated, random, global and shift-window patterns.

Queries are laid out as ``[global_0 .. global_{N2-1}, frame1/slot1 .. frameT/slotN1]``.
An :class:`AllowList` stores, for each query row, the sorted key indices it may attend;
it is the sparse twin of the additive ``{0, -inf}`` mask.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Union as _U

import numpy as np

from .numeric import ShapeError


class MaskParamError(ValueError):
    pass


@dataclass(frozen=True)
class GeometrySpec:
    T: int
    N1: int
    N2: int = 0

    def __post_init__(self):
        if self.T < 1 or self.N1 < 1 or self.N2 < 0:
            raise MaskParamError(f"invalid geometry T={self.T} N1={self.N1} N2={self.N2}")

    @property
    def total(self) -> int:
        return self.N2 + self.T * self.N1

    def frame_slots(self, frame: int) -> np.ndarray:
        """Query indices of all object slots belonging to 1-based ``frame``."""
        start = self.N2 + (frame - 1) * self.N1
        return np.arange(start, start + self.N1, dtype=np.int64)

    @classmethod
    def parse(cls, text: str) -> "GeometrySpec":
        t, n1, n2 = (int(v) for v in text.split(","))
        return cls(t, n1, n2)


def frame_of(g: GeometrySpec, q: int) -> int | None:
    if not 0 <= q < g.total:
        raise IndexError(f"query {q} outside [0, {g.total})")
    if q < g.N2:
        return None
    return (q - g.N2) // g.N1 + 1


# --- mask specs -------------------------------------------------------------


@dataclass(frozen=True)
class Window:
    w: int

    def __post_init__(self):
        if self.w < 0:
            raise MaskParamError("window width must be >= 0")


@dataclass(frozen=True)
class Dilated:
    w: int
    d: int = 1

    def __post_init__(self):
        if self.w < 0:
            raise MaskParamError("window width must be >= 0")
        if self.d < 1:
            raise MaskParamError("dilation must be >= 1")


@dataclass(frozen=True)
class Random:
    r: int
    seed: int = 0

    def __post_init__(self):
        if self.r < 0:
            raise MaskParamError("r must be >= 0")
        if self.seed < 0:
            raise MaskParamError("seed must be >= 0")


@dataclass(frozen=True)
class Global:
    pass


@dataclass(frozen=True)
class ShiftWindow:
    w_s: int
    shift_offset: int = 0

    def __post_init__(self):
        if self.w_s < 1:
            raise MaskParamError("shift window length must be >= 1")
        if self.shift_offset < 0:
            raise MaskParamError("shift offset must be >= 0")


@dataclass(frozen=True)
class Union:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise MaskParamError("union needs at least one part")
        if any(isinstance(p, Union) for p in self.parts):
            raise MaskParamError("nested unions are not allowed")


MaskSpec = _U[Window, Dilated, Random, Global, ShiftWindow, Union]

_KINDS = {
    "window": Window,
    "dilated": Dilated,
    "random": Random,
    "global": Global,
    "shift_window": ShiftWindow,
}


def spec_to_dict(spec: MaskSpec) -> dict:
    if isinstance(spec, Union):
        return {"kind": "union", "parts": [spec_to_dict(p) for p in spec.parts]}
    for kind, cls in _KINDS.items():
        if isinstance(spec, cls):
            return {"kind": kind, **spec.__dict__}
    raise TypeError(f"not a mask spec: {spec!r}")


def spec_from_dict(obj: dict) -> MaskSpec:
    obj = dict(obj)
    kind = obj.pop("kind", None)
    if kind == "union":
        return Union(tuple(spec_from_dict(p) for p in obj["parts"]))
    if kind not in _KINDS:
        raise MaskParamError(f"unknown mask kind {kind!r}")
    try:
        return _KINDS[kind](**{k: int(v) for k, v in obj.items()})
    except TypeError as exc:
        raise MaskParamError(f"bad parameters for {kind}: {exc}") from None


def spec_to_json(spec: MaskSpec) -> str:
    return json.dumps(spec_to_dict(spec), sort_keys=True)


def spec_from_json(text: str) -> MaskSpec:
    return spec_from_dict(json.loads(text))


def shift_window_schedule(w_s: int, layers: int) -> list[ShiftWindow]:
    """Alternating offsets 0, w_s // 2, 0, ... as used by shifted-window baselines."""
    return [ShiftWindow(w_s, 0 if k % 2 == 0 else w_s // 2) for k in range(layers)]


# --- allow lists ------------------------------------------------------------


class AllowList:
    """Immutable per-row sorted key sets over a fixed geometry."""

    __slots__ = ("geometry", "rows")

    def __init__(self, geometry: GeometrySpec, rows):
        rows = tuple(np.unique(np.asarray(r, dtype=np.int64)) for r in rows)
        if len(rows) != geometry.total:
            raise ShapeError(f"{len(rows)} rows for geometry with {geometry.total} queries")
        for r in rows:
            if r.size and (r[0] < 0 or r[-1] >= geometry.total):
                raise IndexError("key index outside the query range")
            r.flags.writeable = False
        self.geometry = geometry
        self.rows = rows

    def __eq__(self, other):
        if not isinstance(other, AllowList):
            return NotImplemented
        return self.geometry == other.geometry and all(
            np.array_equal(a, b) for a, b in zip(self.rows, other.rows)
        )

    def __repr__(self):
        return f"AllowList({self.geometry}, pairs={self.pair_count()})"

    def pair_count(self) -> int:
        return sum(int(r.size) for r in self.rows)

    def empty_rows(self) -> list[int]:
        return [i for i, r in enumerate(self.rows) if r.size == 0]

    def allows(self, i: int, j: int) -> bool:
        r = self.rows[i]
        k = np.searchsorted(r, j)
        return bool(k < r.size and r[k] == j)

    def dense(self) -> np.ndarray:
        n = self.geometry.total
        out = np.zeros((n, n), dtype=bool)
        for i, r in enumerate(self.rows):
            out[i, r] = True
        return out

    @classmethod
    def from_dense(cls, geometry: GeometrySpec, allowed: np.ndarray) -> "AllowList":
        return cls(geometry, [np.flatnonzero(row) for row in allowed])

    def without(self, i: int, j: int) -> "AllowList":
        rows = list(self.rows)
        rows[i] = rows[i][rows[i] != j]
        return AllowList(self.geometry, rows)

    def with_pair(self, i: int, j: int) -> "AllowList":
        rows = list(self.rows)
        rows[i] = np.append(rows[i], j)
        return AllowList(self.geometry, rows)

    # text fixture: "geom T N1 N2" then one row per line
    def dumps(self) -> str:
        g = self.geometry
        lines = [f"geom {g.T} {g.N1} {g.N2}"]
        lines += [" ".join(str(int(k)) for k in r) for r in self.rows]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "AllowList":
        lines = text.split("\n")
        head = lines[0].split()
        if len(head) != 4 or head[0] != "geom":
            raise ValueError(f"bad allow-list header {lines[0]!r}")
        g = GeometrySpec(int(head[1]), int(head[2]), int(head[3]))
        body = lines[1 : 1 + g.total]
        if len(body) != g.total:
            raise ValueError("allow-list fixture is truncated")
        return cls(g, [[int(v) for v in ln.split()] for ln in body])


def _from_frame_sets(g: GeometrySpec, frame_sets) -> AllowList:
    """Expand per-source-frame lists of target frames to query-level rows."""
    empty = np.zeros(0, dtype=np.int64)
    rows = [empty] * g.N2
    for f in range(1, g.T + 1):
        targets = frame_sets[f - 1]
        keys = np.concatenate([g.frame_slots(t) for t in targets]) if len(targets) else empty
        rows.extend([keys] * g.N1)
    return AllowList(g, rows)


def build_window(g: GeometrySpec, w: int) -> AllowList:
    if w < 0:
        raise MaskParamError(f"invalid window width {w}")
    sets = []
    for f in range(1, g.T + 1):
        lo = max(1, f - w // 2)
        hi = min(g.T, f + w // 2)
        sets.append(list(range(lo, hi + 1)))
    return _from_frame_sets(g, sets)


def build_dilated(g: GeometrySpec, w: int, d: int) -> AllowList:
    if w < 0 or d < 1:
        raise MaskParamError(f"invalid dilated window w={w} d={d}")
    # |dt| <= d*w/2 with |dt| a multiple of d  <=>  |dt| = d*m, m <= w/2
    reach = w // 2
    sets = []
    for f in range(1, g.T + 1):
        sets.append([f + d * m for m in range(-reach, reach + 1) if 1 <= f + d * m <= g.T])
    return _from_frame_sets(g, sets)


def sample_frames(T: int, r: int, seed: int, frame: int) -> np.ndarray:
    """The ``r`` distinct 1-based frames that ``frame`` attends under random attention.

    Drawn without replacement from a Philox generator keyed by ``SeedSequence((seed, frame))``,
    so every frame's draw is independent of T-sweeps over other frames.
    """
    if not 0 <= r <= T:
        raise MaskParamError(f"random attention needs 0 <= r <= T, got r={r} T={T}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, frame])))
    return np.sort(rng.choice(T, size=r, replace=False)) + 1


def build_random(g: GeometrySpec, r: int, seed: int) -> AllowList:
    if r > g.T:
        raise MaskParamError(f"r={r} exceeds frame count {g.T}")
    return _from_frame_sets(g, [sample_frames(g.T, r, seed, f).tolist() for f in range(1, g.T + 1)])


def build_global(g: GeometrySpec) -> AllowList:
    if g.N2 == 0:
        raise MaskParamError("global attention needs at least one global query")
    everything = np.arange(g.total, dtype=np.int64)
    glob = np.arange(g.N2, dtype=np.int64)
    return AllowList(g, [everything] * g.N2 + [glob] * (g.T * g.N1))


def build_full(g: GeometrySpec) -> AllowList:
    """Dense attention: every query reads every key."""
    everything = np.arange(g.total, dtype=np.int64)
    return AllowList(g, [everything] * g.total)


def shift_block(frame: int, w_s: int, shift_offset: int) -> int:
    # blocks start at frame 1 + shift_offset; frames before it form block -1
    return (frame - 1 - shift_offset) // w_s


def build_shift_window(g: GeometrySpec, w_s: int, shift_offset: int = 0) -> AllowList:
    if not 1 <= w_s <= g.T:
        raise MaskParamError(f"shift window needs 1 <= w_s <= T, got w_s={w_s} T={g.T}")
    blocks: dict[int, list[int]] = {}
    for f in range(1, g.T + 1):
        blocks.setdefault(shift_block(f, w_s, shift_offset), []).append(f)
    return _from_frame_sets(g, [blocks[shift_block(f, w_s, shift_offset)] for f in range(1, g.T + 1)])


def compose_union(parts) -> AllowList:
    parts = list(parts)
    if not parts:
        raise MaskParamError("union of zero allow-lists")
    g = parts[0].geometry
    if any(p.geometry != g for p in parts):
        raise ShapeError("cannot union allow-lists over different geometries")
    rows = [np.unique(np.concatenate(cols)) for cols in zip(*(p.rows for p in parts))]
    return AllowList(g, rows)


def build(spec: MaskSpec, g: GeometrySpec) -> AllowList:
    if isinstance(spec, Window):
        return build_window(g, spec.w)
    if isinstance(spec, Dilated):
        return build_dilated(g, spec.w, spec.d)
    if isinstance(spec, Random):
        return build_random(g, spec.r, spec.seed)
    if isinstance(spec, Global):
        return build_global(g)
    if isinstance(spec, ShiftWindow):
        return build_shift_window(g, spec.w_s, spec.shift_offset)
    if isinstance(spec, Union):
        return compose_union([build(p, g) for p in spec.parts])
    raise TypeError(f"not a mask spec: {spec!r}")


def to_additive(a: AllowList) -> np.ndarray:
    return np.where(a.dense(), 0.0, -np.inf)


def from_additive(g: GeometrySpec, m: np.ndarray) -> AllowList:
    m = np.asarray(m, dtype=np.float64)
    if m.shape != (g.total, g.total):
        raise ShapeError(f"additive mask shape {m.shape} does not match geometry")
    return AllowList.from_dense(g, m == 0.0)


# --- brute-force predicate oracle -------------------------------------------


def formula_matrix(spec: MaskSpec, g: GeometrySpec) -> np.ndarray:
    """Evaluate the M_ij == 0 predicate for every (i, j) pair directly from the layout."""
    q = np.arange(g.total)
    phi = np.where(q < g.N2, 0, (q - g.N2) // g.N1 + 1)
    is_obj = q >= g.N2
    pi, pj = phi[:, None], phi[None, :]
    both_obj = is_obj[:, None] & is_obj[None, :]
    dist = np.abs(pi - pj)

    if isinstance(spec, Window):
        return both_obj & (2 * dist <= spec.w)
    if isinstance(spec, Dilated):
        return both_obj & (dist % spec.d == 0) & (2 * dist <= spec.d * spec.w)
    if isinstance(spec, Random):
        psi = np.zeros((g.T + 1, g.T + 1), dtype=bool)
        for f in range(1, g.T + 1):
            psi[f, sample_frames(g.T, spec.r, spec.seed, f)] = True
        return both_obj & psi[pi, pj]
    if isinstance(spec, Global):
        is_glob = ~is_obj
        return is_glob[:, None] | is_glob[None, :]
    if isinstance(spec, ShiftWindow):
        blk = (phi - 1 - spec.shift_offset) // spec.w_s
        return both_obj & (blk[:, None] == blk[None, :])
    if isinstance(spec, Union):
        out = np.zeros((g.total, g.total), dtype=bool)
        for p in spec.parts:
            out |= formula_matrix(p, g)
        return out
    raise TypeError(f"not a mask spec: {spec!r}")


def verify_against_formula(a: AllowList, spec: MaskSpec) -> bool:
    return bool(np.array_equal(a.dense(), formula_matrix(spec, a.geometry)))
