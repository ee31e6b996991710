"""T-sweep benchmark: pair counts, analytic and instrumented MACs, wall time."""

from __future__ import annotations

import csv
import io
import statistics
import time

import numpy as np

from . import masks
from .analysis import layer_macs
from .engine import LayerParams, attention_rolled, attention_sparse, rolled_supported
from .masks import GeometrySpec
from .numeric import MacCounter
from .queries import QueryBundle

CSV_HEADER = ["T", "spec", "pairs", "macs", "wall_ns"]


class CounterMismatch(AssertionError):
    pass


def bench_specs(g: GeometrySpec, w=2, d=2, r=1, w_s=4, seed=0) -> dict:
    """The compared attention patterns on geometry ``g`` (Global added wherever N2 > 0)."""
    glob = (masks.Global(),) if g.N2 else ()
    return {
        "full": None,
        "shift-window": masks.Union((masks.ShiftWindow(min(w_s, g.T), 0),) + glob),
        "ltca": masks.Union((masks.Dilated(w, d), masks.Random(min(r, g.T), seed)) + glob),
    }


def measure(q: QueryBundle, p: LayerParams, m, repeats: int, fn=None) -> tuple[int, int]:
    """(instrumented MACs, median wall ns) of one sparse attention layer."""
    fn = fn or (lambda c: attention_sparse(q, p, m, counter=c))
    counter = MacCounter()
    fn(counter)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter_ns()
        fn(None)
        times.append(time.perf_counter_ns() - t0)
    return counter.total, int(statistics.median(times))


def sweep(
    sweep_t,
    N1=8,
    N2=4,
    D=8,
    seed=0,
    repeats=5,
    w=2,
    d=2,
    r=1,
    w_s=4,
    rolled=False,
) -> list[dict]:
    if not sweep_t:
        raise ValueError("empty T sweep")
    rng = np.random.default_rng(seed)
    p = LayerParams.random(D, rng)
    rows = []
    for T in sweep_t:
        g = GeometrySpec(T, N1, N2)
        q = QueryBundle(g, rng.normal(size=(g.total, D)))
        specs = bench_specs(g, w, d, r, w_s, seed)
        if rolled and N2:
            specs["dilated+global-rolled"] = masks.Union((masks.Dilated(w, d), masks.Global()))
        for name, spec in specs.items():
            m = masks.build_full(g) if spec is None else masks.build(spec, g)
            pairs = m.pair_count()
            analytic = layer_macs(pairs, g.total, D)["macs"]
            fn = None
            if name.endswith("-rolled") and rolled_supported(spec, g):
                fn = lambda c, spec=spec: attention_rolled(q, p, spec, counter=c)
            measured, wall = measure(q, p, m, repeats, fn)
            if measured != analytic:
                raise CounterMismatch(f"T={T} {name}: counted {measured} MACs, analytic {analytic}")
            rows.append({"T": T, "spec": name, "pairs": pairs, "macs": analytic, "wall_ns": wall})
    return rows


def to_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_HEADER, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()
