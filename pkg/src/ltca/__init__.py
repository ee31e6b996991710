"""Sparse long-range temporal context attention for video object queries."""

from .masks import (
    AllowList,
    Dilated,
    GeometrySpec,
    Global,
    Random,
    ShiftWindow,
    Union,
    Window,
    build,
    compose_union,
    verify_against_formula,
)
from .engine import LayerParams, LtcaConfig, attention_dense, attention_sparse, ltca_forward
from .queries import QueryBundle, assemble

__version__ = "0.1.0"
