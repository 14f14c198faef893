"""Tool designer/controller co-design (C++ core)."""

from ._core import (
    Cma,
    Environment,
    ProtocolError,
    __version__,
    evaluate,
    export_stl,
    export_tool,
    train,
    tradeoff_reward,
)

__all__ = [
    "Cma",
    "Environment",
    "ProtocolError",
    "__version__",
    "evaluate",
    "export_stl",
    "export_tool",
    "train",
    "tradeoff_reward",
]
