"""Recursive multi-fidelity co-kriging."""

try:
    from ._mfk import *  # noqa: F401,F403
    from ._mfk import MfkError, Model
except ImportError:  # in-tree build: the extension sits next to the package
    from _mfk import *  # noqa: F401,F403
    from _mfk import MfkError, Model

__all__ = [
    "Model",
    "MfkError",
    "fit",
    "load",
    "cross_validate",
    "nested_design",
    "rmse",
    "maxae",
    "q2",
    "rimse",
    "forrester_high",
    "forrester_low",
]
