from ._c4d import (
    C4DError,
    evaluate,
    reconstruct,
    sampson_error,
    smooth_trajectories,
    synth,
)

__all__ = [
    "C4DError",
    "evaluate",
    "reconstruct",
    "sampson_error",
    "smooth_trajectories",
    "synth",
]
