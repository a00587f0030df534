"""Numerical tolerances shared by every module.

Call sites read these through the module (``numerics_config.RANK_TOL``) at call
time, so ``override`` takes effect everywhere. Overrides are process-global.
"""
import contextlib

import torch

DTYPE = torch.float64

# linalg
SYM_TOL = 1e-12
SPD_EIG_TOL = 1e-13
RANK_TOL = 1e-10
LYAPUNOV_RESIDUAL_TOL = 1e-10

# geometry
TANGENT_TOL = 1e-8
NORMAL_TOL = 1e-8
PI_INVERSE_CHECK_TOL = 1e-10

# flow
DEFAULT_RESIDUAL_TOL = 1e-8
MONOTONE_SLACK_FACTOR = 10.0
PENALTY_SLACK_FLOOR = 1e-13
DEFAULT_DT_SCALE = 0.01

# diagnostics
GRAM_TOL = 1e-5
STATIONARITY_TOL = 1e-6
FEASIBILITY_TOL = 1e-8
INVARIANCE_TOL = 1e-10
EIGEN_CLUSTER_TOL = 1e-6

TOLERANCE_NAMES = (
    "SYM_TOL",
    "SPD_EIG_TOL",
    "RANK_TOL",
    "LYAPUNOV_RESIDUAL_TOL",
    "TANGENT_TOL",
    "NORMAL_TOL",
    "PI_INVERSE_CHECK_TOL",
    "DEFAULT_RESIDUAL_TOL",
    "MONOTONE_SLACK_FACTOR",
    "PENALTY_SLACK_FLOOR",
    "DEFAULT_DT_SCALE",
    "GRAM_TOL",
    "STATIONARITY_TOL",
    "FEASIBILITY_TOL",
    "INVARIANCE_TOL",
    "EIGEN_CLUSTER_TOL",
)


def current():
    """Returns a dict snapshot of every tolerance."""
    return {name: globals()[name] for name in TOLERANCE_NAMES}


def override(**values):
    """
    Replaces tolerance constants by name (case-insensitive).

    Args:
        **values: tolerance name -> positive float.

    Returns:
        dict: the previous values of the overridden names.
    """
    previous = {}
    for name, value in values.items():
        key = name.upper()
        if key not in TOLERANCE_NAMES:
            raise KeyError(f"Unknown tolerance: {name}")
        value = float(value)
        if not value > 0:
            raise ValueError(f"Tolerance {key} must be positive, got {value}")
        previous[key] = globals()[key]
        globals()[key] = value
    return previous


@contextlib.contextmanager
def tolerance_overrides(**values):
    previous = override(**values)
    try:
        yield
    finally:
        globals().update(previous)
