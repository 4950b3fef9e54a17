"""Optimal control of a qudit through strongly coupled two-level defects."""
__version__ = "0.1.0"

from .model import (ModelSpec, OperatorSet, QuditSpec, TlsSpec, build_operators,
                    mhz_to_angular, reference_model)
from .controls import PiecewiseControl, RampSpec, apply_constraints

__all__ = ["ModelSpec", "OperatorSet", "QuditSpec", "TlsSpec", "build_operators",
           "mhz_to_angular", "reference_model", "PiecewiseControl", "RampSpec",
           "apply_constraints"]
