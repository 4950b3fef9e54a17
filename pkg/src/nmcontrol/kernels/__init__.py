"""Hot loops over time slices.

The compiled extensions ``_chain`` and ``_expm`` are used when both are
importable; otherwise the numpy implementations in ``_chain_py`` and
``_expm_py`` are used. Set ``NMCONTROL_PURE_PYTHON=1`` to force the
fallback.
"""
import os

if os.environ.get("NMCONTROL_PURE_PYTHON", "") not in ("", "0"):
    from ._chain_py import backward_chain, forward_chain, slice_gradients
    from ._expm_py import expm_slices
    BACKEND = "python"
else:
    try:
        from ._chain import backward_chain, forward_chain, slice_gradients
        from ._expm import expm_slices
        BACKEND = "compiled"
    except ImportError:
        from ._chain_py import backward_chain, forward_chain, slice_gradients
        from ._expm_py import expm_slices
        BACKEND = "python"

__all__ = ["BACKEND", "forward_chain", "backward_chain", "slice_gradients",
           "expm_slices"]
