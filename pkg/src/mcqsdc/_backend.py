"""Kernel backend selection.

The compiled extension is used when it was built and importable; setting
``MCQSDC_PURE_PYTHON=1`` forces the numpy fallback. ``NAME`` records which one
is active.
"""
from __future__ import annotations

import os

from . import _kernels_py

kernels = _kernels_py
NAME = "python"

if not os.environ.get("MCQSDC_PURE_PYTHON"):
    try:
        from . import _kernels_c
    except ImportError:  # extension not built
        pass
    else:
        kernels = _kernels_c
        NAME = "cython"

apply_matrix = kernels.apply_matrix
marginal_probabilities = kernels.marginal_probabilities
project = kernels.project
