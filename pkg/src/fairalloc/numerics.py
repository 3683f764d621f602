"""Deterministic reduction primitives shared by the solver core and the simulator.

Floating-point addition is not associative, so two mathematically identical
executions of the same algorithm only produce bit-identical iterates if every
order-sensitive reduction uses the same accumulation tree on the same operand
order.  numpy's segmented reduce (``np.add.reduceat``) applies a fixed tree to
each segment independently of how many segments are reduced in one call, which
is the property the cross-execution equivalence tests rely on.  All sums whose
result feeds back into solver state must go through these helpers; mixing in
``np.sum`` or Python-level accumulation breaks bit equality for segments of
ten or more elements.
"""

from __future__ import annotations

import numpy as np

_ZERO_START = np.array([0], dtype=np.intp)


def canonical_sum(values: np.ndarray) -> float:
    """Sum a 1-D float64 array with the same tree ``segment_sums`` uses.

    Equivalent to reducing a single segment covering the whole array.  Returns
    0.0 for an empty input.
    """
    a = np.asarray(values, dtype=np.float64)
    if a.size == 0:
        return 0.0
    return float(np.add.reduceat(a, _ZERO_START)[0])


def segment_sums(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-segment sums; segment ``i`` spans ``starts[i]`` to ``starts[i+1]``."""
    return np.add.reduceat(values, starts)


def segment_mins(values: np.ndarray, starts: np.ndarray) -> np.ndarray:
    """Per-segment minima over the same segmentation as ``segment_sums``."""
    return np.minimum.reduceat(values, starts)
