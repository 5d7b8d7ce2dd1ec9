"""Closed-form maximizer of entropy minus an expected penalty."""

from __future__ import annotations

from typing import Mapping

import numpy as np


class EmptySupportError(ValueError):
    pass


def solve_inner_softmax(a) -> tuple[float, np.ndarray | dict]:
    """Maximize ``H(p) - sum_x p(x) a(x)`` over distributions on the support.

    Returns ``(log2 sum_x 2**-a(x), p)`` with ``p(x)`` proportional to
    ``2**-a(x)``. ``a`` may be a sequence or a mapping; a mapping input gives
    a mapping output with the same keys.
    """
    keys = None
    if isinstance(a, Mapping):
        keys = list(a)
        vals = np.array([a[k] for k in keys], dtype=float)
    else:
        vals = np.asarray(a, dtype=float).ravel()
    if vals.size == 0:
        raise EmptySupportError("softmax over an empty support")
    if not np.all(np.isfinite(vals)):
        raise ValueError("penalties must be finite")
    z = -vals
    m = z.max()
    w = np.exp2(z - m)
    total = w.sum()
    value = float(m + np.log2(total))
    p = w / total
    if keys is not None:
        return value, dict(zip(keys, p.tolist()))
    return value, p


def entropy_bits(p) -> float:
    p = np.asarray(p, dtype=float)
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())
