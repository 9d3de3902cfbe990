"""Composite Gauss-Legendre quadrature on intervals."""

from functools import lru_cache
from typing import Tuple

import numpy as np

from hardedge.config import QUAD_ORDER


@lru_cache(maxsize=64)
def gauss_legendre_panels(
    panels: int,
    lo: float = 0.0,
    hi: float = 1.0,
    order: int = QUAD_ORDER,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return nodes and weights of a composite Gauss-Legendre rule.

    The interval [lo, hi] is split into ``panels`` equal panels with ``order``
    nodes each. Arrays are cached and read-only.

    Args:
        panels: Number of equal sub-intervals.
        lo: Left end point.
        hi: Right end point.
        order: Gauss-Legendre nodes per panel.

    Returns:
        (nodes, weights), both of length panels * order, nodes increasing.
    """

    ref_nodes, ref_weights = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    nodes = (mid[:, None] + half[:, None] * ref_nodes[None, :]).ravel()
    weights = (half[:, None] * ref_weights[None, :]).ravel()
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights
