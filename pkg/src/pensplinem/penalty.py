"""Exact Gram and roughness-penalty matrices on the spline space.

Both matrices are integrals of products of piecewise polynomials, so
fixed-order Gauss-Legendre quadrature applied span by span is exact (up to
roundoff) and costs O(K):

* ``gram_matrix``: entries integral of B_j * B_k, integrand degree
  2(p - 1) per span, p nodes suffice.
* ``penalty_matrix``: entries integral of B_j^(r) * B_k^(r), integrand degree
  2(p - 1 - r) per span, p - r nodes suffice.

Entries vanish for |j - k| >= p (disjoint supports), so both matrices are
symmetric with band half-width p - 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import KnotVector, _local_basis

__all__ = ["PenaltyConfig", "gram_matrix", "penalty_matrix"]


@dataclass(frozen=True)
class PenaltyConfig:
    """Roughness penalty: integrated squared ``deriv``-th derivative over the
    space spanned by ``kv``.  Requires 1 <= deriv < order."""

    kv: KnotVector
    deriv: int

    def __post_init__(self) -> None:
        if not 1 <= self.deriv < self.kv.order:
            raise ValueError(
                f"penalty derivative order must satisfy 1 <= r < {self.kv.order}, "
                f"got {self.deriv}"
            )


def _span_nodes(kv: KnotVector, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights over every nonempty knot span,
    flattened into single arrays."""
    breaks = kv.span_breakpoints()
    lo, hi = breaks[:-1], breaks[1:]
    ref_x, ref_w = np.polynomial.legendre.leggauss(n_nodes)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = (mid[:, None] + half[:, None] * ref_x[None, :]).ravel()
    weights = (half[:, None] * ref_w[None, :]).ravel()
    return nodes, weights


def _product_matrix(kv: KnotVector, deriv: int, n_nodes: int) -> np.ndarray:
    nodes, weights = _span_nodes(kv, n_nodes)
    first, vals = _local_basis(kv.knots, kv.order, nodes, deriv)
    p = kv.order
    out = np.zeros((kv.dim, kv.dim))
    for a in range(p):
        for b in range(p):
            np.add.at(out, (first + a, first + b), weights * vals[:, a] * vals[:, b])
    return out


def gram_matrix(kv: KnotVector) -> np.ndarray:
    """Symmetric positive definite matrix of pairwise basis inner products."""
    return _product_matrix(kv, deriv=0, n_nodes=kv.order)


def penalty_matrix(cfg: PenaltyConfig) -> np.ndarray:
    """Symmetric positive semidefinite roughness matrix.

    Its null space is exactly the coefficient representations of polynomials
    of degree < deriv, hence has dimension deriv for valid knot vectors.
    """
    kv = cfg.kv
    return _product_matrix(kv, deriv=cfg.deriv, n_nodes=kv.order - cfg.deriv)
