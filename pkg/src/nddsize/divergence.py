"""KL divergence between two density estimates sharing one grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kde import DensityEstimate

DENSITY_FLOOR = 1e-30
NEGATIVE_SLACK = -1e-9


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class KLValue:
    value: float
    n_new: int
    n_old: int

    def __float__(self) -> float:
        return self.value


def kl_divergence(p: DensityEstimate, q: DensityEstimate,
                  weighted: bool | None = None) -> KLValue:
    """KL(p || q) in nats.

    1-D estimates are integrated with the trapezoid rule. For D > 1 the
    default is the plain sum of ``p log(p/q)`` over grid points, with no
    cell-volume factor; ``weighted=True`` switches to trapezoid quadrature.
    In D > 1 both densities are first rescaled to unit mass under the same
    measure (counting or trapezoid), so the sum is a discrete KL and cannot
    go negative on a coarse grid. Points where ``p < 1e-30`` contribute
    nothing and ``q`` is clamped there.
    """
    if p.dim != q.dim or not p.grid.same_as(q.grid):
        raise GridMismatchError("densities are not on the same grid")
    pv = np.asarray(p.values, dtype=np.float64)
    qv = np.asarray(q.values, dtype=np.float64)
    if np.any(pv < 0) or np.any(qv < 0):
        raise ValueError("density values must be nonnegative")
    if np.array_equal(pv, qv):
        return KLValue(0.0, p.n, q.n)

    if weighted is None:
        weighted = p.dim == 1
    w = p.grid.trapezoid_weights() if weighted else None
    if p.dim > 1:
        pv = pv / _mass(pv, w)
        qv = qv / _mass(qv, w)

    keep = pv >= DENSITY_FLOOR
    integrand = np.zeros_like(pv)
    integrand[keep] = pv[keep] * np.log(pv[keep] / np.maximum(qv[keep], DENSITY_FLOOR))
    value = float(np.sum(integrand if w is None else integrand * w))
    if value < NEGATIVE_SLACK:
        raise ArithmeticError(f"KL came out negative ({value:.3e}); grid too coarse?")
    return KLValue(value, p.n, q.n)


def _mass(values: np.ndarray, weights: np.ndarray | None) -> float:
    total = float(np.sum(values if weights is None else values * weights))
    if not total > 0:
        raise ValueError("density has no mass on the grid")
    return total
