"""Biquadratic Lagrange reference element on the unit square.

Local node ``a + 3*b`` sits at ``(a/2, b/2)``; the same lexicographic order is
used for the 9 nodes of every mesh cell.
"""

import numpy as np

__all__ = ["lagrange_1d", "lagrange_1d_deriv", "q2_basis", "q2_grad",
           "gauss_rule", "ReferenceQ2"]


def lagrange_1d(s):
    """Quadratic Lagrange polynomials on [0, 1] with nodes 0, 1/2, 1."""
    s = np.asarray(s, dtype=float)
    return np.stack([2.0 * (s - 0.5) * (s - 1.0),
                     -4.0 * s * (s - 1.0),
                     2.0 * s * (s - 0.5)], axis=-1)


def lagrange_1d_deriv(s):
    s = np.asarray(s, dtype=float)
    return np.stack([4.0 * s - 3.0,
                     -8.0 * s + 4.0,
                     4.0 * s - 1.0], axis=-1)


def q2_basis(s, t):
    """Values of the 9 shape functions at points (s, t); shape (..., 9)."""
    ls, lt = lagrange_1d(s), lagrange_1d(t)
    return (lt[..., :, None] * ls[..., None, :]).reshape(ls.shape[:-1] + (9,))


def q2_grad(s, t):
    """Reference gradients, shape (..., 9, 2)."""
    ls, lt = lagrange_1d(s), lagrange_1d(t)
    ds, dt = lagrange_1d_deriv(s), lagrange_1d_deriv(t)
    gs = (lt[..., :, None] * ds[..., None, :]).reshape(ls.shape[:-1] + (9,))
    gt = (dt[..., :, None] * ls[..., None, :]).reshape(ls.shape[:-1] + (9,))
    return np.stack([gs, gt], axis=-1)


def gauss_rule(npts=3):
    """Tensor Gauss-Legendre rule on [0, 1]^2: points (nq, 2), weights (nq,)."""
    x, w = np.polynomial.legendre.leggauss(npts)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts = np.array([(xi, yj) for yj in x for xi in x])
    wts = np.array([wi * wj for wj in w for wi in w])
    return pts, wts


class ReferenceQ2:
    """Tabulated shape functions and gradients at the quadrature points."""

    def __init__(self, npts=3):
        self.points, self.weights = gauss_rule(npts)
        self.phi = q2_basis(self.points[:, 0], self.points[:, 1])      # (nq, 9)
        self.dphi = q2_grad(self.points[:, 0], self.points[:, 1])      # (nq, 9, 2)
        self.center_dphi = q2_grad(np.array(0.5), np.array(0.5))       # (9, 2)
