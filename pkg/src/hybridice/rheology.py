"""Viscous-plastic constitutive law: strain rates, viscosities, stress and its tangent.

All functions broadcast over leading axes; tensors live in the last two axes
and ``grad_v[..., i, j]`` is d v_i / d x_j.
"""

from dataclasses import dataclass

import numpy as np

__all__ = ["RheologyParams", "PhysicalParams", "StrainRate", "strain_rate",
           "delta", "delta_plastic", "ice_strength", "viscosities_and_strength",
           "stress", "stress_linearization", "strength_operator"]

_I2 = np.eye(2)


@dataclass(frozen=True)
class RheologyParams:
    e: float = 2.0
    P_star: float = 27500.0
    C: float = 20.0
    delta_min: float = 2e-9

    def __post_init__(self):
        for name in ("e", "P_star", "C", "delta_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class PhysicalParams:
    """Densities, drag coefficients and Coriolis parameter (SI units)."""
    rho_ice: float = 900.0
    rho_air: float = 1.3
    rho_water: float = 1026.0
    C_air: float = 1.2e-3
    C_water: float = 5.5e-3
    f_c: float = 1.46e-4
    rheology: RheologyParams = RheologyParams()


@dataclass
class StrainRate:
    eps: np.ndarray
    eps_dev: np.ndarray

    @property
    def trace(self):
        return self.eps[..., 0, 0] + self.eps[..., 1, 1]


def strain_rate(grad_v) -> StrainRate:
    g = np.asarray(grad_v, dtype=float)
    eps = 0.5 * (g + np.swapaxes(g, -1, -2))
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    dev = eps - 0.5 * tr[..., None, None] * _I2
    return StrainRate(eps, dev)


def strength_operator(eps: StrainRate, e: float):
    """S(eps) = (2/e^2) eps' + tr(eps) I, so that eps:S(eps) is the squared plastic rate."""
    return (2.0 / e ** 2) * eps.eps_dev + eps.trace[..., None, None] * _I2


def delta_plastic(eps: StrainRate, params: RheologyParams):
    dd = np.einsum("...ij,...ij->...", eps.eps_dev, eps.eps_dev)
    return np.sqrt((2.0 / params.e ** 2) * dd + eps.trace ** 2)


def delta(eps: StrainRate, params: RheologyParams):
    dp = delta_plastic(eps, params)
    return np.sqrt(dp ** 2 + params.delta_min ** 2)


def ice_strength(H, A, params: RheologyParams):
    return params.P_star * np.asarray(H) * np.exp(-params.C * (1.0 - np.asarray(A)))


def viscosities_and_strength(eps: StrainRate, H, A, params: RheologyParams):
    """Return (eta, zeta, P)."""
    P = ice_strength(H, A, params)
    zeta = P / (2.0 * delta(eps, params))
    return zeta / params.e ** 2, zeta, P


def stress(eps: StrainRate, eta, zeta, P):
    eta, zeta, P = (np.asarray(x)[..., None, None] for x in (eta, zeta, P))
    tr = eps.trace[..., None, None]
    return 2.0 * eta * eps.eps_dev + (zeta * tr - 0.5 * P) * _I2


def stress_linearization(eps: StrainRate, params: RheologyParams, H, A, theta=1.0):
    """Tangent tensor C[..., i, j, k, l] with d sigma_ij = C_ijkl d(grad v)_kl.

    ``theta`` scales the rank-one part coming from the derivative of Delta;
    theta=0 leaves the frozen-viscosity (positive semidefinite) operator.
    """
    e2 = params.e ** 2
    P = ice_strength(H, A, params)
    dlt = delta(eps, params)
    coef = (P / (2.0 * dlt))[..., None, None, None, None]
    d = _I2
    sym = 0.5 * (np.einsum("ik,jl->ijkl", d, d) + np.einsum("il,jk->ijkl", d, d))
    vol = np.einsum("ij,kl->ijkl", d, d)
    base = (2.0 / e2) * (sym - 0.5 * vol) + vol
    S = strength_operator(eps, params.e)
    rank1 = np.einsum("...ij,...kl->...ijkl", S, S) / (dlt ** 2)[..., None, None, None, None]
    return coef * (base - theta * rank1)
