"""Discrete momentum balance: load vector, residual and Jacobian on one mesh level.

The residual is written with the unknown-dependent terms on the left:

    r_i = (rho H v, phi_i) + k (rho H f_c e_z x v, phi_i) + k (sigma(v), grad phi_i)
          + k (C_w rho_w |v - v_w| (v - v_w), phi_i) - f_i

with Dirichlet rows replaced by ``r_i = v_i``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .fem import assembler_for, mass_matrix
from .mesh import UniformQuadMesh, build_q2_dofmap
from .rheology import (PhysicalParams, stress, stress_linearization,
                       strain_rate, viscosities_and_strength)

__all__ = ["AssemblyError", "MomentumContext", "AssembledSystem", "assemble_rhs",
           "assemble_residual", "assemble_jacobian", "zero_field", "U_MIN"]

U_MIN = 1e-8
_ROT = np.array([[0.0, -1.0], [1.0, 0.0]])   # e_z x (v1, v2) = (-v2, v1)

Forcing = Callable[[np.ndarray, float], np.ndarray]


class AssemblyError(ArithmeticError):
    """Raised when assembly meets non-finite values."""


def zero_field(xy, t):
    return np.zeros(np.shape(xy)[:-1] + (2,))


@dataclass
class MomentumContext:
    """Frozen data for one momentum solve on one level.

    ``A`` and ``H`` are nodal scalar vectors used on the left-hand side;
    ``H_prev`` weights the old-velocity inertia in the load vector.
    ``t`` is the time at which wind and ocean forcing are evaluated.
    """
    mesh: UniformQuadMesh
    k: float
    A: np.ndarray
    H: np.ndarray
    ocean: Forcing = zero_field
    wind: Forcing = zero_field
    phys: PhysicalParams = field(default_factory=PhysicalParams)
    t: float = 0.0
    H_prev: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.mesh.n_nodes
        self.A = np.asarray(self.A, dtype=float)
        self.H = np.asarray(self.H, dtype=float)
        if self.A.shape != (n,) or self.H.shape != (n,):
            raise ValueError(f"A and H must have {n} nodal values")
        if self.H_prev is None:
            self.H_prev = self.H
        self.asm = assembler_for(self.mesh, 2)
        sc = assembler_for(self.mesh, 1)
        self.H_q = sc.at_qp(self.H)[..., 0]
        self.A_q = sc.at_qp(self.A)[..., 0]
        self.rhoH_q = self.phys.rho_ice * self.H_q
        self.dofmap = build_q2_dofmap(self.mesh, 2)
        self.bmask = np.zeros(self.asm.n_dofs, dtype=bool)
        self.bmask[self.dofmap.boundary_dofs] = True
        self.ocean_q = self.forcing_at_qp(self.ocean, self.t)
        self.wind_q = self.forcing_at_qp(self.wind, self.t)
        a = self.asm
        self._mass_loc = np.einsum("kq,q,qa,qb->kab", self.rhoH_q, a.jxw, a.phi, a.phi)

    def forcing_at_qp(self, fn, t):
        """Nodal Q2 interpolant of a forcing field, evaluated at quadrature points."""
        nodal = np.asarray(fn(self.mesh.node_coords, t), dtype=float).ravel()
        return self.asm.at_qp(nodal)

    @property
    def n_dofs(self):
        return self.asm.n_dofs

    def rho_mass(self, previous=False):
        """Mass matrix weighted by rho_ice * H, or by the old thickness with ``previous``."""
        H = self.H_prev if previous else self.H
        return mass_matrix(self.mesh, self.phys.rho_ice * H, 2)


@dataclass
class AssembledSystem:
    residual: np.ndarray
    rhs: np.ndarray
    jacobian: Optional[sp.csr_matrix] = None


def _check(vec, n, name):
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (n,):
        raise ValueError(f"{name} has shape {vec.shape}, expected ({n},)")
    return vec


def assemble_rhs(ctx: MomentumContext, v_prev, t=None):
    """Load vector: old-velocity inertia, wind stress and the ocean part of Coriolis.

    ``t`` overrides the forcing time stored in the context.
    """
    v_prev = _check(v_prev, ctx.n_dofs, "v_prev")
    a, ph = ctx.asm, ctx.phys
    wind_q = ctx.wind_q if t is None else ctx.forcing_at_qp(ctx.wind, t)
    ocean_q = ctx.ocean_q if t is None else ctx.forcing_at_qp(ctx.ocean, t)
    sc = assembler_for(ctx.mesh, 1)
    rhoH_prev = ph.rho_ice * sc.at_qp(ctx.H_prev)[..., 0]
    vq = a.at_qp(v_prev)
    tau_a = ph.C_air * ph.rho_air * np.linalg.norm(wind_q, axis=-1, keepdims=True) * wind_q
    cor = ph.f_c * ctx.rhoH_q[..., None] * (ocean_q @ _ROT.T)
    src = rhoH_prev[..., None] * vq + ctx.k * (tau_a + cor)
    loc = np.einsum("q,qa,kqc->kac", a.jxw, a.phi, src)
    f = a.scatter(loc.reshape(len(loc), -1))
    f[ctx.bmask] = 0.0
    return f


def _operator_action(ctx, v):
    """A(v) without Dirichlet handling."""
    a, ph = ctx.asm, ctx.phys
    vq = a.at_qp(v)
    G = a.grad_at_qp(v)
    eps = strain_rate(G)
    eta, zeta, P = viscosities_and_strength(eps, ctx.H_q, ctx.A_q, ph.rheology)
    sig = stress(eps, eta, zeta, P)
    d = vq - ctx.ocean_q
    drag = ph.C_water * ph.rho_water * np.linalg.norm(d, axis=-1, keepdims=True) * d
    cor = ph.f_c * ctx.rhoH_q[..., None] * (vq @ _ROT.T)
    pt = ctx.rhoH_q[..., None] * vq + ctx.k * (cor + drag)
    loc = (np.einsum("q,qa,kqc->kac", a.jxw, a.phi, pt)
           + ctx.k * np.einsum("q,qaj,kqcj->kac", a.jxw, a.dphi, sig))
    return a.scatter(loc.reshape(len(loc), -1))


def assemble_residual(ctx: MomentumContext, v, f):
    v = _check(v, ctx.n_dofs, "v")
    f = _check(f, ctx.n_dofs, "f")
    r = _operator_action(ctx, v) - f
    r[ctx.bmask] = v[ctx.bmask]
    if not np.all(np.isfinite(r)):
        raise AssemblyError("non-finite momentum residual")
    return r


def _dirichlet_rows(J, bmask):
    keep = sp.diags((~bmask).astype(float))
    return (keep @ J + sp.diags(bmask.astype(float))).tocsr()


def assemble_jacobian(ctx: MomentumContext, v, theta=1.0, with_spd=False,
                      coriolis=True, drag=True):
    """Jacobian of the residual.

    ``theta`` damps the rank-one remainder of the stress tangent. With
    ``with_spd`` the symmetric positive definite part (mass, frozen-viscosity
    stress, drag) is returned as a second matrix.
    """
    v = _check(v, ctx.n_dofs, "v")
    a, ph = ctx.asm, ctx.phys
    nc = ctx.mesh.n_cells
    vq = a.at_qp(v)
    eps = strain_rate(a.grad_at_qp(v))
    Cfull = stress_linearization(eps, ph.rheology, ctx.H_q, ctx.A_q, theta=1.0)
    C0 = stress_linearization(eps, ph.rheology, ctx.H_q, ctx.A_q, theta=0.0)
    Crem = Cfull - C0
    I2 = np.eye(2)

    def stress_block(C):
        return ctx.k * np.einsum("q,qaj,kqcjdl,qbl->kacbd", a.jxw, a.dphi, C, a.dphi,
                                 optimize=True)

    mass = np.einsum("kab,cd->kacbd", ctx._mass_loc, I2)
    spd = mass + stress_block(C0)
    if drag:
        d = vq - ctx.ocean_q
        nrm = np.sqrt(np.sum(d * d, axis=-1) + U_MIN ** 2)
        D = (nrm[..., None, None] * I2
             + np.einsum("kqc,kqd->kqcd", d, d) / nrm[..., None, None])
        D *= ctx.k * ph.C_water * ph.rho_water
        spd = spd + np.einsum("q,qa,qb,kqcd->kacbd", a.jxw, a.phi, a.phi, D, optimize=True)
    full = spd + theta * stress_block(Crem)
    if coriolis:
        full = full + ctx.k * ph.f_c * np.einsum("kab,cd->kacbd", ctx._mass_loc, _ROT)
    J = _dirichlet_rows(a.matrix(full.reshape(nc, 18, 18)), ctx.bmask)
    if with_spd:
        return J, _dirichlet_rows(a.matrix(spd.reshape(nc, 18, 18)), ctx.bmask)
    return J
