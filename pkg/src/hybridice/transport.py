"""Implicit-Euler advection of concentration and thickness with streamline diffusion."""

import numpy as np
import scipy.sparse as sp

from .fem import assembler_for
from .mesh import UniformQuadMesh
from .solver import gmres

__all__ = ["TransportError", "TransportSystem", "advance_scalar", "clamp_state",
           "advance_ice", "inflow_nodes"]


class TransportError(RuntimeError):
    pass


def inflow_nodes(mesh: UniformQuadMesh, velocity):
    """Boundary nodes where the velocity points into the domain."""
    m = mesh.nodes_per_axis
    v = np.asarray(velocity).reshape(-1, 2)
    I, J = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    I, J = I.ravel(), J.ravel()
    inflow = ((I == 0) & (v[:, 0] > 0)) | ((I == m - 1) & (v[:, 0] < 0)) \
        | ((J == 0) & (v[:, 1] > 0)) | ((J == m - 1) & (v[:, 1] < 0))
    return np.flatnonzero(inflow)


class TransportSystem:
    """Stabilized implicit-Euler operator for one frozen velocity field."""

    def __init__(self, mesh: UniformQuadMesh, velocity, k: float, delta0: float = 0.5):
        self.mesh, self.k = mesh, k
        self.velocity = np.asarray(velocity, dtype=float)
        sc = assembler_for(mesh, 1)
        va = assembler_for(mesh, 2)
        self.sc = sc
        vq = va.at_qp(self.velocity)                         # (nc, nq, 2)
        divv = np.einsum("kqii->kq", va.grad_at_qp(self.velocity))
        vmax = np.linalg.norm(va.gather(self.velocity), axis=2).max(axis=1)
        h = mesh.h
        self.tau = delta0 * h / (vmax + h / k)               # (nc,)
        adv = np.einsum("kqj,qbj->kqb", vq, sc.dphi)         # v . grad phi_b
        test = sc.phi[None] + self.tau[:, None, None] * adv  # (nc, nq, 9)
        trial = sc.phi[None] + k * (adv + divv[..., None] * sc.phi[None])
        self.matrix = sc.matrix(np.einsum("q,kqa,kqb->kab", sc.jxw, test, trial))
        self._test = test
        self.inflow = inflow_nodes(mesh, self.velocity)

    def rhs(self, field):
        uq = self.sc.at_qp(field)[..., 0]
        loc = np.einsum("q,kq,kqa->ka", self.sc.jxw, uq, self._test)
        return self.sc.scatter(loc)

    def solve(self, field, inflow_value, tol=1e-13):
        b = self.rhs(field)
        A = self.matrix
        if self.inflow.size:
            keep = np.ones(A.shape[0])
            keep[self.inflow] = 0.0
            mark = 1.0 - keep
            A = (sp.diags(keep) @ A + sp.diags(mark)).tocsr()
            b[self.inflow] = inflow_value
        dinv = 1.0 / A.diagonal()
        x, info = gmres(A, b, M=lambda r: dinv * r, tol=tol, restart=50, max_restarts=40)
        if not info.converged and info.rel_residual > 1e-8:
            raise TransportError(f"transport solve stalled at {info.rel_residual:.2e}")
        return x


def advance_scalar(mesh: UniformQuadMesh, field, velocity, k: float, inflow_value: float,
                   delta0: float = 0.5, system: TransportSystem = None):
    """One implicit step of d_t u + div(u v) = 0; zero velocity returns a copy."""
    field = np.asarray(field, dtype=float)
    if field.shape != (mesh.n_nodes,):
        raise ValueError("field size does not match mesh")
    if not np.any(velocity):
        return field.copy()
    system = system or TransportSystem(mesh, velocity, k, delta0)
    return system.solve(field, inflow_value)


def clamp_state(A, H):
    """Clip A to [0, 1] and H to [0, inf); returns (A, H, number of clipped entries)."""
    A = np.asarray(A, dtype=float)
    H = np.asarray(H, dtype=float)
    clips = int(np.count_nonzero((A < 0) | (A > 1)) + np.count_nonzero(H < 0))
    return np.clip(A, 0.0, 1.0), np.maximum(H, 0.0), clips


def advance_ice(mesh, A, H, velocity, k, A_in=1.0, H_in=0.3, delta0=0.5):
    """Advance both tracers with a shared operator, then clamp."""
    if not np.any(velocity):
        return np.array(A, dtype=float), np.array(H, dtype=float), 0
    system = TransportSystem(mesh, velocity, k, delta0)
    A1 = advance_scalar(mesh, A, velocity, k, A_in, system=system)
    H1 = advance_scalar(mesh, H, velocity, k, H_in, system=system)
    return clamp_state(A1, H1)
