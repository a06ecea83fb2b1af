"""Cell-wise gather/scatter and sparse assembly on a uniform Q2 mesh."""

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .element import ReferenceQ2
from .mesh import UniformQuadMesh

__all__ = ["CellAssembler", "assembler_for", "mass_matrix"]


class CellAssembler:
    """Precomputed index maps for assembling cell contributions.

    Local dof ordering inside a cell is ``node * components + comp``.
    Matrix assembly reuses a fixed CSR pattern so values are summed in a
    deterministic order.
    """

    def __init__(self, mesh: UniformQuadMesh, components: int = 2):
        self.mesh = mesh
        self.c = components
        self.ref = ReferenceQ2()
        cn = mesh.cell_nodes
        self.cell_dofs = (components * cn[:, :, None] + np.arange(components)).reshape(len(cn), -1)
        self.n_dofs = components * mesh.n_nodes
        self.h = mesh.h
        self.jxw = self.ref.weights * mesh.h ** 2                 # (nq,)
        self.dphi = self.ref.dphi / mesh.h                        # (nq, 9, 2)
        self.phi = self.ref.phi                                   # (nq, 9)
        # quadrature point coordinates (ncell, nq, 2)
        origin = mesh.cell_centers - 0.5 * mesh.h
        self.qp_coords = origin[:, None, :] + mesh.h * self.ref.points[None, :, :]

        nl = self.cell_dofs.shape[1]
        rows = np.repeat(self.cell_dofs, nl, axis=1).ravel()
        cols = np.tile(self.cell_dofs, (1, nl)).ravel()
        pattern = sp.csr_matrix((np.arange(1, rows.size + 1, dtype=float), (rows, cols)),
                                shape=(self.n_dofs, self.n_dofs))
        pattern.sum_duplicates()
        pattern.sort_indices()
        self.indptr, self.indices = pattern.indptr, pattern.indices
        # position of each (row, col) entry inside the CSR data array
        key = rows.astype(np.int64) * self.n_dofs + cols
        pkey = (np.repeat(np.arange(self.n_dofs), np.diff(self.indptr)).astype(np.int64)
                * self.n_dofs + self.indices)
        self.perm = np.searchsorted(pkey, key)

    def gather(self, vec):
        """(n_dofs,) -> (ncell, 9, components)."""
        return np.asarray(vec)[self.cell_dofs].reshape(-1, 9, self.c)

    def at_qp(self, vec):
        """Interpolate a field to quadrature points: (ncell, nq, components)."""
        return np.einsum("qa,kac->kqc", self.phi, self.gather(vec))

    def grad_at_qp(self, vec):
        """(ncell, nq, components, 2); [..., i, j] = d u_i / d x_j."""
        loc = self.gather(vec)
        # basis gradients sum to zero: removing the cell mean first avoids cancellation
        # when a large uniform drift carries small velocity differences
        loc = loc - loc.mean(axis=1, keepdims=True)
        return np.einsum("qaj,kai->kqij", self.dphi, loc)

    def scatter(self, local):
        """Sum (ncell, 9*components) contributions into a global vector."""
        return np.bincount(self.cell_dofs.ravel(), weights=np.asarray(local).ravel(),
                            minlength=self.n_dofs)

    def matrix(self, local):
        """Sum (ncell, nl, nl) cell matrices into a CSR matrix."""
        data = np.bincount(self.perm, weights=np.asarray(local).ravel(),
                           minlength=self.indices.size)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()),
                             shape=(self.n_dofs, self.n_dofs))


@lru_cache(maxsize=64)
def assembler_for(mesh: UniformQuadMesh, components: int = 2) -> CellAssembler:
    return CellAssembler(mesh, components)


def mass_matrix(mesh: UniformQuadMesh, weight=None, components: int = 2):
    """Mass matrix with optional nodal scalar weight, interleaved over components."""
    sc = assembler_for(mesh, 1)
    if weight is None:
        wq = np.ones((mesh.n_cells, sc.phi.shape[0]))
    else:
        wq = sc.at_qp(weight)[..., 0]
    loc = np.einsum("kq,q,qa,qb->kab", wq, sc.jxw, sc.phi, sc.phi)
    M = sc.matrix(loc)
    if components > 1:
        M = sp.kron(M, sp.identity(components), format="csr")
    return M
