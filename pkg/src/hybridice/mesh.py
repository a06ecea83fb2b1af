"""Uniform Cartesian quadrilateral meshes, Q2 numbering and grid transfer."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .element import lagrange_1d

__all__ = ["UniformQuadMesh", "DofMap", "TransferOps", "MeshHierarchy",
           "build_hierarchy", "build_q2_dofmap", "prolongation_1d",
           "prolongate", "restrict_rhs"]


@dataclass(frozen=True)
class UniformQuadMesh:
    """Square domain (0, side)^2 split into ``n`` x ``n`` equal cells."""
    side: float
    n: int
    level: int = 0

    @property
    def h(self):
        return self.side / self.n

    @property
    def nodes_per_axis(self):
        return 2 * self.n + 1

    @property
    def n_nodes(self):
        return self.nodes_per_axis ** 2

    @property
    def n_cells(self):
        return self.n * self.n

    @cached_property
    def node_coords(self):
        """(n_nodes, 2) coordinates, x fastest."""
        x = np.linspace(0.0, self.side, self.nodes_per_axis)
        X, Y = np.meshgrid(x, x, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_nodes(self):
        """(n_cells, 9) global node ids; local order b*3 + a."""
        m = self.nodes_per_axis
        ci, cj = np.meshgrid(np.arange(self.n), np.arange(self.n), indexing="xy")
        ci, cj = ci.ravel(), cj.ravel()
        a = np.tile(np.arange(3), 3)
        b = np.repeat(np.arange(3), 3)
        return (2 * cj[:, None] + b[None, :]) * m + (2 * ci[:, None] + a[None, :])

    @cached_property
    def cell_centers(self):
        c = (np.arange(self.n) + 0.5) * self.h
        X, Y = np.meshgrid(c, c, indexing="xy")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def boundary_nodes(self):
        m = self.nodes_per_axis
        I, J = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
        on = (I == 0) | (J == 0) | (I == m - 1) | (J == m - 1)
        return np.flatnonzero(on.ravel())

    def parent_cell(self, cell):
        """Index of the parent of ``cell`` on the mesh with half as many cells per axis."""
        cell = np.asarray(cell)
        ci, cj = cell % self.n, cell // self.n
        return (cj // 2) * (self.n // 2) + ci // 2

    def child_cells(self, cell):
        """The 4 children of ``cell`` on the mesh with twice as many cells per axis."""
        ci, cj = cell % self.n, cell // self.n
        nf = 2 * self.n
        return np.array([(2 * cj + b) * nf + 2 * ci + a for b in (0, 1) for a in (0, 1)])


@dataclass(frozen=True)
class DofMap:
    level: int
    nodes_per_axis: int
    component_count: int
    boundary_dofs: np.ndarray
    interior_dofs: np.ndarray

    @property
    def n_dofs(self):
        return self.component_count * self.nodes_per_axis ** 2


def build_q2_dofmap(mesh: UniformQuadMesh, components: int = 2) -> DofMap:
    """Interleaved numbering ``dof = components*node + comp``."""
    if components not in (1, 2):
        raise ValueError("components must be 1 or 2")
    bn = mesh.boundary_nodes
    bd = (components * bn[:, None] + np.arange(components)[None, :]).ravel()
    mask = np.ones(components * mesh.n_nodes, dtype=bool)
    mask[bd] = False
    return DofMap(mesh.level, mesh.nodes_per_axis, components,
                  np.sort(bd), np.flatnonzero(mask))


def prolongation_1d(n_coarse: int) -> sp.csr_matrix:
    """Interpolation of 1D Q2 nodal values from ``n_coarse`` cells to ``2*n_coarse``."""
    nf = 4 * n_coarse + 1
    rows, cols, vals = [], [], []
    for I in range(nf):
        ci = min(I // 4, n_coarse - 1)
        s = (I - 4 * ci) / 4.0
        w = lagrange_1d(s)
        for a in range(3):
            if abs(w[a]) > 0.0:
                rows.append(I)
                cols.append(2 * ci + a)
                vals.append(w[a])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nf, 2 * n_coarse + 1))


@dataclass
class TransferOps:
    """Prolongation between two levels; restriction is its transpose."""
    P: sp.csr_matrix
    R: sp.csr_matrix = field(init=False)
    components: int = 2

    def __post_init__(self):
        self.R = self.P.T.tocsr()

    @classmethod
    def between(cls, n_coarse: int, jumps: int = 1, components: int = 2):
        P = sp.identity((2 * n_coarse + 1) ** 2, format="csr")
        n = n_coarse
        for _ in range(jumps):
            P1 = prolongation_1d(n)
            P = (sp.kron(P1, P1, format="csr") @ P).tocsr()
            n *= 2
        if components > 1:
            P = sp.kron(P, sp.identity(components), format="csr")
        P.eliminate_zeros()
        return cls(P.tocsr(), components)


@dataclass
class MeshHierarchy:
    domain_side: float
    levels: list
    coarse_level_index: int
    jump: int

    @property
    def coarse(self) -> UniformQuadMesh:
        return self.levels[self.coarse_level_index]

    @property
    def fine(self) -> UniformQuadMesh:
        return self.levels[self.coarse_level_index + self.jump]

    def transfer(self, lo: int, hi: int, components: int = 2) -> TransferOps:
        """Transfer operators from level ``lo`` to level ``hi`` (hi > lo)."""
        key = (lo, hi, components)
        cache = self.__dict__.setdefault("_transfer_cache", {})
        if key not in cache:
            if not 0 <= lo < hi < len(self.levels):
                raise ValueError(f"invalid level pair {lo}, {hi}")
            cache[key] = TransferOps.between(self.levels[lo].n, hi - lo, components)
        return cache[key]

    def coarse_to_fine(self, components: int = 2) -> TransferOps:
        return self.transfer(self.coarse_level_index,
                             self.coarse_level_index + self.jump, components)


def build_hierarchy(domain_side: float, coarse_cells_per_axis: int, L: int, S: int) -> MeshHierarchy:
    """Levels 0..L+S; level 0 has ``coarse_cells_per_axis`` cells per axis."""
    if domain_side <= 0:
        raise ValueError("domain_side must be positive")
    if coarse_cells_per_axis < 2:
        raise ValueError("need at least 2 cells per axis on level 0")
    if L < 0 or S < 1:
        raise ValueError("need L >= 0 and S >= 1")
    levels = [UniformQuadMesh(float(domain_side), coarse_cells_per_axis * 2 ** l, l)
              for l in range(L + S + 1)]
    return MeshHierarchy(float(domain_side), levels, L, S)


def prolongate(v_coarse, ops: TransferOps):
    v_coarse = np.asarray(v_coarse)
    if v_coarse.shape[0] != ops.P.shape[1]:
        raise ValueError(f"expected {ops.P.shape[1]} coarse coefficients, got {v_coarse.shape[0]}")
    return ops.P @ v_coarse


def restrict_rhs(f_fine, ops: TransferOps):
    f_fine = np.asarray(f_fine)
    if f_fine.shape[0] != ops.R.shape[1]:
        raise ValueError(f"expected {ops.R.shape[1]} fine coefficients, got {f_fine.shape[0]}")
    return ops.R @ f_fine
