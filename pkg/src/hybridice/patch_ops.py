"""Patch tiling of the fine level, gather/scatter operators and network input rows.

A patch is a block of ``2**N_M x 2**N_M`` working-level cells together with all
fine-level Q2 nodes inside it. Neighbouring patches share the nodes on their
common edges; scatter averages those shared predictions.
"""

from dataclasses import dataclass

import numpy as np

from .mesh import MeshHierarchy, build_q2_dofmap

__all__ = ["PatchPlan", "patch_sizes", "build_patch_plan", "gather", "scatter",
           "geometry_descriptors", "build_input", "N_GEO"]

N_GEO = 8


def patch_sizes(N_M: int, S: int):
    """(nodes per patch n_M, input width, output width)."""
    m = 2 * 2 ** (N_M + S) + 1
    n_M = m * m
    return n_M, 4 * n_M + N_GEO, 2 * n_M


@dataclass
class PatchPlan:
    N_M: int
    S: int
    nodes_per_side: int
    dof_index: np.ndarray        # (n_patches, 2 n_M) fine dofs, lexicographic nodes, interleaved comps
    weights: np.ndarray          # inverse multiplicity per fine dof
    boundary_mask: np.ndarray    # 0 on Dirichlet dofs, 1 elsewhere
    patch_cells: np.ndarray      # (n_patches, cells) fine cell ids covered by each patch
    geometry: np.ndarray         # (n_patches, 8)
    n_fine_dofs: int

    @property
    def n_M(self):
        return self.nodes_per_side ** 2

    @property
    def n_patches(self):
        return self.dof_index.shape[0]

    @property
    def N_in(self):
        return 4 * self.n_M + N_GEO

    @property
    def N_out(self):
        return 2 * self.n_M


def build_patch_plan(hierarchy: MeshHierarchy, N_M: int, S: int = None,
                     allow_large: bool = False) -> PatchPlan:
    S = hierarchy.jump if S is None else S
    if N_M < 0 or S < 1:
        raise ValueError("need N_M >= 0 and S >= 1")
    if N_M >= 3 and not allow_large:
        raise ValueError("patches with N_M >= 3 are disabled; pass allow_large=True to override")
    if hierarchy.coarse_level_index + S >= len(hierarchy.levels):
        raise ValueError(f"hierarchy has no level {S} above the working level")
    coarse = hierarchy.coarse
    fine = hierarchy.levels[hierarchy.coarse_level_index + S]
    block = 2 ** N_M
    if coarse.n % block:
        raise ValueError(f"{coarse.n} working cells per axis not divisible by {block}")
    npa = coarse.n // block
    fc = block * 2 ** S                       # fine cells per patch side
    m = 2 * fc + 1
    M = fine.nodes_per_axis
    loc = np.arange(m)
    LI, LJ = np.meshgrid(loc, loc, indexing="xy")
    pi, pj = np.meshgrid(np.arange(npa), np.arange(npa), indexing="xy")
    pi, pj = pi.ravel(), pj.ravel()
    nodes = (2 * fc * pj[:, None] + LJ.ravel()[None]) * M + 2 * fc * pi[:, None] + LI.ravel()[None]
    dofs = (2 * nodes[:, :, None] + np.arange(2)).reshape(len(pi), -1)
    n_dofs = 2 * fine.n_nodes
    mult = np.bincount(dofs.ravel(), minlength=n_dofs).astype(float)
    weights = np.zeros(n_dofs)
    weights[mult > 0] = 1.0 / mult[mult > 0]
    bmask = np.ones(n_dofs)
    bmask[build_q2_dofmap(fine, 2).boundary_dofs] = 0.0
    ci, cj = np.meshgrid(np.arange(fc), np.arange(fc), indexing="xy")
    cells = (fc * pj[:, None] + cj.ravel()[None]) * fine.n + fc * pi[:, None] + ci.ravel()[None]
    side = fc * fine.h / hierarchy.domain_side
    geo = np.tile(np.r_[np.full(4, side), np.full(4, np.pi / 2)], (len(pi), 1))
    return PatchPlan(N_M, S, m, dofs, weights, bmask, cells, geo, n_dofs)


def gather(plan: PatchPlan, x_fine):
    x_fine = np.asarray(x_fine)
    if x_fine.shape[0] != plan.n_fine_dofs:
        raise ValueError(f"expected {plan.n_fine_dofs} fine values, got {x_fine.shape[0]}")
    return x_fine[plan.dof_index]


def scatter(plan: PatchPlan, D):
    """Average patch predictions onto the fine level and zero Dirichlet entries."""
    D = np.asarray(D, dtype=float)
    if D.shape != plan.dof_index.shape:
        raise ValueError(f"correction matrix has shape {D.shape}, expected {plan.dof_index.shape}")
    acc = np.bincount(plan.dof_index.ravel(), weights=D.ravel(), minlength=plan.n_fine_dofs)
    return plan.boundary_mask * plan.weights * acc


def geometry_descriptors(plan: PatchPlan, hierarchy: MeshHierarchy = None):
    """Edge lengths (bottom, right, top, left; relative to the domain side) and corner angles."""
    return plan.geometry.copy()


def build_input(plan: PatchPlan, v_fine, r_fine, mask_state=False, mask_residual=False):
    """Row per patch: [velocity | residual | geometry]; masked blocks are zeroed."""
    Xv = gather(plan, v_fine)
    Xr = gather(plan, r_fine)
    if mask_state:
        Xv = np.zeros_like(Xv)
    if mask_residual:
        Xr = np.zeros_like(Xr)
    return np.hstack([Xv, Xr, plan.geometry])
