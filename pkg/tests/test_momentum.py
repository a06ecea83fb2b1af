import numpy as np
import pytest
import scipy.sparse as sp

from conftest import SIDE, make_ctx
from hybridice.fem import mass_matrix
from hybridice.mesh import UniformQuadMesh
from hybridice.momentum import (AssemblyError, MomentumContext, assemble_jacobian,
                                assemble_residual, assemble_rhs, zero_field)
from hybridice.rheology import PhysicalParams


def _interior_random(ctx, rng, scale=0.1):
    v = scale * rng.standard_normal(ctx.n_dofs)
    v[ctx.bmask] = 0.0
    return v


def test_rhs_vanishes_without_forcing():
    ctx = make_ctx(4, ocean=zero_field)
    assert not np.any(assemble_rhs(ctx, np.zeros(ctx.n_dofs)))


def test_rhs_constant_wind_matches_mass_action():
    m = UniformQuadMesh(SIDE, 4)
    wind = lambda xy, t: np.broadcast_to([1.0, 0.0], np.shape(xy)[:-1] + (2,))
    ph = PhysicalParams()
    ctx = MomentumContext(m, 120.0, np.ones(m.n_nodes), np.full(m.n_nodes, 0.3), wind=wind)
    f = assemble_rhs(ctx, np.zeros(ctx.n_dofs))
    M = mass_matrix(m, components=2)
    expect = 120.0 * ph.C_air * ph.rho_air * (M @ np.tile([1.0, 0.0], m.n_nodes))
    expect[ctx.bmask] = 0
    assert np.allclose(f, expect, rtol=1e-13, atol=0)


def test_rhs_inertia_block():
    m = UniformQuadMesh(SIDE, 4)
    ctx = MomentumContext(m, 120.0, np.ones(m.n_nodes), np.full(m.n_nodes, 0.3))
    v = np.tile([0.2, -0.1], m.n_nodes)
    f = assemble_rhs(ctx, v)
    expect = 900.0 * 0.3 * (mass_matrix(m, components=2) @ v)
    expect[ctx.bmask] = 0
    assert np.allclose(f, expect, rtol=1e-13, atol=0)


def test_residual_zero_at_rest():
    # uniform strength: the -P/2 I stress has no divergence against interior test functions
    m = UniformQuadMesh(SIDE, 4)
    ctx = MomentumContext(m, 120.0, np.ones(m.n_nodes), np.full(m.n_nodes, 0.3))
    r = assemble_residual(ctx, np.zeros(ctx.n_dofs), np.zeros(ctx.n_dofs))
    assert np.abs(r).max() <= 1e-12 * 120.0 * 8250.0 * SIDE


def test_dirichlet_rows_and_continuity(rng):
    ctx = make_ctx(4)
    v = rng.standard_normal(ctx.n_dofs)
    f = rng.standard_normal(ctx.n_dofs)
    r = assemble_residual(ctx, v, f)
    assert np.array_equal(r[ctx.bmask], v[ctx.bmask])
    d = rng.standard_normal(ctx.n_dofs)
    gaps = [np.linalg.norm(assemble_residual(ctx, v + h * d, f) - r) for h in (1e-2, 1e-4, 1e-6)]
    assert gaps[0] > gaps[1] > gaps[2]
    J = assemble_jacobian(ctx, v)
    rows = np.flatnonzero(ctx.bmask)
    assert np.array_equal(J[rows].toarray(), sp.identity(ctx.n_dofs, format="csr")[rows].toarray())


def test_single_interior_node_solution():
    # 1 cell: only the centre node is free; solve the 2x2 nonlinear system by Newton
    m = UniformQuadMesh(SIDE, 1)
    wind = lambda xy, t: np.broadcast_to([10.0, 5.0], np.shape(xy)[:-1] + (2,))
    ctx = MomentumContext(m, 120.0, np.ones(9), np.full(9, 0.3), wind=wind)
    f = assemble_rhs(ctx, np.zeros(18))
    v = np.zeros(18)
    for _ in range(60):
        r = assemble_residual(ctx, v, f)
        J = assemble_jacobian(ctx, v).toarray()
        v = v - np.linalg.solve(J, r)
    assert np.linalg.norm(assemble_residual(ctx, v, f)) <= 1e-9 * np.linalg.norm(f)


@pytest.mark.parametrize("n", [4, 8])
def test_jacobian_matches_finite_differences(n, rng):
    ctx = make_ctx(n)
    f = np.zeros(ctx.n_dofs)
    errs = []
    for _ in range(50):
        v = _interior_random(ctx, rng)
        d = _interior_random(ctx, rng, 1.0)
        h = 1e-7 * np.linalg.norm(v) / np.linalg.norm(d)
        fd = (assemble_residual(ctx, v + h * d, f) - assemble_residual(ctx, v - h * d, f)) / (2 * h)
        errs.append(np.linalg.norm(assemble_jacobian(ctx, v) @ d - fd) / np.linalg.norm(fd))
    assert np.median(errs) <= 1e-5


def test_drag_derivative_vanishes_at_ocean_velocity():
    ctx = make_ctx(4)
    v = np.asarray(ctx.ocean(ctx.mesh.node_coords, 0.0)).ravel()
    with_drag = assemble_jacobian(ctx, v)
    without = assemble_jacobian(ctx, v, drag=False)
    diff = abs(with_drag - without).max()
    assert diff < 1e-6 * abs(without).max()


def test_spd_part_positive_and_viscous_block_symmetric(rng):
    ctx = make_ctx(4)
    v = _interior_random(ctx, rng)
    _, spd = assemble_jacobian(ctx, v, with_spd=True)
    ii = ~ctx.bmask
    S = spd[ii][:, ii]
    for _ in range(20):
        x = rng.standard_normal(S.shape[0])
        assert x @ (S @ x) > 0
    J = assemble_jacobian(ctx, v, coriolis=False, drag=False)[ii][:, ii]
    assert abs(J - J.T).max() <= 1e-12 * abs(J).max()


def test_non_finite_input_raises():
    ctx = make_ctx(2)
    v = np.zeros(ctx.n_dofs)
    v[ctx.n_dofs // 2] = np.nan
    with pytest.raises(AssemblyError):
        assemble_residual(ctx, v, np.zeros(ctx.n_dofs))


def test_size_mismatch_raises():
    ctx = make_ctx(2)
    with pytest.raises(ValueError):
        assemble_rhs(ctx, np.zeros(3))
