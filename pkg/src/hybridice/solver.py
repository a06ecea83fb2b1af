"""Modified Newton with backtracking line search, GMRES and geometric multigrid."""

import time
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse.linalg as spla

from .mesh import TransferOps, UniformQuadMesh, build_q2_dofmap
from .momentum import assemble_jacobian, assemble_residual

__all__ = ["NewtonConfig", "NewtonReport", "GMRESInfo", "gmres", "Multigrid",
           "gmres_mg", "line_search", "newton_solve", "mesh_ladder", "precision_floor"]


@dataclass
class NewtonConfig:
    eps_nl: float = 1e-10
    max_iters: int = 100
    ls_factor: float = 0.5
    ls_max_trials: int = 12
    damping_theta: float = 1.0
    theta_min: float = 1.0 / 64
    forcing_eta: float = 1e-4
    gmres_restart: int = 50
    gmres_max_restarts: int = 20
    gmres_stall_ratio: float = 0.9   # a restart cycle must cut the residual below this ratio
    direct_fallback: bool = True     # sparse LU when GMRES stagnates
    abs_tol: float = 0.0
    # stop once |r| is within this many ulps of |J||v| (0 disables)
    precision_floor: float = 1.0
    floor_stall: float = 0.5        # below the floor, a step must at least halve ||r||
    floor_stall_steps: int = 3      # consecutive stalled steps that end the solve

    def __post_init__(self):
        if not 0 < self.eps_nl < 1:
            raise ValueError("eps_nl must lie in (0, 1)")
        if not 0 < self.forcing_eta < 1:
            raise ValueError("forcing_eta must lie in (0, 1)")
        if not 0 <= self.damping_theta <= 1:
            raise ValueError("damping_theta must lie in [0, 1]")


@dataclass
class NewtonReport:
    iterations: int = 0
    converged: bool = False
    residual_history: list = field(default_factory=list)
    gmres_iters: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    rejected: int = 0
    wall_time: float = 0.0
    floor: float = 0.0              # last precision floor estimate
    at_floor: bool = False          # stopped at the rounding floor above eps_nl
    direct_solves: int = 0          # linear solves handed to sparse LU

    @property
    def accepted(self):
        """Converged, or stalled at the rounding floor of the residual."""
        return self.converged or self.at_floor


@dataclass
class GMRESInfo:
    iterations: int
    converged: bool
    rel_residual: float


def gmres(A, b, M=None, tol=1e-8, restart=50, max_restarts=20, x0=None, stall_ratio=None):
    """Right-preconditioned restarted GMRES.

    Stops once the true residual satisfies ||b - A x|| <= tol ||b||. On
    stagnation (restarts exhausted, or one cycle reducing the residual by
    less than ``stall_ratio``) the best iterate seen at a restart boundary is
    returned with ``converged=False``.
    """
    matvec = A.matvec if hasattr(A, "matvec") else (lambda x: A @ x)
    prec = (lambda x: x) if M is None else M
    n = b.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), GMRESInfo(0, True, 0.0)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - matvec(x)
    best_x, best_res = x.copy(), np.linalg.norm(r)
    total = 0
    for cycle in range(max_restarts):
        beta = np.linalg.norm(r)
        if beta <= tol * bnorm:
            return x, GMRESInfo(total, True, beta / bnorm)
        m = restart
        V = np.zeros((m + 1, n))
        Z = np.zeros((m, n))
        Hm = np.zeros((m + 1, m))
        cs, sn = np.zeros(m), np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        for j in range(m):
            Z[j] = prec(V[j])
            w = matvec(Z[j])
            for i in range(j + 1):      # modified Gram-Schmidt
                Hm[i, j] = w @ V[i]
                w -= Hm[i, j] * V[i]
            Hm[j + 1, j] = np.linalg.norm(w)
            for i in range(j):
                t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
                Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
                Hm[i, j] = t
            den = np.hypot(Hm[j, j], Hm[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if den == 0 else (Hm[j, j] / den, Hm[j + 1, j] / den)
            Hm[j, j] = cs[j] * Hm[j, j] + sn[j] * Hm[j + 1, j]
            Hm[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_used = j + 1
            breakdown = Hm[j + 1, j] == 0 and den == 0
            if abs(g[j + 1]) <= tol * bnorm or breakdown:
                break
            if j + 1 < m:
                nv = np.linalg.norm(w)
                if nv == 0:
                    break
                V[j + 1] = w / nv
        y = np.linalg.lstsq(np.triu(Hm[:j_used, :j_used]), g[:j_used], rcond=None)[0]
        x = x + y @ Z[:j_used]
        r = b - matvec(x)
        res = np.linalg.norm(r)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= tol * bnorm:
            return x, GMRESInfo(total, True, res / bnorm)
        if stall_ratio is not None and res > stall_ratio * beta:
            break
    return best_x, GMRESInfo(total, False, best_res / bnorm)


def mesh_ladder(mesh: UniformQuadMesh, min_cells: int = 2):
    """Meshes from the coarsest reachable by halving up to ``mesh``."""
    out = [mesh]
    while out[0].n % 2 == 0 and out[0].n // 2 >= min_cells:
        out.insert(0, UniformQuadMesh(mesh.side, out[0].n // 2, out[0].level - 1))
    return out


@lru_cache(maxsize=32)
def _interior_prolongation(n_coarse: int):
    P = TransferOps.between(n_coarse, 1, 2).P
    ic = build_q2_dofmap(UniformQuadMesh(1.0, n_coarse), 2).interior_dofs
    jf = build_q2_dofmap(UniformQuadMesh(1.0, 2 * n_coarse), 2).interior_dofs
    return P[jf][:, ic].tocsr()


class Multigrid:
    """V(nu, nu) cycle with damped Jacobi and Galerkin coarse operators.

    Works on interior unknowns only, so Dirichlet rows are never touched.
    """

    def __init__(self, A_interior, meshes, nu=2, omega=0.6):
        self.nu, self.omega = nu, omega
        self.A = [A_interior.tocsr()]
        self.P = []
        for coarse in reversed(meshes[:-1]):
            P = _interior_prolongation(coarse.n)
            self.P.insert(0, P)
            self.A.insert(0, (P.T @ self.A[0] @ P).tocsr())
        self.dinv = [self.omega / A.diagonal() for A in self.A]
        self.coarse_lu = spla.splu(self.A[0].tocsc())

    def _cycle(self, lvl, b):
        if lvl == 0:
            return self.coarse_lu.solve(b)
        A, dinv = self.A[lvl], self.dinv[lvl]
        x = dinv * b
        for _ in range(self.nu - 1):
            x += dinv * (b - A @ x)
        rc = self.P[lvl - 1].T @ (b - A @ x)
        x += self.P[lvl - 1] @ self._cycle(lvl - 1, rc)
        for _ in range(self.nu):
            x += dinv * (b - A @ x)
        return x

    def __call__(self, b):
        return self._cycle(len(self.A) - 1, b)


def gmres_mg(J, rhs, rel_tol, meshes, J_spd=None, restart=50, max_restarts=20,
             stall_ratio=None):
    """Solve J x = rhs where boundary rows of J are identity rows.

    Boundary values are taken from ``rhs``; the interior block is solved by
    GMRES preconditioned with a multigrid cycle on ``J_spd`` (or ``J``).
    """
    top = meshes[-1]
    dm = build_q2_dofmap(top, 2)
    ii, bb = dm.interior_dofs, dm.boundary_dofs
    x = np.zeros_like(rhs)
    x[bb] = rhs[bb]
    J = J.tocsr()
    rhs_i = rhs[ii] - J[ii][:, bb] @ x[bb]
    Jii = J[ii][:, ii].tocsr()
    Pii = (J_spd if J_spd is not None else J).tocsr()[ii][:, ii]
    mg = Multigrid(Pii, meshes)
    x[ii], info = gmres(Jii, rhs_i, M=mg, tol=rel_tol, restart=restart,
                        max_restarts=max_restarts, stall_ratio=stall_ratio)
    return x, info


def line_search(r_eval, v, dv, r_norm, factor=0.5, max_trials=12):
    """Backtracking over alpha in {1, factor, factor^2, ...}.

    Returns ``(alpha, residual)`` for the first trial with a strictly smaller
    residual norm than ``r_norm``; ``alpha == 0`` signals failure.
    """
    alpha = 1.0
    for _ in range(max_trials):
        try:
            r = r_eval(v + alpha * dv)
        except ArithmeticError:
            r = None
        if r is not None and np.linalg.norm(r) < r_norm:
            return alpha, r
        alpha *= factor
    return 0.0, None


def precision_floor(J, v, ulps=1.0):
    """Residual change caused by rounding v: ulps * eps * | |J| |v| |."""
    return ulps * np.finfo(float).eps * np.linalg.norm(abs(J) @ np.abs(v))


def newton_solve(ctx, f, v0, cfg: NewtonConfig = None, meshes=None):
    """Modified Newton for the momentum residual on ``ctx.mesh``.

    The rank-one stress remainder is scaled by theta (start at
    ``cfg.damping_theta``); when the line search fails theta is halved and the
    step recomputed, and it is restored after each accepted step.
    """
    cfg = cfg or NewtonConfig()
    meshes = meshes or mesh_ladder(ctx.mesh)
    t0 = time.perf_counter()
    rep = NewtonReport()
    v = np.array(v0, dtype=float)

    def r_eval(w):
        return assemble_residual(ctx, w, f)

    r = r_eval(v)
    rn = r0 = np.linalg.norm(r)
    rep.residual_history.append(rn)
    if rn <= cfg.abs_tol or rn == 0.0:
        rep.converged = True
        rep.wall_time = time.perf_counter() - t0
        return v, rep
    theta = cfg.damping_theta
    stalls = 0
    while rep.iterations < cfg.max_iters:
        J, Jspd = assemble_jacobian(ctx, v, theta=theta, with_spd=True)
        if cfg.precision_floor > 0:
            rep.floor = precision_floor(J, v, cfg.precision_floor)
        dv, info = gmres_mg(J, -r, cfg.forcing_eta, meshes, Jspd, cfg.gmres_restart,
                            cfg.gmres_max_restarts, cfg.gmres_stall_ratio)
        rep.gmres_iters.append(info.iterations)
        if not info.converged and cfg.direct_fallback:
            dv = spla.splu(J.tocsc()).solve(-r)
            rep.direct_solves += 1
        alpha, r_new = line_search(r_eval, v, dv, rn, cfg.ls_factor, cfg.ls_max_trials)
        if alpha == 0.0:
            rep.rejected += 1
            if rn <= rep.floor:
                rep.at_floor = True
                break
            if theta / 2 < cfg.theta_min:
                break
            theta /= 2
            continue
        v = v + alpha * dv
        r, rn_prev, rn = r_new, rn, np.linalg.norm(r_new)
        rep.iterations += 1
        rep.alphas.append(alpha)
        rep.thetas.append(theta)
        rep.residual_history.append(rn)
        theta = cfg.damping_theta
        if rn <= cfg.eps_nl * r0 or rn <= cfg.abs_tol:
            rep.converged = True
            break
        # stagnating within rounding noise: several steps below the floor without halving ||r||
        stalls = stalls + 1 if rn <= rep.floor and rn > cfg.floor_stall * rn_prev else 0
        if stalls >= cfg.floor_stall_steps:
            rep.at_floor = True
            break
    if not rep.converged and rn <= rep.floor:
        rep.at_floor = True
    rep.wall_time = time.perf_counter() - t0
    return v, rep
