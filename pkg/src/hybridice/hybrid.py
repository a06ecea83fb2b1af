"""Coarse Newton solve augmented by patch-wise network corrections on a finer level.

Per step: transport on the working level, fine load vector from the stored
corrected state, coarse load (baseline load plus the restricted perturbation
caused by the correction), coarse Newton solve, prolongation, fine residual,
gather / predict / scatter, and storage of the corrected fine state.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .mesh import MeshHierarchy
from .momentum import assemble_residual, assemble_rhs
from .network import CorrectionNet, predict
from .patch_ops import PatchPlan, build_input, scatter
from .stepping import LevelStepper, StepResult

__all__ = ["SafeguardConfig", "HybridState", "HybridStepInfo", "HybridModel",
           "smallness_check", "ablate_inputs", "corrected_fine_rhs", "hybrid_step"]

SAFEGUARD_MODES = ("off", "monitor", "drop", "scale")


@dataclass
class SafeguardConfig:
    mode: str = "off"
    beta: float = 0.5

    def __post_init__(self):
        if self.mode not in SAFEGUARD_MODES:
            raise ValueError(f"safeguard mode must be one of {SAFEGUARD_MODES}")
        if not 0 < self.beta < 1:
            raise ValueError("beta must lie in (0, 1)")


def smallness_check(g_norm, r_base_norm, beta, mode="drop"):
    """Return (accepted, factor) for the perturbation bound ||g|| <= beta ||r_base||.

    ``factor`` multiplies the correction: 1 when accepted or only monitoring,
    0 when dropped, and beta ||r_base|| / ||g|| in scaling mode.
    """
    if g_norm <= beta * r_base_norm:
        return True, 1.0
    if mode == "scale":
        return False, beta * r_base_norm / g_norm
    if mode in ("monitor", "off"):
        return False, 1.0
    return False, 0.0


def ablate_inputs(X, n_M, mode):
    """Zero the velocity ("mask_state") or residual ("mask_residual") block of batched rows."""
    X = np.array(X, dtype=float)
    nv = 2 * n_M
    if mode == "mask_state":
        X[:, :nv] = 0.0
    elif mode == "mask_residual":
        X[:, nv:2 * nv] = 0.0
    elif mode not in (None, "none"):
        raise ValueError(f"unknown ablation mode {mode!r}")
    return X


@dataclass
class HybridState:
    v_coarse: np.ndarray
    A: np.ndarray
    H: np.ndarray
    v_fine: np.ndarray            # stored corrected fine velocity
    step: int = 0
    t: float = 0.0


@dataclass
class HybridStepInfo:
    g_norm: float = 0.0
    r_base_norm: float = float("nan")
    violated: bool = False
    factor: float = 1.0
    fine_res_before: float = float("nan")
    fine_res_after: float = float("nan")
    correction_norm: float = 0.0
    r_fine: np.ndarray = None     # fine residual at the prolongated solution (if recorded)


@dataclass
class HybridModel:
    """Everything a hybrid step needs besides the evolving state."""
    hierarchy: MeshHierarchy
    coarse: LevelStepper
    fine: LevelStepper
    plan: PatchPlan
    net: CorrectionNet = None
    safeguard: SafeguardConfig = field(default_factory=SafeguardConfig)
    masks: tuple = ()
    rhs_mode: str = "additive"
    diagnostics: bool = True
    record_inputs: bool = False

    def __post_init__(self):
        if self.rhs_mode not in ("additive", "fine"):
            raise ValueError("rhs_mode must be 'additive' or 'fine'")
        self.P = self.hierarchy.coarse_to_fine(2)
        self.Ps = self.hierarchy.coarse_to_fine(1)
        if self.net is not None and (self.net.N_in != self.plan.N_in
                                     or self.net.N_out != self.plan.N_out
                                     or (self.net.N_M, self.net.S) not in
                                     ((self.plan.N_M, self.plan.S), (-1, -1))):
            raise ValueError(f"network (N_M={self.net.N_M}, S={self.net.S}) does not match "
                             f"patch plan (N_M={self.plan.N_M}, S={self.plan.S})")

    def initial_state(self, v, A, H):
        return HybridState(v.copy(), A.copy(), H.copy(), self.P.P @ v)


def corrected_fine_rhs(model: HybridModel, state: HybridState, A1, H1, t_n):
    """Fine load from the stored corrected velocity and prolongated tracers.

    Returns (fine context, load vector).
    """
    PA1, PH1, PH = model.Ps.P @ A1, model.Ps.P @ H1, model.Ps.P @ state.H
    ctx_f = model.fine.context(PA1, PH1, PH, t_n)
    return ctx_f, assemble_rhs(ctx_f, state.v_fine)


def hybrid_step(model: HybridModel, state: HybridState):
    """Advance one step; returns (new state, StepResult, HybridStepInfo)."""
    info = HybridStepInfo()
    co = model.coarse
    v_c, t_n = state.v_coarse, state.t
    A1, H1, clips = co.transport(v_c, state.A, state.H)

    t0 = time.perf_counter()
    P, R = model.P.P, model.P.R
    ctx_c = co.context(A1, H1, state.H, t_n)
    f_base = assemble_rhs(ctx_c, v_c)
    # correction carried by the stored state and the load perturbation it induces
    dv = state.v_fine - P @ v_c
    ctx_f, f_fine = corrected_fine_rhs(model, state, A1, H1, t_n)
    if np.any(dv):
        pert = ctx_f.rho_mass(previous=True) @ dv
        pert[ctx_f.bmask] = 0.0
        g = R @ pert
        g[ctx_c.bmask] = 0.0
    else:
        g = np.zeros_like(f_base)
    info.g_norm = float(np.linalg.norm(g))
    if model.safeguard.mode != "off":
        info.r_base_norm = float(np.linalg.norm(assemble_residual(ctx_c, v_c, f_base)))
        ok, s = smallness_check(info.g_norm, info.r_base_norm, model.safeguard.beta,
                                model.safeguard.mode)
        info.violated, info.factor = not ok, s
        if s != 1.0:
            g = s * g
            state_v = P @ v_c + s * dv
            f_fine = assemble_rhs(ctx_f, state_v)
    if model.rhs_mode == "fine":
        f_c = R @ f_fine
        f_c[ctx_c.bmask] = 0.0
    else:
        f_c = f_base + g if np.any(g) else f_base
    v1, rep = co.solve(ctx_c, f_c, v_c)

    vP = P @ v1
    r_fine = assemble_residual(ctx_f, vP, f_fine)
    t_cpy = t_nn = 0.0
    if model.net is not None:
        tc = time.perf_counter()
        X = build_input(model.plan, vP, r_fine)
        for m in model.masks:
            X = ablate_inputs(X, model.plan.n_M, m)
        tn = time.perf_counter()
        D = predict(model.net, X)
        tn2 = time.perf_counter()
        dv_new = scatter(model.plan, D)
        t_cpy = (tn - tc) + (time.perf_counter() - tn2)
        t_nn = tn2 - tn
    else:
        dv_new = np.zeros_like(vP)
    v_fine = vP + dv_new
    t_mom = time.perf_counter() - t0

    info.correction_norm = float(np.linalg.norm(dv_new))
    if model.record_inputs:
        info.r_fine = r_fine
    if model.diagnostics:
        info.fine_res_before = float(np.linalg.norm(r_fine))
        info.fine_res_after = (info.fine_res_before if not np.any(dv_new) else
                               float(np.linalg.norm(assemble_residual(ctx_f, v_fine, f_fine))))
    new = HybridState(v1, A1, H1, v_fine, state.step + 1, t_n + co.scenario.k)
    res = StepResult(v1, A1, H1, rep, clips, t_mom, rep.wall_time, t_cpy, t_nn)
    return new, res, info
