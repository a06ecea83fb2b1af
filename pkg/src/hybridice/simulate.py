"""Trajectory drivers: plain runs on one level, hybrid runs, training-data extraction."""

from dataclasses import dataclass, field, replace

import numpy as np

from .bench import Scenario, initial_state
from .hybrid import HybridModel, SafeguardConfig, hybrid_step
from .mesh import MeshHierarchy, build_hierarchy
from .metrics import (LKFParams, RunMetrics, detect_lkfs, mean_l2_error,
                      shear_deformation, timing_report)
from .network import CorrectionNet
from .patch_ops import PatchPlan, build_input, build_patch_plan, gather
from .rheology import PhysicalParams
from .solver import NewtonConfig
from .stepping import LevelStepper

__all__ = ["Trajectory", "Setup", "make_setup", "run_level", "run_hybrid",
           "warmup_skip", "extract_samples", "evaluate_run"]


@dataclass
class Trajectory:
    """Per-step snapshots after each completed step (index 0 = after step 1)."""
    mesh: object
    times: list = field(default_factory=list)
    v: list = field(default_factory=list)
    A: list = field(default_factory=list)
    H: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    v_fine: list = field(default_factory=list)
    r_fine: list = field(default_factory=list)
    infos: list = field(default_factory=list)
    failed: bool = False
    failed_step: int = -1

    @property
    def n_newton(self):
        return sum(s.report.iterations for s in self.steps)


@dataclass
class Setup:
    scenario: Scenario
    hierarchy: MeshHierarchy
    plan: PatchPlan
    coarse: LevelStepper
    fine: LevelStepper


def make_setup(scenario: Scenario, phys: PhysicalParams = None, newton: NewtonConfig = None,
               forcing_time="n", allow_large_patches=False) -> Setup:
    phys = phys or PhysicalParams()
    phys = replace(phys, rheology=replace(phys.rheology, P_star=scenario.P_star))
    h = build_hierarchy(scenario.domain_side, scenario.coarse_cells, scenario.L, scenario.S)
    plan = build_patch_plan(h, scenario.N_M, scenario.S, allow_large=allow_large_patches)
    coarse = LevelStepper(h.coarse, scenario, phys, newton, forcing_time)
    fine = LevelStepper(h.fine, scenario, phys, newton, forcing_time)
    return Setup(scenario, h, plan, coarse, fine)


def run_level(stepper: LevelStepper, n_steps: int, stop_on_failure=True) -> Trajectory:
    """Plain simulation (no network) on the stepper's level."""
    sc = stepper.scenario
    v, A, H = initial_state(sc, stepper.mesh)
    traj = Trajectory(stepper.mesh)
    t = 0.0
    for n in range(n_steps):
        res = stepper.step(v, A, H, t)
        v, A, H, t = res.v, res.A, res.H, t + sc.k
        traj.steps.append(res)
        traj.times.append(t)
        traj.v.append(v)
        traj.A.append(A)
        traj.H.append(H)
        if not res.report.accepted:
            traj.failed, traj.failed_step = True, n
            if stop_on_failure:
                break
    return traj


def run_hybrid(setup: Setup, n_steps: int, net: CorrectionNet = None,
               safeguard: SafeguardConfig = None, masks=(), record_inputs=False,
               stop_on_failure=True, rhs_mode="additive") -> Trajectory:
    """Hybrid run; with ``net=None`` the coarse trajectory is the baseline one."""
    model = HybridModel(setup.hierarchy, setup.coarse, setup.fine, setup.plan, net,
                        safeguard or SafeguardConfig(), tuple(masks), rhs_mode,
                        record_inputs=record_inputs)
    v, A, H = initial_state(setup.scenario, setup.hierarchy.coarse)
    state = model.initial_state(v, A, H)
    traj = Trajectory(setup.hierarchy.coarse)
    for n in range(n_steps):
        state, res, info = hybrid_step(model, state)
        traj.steps.append(res)
        traj.infos.append(info)
        traj.times.append(state.t)
        traj.v.append(state.v_coarse)
        traj.A.append(state.A)
        traj.H.append(state.H)
        traj.v_fine.append(state.v_fine)
        if record_inputs:
            traj.r_fine.append(info.r_fine)
        if not res.report.accepted:
            traj.failed, traj.failed_step = True, n
            if stop_on_failure:
                break
    return traj


def warmup_skip(n_steps: int, full_skip=30, full_total=96):
    """Warm-up steps to discard, scaled from the reference protocol."""
    return int(round(full_skip / full_total * n_steps))


def extract_samples(setup: Setup, baseline: Trajectory, reference: Trajectory, skip: int):
    """Patch rows X and targets Y from a recorded baseline run and a fine reference.

    Returns (X, Y, snapshot index per row).
    """
    if len(baseline.times) != len(reference.times) or not np.allclose(baseline.times, reference.times):
        raise ValueError("baseline and reference time grids differ")
    P = setup.hierarchy.coarse_to_fine(2).P
    Xs, Ys, ids = [], [], []
    for n in range(skip, len(baseline.times)):
        vP = P @ baseline.v[n]
        X = build_input(setup.plan, vP, baseline.r_fine[n])
        Y = gather(setup.plan, reference.v[n] - vP)
        Xs.append(X)
        Ys.append(Y)
        ids.append(np.full(len(X), n))
    return np.vstack(Xs), np.vstack(Ys), np.concatenate(ids)


def evaluate_run(traj: Trajectory, reference: Trajectory = None, prolong=None,
                 lkf: LKFParams = LKFParams()) -> RunMetrics:
    """E_l2 against the reference (mean over steps), LKF count at the final step, timers."""
    m = timing_report(traj.steps)
    if reference is not None and len(reference.v) == len(traj.v):
        if traj.v_fine:
            fine = traj.v_fine
        elif prolong is not None:
            fine = [prolong @ v for v in traj.v]
        else:
            fine = traj.v
        m.E_l2 = mean_l2_error(fine, reference.v)
    if traj.v:
        m.N_LKF = detect_lkfs(shear_deformation(traj.v[-1], traj.mesh), lkf)[0]
    return m
