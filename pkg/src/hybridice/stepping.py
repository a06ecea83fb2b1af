"""One operator-split time step (transport, then momentum) on a single mesh level."""

import time
from dataclasses import dataclass

import numpy as np

from .bench import Scenario
from .momentum import MomentumContext, assemble_rhs
from .rheology import PhysicalParams
from .solver import NewtonConfig, NewtonReport, mesh_ladder, newton_solve
from .transport import advance_ice

__all__ = ["LevelStepper", "StepResult"]


@dataclass
class StepResult:
    v: np.ndarray
    A: np.ndarray
    H: np.ndarray
    report: NewtonReport
    clips: int = 0
    t_mom: float = 0.0
    t_nk: float = 0.0
    t_cpy: float = 0.0
    t_nn: float = 0.0


class LevelStepper:
    """Time stepping on ``mesh`` for a scenario.

    ``forcing_time`` selects whether wind and ocean are evaluated at the old
    time level ("n") or the new one ("n+1").
    """

    def __init__(self, mesh, scenario: Scenario, phys: PhysicalParams = None,
                 newton: NewtonConfig = None, forcing_time: str = "n", delta0: float = 0.5):
        if forcing_time not in ("n", "n+1"):
            raise ValueError("forcing_time must be 'n' or 'n+1'")
        self.mesh = mesh
        self.meshes = mesh_ladder(mesh)
        self.scenario = scenario
        self.phys = phys or PhysicalParams()
        self.newton = newton or NewtonConfig()
        self.forcing_time = forcing_time
        self.delta0 = delta0

    def transport(self, v, A, H):
        sc = self.scenario
        return advance_ice(self.mesh, A, H, v, sc.k, sc.A0, sc.H0, self.delta0)

    def context(self, A1, H1, H_prev, t_n):
        t = t_n if self.forcing_time == "n" else t_n + self.scenario.k
        return MomentumContext(self.mesh, self.scenario.k, A1, H1, self.scenario.ocean,
                               self.scenario.wind, self.phys, t, H_prev)

    def solve(self, ctx, f, v0):
        return newton_solve(ctx, f, v0, self.newton, self.meshes)

    def step(self, v, A, H, t_n) -> StepResult:
        A1, H1, clips = self.transport(v, A, H)
        t0 = time.perf_counter()
        ctx = self.context(A1, H1, H, t_n)
        f = assemble_rhs(ctx, v)
        v1, rep = self.solve(ctx, f, v)
        t_mom = time.perf_counter() - t0
        return StepResult(v1, A1, H1, rep, clips, t_mom, rep.wall_time)
