"""Error norms, shear deformation, a simple LKF counter and run timing summaries."""

import csv
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage
from skimage.measure import label
from skimage.morphology import skeletonize

from .element import q2_grad
from .mesh import UniformQuadMesh

__all__ = ["RunMetrics", "LKFParams", "l2_error", "mean_l2_error", "shear_deformation",
           "detect_lkfs", "timing_report", "write_metrics_csv", "metrics_row", "CSV_COLUMNS"]

CSV_COLUMNS = ["run_id", "N_M", "S", "l", "w", "scenario", "E_l2", "N_LKF", "N_Newton",
               "T_mom", "T_NK", "T_cpy", "T_nn", "k", "eps_nl"]


@dataclass
class RunMetrics:
    E_l2: float = float("nan")
    N_LKF: int = -1
    N_Newton: int = 0
    T_mom: float = 0.0
    T_NK: float = 0.0
    T_cpy: float = 0.0
    T_nn: float = 0.0


@dataclass(frozen=True)
class LKFParams:
    log_eps: float = 1e-12
    percentile: float = 90.0
    min_length: int = 3


def l2_error(v_fine, v_ref):
    """Euclidean norm of the coefficient difference."""
    v_fine, v_ref = np.asarray(v_fine), np.asarray(v_ref)
    if v_fine.shape != v_ref.shape:
        raise ValueError(f"shape mismatch {v_fine.shape} vs {v_ref.shape}")
    return float(np.linalg.norm(v_fine - v_ref))


def mean_l2_error(traj, ref):
    """Average of per-snapshot errors over a trajectory."""
    if len(traj) != len(ref) or not len(traj):
        raise ValueError("trajectories must be non-empty and of equal length")
    return float(np.mean([l2_error(a, b) for a, b in zip(traj, ref)]))


def shear_deformation(v, mesh: UniformQuadMesh):
    """Cell-centre shear rate sqrt((e11 - e22)^2 + 4 e12^2), shape (n, n), row = y index."""
    v = np.asarray(v, dtype=float)
    if v.shape != (2 * mesh.n_nodes,):
        raise ValueError("velocity size does not match mesh")
    dphi = q2_grad(np.array(0.5), np.array(0.5)) / mesh.h          # (9, 2)
    vc = v.reshape(-1, 2)[mesh.cell_nodes]                         # (nc, 9, 2)
    G = np.einsum("aj,kai->kij", dphi, vc)
    e11, e22 = G[:, 0, 0], G[:, 1, 1]
    e12 = 0.5 * (G[:, 0, 1] + G[:, 1, 0])
    return np.sqrt((e11 - e22) ** 2 + 4.0 * e12 ** 2).reshape(mesh.n, mesh.n)


def detect_lkfs(shear, params: LKFParams = LKFParams()):
    """Count elongated high-shear features; returns (count, labelled segment image)."""
    shear = np.asarray(shear, dtype=float)
    field_ = np.log(shear + params.log_eps)
    thr = np.percentile(field_, params.percentile)
    mask = field_ > thr
    skel = skeletonize(mask)
    nbrs = ndimage.convolve(skel.astype(int), np.ones((3, 3), dtype=int),
                            mode="constant") - skel
    segments = skel & ~(nbrs > 2)
    lab = label(segments, connectivity=2)
    sizes = np.bincount(lab.ravel())
    keep = np.flatnonzero(sizes >= params.min_length)
    keep = keep[keep > 0]
    out = np.where(np.isin(lab, keep), lab, 0)
    return int(keep.size), out


def timing_report(steps, E_l2=float("nan"), N_LKF=-1) -> RunMetrics:
    """Aggregate per-step results (objects with report, t_mom, t_nk, t_cpy, t_nn)."""
    m = RunMetrics(E_l2=E_l2, N_LKF=N_LKF)
    for s in steps:
        m.N_Newton += s.report.iterations
        m.T_mom += s.t_mom
        m.T_NK += s.t_nk
        m.T_cpy += s.t_cpy
        m.T_nn += s.t_nn
    return m


def write_metrics_csv(path, rows):
    """Write dict rows with the fixed column set (extra keys are ignored)."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({**{c: "" for c in CSV_COLUMNS}, **r})


def metrics_row(run_id, metrics: RunMetrics, **extra):
    return {"run_id": run_id, **asdict(metrics), **extra}
