"""Desk-scale experiment pipeline: references, recorded baselines, training and evaluation."""

from dataclasses import dataclass, field, replace

import numpy as np

from .config import RunConfig
from .hybrid import SafeguardConfig
from .metrics import LKFParams
from .network import CorrectionNet, TrainLog, train
from .simulate import (Setup, Trajectory, evaluate_run, extract_samples, make_setup,
                       run_hybrid, run_level, warmup_skip)

__all__ = ["DirectionRuns", "Pipeline", "setup_for", "simulate_direction", "build_dataset",
           "fit_network", "evaluate_heldout", "run_pipeline", "fine_residual_gain"]


@dataclass
class DirectionRuns:
    setup: Setup
    reference: Trajectory
    baseline: Trajectory          # coarse run with fine residuals recorded


@dataclass
class Pipeline:
    config: RunConfig
    runs: dict = field(default_factory=dict)      # direction -> DirectionRuns
    X: np.ndarray = None
    Y: np.ndarray = None
    sample_ids: np.ndarray = None
    net: CorrectionNet = None
    log: TrainLog = None
    hybrid: Trajectory = None
    metrics: dict = field(default_factory=dict)   # label -> RunMetrics


def setup_for(cfg: RunConfig, direction=None) -> Setup:
    sc = cfg.scenario if direction is None else replace(cfg.scenario, direction=direction)
    return make_setup(sc, newton=cfg.newton, forcing_time=cfg.forcing_time)


def simulate_direction(cfg: RunConfig, direction, stop_on_failure=False) -> DirectionRuns:
    """Fine reference and coarse baseline with synchronized steps."""
    st = setup_for(cfg, direction)
    n = st.scenario.n_steps
    ref = run_level(st.fine, n, stop_on_failure=stop_on_failure)
    base = run_hybrid(st, n, net=None, record_inputs=True, stop_on_failure=stop_on_failure)
    return DirectionRuns(st, ref, base)


def build_dataset(runs, skip=None):
    """Stack patch samples over several directions; returns (X, Y, ids)."""
    Xs, Ys, ids = [], [], []
    offset = 0
    for r in runs:
        n = len(r.baseline.times)
        k = warmup_skip(n) if skip is None else skip
        X, Y, sid = extract_samples(r.setup, r.baseline, r.reference, k)
        Xs.append(X)
        Ys.append(Y)
        ids.append(sid + offset)
        offset += n
    return np.vstack(Xs), np.vstack(Ys), np.concatenate(ids)


def fit_network(cfg: RunConfig, X, Y, sample_ids=None):
    """Train with a 75/25 split by snapshot, so validation patches come from unseen steps."""
    sc = cfg.scenario
    split = None
    if sample_ids is not None:
        rng = np.random.default_rng(cfg.train.seed)
        snaps = np.unique(sample_ids)
        rng.shuffle(snaps)
        n_val = int(round(cfg.train.val_frac * len(snaps)))
        val = np.isin(sample_ids, snaps[:n_val])
        split = (np.flatnonzero(~val), np.flatnonzero(val))
    return train(X, Y, cfg.train, (cfg.layers, cfg.width), sc.N_M, sc.S, split=split)


def fine_residual_gain(traj: Trajectory, skip=0):
    """Fraction of steps whose fine residual dropped after the correction."""
    infos = traj.infos[skip:]
    if not infos:
        return float("nan")
    return float(np.mean([i.fine_res_after < i.fine_res_before for i in infos]))


def evaluate_heldout(cfg: RunConfig, runs: DirectionRuns, net, safeguard=None,
                     lkf: LKFParams = LKFParams()):
    """Hybrid run on the held-out direction; returns (trajectory, metrics by label)."""
    st = runs.setup
    hyb = run_hybrid(st, st.scenario.n_steps, net, safeguard or cfg.safeguard,
                     cfg.masks, stop_on_failure=False, rhs_mode=cfg.rhs_mode)
    P = st.hierarchy.coarse_to_fine(2).P
    out = {"reference": evaluate_run(runs.reference, lkf=lkf),
           "baseline": evaluate_run(runs.baseline, runs.reference, P, lkf=lkf),
           "hybrid": evaluate_run(hyb, runs.reference, P, lkf=lkf)}
    # the baseline's v_fine is the plain prolongation, so its E_l2 is the prolongated error
    return hyb, out


def run_pipeline(cfg: RunConfig, progress=None) -> Pipeline:
    """Full desk experiment: simulate training and held-out directions, train, evaluate."""
    say = progress or (lambda msg: None)
    pipe = Pipeline(cfg)
    for d in (*cfg.train_directions, cfg.heldout_direction):
        say(f"simulating {d}")
        pipe.runs[d] = simulate_direction(cfg, d)
    pipe.X, pipe.Y, pipe.sample_ids = build_dataset([pipe.runs[d] for d in cfg.train_directions])
    say(f"training on {len(pipe.X)} samples")
    pipe.net, pipe.log = fit_network(cfg, pipe.X, pipe.Y, pipe.sample_ids)
    say("evaluating held-out direction")
    pipe.hybrid, pipe.metrics = evaluate_heldout(cfg, pipe.runs[cfg.heldout_direction], pipe.net,
                                                 SafeguardConfig("off"))
    return pipe
