"""``hybridice`` command line: runs, data generation, training, ablations and exports."""

import argparse
import json
import logging
import platform
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy
from threadpoolctl import threadpool_limits

from . import __version__
from .config import ConfigError, RunConfig, config_hash, dump_config, load_config
from .hybrid import SafeguardConfig
from .io import FormatError, read_samples, read_snapshot, write_samples, write_snapshot
from .mesh import UniformQuadMesh
from .metrics import (RunMetrics, detect_lkfs, metrics_row,
                      shear_deformation, write_metrics_csv)
from .network import WeightsError, load_weights, save_weights, train
from .patch_ops import build_input, gather
from .simulate import Trajectory, evaluate_run, make_setup, run_hybrid, run_level, warmup_skip

log = logging.getLogger("hybridice")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


class Diverged(RuntimeError):
    pass


# --- run directories ---------------------------------------------------------

def _prepare_out(path) -> Path:
    out = Path(path)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, cfg: RunConfig, mode, extra=None):
    (out / "config.ini").write_text(dump_config(cfg))
    man = {"config_hash": config_hash(cfg), "version": __version__, "seed": cfg.scenario.seed,
           "mode": mode, "outputs": sorted(p.name for p in out.iterdir()),
           "environment": {"python": platform.python_version(), "numpy": np.__version__,
                           "scipy": scipy.__version__, "machine": platform.machine(),
                           "note": "wall-time columns depend on hardware and thread count"}}
    man.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True))


def _save_trajectory(out: Path, traj: Trajectory, level, with_fine=False, with_residual=False):
    for n, t in enumerate(traj.times):
        fields = {"v": traj.v[n], "A": traj.A[n], "H": traj.H[n]}
        if with_fine and traj.v_fine:
            fields["v_fine"] = traj.v_fine[n]
        if with_residual and traj.r_fine:
            fields["r_fine"] = traj.r_fine[n]
        write_snapshot(out / "snapshots" / f"step_{n + 1:05d}.sife", level, t, fields)


def _load_trajectory(run_dir) -> tuple:
    """(config, level, Trajectory-like with times/v/r_fine) from a run directory."""
    run_dir = Path(run_dir)
    cfg = load_config(run_dir / "config.ini")
    files = sorted((run_dir / "snapshots").glob("step_*.sife"))
    if not files:
        raise FormatError(f"{run_dir}: no snapshots")
    traj = Trajectory(mesh=None)
    level = None
    for f in files:
        level, t, fields = read_snapshot(f)
        traj.times.append(t)
        traj.v.append(fields["v"])
        traj.A.append(fields["A"])
        traj.H.append(fields["H"])
        if "r_fine" in fields:
            traj.r_fine.append(fields["r_fine"])
    return cfg, level, traj


def _metrics_row(run_id, cfg: RunConfig, m: RunMetrics):
    sc = cfg.scenario
    return metrics_row(run_id, m, N_M=sc.N_M, S=sc.S, l=cfg.layers, w=cfg.width,
                       scenario=f"{sc.direction}-{sc.rotation}-{sc.domain_km:g}km",
                       k=sc.k, eps_nl=cfg.newton.eps_nl)


# --- config resolution ---------------------------------------------------------

def _resolve_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None), scale=getattr(args, "scale", None),
                      seed=getattr(args, "seed", None))
    if getattr(args, "direction", None):
        try:
            cfg.scenario = replace(cfg.scenario, direction=args.direction)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "safeguard", None) or getattr(args, "beta", None) is not None:
        mode = args.safeguard or cfg.safeguard.mode
        beta = args.beta if args.beta is not None else cfg.safeguard.beta
        try:
            cfg.safeguard = SafeguardConfig(mode, beta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if getattr(args, "seed", None) is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
    return cfg


def _load_net(path, cfg: RunConfig):
    sc = cfg.scenario
    try:
        return load_weights(path, sc.N_M, sc.S)
    except WeightsError as exc:
        if "trained for" in str(exc):
            raise ConfigError(str(exc)) from exc
        raise


# --- subcommands ----------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _resolve_config(args)
    if args.mode == "hybrid" and not args.weights:
        raise ConfigError("hybrid mode needs --weights")
    st = make_setup(cfg.scenario, newton=cfg.newton, forcing_time=cfg.forcing_time)
    n = args.steps or cfg.scenario.n_steps
    out = _prepare_out(args.out)
    sc = cfg.scenario
    if args.mode == "reference":
        traj = run_level(st.fine, n)
        level = sc.L + sc.S
        _save_trajectory(out, traj, level)
    else:
        net = _load_net(args.weights, cfg) if args.mode == "hybrid" else None
        try:
            traj = run_hybrid(st, n, net, cfg.safeguard, cfg.masks,
                              record_inputs=args.mode == "baseline", rhs_mode=cfg.rhs_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        level = sc.L
        _save_trajectory(out, traj, level, with_fine=True, with_residual=args.mode == "baseline")
    ref = None
    if args.reference:
        _, _, ref = _load_trajectory(args.reference)
    P = st.hierarchy.coarse_to_fine(2).P
    m = evaluate_run(traj, ref, P if args.mode != "reference" else None)
    write_metrics_csv(out / "metrics.csv", [_metrics_row(args.mode, cfg, m)])
    _write_manifest(out, cfg, args.mode, {"steps_completed": len(traj.times),
                                          "failed_step": traj.failed_step, "level": level})
    print(f"{args.mode}: {len(traj.times)} steps, N_Newton={m.N_Newton}, "
          f"T_mom={m.T_mom:.2f}s, N_LKF={m.N_LKF}, E_l2={m.E_l2:.4g}")
    if traj.failed:
        raise Diverged(f"Newton failed at step {traj.failed_step + 1}")
    return EXIT_OK


def cmd_gendata(args) -> int:
    if len(args.reference) != len(args.baseline):
        raise ConfigError("give one --baseline per --reference")
    Xs, Ys, ids = [], [], []
    cfg = None
    offset = 0
    for rdir, bdir in zip(args.reference, args.baseline):
        cfg_r, _, ref = _load_trajectory(rdir)
        cfg_b, _, base = _load_trajectory(bdir)
        cfg = cfg_b
        if len(ref.times) != len(base.times) or not np.allclose(ref.times, base.times):
            raise ConfigError(f"time grids of {rdir} and {bdir} differ")
        if not base.r_fine:
            raise ConfigError(f"{bdir} has no recorded fine residuals (run with --mode baseline)")
        st = make_setup(cfg_b.scenario, newton=cfg_b.newton, forcing_time=cfg_b.forcing_time)
        P = st.hierarchy.coarse_to_fine(2).P
        skip = warmup_skip(len(base.times)) if args.skip is None else args.skip
        for n in range(skip, len(base.times)):
            vP = P @ base.v[n]
            Xs.append(build_input(st.plan, vP, base.r_fine[n]))
            Ys.append(gather(st.plan, ref.v[n] - vP))
            ids.append(np.full(st.plan.n_patches, offset + n))
        offset += len(base.times)
    if not Xs:
        raise ConfigError("no snapshots left after the warm-up skip")
    X, Y, ids = np.vstack(Xs), np.vstack(Ys), np.concatenate(ids)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_samples(out, X, Y, cfg.scenario.N_M, cfg.scenario.S)
    rng = np.random.default_rng(cfg.train.seed)
    snaps = np.unique(ids)
    rng.shuffle(snaps)
    n_val = int(round(cfg.train.val_frac * len(snaps)))
    val = np.isin(ids, snaps[:n_val])
    split = {"snapshot": ids.tolist(), "train": np.flatnonzero(~val).tolist(),
             "test": np.flatnonzero(val).tolist()}
    out.with_suffix(".split.json").write_text(json.dumps(split))
    print(f"{len(X)} samples ({len(snaps)} snapshots x {st.plan.n_patches} patches) -> {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    Xs, Ys, hdr = [], [], None
    tr_idx, va_idx, off = [], [], 0
    for path in args.data:
        X, Y, hdr = read_samples(path)
        split_path = Path(path).with_suffix(".split.json")
        if split_path.exists():
            sp = json.loads(split_path.read_text())
            tr_idx += [i + off for i in sp["train"]]
            va_idx += [i + off for i in sp["test"]]
        Xs.append(X)
        Ys.append(Y)
        off += len(X)
    X, Y = np.vstack(Xs), np.vstack(Ys)
    if len(X) == 0:
        raise ConfigError("empty dataset")
    split = (np.array(tr_idx), np.array(va_idx)) if len(tr_idx) == len(X) - len(va_idx) \
        and tr_idx else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train if args.epochs is None else replace(cfg.train, epochs=args.epochs)
    for layers in args.layers or [cfg.layers]:
        for width in args.widths or [cfg.width]:
            net, tlog = train(X, Y, tcfg, (layers, width), hdr["N_M"], hdr["S"], split=split)
            stem = f"net_l{layers}_w{width}"
            save_weights(net, out / f"{stem}.nnwt")
            (out / f"{stem}.log.json").write_text(json.dumps(asdict(tlog), indent=1))
            print(f"{stem}: best epoch {tlog.best_epoch}, "
                  f"val {tlog.val_loss[tlog.best_epoch]:.4g}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _resolve_config(args)
    if cfg.safeguard.mode == "off" and args.safeguard is None:
        cfg.safeguard = SafeguardConfig("monitor", cfg.safeguard.beta)
    masks = () if args.mask == "none" else (args.mask,)
    cfg.masks = masks
    st = make_setup(cfg.scenario, newton=cfg.newton, forcing_time=cfg.forcing_time)
    net = _load_net(args.weights, cfg)
    n = args.steps or cfg.scenario.n_steps
    traj = run_hybrid(st, n, net, cfg.safeguard, masks, stop_on_failure=False,
                      rhs_mode=cfg.rhs_mode)
    steps = [{"step": i + 1, "g_norm": inf.g_norm, "r_base_norm": inf.r_base_norm,
              "violated": inf.violated, "factor": inf.factor,
              "newton_iterations": s.report.iterations, "converged": s.report.converged,
              "at_floor": s.report.at_floor}
             for i, (inf, s) in enumerate(zip(traj.infos, traj.steps))]
    viol = float(np.mean([s["violated"] for s in steps])) if steps else 0.0
    report = {"mask": args.mask, "safeguard": asdict(cfg.safeguard), "steps": steps,
              "violation_ratio": viol, "N_Newton": traj.n_newton,
              "all_converged": not traj.failed}
    out = _prepare_out(args.out)
    (out / "ablation.json").write_text(json.dumps(report, indent=1))
    _write_manifest(out, cfg, f"ablate-{args.mask}")
    print(f"{args.mask}: violation ratio {viol:.2f}, N_Newton={traj.n_newton}, "
          f"converged={not traj.failed}")
    return EXIT_OK


def _mesh_for(cfg: RunConfig, level) -> UniformQuadMesh:
    sc = cfg.scenario
    return UniformQuadMesh(sc.domain_side, sc.coarse_cells * 2 ** level, level)


def write_vtk_image(path, mesh: UniformQuadMesh, shear, velocity):
    """ASCII VTK ImageData: cell shear and nodal velocity (Q2 nodes as points)."""
    npa = mesh.nodes_per_axis
    sp = mesh.side / (npa - 1)
    v = velocity.reshape(-1, 2)
    with open(path, "w") as fh:
        fh.write('<?xml version="1.0"?>\n<VTKFile type="ImageData" version="0.1" '
                 'byte_order="LittleEndian">\n')
        ext = f"0 {npa - 1} 0 {npa - 1} 0 0"
        fh.write(f'<ImageData WholeExtent="{ext}" Origin="0 0 0" Spacing="{sp!r} {sp!r} 1">\n')
        fh.write(f'<Piece Extent="{ext}">\n<PointData Vectors="velocity">\n')
        fh.write('<DataArray type="Float64" Name="velocity" NumberOfComponents="3" '
                 'format="ascii">\n')
        fh.write("\n".join(f"{a!r} {b!r} 0" for a, b in v))
        fh.write("\n</DataArray>\n</PointData>\n<CellData Scalars=\"shear\">\n")
        # cell data lives on the node lattice, so each Q2 cell spans 2x2 lattice cells
        fine = np.kron(shear, np.ones((2, 2)))
        fh.write('<DataArray type="Float64" Name="shear" format="ascii">\n')
        fh.write("\n".join(repr(float(x)) for x in fine.ravel()))
        fh.write("\n</DataArray>\n</CellData>\n</Piece>\n</ImageData>\n</VTKFile>\n")


def cmd_export(args) -> int:
    run_dir = Path(args.snapshots)
    files = sorted((run_dir / "snapshots").glob("step_*.sife")) if run_dir.is_dir() else []
    out = Path(args.out)
    if not files:
        print("no snapshots to export")
        return EXIT_OK
    cfg = load_config(run_dir / "config.ini")
    out.mkdir(parents=True, exist_ok=True)
    for f in files:
        level, t, fields = read_snapshot(f)
        mesh = _mesh_for(cfg, level)
        shear = shear_deformation(fields["v"], mesh)
        if args.format == "csv":
            centers = mesh.cell_centers
            np.savetxt(out / f"{f.stem}_shear.csv",
                       np.column_stack([centers, shear.ravel()]), delimiter=",",
                       header="x,y,shear", comments="")
            np.savetxt(out / f"{f.stem}_velocity.csv",
                       np.column_stack([mesh.node_coords, fields["v"].reshape(-1, 2)]),
                       delimiter=",", header="x,y,u,v", comments="")
        else:
            write_vtk_image(out / f"{f.stem}.vti", mesh, shear, fields["v"])
    print(f"exported {len(files)} snapshots to {out}")
    return EXIT_OK


def cmd_stats(args) -> int:
    """LKF count and mean speed of each snapshot in a run directory."""
    cfg, level, traj = _load_trajectory(args.snapshots)
    mesh = _mesh_for(cfg, level)
    print("step,time_s,mean_speed,max_shear,N_LKF")
    for n, (t, v) in enumerate(zip(traj.times, traj.v)):
        sh = shear_deformation(v, mesh)
        speed = np.hypot(*v.reshape(-1, 2).T).mean()
        print(f"{n + 1},{t:g},{speed:.6g},{sh.max():.6g},{detect_lkfs(sh)[0]}")
    return EXIT_OK


# --- argument parsing ----------------------------------------------------------

def _common(p, config=True):
    if config:
        p.add_argument("--config", type=Path, help="INI experiment file")
        p.add_argument("--scale", type=float, help="shrink the 512 km scenario by this factor")
        p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int, help="cap BLAS/LAPACK worker threads")


def build_parser():
    ap = argparse.ArgumentParser(prog="hybridice", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _common(p)
    p.add_argument("--mode", choices=("reference", "baseline", "hybrid"), required=True)
    p.add_argument("--weights", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--direction")
    p.add_argument("--steps", type=int, help="override the number of time steps")
    p.add_argument("--reference", type=Path, help="reference run directory for E_l2")
    p.add_argument("--safeguard", choices=("off", "monitor", "drop", "scale"))
    p.add_argument("--beta", type=float)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gendata", help="patch samples from reference/baseline run pairs")
    _common(p, config=False)
    p.add_argument("--reference", type=Path, nargs="+", required=True)
    p.add_argument("--baseline", type=Path, nargs="+", required=True)
    p.add_argument("--skip", type=int, help="warm-up snapshots to drop")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_gendata)

    p = sub.add_parser("train", help="train one network per (layers, width) pair")
    _common(p)
    p.add_argument("--data", type=Path, nargs="+", required=True)
    p.add_argument("--layers", type=int, nargs="+")
    p.add_argument("--widths", type=int, nargs="+")
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ablate", help="hybrid run with masked network inputs")
    _common(p)
    p.add_argument("--weights", type=Path, required=True)
    p.add_argument("--mask", choices=("none", "mask_state", "mask_residual"), default="none")
    p.add_argument("--direction")
    p.add_argument("--steps", type=int)
    p.add_argument("--safeguard", choices=("off", "monitor", "drop", "scale"))
    p.add_argument("--beta", type=float)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("export", help="shear and velocity fields as CSV or VTK")
    _common(p, config=False)
    p.add_argument("--snapshots", type=Path, required=True, help="run directory")
    p.add_argument("--format", choices=("csv", "vtk-imagedata-ascii"), default="csv")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("stats", help="per-snapshot speed, shear and LKF count")
    _common(p, config=False)
    p.add_argument("--snapshots", type=Path, required=True, help="run directory")
    p.set_defaults(func=cmd_stats)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=args.threads):
            return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Diverged as exc:
        print(f"solver diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (OSError, FormatError, WeightsError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
