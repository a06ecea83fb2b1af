"""INI experiment configuration: scenario, solver, training, safeguard and hybrid settings."""

import configparser
import hashlib
import io
from dataclasses import asdict, dataclass, field, fields, replace

from .bench import Scenario, make_scaled_scenario, DIRECTIONS
from .hybrid import SafeguardConfig
from .network import TrainConfig
from .solver import NewtonConfig

__all__ = ["ConfigError", "RunConfig", "load_config", "dump_config", "config_hash",
           "desk_config"]


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    scenario: Scenario = field(default_factory=Scenario)
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    layers: int = 4
    width: int = 256
    train_directions: tuple = ("NE", "SE", "SW")
    heldout_direction: str = "NW"
    safeguard: SafeguardConfig = field(default_factory=SafeguardConfig)
    forcing_time: str = "n"
    rhs_mode: str = "additive"
    masks: tuple = ()


def desk_config(**scenario_overrides) -> RunConfig:
    """Scale-1/8 scenario, 16x16 working cells, S=1, N_M=1, two simulated hours."""
    base = Scenario(coarse_cells=2, L=3, S=1, N_M=1, k=120.0)
    sc = replace(make_scaled_scenario(1 / 8, base), days=2 / 24, **scenario_overrides)
    return RunConfig(scenario=sc)


_SCENARIO_KEYS = {"domain_km": float, "coarse_cells": int, "L": int, "S": int, "N_M": int,
                  "k_seconds": float, "days": float, "direction": str, "rotation": str,
                  "seed": int, "P_star": float, "H0": float, "A0": float}


def _typed(section, key, typ):
    try:
        if typ is bool:
            return section.getboolean(key)
        return typ(section[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from exc


def _dataclass_section(cp, name, obj):
    if not cp.has_section(name):
        return obj
    sec = cp[name]
    kw = {}
    known = {f.name: f.type for f in fields(obj)}
    for key in sec:
        if key not in known:
            continue
        cur = getattr(obj, key)
        typ = type(cur) if not isinstance(cur, tuple) else tuple
        if typ is tuple:
            kw[key] = tuple(float(x) for x in sec[key].replace(",", " ").split())
        else:
            kw[key] = _typed(sec, key, typ)
    try:
        return replace(obj, **kw)
    except ValueError as exc:
        raise ConfigError(f"[{name}] {exc}") from exc


def load_config(path=None, text=None, scale=None, seed=None) -> RunConfig:
    """Read an INI file (or string); missing keys keep desk defaults.

    ``scale`` (from the command line or ``[scenario] scale``) shrinks the
    512 km reference scenario; explicit ``domain_km`` / ``P_star`` / ``days``
    keys take precedence over the scaled values.
    """
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        if path is not None:
            if not cp.read(path):
                raise ConfigError(f"cannot read config file {path}")
        elif text is not None:
            cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    cfg = desk_config()
    sc = cfg.scenario
    if cp.has_section("scenario"):
        sec = cp["scenario"]
        unknown = set(sec) - set(_SCENARIO_KEYS) - {"scale"}
        if unknown:
            raise ConfigError(f"[scenario] unknown keys: {sorted(unknown)}")
        if scale is None and "scale" in sec:
            scale = _typed(sec, "scale", float)
        kw = {}
        for key, typ in _SCENARIO_KEYS.items():
            if key in sec:
                kw["k" if key == "k_seconds" else key] = _typed(sec, key, typ)
        try:
            if scale is not None:
                base = replace(Scenario(), **{k: v for k, v in kw.items()
                                              if k not in ("domain_km", "P_star", "days")})
                sc = make_scaled_scenario(scale, base)
                sc = replace(sc, **{k: kw[k] for k in ("domain_km", "P_star", "days") if k in kw})
                if "days" not in kw:
                    sc = replace(sc, days=cfg.scenario.days)
            else:
                sc = replace(sc, **kw)
        except ValueError as exc:
            raise ConfigError(f"[scenario] {exc}") from exc
    elif scale is not None:
        try:
            sc = replace(make_scaled_scenario(scale, replace(Scenario(), coarse_cells=sc.coarse_cells,
                                                             L=sc.L, S=sc.S, N_M=sc.N_M, k=sc.k)),
                         days=sc.days)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if seed is not None:
        sc = replace(sc, seed=seed)
    cfg.scenario = sc

    forcing_time = "n"
    if cp.has_section("solver"):
        forcing_time = cp["solver"].get("forcing_time", "n")
        if forcing_time not in ("n", "n+1"):
            raise ConfigError("[solver] forcing_time must be n or n+1")
    cfg.forcing_time = forcing_time
    cfg.newton = _dataclass_section(cp, "solver", cfg.newton)
    cfg.train = _dataclass_section(cp, "train", replace(cfg.train, seed=sc.seed))
    if cp.has_section("train"):
        t = cp["train"]
        cfg.layers = _typed(t, "layers", int) if "layers" in t else cfg.layers
        cfg.width = _typed(t, "width", int) if "width" in t else cfg.width
        if "directions" in t:
            cfg.train_directions = tuple(t["directions"].replace(",", " ").split())
        if "heldout" in t:
            cfg.heldout_direction = t["heldout"].strip()
        for d in (*cfg.train_directions, cfg.heldout_direction):
            if d not in DIRECTIONS:
                raise ConfigError(f"[train] unknown direction {d!r}")
    cfg.safeguard = _dataclass_section(cp, "safeguard", cfg.safeguard)
    if cp.has_section("hybrid"):
        h = cp["hybrid"]
        cfg.rhs_mode = h.get("rhs_mode", cfg.rhs_mode)
        if cfg.rhs_mode not in ("additive", "fine"):
            raise ConfigError("[hybrid] rhs_mode must be additive or fine")
        if "masks" in h:
            cfg.masks = tuple(h["masks"].replace(",", " ").split())
            bad = set(cfg.masks) - {"mask_state", "mask_residual"}
            if bad:
                raise ConfigError(f"[hybrid] unknown masks {sorted(bad)}")
    return cfg


def dump_config(cfg: RunConfig) -> str:
    """Resolved configuration as INI text (loadable by ``load_config``)."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    sc = cfg.scenario
    cp["scenario"] = {"domain_km": repr(sc.domain_km), "coarse_cells": str(sc.coarse_cells),
                      "L": str(sc.L), "S": str(sc.S), "N_M": str(sc.N_M),
                      "k_seconds": repr(sc.k), "days": repr(sc.days),
                      "direction": sc.direction, "rotation": sc.rotation, "seed": str(sc.seed),
                      "P_star": repr(sc.P_star), "H0": repr(sc.H0), "A0": repr(sc.A0)}
    cp["solver"] = {k: repr(v) for k, v in asdict(cfg.newton).items()}
    cp["solver"]["forcing_time"] = cfg.forcing_time
    tr = {k: (" ".join(map(repr, v)) if isinstance(v, tuple) else repr(v))
          for k, v in asdict(cfg.train).items()}
    tr.update(layers=str(cfg.layers), width=str(cfg.width),
              directions=" ".join(cfg.train_directions), heldout=cfg.heldout_direction)
    cp["train"] = tr
    cp["safeguard"] = {"mode": cfg.safeguard.mode, "beta": repr(cfg.safeguard.beta)}
    cp["hybrid"] = {"rhs_mode": cfg.rhs_mode, "masks": " ".join(cfg.masks)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]
