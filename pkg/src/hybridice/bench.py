"""Moving-cyclone benchmark: initial data, ocean and wind forcing, scaled variants.

Positions are in metres and times in seconds. The reference configuration
lives on a 512 km square; a scenario with a smaller ``domain_km`` is the same
storm shrunk by ``scale = domain_km / 512`` (track, storm width and distances
inside the wind formula scale together, so wind speeds are unchanged).
"""

from dataclasses import dataclass, replace

import numpy as np

__all__ = ["Scenario", "ocean_velocity", "wind_velocity", "wind_envelope",
           "wind_angle", "storm_center", "make_scaled_scenario", "initial_state",
           "DIRECTIONS", "ROTATIONS", "DAY", "KM"]

DAY = 86400.0
KM = 1000.0
REF_DOMAIN_KM = 512.0
DIRECTIONS = ("NE", "NW", "SW", "SE")
ROTATIONS = ("cyclone", "anticyclone")
# reflection flags (flip x, flip y) taking the NE track to the named direction
_FLIPS = {"NE": (False, False), "NW": (True, False), "SW": (True, True), "SE": (False, True)}
MIN_CELLS = 8


@dataclass(frozen=True)
class Scenario:
    domain_km: float = REF_DOMAIN_KM
    coarse_cells: int = 8          # cells per axis on level 0
    L: int = 3
    S: int = 1
    N_M: int = 1
    k: float = 120.0               # time step in seconds
    days: float = 8.0
    direction: str = "NE"
    rotation: str = "cyclone"
    H0: float = 0.3
    A0: float = 1.0
    P_star: float = 27500.0        # ice strength; scaled with the domain to keep P/L fixed
    seed: int = 0

    def __post_init__(self):
        if self.direction not in DIRECTIONS:
            raise ValueError(f"unknown direction {self.direction!r}")
        if self.rotation not in ROTATIONS:
            raise ValueError(f"unknown rotation {self.rotation!r}")
        if self.domain_km <= 0 or self.k <= 0 or self.days <= 0:
            raise ValueError("domain, time step and duration must be positive")

    @property
    def domain_side(self):
        return self.domain_km * KM

    @property
    def scale(self):
        return self.domain_km / REF_DOMAIN_KM

    @property
    def working_cells(self):
        return self.coarse_cells * 2 ** self.L

    @property
    def n_steps(self):
        return int(round(self.days * DAY / self.k))

    def ocean(self, xy, t):
        return ocean_velocity(xy, t, self)

    def wind(self, xy, t):
        return wind_velocity(xy, t, self)


def wind_envelope(t):
    """Peak wind speed (m/s) as a function of time in seconds."""
    td = np.asarray(t, dtype=float) / DAY
    return np.where(td <= 4.0,
                    15.0 * -np.tanh((4.0 - td) * (4.0 + td) / 2.0),
                    15.0 * np.tanh((12.0 - td) * (td - 4.0) / 2.0))


def wind_angle(t):
    return np.deg2rad(np.where(np.asarray(t) / DAY <= 4.0, 72.0, 81.0))


def storm_center(t, scale=1.0):
    """Storm centre coordinate (same for x and y) in metres, north-east track."""
    td = np.asarray(t, dtype=float) / DAY
    km = np.where(td <= 4.0, 256.0 + 51.2 * td, 665.6 - 51.2 * td)
    return scale * km * KM


def ocean_velocity(xy, t, scenario: Scenario):
    """Counter-clockwise ocean gyre; identical for every storm direction."""
    xy = np.asarray(xy, dtype=float)
    L = scenario.domain_side
    x, y = xy[..., 0], xy[..., 1]
    return 0.01 * np.stack([-1.0 + 2.0 * y / L, 1.0 - 2.0 * x / L], axis=-1)


def _ne_wind(xy, t, scale, rotation):
    m = storm_center(t, scale)
    # distances measured in reference-domain kilometres
    d = (xy - m) / (scale * KM)
    r = np.hypot(d[..., 0], d[..., 1])
    amp = np.exp(-r / 100.0) / 50.0 * wind_envelope(t)
    a = wind_angle(t)
    c, s = np.cos(a), np.sin(a)
    if rotation == "anticyclone":
        s = -s
    u = c * d[..., 0] + s * d[..., 1]
    w = -s * d[..., 0] + c * d[..., 1]
    return amp[..., None] * np.stack([u, w], axis=-1)


def wind_velocity(xy, t, scenario: Scenario):
    """Wind field for the scenario's direction, built by reflecting the NE storm."""
    xy = np.array(xy, dtype=float)
    L = scenario.domain_side
    fx, fy = _FLIPS[scenario.direction]
    if fx:
        xy[..., 0] = L - xy[..., 0]
    if fy:
        xy[..., 1] = L - xy[..., 1]
    out = _ne_wind(xy, t, scenario.scale, scenario.rotation)
    if fx:
        out[..., 0] *= -1
    if fy:
        out[..., 1] *= -1
    return out


def make_scaled_scenario(scale_factor: float, scenario: Scenario = Scenario()) -> Scenario:
    """Shrink domain, storm track, storm width, duration and ice strength by ``scale_factor``.

    Scaling the ice strength with the domain keeps the ratio of internal-stress
    divergence to wind stress, so the shrunken storm deforms the ice as the
    full-size one does.
    """
    if not 0 < scale_factor <= 1:
        raise ValueError("scale_factor must lie in (0, 1]")
    if scenario.working_cells < MIN_CELLS:
        raise ValueError(f"working level needs at least {MIN_CELLS} cells per axis")
    if scale_factor == 1:
        return scenario
    return replace(scenario, domain_km=scenario.domain_km * scale_factor,
                   days=scenario.days * scale_factor, P_star=scenario.P_star * scale_factor)


def initial_state(scenario: Scenario, mesh):
    """Velocity zero, full concentration and uniform thickness on ``mesh``."""
    n = mesh.n_nodes
    return np.zeros(2 * n), np.full(n, scenario.A0), np.full(n, scenario.H0)
