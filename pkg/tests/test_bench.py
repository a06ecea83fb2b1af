import numpy as np
import pytest
from dataclasses import replace

from hybridice.bench import (DAY, KM, Scenario, initial_state, make_scaled_scenario,
                             ocean_velocity, storm_center, wind_envelope, wind_velocity)
from hybridice.mesh import UniformQuadMesh

REF = Scenario()


def test_ocean_reference_values():
    pts = np.array([[256, 256], [512, 0], [0, 512]]) * KM
    v = ocean_velocity(pts, 0.0, REF)
    assert np.allclose(v, [[0, 0], [-0.01, -0.01], [0.01, 0.01]], atol=1e-15)


def test_ocean_divergence_free():
    xy = np.random.default_rng(0).uniform(0, 512 * KM, (50, 2))
    d = 1.0
    div = ((ocean_velocity(xy + [d, 0], 0, REF)[:, 0] - ocean_velocity(xy - [d, 0], 0, REF)[:, 0])
           + (ocean_velocity(xy + [0, d], 0, REF)[:, 1] - ocean_velocity(xy - [0, d], 0, REF)[:, 1]))
    assert np.max(np.abs(div)) < 1e-15


def test_envelope_and_track_continuous_at_four_days():
    t = 4 * DAY
    assert wind_envelope(t) == 0.0
    assert storm_center(t) == pytest.approx(460.8 * KM)
    assert storm_center(t - 1e-6) == pytest.approx(storm_center(t + 1e-6), abs=1e-3)
    xy = np.random.default_rng(1).uniform(0, 512 * KM, (20, 2))
    assert not np.any(wind_velocity(xy, t, REF))


def test_wind_zero_at_storm_centre():
    t = 1.3 * DAY
    m = storm_center(t)
    assert np.allclose(wind_velocity(np.array([m, m]), t, REF), 0.0)


def test_wind_peak_magnitude():
    # |v_a| = exp(-r/100) r / 50 * vmax, maximal at r = 100 km with value 2 vmax / e
    t = 2 * DAY
    m = storm_center(t)
    pt = np.array([m + 100 * KM, m])
    vmax = abs(float(wind_envelope(t)))
    assert np.linalg.norm(wind_velocity(pt, t, REF)) == pytest.approx(2 * vmax / np.e)


@pytest.mark.parametrize("direction,flip", [("NW", (True, False)), ("SE", (False, True)),
                                            ("SW", (True, True))])
def test_direction_reflections(direction, flip):
    L = REF.domain_side
    sc = replace(REF, direction=direction)
    xy = np.random.default_rng(2).uniform(0, L, (30, 2))
    t = 1.7 * DAY
    mirrored = xy.copy()
    sign = np.ones(2)
    for axis, f in enumerate(flip):
        if f:
            mirrored[:, axis] = L - mirrored[:, axis]
            sign[axis] = -1
    assert np.allclose(wind_velocity(xy, t, sc), sign * wind_velocity(mirrored, t, REF))
    # the ocean gyre does not depend on the storm direction
    assert np.array_equal(ocean_velocity(xy, t, sc), ocean_velocity(xy, t, REF))


def test_anticyclone_reverses_rotation():
    t = 1.0 * DAY
    m = storm_center(t)
    pt = np.array([m + 50 * KM, m])
    cyc = wind_velocity(pt, t, REF)
    anti = wind_velocity(pt, t, replace(REF, rotation="anticyclone"))
    assert cyc[0] == pytest.approx(anti[0]) and cyc[1] == pytest.approx(-anti[1])


def test_scaling():
    assert make_scaled_scenario(1.0, REF) == REF
    sc = make_scaled_scenario(1 / 8, REF)
    assert sc.domain_km == 64.0 and sc.days == 1.0
    assert sc.P_star == pytest.approx(27500 / 8)
    # track speed 6.4 km/day, storm width 12.5 km
    assert storm_center(DAY, sc.scale) - storm_center(0, sc.scale) == pytest.approx(6.4 * KM)
    t = DAY
    m = storm_center(t, sc.scale)
    small = wind_velocity(np.array([m + 12.5 * KM, m]), t, sc)
    big = wind_velocity(np.array([storm_center(t) + 100 * KM, storm_center(t)]), t, REF)
    assert np.allclose(small, big)


def test_scaling_rejects_degenerate():
    for s in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            make_scaled_scenario(s, REF)
    with pytest.raises(ValueError):
        make_scaled_scenario(0.5, Scenario(coarse_cells=2, L=1))
    with pytest.raises(ValueError):
        Scenario(direction="N")


def test_initial_state():
    sc = make_scaled_scenario(1 / 8, Scenario(coarse_cells=2, L=3))
    mesh = UniformQuadMesh(sc.domain_side, sc.working_cells)
    v, A, H = initial_state(sc, mesh)
    assert sc.working_cells == 16
    assert not v.any() and np.all(A == 1.0) and np.all(H == 0.3)
    assert v.size == 2 * mesh.n_nodes
