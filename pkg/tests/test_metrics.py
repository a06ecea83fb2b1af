import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridice.mesh import UniformQuadMesh
from hybridice.metrics import (CSV_COLUMNS, LKFParams, RunMetrics, detect_lkfs, l2_error,
                               mean_l2_error, metrics_row, shear_deformation, timing_report,
                               write_metrics_csv)
from hybridice.solver import NewtonReport
from hybridice.stepping import StepResult

MESH = UniformQuadMesh(64e3, 16)


def _interp(fn):
    x, y = MESH.node_coords.T
    return np.stack(fn(x, y), axis=-1).ravel()


def test_l2_error():
    a = np.random.default_rng(0).standard_normal(10)
    assert l2_error(a, a) == 0.0
    e = np.zeros(10)
    e[3] = 1.0
    assert l2_error(a + e, a) == 1.0
    with pytest.raises(ValueError):
        l2_error(a, a[:-1])
    assert mean_l2_error([a, a + e], [a, a]) == 0.5


@pytest.mark.parametrize("c", [1e-6, -3e-5])
def test_rigid_rotation_has_no_shear(c):
    v = _interp(lambda x, y: (-c * y, c * x))
    assert np.max(shear_deformation(v, MESH)) < 1e-18


def test_pure_shear_and_uniaxial():
    g, a = 2e-6, -5e-7
    sh = shear_deformation(_interp(lambda x, y: (g * y, 0 * x)), MESH)
    assert sh.shape == (16, 16) and np.allclose(sh, g, rtol=1e-12)
    sh = shear_deformation(_interp(lambda x, y: (a * x, 0 * y)), MESH)
    assert np.allclose(sh, abs(a), rtol=1e-12)


def test_shear_rejects_wrong_size():
    with pytest.raises(ValueError):
        shear_deformation(np.zeros(5), MESH)


def test_lkf_constant_field():
    assert detect_lkfs(np.full((32, 32), 3e-7))[0] == 0


def _ridges():
    f = np.full((40, 40), 1e-9)
    f[5, 3:30] = 1e-5           # horizontal
    f[12:35, 20] = 1e-5         # vertical, away from the first
    for i in range(12):         # diagonal
        f[20 + i, 2 + i] = 1e-5
    return f


def test_lkf_counts_constructed_ridges():
    assert detect_lkfs(_ridges())[0] == 3


def test_lkf_splits_at_junctions():
    f = np.full((40, 40), 1e-9)
    f[20, 5:35] = 1e-5
    f[5:35, 20] = 1e-5          # a cross: four arms after removing the junction
    count, lab = detect_lkfs(f)
    assert count == 4 and lab[20, 20] == 0


@settings(max_examples=20, deadline=None)
@given(st.floats(1.5, 1e3))
def test_lkf_scale_invariant(c):
    f = _ridges() + np.random.default_rng(3).uniform(0, 1e-10, (40, 40))
    assert detect_lkfs(c * f)[0] == detect_lkfs(f)[0]


def _step(iters, t_nk=0.5, t_cpy=0.0, t_nn=0.0):
    rep = NewtonReport(iterations=iters, converged=True)
    return StepResult(None, None, None, rep, 0, 1.0, t_nk, t_cpy, t_nn)


def test_timing_report_sums():
    m = timing_report([_step(3), _step(4, t_cpy=0.01, t_nn=0.02)])
    assert m.N_Newton == 7
    assert m.T_mom == 2.0 and m.T_NK == 1.0
    assert m.T_cpy == 0.01 and m.T_nn == 0.02
    assert m.T_NK + m.T_cpy + m.T_nn <= m.T_mom
    base = timing_report([_step(2)])
    assert base.T_nn == 0 and base.T_cpy == 0


def test_metrics_csv(tmp_path):
    row = metrics_row("r1", RunMetrics(E_l2=0.5, N_LKF=3, N_Newton=10), N_M=1, S=1, l=4, w=256,
                      scenario="NE", k=120.0, eps_nl=1e-10)
    path = tmp_path / "m.csv"
    write_metrics_csv(path, [row])
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == CSV_COLUMNS
    assert rows[0]["E_l2"] == "0.5" and rows[0]["N_LKF"] == "3"


def test_lkf_params_frozen():
    p = LKFParams()
    assert (p.log_eps, p.percentile, p.min_length) == (1e-12, 90.0, 3)
    with pytest.raises(Exception):
        p.percentile = 50.0
