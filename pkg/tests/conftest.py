import numpy as np
import pytest

from hybridice.mesh import UniformQuadMesh
from hybridice.momentum import MomentumContext

SIDE = 64e3


def gyre(xy, t):
    xy = np.asarray(xy)
    return 0.01 * np.stack([-1 + 2 * xy[..., 1] / SIDE, 1 - 2 * xy[..., 0] / SIDE], axis=-1)


def make_ctx(n, ocean=gyre, wind=None, **kw):
    """Momentum context with smoothly varying, non-constant A and H."""
    m = UniformQuadMesh(SIDE, n)
    x, y = m.node_coords.T
    A = 0.9 + 0.1 * np.sin(x / 1e4) ** 2
    H = 0.3 + 0.05 * np.cos(y / 1e4)
    extra = {} if wind is None else {"wind": wind}
    return MomentumContext(m, 120.0, A, H, ocean=ocean, **extra, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one PASS/FAIL line per acceptance criterion, collected from tests marked `criterion`
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or (rep.when == "setup" and rep.failed)):
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    # parametrized cases of one criterion: any failure makes it FAIL
    ok = rep.passed and _CRITERIA.get(number, ("PASS",))[0] == "PASS"
    prev = _CRITERIA.get(number, (None, None, ""))[2]
    _CRITERIA[number] = ("PASS" if ok else "FAIL", title, "; ".join(x for x in (prev, detail) if x))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[number]
        line = f"criterion {number:2d} {status}: {title}"
        terminalreporter.write_line(line + (f" [{detail}]" if detail else ""))
