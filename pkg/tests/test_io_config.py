import numpy as np
import pytest

from hybridice.config import ConfigError, config_hash, desk_config, dump_config, load_config
from hybridice.io import FormatError, read_samples, read_snapshot, write_samples, write_snapshot


def test_samples_round_trip(tmp_path, rng):
    X, Y = rng.standard_normal((7, 332)), rng.standard_normal((7, 162))
    p = tmp_path / "s.nnfe"
    write_samples(p, X, Y, 1, 1)
    X2, Y2, hdr = read_samples(p)
    assert np.array_equal(X, X2) and np.array_equal(Y, Y2)
    assert hdr == dict(N_M=1, S=1, n_M=81, N_in=332, N_out=162, sample_count=7, normalized=False)
    assert p.read_bytes()[:4] == b"NNFE"


def test_samples_errors(tmp_path, rng):
    p = tmp_path / "s.nnfe"
    with pytest.raises(ValueError):
        write_samples(p, np.zeros((2, 3)), np.zeros((3, 2)), 0, 1)
    write_samples(p, rng.standard_normal((3, 4)), rng.standard_normal((3, 2)), 0, 1)
    raw = p.read_bytes()
    p.write_bytes(raw[:-1])
    with pytest.raises(FormatError):
        read_samples(p)
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        read_samples(p)


def test_snapshot_round_trip(tmp_path, rng):
    fields = {"v": rng.standard_normal(10), "A": rng.uniform(size=5), "H": np.zeros(5)}
    p = tmp_path / "x.sife"
    write_snapshot(p, 3, 1234.5, fields)
    level, t, back = read_snapshot(p)
    assert (level, t) == (3, 1234.5) and list(back) == ["v", "A", "H"]
    assert all(np.array_equal(back[k], fields[k]) for k in fields)
    p.write_bytes(p.read_bytes()[:-3])
    with pytest.raises(FormatError):
        read_snapshot(p)
    p.write_bytes(b"SI")
    with pytest.raises(FormatError):
        read_snapshot(p)


def test_desk_defaults():
    cfg = load_config()
    sc = cfg.scenario
    assert (sc.domain_km, sc.working_cells, sc.S, sc.N_M, sc.k, sc.n_steps) == (64, 16, 1, 1, 120, 60)
    assert (cfg.layers, cfg.width) == (4, 256)
    assert cfg.train.lr_base == 1e-4 and cfg.train.batch_size == 64 and cfg.train.epochs == 40
    assert cfg.newton.eps_nl == 1e-10
    assert cfg.heldout_direction not in cfg.train_directions


def test_dump_load_round_trip():
    cfg = desk_config(direction="SE")
    cfg.layers, cfg.width = 2, 128
    text = dump_config(cfg)
    back = load_config(text=text)
    assert dump_config(back) == text
    assert config_hash(back) == config_hash(cfg)


def test_overrides():
    cfg = load_config(text="[scenario]\ndirection = NW\nk_seconds = 60\n[solver]\neps_nl = 1e-8\n"
                           "[safeguard]\nmode = drop\nbeta = 0.25\n[train]\nlayers = 2\n")
    assert cfg.scenario.direction == "NW" and cfg.scenario.k == 60.0
    assert cfg.newton.eps_nl == 1e-8
    assert cfg.safeguard.mode == "drop" and cfg.safeguard.beta == 0.25
    assert cfg.layers == 2
    assert load_config(seed=9).scenario.seed == 9


def test_scale_option():
    cfg = load_config(scale=0.25)
    assert cfg.scenario.domain_km == 128.0 and cfg.scenario.P_star == pytest.approx(27500 / 4)


@pytest.mark.parametrize("text", [
    "[scenario]\nbogus = 1\n",
    "[scenario]\ndirection = N\n",
    "[scenario]\ncoarse_cells = two\n",
    "[solver]\nforcing_time = n+2\n",
    "[solver]\neps_nl = 2\n",
    "[safeguard]\nmode = maybe\n",
    "[train]\nheldout = XX\n",
    "[hybrid]\nrhs_mode = other\n",
    "not an ini file",
])
def test_bad_configs(text):
    with pytest.raises(ConfigError):
        load_config(text=text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.ini")
