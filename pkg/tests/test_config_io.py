from __future__ import annotations

import math

import numpy as np
import pytest

from coagwave.config import default_config_text, load_config, parse_override
from coagwave.errors import ConfigError
from coagwave.io import (RunManifest, body_of, read_profile_stack, read_snapshots, read_table,
                         write_profile_stack, write_snapshots, write_table)


def test_default_config_values():
    cfg = load_config()
    p = cfg.params
    assert (p.k9, p.h2, p.T0, p.D) == (20.0, 2.3, 1400.0, 0.0037)
    assert p.k2_bar == 13.48
    assert (cfg.grid.L, cfg.grid.N) == (5.0, 1001)
    assert cfg.scheme == "linearized" and cfg.threshold is None
    assert cfg.scalar.n == 3 and cfg.scalar.sigma == 0.01
    assert cfg.fine.models == ("one_eq", "two_eq")
    assert cfg.activity_calibration == 100.0


@pytest.mark.parametrize("text, match", [
    ("[rates]\nk99 = 1\n", "unknown key"),
    ("[bogus]\nx = 1\n", "unknown config section"),
    ("[rates]\nk9 = fast\n", "cannot parse"),
    ("[rates]\nk9 = -1\n", "invalid parameter"),
    ("[domain]\nscheme = rk4\n", "scheme"),
    ("[domain]\nN = 2\n", "N >= 3"),
    ("[domain]\nt_end = 0\n", "positive"),
    ("k9 = 1\n", "malformed"),
])
def test_bad_config_is_rejected(text, match):
    with pytest.raises(ConfigError, match=match):
        load_config(text=text)


def test_overrides():
    cfg = load_config(overrides=["k9=40", "scalar.D=3", "domain.N=501", "D=0.01"])
    assert cfg.params.k9 == 40.0
    assert cfg.scalar.D == 3.0
    assert cfg.grid.N == 501
    assert cfg.params.D == 0.01  # bare D resolves to the coagulation domain
    with pytest.raises(ConfigError):
        load_config(overrides=["nonsense=1"])
    with pytest.raises(ConfigError):
        load_config(overrides=["rates.L=1"])
    with pytest.raises(ConfigError):
        parse_override("k9")
    assert parse_override("rates.k9 = 3") == ("rates", "k9", "3")


def test_missing_k2_bar_is_allowed_until_used():
    cfg = load_config(overrides=["k2_bar=none"])
    assert cfg.params.k2_bar is None


def test_hash_is_stable_and_sensitive():
    a, b = load_config(), load_config()
    assert a.hash == b.hash and len(a.hash) == 16
    assert load_config(overrides=["k9=21"]).hash != a.hash
    # comments and ordering do not matter
    text = "# comment\n" + default_config_text()
    assert load_config(text=text).hash == a.hash


def test_config_file_path(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[rates]\nk2_bar = 10\n[domain]\nD = 0.002\n")
    cfg = load_config(path=p)
    assert cfg.params.k2_bar == 10 and cfg.params.D == 0.002


def _manifest():
    return RunManifest(config_hash="abc", command="simulate", seed=3,
                       tolerances={"drift": 0.01}, columns="t: min")


def test_table_round_trip(tmp_path):
    rows = [[0.1, "reduced6", True, math.nan], [1 / 3, "one_eq", False, 2.5e-17]]
    path = write_table(tmp_path / "t.csv", ["x", "model", "ok", "v"], rows, _manifest())
    tab = read_table(path)
    assert tab.columns == ["x", "model", "ok", "v"]
    assert tab.rows[1][0] == 1 / 3 and tab.rows[0][1] == "reduced6"
    assert tab.rows[0][2] is True and math.isnan(tab.rows[0][3])
    assert tab.manifest.seed == 3 and tab.manifest.tolerances == {"drift": 0.01}
    assert tab.manifest.config_hash == "abc"


def test_bodies_are_byte_identical(tmp_path):
    rows = [[0.1 * k, k * k] for k in range(20)]
    a = write_table(tmp_path / "a.csv", ["x", "y"], rows, _manifest())
    m = _manifest()
    m.timestamp = "2000-01-01T00:00:00+00:00"
    b = write_table(tmp_path / "b.csv", ["x", "y"], rows, m)
    assert body_of(a) == body_of(b)
    assert a.read_text() != b.read_text()


def test_snapshot_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    times, x = np.array([0.0, 1.0, 2.0]), np.linspace(0, 1, 7)
    snaps = rng.random((3, 2, 7))
    path = write_snapshots(tmp_path / "s.csv", times, x, ["T", "U11"], snaps, _manifest())
    back = read_snapshots(path)
    assert np.array_equal(back.times, times) and np.array_equal(back.x, x)
    assert back.species == ["T", "U11"]
    assert np.array_equal(back.values, snaps)


def test_profile_stack_round_trip(tmp_path):
    times, x = np.array([0.0, 0.5]), np.linspace(0, 2, 5)
    prof = np.arange(10.0).reshape(2, 5) / 7
    path = write_profile_stack(tmp_path / "p.dat", times, x, prof, _manifest())
    t2, x2, p2 = read_profile_stack(path)
    assert np.array_equal(t2, times) and np.array_equal(x2, x) and np.array_equal(p2, prof)
    assert "\n\n\n# t = 0.5" in path.read_text()
