from __future__ import annotations

import math

import httpx
import pytest
from fastapi.testclient import TestClient

from coagwave import cli
from coagwave.io import read_snapshots, read_table
from coagwave.schemas import SpeedResponse
from coagwave.service import create_app

FAST = ["--param", "L=1", "--param", "N=201", "--param", "t_end=2",
        "--param", "snapshot_every=0.5"]


@pytest.fixture(scope="module")
def api():
    return TestClient(create_app())


def test_health(api):
    r = api.get("/health")
    assert r.status_code == 200 and r.json()["status"] == "ok"


def test_equilibria_endpoint(api):
    r = api.post("/equilibria", json={"trials": 5})
    assert r.status_code == 200
    body = r.json()
    assert body["classification"] == "Bistable"
    assert [x["stable"] for x in body["roots"]] == [False, True]
    assert body["summary"].startswith("Bistable, roots T1*<T2*: ")
    assert body["summary"].endswith("Theorem 1 check: PASS")


def test_speed_endpoint_keeps_nan(api):
    r = api.post("/speed", json={"mode": "coag", "measured_speed": 0.05})
    assert r.status_code == 200
    assert "NaN" in r.text
    body = SpeedResponse.model_validate_json(r.content)
    assert body.c1 == pytest.approx(0.4187, rel=1e-3)
    assert body.ratio_c1 == pytest.approx(body.c1 / 0.05)
    assert math.isnan(body.printed_c1)


def test_bad_input_is_422(api):
    r = api.post("/equilibria", json={"overrides": ["k99=1"]})
    assert r.status_code == 422 and "k99" in r.json()["detail"]
    r = api.post("/simulate", json={"model": "nonsense"})
    assert r.status_code == 422


def test_simulate_endpoint_without_reaction(api):
    overrides = ["L=1", "N=201", "t_end=1", "snapshot_every=0.5"]
    r = api.post("/simulate", json={"overrides": overrides, "reaction": False,
                                    "include_snapshots": False})
    body = r.json()
    assert r.status_code == 200 and body["snapshots"] == []
    m = body["mass"]
    assert abs(m[-1] - m[0]) / m[0] < 1e-10
    assert body["measurement"] is None


def test_sweep_endpoint_with_estimators(api):
    r = api.post("/sweep", json={"parameter": "D", "values": [0.001, 0.004],
                                 "models": ["narrow_zone", "piecewise_linear"]})
    rows = r.json()["rows"]
    assert len(rows) == 4 and all(row["converged"] for row in rows)
    nz = [row["speed"] for row in rows if row["model"] == "narrow_zone"]
    assert nz[1] == pytest.approx(2 * nz[0], rel=1e-12)


def test_cli_equilibria(tmp_path, capsys):
    code = cli.main(["equilibria", "--trials", "5", "--csv", "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "Bistable, roots T1*<T2*:" in out and "PASS" in out
    tab = read_table(tmp_path / "equilibria.csv")
    assert tab.columns == ["root", "P_prime_sign", "principal_eigenvalue", "stable",
                           "classification"]
    assert tab.column("P_prime_sign") == [-1, 1]
    assert tab.manifest.command == "equilibria" and tab.manifest.config_hash


def test_cli_missing_k2_bar(tmp_path, capsys):
    code = cli.main(["simulate", "--param", "k2_bar=none", "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert code == 2
    assert "coagwave calibrate" in err


def test_cli_bad_override_and_model(tmp_path, capsys):
    assert cli.main(["equilibria", "--param", "k9", "--out", str(tmp_path)]) == 2
    assert cli.main(["simulate", "--model", "bogus", "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_reaction_off_conserves_mass(tmp_path, capsys):
    code = cli.main(["simulate", "--reaction", "off", "--out", str(tmp_path), *FAST])
    assert code == 0
    mass = read_table(tmp_path / "mass.csv").array("mass")
    assert abs(mass[-1] - mass[0]) / mass[0] < 1e-10
    assert "relative mass change" in capsys.readouterr().out


def test_cli_simulate_speed_bounds_chain(tmp_path, capsys):
    out = str(tmp_path)
    assert cli.main(["simulate", "--out", out]) == 0
    summary = read_table(tmp_path / "speed_summary.csv")
    vals = dict(zip(summary.column("quantity"), summary.column("value")))
    assert vals["converged"] is True
    assert vals["speed"] == pytest.approx(0.05, rel=0.05)
    assert vals["bracket_contains"] is True
    snaps = read_snapshots(tmp_path / "snapshots.csv")
    assert snaps.species[0] == "T" and snaps.values.shape[1:] == (6, 1001)
    assert (tmp_path / "profiles_T.dat").exists()

    assert cli.main(["speed", "--out", out]) == 0
    est = read_table(tmp_path / "speed_estimates.csv")
    rows = {(m, q): v for m, q, v in est.rows}
    assert rows[("measured", "speed")] == pytest.approx(vals["speed"])
    assert rows[("narrow_zone", "ratio")] == pytest.approx(0.4187 / vals["speed"], rel=1e-3)

    capsys.readouterr()
    assert cli.main(["bounds", "--profile", str(tmp_path / "snapshots.csv"), "--out", out]) == 0
    bounds = dict(read_table(tmp_path / "bounds.csv").rows)
    assert bounds["contains"] is True
    assert bounds["lower"] <= vals["speed"] + bounds["tolerance"]


def test_cli_scalar_speed(tmp_path, capsys):
    assert cli.main(["speed", "--scalar", "--printed", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "narrow reaction zone" in out and "mm/min" not in out


def test_cli_sweep_requires_values(tmp_path, capsys):
    assert cli.main(["sweep", "--parameter", "D", "--out", str(tmp_path)]) == 2


def test_cli_sweep_range(tmp_path):
    code = cli.main(["sweep", "--parameter", "n", "--range", "3", "5", "3",
                     "--models", "narrow_zone,piecewise_linear", "--out", str(tmp_path)])
    assert code == 0
    tab = read_table(tmp_path / "sweep_n.csv")
    assert tab.column("value") == [3.0, 3.0, 4.0, 4.0, 5.0, 5.0]


def test_cli_over_http(monkeypatch, tmp_path, api):
    """The same command through the HTTP client gives the same body."""
    def post(url, content, headers, timeout):
        return api.post(httpx.URL(url).path, content=content, headers=headers)

    monkeypatch.setattr(httpx, "post", post)
    local, remote = tmp_path / "local", tmp_path / "remote"
    assert cli.main(["equilibria", "--csv", "--trials", "3", "--out", str(local)]) == 0
    assert cli.main(["--server", "http://testserver", "equilibria", "--csv", "--trials", "3",
                     "--out", str(remote)]) == 0
    a, b = read_table(local / "equilibria.csv"), read_table(remote / "equilibria.csv")
    assert a.rows == b.rows
    assert cli.main(["--server", "http://testserver", "equilibria", "--param", "k99=1",
                     "--out", str(remote)]) == 2
