from __future__ import annotations

import numpy as np
import pytest

from coagwave.config import load_config
from coagwave.errors import NoBistabilityError
from coagwave.models import FULL14, ONE_EQ, REDUCED6, TWO_EQ, ModelKind
from coagwave.rdsolver import (SCHEMES, Grid1D, InitialCondition, default_ic, laplacian,
                               simulate, stable_dt)
from coagwave.wavefront import measure_speed

SCALAR = ModelKind.scalar(3, 10.0, 0.01)


@pytest.fixture(scope="module")
def params():
    return load_config().params


def test_grid_geometry():
    g = Grid1D(5.0, 1001)
    assert g.dx == pytest.approx(0.005)
    assert g.x[0] == 0 and g.x[-1] == pytest.approx(5.0)
    assert g.refined().N == 2001 and g.refined().dx == pytest.approx(g.dx / 2)
    with pytest.raises(ValueError):
        Grid1D(0.0, 10)


def test_laplacian_is_exact_on_quadratics_inside_and_neumann_at_ends():
    g = Grid1D(1.0, 101)
    u = (g.x ** 2)[None, :]
    lap = laplacian(u, g.dx)
    assert np.allclose(lap[0, 1:-1], 2.0, rtol=1e-8)
    c = np.cos(np.pi * g.x)[None, :]  # zero slope at both ends
    lc = laplacian(c, g.dx)
    assert np.allclose(lc, -np.pi ** 2 * c, atol=2e-3 * np.pi ** 2)


@pytest.mark.parametrize("scheme", SCHEMES)
def test_pure_diffusion_conserves_mass(scheme, params):
    f = simulate(REDUCED6, params, Grid1D(5.0, 1001), t_end=5.0, reaction=False, scheme=scheme)
    m = f.total_mass()
    assert np.max(np.abs(m - m[0])) / m[0] < 1e-10
    # and it spreads: the peak goes down
    assert f.front[-1].max() < f.front[0].max()


def test_prothrombin_conservation_without_inhibition(params):
    q = params.replace(h2=0.0)
    g = Grid1D(1.0, 201)
    f = simulate(FULL14, q, g, InitialCondition(200.0, 0.05), t_end=2.0,
                 snapshot_every=0.1, scheme="explicit")
    total = f.total_mass(FULL14.index("T")) + f.total_mass(FULL14.index("P"))
    assert np.max(np.abs(total - total[0])) < 1e-8 * params.T0 * g.L


@pytest.mark.parametrize("kind", [REDUCED6, TWO_EQ, ONE_EQ, SCALAR], ids=str)
def test_solution_stays_nonnegative(kind, params):
    g = Grid1D(1.0, 201) if kind.is_coagulation else Grid1D(20.0, 201)
    f = simulate(kind, params if kind.is_coagulation else None, g, t_end=2.0,
                 snapshot_every=0.5, D=None if kind.is_coagulation else 2.0)
    assert np.all(f.snapshots >= 0)
    assert np.all(np.isfinite(f.snapshots))


def test_sub_threshold_activation_decays(params):
    f = simulate(REDUCED6, params, Grid1D(5.0, 1001), InitialCondition(20.0, 0.05),
                 t_end=10.0)
    assert f.front[-1].max() < 20.0
    assert f.front[-1].max() < 0.5 * params.T0


def test_default_ic_uses_upper_state(params):
    ic = default_ic(REDUCED6, params, Grid1D())
    assert ic.amplitude == pytest.approx(1393.68, rel=1e-4)
    assert ic.width == pytest.approx(0.25)
    with pytest.raises(NoBistabilityError):
        default_ic(REDUCED6, params.replace(h2=params.h2 * 100))


def test_initial_condition_validation():
    g = Grid1D(4.0, 401)
    with pytest.raises(ValueError):
        InitialCondition(0.0, 0.1)
    with pytest.raises(ValueError):
        InitialCondition(1.0, 0.1, shape="bump")
    with pytest.raises(ValueError):
        InitialCondition(1.0, 2.0).profile(g)
    step = InitialCondition(1.0, 0.5, shape="step").profile(g)
    assert step[0] == 1 and step[-1] == 0


def test_initial_state_shape_is_checked(params):
    with pytest.raises(ValueError, match="shape"):
        simulate(REDUCED6, params, Grid1D(1.0, 101), initial_state=np.zeros((6, 50)))


def test_bad_arguments(params):
    with pytest.raises(ValueError):
        simulate(REDUCED6, params, scheme="rk4")
    with pytest.raises(ValueError):
        simulate(REDUCED6, params, t_end=0.0)
    with pytest.raises(ValueError):
        simulate(SCALAR, None, Grid1D(10.0, 101))


def test_oversized_dt_is_reduced(params, caplog):
    g = Grid1D(1.0, 201)
    f = simulate(REDUCED6, params, g, t_end=0.2, snapshot_every=0.1, dt=1.0, reaction=False)
    assert f.dt <= stable_dt(g, params.D) + 1e-15
    assert "reducing" in caplog.text


def test_semi_implicit_accepts_large_steps(params):
    g = Grid1D(1.0, 201)
    f = simulate(REDUCED6, params, g, t_end=0.5, snapshot_every=0.1, dt=0.05,
                 scheme="semi_implicit", reaction=False)
    assert f.dt == pytest.approx(0.05)


def test_stop_at_boundary(params):
    f = simulate(SCALAR, None, Grid1D(20.0, 401), t_end=200.0, snapshot_every=1.0, D=2.0,
                 stop_at_boundary=True)
    assert f.stopped_at_boundary
    assert f.times[-1] < 200.0


def test_schemes_agree_on_scalar_speed():
    g = Grid1D(60.0, 1201)
    runs = [simulate(SCALAR, None, g, t_end=60.0, D=2.0, scheme=s, stop_at_boundary=True)
            for s in SCHEMES]
    speeds = [measure_speed(f).speed for f in runs]
    assert max(speeds) / min(speeds) - 1 < 0.01


def test_scalar_grid_halving():
    coarse = Grid1D(60.0, 601)
    c1, c2 = (measure_speed(simulate(SCALAR, None, g, t_end=60.0, D=2.0,
                                     stop_at_boundary=True)).speed
              for g in (coarse, coarse.refined()))
    assert abs(c2 - c1) / c2 < 0.02
