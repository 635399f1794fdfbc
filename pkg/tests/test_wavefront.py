from __future__ import annotations

import math

import numpy as np
import pytest

from coagwave.config import load_config
from coagwave.errors import NoFrontError, NotConvergedError, UnusableProfileError
from coagwave.models import ModelKind
from coagwave.rdsolver import Grid1D, SpaceTimeField, simulate
from coagwave.wavefront import (EpsilonRow, EpsilonTable, TestProfile, containment_tolerance,
                                front_position, front_trace, measure_speed, minimax_bracket,
                                scale_slow_variable, shape_drift)

# u_t = u_xx + u^2 (1 - u) has the explicit front 1 / (1 + exp((x - ct) / sqrt 2)), c = 1/sqrt 2
EXACT = ModelKind.scalar(2, 1.0, 0.0)
C_EXACT = 1 / math.sqrt(2)


def exact_profile(x, shift=0.0):
    return 1.0 / (1.0 + np.exp((x - shift) / math.sqrt(2)))


def travelling_field(c=C_EXACT, L=60.0, N=1201, t_end=40.0, every=1.0, x0=10.0):
    g = Grid1D(L, N)
    t = np.arange(0.0, t_end + every / 2, every)
    snaps = np.array([exact_profile(g.x, x0 + c * tk)[None, :] for tk in t])
    return SpaceTimeField(grid=g, times=t, snapshots=snaps, kind=EXACT, params=None,
                          D=1.0, dt=every, scheme="linearized")


def test_front_position_interpolates():
    x = np.linspace(0, 1, 11)
    u = 1.0 - x
    assert front_position(u, x, 0.45) == pytest.approx(0.55)
    assert front_position(u, x, 0.5) == pytest.approx(0.5)


def test_front_position_rejects_multiple_crossings():
    x = np.linspace(0, 4, 401)
    u = np.cos(np.pi * x) * 0.5 + 0.5
    with pytest.raises(NoFrontError) as err:
        front_position(u, x, 0.5)
    assert err.value.crossings > 1
    assert front_position(u, x, 0.5, allow_multiple=True) == pytest.approx(2.5, abs=1e-3)
    with pytest.raises(NoFrontError):
        front_position(np.zeros_like(x), x, 0.5)


def test_measure_speed_recovers_prescribed_translation():
    f = travelling_field(c=0.9)
    m = measure_speed(f)
    assert m.converged and m.reason == ""
    assert m.speed == pytest.approx(0.9, rel=1e-6)
    assert all(6.0 <= xf <= 54.0 for _, xf in m.front_trace)


def test_measure_speed_flags_acceleration():
    g = Grid1D(60.0, 1201)
    t = np.arange(0.0, 41.0)
    snaps = np.array([exact_profile(g.x, 8.0 + 0.02 * tk * tk)[None, :] for tk in t])
    f = SpaceTimeField(g, t, snaps, EXACT, None, 1.0, 1.0, "linearized")
    m = measure_speed(f)
    assert not m.converged and "drift" in m.reason


def test_measure_speed_needs_enough_snapshots():
    with pytest.raises(NotConvergedError):
        measure_speed(travelling_field(t_end=5.0))
    f = travelling_field(c=0.0)
    f.snapshots[:] = 0.0
    with pytest.raises(NotConvergedError):
        measure_speed(f)


def test_front_trace_has_nan_without_front():
    f = travelling_field()
    f.snapshots[3] = 0.0
    tr = front_trace(f)
    assert np.isnan(tr[3]) and np.isfinite(tr[4])


def test_drift_vanishes_for_exact_translation():
    rep = shape_drift(travelling_field())
    assert rep.drift < 1e-4 and rep.monotone and not rep.transient
    assert rep.n_profiles == 10


def test_drift_detects_shape_change():
    f = travelling_field()
    g = f.grid
    for k, t in enumerate(f.times):
        width = 1.0 if k % 2 else 2.0  # breathing front
        f.snapshots[k, 0] = 1.0 / (1.0 + np.exp((g.x - 10.0 - C_EXACT * t) / width))
    assert shape_drift(f).transient


def test_simulated_exact_front():
    g = Grid1D(60.0, 1201)
    f = simulate(EXACT, None, g, t_end=60.0, D=1.0, stop_at_boundary=True)
    m = measure_speed(f)
    assert m.converged
    assert m.speed == pytest.approx(C_EXACT, rel=0.01)
    rep = shape_drift(f)
    assert rep.drift < 0.01 and rep.monotone


def test_minimax_bracket_is_tight_on_exact_profile():
    g = Grid1D(60.0, 6001)
    rho = TestProfile(g, exact_profile(g.x, 30.0)[None, :], np.array([1.0]))
    br = minimax_bracket(rho, EXACT, None, D=1.0)
    assert br.lower == pytest.approx(C_EXACT, rel=1e-3)
    assert br.upper == pytest.approx(C_EXACT, rel=1e-3)
    assert br.contains(C_EXACT, tol=1e-3)


def test_minimax_bracket_brackets_for_other_profiles():
    g = Grid1D(60.0, 3001)
    for width in (0.7, 1.0, 3.0):
        rho = TestProfile.tanh(g, [1.0], 30.0, width * math.sqrt(2) * 2)
        br = minimax_bracket(rho, EXACT, None, D=1.0)
        assert br.lower <= C_EXACT <= br.upper


def test_unusable_profiles_are_rejected():
    g = Grid1D(10.0, 101)
    rising = TestProfile(g, np.linspace(0.0, 1.0, 101)[None, :], np.array([1.0]))
    assert rising.violations()
    with pytest.raises(UnusableProfileError):
        minimax_bracket(rising, EXACT, None, D=1.0)
    short = TestProfile.tanh(g, [1.0], 9.9, 1.0)
    assert any("decay" in v for v in short.violations())
    with pytest.raises(ValueError):
        TestProfile(g, np.zeros((1, 50)), np.array([1.0]))


def test_containment_tolerance():
    f = travelling_field(every=2.0)
    assert containment_tolerance(f) == pytest.approx(2 * f.grid.dx / 2.0)


def test_scale_slow_variable():
    p = load_config().params
    q = scale_slow_variable(p, 0.25)
    assert q.k11 == pytest.approx(4 * p.k11) and q.h11 == pytest.approx(4 * p.h11)
    assert q.k11 / q.h11 == pytest.approx(p.k11 / p.h11)
    for bad in (0.0, 1.5):
        with pytest.raises(ValueError):
            scale_slow_variable(p, bad)


def test_epsilon_table_properties():
    rows = [EpsilonRow(e, 1 - e, True, e) for e in (1.0, 0.5, 0.25)]
    tab = EpsilonTable(rows, 1.0, 1.0, 1.0)
    assert tab.gaps_monotone
    rows[2].gap = 0.6
    assert not tab.gaps_monotone
