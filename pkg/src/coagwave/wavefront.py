"""Front tracking, wave speed, profile invariance and minimax speed brackets."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NoFrontError, NotConvergedError, UnusableProfileError
from .models import CoagParams, ModelKind, eval_rhs
from .rdsolver import Grid1D, SpaceTimeField


def front_position(profile, x, threshold: float, *, allow_multiple: bool = False) -> float:
    """Where a decreasing profile crosses ``threshold``, by linear interpolation.

    Exactly one crossing is required unless ``allow_multiple``, in which case
    the rightmost downward crossing is used.
    """
    u = np.asarray(profile, dtype=float)
    x = np.asarray(x, dtype=float)
    s = u - threshold
    nz = np.flatnonzero(s != 0)
    crossings = int(np.count_nonzero(np.sign(s[nz][1:]) != np.sign(s[nz][:-1])))
    if crossings == 0 or (crossings > 1 and not allow_multiple):
        raise NoFrontError(f"profile crosses threshold {threshold:g} {crossings} times",
                           crossings=crossings)
    down = np.flatnonzero((s[:-1] > 0) & (s[1:] <= 0))
    if down.size == 0:
        raise NoFrontError("no downward crossing", crossings=crossings)
    i = down[-1]
    if s[i + 1] == 0:
        return float(x[i + 1])
    return float(x[i] + s[i] / (s[i] - s[i + 1]) * (x[i + 1] - x[i]))


def front_trace(field: SpaceTimeField, threshold: float | None = None,
                allow_multiple: bool = False) -> np.ndarray:
    """Front position per snapshot; NaN where no front exists."""
    thr = 0.5 * field.scale if threshold is None else threshold
    x = field.grid.x
    out = np.full(field.times.size, np.nan)
    for k, prof in enumerate(field.front):
        try:
            out[k] = front_position(prof, x, thr, allow_multiple=allow_multiple)
        except NoFrontError:
            pass
    return out


@dataclass
class SpeedMeasurement:
    speed: float
    converged: bool
    window: tuple[float, float]
    residual: float
    front_trace: list[tuple[float, float]]
    reason: str = ""


def _slope(t, x):
    return float(np.polyfit(t, x, 1)[0])


def measure_speed(field: SpaceTimeField, threshold: float | None = None,
                  window_fraction: float = 0.5, margin: float = 0.1,
                  allow_multiple: bool = False) -> SpeedMeasurement:
    """Least-squares front speed over the trailing part of the run.

    Only snapshots with the front at least ``margin * L`` away from both ends
    are used.  Converged when the slope over the last quarter of the window
    agrees with the window slope to 1 % and the trace is monotone.
    """
    if field.times.size < 10:
        raise NotConvergedError(f"measure_speed needs at least 10 snapshots, got {field.times.size}")
    trace = front_trace(field, threshold, allow_multiple)
    L = field.grid.L
    ok = np.isfinite(trace) & (trace >= margin * L) & (trace <= (1 - margin) * L)
    idx = np.flatnonzero(ok)
    if idx.size and idx[-1] != ok.size - 1 and not field.stopped_at_boundary:
        tail = trace[idx[-1] + 1:]
        if np.any(np.isnan(tail)):
            raise NoFrontError("front lost after leaving the measurement zone")
    if idx.size < 4:
        raise NotConvergedError(
            f"only {idx.size} snapshots with the front inside the measurement zone")
    # keep the last contiguous run of usable snapshots
    breaks = np.flatnonzero(np.diff(idx) != 1)
    if breaks.size:
        idx = idx[breaks[-1] + 1:]
    n_win = max(4, int(round(window_fraction * idx.size)))
    win = idx[-n_win:]
    t, xf = field.times[win], trace[win]
    speed = _slope(t, xf)
    n_q = max(3, n_win // 4)
    quarter = _slope(t[-n_q:], xf[-n_q:])
    residual = abs(quarter - speed) / abs(speed) if speed != 0 else np.inf
    monotone = bool(np.all(np.diff(xf) >= -1e-12 * L))
    reason = ""
    if not monotone:
        reason = "front trace not monotone"
    elif residual >= 0.01:
        reason = f"slope drift {residual:.3g} >= 1%"
    elif speed <= 0:
        reason = "front does not advance"
    converged = reason == ""
    return SpeedMeasurement(speed=speed, converged=converged,
                            window=(float(t[0]), float(t[-1])), residual=residual,
                            front_trace=[(float(a), float(b)) for a, b in
                                         zip(field.times[idx], trace[idx])],
                            reason=reason)


@dataclass
class DriftReport:
    drift: float
    monotone: bool
    transient: bool
    max_increase: float
    n_profiles: int


def shape_drift(field: SpaceTimeField, window: int = 10, threshold: float | None = None,
                half_width: float | None = None, monotone_tol: float = 1e-8) -> DriftReport:
    """Largest change between successive front-aligned profiles, over scale.

    Profiles are compared on a common window around the front; each profile
    in the window must also be non-increasing in x up to ``monotone_tol * scale``.
    """
    scale = field.scale
    trace = front_trace(field, threshold)
    idx = np.flatnonzero(np.isfinite(trace))[-window:]
    if idx.size < 2:
        raise NotConvergedError("need at least two snapshots with a front")
    x = field.grid.x
    fronts = trace[idx]
    room = min(fronts.min() - x[0], x[-1] - fronts.max())
    hw = room if half_width is None else min(half_width, room)
    xi = np.linspace(-hw, hw, 801)
    aligned = [np.interp(fronts[j] + xi, x, field.front[i]) for j, i in enumerate(idx)]
    drift = max(float(np.max(np.abs(b - a))) for a, b in zip(aligned[:-1], aligned[1:])) / scale
    incr = max(float(np.max(np.diff(field.front[i]))) for i in idx)
    monotone = incr <= monotone_tol * scale
    return DriftReport(drift=drift, monotone=monotone, transient=drift >= 0.01,
                       max_increase=incr / scale, n_profiles=int(idx.size))


@dataclass
class TestProfile:
    """Componentwise decreasing test function for the minimax bracket."""

    __test__ = False  # not a pytest class

    grid: Grid1D
    rho: np.ndarray  # (n_species, N)
    upper: np.ndarray  # left limit per component

    def __post_init__(self):
        self.rho = np.asarray(self.rho, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.rho.shape[1] != self.grid.N:
            raise ValueError("profile length does not match the grid")

    @classmethod
    def from_field(cls, field: SpaceTimeField, index: int = -1) -> "TestProfile":
        rho = field.snapshots[index]
        return cls(field.grid, rho, rho[:, 0].copy())

    @classmethod
    def tanh(cls, grid: Grid1D, upper, center: float, width) -> "TestProfile":
        upper = np.asarray(upper, dtype=float)
        width = np.broadcast_to(np.asarray(width, dtype=float), upper.shape)
        x = grid.x
        rho = np.array([0.5 * u * (1 - np.tanh((x - center) / w)) for u, w in zip(upper, width)])
        return cls(grid, rho, upper)

    def violations(self, tol: float = 1e-3) -> list[str]:
        out = []
        for i, comp in enumerate(self.rho):
            sc = max(abs(self.upper[i]), 1e-300)
            if np.max(np.diff(comp)) > 1e-8 * sc:
                out.append(f"component {i} is not monotone decreasing")
            if abs(comp[0] - self.upper[i]) > tol * sc:
                out.append(f"component {i} misses its left limit")
            if abs(comp[-1]) > tol * sc:
                out.append(f"component {i} does not decay at the right end")
        return out


@dataclass
class SpeedBracket:
    lower: float
    upper: float
    inf_S: list[float] = field(default_factory=list)
    sup_S: list[float] = field(default_factory=list)

    def contains(self, c: float, tol: float = 0.0) -> bool:
        return self.lower - tol <= c <= self.upper + tol


def usable_profile(field: SpaceTimeField) -> tuple[TestProfile, int]:
    """Latest snapshot usable as a minimax test function, with its index."""
    for k in range(len(field.times) - 1, 0, -1):
        prof = TestProfile.from_field(field, k)
        if not prof.violations():
            return prof, k
    raise UnusableProfileError("no snapshot is a monotone profile with decayed tails")


def minimax_bracket(rho: TestProfile, kind: ModelKind, params: CoagParams | None,
                    D: float | None = None, slope_eps: float = 1e-4,
                    components=None) -> SpeedBracket:
    """Lower and upper speed bounds ``min_i inf S_i`` and ``max_i sup S_i``.

    ``S_i = (D rho_i'' + F_i(rho)) / (-rho_i')`` with central differences,
    restricted to nodes where ``|rho_i'| > slope_eps * scale_i / dx``.
    """
    if D is None:
        D = params.D
    bad = rho.violations()
    if bad:
        raise UnusableProfileError("; ".join(bad))
    dx = rho.grid.dx
    r = rho.rho
    F = eval_rhs(kind, np.clip(r, 0.0, None), params)
    d1 = (r[:, 2:] - r[:, :-2]) / (2 * dx)
    d2 = (r[:, 2:] - 2 * r[:, 1:-1] + r[:, :-2]) / dx ** 2
    comps = range(kind.size) if components is None else components
    infs, sups = [], []
    for i in comps:
        sc = abs(rho.upper[i])
        mask = -d1[i] > slope_eps * sc / dx
        if not mask.any():
            continue
        S = (D * d2[i, mask] + F[i, 1:-1][mask]) / (-d1[i, mask])
        infs.append(float(S.min()))
        sups.append(float(S.max()))
    if not infs:
        raise UnusableProfileError("no component has a usable slope anywhere")
    return SpeedBracket(lower=min(infs), upper=max(sups), inf_S=infs, sup_S=sups)


def containment_tolerance(field: SpaceTimeField) -> float:
    """Discretization allowance ``2 dx / snapshot interval`` for bracket checks."""
    dt_snap = float(np.median(np.diff(field.times)))
    return 2 * field.grid.dx / dt_snap


@dataclass
class EpsilonRow:
    epsilon: float
    speed: float
    converged: bool
    gap: float


@dataclass
class EpsilonTable:
    rows: list[EpsilonRow]
    c0: float
    K_fit: float
    K_envelope: float

    @property
    def gaps_monotone(self) -> bool:
        ordered = sorted(self.rows, key=lambda r: -r.epsilon)
        gaps = [r.gap for r in ordered]
        return all(b < a for a, b in zip(gaps[:-1], gaps[1:]))


def scale_slow_variable(params: CoagParams, epsilon: float) -> CoagParams:
    """Speed up the U11 equation by 1/epsilon (k11 and h11 both scaled)."""
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    return params.replace(k11=params.k11 / epsilon, h11=params.h11 / epsilon)


def epsilon_convergence(params: CoagParams, epsilons, grid: Grid1D | None = None,
                        t_end: float = 5.0, snapshot_every: float = 0.05,
                        jobs: int = 1) -> EpsilonTable:
    """Two-equation speeds with a fast U11 equation versus the one-equation limit.

    The default grid (1 mm, dx = 0.5 um) resolves the one-equation front; on
    the 5 um reaction-diffusion default it is about 15 % slow.
    """
    from .models import ONE_EQ, TWO_EQ
    from .sweeps import measure_model_speed, run_parallel

    grid = grid or Grid1D(1.0, 2001)
    tasks = [(ONE_EQ, params, grid, t_end, snapshot_every)]
    tasks += [(TWO_EQ, scale_slow_variable(params, e), grid, t_end, snapshot_every)
              for e in epsilons]
    results = run_parallel(measure_model_speed, tasks, jobs)
    c0 = results[0].speed
    rows = []
    for e, m in zip(epsilons, results[1:]):
        ok = m is not None and m.converged
        speed = m.speed if m is not None else float("nan")
        rows.append(EpsilonRow(float(e), speed, ok, abs(speed - c0)))
    eps = np.array([r.epsilon for r in rows if r.converged])
    gaps = np.array([r.gap for r in rows if r.converged])
    K_fit = float(eps @ gaps / (eps @ eps)) if eps.size else float("nan")
    K_env = float(np.max(gaps / eps)) if eps.size else float("nan")
    return EpsilonTable(rows=rows, c0=c0, K_fit=K_fit, K_envelope=K_env)
