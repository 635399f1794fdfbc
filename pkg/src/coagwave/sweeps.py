"""Speed measurement driver and parameter sweeps."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import CoagError, NoUpperStateError
from .models import REDUCED6, CoagParams, ModelKind
from .rdsolver import Grid1D, InitialCondition, simulate
from .speed_formulas import coag_speed_estimates, narrow_zone_speed, piecewise_linear_speed
from .wavefront import SpeedMeasurement, measure_speed

log = logging.getLogger(__name__)

ESTIMATORS = ("narrow_zone", "piecewise_linear")
MIN_USABLE = 12


def _failed(reason: str) -> SpeedMeasurement:
    return SpeedMeasurement(speed=float("nan"), converged=False, window=(math.nan, math.nan),
                            residual=math.inf, front_trace=[], reason=reason)


def measure_model_speed(kind: ModelKind, params: CoagParams | None, grid: Grid1D,
                        t_end: float, snapshot_every: float, D: float | None = None,
                        ic: InitialCondition | None = None, scheme: str = "linearized",
                        threshold: float | None = None, window_fraction: float = 0.5,
                        ) -> SpeedMeasurement:
    """Simulate until the front nears the far end and measure its speed.

    Non-igniting or otherwise unmeasurable runs come back with
    ``converged=False`` and a reason instead of raising.  When the front
    crosses the domain in too few snapshots the run is repeated with a finer
    snapshot interval.
    """
    every = snapshot_every
    for _ in range(3):
        try:
            fld = simulate(kind, params, grid, ic, t_end, every, D=D, scheme=scheme,
                           stop_at_boundary=True)
        except CoagError as exc:
            return _failed(f"simulation failed: {exc}")
        try:
            m = measure_speed(fld, threshold, window_fraction)
        except CoagError as exc:
            m = _failed(str(exc))
        if fld.stopped_at_boundary and len(m.front_trace) < MIN_USABLE:
            every = fld.times[-1] / (4 * MIN_USABLE)
            continue
        if not m.front_trace and not m.reason:
            m.reason = "no ignition"
        return m
    return m


def run_parallel(fn, tasks, jobs: int = 1):
    """Apply ``fn(*task)`` to each task, preserving order."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, *t) for t in tasks]
        return [f.result() for f in futures]


@dataclass
class ScalarSettings:
    n: int = 3
    b: float = 10.0
    sigma: float = 0.01
    D: float = 2.0
    L: float = 60.0
    N: int = 1201
    t_end: float = 120.0
    snapshot_every: float = 1.0

    @property
    def kind(self) -> ModelKind:
        return ModelKind.scalar(self.n, self.b, self.sigma)

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.L, self.N)

    def resolve(self, model: str) -> ModelKind:
        """Parse a model name; a bare ``scalar`` uses these settings."""
        return ModelKind.parse(model, {"n": self.n, "b": self.b, "sigma": self.sigma})


@dataclass
class SweepSpec:
    parameter: str
    values: list[float]
    models: list[str]
    output: str | None = None

    def __post_init__(self):
        self.values = [float(v) for v in self.values]
        if len(self.values) < 2:
            raise ValueError("a sweep needs at least two values")
        if any(b <= a for a, b in zip(self.values[:-1], self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        for m in self.models:
            if m not in ESTIMATORS:
                ScalarSettings().resolve(m)

    @classmethod
    def from_range(cls, parameter: str, lo: float, hi: float, count: int,
                   spacing: str = "linear", models=(), output=None) -> "SweepSpec":
        if count < 2:
            raise ValueError("count must be >= 2")
        if spacing == "log":
            values = np.geomspace(lo, hi, count)
        elif spacing == "linear":
            values = np.linspace(lo, hi, count)
        else:
            raise ValueError("spacing must be 'linear' or 'log'")
        return cls(parameter, [float(v) for v in values], list(models), output)


@dataclass
class SweepRow:
    value: float
    model: str
    speed: float
    converged: bool
    note: str = ""


@dataclass
class SweepContext:
    """Everything a sweep point needs besides the swept value."""

    params: CoagParams
    grid: Grid1D = field(default_factory=Grid1D)
    t_end: float = 40.0
    snapshot_every: float = 1.0
    scheme: str = "linearized"
    scalar: ScalarSettings = field(default_factory=ScalarSettings)
    activity_calibration: float = 1.0
    fine: "FineGrid | None" = None

    def run_settings(self, kind: ModelKind):
        """Grid, t_end and snapshot interval for a coagulation model."""
        if self.fine is not None and kind.name in self.fine.models:
            return self.fine.grid, self.fine.t_end, self.fine.snapshot_every
        return self.grid, self.t_end, self.snapshot_every


@dataclass
class FineGrid:
    """Finer grid for models whose fronts are only a few microns wide."""

    models: tuple[str, ...] = ("one_eq", "two_eq")
    L: float = 1.0
    N: int = 2001
    t_end: float = 5.0
    snapshot_every: float = 0.05

    @property
    def grid(self) -> Grid1D:
        return Grid1D(self.L, self.N)


SCALAR_KEYS = ("n", "b", "sigma")


def apply_value(ctx: SweepContext, parameter: str, value: float):
    """Return (params, scalar settings) with the swept value applied."""
    params, scalar = ctx.params, ctx.scalar
    if parameter == "activity":
        params = params.replace(k9=params.k9 * ctx.activity_calibration * value / 100.0)
    elif parameter in SCALAR_KEYS:
        v = int(round(value)) if parameter == "n" else value
        scalar = ScalarSettings(**{**scalar.__dict__, parameter: v})
    elif parameter == "D":
        params = params.replace(D=value)
        scalar = ScalarSettings(**{**scalar.__dict__, "D": value})
    elif parameter in params.__dataclass_fields__ and parameter != "V0":
        params = params.replace(**{parameter: value})
    else:
        raise ValueError(f"cannot sweep unknown parameter {parameter!r}")
    return params, scalar


def _point(ctx: SweepContext, parameter: str, value: float, model: str,
           scalar_mode: bool = False) -> SweepRow:
    params, scalar = apply_value(ctx, parameter, value)
    if model in ESTIMATORS:
        return _estimate_row(params, scalar, value, model, scalar_mode)
    kind = scalar.resolve(model)
    if kind.name == "scalar":
        m = measure_model_speed(kind, None, scalar.grid, scalar.t_end, scalar.snapshot_every,
                                D=scalar.D)
    else:
        grid, t_end, every = ctx.run_settings(kind)
        m = measure_model_speed(kind, params, grid, t_end, every, scheme=ctx.scheme)
    return SweepRow(value, model, m.speed, m.converged, m.reason)


def _estimate_row(params, scalar, value, model, scalar_mode) -> SweepRow:
    try:
        if scalar_mode:
            fn = narrow_zone_speed if model == "narrow_zone" else piecewise_linear_speed
            est = fn(scalar.n, scalar.b, scalar.sigma, scalar.D)
            return SweepRow(value, model, est.value, est.propagating)
        est = coag_speed_estimates(params)
        speed = est.c1 if model == "narrow_zone" else est.c2
        return SweepRow(value, model, speed, speed > 0)
    except (CoagError, NoUpperStateError, ValueError) as exc:
        return SweepRow(value, model, float("nan"), False, str(exc))


def run_sweep(spec: SweepSpec, ctx: SweepContext, jobs: int = 1) -> list[SweepRow]:
    """Evaluate every (value, model) pair; rows sorted by value then model order.

    Estimators refer to the scalar model when the sweep involves it, and to
    the coagulation estimates otherwise.
    """
    scalar_mode = spec.parameter in SCALAR_KEYS or any(
        m.startswith("scalar") for m in spec.models)
    tasks = [(ctx, spec.parameter, v, m, scalar_mode) for v in spec.values for m in spec.models]
    rows = run_parallel(_point, tasks, jobs)
    order = {m: i for i, m in enumerate(spec.models)}
    return sorted(rows, key=lambda r: (r.value, order[r.model]))


REFERENCE_SPEED = 0.05  # mm/min, reduced model at the default rates


@dataclass
class Calibration:
    k2_bar: float
    speed: float
    target: float
    evaluations: list[tuple[float, float]]


def calibrate_k2_bar(params: CoagParams, target: float = REFERENCE_SPEED,
                     bracket: tuple[float, float] = (5.0, 40.0), grid: Grid1D | None = None,
                     t_end: float = 40.0, snapshot_every: float = 1.0,
                     rtol: float = 1e-3) -> Calibration:
    """Fit ``k2_bar`` so that the reduced model front moves at ``target``.

    The speed is increasing in ``k2_bar``; the bracket is bisected in log
    space (Brent) until the speed matches to ``rtol``.
    """
    from scipy.optimize import brentq

    grid = grid or Grid1D()
    evals: list[tuple[float, float]] = []

    def gap(log_k):
        k = math.exp(log_k)
        m = measure_model_speed(REDUCED6, params.replace(k2_bar=k), grid, t_end, snapshot_every)
        if not m.converged:
            raise CoagError(f"calibration run at k2_bar={k:g} did not converge: {m.reason}")
        evals.append((k, m.speed))
        return m.speed / target - 1.0

    lo, hi = (math.log(b) for b in bracket)
    g_lo, g_hi = gap(lo), gap(hi)
    if g_lo * g_hi > 0:
        raise CoagError(f"target speed {target:g} not bracketed by k2_bar in {bracket}")
    log_k = brentq(gap, lo, hi, xtol=1e-4, rtol=rtol)
    k, speed = min(evals, key=lambda e: abs(math.log(e[0]) - log_k))
    return Calibration(k2_bar=k, speed=speed, target=target, evaluations=evals)
