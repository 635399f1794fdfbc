"""HTTP service over the core package.

Each endpoint is a thin wrapper around a handler that maps a request model to
a response model.  The handlers are plain functions, so the command line can
call them in-process or over HTTP with identical results.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict

import numpy as np
from fastapi import FastAPI, HTTPException, Response

from . import __version__
from .config import RunConfig, load_config
from .equilibria import classify, verify_theorem1
from .errors import CoagError
from .io import RunManifest
from .rdsolver import Grid1D, InitialCondition, simulate
from .schemas import (BoundsRequest, BoundsResponse, BracketOut, CalibrateRequest,
                      CalibrateResponse, DriftOut, EpsilonRowOut, EquilibriaRequest,
                      EquilibriaResponse, EstimateOut, ManifestOut, MeasurementOut, RootOut,
                      SimulateRequest, SimulateResponse, SpeedRequest, SpeedResponse,
                      SweepRequest, SweepResponse, SweepRowOut)
from .speed_formulas import coag_speed_estimates, narrow_zone_speed, piecewise_linear_speed
from .sweeps import SweepSpec, calibrate_k2_bar, run_sweep
from .wavefront import (TestProfile, containment_tolerance, epsilon_convergence,
                        measure_speed, minimax_bracket, shape_drift, usable_profile)

log = logging.getLogger(__name__)


def _manifest(cfg: RunConfig, command: str, **tolerances) -> ManifestOut:
    m = RunManifest(config_hash=cfg.hash, command=command, seed=cfg.seed,
                    tolerances=tolerances)
    return ManifestOut(**{k: v for k, v in asdict(m).items() if k != "columns"})


def _config(req) -> RunConfig:
    return load_config(req.config_text, overrides=req.overrides)


class _Setup:
    """Model, grid and run lengths for one simulation request."""

    def __init__(self, cfg: RunConfig, model: str):
        self.kind = cfg.scalar.resolve(model)
        if self.kind.is_coagulation:
            self.params, self.D = cfg.params, cfg.params.D
            self.grid, self.t_end, self.every = cfg.run_settings(self.kind)
        else:
            s = cfg.scalar
            self.params, self.grid, self.D = None, s.grid, s.D
            self.t_end, self.every = s.t_end, s.snapshot_every


def _measurement(m) -> MeasurementOut:
    return MeasurementOut(speed=m.speed, converged=m.converged, window=m.window,
                          residual=m.residual, reason=m.reason, front_trace=m.front_trace)


def handle_simulate(req: SimulateRequest) -> SimulateResponse:
    cfg = _config(req)
    st = _Setup(cfg, req.model)
    ic = None
    if req.amplitude is not None:
        ic = InitialCondition(req.amplitude, st.grid.L / 20)
    t0 = time.perf_counter()
    fld = simulate(st.kind, st.params, st.grid, ic, st.t_end, st.every, D=st.D,
                   scheme=cfg.scheme, reaction=req.reaction, stop_at_boundary=req.reaction)
    runtime = time.perf_counter() - t0
    measurement = drift = bracket = None
    if req.reaction:
        try:
            m = measure_speed(fld, cfg.threshold, cfg.window_fraction)
        except (CoagError, ValueError) as exc:
            m = None
            measurement = MeasurementOut(speed=float("nan"), converged=False,
                                         window=(float("nan"), float("nan")),
                                         residual=float("inf"), reason=str(exc))
        if m is not None:
            measurement = _measurement(m)
            try:
                d = shape_drift(fld, threshold=cfg.threshold)
                drift = DriftOut(drift=d.drift, monotone=d.monotone, transient=d.transient,
                                 n_profiles=d.n_profiles)
            except CoagError as exc:
                log.info("no drift report: %s", exc)
            if m.converged:
                try:
                    prof, _ = usable_profile(fld)
                    b = minimax_bracket(prof, st.kind, st.params, D=st.D)
                    tol = containment_tolerance(fld)
                    bracket = BracketOut(lower=b.lower, upper=b.upper, tolerance=tol,
                                         contains=b.contains(m.speed, tol))
                except CoagError as exc:
                    log.info("no bracket: %s", exc)
    return SimulateResponse(
        manifest=_manifest(cfg, "simulate", scheme=cfg.scheme, dt=fld.dt),
        model=str(st.kind), species=list(st.kind.species), x=st.grid.x.tolist(),
        times=fld.times.tolist(),
        snapshots=fld.snapshots.tolist() if req.include_snapshots else [],
        mass=fld.total_mass().tolist(), clip_events=fld.clip_events,
        stopped_at_boundary=fld.stopped_at_boundary, measurement=measurement,
        drift=drift, bracket=bracket, runtime_s=runtime)


def handle_sweep(req: SweepRequest) -> SweepResponse:
    cfg = _config(req)
    if req.values is not None:
        spec = SweepSpec(req.parameter, req.values, req.models)
    elif None not in (req.lo, req.hi, req.count):
        spec = SweepSpec.from_range(req.parameter, req.lo, req.hi, req.count, req.spacing,
                                    req.models)
    else:
        raise ValueError("a sweep needs either values or lo, hi and count")
    rows = run_sweep(spec, cfg.sweep_context(), jobs=req.jobs)
    return SweepResponse(manifest=_manifest(cfg, "sweep", window_fraction=cfg.window_fraction),
                         parameter=spec.parameter,
                         rows=[SweepRowOut(**asdict(r)) for r in rows])


def equilibria_summary(classification: str, roots, passed: bool) -> str:
    verdict = "PASS" if passed else "FAIL"
    if classification == "Bistable":
        return (f"Bistable, roots T1*<T2*: {roots[0]:.6g} < {roots[1]:.6g}, "
                f"Theorem 1 check: {verdict}")
    listed = ", ".join(f"{r:.6g}" for r in roots) or "none"
    return f"{classification}, positive roots: {listed}, Theorem 1 check: {verdict}"


def handle_equilibria(req: EquilibriaRequest) -> EquilibriaResponse:
    cfg = _config(req)
    rep = classify(cfg.params)
    trials = cfg.theorem1_trials if req.trials is None else req.trials
    th = verify_theorem1(cfg.params, trials=trials, seed=cfg.seed)
    passed = th.passed and rep.theorem1_consistent
    roots = [RootOut(T=r, P_prime=pp, principal_eigenvalue=ev, stable=ev < 0,
                     degenerate=dg, residual=res)
             for r, pp, ev, dg, res in zip(rep.roots, rep.P_prime, rep.principal_eigenvalues,
                                           rep.degenerate, rep.residuals)]
    return EquilibriaResponse(
        manifest=_manifest(cfg, "equilibria", trials=trials),
        classification=rep.classification.value, roots=roots, case_count=rep.case_count,
        coefficients=rep.coeffs.as_tuple(), theorem1_passed=passed,
        theorem1_checked=th.n_checked, theorem1_trials=th.trials_accepted,
        summary=equilibria_summary(rep.classification.value, rep.roots, passed))


def _estimate(e) -> EstimateOut:
    return EstimateOut(method=e.method, value=e.value, workpad=asdict(e.workpad))


def handle_speed(req: SpeedRequest) -> SpeedResponse:
    cfg = _config(req)
    if req.mode == "scalar":
        s = cfg.scalar
        nz = narrow_zone_speed(s.n, s.b, s.sigma, s.D)
        pl = piecewise_linear_speed(s.n, s.b, s.sigma, s.D)
        out = dict(c1=nz.value, c2=pl.value, narrow=_estimate(nz), piecewise=_estimate(pl))
    else:
        est = coag_speed_estimates(cfg.params)
        out = dict(c1=est.c1, c2=est.c2, narrow=_estimate(est.narrow),
                   piecewise=_estimate(est.piecewise), printed_c1=est.printed_c1,
                   printed_c2=est.printed_c2, b_dimensionless=est.b_dimensionless,
                   D_tilde=est.D_tilde)
    c = req.measured_speed
    if c is not None and c > 0:
        out.update(measured_speed=c, ratio_c1=out["c1"] / c, ratio_c2=out["c2"] / c)
    return SpeedResponse(manifest=_manifest(cfg, "speed"), mode=req.mode, **out)


def handle_bounds(req: BoundsRequest) -> BoundsResponse:
    cfg = _config(req)
    st = _Setup(cfg, req.model)
    trace: list = []
    measured = req.measured_speed
    if req.profile is not None:
        x = np.asarray(req.profile.x, dtype=float)
        grid = Grid1D(float(x[-1] - x[0]), x.size)
        if abs(x[0]) > 1e-12 or not np.allclose(x, grid.x, rtol=0, atol=1e-9 * grid.L):
            raise ValueError("stored profile must sit on a uniform grid starting at x = 0")
        if list(req.profile.species) != list(st.kind.species):
            raise ValueError(f"profile species {req.profile.species} do not match model "
                             f"{st.kind} ({list(st.kind.species)})")
        vals = np.asarray(req.profile.values, dtype=float)
        prof = TestProfile(grid, vals, vals[:, 0].copy())
        interval = req.snapshot_interval or st.every
        tol = 2 * grid.dx / interval
    else:
        fld = simulate(st.kind, st.params, st.grid, None, st.t_end, st.every, D=st.D,
                       scheme=cfg.scheme, stop_at_boundary=True)
        m = measure_speed(fld, cfg.threshold, cfg.window_fraction)
        trace = m.front_trace
        if measured is None and m.converged:
            measured = m.speed
        prof, _ = usable_profile(fld)
        tol = containment_tolerance(fld)
    b = minimax_bracket(prof, st.kind, st.params, D=st.D)
    out = dict(lower=b.lower, upper=b.upper, inf_S=b.inf_S, sup_S=b.sup_S, tolerance=tol,
               measured_speed=measured, front_trace=trace)
    if measured is not None:
        out["contains"] = b.contains(measured, tol)
    if req.epsilons:
        if not st.kind.is_coagulation:
            raise ValueError("the epsilon ladder applies to coagulation models only")
        f = cfg.fine
        tab = epsilon_convergence(cfg.params, req.epsilons, f.grid, f.t_end, f.snapshot_every,
                                  jobs=req.jobs)
        out.update(epsilon_rows=[EpsilonRowOut(**asdict(r)) for r in tab.rows],
                   c_one_eq=tab.c0, K_fit=tab.K_fit, K_envelope=tab.K_envelope,
                   gaps_monotone=tab.gaps_monotone)
    return BoundsResponse(manifest=_manifest(cfg, "bounds"), model=str(st.kind), **out)


def handle_calibrate(req: CalibrateRequest) -> CalibrateResponse:
    cfg = _config(req)
    cal = calibrate_k2_bar(cfg.params, req.target, (req.lo, req.hi), cfg.grid, cfg.t_end,
                           cfg.snapshot_every)
    return CalibrateResponse(manifest=_manifest(cfg, "calibrate", target=req.target),
                             k2_bar=cal.k2_bar, speed=cal.speed, target=cal.target,
                             evaluations=cal.evaluations)


HANDLERS = {
    "simulate": (handle_simulate, SimulateRequest, SimulateResponse),
    "sweep": (handle_sweep, SweepRequest, SweepResponse),
    "equilibria": (handle_equilibria, EquilibriaRequest, EquilibriaResponse),
    "speed": (handle_speed, SpeedRequest, SpeedResponse),
    "bounds": (handle_bounds, BoundsRequest, BoundsResponse),
    "calibrate": (handle_calibrate, CalibrateRequest, CalibrateResponse),
}


def _json(model) -> Response:
    # NaN speeds are legitimate data, so serialize with pydantic rather than json.dumps
    return Response(content=model.model_dump_json(), media_type="application/json")


def _run(name: str, req):
    handler = HANDLERS[name][0]
    try:
        return _json(handler(req))
    except (CoagError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="coagwave", version=__version__)

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate_endpoint(req: SimulateRequest):
        return _run("simulate", req)

    @app.post("/sweep", response_model=SweepResponse)
    def sweep_endpoint(req: SweepRequest):
        return _run("sweep", req)

    @app.post("/equilibria", response_model=EquilibriaResponse)
    def equilibria_endpoint(req: EquilibriaRequest):
        return _run("equilibria", req)

    @app.post("/speed", response_model=SpeedResponse)
    def speed_endpoint(req: SpeedRequest):
        return _run("speed", req)

    @app.post("/bounds", response_model=BoundsResponse)
    def bounds_endpoint(req: BoundsRequest):
        return _run("bounds", req)

    @app.post("/calibrate", response_model=CalibrateResponse)
    def calibrate_endpoint(req: CalibrateRequest):
        return _run("calibrate", req)

    return app


app = create_app()
