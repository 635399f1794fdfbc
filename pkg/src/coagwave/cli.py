"""Command-line client.

Every subcommand builds a request, hands it to the service (in-process by
default, or a running server with ``--server URL``) and writes the response
as CSV / plot data.  Exit status: 0 success, 1 a checked invariant failed
(non-converged speed, bracket miss, eigenvalue sign mismatch), 2 bad input.
"""
from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import CoagError
from .io import RunManifest, read_snapshots, read_table, write_profile_stack, write_snapshots, write_table
from .schemas import (BoundsRequest, CalibrateRequest, EquilibriaRequest, ProfileIn,
                      SimulateRequest, SpeedRequest, SweepRequest)

log = logging.getLogger("coagwave")

EXIT_OK, EXIT_CHECK, EXIT_INPUT = 0, 1, 2


class ClientError(Exception):
    pass


class LocalClient:
    def call(self, name: str, req):
        from .service import HANDLERS
        try:
            return HANDLERS[name][0](req)
        except (CoagError, ValueError) as exc:
            raise ClientError(str(exc)) from exc


class HttpClient:
    def __init__(self, base_url: str, timeout: float = 3600.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout

    def call(self, name: str, req):
        import httpx
        from .service import HANDLERS
        resp = httpx.post(f"{self.base_url}/{name}", content=req.model_dump_json(),
                          headers={"content-type": "application/json"}, timeout=self.timeout)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise ClientError(f"server returned {resp.status_code}: {detail}")
        return HANDLERS[name][2].model_validate_json(resp.content)


def _manifest(m, columns) -> RunManifest:
    return RunManifest(config_hash=m.config_hash, command=m.command, version=m.version,
                       timestamp=m.timestamp, seed=m.seed, tolerances=m.tolerances,
                       columns=",".join(columns))


def _write(out: Path, name: str, columns, rows, manifest) -> Path:
    path = write_table(out / name, columns, rows, _manifest(manifest, columns))
    print(f"wrote {path}")
    return path


def _config_fields(args) -> dict:
    text = Path(args.config).read_text() if args.config else None
    return {"config_text": text, "overrides": list(args.param or [])}


def _fmt(v) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6g}"


# subcommands

SIMULATE_EPILOG = """\
outputs in --out:
  snapshots.csv      t, x, one column per species (long format, all snapshots)
  profiles_T.dat     gnuplot profile stack of the front species, one block per snapshot
  front_trace.csv    t, x_front (front position at the threshold, mm)
  speed_summary.csv  quantity, value (speed, convergence, drift, bracket)
  mass.csv           t, mass (trapezoidal integral summed over species)
"""


def cmd_simulate(args, client) -> int:
    req = SimulateRequest(**_config_fields(args), model=args.model or "reduced6",
                          reaction=args.reaction == "on", amplitude=args.amplitude)
    r = client.call("simulate", req)
    out = Path(args.out)
    species = r.species
    cols = ["t", "x", *species]
    p = write_snapshots(out / "snapshots.csv", r.times, r.x, species, np.asarray(r.snapshots, dtype=float),
                        _manifest(r.manifest, cols))
    print(f"wrote {p}")
    front = species.index("u") if "u" in species else species.index("T")
    stack = [snap[front] for snap in r.snapshots]
    p = write_profile_stack(out / f"profiles_{species[front]}.dat", r.times, r.x, stack,
                            _manifest(r.manifest, ["x", species[front]]), species[front])
    print(f"wrote {p}")
    _write(out, "mass.csv", ["t", "mass"], list(zip(r.times, r.mass)), r.manifest)
    print(f"model {r.model}: {len(r.times)} snapshots in {r.runtime_s:.2f} s"
          + (" (stopped near the far boundary)" if r.stopped_at_boundary else ""))
    if not req.reaction:
        drift = abs(r.mass[-1] - r.mass[0]) / max(abs(r.mass[0]), 1e-300)
        print(f"relative mass change without reaction: {drift:.3g}")
        return EXIT_OK
    m = r.measurement
    rows = [("speed", m.speed), ("converged", m.converged), ("residual", m.residual),
            ("window_start", m.window[0]), ("window_end", m.window[1]), ("reason", m.reason)]
    if r.drift:
        rows += [("shape_drift", r.drift.drift), ("monotone", r.drift.monotone)]
    if r.bracket:
        rows += [("bracket_lower", r.bracket.lower), ("bracket_upper", r.bracket.upper),
                 ("bracket_tolerance", r.bracket.tolerance),
                 ("bracket_contains", r.bracket.contains)]
    _write(out, "front_trace.csv", ["t", "x_front"], m.front_trace, r.manifest)
    _write(out, "speed_summary.csv", ["quantity", "value"], rows, r.manifest)
    status = "converged" if m.converged else f"NOT converged ({m.reason})"
    unit = "" if r.model.startswith("scalar") else "mm/min"
    print(f"speed {_fmt(m.speed)} {unit} [{status}]")
    if r.drift:
        print(f"shape drift {r.drift.drift:.3g}, monotone profiles: {r.drift.monotone}")
    if r.bracket:
        print(f"minimax bracket [{_fmt(r.bracket.lower)}, {_fmt(r.bracket.upper)}] "
              f"+/- {_fmt(r.bracket.tolerance)}, contains speed: {r.bracket.contains}")
    return EXIT_OK if m.converged else EXIT_CHECK


SWEEP_EPILOG = """\
output in --out: sweep_<parameter>.csv with columns value, model, speed, converged, note
  speed is NaN and converged false for points that do not ignite or do not settle.
models: reduced6, two_eq, one_eq, full14, scalar[:n=..,b=..,sigma=..],
  narrow_zone, piecewise_linear (closed-form estimates)
parameters: any rate key, D, T0, activity (percent of factor IX), or scalar n, b, sigma
"""


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args, client) -> int:
    models = [m.strip() for m in (args.models or args.model or "reduced6").split(",") if m.strip()]
    fields = dict(_config_fields(args), parameter=args.parameter, models=models,
                  jobs=args.jobs)
    if args.values:
        fields["values"] = _floats(args.values)
    elif args.range:
        lo, hi, count = args.range
        fields.update(lo=float(lo), hi=float(hi), count=int(count), spacing=args.spacing)
    else:
        raise ClientError("sweep needs --values or --range")
    r = client.call("sweep", SweepRequest(**fields))
    cols = ["value", "model", "speed", "converged", "note"]
    rows = [[row.value, row.model, row.speed, row.converged, row.note] for row in r.rows]
    _write(Path(args.out), f"sweep_{r.parameter}.csv", cols, rows, r.manifest)
    for row in r.rows:
        flag = "" if row.converged else f"  (not converged: {row.note or 'no ignition'})"
        print(f"{r.parameter}={row.value:<10.6g} {row.model:<18} {_fmt(row.speed)}{flag}")
    return EXIT_OK


EQUILIBRIA_EPILOG = """\
with --csv, writes equilibria.csv to --out: root, P_prime_sign, principal_eigenvalue,
  stable, classification
"""


def cmd_equilibria(args, client) -> int:
    r = client.call("equilibria", EquilibriaRequest(**_config_fields(args), trials=args.trials))
    a, b, c, d = r.coefficients
    print(f"P(T) = T (a T^3 + b T^2 + c T + d), a={a:.6g} b={b:.6g} c={c:.6g} d={d:.6g}")
    print(f"{'root T* (nM)':>16} {'sign P_prime':>13} {'principal eig':>15} {'stable':>7}")
    for root in r.roots:
        sign = "+" if root.P_prime > 0 else "-" if root.P_prime < 0 else "0"
        print(f"{root.T:>16.8g} {sign:>13} {root.principal_eigenvalue:>15.6g} "
              f"{str(root.stable):>7}")
    print(f"Theorem 1 sign check on {r.theorem1_checked} roots over "
          f"{r.theorem1_trials} perturbed rate sets")
    print(r.summary)
    if args.csv:
        cols = ["root", "P_prime_sign", "principal_eigenvalue", "stable", "classification"]
        rows = [[x.T, int(math.copysign(1, x.P_prime)) if x.P_prime else 0,
                 x.principal_eigenvalue, x.stable, r.classification] for x in r.roots]
        _write(Path(args.out), "equilibria.csv", cols, rows, r.manifest)
    return EXIT_OK if r.theorem1_passed else EXIT_CHECK


SPEED_EPILOG = """\
output in --out: speed_estimates.csv with columns method, quantity, value
  (the estimates, their intermediates and, with --printed, the formulas as typeset).
The ratio to the measured speed uses --measured, or else speed_summary.csv left in
--out by a previous simulate run.
"""


def _last_measured(out: Path) -> float | None:
    path = out / "speed_summary.csv"
    if not path.exists():
        return None
    tab = read_table(path)
    vals = dict(zip(tab.column("quantity"), tab.column("value")))
    if vals.get("converged") is not True:
        return None
    return float(vals["speed"])


def cmd_speed(args, client) -> int:
    out = Path(args.out)
    measured = args.measured if args.measured is not None else _last_measured(out)
    req = SpeedRequest(**_config_fields(args), mode="scalar" if args.scalar else "coag",
                       measured_speed=measured)
    r = client.call("speed", req)
    unit = "" if args.scalar else " mm/min"
    print(f"narrow reaction zone  c1 = {_fmt(r.c1)}{unit}")
    print(f"piecewise linear      c2 = {_fmt(r.c2)}{unit}")
    if r.measured_speed is not None:
        print(f"measured speed           {_fmt(r.measured_speed)}{unit}; "
              f"c1/c = {_fmt(r.ratio_c1)}, c2/c = {_fmt(r.ratio_c2)}")
    rows = [["narrow_zone", "speed", r.c1], ["piecewise_linear", "speed", r.c2]]
    for est in (r.narrow, r.piecewise):
        for k, v in est.workpad.items():
            if v is not None:
                rows.append([est.method, k, v])
    if r.b_dimensionless is not None:
        rows += [["dimensionless", "b", r.b_dimensionless], ["dimensionless", "D_tilde", r.D_tilde]]
    if r.measured_speed is not None:
        rows += [["measured", "speed", r.measured_speed], ["narrow_zone", "ratio", r.ratio_c1],
                 ["piecewise_linear", "ratio", r.ratio_c2]]
    if args.printed and r.printed_c1 is not None:
        rows += [["printed", "c1", r.printed_c1], ["printed", "c2", r.printed_c2]]
        print(f"printed formulas      c1 = {_fmt(r.printed_c1)}, c2 = {_fmt(r.printed_c2)}")
    _write(out, "speed_estimates.csv", ["method", "quantity", "value"], rows, r.manifest)
    return EXIT_OK


BOUNDS_EPILOG = """\
outputs in --out:
  bounds.csv         quantity, value (lower, upper, tolerance, measured speed, contains)
  front_trace.csv    t, x_front (when the profile comes from a fresh run)
  epsilon.csv        epsilon, speed, converged, gap (with --epsilons)
"""


def cmd_bounds(args, client) -> int:
    fields = dict(_config_fields(args), model=args.model or "reduced6",
                  measured_speed=args.measured, jobs=args.jobs)
    if args.profile:
        snaps = read_snapshots(args.profile)
        k = args.snapshot if args.snapshot is not None else len(snaps.times) - 1
        fields["profile"] = ProfileIn(x=snaps.x.tolist(), species=snaps.species,
                                      values=snaps.values[k].tolist())
        if len(snaps.times) > 1:
            fields["snapshot_interval"] = float(snaps.times[1] - snaps.times[0])
        if args.measured is None:
            summary = Path(args.profile).with_name("speed_summary.csv")
            if summary.exists():
                fields["measured_speed"] = _last_measured(summary.parent)
    if args.epsilons:
        fields["epsilons"] = _floats(args.epsilons)
    r = client.call("bounds", BoundsRequest(**fields))
    out = Path(args.out)
    rows = [("lower", r.lower), ("upper", r.upper), ("tolerance", r.tolerance),
            ("measured_speed", r.measured_speed), ("contains", r.contains)]
    _write(out, "bounds.csv", ["quantity", "value"], rows, r.manifest)
    if r.front_trace:
        _write(out, "front_trace.csv", ["t", "x_front"], r.front_trace, r.manifest)
    print(f"minimax bracket [{_fmt(r.lower)}, {_fmt(r.upper)}] +/- {_fmt(r.tolerance)}")
    status = EXIT_OK
    if r.measured_speed is not None:
        print(f"measured speed {_fmt(r.measured_speed)} inside bracket: {r.contains}")
        if not r.contains:
            status = EXIT_CHECK
    if r.epsilon_rows:
        _write(out, "epsilon.csv", ["epsilon", "speed", "converged", "gap"],
               [[e.epsilon, e.speed, e.converged, e.gap] for e in r.epsilon_rows], r.manifest)
        print(f"one-equation speed {_fmt(r.c_one_eq)}")
        for e in r.epsilon_rows:
            print(f"  eps={e.epsilon:<8.4g} c={_fmt(e.speed)} gap={_fmt(e.gap)}")
        print(f"gap <= K eps with K = {_fmt(r.K_envelope)} (fit {_fmt(r.K_fit)}), "
              f"monotone: {r.gaps_monotone}")
        if not r.gaps_monotone:
            status = EXIT_CHECK
    return status


def cmd_calibrate(args, client) -> int:
    r = client.call("calibrate", CalibrateRequest(**_config_fields(args), target=args.target))
    for k, c in r.evaluations:
        print(f"  k2_bar={k:<12.6g} speed={c:.6g}")
    print(f"k2_bar = {r.k2_bar:.6g} gives {r.speed:.6g} mm/min (target {r.target:g})")
    print(f"set `k2_bar = {r.k2_bar:.4g}` in the [rates] section of your config")
    _write(Path(args.out), "calibration.csv", ["k2_bar", "speed"], r.evaluations, r.manifest)
    return EXIT_OK


def cmd_serve(args, client) -> int:
    import uvicorn
    uvicorn.run("coagwave.service:app", host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI config (default: shipped defaults)")
    common.add_argument("--model", metavar="NAME",
                        help="reduced6, two_eq, one_eq, full14 or scalar[:n=..,b=..,sigma=..]")
    common.add_argument("--out", metavar="DIR", default="out", help="output directory")
    common.add_argument("--param", metavar="KEY=VALUE", action="append",
                        help="override a config value (repeatable; section.KEY also accepted)")
    common.add_argument("--jobs", metavar="N", type=int, default=1, help="parallel workers")

    ap = argparse.ArgumentParser(prog="coagwave", description=__doc__.splitlines()[0])
    ap.add_argument("--server", metavar="URL", help="send requests to a running service")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("simulate", parents=[common], epilog=SIMULATE_EPILOG, formatter_class=fmt,
                       help="run one simulation and measure the front speed")
    p.add_argument("--reaction", choices=("on", "off"), default="on")
    p.add_argument("--amplitude", type=float, help="initial activation level (default: upper state)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], epilog=SWEEP_EPILOG, formatter_class=fmt,
                       help="speed as a function of one parameter")
    p.add_argument("--parameter", required=True)
    p.add_argument("--values", help="comma separated, strictly increasing")
    p.add_argument("--range", nargs=3, metavar=("LO", "HI", "COUNT"))
    p.add_argument("--spacing", choices=("linear", "log"), default="linear")
    p.add_argument("--models", help="comma separated models and estimators")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("equilibria", parents=[common], epilog=EQUILIBRIA_EPILOG,
                       formatter_class=fmt, help="homogeneous equilibria and their stability")
    p.add_argument("--trials", type=int, help="perturbed rate sets for the Theorem 1 check")
    p.add_argument("--csv", action="store_true")
    p.set_defaults(func=cmd_equilibria)

    p = sub.add_parser("speed", parents=[common], epilog=SPEED_EPILOG, formatter_class=fmt,
                       help="closed-form speed estimates")
    p.add_argument("--scalar", action="store_true", help="use the [scalar] equation")
    p.add_argument("--measured", type=float, help="numerical speed to compare with")
    p.add_argument("--printed", action="store_true", help="also the formulas as typeset")
    p.set_defaults(func=cmd_speed)

    p = sub.add_parser("bounds", parents=[common], epilog=BOUNDS_EPILOG, formatter_class=fmt,
                       help="minimax speed bracket and the epsilon ladder")
    p.add_argument("--profile", metavar="CSV", help="snapshots.csv from a simulate run")
    p.add_argument("--snapshot", type=int, help="snapshot index in --profile (default last)")
    p.add_argument("--measured", type=float)
    p.add_argument("--epsilons", help="comma separated, e.g. 1,0.5,0.25,0.125,0.0625")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("calibrate", parents=[common],
                       help="fit k2_bar to a target reduced-model speed")
    p.add_argument("--target", type=float, default=0.05, help="mm/min")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    client = HttpClient(args.server) if args.server else LocalClient()
    try:
        return args.func(args, client)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
