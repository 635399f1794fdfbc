"""INI configuration: parameter sets, domain and numerics.

Sections and keys are fixed; anything unknown is rejected so that a typo
never silently falls back to a default.
"""
from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError
from .models import CoagParams, DEFAULT_V0, RATE_FIELDS
from .rdsolver import SCHEMES, Grid1D
from .models import ModelKind
from .sweeps import FineGrid, ScalarSettings, SweepContext

RATE_KEYS = RATE_FIELDS + ("K2m", "K2m_bar")
FULL_KEYS = tuple(f"V0_{s}" for s in DEFAULT_V0) + (
    "q8", "q9", "q10", "r11", "r5", "r8", "r9", "r10", "r10_bar", "r2", "r2_bar")
DOMAIN_KEYS = ("D", "T0", "L", "N", "t_end", "snapshot_every", "scheme", "threshold")
SCALAR_KEYS = ("n", "b", "sigma", "D", "L", "N", "t_end", "snapshot_every")
ACTIVITY_KEYS = ("calibration",)
NUMERICS_KEYS = ("window_fraction", "theorem1_trials", "seed")
FINE_KEYS = ("models", "L", "N", "t_end", "snapshot_every")

SECTIONS = {
    "rates": RATE_KEYS,
    "full_model": FULL_KEYS,
    "domain": DOMAIN_KEYS,
    "scalar": SCALAR_KEYS,
    "activity": ACTIVITY_KEYS,
    "numerics": NUMERICS_KEYS,
    "fine_grid": FINE_KEYS,
}
INT_KEYS = {("domain", "N"), ("scalar", "N"), ("scalar", "n"), ("fine_grid", "N"),
            ("numerics", "theorem1_trials"), ("numerics", "seed")}
STR_KEYS = {("domain", "scheme"), ("fine_grid", "models")}
OPTIONAL = {("rates", "k2_bar"), ("domain", "threshold")} | {("full_model", k) for k in FULL_KEYS}


@dataclass
class RunConfig:
    params: CoagParams
    grid: Grid1D = field(default_factory=Grid1D)
    t_end: float = 40.0
    snapshot_every: float = 1.0
    scheme: str = "linearized"
    threshold: float | None = None
    scalar: ScalarSettings = field(default_factory=ScalarSettings)
    fine: FineGrid = field(default_factory=FineGrid)
    activity_calibration: float = 100.0
    window_fraction: float = 0.5
    theorem1_trials: int = 100
    seed: int = 0
    values: dict = field(default_factory=dict)  # resolved (section, key) -> value

    @property
    def hash(self) -> str:
        return config_hash(self.values)

    def sweep_context(self) -> SweepContext:
        return SweepContext(params=self.params, grid=self.grid, t_end=self.t_end,
                            snapshot_every=self.snapshot_every, scheme=self.scheme,
                            scalar=self.scalar, activity_calibration=self.activity_calibration,
                            fine=self.fine)

    def run_settings(self, kind: ModelKind):
        return self.sweep_context().run_settings(kind)


def default_config_text() -> str:
    return resources.files("coagwave").joinpath("data/default.ini").read_text()


def config_hash(values: dict) -> str:
    canon = "\n".join(f"{s}.{k}={values[(s, k)]!r}" for s, k in sorted(values))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case sensitive (K2m vs k2m)
    return cp


def _convert(section: str, key: str, raw: str):
    raw = raw.strip()
    if (section, key) in OPTIONAL and raw.lower() in ("", "none"):
        return None
    if (section, key) in STR_KEYS:
        return raw
    try:
        if (section, key) in INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as a number") from None


def parse_override(text: str) -> tuple[str | None, str, str]:
    """``KEY=VALUE`` or ``section.KEY=VALUE``."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like KEY=VALUE")
    key, value = text.split("=", 1)
    key = key.strip()
    section = None
    if "." in key:
        section, key = key.split(".", 1)
    return section, key, value.strip()


def _locate(section: str | None, key: str) -> str:
    if section is not None:
        if section not in SECTIONS or key not in SECTIONS[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        return section
    # bare keys: coagulation sections win over [scalar] for D, L, N and friends
    for sec in ("rates", "full_model", "domain", "activity", "numerics", "scalar"):
        if key in SECTIONS[sec]:
            return sec
    raise ConfigError(f"unknown config key {key!r}")


def load_config(text: str | None = None, path: str | Path | None = None,
                overrides=()) -> RunConfig:
    """Parse config text (or a file, or the shipped default) plus overrides."""
    if text is None:
        text = Path(path).read_text() if path is not None else default_config_text()
    cp = _parser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    values: dict = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in cp.items(section):
            if key not in SECTIONS[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[(section, key)] = _convert(section, key, raw)
    for item in overrides:
        sec, key, raw = parse_override(item) if isinstance(item, str) else item
        sec = _locate(sec, key)
        values[(sec, key)] = _convert(sec, key, raw)
    return build_config(values)


def build_config(values: dict) -> RunConfig:
    get = lambda s, k, d=None: values.get((s, k), d)
    rates = {k: v for (s, k), v in values.items() if s == "rates"}
    full = {k: v for (s, k), v in values.items() if s == "full_model" and not k.startswith("V0_")}
    v0 = {k[3:]: v for (s, k), v in values.items() if s == "full_model" and k.startswith("V0_")
          and v is not None}
    dom = {k: get("domain", k) for k in ("D", "T0") if ("domain", k) in values}
    try:
        params = CoagParams(**rates, **full, **dom, V0=v0)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameter set: {exc}") from None
    scheme = get("domain", "scheme", "linearized")
    if scheme not in SCHEMES:
        raise ConfigError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    sc = {k: v for (s, k), v in values.items() if s == "scalar"}
    fg = {k: v for (s, k), v in values.items() if s == "fine_grid"}
    if "models" in fg:
        fg["models"] = tuple(m.strip() for m in fg["models"].split(",") if m.strip())
    try:
        grid = Grid1D(get("domain", "L", 5.0), get("domain", "N", 1001))
        scalar = ScalarSettings(**sc)
        scalar.grid  # validate
        fine = FineGrid(**fg)
        fine.grid
        for m in fine.models:
            ModelKind.parse(m)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    cfg = RunConfig(
        params=params, grid=grid, t_end=get("domain", "t_end", 40.0),
        snapshot_every=get("domain", "snapshot_every", 1.0), scheme=scheme,
        threshold=get("domain", "threshold"), scalar=scalar, fine=fine,
        activity_calibration=get("activity", "calibration", 100.0),
        window_fraction=get("numerics", "window_fraction", 0.5),
        theorem1_trials=get("numerics", "theorem1_trials", 100),
        seed=get("numerics", "seed", 0), values=dict(values))
    if not cfg.t_end > 0 or not cfg.snapshot_every > 0:
        raise ConfigError("t_end and snapshot_every must be positive")
    return cfg
