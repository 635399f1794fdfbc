"""Request and response models of the HTTP service."""
from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel as _BaseModel, ConfigDict, Field


class BaseModel(_BaseModel):
    # speeds of non-igniting runs are NaN; keep them as JSON NaN, not null
    model_config = ConfigDict(ser_json_inf_nan="constants")


class ConfigInput(BaseModel):
    """Config file text (the shipped default when omitted) plus overrides."""

    config_text: Optional[str] = None
    overrides: list[str] = Field(default_factory=list, description="KEY=VALUE or section.KEY=VALUE")


class ManifestOut(BaseModel):
    config_hash: str
    command: str
    version: str
    timestamp: str
    seed: Optional[int] = None
    tolerances: dict = Field(default_factory=dict)


class MeasurementOut(BaseModel):
    speed: float
    converged: bool
    window: tuple[float, float]
    residual: float
    reason: str = ""
    front_trace: list[tuple[float, float]] = Field(default_factory=list)


class DriftOut(BaseModel):
    drift: float
    monotone: bool
    transient: bool
    n_profiles: int


class BracketOut(BaseModel):
    lower: float
    upper: float
    tolerance: float
    contains: Optional[bool] = None


class SimulateRequest(ConfigInput):
    model: str = "reduced6"
    reaction: bool = True
    amplitude: Optional[float] = None
    include_snapshots: bool = True


class SimulateResponse(BaseModel):
    manifest: ManifestOut
    model: str
    species: list[str]
    x: list[float]
    times: list[float]
    snapshots: list[list[list[float]]] = Field(default_factory=list)
    mass: list[float]
    clip_events: int
    stopped_at_boundary: bool
    measurement: Optional[MeasurementOut] = None
    drift: Optional[DriftOut] = None
    bracket: Optional[BracketOut] = None
    runtime_s: float


class SweepRequest(ConfigInput):
    parameter: str
    values: Optional[list[float]] = None
    lo: Optional[float] = None
    hi: Optional[float] = None
    count: Optional[int] = None
    spacing: Literal["linear", "log"] = "linear"
    models: list[str] = Field(default_factory=lambda: ["reduced6"])
    jobs: int = 1


class SweepRowOut(BaseModel):
    value: float
    model: str
    speed: float
    converged: bool
    note: str = ""


class SweepResponse(BaseModel):
    manifest: ManifestOut
    parameter: str
    rows: list[SweepRowOut]


class EquilibriaRequest(ConfigInput):
    trials: Optional[int] = None


class RootOut(BaseModel):
    T: float
    P_prime: float
    principal_eigenvalue: float
    stable: bool
    degenerate: bool
    residual: float


class EquilibriaResponse(BaseModel):
    manifest: ManifestOut
    classification: str
    roots: list[RootOut]
    case_count: Optional[int] = None
    coefficients: tuple[float, float, float, float]
    theorem1_passed: bool
    theorem1_checked: int
    theorem1_trials: int
    summary: str


class SpeedRequest(ConfigInput):
    mode: Literal["coag", "scalar"] = "coag"
    measured_speed: Optional[float] = None


class EstimateOut(BaseModel):
    method: str
    value: float
    workpad: dict


class SpeedResponse(BaseModel):
    manifest: ManifestOut
    mode: str
    c1: float
    c2: float
    narrow: EstimateOut
    piecewise: EstimateOut
    printed_c1: Optional[float] = None
    printed_c2: Optional[float] = None
    b_dimensionless: Optional[float] = None
    D_tilde: Optional[float] = None
    measured_speed: Optional[float] = None
    ratio_c1: Optional[float] = None
    ratio_c2: Optional[float] = None


class ProfileIn(BaseModel):
    """A stored profile: grid points and one row per species."""

    x: list[float]
    species: list[str]
    values: list[list[float]]


class BoundsRequest(ConfigInput):
    model: str = "reduced6"
    profile: Optional[ProfileIn] = None
    measured_speed: Optional[float] = None
    snapshot_interval: Optional[float] = None
    epsilons: Optional[list[float]] = None
    jobs: int = 1


class EpsilonRowOut(BaseModel):
    epsilon: float
    speed: float
    converged: bool
    gap: float


class BoundsResponse(BaseModel):
    manifest: ManifestOut
    model: str
    lower: float
    upper: float
    inf_S: list[float]
    sup_S: list[float]
    tolerance: float
    measured_speed: Optional[float] = None
    contains: Optional[bool] = None
    front_trace: list[tuple[float, float]] = Field(default_factory=list)
    epsilon_rows: list[EpsilonRowOut] = Field(default_factory=list)
    c_one_eq: Optional[float] = None
    K_fit: Optional[float] = None
    K_envelope: Optional[float] = None
    gaps_monotone: Optional[bool] = None


class CalibrateRequest(ConfigInput):
    target: float = 0.05
    lo: float = 5.0
    hi: float = 40.0


class CalibrateResponse(BaseModel):
    manifest: ManifestOut
    k2_bar: float
    speed: float
    target: float
    evaluations: list[tuple[float, float]]
