"""Reaction terms of the coagulation model hierarchy.

Four fidelities are provided, all written as pure reaction-rate evaluators
(no diffusion): the 14-species intrinsic-pathway system, the 6-species reduced
system, the two-equation (T, U11) system and the one-equation thrombin model.
A dimensionless scalar model ``b u^n (1 - u) - sigma u`` is included for the
analytic speed estimates.

State arrays have the species on axis 0, so the same functions evaluate a
single state (shape ``(m,)``) or a whole grid (shape ``(m, N)``).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import StateError

FULL14_SPECIES = ("U11", "V11", "T", "P", "C1", "U5", "V5", "U10", "V10",
                  "C2", "U8", "V8", "U9", "V9")
REDUCED6_SPECIES = ("T", "U5", "U8", "U9", "U10", "U11")
TWO_EQ_SPECIES = ("T", "U11")
ONE_EQ_SPECIES = ("T",)
SCALAR_SPECIES = ("u",)

# Placeholder plasma levels of the inactive factors (nM); no measured values are shipped.
DEFAULT_V0 = {"2": 1400.0, "5": 20.0, "8": 0.7, "9": 90.0, "10": 170.0, "11": 30.0}

_STRICTLY_POSITIVE = ("D", "T0", "K2m", "K2m_bar")

RATE_FIELDS = ("k11", "h11", "k10", "k10_bar", "h10", "k9", "h9", "k89", "h89",
               "k8", "h8", "k5", "h5", "k510", "h510", "k2", "h2", "k2_bar")


@dataclass(frozen=True)
class CoagParams:
    """Kinetic constants, diffusion and prothrombin level.

    Units: first-order rates in 1/min, complex formation rates
    in 1/(nM min), concentrations in nM, ``D`` in mm^2/min.  ``k2_bar`` has no
    tabulated value and must be supplied (the shipped config calibrates it).
    Full-model bimolecular rates default to ``k_i / V_i^0`` so that the
    14-species system reduces to the 6-species one.
    """

    k11: float = 0.000011
    h11: float = 0.5
    k10: float = 0.00033
    k10_bar: float = 500.0
    h10: float = 1.0
    k9: float = 20.0
    h9: float = 0.2
    k89: float = 100.0
    h89: float = 100.0
    k8: float = 0.00001
    h8: float = 0.31
    k5: float = 0.17
    h5: float = 0.31
    k510: float = 100.0
    h510: float = 100.0
    k2: float = 2.45
    h2: float = 2.3
    k2_bar: float | None = None
    K2m: float = 58.0
    K2m_bar: float = 210.0
    D: float = 0.0037
    T0: float = 1400.0
    # full 14-species model only
    V0: dict = field(default_factory=lambda: dict(DEFAULT_V0))
    q8: float | None = None
    q9: float | None = None
    q10: float | None = None
    r11: float | None = None
    r5: float | None = None
    r8: float | None = None
    r9: float | None = None
    r10: float | None = None
    r10_bar: float | None = None
    r2: float | None = None
    r2_bar: float | None = None

    def __post_init__(self):
        v0 = dict(DEFAULT_V0)
        v0.update({str(k): float(v) for k, v in self.V0.items()})
        object.__setattr__(self, "V0", v0)
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "V0":
                bad = [k for k, v in value.items() if not v > 0]
                if bad:
                    raise ValueError(f"V0 levels must be positive: {bad}")
            elif value is None:
                continue
            elif f.name in _STRICTLY_POSITIVE and not value > 0:
                raise ValueError(f"parameter {f.name} must be positive, got {value}")
            elif not value >= 0:
                raise ValueError(f"parameter {f.name} must be non-negative, got {value}")

    def full_rates(self) -> dict:
        """Full-model rates, filling unset ones from the reduction relations."""
        v0 = self.V0
        derived = {
            "q8": self.h8, "q9": self.h9, "q10": self.h10,
            "r11": self.k11 / v0["11"], "r5": self.k5 / v0["5"],
            "r8": self.k8 / v0["8"], "r9": self.k9 / v0["9"],
            "r10": self.k10 / v0["10"], "r10_bar": self.k10_bar / v0["10"],
            "r2": self.k2 * self.K2m / self.T0,
            "r2_bar": self.require_k2_bar() * self.K2m_bar / self.T0,
        }
        return {k: v if getattr(self, k) is None else getattr(self, k)
                for k, v in derived.items()}

    def replace(self, **changes) -> "CoagParams":
        return dataclasses.replace(self, **changes)

    def require_k2_bar(self) -> float:
        if self.k2_bar is None:
            raise ValueError(
                "k2_bar is not set and has no tabulated value. Run "
                "`coagwave calibrate` to fit it to the 0.05 mm/min reference "
                "speed, or load the shipped default config.")
        return self.k2_bar

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def reduction_mismatches(params: CoagParams, rtol: float = 1e-9) -> list[str]:
    """Names of first-order rates violating ``k_i = r_i V_i^0``."""
    v0 = params.V0
    r = params.full_rates()
    pairs = {
        "k11": r["r11"] * v0["11"], "k5": r["r5"] * v0["5"],
        "k8": r["r8"] * v0["8"], "k9": r["r9"] * v0["9"],
        "k10": r["r10"] * v0["10"], "k10_bar": r["r10_bar"] * v0["10"],
    }
    return [name for name, value in pairs.items()
            if not np.isclose(getattr(params, name), value, rtol=rtol, atol=0.0)]


@dataclass(frozen=True)
class ModelKind:
    name: str
    n: int | None = None
    b: float | None = None
    sigma: float | None = None

    def __post_init__(self):
        if self.name not in _SPECIES:
            raise ValueError(f"unknown model kind {self.name!r}")
        if self.name == "scalar":
            if self.n is None or int(self.n) != self.n or self.n < 2:
                raise ValueError("scalar model needs integer n >= 2")
            if self.b is None or not self.b > 0:
                raise ValueError("scalar model needs b > 0")
            if self.sigma is None or self.sigma < 0:
                raise ValueError("scalar model needs sigma >= 0")

    @classmethod
    def scalar(cls, n: int, b: float, sigma: float) -> "ModelKind":
        return cls("scalar", int(n), float(b), float(sigma))

    @classmethod
    def parse(cls, text: str, defaults: dict | None = None) -> "ModelKind":
        """Parse ``reduced6`` or ``scalar:n=3,b=10,sigma=0.01``.

        Scalar parameters missing from the text are taken from ``defaults``.
        """
        name, _, rest = text.strip().partition(":")
        name = _ALIASES.get(name.lower(), name.lower())
        if name != "scalar":
            if rest:
                raise ValueError(f"model {name!r} takes no parameters")
            return cls(name)
        kw = dict(defaults or {})
        for item in filter(None, rest.split(",")):
            key, eq, value = item.partition("=")
            if not eq or key.strip() not in ("n", "b", "sigma"):
                raise ValueError(f"bad scalar model parameter {item!r}")
            kw[key.strip()] = value
        missing = [k for k in ("n", "b", "sigma") if k not in kw]
        if missing:
            raise ValueError(f"scalar model needs {', '.join(missing)}")
        return cls.scalar(int(kw["n"]), float(kw["b"]), float(kw["sigma"]))

    @property
    def species(self) -> tuple[str, ...]:
        return _SPECIES[self.name]

    @property
    def size(self) -> int:
        return len(self.species)

    @property
    def is_coagulation(self) -> bool:
        return self.name != "scalar"

    def index(self, species: str) -> int:
        return self.species.index(species)

    @property
    def front_species(self) -> str:
        return "u" if self.name == "scalar" else "T"

    def __str__(self):
        if self.name == "scalar":
            return f"scalar:n={self.n},b={self.b:g},sigma={self.sigma:g}"
        return self.name


_SPECIES = {
    "full14": FULL14_SPECIES,
    "reduced6": REDUCED6_SPECIES,
    "two_eq": TWO_EQ_SPECIES,
    "one_eq": ONE_EQ_SPECIES,
    "scalar": SCALAR_SPECIES,
}
_ALIASES = {"full": "full14", "reduced": "reduced6", "two": "two_eq",
            "twoeq": "two_eq", "one": "one_eq", "oneeq": "one_eq"}

FULL14 = ModelKind("full14")
REDUCED6 = ModelKind("reduced6")
TWO_EQ = ModelKind("two_eq")
ONE_EQ = ModelKind("one_eq")


def _check_state(kind: ModelKind, state, allow_negative: bool):
    u = np.asarray(state, dtype=float)
    if u.ndim == 0 or u.shape[0] != kind.size:
        raise StateError(
            f"{kind} expects {kind.size} components {kind.species}, got shape {u.shape}")
    if not allow_negative and np.any(u < 0):
        bad = sorted({kind.species[i] for i in np.argwhere(u < 0)[:, 0]})
        raise StateError(f"negative concentration in {bad}")
    return u


class _FullRates:
    """Attribute view of a parameter set with resolved full-model rates."""

    def __init__(self, params: CoagParams):
        self.__dict__.update(params.as_dict())
        self.__dict__.update(params.full_rates())


def _two_eq_gain(T, p: CoagParams):
    """Thrombin gain per unit U11 once U5, U8, U9, U10 are slaved to T."""
    E = p.k10_bar * p.k89 * p.k8 / (p.h89 * p.h8)
    B = p.k2_bar * p.k510 * p.k5 / (p.h510 * p.h5)
    pre = p.k9 / (p.h9 * p.h10)
    g = pre * (p.k10 + E * T) * (p.k2 + B * T)
    dg = pre * (E * (p.k2 + B * T) + B * (p.k10 + E * T))
    return g, dg


def production_loss(kind: ModelKind, u, params: CoagParams | None):
    """Split the reaction term as ``F(u) = prod - loss * u``.

    Both parts are nonnegative on nonnegative states with ``T <= T0``; the
    time steppers treat the loss implicitly.
    """
    if kind.name == "scalar":
        un = u[0] ** kind.n
        return (kind.b * un)[None], (kind.b * un + kind.sigma)[None]
    p = params
    if kind.name == "reduced6":
        T, U5, U8, U9, U10, U11 = u
        c1 = p.require_k2_bar() * p.k510 / p.h510
        c2 = p.k10_bar * p.k89 / p.h89
        R = p.k2 * U10 + c1 * U10 * U5
        prod = np.stack([R, p.k5 * T, p.k8 * T, p.k9 * U11,
                         p.k10 * U9 + c2 * U9 * U8, p.k11 * T])
        one = np.ones_like(T)
        loss = np.stack([R / p.T0 + p.h2, p.h5 * one, p.h8 * one, p.h9 * one,
                         p.h10 * one, p.h11 * one])
        return prod, loss
    if kind.name == "two_eq":
        p.require_k2_bar()
        T, U11 = u
        g, _ = _two_eq_gain(T, p)
        R = U11 * g
        return (np.stack([R, p.k11 * T]),
                np.stack([R / p.T0 + p.h2, p.h11 * np.ones_like(T)]))
    if kind.name == "one_eq":
        p.require_k2_bar()
        T = u[0]
        g, _ = _two_eq_gain(T, p)
        R = (p.k11 / p.h11) * T * g
        return R[None], (R / p.T0 + p.h2)[None]
    if kind.name == "full14":
        p = _FullRates(params)
        (U11, V11, T, P, C1, U5, V5, U10, V10, C2, U8, V8, U9, V9) = u
        m = p.r2 * U10 / (P + p.K2m) + p.r2_bar * C1 / (P + p.K2m_bar)
        zero = np.zeros_like(T)
        one = np.ones_like(T)
        prod = np.stack([
            p.r11 * V11 * T, zero, m * P, zero, p.k510 * U5 * U10,
            p.r5 * V5 * T, zero, p.r10 * V10 * U9 + p.r10_bar * V10 * C2, zero,
            p.k89 * U8 * U9, p.r8 * V8 * T, zero, p.r9 * V9 * U11, zero])
        loss = np.stack([
            p.h11 * one, p.r11 * T, p.h2 * one, m, p.h510 * one,
            p.h5 * one, p.r5 * T, p.q10 * one, p.r10 * U9 + p.r10_bar * C2,
            p.h89 * one, p.q8 * one, p.r8 * T, p.q9 * one, p.r9 * U11])
        return prod, loss
    raise ValueError(f"unknown model kind {kind}")


def eval_rhs(kind: ModelKind, state, params: CoagParams | None = None,
             *, allow_negative: bool = False) -> np.ndarray:
    """Reaction terms F(u), without diffusion."""
    u = _check_state(kind, state, allow_negative)
    prod, loss = production_loss(kind, u, params)
    return prod - loss * u


def eval_jacobian(kind: ModelKind, state, params: CoagParams | None = None,
                  *, allow_negative: bool = False) -> np.ndarray:
    """Analytic Jacobian dF_i/du_j at a single state."""
    u = _check_state(kind, state, allow_negative)
    if u.ndim != 1:
        raise StateError("eval_jacobian takes a single state vector")
    p = params
    J = np.zeros((kind.size, kind.size))
    if kind.name == "scalar":
        n, b, s = kind.n, kind.b, kind.sigma
        w = u[0]
        J[0, 0] = b * n * w ** (n - 1) - b * (n + 1) * w ** n - s
        return J
    if kind.name == "reduced6":
        T, U5, U8, U9, U10, U11 = u
        c1 = p.require_k2_bar() * p.k510 / p.h510
        c2 = p.k10_bar * p.k89 / p.h89
        s = 1.0 - T / p.T0
        R = p.k2 * U10 + c1 * U10 * U5
        J[0, 0] = -R / p.T0 - p.h2
        J[0, 1] = c1 * U10 * s
        J[0, 4] = (p.k2 + c1 * U5) * s
        J[1, 0], J[1, 1] = p.k5, -p.h5
        J[2, 0], J[2, 2] = p.k8, -p.h8
        J[3, 5], J[3, 3] = p.k9, -p.h9
        J[4, 3] = p.k10 + c2 * U8
        J[4, 2] = c2 * U9
        J[4, 4] = -p.h10
        J[5, 0], J[5, 5] = p.k11, -p.h11
        return J
    if kind.name == "two_eq":
        p.require_k2_bar()
        T, U11 = u
        g, dg = _two_eq_gain(T, p)
        s = 1.0 - T / p.T0
        J[0, 0] = U11 * (dg * s - g / p.T0) - p.h2
        J[0, 1] = g * s
        J[1, 0], J[1, 1] = p.k11, -p.h11
        return J
    if kind.name == "one_eq":
        p.require_k2_bar()
        T = u[0]
        g, dg = _two_eq_gain(T, p)
        s = 1.0 - T / p.T0
        K = p.k11 / p.h11
        J[0, 0] = K * (g * s + T * dg * s - T * g / p.T0) - p.h2
        return J
    if kind.name == "full14":
        p = _FullRates(params)
        (U11, V11, T, P, C1, U5, V5, U10, V10, C2, U8, V8, U9, V9) = u
        a1, a2 = P + p.K2m, P + p.K2m_bar
        J[0, 0], J[0, 1], J[0, 2] = -p.h11, p.r11 * T, p.r11 * V11
        J[1, 1], J[1, 2] = -p.r11 * T, -p.r11 * V11
        dP = p.r2 * U10 * p.K2m / a1 ** 2 + p.r2_bar * C1 * p.K2m_bar / a2 ** 2
        J[2, 7], J[2, 4], J[2, 3], J[2, 2] = p.r2 * P / a1, p.r2_bar * P / a2, dP, -p.h2
        J[3, 7], J[3, 4], J[3, 3] = -p.r2 * P / a1, -p.r2_bar * P / a2, -dP
        J[4, 5], J[4, 7], J[4, 4] = p.k510 * U10, p.k510 * U5, -p.h510
        J[5, 6], J[5, 2], J[5, 5] = p.r5 * T, p.r5 * V5, -p.h5
        J[6, 6], J[6, 2] = -p.r5 * T, -p.r5 * V5
        act10 = p.r10 * U9 + p.r10_bar * C2
        J[7, 8], J[7, 12], J[7, 9], J[7, 7] = act10, p.r10 * V10, p.r10_bar * V10, -p.q10
        J[8, 8], J[8, 12], J[8, 9] = -act10, -p.r10 * V10, -p.r10_bar * V10
        J[9, 10], J[9, 12], J[9, 9] = p.k89 * U9, p.k89 * U8, -p.h89
        J[10, 11], J[10, 2], J[10, 10] = p.r8 * T, p.r8 * V8, -p.q8
        J[11, 11], J[11, 2] = -p.r8 * T, -p.r8 * V8
        J[12, 13], J[12, 0], J[12, 12] = p.r9 * U11, p.r9 * V9, -p.q9
        J[13, 13], J[13, 0] = -p.r9 * U11, -p.r9 * V9
        return J
    raise ValueError(f"unknown model kind {kind}")


@dataclass(frozen=True)
class DimensionlessParams:
    M1: float
    M2: float
    M3: float
    b: float
    D_tilde: float
    time_unit: float
    conc_unit: float
    include_h11: bool = False


def nondimensionalize(params: CoagParams, *, include_h11: bool = False) -> DimensionlessParams:
    """Dimensionless groups of the one-equation model.

    With ``include_h11=False`` the first group is the printed
    ``k2 k9 k10 k11 / (h2 h9 h10)``.  The one-equation prefactor actually
    carries ``1/h11`` as well; ``include_h11=True`` gives the groups for which
    ``F_one_eq(T) = h2 T0 [M1 u (1 + M2 u)(1 + M3 u)(1 - u) - u]`` holds exactly.
    """
    p = params
    M1 = p.k2 * p.k9 * p.k10 * p.k11 / (p.h2 * p.h9 * p.h10)
    if include_h11:
        M1 /= p.h11
    M2 = p.k8 * p.k89 * p.k10_bar / (p.k10 * p.h8 * p.h89) * p.T0
    M3 = p.require_k2_bar() * p.k5 * p.k510 / (p.k2 * p.h5 * p.h510) * p.T0
    return DimensionlessParams(M1=M1, M2=M2, M3=M3, b=M1 * M2 * M3,
                               D_tilde=p.D / p.h2, time_unit=1.0 / p.h2,
                               conc_unit=p.T0, include_h11=include_h11)


def redimensionalize_speed(c_tilde: float, params: CoagParams) -> float:
    """Dimensionless speed (space unit kept, time unit 1/h2) to mm/min."""
    return c_tilde * params.h2


def dimensionless_speed(c: float, params: CoagParams) -> float:
    return c / params.h2


def admissible_upper(kind: ModelKind, params: CoagParams) -> np.ndarray:
    """Upper corner of the invariant box ``0 <= T <= T0`` for the kinetics."""
    if kind.name == "scalar":
        return np.array([1.0])
    p = params
    T = p.T0
    U5, U8, U11 = p.k5 / p.h5 * T, p.k8 / p.h8 * T, p.k11 / p.h11 * T
    U9 = p.k9 / p.h9 * U11
    U10 = (p.k10 * U9 + p.k10_bar * p.k89 / p.h89 * U9 * U8) / p.h10
    if kind.name == "reduced6":
        return np.array([T, U5, U8, U9, U10, U11])
    if kind.name == "two_eq":
        return np.array([T, U11])
    if kind.name == "one_eq":
        return np.array([T])
    raise ValueError("no admissible box defined for the full model")


def in_admissible_box(kind: ModelKind, state, params: CoagParams, tol: float = 1e-12) -> bool:
    u = np.asarray(state, dtype=float)
    upper = admissible_upper(kind, params)
    return bool(np.all(u >= -tol) and np.all(u <= upper * (1 + tol)))


@dataclass
class MonotoneReport:
    passed: bool
    min_offdiag: float
    location: tuple | None
    violations: list = field(default_factory=list)
    out_of_box: list = field(default_factory=list)
    n_samples: int = 0


def check_monotone(kind: ModelKind, params: CoagParams | None, samples,
                   tol: float = 1e-12) -> MonotoneReport:
    """Check ``dF_i/du_j >= -tol`` for i != j at every sample.

    Violations are reported, not raised.  Samples outside the admissible box
    are listed in ``out_of_box``; a violation there does not contradict the
    monotonicity claim, which is local to physical states.
    """
    samples = [np.asarray(s, dtype=float) for s in samples]
    min_val, where = np.inf, None
    violations, out_of_box = [], []
    for k, s in enumerate(samples):
        inside = kind.size == 1 or in_admissible_box(kind, s, params)
        if not inside:
            out_of_box.append(k)
        J = eval_jacobian(kind, s, params, allow_negative=True)
        off = J.copy()
        np.fill_diagonal(off, np.inf)
        i, j = np.unravel_index(np.argmin(off), off.shape)
        if off[i, j] < min_val:
            min_val, where = float(off[i, j]), (kind.species[i], kind.species[j], k)
        for i, j in np.argwhere(off < -tol):
            violations.append((kind.species[i], kind.species[j], k, float(J[i, j])))
    passed = not any(v[2] not in out_of_box for v in violations)
    return MonotoneReport(passed=passed, min_offdiag=min_val, location=where,
                          violations=violations, out_of_box=out_of_box,
                          n_samples=len(samples))


def random_admissible_states(kind: ModelKind, params: CoagParams, count: int,
                             rng: np.random.Generator) -> np.ndarray:
    upper = admissible_upper(kind, params)
    return rng.uniform(0.0, 1.0, size=(count, upper.size)) * upper


def validate_state(kind: ModelKind, state, params: CoagParams | None,
                   tol: float = 1e-9) -> list[str]:
    """List invariant violations of a state (empty when valid)."""
    u = np.asarray(state, dtype=float)
    problems = []
    if u.shape[0] != kind.size:
        return [f"expected {kind.size} components, got {u.shape[0]}"]
    if np.any(u < -tol):
        problems.append("negative concentration")
    if kind.name == "full14":
        p = params
        idx = {s: i for i, s in enumerate(kind.species)}
        if np.any(u[idx["T"]] + u[idx["P"]] > p.T0 * (1 + tol)):
            problems.append("T + P exceeds T0")
        for f in ("5", "8", "9", "10", "11"):
            if np.any(u[idx["U" + f]] + u[idx["V" + f]] > p.V0[f] * (1 + tol)):
                problems.append(f"U{f} + V{f} exceeds V0")
    elif kind.is_coagulation and np.any(u[0] > params.T0 * (1 + tol)):
        problems.append("T exceeds T0")
    return problems
