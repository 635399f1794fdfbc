"""Stationary points of the reduced kinetics and their stability.

Along the equilibrium manifold every activated factor is slaved to T, and the
thrombin balance becomes ``-P(T) / T0`` with ``P(T) = T Q(T)`` and ``Q`` a
cubic.  Positive roots of Q are isolated on monotone pieces delimited by the
critical points of Q, then polished by bisection and Newton steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .models import REDUCED6, CoagParams, ModelKind, eval_jacobian, eval_rhs

log = logging.getLogger(__name__)

RATE_KEYS = ("k11", "h11", "k10", "k10_bar", "h10", "k9", "h9", "k89", "h89",
             "k8", "h8", "k5", "h5", "k510", "h510", "k2", "h2", "k2_bar")


@dataclass(frozen=True)
class CubicCoeffs:
    a: float
    b: float
    c: float
    d: float

    def __call__(self, T):
        return ((self.a * T + self.b) * T + self.c) * T + self.d

    def derivative(self, T):
        return (3 * self.a * T + 2 * self.b) * T + self.c

    @property
    def norm(self) -> float:
        return max(abs(self.a), abs(self.b), abs(self.c), abs(self.d))

    def as_tuple(self):
        return (self.a, self.b, self.c, self.d)


def _slaving_constants(p: CoagParams):
    G = p.k9 * p.k11 / (p.h9 * p.h11 * p.h10)
    E = p.k10_bar * p.k89 * p.k8 / (p.h89 * p.h8)
    B = p.require_k2_bar() * p.k510 * p.k5 / (p.h510 * p.h5)
    return G, E, B


def polynomial_coeffs(params: CoagParams) -> CubicCoeffs:
    """Coefficients of Q with ``P(T) = T Q(T) = -T0 F_T(u(T))``.

    ``u(T)`` is the equilibrium manifold, so P vanishes exactly at the
    thrombin levels of stationary states, and ``a > 0`` for positive rates.
    """
    p = params
    G, E, B = _slaving_constants(p)
    a = G * E * B
    b = G * (p.k10 * B + E * p.k2 - E * B * p.T0)
    c = G * (p.k10 * p.k2 - (p.k10 * B + E * p.k2) * p.T0)
    d = p.T0 * (p.h2 - G * p.k10 * p.k2)
    return CubicCoeffs(a, b, c, d)


def printed_polynomial_coeffs(params: CoagParams) -> CubicCoeffs:
    """The four coefficient formulas exactly as typeset, for comparison only.

    They differ from :func:`polynomial_coeffs` by missing factors (``h10`` in
    two terms, ``k10_bar`` in the last term of ``c``, ``T0`` in ``d``), so their
    roots are not stationary points in general.
    """
    p = params
    k2b = p.require_k2_bar()
    a = (p.k10_bar * p.k89 * p.k8 * k2b * p.k5 * p.k510 * p.k9 * p.k11
         / (p.h89 * p.h8 * p.h5 * p.h10 * p.h510 * p.h9 * p.h11))
    d = -p.k2 * p.k10 * p.k9 * p.k11 / (p.h9 * p.h11 * p.h10) + p.h2 * p.T0
    b = (-a * p.T0
         + p.k10 * k2b * p.k5 * p.k510 * p.k9 * p.k11 / (p.h5 * p.h10 * p.h510 * p.h9 * p.h11)
         + p.k2 * p.k10_bar * p.k89 * p.k8 * p.k9 * p.k11 / (p.h89 * p.h8 * p.h9 * p.h11))
    c = (-p.k10 * k2b * p.k5 * p.k510 * p.k9 * p.k11 / (p.h5 * p.h10 * p.h510 * p.h9 * p.h11) * p.T0
         + p.k2 * p.k10 * p.k9 * p.k11 / (p.h9 * p.h11)
         - p.k2 * p.k89 * p.k8 * p.k9 * p.k11 / (p.h89 * p.h8 * p.h9 * p.h11 * p.h10) * p.T0)
    return CubicCoeffs(a, b, c, d)


def P_value(T, params: CoagParams):
    return T * polynomial_coeffs(params)(T)


def P_prime(T, params: CoagParams):
    q = polynomial_coeffs(params)
    return q(T) + T * q.derivative(T)


def _real_quadratic_roots(a, b, c):
    """Real roots of a x^2 + b x + c, ascending; degree drops when a == 0."""
    if a == 0:
        if b == 0:
            return []
        return [-c / b]
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    sq = math.sqrt(disc)
    # cancellation-free form
    qq = -0.5 * (b + math.copysign(sq, b))
    roots = [qq / a] if qq == 0 else [qq / a, c / qq]
    return sorted(set(roots))


def _cauchy_bound(q: CubicCoeffs) -> float:
    coeffs = [q.a, q.b, q.c, q.d]
    while coeffs and coeffs[0] == 0:
        coeffs.pop(0)
    if len(coeffs) <= 1:
        return 1.0
    lead = abs(coeffs[0])
    return 1.0 + max(abs(x) for x in coeffs[1:]) / lead


def _polish(q: CubicCoeffs, lo: float, hi: float, rtol: float = 1e-12) -> float:
    flo = q(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = q(mid)
        if fm == 0:
            return mid
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo <= rtol * max(abs(hi), abs(lo)) * 1e-2:
            break
    x = 0.5 * (lo + hi)
    for _ in range(3):
        dq = q.derivative(x)
        if dq == 0:
            break
        step = q(x) / dq
        if not lo <= x - step <= hi:
            break
        x -= step
    return x


def isolate_positive_roots(q: CubicCoeffs) -> list[tuple[float, bool]]:
    """Positive roots of Q as ``(value, degenerate)`` pairs, ascending."""
    if q.a == 0 and q.b == 0 and q.c == 0:
        return []
    crit = [t for t in _real_quadratic_roots(3 * q.a, 2 * q.b, q.c) if t > 0]
    upper = _cauchy_bound(q)
    knots = [0.0] + [t for t in crit if t < upper] + [upper]
    scale = q.norm
    roots = []
    for lo, hi in zip(knots[:-1], knots[1:]):
        flo, fhi = q(lo), q(hi)
        if flo == 0 and lo > 0:
            continue  # handled as the right end of the previous piece
        if fhi == 0:
            roots.append(hi)
        elif (flo > 0) != (fhi > 0) and flo != 0:
            roots.append(_polish(q, lo, hi))
    # tangential zeros at critical points do not change sign
    for t in crit:
        if t < upper and abs(q(t)) <= 1e-12 * scale * max(1.0, t) ** 3 and \
                not any(math.isclose(t, r, rel_tol=1e-9) for r in roots):
            roots.append(t)
    roots = sorted(r for r in roots if r > 0)
    return [(r, abs(q.derivative(r)) < 1e-10 * scale * max(1.0, r) ** 2) for r in roots]


def positive_roots(q: CubicCoeffs) -> list[float]:
    """Strictly positive real roots of Q, ascending, relative accuracy 1e-12."""
    return [r for r, _ in isolate_positive_roots(q)]


def case_analysis_count(q: CubicCoeffs) -> int | None:
    """Number of positive roots according to the critical-point case analysis.

    Returns ``None`` for configurations the two printed cases do not cover
    (three positive roots, or none).
    """
    if q.a == 0:
        return None
    Q0 = q.d
    disc = q.b ** 2 - 3 * q.a * q.c
    if disc <= 0:
        return 1 if Q0 < 0 else None
    sq = math.sqrt(disc)
    T1, T2 = sorted(((-q.b - sq) / (3 * q.a), (-q.b + sq) / (3 * q.a)))
    if T1 <= 0 and Q0 < 0:
        return 1
    if 0 <= T1 < T2 and Q0 < 0 and ((q(T1) > 0 and q(T2) > 0) or q(T1) < 0):
        return 1
    if 0 < T2 and Q0 > 0 and q(T2) < 0:
        return 2
    return None


def sign_scan_count(q: CubicCoeffs, upper: float, step: float) -> int:
    """Count sign changes of Q on a uniform grid over (0, upper]."""
    T = np.arange(step, upper + 0.5 * step, step)
    s = np.sign(q(T))
    s = s[s != 0]
    return int(np.count_nonzero(s[1:] != s[:-1]))


class Classification(str, Enum):
    MONOSTABLE = "Monostable"
    BISTABLE = "Bistable"
    THREE_POSITIVE_ROOTS = "ThreePositiveRoots"
    NO_POSITIVE_EQUILIBRIUM = "NoPositiveEquilibrium"


@dataclass
class EquilibriumReport:
    roots: list[float]
    classification: Classification
    states: list[np.ndarray]
    P_prime: list[float]
    principal_eigenvalues: list[float]
    degenerate: list[bool]
    coeffs: CubicCoeffs
    residuals: list[float] = field(default_factory=list)
    case_count: int | None = None

    @property
    def stable(self) -> list[bool]:
        return [ev < 0 for ev in self.principal_eigenvalues]

    @property
    def theorem1_consistent(self) -> bool:
        return all(deg or (ev > 0) == (pp < 0)
                   for ev, pp, deg in zip(self.principal_eigenvalues, self.P_prime, self.degenerate))

    @property
    def upper_root(self) -> float:
        return self.roots[-1]

    @property
    def middle_root(self) -> float:
        return self.roots[0]


def equilibrium_from_T(T_star: float, params: CoagParams) -> np.ndarray:
    """Reduced-model state (T, U5, U8, U9, U10, U11) slaved to a thrombin level."""
    p = params
    T = float(T_star)
    U5 = p.k5 / p.h5 * T
    U8 = p.k8 / p.h8 * T
    U11 = p.k11 / p.h11 * T
    U9 = p.k9 * p.k11 / (p.h9 * p.h11) * T
    U10 = (p.k10 * U9 + p.k10_bar * p.k89 / p.h89 * U9 * U8) / p.h10
    return np.array([T, U5, U8, U9, U10, U11])


def equilibrium_state(kind: ModelKind, T_star: float, params: CoagParams) -> np.ndarray:
    """Slaved state for any coagulation kind, in that kind's layout."""
    red = equilibrium_from_T(T_star, params)
    if kind.name == "reduced6":
        return red
    if kind.name == "two_eq":
        return red[[0, 5]]
    if kind.name == "one_eq":
        return red[:1]
    if kind.name == "full14":
        T, U5, U8, U9, U10, U11 = red
        p = params
        v0 = p.V0
        C1 = p.k510 / p.h510 * U5 * U10
        C2 = p.k89 / p.h89 * U8 * U9
        return np.array([U11, max(v0["11"] - U11, 0.0), T, max(p.T0 - T, 0.0), C1,
                         U5, max(v0["5"] - U5, 0.0), U10, max(v0["10"] - U10, 0.0),
                         C2, U8, max(v0["8"] - U8, 0.0), U9, max(v0["9"] - U9, 0.0)])
    raise ValueError(f"no coagulation equilibrium for {kind}")


def principal_eigenvalue(J: np.ndarray) -> float:
    """Real part of the eigenvalue with largest real part."""
    return float(np.max(np.linalg.eigvals(J).real))


def classify(params: CoagParams) -> EquilibriumReport:
    q = polynomial_coeffs(params)
    iso = isolate_positive_roots(q)
    roots = [r for r, _ in iso]
    degenerate = [d for _, d in iso]
    case = case_analysis_count(q)
    simple = sum(not d for d in degenerate)
    if case is not None and case != simple:
        log.warning("case analysis predicts %s positive roots, isolation found %s "
                    "(isolation is used)", case, simple)
    n = len(roots)
    cls = {0: Classification.NO_POSITIVE_EQUILIBRIUM, 1: Classification.MONOSTABLE,
           2: Classification.BISTABLE}.get(n, Classification.THREE_POSITIVE_ROOTS)
    states, pprime, eigs, resid = [], [], [], []
    for r in roots:
        u = equilibrium_from_T(r, params)
        states.append(u)
        pprime.append(float(q(r) + r * q.derivative(r)))
        eigs.append(principal_eigenvalue(eval_jacobian(REDUCED6, u, params)))
        resid.append(float(np.max(np.abs(eval_rhs(REDUCED6, u, params)))))
    return EquilibriumReport(roots=roots, classification=cls, states=states,
                             P_prime=pprime, principal_eigenvalues=eigs,
                             degenerate=degenerate, coeffs=q, residuals=resid,
                             case_count=case)


def tau0_matrix(T_star: float, params: CoagParams) -> np.ndarray:
    """Linearization of the decoupled homotopy endpoint at a stationary state.

    Ordering is (T, U5, U8, U11, U9, U10), which makes the matrix lower
    triangular; the T entry is the derivative of the slaved thrombin balance,
    ``-P'(T*) / T0``.
    """
    p = params
    u = equilibrium_from_T(T_star, p)
    U8, U9 = u[2], u[3]
    c2 = p.k10_bar * p.k89 / p.h89
    M = np.zeros((6, 6))
    M[0, 0] = -P_prime(T_star, p) / p.T0
    M[1, 0], M[1, 1] = p.k5, -p.h5
    M[2, 0], M[2, 2] = p.k8, -p.h8
    M[3, 0], M[3, 3] = p.k11, -p.h11
    M[4, 3], M[4, 4] = p.k9, -p.h9
    M[5, 2], M[5, 4], M[5, 5] = c2 * U9, p.k10 + c2 * U8, -p.h10
    return M


@dataclass
class Theorem1Row:
    trial: int
    root: float
    P_prime: float
    principal_eigenvalue: float
    tau0_principal: float
    agrees: bool
    degenerate: bool
    residual: float


@dataclass
class Theorem1Report:
    rows: list[Theorem1Row]
    trials_requested: int
    trials_accepted: int
    attempts: int

    @property
    def passed(self) -> bool:
        return all(r.agrees for r in self.rows if not r.degenerate)

    @property
    def n_checked(self) -> int:
        return sum(not r.degenerate for r in self.rows)


def perturb_rates(params: CoagParams, rng: np.random.Generator,
                  low: float = 0.5, high: float = 2.0) -> CoagParams:
    """Independent log-uniform factor in [low, high] on every rate constant."""
    factors = np.exp(rng.uniform(math.log(low), math.log(high), size=len(RATE_KEYS)))
    return params.replace(**{k: getattr(params, k) * f for k, f in zip(RATE_KEYS, factors)})


def _check_roots(trial: int, params: CoagParams) -> list[Theorem1Row]:
    rep = classify(params)
    rows = []
    for r, pp, ev, deg, res in zip(rep.roots, rep.P_prime, rep.principal_eigenvalues,
                                   rep.degenerate, rep.residuals):
        deg = deg or abs(pp) < 1e-10 * max(1.0, rep.coeffs.norm)
        tau0 = float(np.max(np.diag(tau0_matrix(r, params))))
        rows.append(Theorem1Row(trial=trial, root=r, P_prime=pp, principal_eigenvalue=ev,
                                tau0_principal=tau0,
                                agrees=(ev > 0) == (pp < 0) and (tau0 > 0) == (pp < 0),
                                degenerate=deg, residual=res))
    return rows


def verify_theorem1(params: CoagParams, trials: int = 100, seed: int = 0,
                    max_attempts: int | None = None) -> Theorem1Report:
    """Check the eigenvalue / P' sign correspondence on perturbed rate sets.

    Trial 0 is the unperturbed set; further trials are random perturbations
    kept only when they remain bistable.
    """
    rng = np.random.default_rng(seed)
    rows = _check_roots(0, params)
    accepted, attempts = 0, 0
    max_attempts = max_attempts or 50 * trials
    while accepted < trials and attempts < max_attempts:
        attempts += 1
        candidate = perturb_rates(params, rng)
        if classify(candidate).classification is not Classification.BISTABLE:
            continue
        accepted += 1
        rows.extend(_check_roots(accepted, candidate))
    return Theorem1Report(rows=rows, trials_requested=trials,
                          trials_accepted=accepted, attempts=attempts)
