"""Closed-form wave speed estimates for ``D w'' + c w' + b w^n (1-w) - sigma w = 0``.

``narrow_zone_speed`` collapses the reaction to a point and matches the
linear outer solutions through the energy jump across it.
``piecewise_linear_speed`` replaces the nonlinearity by two linear pieces with
the same slopes at the rest states and the same total area, and solves that
problem exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from scipy.optimize import brentq

from .errors import InvalidKinkError, NoUpperStateError
from .models import CoagParams, nondimensionalize, redimensionalize_speed


@dataclass(frozen=True)
class AnalyticWorkpad:
    n: int
    b: float
    sigma: float
    D: float
    w_star: float
    A: float | None = None
    alpha: float | None = None
    beta: float | None = None
    area: float | None = None
    r: float | None = None
    r_printed: float | None = None
    w0: float | None = None
    w_bar: float | None = None


@dataclass(frozen=True)
class SpeedEstimate:
    method: str
    value: float
    workpad: AnalyticWorkpad
    propagating: bool = True


def w_star(n: int, b: float, sigma: float) -> float:
    """Largest root of ``b w^(n-1) (1-w) = sigma`` on (0, 1]."""
    if n < 2 or b <= 0 or sigma < 0:
        raise ValueError("need n >= 2, b > 0, sigma >= 0")
    if sigma == 0:
        return 1.0
    w_peak = (n - 1) / n
    g = lambda w: b * w ** (n - 1) * (1.0 - w) - sigma
    if g(w_peak) <= 0:
        raise NoUpperStateError(
            f"b * max w^(n-1)(1-w) = {b * w_peak ** (n - 1) / n:g} does not exceed sigma={sigma:g}")
    return brentq(g, w_peak, 1.0, xtol=1e-15, rtol=1e-15, maxiter=500)


def reaction_area(n: int, b: float, sigma: float, w: float) -> float:
    """``int_0^w (b s^n (1-s) - sigma s) ds``."""
    return b * (w ** (n + 1) / (n + 1) - w ** (n + 2) / (n + 2)) - 0.5 * sigma * w * w


def narrow_zone_speed(n: int, b: float, sigma: float, D: float) -> SpeedEstimate:
    ws = w_star(n, b, sigma)
    A = 4.0 * b * D * (ws ** (n - 1) / (n + 1) - ws ** n / (n + 2))
    if A <= 0:
        raise ValueError(f"narrow-zone constant A={A:g} must be positive")
    value = (A - 2.0 * D * sigma) / math.sqrt(2.0 * A)
    pad = AnalyticWorkpad(n=n, b=b, sigma=sigma, D=D, w_star=ws, A=A)
    return SpeedEstimate("narrow_zone", value, pad, propagating=value > 0)


def piecewise_linear_speed(n: int, b: float, sigma: float, D: float) -> SpeedEstimate:
    ws = w_star(n, b, sigma)
    alpha = -sigma
    beta = b * n * ws ** (n - 1) - b * (n + 1) * ws ** n - sigma
    area = reaction_area(n, b, sigma, ws)
    # area matching of the two linear pieces
    r = -0.5 * beta * ws * ws - area
    r_printed = (b * ws ** (n + 1) * (-n / 2 - b / (n + 1))
                 + b * ws ** (n + 2) * ((n + 1) / 2 + 1 / (n + 2)) + sigma * ws * ws)
    pad = AnalyticWorkpad(n=n, b=b, sigma=sigma, D=D, w_star=ws, alpha=alpha,
                          beta=beta, area=area, r=r, r_printed=r_printed)
    disc = beta * beta * ws * ws - 2.0 * (alpha - beta) * r
    if disc < 0 or alpha - beta <= 0:
        raise InvalidKinkError(f"no real kink location (discriminant {disc:g})", pad)
    # h(w0) opens upward with h(w*) < 0, so the admissible kink is the smaller root
    w0 = (-beta * ws - math.sqrt(disc)) / (alpha - beta)
    if not 0 < w0 < ws:
        raise InvalidKinkError(f"kink w0={w0:g} outside (0, w*={ws:g})", replace(pad, w0=w0))
    wb = w0 / (w0 - ws)
    pad = replace(pad, w0=w0, w_bar=wb)
    value = piecewise_linear_formula(alpha, beta, wb, D)
    return SpeedEstimate("piecewise_linear", value, pad, propagating=value > 0)


def piecewise_linear_formula(alpha: float, beta: float, w_bar: float, D: float) -> float:
    """Exact speed of the bistable equation with a two-piece linear source."""
    den = (w_bar - 1.0) * (alpha * w_bar * w_bar - beta * w_bar)
    if den <= 0:
        raise InvalidKinkError(f"piecewise-linear speed undefined (denominator {den:g})")
    return math.sqrt(D) * (alpha * w_bar * w_bar - beta) / math.sqrt(den)


@dataclass(frozen=True)
class CoagSpeedEstimates:
    c1: float
    c2: float
    printed_c1: float
    printed_c2: float
    b_dimensionless: float
    D_tilde: float
    narrow: SpeedEstimate
    piecewise: SpeedEstimate


COAG_N = 3
COAG_SIGMA = 1.0


def coag_speed_estimates(params: CoagParams) -> CoagSpeedEstimates:
    """Both estimates for the reduced coagulation model, in mm/min.

    The one-equation model is made dimensionless (time unit 1/h2,
    concentration unit T0, space unit kept), the cubic estimate is evaluated
    at ``n = 3, sigma = 1`` and the speed is scaled back by ``h2``.
    """
    dim = nondimensionalize(params, include_h11=True)
    narrow = narrow_zone_speed(COAG_N, dim.b, COAG_SIGMA, dim.D_tilde)
    piece = piecewise_linear_speed(COAG_N, dim.b, COAG_SIGMA, dim.D_tilde)
    pc1, pc2 = printed_coag_formulas(params)
    return CoagSpeedEstimates(
        c1=redimensionalize_speed(narrow.value, params),
        c2=redimensionalize_speed(piece.value, params),
        printed_c1=pc1, printed_c2=pc2, b_dimensionless=dim.b,
        D_tilde=dim.D_tilde, narrow=narrow, piecewise=piece)


def printed_coag_formulas(params: CoagParams) -> tuple[float, float]:
    """The dimensional formulas exactly as typeset; NaN where they are not real.

    They substitute T0 for the dimensionless upper state in the polynomial
    terms, so with T0 = 1400 nM they are not physically meaningful.
    """
    p = params
    b = (p.k9 * p.k11 * p.k10_bar * p.k8 * p.k89 * p.require_k2_bar() * p.k5 * p.k510 * p.T0 ** 2
         / (p.h9 * p.h10 * p.h11 * p.h8 * p.h89 * p.h5 * p.h510))
    T0, h2, sD = p.T0, p.h2, math.sqrt(p.D)
    inner = b * T0 ** 2 - 0.8 * b * T0 ** 3
    c1 = sD * (inner - 2 * h2) / math.sqrt(2 * inner) if inner > 0 else math.nan
    den_t = 4 * b * T0 ** 2 - 3 * b * T0
    disc = ((3 * b * T0 ** 2 - 4 * b * T0 ** 3 - h2) ** 2
            - 2 * b * (4 * T0 - 3) * T0 ** 2
            * (-1.5 * b * T0 ** 2 - b * b / 4 * T0 ** 2 + 2.2 * b * T0 ** 3 + h2))
    if disc < 0 or den_t == 0:
        return c1, math.nan
    T_star = (-3 * b * T0 ** 2 + 4 * b * T0 ** 4 + h2) / den_t + math.sqrt(disc) / den_t
    if T_star == T0:
        return c1, math.nan
    T_bar = T_star / (T_star - T0)
    num = -3 * b * T0 ** 2 - h2 * T_bar + 4 * b * T0 ** 3 - h2
    rad = (T0 - 1) * T_bar * (-h2 * T_bar - 3 * b * T0 ** 2 + 4 * b * T0 ** 3 + h2)
    c2 = sD * num / math.sqrt(rad) if rad > 0 else math.nan
    return c1, c2
