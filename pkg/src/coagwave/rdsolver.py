"""Method-of-lines integrator for ``u_t = D u_xx + F(u)`` on an interval.

Second-order central differences with zero-flux ends (mirror ghost nodes).
Three time steppers share the production/loss split of the kinetics:

``linearized`` (default)
    explicit diffusion, loss terms implicit; positivity preserving and
    order preserving, same cost as forward Euler.
``explicit``
    plain forward Euler.  Conserves linear invariants of the kinetics exactly,
    which the conservation checks rely on.
``semi_implicit``
    backward-Euler diffusion (tridiagonal solve), loss terms implicit; lets dt
    exceed the diffusive bound for stiff full-model runs.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .equilibria import Classification, classify, equilibrium_state
from .errors import NoBistabilityError, SimulationBlowUp
from .models import CoagParams, ModelKind, production_loss

log = logging.getLogger(__name__)

SCHEMES = ("linearized", "explicit", "semi_implicit")


@dataclass(frozen=True)
class Grid1D:
    L: float = 5.0
    N: int = 1001

    def __post_init__(self):
        if self.N < 3 or int(self.N) != self.N:
            raise ValueError("grid needs an integer N >= 3")
        if not self.L > 0:
            raise ValueError("grid length must be positive")

    @property
    def dx(self) -> float:
        return self.L / (self.N - 1)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.L, self.N)

    def refined(self, factor: int = 2) -> "Grid1D":
        return Grid1D(self.L, (self.N - 1) * factor + 1)


@dataclass(frozen=True)
class InitialCondition:
    """Activated region at the left end of the domain.

    For coagulation models the amplitude is a thrombin level and the other
    species start on the equilibrium manifold of that level; for the scalar
    model it is the level of ``u`` itself.
    """

    amplitude: float
    width: float
    shape: str = "smoothed_step"
    ramp: float | None = None

    def __post_init__(self):
        if not self.amplitude > 0:
            raise ValueError("IC amplitude must be positive")
        if self.shape not in ("step", "smoothed_step"):
            raise ValueError(f"unknown IC shape {self.shape!r}")

    def profile(self, grid: Grid1D) -> np.ndarray:
        """Unit-height activation profile on the grid."""
        if not 0 < self.width < grid.L / 4:
            raise ValueError("IC width must lie in (0, L/4)")
        x = grid.x
        if self.shape == "step":
            return (x <= self.width).astype(float)
        ramp = self.ramp if self.ramp is not None else self.width / 5
        return 0.5 * (1.0 - np.tanh((x - self.width) / ramp))

    def build(self, kind: ModelKind, params: CoagParams | None, grid: Grid1D) -> np.ndarray:
        shape = self.profile(grid)
        if not kind.is_coagulation:
            return self.amplitude * shape[None, :]
        base = equilibrium_state(kind, self.amplitude, params)
        u = np.outer(base, shape)
        if kind.name == "full14":
            # inactive pools and prothrombin fill the rest of the plasma
            rest = equilibrium_state(kind, 0.0, params)
            inactive = [kind.index(s) for s in ("V11", "P", "V5", "V10", "V8", "V9")]
            for i in inactive:
                u[i] = rest[i] - (rest[i] - base[i]) * shape
        return u


def default_ic(kind: ModelKind, params: CoagParams | None, grid: Grid1D = Grid1D()) -> InitialCondition:
    """Supra-threshold activation at the upper stable state, width L/20."""
    width = grid.L / 20
    if not kind.is_coagulation:
        from .speed_formulas import w_star
        return InitialCondition(w_star(kind.n, kind.b, kind.sigma), width)
    rep = classify(params)
    if rep.classification is not Classification.BISTABLE:
        raise NoBistabilityError(
            f"default IC needs a bistable parameter set, got {rep.classification.value}; "
            "pass an explicit InitialCondition")
    return InitialCondition(rep.upper_root, width)


@dataclass
class SpaceTimeField:
    grid: Grid1D
    times: np.ndarray
    snapshots: np.ndarray  # (n_times, n_species, N)
    kind: ModelKind
    params: CoagParams | None
    D: float
    dt: float
    scheme: str
    clip_events: int = 0
    stopped_at_boundary: bool = False
    meta: dict = field(default_factory=dict)

    def species(self, name: str) -> np.ndarray:
        return self.snapshots[:, self.kind.index(name), :]

    @property
    def front(self) -> np.ndarray:
        return self.species(self.kind.front_species)

    @property
    def scale(self) -> float:
        """Concentration scale of the front species (T0, or 1 for the scalar)."""
        return self.params.T0 if self.kind.is_coagulation else 1.0

    def total_mass(self, index: int | None = None) -> np.ndarray:
        """Trapezoidal integral per snapshot (summed over species by default)."""
        u = self.snapshots if index is None else self.snapshots[:, index:index + 1, :]
        w = np.full(self.grid.N, self.grid.dx)
        w[0] = w[-1] = 0.5 * self.grid.dx
        return np.einsum("tsn,n->t", u, w)


def laplacian(u: np.ndarray, dx: float) -> np.ndarray:
    """Second difference along the last axis with zero-flux ends."""
    lap = np.empty_like(u)
    lap[..., 1:-1] = u[..., 2:] - 2.0 * u[..., 1:-1] + u[..., :-2]
    lap[..., 0] = 2.0 * (u[..., 1] - u[..., 0])
    lap[..., -1] = 2.0 * (u[..., -2] - u[..., -1])
    lap /= dx * dx
    return lap


def _implicit_diffusion_banded(N: int, mu: float) -> np.ndarray:
    """Banded form of ``I - mu * Lap`` with the same zero-flux stencil."""
    ab = np.zeros((3, N))
    ab[0, 1:] = -mu
    ab[1, :] = 1.0 + 2.0 * mu
    ab[2, :-1] = -mu
    ab[0, 1] = -2.0 * mu  # row 0: (1+2mu) u0 - 2mu u1
    ab[2, N - 2] = -2.0 * mu  # row N-1
    return ab


def stable_dt(grid: Grid1D, D: float, factor: float = 0.4) -> float:
    return factor * grid.dx ** 2 / D


def simulate(kind: ModelKind, params: CoagParams | None, grid: Grid1D = Grid1D(),
             ic: InitialCondition | None = None, t_end: float = 40.0,
             snapshot_every: float = 1.0, *, D: float | None = None,
             dt: float | None = None, scheme: str = "linearized",
             reaction: bool = True, stop_at_boundary: bool = False,
             boundary_fraction: float = 0.9, initial_state: np.ndarray | None = None,
             ) -> SpaceTimeField:
    """Integrate from a localized activation and record snapshots.

    ``stop_at_boundary`` ends the run after the first snapshot in which the
    front species exceeds half its scale at ``boundary_fraction * L``.
    ``initial_state`` overrides ``ic`` with an explicit (species, N) array.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if not t_end > 0 or not snapshot_every > 0:
        raise ValueError("t_end and snapshot_every must be positive")
    if D is None:
        if params is None:
            raise ValueError("diffusion coefficient D required when params is None")
        D = params.D
    if initial_state is not None:
        u = np.array(initial_state, dtype=float)
        if u.shape != (kind.size, grid.N):
            raise ValueError(f"initial_state must have shape {(kind.size, grid.N)}")
    else:
        if ic is None:
            ic = default_ic(kind, params, grid)
        u = ic.build(kind, params, grid)

    dx = grid.dx
    dt_diff = stable_dt(grid, D)
    if dt is None:
        dt = dt_diff
    elif scheme != "semi_implicit" and dt > 0.5 * dx * dx / D:
        log.warning("dt=%g violates the diffusive bound %g; reducing", dt, dt_diff)
        dt = dt_diff
    steps_per_snap = max(1, math.ceil(snapshot_every / dt - 1e-9))
    dt = snapshot_every / steps_per_snap
    n_snaps = int(round(t_end / snapshot_every))
    scale = params.T0 if kind.is_coagulation else 1.0
    front_idx = kind.index(kind.front_species)
    probe = min(grid.N - 1, int(round(boundary_fraction * (grid.N - 1))))

    ab = _implicit_diffusion_banded(grid.N, dt * D / dx ** 2) if scheme == "semi_implicit" else None
    times = [0.0]
    snaps = [u.copy()]
    clips = 0
    stopped = False
    for k in range(1, n_snaps + 1):
        if scheme == "explicit" and reaction:
            dt, steps_per_snap = _explicit_reaction_dt(kind, params, u, dt, steps_per_snap,
                                                       snapshot_every)
        for _ in range(steps_per_snap):
            if reaction:
                prod, loss = production_loss(kind, u, params)
            if scheme == "semi_implicit":
                rhs = u + dt * prod if reaction else u
                if reaction:
                    rhs = rhs / (1.0 + dt * loss)
                u = solve_banded((1, 1), ab, rhs.T).T
            else:
                lap = laplacian(u, dx)
                if not reaction:
                    u = u + dt * D * lap
                elif scheme == "explicit":
                    u = u + dt * (D * lap + prod - loss * u)
                else:
                    u = (u + dt * (D * lap + prod)) / (1.0 + dt * loss)
            neg = u < 0
            if neg.any():
                if np.min(u) < -1e-6 * scale or not np.all(np.isfinite(u)):
                    raise SimulationBlowUp(
                        f"solution blew up near t={times[-1]:g} (min {np.min(u):g})",
                        time=times[-1], snapshot=snaps[-1])
                clips += 1
                u = np.where(neg, 0.0, u)
        if not np.all(np.isfinite(u)):
            raise SimulationBlowUp(f"non-finite values near t={k * snapshot_every:g}",
                                   time=times[-1], snapshot=snaps[-1])
        times.append(k * snapshot_every)
        snaps.append(u.copy())
        if stop_at_boundary and u[front_idx, probe] > 0.5 * scale:
            stopped = True
            break
    if clips:
        log.info("clipped negative undershoots in %d steps", clips)
    return SpaceTimeField(grid=grid, times=np.array(times), snapshots=np.array(snaps),
                          kind=kind, params=params, D=D, dt=dt, scheme=scheme,
                          clip_events=clips, stopped_at_boundary=stopped)


def _explicit_reaction_dt(kind, params, u, dt, steps, snapshot_every):
    """Shrink dt when forward Euler would be unstable for the kinetics."""
    _, loss = production_loss(kind, u, params)
    limit = 0.5 / max(float(np.max(loss)), 1e-300)
    if dt <= limit:
        return dt, steps
    steps = math.ceil(snapshot_every / limit)
    new_dt = snapshot_every / steps
    log.warning("explicit step %g exceeds kinetic stability limit %g; using %g",
                dt, limit, new_dt)
    return new_dt, steps
