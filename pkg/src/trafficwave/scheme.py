"""Explicit upwind finite-difference integrator in Riemann coordinates.

``w`` is transported to the right with the local traffic speed ``v``; ``v``
is transported to the left with the constant speed ``c`` and relaxes towards
the fundamental diagram at the outlet. One static grid is used per run:

    lambda = T / (1 + floor(T * v_bar)),   m = N (1 + floor(T * v_bar)),
    h = 1/N,  delta = lambda * h,          m * delta = T,

with ``v_bar = max(max v0, f(0), c)`` so that ``lambda * v_bar <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

import numpy as np

from .control import ClosedLoop, ControllerSpec, DemandFn, demand_function
from .errors import ConfigurationError, ControllerError, InvariantViolation
from .model import (ModelParams, PhysicalState, RiemannState, inlet_map, outlet_relax,
                    physical_from_riemann, riemann_from_physical)

Profile = Callable[[float], float]

# closed-loop inlet value must vanish up to rounding
CLOSED_LOOP_INLET_TOL = 1e-13


@dataclass(frozen=True)
class Grid:
    N: int
    lam: float
    T: float
    m: int
    v_bar: float

    @property
    def h(self) -> float:
        return 1.0 / self.N

    @property
    def delta(self) -> float:
        return self.lam / self.N

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.N + 1) / self.N

    def time(self, k: int) -> float:
        return k * self.T / self.m

    def step_index(self, t: float) -> int:
        return min(max(int(round(t * self.m / self.T)), 0), self.m)


def min_admissible_N(params: ModelParams) -> int:
    return math.floor(params.mu / params.c) + 1


def build_grid(T: float, N: int, initial_v: np.ndarray, params: ModelParams) -> Grid:
    if not T > 0:
        raise ConfigurationError(f"horizon T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    N = int(N)
    if not N > params.mu / params.c:
        raise ConfigurationError(
            f"N={N} violates N > mu/c = {params.mu / params.c:g}; "
            f"minimal admissible N is {min_admissible_N(params)}")
    initial_v = np.asarray(initial_v, dtype=float)
    if np.any(initial_v < 0):
        raise ConfigurationError("initial speeds must be nonnegative")
    v_bar = max(float(initial_v.max()), params.v_max, params.c)
    blocks = 1 + math.floor(T * v_bar)
    return Grid(N=N, lam=T / blocks, T=float(T), m=N * blocks, v_bar=v_bar)


def _sample(profile: Profile, x: np.ndarray, name: str) -> np.ndarray:
    values = np.array([float(profile(xi)) for xi in x])
    bad = np.flatnonzero(~(values > 0))
    if bad.size:
        i = int(bad[0])
        raise ConfigurationError(
            f"{name} must be strictly positive; node {i} (x={x[i]:g}) has {values[i]:g}")
    return values


def init_state(rho0: Profile, v0: Profile, grid: Grid, params: ModelParams,
               rho_eq: float) -> RiemannState:
    x = grid.x
    rho = _sample(rho0, x, "rho0")
    v = _sample(v0, x, "v0")
    return RiemannState(w=riemann_from_physical(rho, v, params, rho_eq), v=v, t=0.0,
                        rho_eq=rho_eq)


def _advance(state: RiemannState, grid: Grid, params: ModelParams,
             demand: Union[float, DemandFn], t_new: float) -> tuple[RiemannState, float]:
    w, v = state.w, state.v
    if v.min() < 0:
        i = int(np.argmin(v))
        raise InvariantViolation(f"negative speed {v[i]:g} at node {i}, t={state.t:g}")
    if v.max() * grid.lam > 1.0 + 1e-12:
        raise InvariantViolation(f"speed {v.max():g} exceeds the CFL bound {grid.v_bar:g}")

    lam, c = grid.lam, params.c
    f_eq = params.f(state.rho_eq)
    lc = lam * c
    md = params.mu * grid.delta
    v_new = np.empty_like(v)
    # increment form of the convex combinations: constant states stay bit-exact
    v_new[:-1] = v[:-1] + lc * (v[1:] - v[:-1])
    # outlet relaxation with a compensated sum; the increment shrinks like 1/N and
    # would otherwise stall a few hundred ulps short of the fixed point
    v_out = float(v[-1])
    incr = md * (outlet_relax(v_out, float(w[-1]), params, state.rho_eq, f_eq) - v_out) - state.carry
    v_last = v_out + incr
    carry = (v_last - v_out) - incr
    v_new[-1] = v_last

    w_new = np.empty_like(w)
    w_new[1:] = w[1:] + lam * v[1:] * (w[:-1] - w[1:])

    v_in = float(v_new[0])
    q = demand(t_new, v_in) if callable(demand) else float(demand)
    if not q > 0:
        raise ControllerError(f"controller returned q={q:g} at t={t_new:g}")
    w_new[0] = inlet_map(v_in, q, params, state.rho_eq, f_eq)
    return RiemannState(w=w_new, v=v_new, t=t_new, rho_eq=state.rho_eq, carry=carry), q


def step(state: RiemannState, grid: Grid, params: ModelParams,
         demand: Union[float, DemandFn], t_new: Optional[float] = None) -> RiemannState:
    """Advance one time step.

    ``demand`` is either a fixed inlet flow or a function ``q(t, v_inlet)``;
    it is evaluated at the new time with the updated inlet speed, so the
    inlet value of ``w`` is consistent with the post-step state.
    """
    if state.w.shape != (grid.N + 1,):
        raise ConfigurationError(
            f"state has {state.w.size} nodes, grid expects {grid.N + 1}")
    if t_new is None:
        t_new = state.t + grid.delta
    return _advance(state, grid, params, demand, t_new)[0]


@dataclass
class RunDiagnostics:
    """Per-step time series of a run plus the initial-data summaries the
    bound certificates need."""

    t: np.ndarray
    X: np.ndarray
    sup_abs_w: np.ndarray
    min_v: np.ndarray
    max_v: np.ndarray
    max_rho: np.ndarray
    q: np.ndarray
    inlet_w: np.ndarray
    rho_eq: float
    controller_kind: str
    sup_abs_w0: float
    min_v0: float
    max_v0: float
    sup_abs_b0: float

    COLUMNS = ("t", "X", "sup_abs_w", "min_v", "max_v", "max_rho", "q")

    def __len__(self) -> int:
        return len(self.t)

    def at(self, t: float) -> int:
        """Index of the recorded step closest to time ``t``."""
        return int(np.argmin(np.abs(self.t - t)))

    def rows(self):
        cols = [getattr(self, name) for name in self.COLUMNS]
        for k in range(len(self.t)):
            yield tuple(float(col[k]) for col in cols)


@dataclass
class Snapshot:
    """Nodal profiles at a recorded step; ``t_requested`` is the scheduled time."""

    t_requested: float
    t: float
    x: np.ndarray
    rho: np.ndarray
    v: np.ndarray
    w: np.ndarray

    def physical(self) -> PhysicalState:
        return PhysicalState(rho=self.rho, v=self.v, t=self.t)


@dataclass
class SimulationResult:
    grid: Grid
    diagnostics: RunDiagnostics
    snapshots: dict[float, Snapshot]
    final: RiemannState
    initial: RiemannState
    controller: ControllerSpec
    params: ModelParams = field(repr=False)

    def final_physical(self) -> PhysicalState:
        return self.final.to_physical(self.params)


def _sup_log_ratio(lo: float, hi: float, ref: float) -> float:
    # ln is monotone, so the sup of |ln(u/ref)| sits at an extreme of u
    return max(abs(math.log(lo / ref)), abs(math.log(hi / ref)))


def simulate(params: ModelParams, rho0: Profile, v0: Profile, controller: ControllerSpec,
             T: float, N: int, snapshot_times: Iterable[float] = (),
             rho_eq: Optional[float] = None) -> SimulationResult:
    """Run the scheme on ``[0, T]`` and record diagnostics at every step.

    ``rho_eq`` is the reference density of the Riemann transform and of the
    deviation metric ``X``; it defaults to the controller's target.
    """
    if rho_eq is None:
        rho_eq = controller.rho_eq
    x = np.arange(N + 1) / N if int(N) == N and N >= 1 else None
    if x is None:
        raise ConfigurationError(f"N must be a positive integer, got {N}")
    v_init = _sample(v0, x, "v0")
    grid = build_grid(T, N, v_init, params)
    state = init_state(rho0, v0, grid, params, rho_eq)
    initial = state
    demand = demand_function(controller, params)
    check_inlet = (isinstance(controller, ClosedLoop)
                   and _inlet_identity_applies(controller.rho_eq, params))

    m = grid.m
    t = np.empty(m + 1)
    X = np.empty(m + 1)
    sup_w = np.empty(m + 1)
    min_v = np.empty(m + 1)
    max_v = np.empty(m + 1)
    max_rho = np.empty(m + 1)
    q = np.empty(m + 1)
    inlet_w = np.empty(m + 1)

    snap_index: dict[int, list[float]] = {}
    for ts in snapshot_times:
        if not 0 <= ts <= T:
            raise ConfigurationError(f"snapshot time {ts} outside [0, {T}]")
        snap_index.setdefault(grid.step_index(ts), []).append(float(ts))
    snapshots: dict[float, Snapshot] = {}

    f_eq = params.f(rho_eq)

    def record(k: int, s: RiemannState, qk: float, a_k: float) -> None:
        rho = physical_from_riemann(s.w, s.v, params, rho_eq)
        rho_lo, rho_hi = float(rho.min()), float(rho.max())
        v_lo, v_hi = float(s.v.min()), float(s.v.max())
        t[k] = s.t
        X[k] = _sup_log_ratio(rho_lo, rho_hi, rho_eq) + _sup_log_ratio(v_lo, v_hi, f_eq)
        max_rho[k] = rho_hi
        sup_w[k] = max(-float(s.w.min()), float(s.w.max()))
        min_v[k] = v_lo
        max_v[k] = v_hi
        q[k] = qk
        inlet_w[k] = a_k
        for ts in snap_index.get(k, ()):
            snapshots[ts] = Snapshot(t_requested=ts, t=s.t, x=grid.x, rho=rho, v=s.v.copy(),
                                     w=s.w.copy())

    q0 = demand(0.0, float(state.v[0]))
    if not q0 > 0:
        raise ControllerError(f"controller returned q={q0:g} at t=0")
    record(0, state, q0, inlet_map(float(state.v[0]), q0, params, rho_eq))

    for k in range(1, m + 1):
        state, qk = _advance(state, grid, params, demand, grid.time(k))
        if check_inlet and abs(state.w[0]) > CLOSED_LOOP_INLET_TOL:
            raise InvariantViolation(
                f"closed-loop inlet value w(t,0)={state.w[0]:g} is not zero at t={state.t:g}")
        record(k, state, qk, float(state.w[0]))

    w0 = initial.w
    diag = RunDiagnostics(
        t=t, X=X, sup_abs_w=sup_w, min_v=min_v, max_v=max_v, max_rho=max_rho, q=q,
        inlet_w=inlet_w, rho_eq=rho_eq, controller_kind=controller.kind,
        sup_abs_w0=float(np.max(np.abs(w0))), min_v0=float(initial.v.min()),
        max_v0=float(initial.v.max()),
        sup_abs_b0=float(np.max(np.abs(np.log(initial.v / f_eq)))),
    )
    return SimulationResult(grid=grid, diagnostics=diag, snapshots=snapshots, final=state,
                            initial=initial, controller=controller, params=params)


def _inlet_identity_applies(rho_eq: float, params: ModelParams) -> bool:
    c = params.c
    return rho_eq <= c / (c + params.f(rho_eq)) * params.saturation.knee
