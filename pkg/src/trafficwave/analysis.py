"""Equilibria, stabilizability tests, run certificates and convergence checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError
from .model import ModelParams, PhysicalState
from .scheme import RunDiagnostics, SimulationResult

# ---------------------------------------------------------------------------
# equilibria


@dataclass
class Equilibrium:
    rho: float
    kind: str  # "free" (identity branch of h) or "saturated" (rho_max)
    speed: float
    flow: float
    admissible: bool
    condition31: bool

    @property
    def stabilizable(self) -> bool:
        return self.admissible and self.condition31


@dataclass
class EquilibriumReport:
    q_eq: float
    roots: list[Equilibrium] = field(default_factory=list)

    @property
    def densities(self) -> list[float]:
        return [r.rho for r in self.roots]


def bisect(fn: Callable[[float], float], lo: float, hi: float, xtol: float = 1e-12) -> float:
    """Root of ``fn`` in ``[lo, hi]`` given a sign change (or a zero) at the ends."""
    f_lo = fn(lo)
    if f_lo == 0.0:
        return lo
    if fn(hi) == 0.0:
        return hi
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        f_mid = fn(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _free_branch_roots(q_eq: float, params: ModelParams, n_scan: int,
                       tangent_tol: float) -> list[float]:
    f = params.speed_law
    flow_gap = lambda r: r * f(r) - q_eq
    slope = lambda r: f(r) + r * f.derivative(r)

    grid = np.linspace(0.0, params.rho_max, n_scan + 1)
    vals = grid * f(grid) - q_eq
    roots = []
    for i in range(n_scan):
        a, b = vals[i], vals[i + 1]
        if a == 0.0:
            roots.append(float(grid[i]))
        elif a * b < 0:
            roots.append(bisect(flow_gap, grid[i], grid[i + 1]))
    if vals[-1] == 0.0:
        roots.append(float(grid[-1]))

    # double roots: the flow touches q_eq without crossing, at a critical point
    dvals = f(grid) + grid * f.derivative(grid)
    for i in range(n_scan):
        if dvals[i] * dvals[i + 1] < 0:
            r = bisect(slope, grid[i], grid[i + 1])
            if abs(flow_gap(r)) <= tangent_tol * max(q_eq, 1.0):
                roots.append(r)
    return roots


def _merge(roots: Sequence[float], tol: float = 1e-6) -> list[float]:
    merged: list[float] = []
    for r in sorted(roots):
        if merged and r - merged[-1] < tol:
            continue
        merged.append(r)
    return merged


def find_equilibria(q_eq: float, params: ModelParams, n_scan: int = 10_000,
                    tangent_tol: float = 1e-10,
                    n_samples: int = 100_000) -> EquilibriumReport:
    """All densities with ``rho = h(q_eq / f(rho))`` on ``(0, rho_max]``."""
    if not q_eq > 0:
        raise ValueError(f"q_eq must be positive, got {q_eq}")
    f = params.speed_law
    knee = params.saturation.knee
    free = [r for r in _free_branch_roots(q_eq, params, n_scan, tangent_tol)
            if r > 0 and q_eq / f(r) <= knee]
    found = [(r, "free") for r in _merge(free)]
    if q_eq / f(params.rho_max) >= params.rho_max:
        found.append((params.rho_max, "saturated"))

    report = EquilibriumReport(q_eq=q_eq)
    for r, kind in sorted(found):
        report.roots.append(Equilibrium(
            rho=r, kind=kind, speed=f(r), flow=r * f(r),
            admissible=check_rho_eq_admissible(r, params),
            condition31=check_condition_31(r, params, n_samples).holds,
        ))
    return report


# ---------------------------------------------------------------------------
# stabilizability


@dataclass
class Condition31Report:
    holds: bool
    sufficient_test: bool
    n_samples: int
    witness_v: Optional[float] = None
    witness_product: Optional[float] = None


def condition31_product(v, rho_eq: float, params: ModelParams):
    c = params.c
    f_eq = params.f(rho_eq)
    return (v - params.f(rho_eq * (c + f_eq) / (c + v))) * (v - f_eq)


def check_condition_31(rho_eq: float, params: ModelParams,
                       n_samples: int = 100_000) -> Condition31Report:
    """Sampled sign test of the stabilizability inequality on ``[0, f(0)]``.

    Also reports the monotonicity criterion: ``F(rho) = rho (c + f(rho))``
    strictly increasing (``F' > 0`` on samples) on the relevant density
    interval is sufficient for the inequality.
    """
    if not rho_eq > 0:
        raise ValueError(f"rho_eq must be positive, got {rho_eq}")
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    c = params.c
    f_eq = params.f(rho_eq)
    v = np.linspace(0.0, params.v_max, n_samples)
    v = v[np.abs(v - f_eq) > 1e-9]
    prod = condition31_product(v, rho_eq, params)
    bad = np.flatnonzero(~(prod > 0))

    lo = rho_eq * (c + f_eq) / (c + params.v_max)
    hi = rho_eq * (c + f_eq) / c
    rho = np.linspace(lo, hi, n_samples)
    dF = c + params.f(rho) + rho * params.speed_law.derivative(rho)
    sufficient = bool(np.all(dF > 0))

    report = Condition31Report(holds=bad.size == 0, sufficient_test=sufficient,
                               n_samples=n_samples)
    if bad.size:
        report.witness_v = float(v[bad[0]])
        report.witness_product = float(prod[bad[0]])
    return report


def check_rho_eq_admissible(rho_eq: float, params: ModelParams) -> bool:
    """``rho_eq <= c / (c + f(rho_eq)) (rho_max - eps)``: the inlet stays unsaturated."""
    if not rho_eq > 0:
        raise ValueError(f"rho_eq must be positive, got {rho_eq}")
    c = params.c
    return rho_eq <= c / (c + params.f(rho_eq)) * params.saturation.knee


# ---------------------------------------------------------------------------
# run metrics and certificates


def x_metric(state: PhysicalState, rho_eq: float, params: ModelParams) -> float:
    """Sup-norm logarithmic deviation from the equilibrium ``(rho_eq, f(rho_eq))``."""
    rho, v = np.asarray(state.rho), np.asarray(state.v)
    if np.any(rho <= 0) or np.any(v <= 0):
        raise ValueError("x_metric needs strictly positive density and speed")
    f_eq = params.f(rho_eq)
    return float(np.max(np.abs(np.log(rho / rho_eq))) + np.max(np.abs(np.log(v / f_eq))))


@dataclass
class BoundCheck:
    name: str
    passed: bool
    first_violation: Optional[int] = None
    worst_excess: float = 0.0


@dataclass
class Certificate:
    checks: list[BoundCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> BoundCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def min_g0(bound: float, rho_eq: float, params: ModelParams, n: int = 257) -> float:
    """Smallest outlet target ``g(0, w)`` over ``|w| <= bound`` (sampled, ends included)."""
    c = params.c
    w = np.linspace(-bound, bound, n)
    return float(np.min(params.f(rho_eq * np.exp(w) * (c + params.f(rho_eq)) / c)))


def _check(name: str, excess: np.ndarray) -> BoundCheck:
    bad = np.flatnonzero(excess > 0)
    if bad.size == 0:
        return BoundCheck(name, True)
    return BoundCheck(name, False, int(bad[0]), float(excess.max()))


def certify_bounds(diag: RunDiagnostics, params: ModelParams, tol: float = 1e-10) -> Certificate:
    """Check the a-priori bounds of the scheme at every recorded step.

    * ``sup|w| <= max(B_t, sup|w0|)`` with ``B_t`` the running max of the
      applied inlet values;
    * ``v <= max(max v0, f(0))``;
    * ``v >= min(min v0, min{g(0, w): |w| <= max(B_t, sup|w0|)})``;
    * ``v >= 0``.
    """
    B = np.maximum.accumulate(np.abs(diag.inlet_w))
    w_bound = np.maximum(B, diag.sup_abs_w0)
    w_check = _check("w_sup", diag.sup_abs_w - w_bound - tol * np.maximum(1.0, w_bound))

    v_hi = max(diag.max_v0, params.v_max)
    upper = _check("v_upper", diag.max_v - v_hi - tol)

    # w_bound only grows; evaluate the sampled minimum where it changes
    lower_bound = np.empty_like(w_bound)
    cache: dict[float, float] = {}
    for k, wb in enumerate(w_bound):
        if wb not in cache:
            cache[wb] = min(diag.min_v0, min_g0(float(wb), diag.rho_eq, params))
        lower_bound[k] = cache[wb]
    lower = _check("v_lower", lower_bound - diag.min_v - tol)
    nonneg = _check("v_nonnegative", -diag.min_v)
    return Certificate([w_check, upper, lower, nonneg])


@dataclass
class WashoutReport:
    applicable: bool
    v_min: float = math.nan
    t_theory: float = math.nan
    t_observed: Optional[float] = None
    threshold: float = 0.0
    margin: float = 0.25
    passed: bool = False


def washout_v_min(sup_abs_w0: float, sup_abs_b0: float, rho_eq: float,
                  params: ModelParams) -> float:
    """Lower speed bound of a closed-loop run from the sizes of ``w0`` and ``ln(v0/f(rho_eq))``."""
    c = params.c
    f_eq = params.f(rho_eq)
    return min(f_eq * math.exp(-sup_abs_b0),
               params.f(rho_eq * math.exp(sup_abs_w0) * (c + f_eq) / c))


def washout_check(diag: RunDiagnostics, params: ModelParams, threshold: float = 1e-6,
                  margin: float = 0.25) -> WashoutReport:
    """Compare the first time ``sup|w|`` drops below ``threshold`` with ``1/v_min``.

    Only closed-loop runs hold the inlet value at zero; other runs yield a
    not-applicable report.
    """
    if diag.controller_kind != "closed_loop":
        return WashoutReport(applicable=False, threshold=threshold, margin=margin)
    v_min = washout_v_min(diag.sup_abs_w0, diag.sup_abs_b0, diag.rho_eq, params)
    t_theory = 1.0 / v_min
    below = np.flatnonzero(diag.sup_abs_w <= threshold)
    t_obs = float(diag.t[below[0]]) if below.size else None
    passed = t_obs is not None and t_obs <= t_theory * (1.0 + margin)
    return WashoutReport(applicable=True, v_min=v_min, t_theory=t_theory, t_observed=t_obs,
                         threshold=threshold, margin=margin, passed=passed)


# ---------------------------------------------------------------------------
# discrete Gronwall-type bound


@dataclass(frozen=True)
class GronwallInput:
    x0: float
    a: float
    b: float
    p: float
    c: float
    k: int

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        for name in ("x0", "a", "b", "p"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError(f"k must be a nonnegative integer, got {self.k}")


def gronwall_bound(inp: GronwallInput) -> float:
    """Bound on ``x(k)`` for ``x(j+1) <= max((1+a) x(j) + b, (1-c) x(j) + p)``."""
    return math.exp(inp.k * inp.a) * (inp.x0 + inp.p / (inp.a + inp.c) + inp.b * inp.k)


# ---------------------------------------------------------------------------
# grid refinement


@dataclass
class ConvergenceReport:
    N_list: list[int]
    differences: list[float]  # sup-difference between runs N_list[j] and N_list[j+1]
    ratios: list[float]
    orders: list[float]

    @property
    def exact(self) -> bool:
        """All resolutions produced identical profiles on the common nodes."""
        return all(d == 0 for d in self.differences)


def compare_on_common_nodes(coarse: PhysicalState, fine: PhysicalState) -> float:
    n_c = coarse.rho.size - 1
    n_f = fine.rho.size - 1
    stride = n_f // n_c
    return float(max(np.max(np.abs(fine.rho[::stride] - coarse.rho)),
                     np.max(np.abs(fine.v[::stride] - coarse.v))))


def convergence_order(run: Callable[[int], SimulationResult],
                      N_list: Sequence[int], workers: int = 1) -> ConvergenceReport:
    """Run ``run(N)`` for each resolution and compare final profiles.

    Resolutions must nest (each divides the next) so the coarse nodes are
    also fine nodes.
    """
    N_list = [int(n) for n in N_list]
    if len(N_list) < 2:
        raise ConfigurationError("need at least two resolutions")
    for a, b in zip(N_list, N_list[1:]):
        if not (b > a and b % a == 0):
            raise ConfigurationError(f"resolutions {a} and {b} do not nest")

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, N_list))
    else:
        results = [run(n) for n in N_list]
    finals = [r.final_physical() for r in results]
    diffs = [compare_on_common_nodes(a, b) for a, b in zip(finals, finals[1:])]
    ratios, orders = [], []
    for d0, d1 in zip(diffs, diffs[1:]):
        if d1 > 0:
            ratio = d0 / d1
        else:
            ratio = math.nan if d0 == 0 else math.inf
        ratios.append(ratio)
        orders.append(math.log2(ratio) if 0 < ratio < math.inf else math.nan)
    return ConvergenceReport(N_list=N_list, differences=diffs, ratios=ratios, orders=orders)
