"""Inlet-demand controllers and initial-data compatibility checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Union

from .model import ModelParams, SmoothStep


def feedback_q(v0: float, rho_eq: float, params: ModelParams) -> float:
    """Stabilizing inlet demand; only the inlet speed is measured."""
    c = params.c
    return rho_eq * v0 * (c + params.f(rho_eq)) / (c + v0)


@dataclass(frozen=True)
class OpenLoopConstant:
    """Constant demand ``q_eq``; ``rho_eq`` is only the reference for diagnostics."""

    q_eq: float
    rho_eq: float
    kind = "open_loop"

    def __post_init__(self):
        if not self.q_eq > 0:
            raise ValueError(f"q_eq must be positive, got {self.q_eq}")
        if not self.rho_eq > 0:
            raise ValueError(f"rho_eq must be positive, got {self.rho_eq}")

    def demand(self, t: float, v0: float, params: ModelParams) -> float:
        return self.q_eq


@dataclass(frozen=True)
class ClosedLoop:
    rho_eq: float
    kind = "closed_loop"

    def __post_init__(self):
        if not self.rho_eq > 0:
            raise ValueError(f"rho_eq must be positive, got {self.rho_eq}")

    def demand(self, t: float, v0: float, params: ModelParams) -> float:
        return feedback_q(v0, self.rho_eq, params)


@dataclass(frozen=True)
class Blended:
    """Linear ramp ``a_lin + b_lin t`` handed over smoothly to the feedback law.

    The ramp matches whatever compatibility conditions the initial data
    satisfy; after ``T_blend`` the controller is exactly ``feedback_q``.
    """

    a_lin: float
    b_lin: float
    T_blend: float
    rho_eq: float
    kind = "blended"

    def __post_init__(self):
        if not self.T_blend > 0:
            raise ValueError(f"T_blend must be positive, got {self.T_blend}")
        if not self.a_lin > 0:
            raise ValueError(f"a_lin must be positive, got {self.a_lin}")
        if not self.a_lin + self.b_lin * self.T_blend > 0:
            raise ValueError("a_lin + b_lin*T_blend must be positive")
        if not self.rho_eq > 0:
            raise ValueError(f"rho_eq must be positive, got {self.rho_eq}")

    def demand(self, t: float, v0: float, params: ModelParams) -> float:
        return blended_q(t, v0, self, params)


ControllerSpec = Union[OpenLoopConstant, ClosedLoop, Blended]
DemandFn = Callable[[float, float], float]


def blended_q(t: float, v0: float, spec: Blended, params: ModelParams) -> float:
    g = SmoothStep(0.0, spec.T_blend).scalar(t)
    if g == 0.0:
        return spec.a_lin + spec.b_lin * t
    if g == 1.0:
        return feedback_q(v0, spec.rho_eq, params)
    return (1.0 - g) * (spec.a_lin + spec.b_lin * t) + g * feedback_q(v0, spec.rho_eq, params)


def demand_function(spec: ControllerSpec, params: ModelParams) -> DemandFn:
    """Bind a controller to model constants, giving ``q(t, v_inlet)``."""
    return lambda t, v0: spec.demand(t, v0, params)


@dataclass
class CompatibilityReport:
    """Outcome of the closed-loop compatibility test at the inlet.

    ``residuals`` holds the defects of the zeroth- and first-order conditions.
    When they fail, ``suggestion`` is a :class:`Blended` controller whose ramp
    satisfies the general compatibility relations instead.
    """

    theorem31_ok: bool
    residuals: tuple[float, float]
    tolerance: float
    a_lin: Optional[float] = None
    b_lin: Optional[float] = None
    suggestion: Optional[Blended] = None


def _one_sided_derivative(fn: Callable[[float], float], step: float) -> float:
    # second-order forward stencil, written in differences so constants give 0 exactly
    f0 = fn(0.0)
    return (4.0 * (fn(step) - f0) - (fn(2.0 * step) - f0)) / (2.0 * step)


def _invert_saturation(target: float, params: ModelParams) -> float:
    """Smallest s with h(s) = target, for 0 < target <= rho_max."""
    sat = params.saturation
    if target <= sat.knee:
        return target
    if target >= sat.rho_max:
        return sat.rho_max
    lo, hi = sat.knee, sat.rho_max
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sat.scalar(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def check_compatibility(rho0: Callable[[float], float], v0: Callable[[float], float],
                        rho_eq: float, params: ModelParams, probe: float = 1e-6,
                        tol: float = 1e-8, T_blend: float = 1.0) -> CompatibilityReport:
    c = params.c
    r0, u0 = rho0(0.0), v0(0.0)
    dr = _one_sided_derivative(rho0, probe)
    du = _one_sided_derivative(v0, probe)

    res0 = abs(r0 - rho_eq * (c + params.f(rho_eq)) / (c + u0))
    res1 = abs(dr + r0 * du / (c + u0))
    ok = res0 <= tol and res1 <= tol
    report = CompatibilityReport(theorem31_ok=ok, residuals=(res0, res1), tolerance=tol)
    if ok:
        return report

    # rho0(0) = h(a/v0(0)) and
    # v0 rho0' + rho0 v0' = (a c v0' - b v0) h'(a/v0) / v0^2
    s = _invert_saturation(min(r0, params.rho_max), params)
    a_lin = s * u0
    slope = params.saturation.derivative(s)
    lhs = u0 * dr + r0 * du
    if slope > 0:
        b_lin = (a_lin * c * du - lhs * u0 ** 2 / slope) / u0
    else:
        b_lin = 0.0
    report.a_lin, report.b_lin = a_lin, b_lin

    T = T_blend
    while a_lin + b_lin * T <= 0 and T > 1e-12:
        T *= 0.5
    if a_lin > 0 and a_lin + b_lin * T > 0:
        report.suggestion = Blended(a_lin=a_lin, b_lin=b_lin, T_blend=T, rho_eq=rho_eq)
    return report
