"""Physical model: speed law, saturation map, Riemann transform and boundary maps.

All quantities are dimensionless and live on the unit road segment [0, 1].
Functions accept Python floats or numpy arrays unless noted otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

ArrayLike = Union[float, np.ndarray]

# below this distance to an endpoint the smooth step is pinned to its limit
_ENDPOINT_GUARD = 1e-300


@dataclass(frozen=True)
class SmoothStep:
    """C-infinity step rising from 0 at ``lo`` to 1 at ``hi``.

    Inside ``(lo, hi)`` the value is
    ``exp(-1/(s-lo)) / (exp(-1/(s-lo)) + exp(-1/(hi-s)))``, evaluated in the
    equivalent logistic form ``1 / (1 + exp(1/(s-lo) - 1/(hi-s)))`` so that
    narrow windows do not produce ``0/0``.
    """

    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"SmoothStep needs lo < hi, got lo={self.lo}, hi={self.hi}")

    def scalar(self, s: float) -> float:
        a = s - self.lo
        b = self.hi - s
        if a <= _ENDPOINT_GUARD:
            return 0.0
        if b <= _ENDPOINT_GUARD:
            return 1.0
        z = 1.0 / a - 1.0 / b
        if z > 709.0:
            return 0.0
        return 1.0 / (1.0 + math.exp(z))

    def __call__(self, s: ArrayLike) -> ArrayLike:
        if np.ndim(s) == 0:
            return self.scalar(float(s))
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        out[s - self.lo > _ENDPOINT_GUARD] = 1.0
        inside = (s - self.lo > _ENDPOINT_GUARD) & (self.hi - s > _ENDPOINT_GUARD)
        a = s[inside] - self.lo
        b = self.hi - s[inside]
        z = np.minimum(1.0 / a - 1.0 / b, 709.0)
        vals = 1.0 / (1.0 + np.exp(z))
        vals[z >= 709.0] = 0.0
        out[inside] = vals
        return out


@dataclass(frozen=True)
class Underwood:
    """Underwood fundamental diagram ``f(rho) = A exp(-b rho)``."""

    A: float
    b: float
    kind = "underwood"

    def __post_init__(self):
        if not (self.A > 0 and self.b > 0):
            raise ValueError(f"Underwood law needs A > 0 and b > 0, got A={self.A}, b={self.b}")

    @property
    def v_max(self) -> float:
        return self.A

    def __call__(self, rho: ArrayLike) -> ArrayLike:
        if isinstance(rho, float) or np.ndim(rho) == 0:
            return self.A * math.exp(-self.b * float(rho))
        return self.A * np.exp(-self.b * np.asarray(rho, dtype=float))

    def derivative(self, rho: ArrayLike) -> ArrayLike:
        return -self.b * self(rho)


@dataclass(frozen=True)
class ConstantSpeed:
    """Density-independent speed law; a degenerate but admissible diagram."""

    value: float
    kind = "constant"

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError(f"constant speed must be positive, got {self.value}")

    @property
    def v_max(self) -> float:
        return self.value

    def __call__(self, rho: ArrayLike) -> ArrayLike:
        if np.ndim(rho) == 0:
            return self.value
        return np.full(np.shape(rho), self.value)

    def derivative(self, rho: ArrayLike) -> ArrayLike:
        if np.ndim(rho) == 0:
            return 0.0
        return np.zeros(np.shape(rho))


SpeedLaw = Union[Underwood, ConstantSpeed]


@dataclass(frozen=True)
class SaturationMap:
    """Smooth clamp: identity on ``[0, rho_max - eps]``, ``rho_max`` from ``rho_max`` on."""

    rho_max: float
    eps: float

    def __post_init__(self):
        if not self.rho_max > 0:
            raise ValueError(f"rho_max must be positive, got {self.rho_max}")
        if not 0 < self.eps < self.rho_max:
            raise ValueError(f"eps must lie in (0, rho_max), got {self.eps}")

    @property
    def knee(self) -> float:
        return self.rho_max - self.eps

    @property
    def blend(self) -> SmoothStep:
        return SmoothStep(self.knee, self.rho_max)

    def scalar(self, s: float) -> float:
        if s <= self.knee:
            return s
        if s >= self.rho_max:
            return self.rho_max
        g = self.blend.scalar(s)
        return s * (1.0 - g) + self.rho_max * g

    def __call__(self, s: ArrayLike) -> ArrayLike:
        if np.ndim(s) == 0:
            return self.scalar(float(s))
        s = np.asarray(s, dtype=float)
        out = s.copy()
        out[s >= self.rho_max] = self.rho_max
        window = (s > self.knee) & (s < self.rho_max)
        if window.any():
            g = self.blend(s[window])
            out[window] = s[window] * (1.0 - g) + self.rho_max * g
        return out

    def derivative(self, s: float) -> float:
        """Slope of the map at ``s`` (central difference inside the blend window)."""
        if s < self.knee or s > self.rho_max:
            return 1.0 if s < self.knee else 0.0
        d = self.eps * 1e-4
        return (self.scalar(s + d) - self.scalar(s - d)) / (2 * d)


@dataclass(frozen=True)
class ModelParams:
    """Model constants.

    Attributes:
        c: backward characteristic speed of the velocity equation.
        mu: relaxation rate of the outlet speed towards the fundamental diagram.
        speed_law: fundamental diagram ``f``.
        saturation: inlet saturation map ``h``.
    """

    c: float
    mu: float
    speed_law: SpeedLaw
    saturation: SaturationMap

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if not self.mu >= 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")

    @property
    def v_max(self) -> float:
        return self.speed_law.v_max

    @property
    def rho_max(self) -> float:
        return self.saturation.rho_max

    def f(self, rho: ArrayLike) -> ArrayLike:
        return self.speed_law(rho)

    def h(self, s: ArrayLike) -> ArrayLike:
        return self.saturation(s)


def section4_params() -> ModelParams:
    """Constants of the worked example: f(rho) = 0.4 exp(1 - rho), c=5, mu=10."""
    return ModelParams(
        c=5.0,
        mu=10.0,
        speed_law=Underwood(A=0.4 * math.e, b=1.0),
        saturation=SaturationMap(rho_max=2.7, eps=1e-6),
    )


@dataclass
class PhysicalState:
    rho: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if self.rho.shape != self.v.shape:
            raise ValueError("rho and v must have the same length")


@dataclass
class RiemannState:
    """Nodal Riemann coordinates ``(w, v)`` around the reference density ``rho_eq``.

    ``carry`` is the rounding compensation of the outlet speed update.
    """

    w: np.ndarray
    v: np.ndarray
    t: float
    rho_eq: float
    carry: float = 0.0

    def __post_init__(self):
        if self.w.shape != self.v.shape:
            raise ValueError("w and v must have the same length")

    def to_physical(self, params: ModelParams) -> PhysicalState:
        rho = physical_from_riemann(self.w, self.v, params, self.rho_eq)
        return PhysicalState(rho=rho, v=self.v.copy(), t=self.t)


def speed(law: SpeedLaw, rho: ArrayLike) -> ArrayLike:
    if np.any(np.asarray(rho) < 0):
        raise ValueError("density must be nonnegative")
    return law(rho)


def saturate(sat: SaturationMap, s: ArrayLike) -> ArrayLike:
    if np.any(np.asarray(s) < 0):
        raise ValueError("saturation argument must be nonnegative")
    return sat(s)


def riemann_from_physical(rho: ArrayLike, v: ArrayLike, params: ModelParams,
                          rho_eq: float) -> ArrayLike:
    """``w = ln(rho (c + v) / (rho_eq (c + f(rho_eq))))``."""
    if np.any(np.asarray(rho) <= 0):
        raise ValueError("density must be strictly positive")
    c = params.c
    scale = rho_eq * (c + params.f(rho_eq))
    return np.log(np.multiply(rho, c + np.asarray(v)) / scale)


def physical_from_riemann(w: ArrayLike, v: ArrayLike, params: ModelParams,
                          rho_eq: float) -> ArrayLike:
    c = params.c
    return rho_eq * np.exp(w) * (c + params.f(rho_eq)) / (c + np.asarray(v))


def inlet_map(v: float, q: float, params: ModelParams, rho_eq: float,
              f_eq: Optional[float] = None) -> float:
    """Boundary value of ``w`` at the inlet for inlet speed ``v`` and demand ``q``.

    ``v = 0`` uses the saturated branch so the map is total. ``f_eq`` may be
    passed to skip re-evaluating ``f(rho_eq)``.
    """
    c = params.c
    if f_eq is None:
        f_eq = params.f(rho_eq)
    denom = rho_eq * (c + f_eq)
    if v > 0:
        rho_in = params.saturation.scalar(q / v)
    else:
        rho_in = params.rho_max
    return math.log(rho_in * (c + v) / denom)


def outlet_relax(v: float, w: float, params: ModelParams, rho_eq: float,
                 f_eq: Optional[float] = None) -> float:
    """Speed the outlet relaxes towards: f of the density reconstructed from (w, v)."""
    c = params.c
    if f_eq is None:
        f_eq = params.f(rho_eq)
    rho = rho_eq * math.exp(w) * (c + f_eq) / (c + v)
    return params.f(rho)
