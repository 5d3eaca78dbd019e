"""Initial profiles on [0, 1]: constants, smooth-step mixtures and the worked example."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import ModelParams, SmoothStep


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, x: float) -> float:
        return self.value


@dataclass(frozen=True)
class StepMixture:
    """Piecewise-constant levels joined by smooth steps.

    ``levels[0]`` holds left of the first window; crossing window
    ``windows[j] = (lo, hi)`` moves the value from ``levels[j]`` to
    ``levels[j + 1]``.
    """

    levels: tuple[float, ...]
    windows: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.levels) != len(self.windows) + 1:
            raise ValueError("need exactly one more level than windows")
        prev_hi = float("-inf")
        for lo, hi in self.windows:
            if not (prev_hi <= lo < hi):
                raise ValueError(f"windows must be ordered and non-overlapping, got {self.windows}")
            prev_hi = hi

    @classmethod
    def build(cls, levels: Sequence[float], windows: Sequence[Sequence[float]]) -> "StepMixture":
        return cls(tuple(float(v) for v in levels),
                   tuple((float(lo), float(hi)) for lo, hi in windows))

    def __call__(self, x: float) -> float:
        value = self.levels[0]
        for j, (lo, hi) in enumerate(self.windows):
            if x <= lo:
                break
            value += (self.levels[j + 1] - self.levels[j]) * SmoothStep(lo, hi).scalar(x)
        return value


@dataclass(frozen=True)
class OnDiagram:
    """Speed profile lying on the fundamental diagram: ``v0(x) = f(rho0(x))``."""

    rho0: object
    params: ModelParams

    def __call__(self, x: float) -> float:
        return self.params.f(self.rho0(x))


def section4_rho0() -> StepMixture:
    """Density 1 on [0, 9/20], 2 on [1/2, 1], smooth transition in between."""
    return StepMixture.build([1.0, 2.0], [(9 / 20, 1 / 2)])


def section4_profiles(params: ModelParams) -> tuple[StepMixture, OnDiagram]:
    rho0 = section4_rho0()
    return rho0, OnDiagram(rho0, params)


def equilibrium_profiles(rho_eq: float, params: ModelParams) -> tuple[Constant, Constant]:
    return Constant(rho_eq), Constant(params.f(rho_eq))
