"""Scenario files: a line-based ``section.key = value`` format.

Grammar::

    file     := { line }
    line     := blank | comment | entry
    comment  := "#" any-text
    entry    := section "." key "=" value [ comment ]
    section  := "model" | "initial" | "controller" | "numerics" | "output"

Values are numbers, bare words, comma-separated number lists, or
comma-separated ``lo:hi`` windows.  Recognized keys::

    model.c, model.mu, model.rho_max, model.eps
    model.speed_law = underwood | constant
    model.A, model.b                  (underwood)
    model.value                       (constant)

    initial.preset = section4 | equilibrium | custom
    initial.rho_eq                    (equilibrium)
    initial.rho_levels, initial.rho_windows            (custom)
    initial.v_mode = diagram | custom                  (custom)
    initial.v_levels, initial.v_windows                (custom, v_mode = custom)

    controller.type = open_loop | closed_loop | blended
    controller.q, controller.rho_eq   (open_loop; rho_eq is the reference)
    controller.rho_eq                 (closed_loop)
    controller.a, controller.b, controller.T_blend, controller.rho_eq  (blended)

    numerics.N, numerics.T, numerics.snapshot_times
    output.directory, output.prefix   (optional)

Every physics field must be given explicitly; unknown or repeated keys are
errors.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .control import Blended, ClosedLoop, ControllerSpec, OpenLoopConstant
from .errors import ConfigurationError
from .model import ConstantSpeed, ModelParams, SaturationMap, Underwood
from .profiles import (Constant, OnDiagram, StepMixture, equilibrium_profiles,
                       section4_profiles)
from .scheme import SimulationResult, simulate

BUNDLED = ("section4_closedloop", "section4_openloop", "equilibrium")
ALIASES = {"section4": "section4_closedloop"}
SUFFIX = ".scn"

_ENTRY = re.compile(r"^([A-Za-z_]\w*)\.([A-Za-z_]\w*)\s*=\s*(.*?)\s*$")


class ScenarioError(ConfigurationError):
    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(field)
        super().__init__(f"{', '.join(where)}: {message}" if where else message)


@dataclass(frozen=True)
class InitialSpec:
    preset: str
    rho_eq: Optional[float] = None
    rho_mixture: Optional[StepMixture] = None
    v_mixture: Optional[StepMixture] = None

    def profiles(self, params: ModelParams):
        if self.preset == "section4":
            return section4_profiles(params)
        if self.preset == "equilibrium":
            return equilibrium_profiles(self.rho_eq, params)
        rho0 = self.rho_mixture
        v0 = self.v_mixture if self.v_mixture is not None else OnDiagram(rho0, params)
        return rho0, v0


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    params: ModelParams
    initial: InitialSpec
    controller: ControllerSpec
    N: int
    T: float
    snapshot_times: tuple[float, ...] = ()
    directory: Optional[str] = None
    prefix: str = ""
    source: Optional[str] = field(default=None, compare=False)

    def profiles(self):
        return self.initial.profiles(self.params)

    def run(self, N: Optional[int] = None, T: Optional[float] = None,
            snapshot_times=None) -> SimulationResult:
        rho0, v0 = self.profiles()
        T = self.T if T is None else T
        times = self.snapshot_times if snapshot_times is None else snapshot_times
        return simulate(self.params, rho0, v0, self.controller, T,
                        self.N if N is None else N,
                        snapshot_times=[t for t in times if t <= T])


class _Entries:
    """Parsed key/value pairs with line numbers; tracks which ones were used."""

    def __init__(self, text: str):
        self.items: dict[str, tuple[str, int]] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            m = _ENTRY.match(line)
            if m is None:
                raise ScenarioError(f"expected 'section.key = value', got {raw.strip()!r}",
                                    line=lineno)
            section, key, value = m.groups()
            path = f"{section}.{key}"
            if value == "":
                raise ScenarioError("missing value", line=lineno, field=path)
            if path in self.items:
                raise ScenarioError(f"duplicate key (first set on line {self.items[path][1]})",
                                    line=lineno, field=path)
            self.items[path] = (value, lineno)
        self.used: set[str] = set()

    def has(self, path: str) -> bool:
        return path in self.items

    def line(self, path: str) -> Optional[int]:
        return self.items[path][1] if path in self.items else None

    def raw(self, path: str) -> str:
        if path not in self.items:
            raise ScenarioError("required key is missing", field=path)
        self.used.add(path)
        return self.items[path][0]

    def word(self, path: str, choices: tuple[str, ...]) -> str:
        value = self.raw(path)
        if value not in choices:
            raise ScenarioError(f"expected one of {', '.join(choices)}, got {value!r}",
                                line=self.line(path), field=path)
        return value

    def number(self, path: str, check=None, rule: str = "") -> float:
        value = _to_float(self.raw(path), self.line(path), path)
        if check is not None and not check(value):
            raise ScenarioError(f"must be {rule}, got {value!r}", line=self.line(path),
                                field=path)
        return value

    def integer(self, path: str, minimum: int = 1) -> int:
        text = self.raw(path)
        try:
            value = int(text)
        except ValueError:
            raise ScenarioError(f"expected an integer, got {text!r}", line=self.line(path),
                                field=path) from None
        if value < minimum:
            raise ScenarioError(f"must be >= {minimum}, got {value}", line=self.line(path),
                                field=path)
        return value

    def numbers(self, path: str) -> list[float]:
        text = self.raw(path)
        return [_to_float(part.strip(), self.line(path), path)
                for part in text.split(",") if part.strip()]

    def windows(self, path: str) -> list[tuple[float, float]]:
        out = []
        for part in self.raw(path).split(","):
            bits = part.split(":")
            if len(bits) != 2:
                raise ScenarioError(f"expected 'lo:hi', got {part.strip()!r}",
                                    line=self.line(path), field=path)
            out.append((_to_float(bits[0].strip(), self.line(path), path),
                        _to_float(bits[1].strip(), self.line(path), path)))
        return out

    def unused(self) -> list[str]:
        return [p for p in self.items if p not in self.used]


def _to_float(text: str, line: Optional[int], path: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ScenarioError(f"expected a number, got {text!r}", line=line, field=path) from None
    if not math.isfinite(value):
        raise ScenarioError(f"expected a finite number, got {text!r}", line=line, field=path)
    return value


def _positive(x):
    return x > 0


def _model(e: _Entries) -> ModelParams:
    c = e.number("model.c", _positive, "> 0")
    mu = e.number("model.mu", lambda x: x >= 0, ">= 0")
    rho_max = e.number("model.rho_max", _positive, "> 0")
    eps = e.number("model.eps", lambda x: 0 < x < rho_max, "in (0, model.rho_max)")
    law = e.word("model.speed_law", ("underwood", "constant"))
    if law == "underwood":
        speed_law = Underwood(A=e.number("model.A", _positive, "> 0"),
                              b=e.number("model.b", _positive, "> 0"))
    else:
        speed_law = ConstantSpeed(e.number("model.value", _positive, "> 0"))
    return ModelParams(c=c, mu=mu, speed_law=speed_law,
                       saturation=SaturationMap(rho_max=rho_max, eps=eps))


def _mixture(e: _Entries, levels_key: str, windows_key: str) -> StepMixture:
    levels = e.numbers(levels_key)
    windows = e.windows(windows_key) if e.has(windows_key) else []
    if any(not lv > 0 for lv in levels):
        raise ScenarioError("levels must be positive", line=e.line(levels_key), field=levels_key)
    if any(not (0 <= lo < hi <= 1) for lo, hi in windows):
        raise ScenarioError("windows must satisfy 0 <= lo < hi <= 1", line=e.line(windows_key),
                            field=windows_key)
    try:
        return StepMixture.build(levels, windows)
    except ValueError as exc:
        raise ScenarioError(str(exc), line=e.line(levels_key), field=levels_key) from None


def _initial(e: _Entries) -> InitialSpec:
    preset = e.word("initial.preset", ("section4", "equilibrium", "custom"))
    if preset == "section4":
        return InitialSpec("section4")
    if preset == "equilibrium":
        return InitialSpec("equilibrium", rho_eq=e.number("initial.rho_eq", _positive, "> 0"))
    rho = _mixture(e, "initial.rho_levels", "initial.rho_windows")
    mode = e.word("initial.v_mode", ("diagram", "custom"))
    v = _mixture(e, "initial.v_levels", "initial.v_windows") if mode == "custom" else None
    return InitialSpec("custom", rho_mixture=rho, v_mixture=v)


def _controller(e: _Entries) -> ControllerSpec:
    kind = e.word("controller.type", ("open_loop", "closed_loop", "blended"))
    rho_eq = e.number("controller.rho_eq", _positive, "> 0")
    if kind == "open_loop":
        return OpenLoopConstant(q_eq=e.number("controller.q", _positive, "> 0"), rho_eq=rho_eq)
    if kind == "closed_loop":
        return ClosedLoop(rho_eq=rho_eq)
    a = e.number("controller.a", _positive, "> 0")
    b = e.number("controller.b")
    T_blend = e.number("controller.T_blend", _positive, "> 0")
    if not a + b * T_blend > 0:
        raise ScenarioError("controller.a + controller.b * controller.T_blend must be positive",
                            line=e.line("controller.b"), field="controller.b")
    return Blended(a_lin=a, b_lin=b, T_blend=T_blend, rho_eq=rho_eq)


def parse_scenario(text: str, name: str = "scenario", source: Optional[str] = None) -> ScenarioConfig:
    e = _Entries(text)
    try:
        params = _model(e)
        initial = _initial(e)
        controller = _controller(e)
    except ScenarioError:
        raise
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    N = e.integer("numerics.N")
    if not N > params.mu / params.c:
        raise ScenarioError(f"must exceed model.mu / model.c = {params.mu / params.c:g}",
                            line=e.line("numerics.N"), field="numerics.N")
    T = e.number("numerics.T", _positive, "> 0")
    snaps: tuple[float, ...] = ()
    if e.has("numerics.snapshot_times"):
        snaps = tuple(e.numbers("numerics.snapshot_times"))
        if any(not 0 <= t <= T for t in snaps):
            raise ScenarioError("snapshot times must lie in [0, numerics.T]",
                                line=e.line("numerics.snapshot_times"),
                                field="numerics.snapshot_times")
    directory = e.raw("output.directory") if e.has("output.directory") else None
    prefix = e.raw("output.prefix") if e.has("output.prefix") else ""

    leftover = e.unused()
    if leftover:
        path = leftover[0]
        raise ScenarioError("unknown key", line=e.line(path), field=path)
    return ScenarioConfig(name=name, params=params, initial=initial, controller=controller,
                          N=N, T=T, snapshot_times=snaps, directory=directory, prefix=prefix,
                          source=source)


def bundled_text(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in BUNDLED:
        raise ConfigurationError(f"no bundled scenario named {name!r}")
    return resources.files("trafficwave").joinpath("scenarios", name + SUFFIX).read_text("utf-8")


def load_scenario(ref: Union[str, Path]) -> ScenarioConfig:
    """Load a scenario from a file path or by bundled name (``section4`` etc.)."""
    path = Path(ref)
    if path.is_file():
        return parse_scenario(path.read_text(encoding="utf-8"), name=path.stem, source=str(path))
    name = ALIASES.get(str(ref), str(ref))
    if name in BUNDLED:
        return parse_scenario(bundled_text(name), name=name, source=f"bundled:{name}")
    raise ConfigurationError(f"scenario {ref!r} is neither a file nor a bundled name "
                             f"({', '.join(BUNDLED + tuple(ALIASES))})")
