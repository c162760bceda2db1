"""Run configuration: a TOML file validated into dataclasses before any computation.

Unknown sections or keys are rejected with the line they appear on.
"""

from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from fluxsim.circuits import CoupledParams, TunableEcParams, TunableEjParams
from fluxsim.coherence import NoiseEnvironment
from fluxsim.pulses import FlatTopGaussianPulse, ZDetuneSegment


class ConfigError(ValueError):
    pass


class _Lines:
    """Maps ``(table path, key)`` to the line where the key is written."""

    _header = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*(#.*)?$")
    _key = re.compile(r"^\s*([A-Za-z0-9_\-\.\"']+)\s*=")

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple[str, str], int] = {}
        self.tables: dict[str, int] = {}
        table = ""
        for i, line in enumerate(text.splitlines(), start=1):
            m = self._header.match(line)
            if m:
                table = m.group(1).replace('"', "").replace("'", "")
                self.tables.setdefault(table, i)
                continue
            m = self._key.match(line)
            if m:
                key = m.group(1).strip("\"'")
                self.lines.setdefault((table, key), i)

    def where(self, table: str, key: str | None = None) -> str:
        n = self.tables.get(table) if key is None else self.lines.get((table, key), self.tables.get(table))
        return f"{self.source}:{n}" if n else self.source


def _grid(value, where: str) -> np.ndarray:
    """A list of numbers or a ``{start, stop, num}`` table."""
    if isinstance(value, dict):
        extra = set(value) - {"start", "stop", "num"}
        if extra or not {"start", "stop", "num"} <= set(value):
            raise ConfigError(f"{where}: grid tables need exactly start, stop, num")
        out = np.linspace(float(value["start"]), float(value["stop"]), int(value["num"]))
    elif isinstance(value, list):
        out = np.asarray(value, dtype=float)
    else:
        raise ConfigError(f"{where}: expected a list or a {{start, stop, num}} table")
    if out.size == 0:
        raise ConfigError(f"{where}: grid is empty")
    return out


def _build(cls, table: dict, name: str, lines: _Lines, grids: tuple[str, ...] = ()):
    fields = {f.name for f in dataclasses.fields(cls) if f.init}
    for key in table:
        if key not in fields:
            raise ConfigError(f"{lines.where(name, key)}: unknown key {key!r} in [{name}]; allowed: {', '.join(sorted(fields))}")
    kwargs = {}
    for key, value in table.items():
        kwargs[key] = _grid(value, lines.where(name, key)) if key in grids else value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{lines.where(name)}: invalid [{name}]: {exc}") from None


def _circuit(cls, table: dict, name: str, lines: _Lines):
    """Circuit table; an ``ej`` key sets ``phi_dc`` to reach that Josephson energy."""
    table = dict(table)
    ej = table.pop("ej", None)
    if ej is not None and "phi_dc" in table:
        raise ConfigError(f"{lines.where(name, 'ej')}: give either ej or phi_dc in [{name}], not both")
    p = _build(cls, table, name, lines)
    if ej is None:
        return p
    try:
        return p.with_ej(float(ej))
    except ValueError as exc:
        raise ConfigError(f"{lines.where(name, 'ej')}: {exc}") from None


@dataclass
class SpectrumOptions:
    kind: str = "tunable_ej"  # tunable_ej | tunable_ec | coupled
    levels: int = 6
    phi_grid: Any = field(default_factory=lambda: {"start": -3 * np.pi, "stop": 3 * np.pi, "num": 401})
    sweep_field: str | None = None
    sweep: Any = None
    theta: float = 0.0

    def __post_init__(self):
        if self.kind not in ("tunable_ej", "tunable_ec", "coupled"):
            raise ValueError("kind must be tunable_ej, tunable_ec or coupled")
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if (self.sweep is None) != (self.sweep_field is None):
            raise ValueError("sweep and sweep_field go together")


@dataclass
class GateOptions:
    target: str = "X_pi"
    levels: int | None = None
    trajectory_initial: str = "0"
    trajectory_points: int = 201
    rate_schedule: str = "time_dependent"  # time_dependent | constant_light
    light_ej: float = 1.0
    rate_grid: Any = None
    dt_track: float = 0.01

    def __post_init__(self):
        if self.rate_schedule not in ("time_dependent", "constant_light"):
            raise ValueError("rate_schedule must be time_dependent or constant_light")
        if self.trajectory_points < 2:
            raise ValueError("trajectory_points must be >= 2")


@dataclass
class CoherenceOptions:
    mode: str = "table"  # table | sweep | gamma | point
    n_levels: int = 16
    temperatures: list = field(default_factory=lambda: [60.0, 70.0])
    working_points: list = field(default_factory=lambda: [0.495, 0.44])
    ej_heavy: float = 12.0
    ej_light: float = 1.0
    sweep_field: str = "phi_ext"
    sweep: Any = None
    ej_grid: Any = None

    def __post_init__(self):
        if self.mode not in ("table", "sweep", "gamma", "point"):
            raise ValueError("mode must be table, sweep, gamma or point")
        if self.n_levels < 4:
            raise ValueError("n_levels must be >= 4")
        if not self.temperatures:
            raise ValueError("temperatures must be non-empty")
        if self.mode == "sweep" and self.sweep is None:
            raise ValueError("sweep mode needs a sweep grid")


@dataclass
class OptimizeOptions:
    target: str = "X_pi"
    bounds: dict = field(default_factory=dict)
    x: str = "fwhm"
    x_values: Any = None
    y: str = "amplitude"
    y_values: Any = None
    inner: str | None = None
    inner_values: Any = None
    refine: bool = True
    max_evals: int = 500
    xatol: float = 1e-4
    levels: int | None = None
    vz_grid: int = 64
    tied_pulses: bool = True


@dataclass
class RunConfig:
    source: str
    circuit: TunableEjParams | None = None
    coupled: CoupledParams | None = None
    tunable_ec: TunableEcParams | None = None
    pulse: FlatTopGaussianPulse | None = None
    z_segments: list = field(default_factory=list)
    noise: NoiseEnvironment = field(default_factory=NoiseEnvironment)
    spectrum: SpectrumOptions = field(default_factory=SpectrumOptions)
    gate: GateOptions = field(default_factory=GateOptions)
    coherence: CoherenceOptions = field(default_factory=CoherenceOptions)
    optimize: OptimizeOptions = field(default_factory=OptimizeOptions)
    output: str | None = None


SECTIONS = (
    "circuit",
    "qubit1",
    "qubit2",
    "coupling",
    "tunable_ec",
    "pulse",
    "z_segment",
    "noise",
    "spectrum",
    "gate",
    "coherence",
    "optimize",
)


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    lines = _Lines(text, source)
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    for key, value in data.items():
        if key == "output":
            continue
        if key not in SECTIONS:
            raise ConfigError(f"{lines.where(key) if key in lines.tables else lines.where('', key)}: unknown section {key!r}")
        if key == "z_segment":
            if not isinstance(value, list):
                raise ConfigError(f"{lines.where(key)}: use [[z_segment]] tables")
        elif not isinstance(value, dict):
            raise ConfigError(f"{lines.where('', key)}: {key!r} must be a table")

    cfg = RunConfig(source=source, output=data.get("output"))
    if "circuit" in data:
        cfg.circuit = _circuit(TunableEjParams, data["circuit"], "circuit", lines)
    if "qubit1" in data or "qubit2" in data or "coupling" in data:
        missing = [s for s in ("qubit1", "qubit2") if s not in data]
        if missing:
            raise ConfigError(f"{source}: two-qubit runs need [{'] and ['.join(missing)}]")
        q1 = _circuit(TunableEjParams, data["qubit1"], "qubit1", lines)
        q2 = _circuit(TunableEjParams, data["qubit2"], "qubit2", lines)
        coupling = data.get("coupling", {})
        for key in coupling:
            if key != "ec_g":
                raise ConfigError(f"{lines.where('coupling', key)}: unknown key {key!r} in [coupling]; allowed: ec_g")
        try:
            cfg.coupled = CoupledParams(q1, q2, **coupling)
        except ValueError as exc:
            raise ConfigError(f"{lines.where('coupling')}: {exc}") from None
    if "tunable_ec" in data:
        cfg.tunable_ec = _circuit(TunableEcParams, data["tunable_ec"], "tunable_ec", lines)
    if "pulse" in data:
        cfg.pulse = _build(FlatTopGaussianPulse, data["pulse"], "pulse", lines)
    for seg in data.get("z_segment", []):
        cfg.z_segments.append(_build(ZDetuneSegment, seg, "z_segment", lines))
    if "noise" in data:
        cfg.noise = _build(NoiseEnvironment, data["noise"], "noise", lines)
    if "spectrum" in data:
        cfg.spectrum = _build(SpectrumOptions, data["spectrum"], "spectrum", lines, grids=("phi_grid", "sweep"))
    if not isinstance(cfg.spectrum.phi_grid, np.ndarray):
        cfg.spectrum.phi_grid = _grid(cfg.spectrum.phi_grid, lines.where("spectrum", "phi_grid"))
    if "gate" in data:
        cfg.gate = _build(GateOptions, data["gate"], "gate", lines, grids=("rate_grid",))
    if "coherence" in data:
        cfg.coherence = _build(CoherenceOptions, data["coherence"], "coherence", lines, grids=("sweep", "ej_grid"))
    if "optimize" in data:
        cfg.optimize = _build(OptimizeOptions, data["optimize"], "optimize", lines, grids=("x_values", "y_values", "inner_values"))
        for k, v in cfg.optimize.bounds.items():
            if not (isinstance(v, list) and len(v) == 2):
                raise ConfigError(f"{lines.where('optimize', 'bounds')}: bounds.{k} must be [lo, hi]")
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))
