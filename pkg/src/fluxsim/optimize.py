"""Derivative-free pulse optimisation: grid scans and bounded simplex refinement."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from fluxsim.circuits import CoupledParams, TunableEjParams
from fluxsim.gates import simulate_gate, single_qubit_model, two_qubit_model
from fluxsim.pulses import FlatTopGaussianPulse
from fluxsim.tomography import GateTarget

logger = logging.getLogger(__name__)

PULSE_KEYS = ("fwhm", "l_flat", "amplitude", "baseline")


@dataclass(frozen=True)
class OptimizationProblem:
    """Gate target, circuit and which pulse/flux parameters are free.

    ``bounds`` maps free parameter names to ``(lo, hi)``. Valid names are the
    pulse keys ``fwhm``, ``l_flat``, ``amplitude``; ``phi_ext`` for one qubit;
    ``phi_ext1``/``phi_ext2`` for two qubits; and, with ``tied_pulses=False``,
    ``fwhm2``, ``l_flat2``, ``amplitude2`` for the second qubit's pulse.
    ``fixed`` supplies the remaining pulse values.
    """

    target: GateTarget
    circuit: TunableEjParams | CoupledParams
    bounds: Mapping[str, tuple[float, float]]
    fixed: Mapping[str, float] = field(default_factory=lambda: {"fwhm": 8.0, "l_flat": 2.0, "amplitude": 1.0, "baseline": 12.0})
    levels: int | None = None
    tied_pulses: bool = True
    vz_grid: int = 64

    def __post_init__(self):
        two = isinstance(self.circuit, CoupledParams)
        if two != (self.target.n_qubits == 2):
            raise ValueError("target and circuit describe different numbers of qubits")
        allowed = set(PULSE_KEYS[:3]) | ({"phi_ext1", "phi_ext2"} if two else {"phi_ext"})
        if two and not self.tied_pulses:
            allowed |= {"fwhm2", "l_flat2", "amplitude2"}
        for k, (lo, hi) in self.bounds.items():
            if k not in allowed:
                raise ValueError(f"unknown free parameter {k!r}; allowed: {sorted(allowed)}")
            if not lo < hi:
                raise ValueError(f"empty bounds for {k!r}")
        if "amplitude" in self.bounds:
            base = self.fixed.get("baseline", 12.0)
            ej_min = self.circuit.q1.ej_max * self.circuit.q1.d if two else self.circuit.ej_max * self.circuit.d
            if self.bounds["amplitude"][0] < ej_min or self.bounds["amplitude"][1] > base:
                raise ValueError(f"amplitude bounds must lie within the reachable E_J range [{ej_min:g}, {base:g}]")

    @property
    def names(self) -> list[str]:
        return list(self.bounds)

    def point(self, values: Mapping[str, float]) -> dict:
        p = {k: float(v) for k, v in self.fixed.items()}
        p.update({k: float(v) for k, v in values.items()})
        return p

    def build(self, values: Mapping[str, float]):
        p = self.point(values)
        base = p.get("baseline", 12.0)
        pulse = FlatTopGaussianPulse(p["fwhm"], p["l_flat"], base, p["amplitude"])
        if isinstance(self.circuit, CoupledParams):
            c = self.circuit
            c = dataclasses.replace(
                c,
                q1=c.q1.replace(phi_ext=p.get("phi_ext1", c.q1.phi_ext)),
                q2=c.q2.replace(phi_ext=p.get("phi_ext2", c.q2.phi_ext)),
            )
            if self.tied_pulses:
                pulses = pulse
            else:
                pulses = (
                    pulse,
                    FlatTopGaussianPulse(
                        p.get("fwhm2", p["fwhm"]), p.get("l_flat2", p["l_flat"]), base, p.get("amplitude2", p["amplitude"])
                    ),
                )
            return two_qubit_model(c, pulses, levels=self.levels or 4)
        circuit = self.circuit.replace(phi_ext=p.get("phi_ext", self.circuit.phi_ext))
        return single_qubit_model(circuit, pulse, levels=self.levels or 15)

    def infidelity(self, values: Mapping[str, float]) -> float:
        """``1 - F_C`` after virtual-Z correction; 1.0 for parameter sets that define no pulse."""
        try:
            model = self.build(values)
        except ValueError as exc:
            logger.info("invalid point %s: %s", dict(values), exc)
            return 1.0
        return float(simulate_gate(model, self.target, grid=self.vz_grid).infidelity)


@dataclass(frozen=True, eq=False)
class HeatmapResult:
    axes: tuple[str, str]
    x: np.ndarray
    y: np.ndarray
    inner_name: str | None
    inner_values: np.ndarray
    infidelity: np.ndarray  # (len(x), len(y)), minimised over the inner grid
    best_inner: np.ndarray

    @property
    def best(self) -> dict:
        i, j = np.unravel_index(np.argmin(self.infidelity), self.infidelity.shape)
        out = {self.axes[0]: float(self.x[i]), self.axes[1]: float(self.y[j])}
        if self.inner_name is not None:
            out[self.inner_name] = float(self.best_inner[i, j])
        return out

    @property
    def best_infidelity(self) -> float:
        return float(self.infidelity.min())


def _eval(args):
    problem, values = args
    return problem.infidelity(values)


def grid_scan(
    problem: OptimizationProblem,
    axes: Mapping[str, Sequence[float]],
    inner: Mapping[str, Sequence[float]] | None = None,
    workers: int = 1,
) -> HeatmapResult:
    """Infidelity on a 2-d grid, minimised over an optional inner parameter grid.

    ``axes`` must name exactly two parameters, e.g. ``{"fwhm": [...],
    "amplitude": [...]}``; ``inner`` at most one, e.g. ``{"l_flat": [...]}``.
    Parameters may be free or fixed in ``problem``.
    """
    if len(axes) != 2:
        raise ValueError("grid_scan needs exactly two axes")
    (nx, xs), (ny, ys) = ((k, np.asarray(v, dtype=float)) for k, v in axes.items())
    if xs.size == 0 or ys.size == 0:
        raise ValueError("grid axes must be non-empty")
    inner = dict(inner or {})
    if len(inner) > 1:
        raise ValueError("at most one inner parameter")
    ni, zs = (next(iter(inner.items())) if inner else (None, [None]))
    zs = np.asarray(zs, dtype=float) if ni else np.array([np.nan])
    jobs = []
    for x in xs:
        for y in ys:
            for z in zs:
                v = {nx: x, ny: y}
                if ni:
                    v[ni] = z
                jobs.append((problem, v))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(_eval, jobs))
    else:
        vals = [_eval(j) for j in jobs]
    cube = np.array(vals).reshape(len(xs), len(ys), len(zs))
    k = np.argmin(cube, axis=2)
    return HeatmapResult((nx, ny), xs, ys, ni, zs, cube.min(axis=2), zs[k])


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    best: dict
    best_infidelity: float
    log: list[tuple[dict, float]]
    converged: bool
    clipped: bool = False
    n_evaluations: int = 0

    def as_rows(self, names: Sequence[str]) -> list[list[float]]:
        return [[p[n] for n in names] + [f] for p, f in self.log]


def refine(
    problem: OptimizationProblem | None,
    start: Mapping[str, float],
    xatol: float = 1e-4,
    max_evals: int = 500,
    initial_step: float = 0.05,
    objective: Callable[[Mapping[str, float]], float] | None = None,
    bounds: Mapping[str, tuple[float, float]] | None = None,
) -> OptimizationResult:
    """Bounded Nelder-Mead on parameters rescaled to the unit box.

    Stops when the simplex shrinks below ``xatol`` in the rescaled
    coordinates or after ``max_evals`` objective calls. Points outside the
    bounds are clipped (and the result flagged when the start was). The
    returned point is the best in the log, so it is never worse than the start.
    ``objective``/``bounds`` replace the gate problem for plain functions.
    """
    if objective is None:
        if problem is None:
            raise ValueError("need a problem or an objective")
        objective = problem.infidelity
        bounds = problem.bounds
    if bounds is None:
        raise ValueError("bounds required with a plain objective")
    names = list(bounds)
    lo = np.array([bounds[k][0] for k in names], dtype=float)
    hi = np.array([bounds[k][1] for k in names], dtype=float)
    x0 = np.array([start[k] for k in names], dtype=float)
    clipped = bool(np.any((x0 < lo) | (x0 > hi)))
    if clipped:
        logger.warning("start point outside bounds; clipped")
    u0 = (np.clip(x0, lo, hi) - lo) / (hi - lo)
    log: list[tuple[dict, float]] = []
    seen: dict[tuple, float] = {}

    def f(u):
        uc = np.clip(u, 0.0, 1.0)
        x = lo + uc * (hi - lo)
        key = tuple(x)
        if key in seen:  # clipping and the simplex start revisit points
            return seen[key]
        point = dict(zip(names, (float(v) for v in x)))
        val = seen[key] = float(objective(point))
        log.append((point, val))
        return val

    f(u0)
    simplex = [u0]
    for i in range(len(names)):
        v = u0.copy()
        v[i] = v[i] + initial_step if v[i] + initial_step <= 1 else v[i] - initial_step
        simplex.append(v)
    res = minimize(
        f,
        u0,
        method="Nelder-Mead",
        options={"xatol": xatol, "fatol": np.inf, "maxfev": max_evals, "initial_simplex": np.array(simplex)},
    )
    best_point, best_val = min(log, key=lambda r: r[1])
    return OptimizationResult(
        best=best_point,
        best_infidelity=best_val,
        log=log,
        converged=bool(res.success),
        clipped=clipped,
        n_evaluations=len(log),
    )
