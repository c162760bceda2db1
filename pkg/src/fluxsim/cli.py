"""Command-line front end: ``fluxsim {spectrum,gate,coherence,optimize} --config run.toml``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from fluxsim import circuits, io
from fluxsim.circuits import (
    CoupledParams,
    TunableEjParams,
    build_tunable_ec_hamiltonian,
    build_tunable_ej_hamiltonian,
    diagonalize,
    fock_to_grid,
    single_excitation_splitting,
    sweep_spectrum,
    tunable_ec_cross_section,
    tunable_ec_potential,
    tunable_ej_potential,
)
from fluxsim.coherence import (
    DerivativeError,
    coherence_report,
    coherence_vs_ej,
    extract_t1,
    fit_ej_scaling,
    sweep_coherence,
)
from fluxsim.config import ConfigError, RunConfig, load_config
from fluxsim.dynamics import IntegrationError, RateSchedule
from fluxsim.gates import gate_trajectory, simulate_gate, simulate_open_gate, single_qubit_model, two_qubit_model
from fluxsim.optimize import OptimizationProblem, grid_scan, refine
from fluxsim.tomography import GateTarget, process_matrix_report

logger = logging.getLogger("fluxsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _quick(cfg: RunConfig) -> RunConfig:
    """Reduced truncations for smoke runs."""
    if cfg.circuit is not None:
        cfg.circuit = cfg.circuit.replace(n_fock=min(cfg.circuit.n_fock, 60))
    if cfg.coupled is not None:
        cfg.coupled = dataclasses.replace(
            cfg.coupled,
            q1=cfg.coupled.q1.replace(n_fock=min(cfg.coupled.q1.n_fock, 30)),
            q2=cfg.coupled.q2.replace(n_fock=min(cfg.coupled.q2.n_fock, 30)),
        )
    if cfg.tunable_ec is not None:
        cfg.tunable_ec = cfg.tunable_ec.replace(n_fock_phi=min(cfg.tunable_ec.n_fock_phi, 30), n_charge_theta=min(cfg.tunable_ec.n_charge_theta, 8))
    cfg.coherence.n_levels = min(cfg.coherence.n_levels, 8)
    cfg.gate.trajectory_points = min(cfg.gate.trajectory_points, 51)
    cfg.gate.dt_track = max(cfg.gate.dt_track, 0.02)
    cfg.optimize.max_evals = min(cfg.optimize.max_evals, 40)
    cfg.optimize.vz_grid = min(cfg.optimize.vz_grid, 32)
    return cfg


def _require(obj, what: str, source: str):
    if obj is None:
        raise ConfigError(f"{source}: this command needs a [{what}] section")
    return obj


# ---------------------------------------------------------------------------
# spectrum
# ---------------------------------------------------------------------------


def cmd_spectrum(cfg: RunConfig, out: Path, workers: int) -> list[Path]:
    opts = cfg.spectrum
    files = []
    grid = opts.phi_grid
    if opts.kind == "tunable_ej":
        p = _require(cfg.circuit, "circuit", cfg.source)
        spec = diagonalize(build_tunable_ej_hamiltonian(p), opts.levels)
        files.append(io.write_csv(out / "potential.csv", ["phi", "V"], zip(grid, tunable_ej_potential(p, grid))))
        waves = np.array([fock_to_grid(spec.states[:, k], p.ec, p.el, p.phi_center, grid).real for k in range(opts.levels)])
        files.append(
            io.write_csv(out / "wavefunctions.csv", ["phi"] + [f"psi{k}" for k in range(opts.levels)], np.column_stack([grid, waves.T]))
        )
        files.append(io.write_csv(out / "levels.csv", ["level", "energy"], enumerate(spec.energies)))
        params = p
    elif opts.kind == "tunable_ec":
        p = _require(cfg.tunable_ec, "tunable_ec", cfg.source)
        spec = diagonalize(build_tunable_ec_hamiltonian(p), opts.levels)
        pot = tunable_ec_potential(p, grid, opts.theta)
        files.append(io.write_csv(out / "potential.csv", ["phi", "V"], zip(grid, pot)))
        waves = np.array([np.abs(tunable_ec_cross_section(p, spec.states[:, k], grid, opts.theta)) for k in range(opts.levels)])
        files.append(
            io.write_csv(out / "wavefunctions.csv", ["phi"] + [f"abs_psi{k}" for k in range(opts.levels)], np.column_stack([grid, waves.T]))
        )
        files.append(io.write_csv(out / "levels.csv", ["level", "energy"], enumerate(spec.energies)))
        params = p
    else:
        params = _require(cfg.coupled, "qubit1/qubit2", cfg.source)
        spec = diagonalize(circuits.build_coupled_hamiltonian(params, 10), opts.levels)
        files.append(io.write_csv(out / "levels.csv", ["level", "energy"], enumerate(spec.energies)))
    if opts.sweep is not None:
        table = sweep_spectrum(params, opts.sweep_field, opts.sweep, k=opts.levels, levels=10, workers=workers)
        files.append(io.write_csv(out / "sweep.csv", table.columns(), table.rows()))
        if opts.kind == "coupled":
            gaps = np.array([single_excitation_splitting(circuits.replace_field(params, opts.sweep_field, x)) for x in opts.sweep])
            files.append(io.write_csv(out / "splitting.csv", ["grid", "splitting_GHz"], zip(opts.sweep, gaps)))
            i = int(np.argmin(gaps))
            files.append(io.write_json(out / "summary.json", {"min_splitting_GHz": gaps[i], "at": opts.sweep[i], "field": opts.sweep_field}))
    return files


# ---------------------------------------------------------------------------
# gate
# ---------------------------------------------------------------------------


def _gate_model(cfg: RunConfig):
    pulse = _require(cfg.pulse, "pulse", cfg.source)
    g = cfg.gate
    if cfg.coupled is not None:
        return two_qubit_model(cfg.coupled, pulse, levels=g.levels or 4)
    p = _require(cfg.circuit, "circuit", cfg.source)
    return single_qubit_model(p, pulse, cfg.z_segments, levels=g.levels or 15)


def _open_rates(cfg: RunConfig, model):
    g = cfg.gate
    if cfg.coupled is not None:
        qubits = [cfg.coupled.q1, cfg.coupled.q2]
    else:
        qubits = [cfg.circuit]
    pulse = cfg.pulse
    if g.rate_schedule == "constant_light":
        t1s, tps = [], []
        for q in qubits:
            rep = coherence_report(q.with_ej(g.light_ej), cfg.noise, cfg.coherence.n_levels)
            t1s.append(rep.t1)
            tps.append(rep.t_phi)
        return RateSchedule.from_times(t1s, tps)
    grid = g.rate_grid
    if grid is None:
        grid = np.unique(np.concatenate([np.geomspace(pulse.amplitude, pulse.baseline, 12), [pulse.amplitude, pulse.baseline]]))
    relax, deph = [], []
    for q, ej in zip(qubits, model.ej_schedules):
        t1f, tpf = coherence_vs_ej(q, cfg.noise, grid, cfg.coherence.n_levels)
        relax.append(lambda t, ej=ej, f=t1f: 1.0 / f(float(ej(t))))
        deph.append(lambda t, ej=ej, f=tpf: 1.0 / f(float(ej(t))))
    return RateSchedule(relax, deph)


def _write_chi(out: Path, stem: str, report: dict) -> list[Path]:
    labels = report["labels"]
    return [
        io.write_matrix_csv(out / f"{stem}_abs.csv", labels, labels, report["abs_chi"], corner="chi"),
        io.write_matrix_csv(out / f"{stem}_deviation.csv", labels, labels, report["deviation"], corner="chi"),
    ]


def cmd_gate(cfg: RunConfig, out: Path, open_system: bool) -> list[Path]:
    target = GateTarget.named(cfg.gate.target)
    model = _gate_model(cfg)
    files = []
    t = time.perf_counter()
    res = simulate_gate(model, target)
    logger.info("closed-system gate took %.1f s", time.perf_counter() - t)
    summary = {"closed": res.summary(), "duration_ns": model.duration, "window_ns": list(model.window)}
    files += _write_chi(out, "chi_closed", process_matrix_report(res.process, target))
    if model.duration > 0:
        traj = gate_trajectory(model, cfg.gate.trajectory_initial, n=cfg.gate.trajectory_points)
        pops = traj.populations()
        header = ["t"] + [f"ej{q + 1}" for q in range(model.n_qubits)] + [f"p_{lab}" for lab in model.labels] + ["leakage"]
        cols = [traj.times[:, None], traj.ej, pops, traj.leakage[:, None]]
        if model.n_qubits == 1:
            fid = traj.state_fidelities()
            header += [f"F_{k}" for k in fid]
            cols.append(np.column_stack(list(fid.values())))
        files.append(io.write_csv(out / "trajectory.csv", header, np.column_stack(cols)))
    if open_system:
        rates = _open_rates(cfg, model)
        ores = simulate_open_gate(model, target, rates, dt_track=cfg.gate.dt_track)
        summary["open"] = ores.summary()
        summary["open"]["rate_schedule"] = cfg.gate.rate_schedule
        files += _write_chi(out, "chi_open", process_matrix_report(ores.process, target))
    files.append(io.write_json(out / "summary.json", summary))
    return files


# ---------------------------------------------------------------------------
# coherence
# ---------------------------------------------------------------------------


def cmd_coherence(cfg: RunConfig, out: Path, workers: int) -> list[Path]:
    c = cfg.coherence
    base = cfg.circuit or TunableEjParams(ec=0.25, el=0.5)
    envs = [cfg.noise.with_temperature(t) for t in c.temperatures]
    files = []
    if c.mode == "table":
        rows, records = [], []
        for wp in c.working_points:
            for env in envs:
                heavy = coherence_report(base.replace(phi_ext=wp).with_ej(c.ej_heavy), env, c.n_levels)
                light = coherence_report(base.replace(phi_ext=wp).with_ej(c.ej_light), env, c.n_levels)
                rows.append((wp, env.t_eff, heavy.t1 * 1e-9, heavy.t2 * 1e-3, light.t1 * 1e-3, light.t2 * 1e-3))
                records.append({"phi_ext": wp, "t_eff": env.t_eff, "heavy": heavy.as_dict(), "light": light.as_dict()})
        files.append(io.write_csv(out / "coherence_table.csv", ["phi_ext", "t_eff_mK", "T1_heavy_s", "T2_heavy_us", "T1_light_us", "T2_light_us"], rows))
        files.append(io.write_json(out / "coherence_table.json", {"rows": records}))
    elif c.mode == "sweep":
        table = sweep_coherence(base, c.sweep_field, c.sweep, envs, c.n_levels, workers=workers)
        files.append(io.write_csv(out / "coherence_sweep.csv", ["grid", "t_eff", "E01", "T1", "T_phi", "T2"], table))
    elif c.mode == "gamma":
        ejs = c.ej_grid if c.ej_grid is not None else np.arange(4.0, 12.01, 1.0)
        rows = []
        for env in envs:
            for ej in ejs:
                r = extract_t1(base.with_ej(ej), env, c.n_levels)
                rows.append((ej, env.t_eff, r.t1, r.lower_bound))
        arr = np.array(rows, dtype=float)
        used = arr[:, 3] == 0  # lower bounds would bias the slope
        fit = fit_ej_scaling(arr[used, 0], arr[used, 1], arr[used, 2])
        resid = np.full(len(arr), np.nan)
        resid[used] = fit.residuals
        files.append(io.write_csv(out / "gamma_samples.csv", ["ej", "t_eff", "T1", "lower_bound", "residual"], np.column_stack([arr, resid])))
        files.append(
            io.write_json(
                out / "gamma_fit.json",
                {"gamma": fit.gamma, "gamma_err": fit.gamma_err, "intercepts": fit.intercepts, "n_points": int(used.sum()), "n_excluded": int((~used).sum())},
            )
        )
    else:
        rep = coherence_report(base, envs[0], c.n_levels)
        files.append(io.write_json(out / "point.json", rep.as_dict()))
    return files


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------


def cmd_optimize(cfg: RunConfig, out: Path, workers: int) -> list[Path]:
    o = cfg.optimize
    circuit = cfg.coupled if cfg.coupled is not None else _require(cfg.circuit, "circuit", cfg.source)
    pulse = _require(cfg.pulse, "pulse", cfg.source)
    fixed = {"fwhm": pulse.fwhm, "l_flat": pulse.l_flat, "amplitude": pulse.amplitude, "baseline": pulse.baseline}
    bounds = {k: tuple(v) for k, v in o.bounds.items()}
    problem = OptimizationProblem(GateTarget.named(o.target), circuit, bounds, fixed, o.levels, o.tied_pulses, o.vz_grid)
    files = []
    start = {k: fixed[k] if k in fixed else _flux_start(circuit, k) for k in bounds}
    if o.x_values is not None and o.y_values is not None:
        inner = {o.inner: o.inner_values} if o.inner and o.inner_values is not None else None
        hm = grid_scan(problem, {o.x: o.x_values, o.y: o.y_values}, inner, workers=workers)
        files.append(io.write_matrix_csv(out / "heatmap.csv", hm.x, hm.y, hm.infidelity, corner=f"{o.x}\\{o.y}"))
        if hm.inner_name:
            files.append(io.write_matrix_csv(out / "heatmap_inner.csv", hm.x, hm.y, hm.best_inner, corner=f"{o.x}\\{o.y}"))
        start.update({k: v for k, v in hm.best.items() if k in bounds})
        grid_report = {"grid_best": hm.best, "grid_best_infidelity": hm.best_infidelity}
    else:
        grid_report = {}
    report = {"start": start, **grid_report}
    if o.refine and bounds:
        res = refine(problem, start, xatol=o.xatol, max_evals=o.max_evals)
        names = list(bounds)
        files.append(io.write_csv(out / "refine_log.csv", names + ["infidelity"], res.as_rows(names)))
        report.update(best=res.best, best_infidelity=res.best_infidelity, converged=res.converged, evaluations=res.n_evaluations, clipped=res.clipped)
    files.append(io.write_json(out / "best.json", report))
    return files


def _flux_start(circuit, key: str) -> float:
    if isinstance(circuit, CoupledParams):
        return circuit.q1.phi_ext if key == "phi_ext1" else circuit.q2.phi_ext
    return circuit.phi_ext


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fluxsim", description="Flux-pulse gates and coherence of tunable fluxonium qubits.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("spectrum", "energy levels, wavefunctions and flux sweeps"),
        ("gate", "gate simulation, process tomography and fidelity"),
        ("coherence", "T1/T2 tables, sweeps and the E_J scaling fit"),
        ("optimize", "pulse grid scan and simplex refinement"),
    ]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=None, help="output directory (default: config 'output' or ./out)")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1, help="worker processes for sweeps and scans (default: all cores)")
        p.add_argument("--open-system", action="store_true", help="also run the Lindblad gate model")
        p.add_argument("--quick", action="store_true", help="reduced truncations for smoke tests")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.quick:
            cfg = _quick(cfg)
        out = Path(args.out or cfg.output or "out")
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "spectrum":
            files = cmd_spectrum(cfg, out, args.workers)
        elif args.command == "gate":
            files = cmd_gate(cfg, out, args.open_system)
        elif args.command == "coherence":
            files = cmd_coherence(cfg, out, args.workers)
        else:
            files = cmd_optimize(cfg, out, args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, DerivativeError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        # parameter combinations rejected by the library (e.g. unreachable E_J) are configuration problems
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for f in files:
        print(f)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
