#!/usr/bin/env python3
"""
Command-line entry point.

    dmftqsim greens     one impurity solve at fixed (U, V) with reference series
    dmftqsim dmft       full self-consistency loop
    dmftqsim sweep-u    self-consistent Z over a list of U values
    dmftqsim matsubara  fictitious-temperature Z on a ladder of Trotter steps
    dmftqsim calibrate  readout calibration and one zero-noise extrapolation

Every command writes CSV/JSON files and a resolved_config.yaml into --out.
Configuration errors exit with status 2, other failures with 1; a loop that
does not converge still exits 0 with converged=false recorded.
"""

import argparse
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .analysis import AnalysisError, fit_time_series, qp_weight_matsubara, spectral_analysis, \
    write_matsubara_csv, write_spectra_csv
from .circuits import CircuitError, fold_evolution, interferometry_circuit, trotterized_evolution
from .config import ConfigError, RunConfig, resolve_config, write_resolved_config
from .dmft import DmftError, DmftTrace, calibration_for, run_to_self_consistency, \
    solve_impurity, write_history_csv
from .ground_state import GroundStateError, exact_ground_state, prepare_ground_state
from .greens import GreensError, GreensSeries, exact_greens_series, exact_trotter_series, \
    write_greens_csv
from .mitigation import MitigationError, calibrate_readout, zero_noise_extrapolate
from .model import ModelError
from .output import write_csv, write_json
from .statevector import SimulationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2

DOMAIN_ERRORS = (AnalysisError, CircuitError, DmftError, GreensError, GroundStateError,
                 MitigationError, ModelError, SimulationError)


def _out_dir(config: RunConfig) -> Path:
    path = Path(config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _reference_series(config: RunConfig, v: float) -> List[GreensSeries]:
    p = config.parameters(0.0 if v < config.v_cutoff else v)
    state = exact_ground_state(p)[1]
    times = config.dt * np.arange(config.n_steps + 1)
    return [exact_greens_series(p, times, state), exact_trotter_series(p, config.n_steps, config.dt, state)]


def cmd_greens(config: RunConfig) -> List[Path]:
    """Solve once at (u, v_initial); write greens.csv, fit.json and optionally spectra."""
    out = _out_dir(config)
    p = config.parameters(config.v_initial)
    series, exact_path, flags = solve_impurity(config, p, config.seed, calibration_for(config))
    series_list = [series]
    if config.emit_references:
        series_list += [s for s in _reference_series(config, p.v) if s.provenance != series.provenance]
    written = [out / "greens.csv", out / "fit.json"]
    write_greens_csv(written[0], series_list)

    fit = fit_time_series(series, config.dt)
    p_used = p.with_v(0.0) if exact_path else p
    write_json(written[1], {**fit.to_dict(), "provenance": series.provenance.value,
                            "exact_path": exact_path, "flags": flags})
    if config.emit_spectra:
        written.append(out / "spectra.csv")
        write_spectra_csv(written[-1], spectral_analysis(fit, p_used, config.omegas(), config.delta))
    if config.emit_circuit_dump:
        prep, _ = prepare_ground_state(p_used, v_cutoff=config.v_cutoff, tolerance=config.ansatz_tolerance,
                                       max_evals=config.ansatz_max_evals, seed=config.seed)
        circuit = interferometry_circuit(prep, trotterized_evolution(p_used, config.n_steps, config.dt), "X", "X")
        written.append(out / "circuit.txt")
        written[-1].write_text(circuit.dump())
    logger.info(f"Green's function at U={config.u} V={config.v_initial}: {fit}")
    return written


def _trace_summary(trace: DmftTrace) -> Dict[str, object]:
    return {
        "converged": trace.converged,
        "final_v": trace.final_v,
        "final_z": trace.records[-1].z if trace.records else math.nan,
        "iterations": trace.iterations,
        "fixed_point_residual": trace.fixed_point_residual,
    }


def cmd_dmft(config: RunConfig) -> List[Path]:
    """Run the loop; write dmft_history.csv, summary.json and final spectra.csv."""
    out = _out_dir(config)
    trace = run_to_self_consistency(config.dmft_config())
    written = [out / "dmft_history.csv", out / "summary.json"]
    write_history_csv(written[0], trace)
    write_json(written[1], _trace_summary(trace))
    if config.emit_spectra and trace.records:
        last = trace.records[-1]
        p = config.parameters(0.0 if last.exact_path else last.v_in)
        written.append(out / "spectra.csv")
        write_spectra_csv(written[-1], spectral_analysis(last.fit, p, config.omegas(), config.delta))
    if not trace.converged:
        logger.warning("Loop did not converge; converged=false recorded in summary.json")
    return written


def _sweep_point(config: RunConfig, u: float, index: int) -> Tuple[float, int, Optional[DmftTrace]]:
    combo = config.combinations[index]
    point = config.dmft_config(u=u, solver=combo.solver, z_method=combo.z_method)
    try:
        trace = run_to_self_consistency(point)
    except DOMAIN_ERRORS as e:
        logger.error(f"Sweep point U={u} {combo.label} failed: {e}")
        return u, index, None
    point_dir = Path(config.out) / f"u_{u:g}" / combo.label
    write_history_csv(point_dir / "dmft_history.csv", trace)
    return u, index, trace


def cmd_sweep_u(config: RunConfig, jobs: int = 1) -> List[Path]:
    """Self-consistent Z for every (U, combination); write z_vs_u.csv."""
    out = _out_dir(config)
    tasks = [(u, i) for u in config.u_values for i in range(len(config.combinations))]
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        results = list(pool.map(lambda task: _sweep_point(config, *task), tasks))

    traces = {(u, i): trace for u, i, trace in results}
    labels = [c.label for c in config.combinations]
    rows = []
    failures = []
    for u in config.u_values:
        row: List[object] = [u]
        for i, label in enumerate(labels):
            trace = traces[(u, i)]
            if trace is None or not trace.records:
                failures.append({"u": u, "combination": label})
                row.append(math.nan)
            else:
                row.append(trace.records[-1].z)
        rows.append(row)
    written = [out / "z_vs_u.csv", out / "sweep_summary.json"]
    write_csv(written[0], ["u"] + [f"z_{label}" for label in labels], rows)
    summary = {
        "failures": failures,
        "points": [
            {"u": u, "combination": labels[i], **_trace_summary(trace)}
            for (u, i), trace in sorted(traces.items()) if trace is not None
        ],
    }
    write_json(written[1], summary)
    return written


def cmd_matsubara(config: RunConfig) -> List[Path]:
    """
    Matsubara data at (u, v_initial) for each Trotter step in dt_values over
    total_time, with deviations from the exact-propagation fit on the same grid.
    """
    out = _out_dir(config)
    p = config.parameters(config.v_initial)
    state = exact_ground_state(p)[1]
    written: List[Path] = []
    summary = []
    for dt in config.dt_values:
        n_steps = max(4, int(round(config.total_time / dt)))
        times = dt * np.arange(n_steps + 1)
        exact_fit = fit_time_series(exact_greens_series(p, times, state), dt)
        trotter_fit = fit_time_series(exact_trotter_series(p, n_steps, dt, state), dt)
        reference = qp_weight_matsubara(exact_fit, config.temperatures, p.mu_eff, p.v, p.eps1_minus_mu)
        result = qp_weight_matsubara(trotter_fit, config.temperatures, p.mu_eff, p.v, p.eps1_minus_mu)
        path = out / f"matsubara_dt{dt:g}.csv"
        write_matsubara_csv(path, result, reference)
        written.append(path)
        summary.append({"dt": dt, "n_steps": n_steps, "z_trotter": result.estimate.z,
                        "z_exact": reference.estimate.z, "fit": trotter_fit.to_dict()})
        logger.info(f"dt={dt}: Z={result.estimate.z:.6f} (exact fit {reference.estimate.z:.6f})")

    exact_path = out / "matsubara_exact.csv"
    dense_dt = min(config.dt_values)
    dense_times = dense_dt * np.arange(max(4, int(round(config.total_time / dense_dt))) + 1)
    dense_fit = fit_time_series(exact_greens_series(p, dense_times, state), dense_dt)
    write_matsubara_csv(exact_path,
                        qp_weight_matsubara(dense_fit, config.temperatures, p.mu_eff, p.v, p.eps1_minus_mu))
    written += [exact_path, out / "matsubara_summary.json"]
    write_json(written[-1], {"ladder": summary})
    return written


def cmd_calibrate(config: RunConfig) -> List[Path]:
    """Readout calibration plus a fold sweep of one interferometry cell."""
    out = _out_dir(config)
    noise = config.noise_model()
    calibration = calibrate_readout(noise, config.calibration_shots, seed=config.seed)
    written = [out / "calibration.json", out / "extrapolation.csv"]
    write_json(written[0], calibration.to_dict())

    p = config.parameters(config.v_initial)
    prep, _ = prepare_ground_state(p, v_cutoff=config.v_cutoff, tolerance=config.ansatz_tolerance,
                                   max_evals=config.ansatz_max_evals, seed=config.seed)
    evolution = trotterized_evolution(p, config.n_steps, config.dt)

    def build(folds: int):
        return interferometry_circuit(prep, fold_evolution(evolution, p, config.dt, folds), "X", "X")

    fit = zero_noise_extrapolate(build, config.zne_folds, "X", config.shots, noise, seed=config.seed,
                                 calibration=calibration if config.readout_mitigation else None)
    fitted = fit.fitted or [math.nan] * len(fit.folds)
    write_csv(written[1], ["k", "raw", "fitted"], zip(fit.folds, fit.raw, fitted))
    logger.info(f"Extrapolated <X> = {fit.extrapolated:.6f} (decay per fold {fit.decay:.4g})")
    return written


COMMANDS: Dict[str, Callable[..., List[Path]]] = {
    "greens": cmd_greens,
    "dmft": cmd_dmft,
    "sweep-u": cmd_sweep_u,
    "matsubara": cmd_matsubara,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmftqsim",
        description="Two-site DMFT with a simulated quantum impurity solver",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument(
        "command",
        choices=sorted(COMMANDS),
        help="What to run"
    )
    parser.add_argument(
        "--config",
        default=None,
        help="YAML configuration file"
    )
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override one configuration key (repeatable)"
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Master seed (falls back to the config, then DMFTQSIM_SEED, then 0)"
    )
    parser.add_argument(
        "--jobs",
        type=int,
        default=1,
        help="Concurrent sweep points"
    )
    parser.add_argument(
        "--out",
        default=None,
        help="Output directory (overrides the config's out)"
    )
    parser.add_argument(
        "--verbose",
        action="store_true",
        help="Debug logging"
    )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parse arguments, run one command and return the exit status."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    if args.jobs < 1:
        logger.error(f"--jobs must be at least 1, got {args.jobs}")
        return EXIT_CONFIG

    try:
        config = resolve_config(args.config, args.overrides, seed=args.seed, out=args.out,
                                command=args.command)
        write_resolved_config(config)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    try:
        if args.command == "sweep-u":
            written = cmd_sweep_u(config, jobs=args.jobs)
        else:
            written = COMMANDS[args.command](config)
    except DOMAIN_ERRORS as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_FAILURE
    except OSError as e:
        logger.error(f"Cannot write outputs: {e}")
        return EXIT_FAILURE

    for path in written:
        logger.info(f"Wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
