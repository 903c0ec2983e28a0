import argparse
import logging
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from .guardrails import NumericalFailure, PreconditionError, condition_limit, worker_count
from .logging_setup import setup_logging
from .scenario import Scenario, ScenarioError, load_scenario
from .types import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, EXIT_PRECONDITION

logger = logging.getLogger("emcomm")

COMMANDS = ["pws", "channel", "optimize", "modes", "report"]
DEFAULT_GRID_PER_LAMBDA = 4.0
STRUCTURAL_FLAG = "structural scattering"
# flag only when S_StSc carries at least this share of ‖H_S‖ at Γ_S = 0
STRUCTURAL_SHARE = 1e-2

_EPILOG = """\
commands:
  pws       plane-wave spectrum, propagation and sampling spacing of the 'field' section
  channel   H_Z, H_S and H_CT of the 'network' section at the scenario RIS loads
            (matched loads, Γ_S = 0, when none are given); flags "structural scattering"
            when Γ_S = 0 and the RIS re-radiation is at least 1% of ‖H_S‖
  optimize  reactive-load optimization of the 'network' section ('optimize' settings)
  modes     eigenmodes and NeDoF of the 'surfaces' section
  report    eigenvalue table ('surfaces') and coupling-vs-interdistance sweep ('sweep')

environment:
  LOG_LEVEL         logging level (default INFO)
  EMCOMM_WORKERS    worker pool size for sweeps and multi-start (default 1)
  EMCOMM_COND_MAX   condition number treated as singular (default 1e12)

exit status:
  0 success, 2 configuration error, 3 numerical failure, 4 precondition violation
"""


@dataclass(frozen=True)
class RunConfig:
    command: str
    scenario: str
    out: str
    epsilon: float | None = None
    eta: float | None = None
    neumann_order: int | None = None
    grid_per_lambda: float | None = None
    seed: int | None = None

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ScenarioError(f"unknown command {self.command!r}")
        if self.epsilon is not None and not (0.0 < self.epsilon <= 1.0):
            raise ScenarioError(f"--epsilon must lie in (0, 1], got {self.epsilon}")
        if self.eta is not None and not (0.0 < self.eta < 1.0):
            raise ScenarioError(f"--eta must lie in (0, 1), got {self.eta}")
        if self.neumann_order is not None and self.neumann_order < 0:
            raise ScenarioError(f"--neumann-order must be >= 0, got {self.neumann_order}")
        if self.grid_per_lambda is not None and not (
            math.isfinite(self.grid_per_lambda) and self.grid_per_lambda >= 4.0
        ):
            raise ScenarioError(
                f"--grid-per-lambda must be >= 4 (spacing <= λ/4), got {self.grid_per_lambda}"
            )
        if self.seed is not None and self.seed < 0:
            raise ScenarioError(f"--seed must be >= 0, got {self.seed}")


def _base_config(cfg: RunConfig, scenario: Scenario) -> dict[str, Any]:
    resolved = asdict(cfg)
    resolved.pop("out")
    resolved["seed"] = cfg.seed if cfg.seed is not None else scenario.seed
    resolved["wavelength"] = scenario.wavelength
    resolved["z0"] = scenario.z0
    resolved["workers"] = worker_count()
    resolved["cond_max"] = condition_limit()
    return resolved


def _write(out: Path, name: str, cfg: dict[str, Any], scenario: Scenario, payload: dict[str, Any]) -> None:
    from .reporting import envelope, write_json

    write_json(out / name, envelope(cfg["command"], cfg, scenario.sha256, payload))


def _write_table(out: Path, name: str, frame: pd.DataFrame, cfg: dict[str, Any], scenario: Scenario) -> None:
    from .reporting import csv_metadata, write_csv

    write_csv(out / name, frame, csv_metadata(cfg["command"], cfg, scenario.sha256))


def cmd_pws(cfg: RunConfig, scenario: Scenario, out: Path) -> None:
    from .wavefield import (
        DEFAULT_ETA,
        field_to_frame,
        periodic_design,
        power_split,
        propagate,
        sample_plane_waves,
        sampling_spacing,
        spectrum_of,
    )

    f = scenario.require("wavefield")
    resolved = _base_config(cfg, scenario)
    eta = cfg.eta if cfg.eta is not None else (f.eta if f.eta is not None else DEFAULT_ETA)
    z_obs = f.observe_z if f.observe_z is not None else scenario.wavelength
    resolved.update({"eta": eta, "observe_z": z_obs, "nx": f.nx, "ny": f.ny, "spacing": f.spacing})

    grid = sample_plane_waves(list(f.waves), f.nx, f.ny, f.spacing, f.spacing, scenario.wavelength)
    spectrum = spectrum_of(grid)
    field = propagate(spectrum, z_obs)
    prop, evan = power_split(spectrum)
    step_x, step_y = sampling_spacing(z_obs, eta, grid.kappa)

    kxx, kyy = np.meshgrid(spectrum.kx, spectrum.ky, indexing="ij")
    _write_table(
        out,
        "pws_spectrum.csv",
        pd.DataFrame(
            {
                "kx": kxx.ravel(),
                "ky": kyy.ravel(),
                "Re(Ex)": spectrum.e_hat_x.real.ravel(),
                "Im(Ex)": spectrum.e_hat_x.imag.ravel(),
                "Re(Ey)": spectrum.e_hat_y.real.ravel(),
                "Im(Ey)": spectrum.e_hat_y.imag.ravel(),
                "Re(Ez)": spectrum.e_hat_z.real.ravel(),
                "Im(Ez)": spectrum.e_hat_z.imag.ravel(),
                "propagating": spectrum.propagating_mask.ravel().astype(int),
                "flagged": spectrum.flagged.ravel().astype(int),
            }
        ),
        resolved,
        scenario,
    )
    _write_table(out, "pws_field.csv", field_to_frame(field), resolved, scenario)
    payload: dict[str, Any] = {
        "source_grid": grid.metadata(),
        "observed_grid": field.metadata(),
        "propagating_power": prop,
        "evanescent_power": evan,
        "sampling_spacing": [step_x, step_y],
        "divergence_residual": spectrum.divergence_residual(),
        "flagged_bins": int(np.count_nonzero(spectrum.flagged)),
    }
    if f.periodic is not None:
        theta_i, theta_r, delta = f.periodic
        payload["periodic_design"] = periodic_design(theta_i, theta_r, delta, scenario.wavelength).to_dict()
    _write(out, "pws.json", resolved, scenario, payload)


def cmd_channel(cfg: RunConfig, scenario: Scenario, out: Path) -> None:
    from .guardrails import relative_error
    from .metasurface import build_blocks, gamma_from_loads
    from .multiport import (
        assemble_with_environment,
        channel_ct_from_scattering,
        channel_scattering,
        fold_environment,
        structural_scattering,
        z_to_s,
    )
    from .reporting import matrix_frame

    net = scenario.require("network")
    resolved = _base_config(cfg, scenario)
    z0 = net.z0
    blocks = build_blocks(net)
    folded = fold_environment(blocks).blocks
    n_s = folded.n_s
    loads = scenario.ris_loads if scenario.ris_loads is not None else np.full(n_s, complex(z0))
    resolved["ris_loads"] = loads
    resolved["direct_link"] = net.direct_link
    z_s = np.diag(loads)

    h_z = assemble_with_environment(blocks, z_s, z0)
    s_blocks = z_to_s(folded, z0)
    gamma = gamma_from_loads(z_s, z0) if n_s else np.zeros((0, 0), dtype=complex)
    h_s = channel_scattering(s_blocks, gamma)
    h_ct = channel_ct_from_scattering(s_blocks, gamma)
    s_stsc = structural_scattering(folded, z0)

    flags = []
    stsc_norm = float(np.linalg.norm(s_stsc))
    h_s_norm = float(np.linalg.norm(h_s.h))
    structural_share = stsc_norm / h_s_norm if h_s_norm > 0.0 else 0.0
    if n_s and float(np.max(np.abs(gamma))) <= 1e-12 and structural_share >= STRUCTURAL_SHARE:
        flags.append(STRUCTURAL_FLAG)
        logger.info("channel flag=%r |S_StSc|=%.3e share=%.3g", STRUCTURAL_FLAG, stsc_norm, structural_share)

    for name, model in (("h_z", h_z), ("h_s", h_s), ("h_ct", h_ct)):
        _write_table(out, f"channel_{name}.csv", matrix_frame(model.h), resolved, scenario)
    payload = {
        "ports": {"T": folded.n_t, "S": n_s, "R": folded.n_r, "O": blocks.n_o},
        "h_z": h_z.summary(),
        "h_s": h_s.summary(),
        "h_ct": h_ct.summary(),
        "impedance_scattering_residual": relative_error(h_s.h, h_z.h),
        "structural_scattering_norm": stsc_norm,
        "structural_scattering_share": structural_share,
        "flags": flags,
    }
    _write(out, "channel.json", resolved, scenario, payload)


def cmd_optimize(cfg: RunConfig, scenario: Scenario, out: Path) -> None:
    from .ris_optim import (
        MODEL_COUPLED,
        OptimizationProblem,
        coupling_gain_comparison,
        optimize_loads,
    )
    from .scenario import OptimizeSettings

    net = scenario.require("network")
    settings = scenario.optimize or OptimizeSettings()
    resolved = _base_config(cfg, scenario)
    neumann = cfg.neumann_order if cfg.neumann_order is not None else settings.neumann_order
    resolved.update(settings.resolved(net.z0))
    resolved["neumann_order"] = neumann

    problem = OptimizationProblem.from_scenario(
        net,
        objective=settings.objective,
        bounds=settings.bounds,
        model=settings.model,
        neumann_order=neumann,
        seed=resolved["seed"],
    )
    payload: dict[str, Any] = {}
    if settings.compare_unaware and settings.model == MODEL_COUPLED:
        cmp = coupling_gain_comparison(problem, settings.budget)
        result = cmp.aware
        payload["comparison"] = cmp.to_dict()
    else:
        result = optimize_loads(problem, settings.budget)
    payload["result"] = result.to_dict()

    _write_table(
        out,
        "optimize_trace.csv",
        pd.DataFrame({"step": range(len(result.trace)), "objective": result.trace}),
        resolved,
        scenario,
    )
    _write_table(
        out,
        "optimize_loads.csv",
        pd.DataFrame({"element": [f"S{i}" for i in range(result.x.size)], "reactance_ohm": result.x}),
        resolved,
        scenario,
    )
    _write(out, "optimize.json", resolved, scenario, payload)


def cmd_modes(cfg: RunConfig, scenario: Scenario, out: Path) -> None:
    from .holo_modes import coupling_operator, eigenmodes, mode_field, nedof_report
    from .report_tables import eigenvalue_table
    from .wavefield import field_to_frame

    surf = scenario.require("surfaces")
    resolved = _base_config(cfg, scenario)
    per_lambda = cfg.grid_per_lambda or DEFAULT_GRID_PER_LAMBDA
    epsilon = cfg.epsilon if cfg.epsilon is not None else surf.epsilon
    resolved.update({"grid_per_lambda": per_lambda, "epsilon": epsilon, "psi": surf.psi})

    tx = surf.tx.build(scenario.wavelength, per_lambda)
    rx = surf.rx.build(scenario.wavelength, per_lambda)
    resolved["tx_grid"] = [tx.nx, tx.ny]
    resolved["rx_grid"] = [rx.nx, rx.ny]
    modes = eigenmodes(coupling_operator(tx, rx, scenario.wavelength))
    report = nedof_report(modes, tx, rx, scenario.wavelength, epsilon, surf.psi)
    logger.info("modes count=%d n2=%.3f epsilon=%.3g", report.count, report.n2, epsilon)

    _write_table(out, "modes_spectrum.csv", eigenvalue_table(modes, report.n2), resolved, scenario)
    exported = 0
    if tx.nx >= 2 and tx.ny >= 2:
        for m in range(min(surf.export_modes, len(modes))):
            phi = field_to_frame(mode_field(modes, tx, m, scenario.wavelength))
            _write_table(out, f"modes_phi_{m + 1}.csv", phi, resolved, scenario)
            exported += 1
    payload = {"nedof": report.to_dict(), "mu_1": float(modes.mu[0]), "exported_modes": exported}
    _write(out, "modes.json", resolved, scenario, payload)


def cmd_report(cfg: RunConfig, scenario: Scenario, out: Path) -> None:
    from .holo_modes import center_distance, coupling_operator, eigenmodes, nedof_estimate_2d
    from .report_tables import coupling_sweep, eigenvalue_table
    from .scenario import OptimizeSettings

    if scenario.surfaces is None and scenario.sweep is None:
        raise ScenarioError(f"{scenario.source}: 'report' needs a 'surfaces' or 'sweep' section")
    resolved = _base_config(cfg, scenario)
    payload: dict[str, Any] = {"tables": []}
    tables: dict[str, pd.DataFrame] = {}

    if scenario.surfaces is not None:
        surf = scenario.surfaces
        per_lambda = cfg.grid_per_lambda or DEFAULT_GRID_PER_LAMBDA
        resolved["grid_per_lambda"] = per_lambda
        tx = surf.tx.build(scenario.wavelength, per_lambda)
        rx = surf.rx.build(scenario.wavelength, per_lambda)
        n2, _ = nedof_estimate_2d(tx.area, rx.area, scenario.wavelength, center_distance(tx, rx), surf.psi)
        modes = eigenmodes(coupling_operator(tx, rx, scenario.wavelength))
        tables["report_eigenvalues.csv"] = eigenvalue_table(modes, n2)
        payload["n2"] = n2

    if scenario.sweep is not None:
        sweep = scenario.sweep
        net = scenario.require("network")
        settings = scenario.optimize or OptimizeSettings()
        resolved["sweep"] = {
            "size_x": sweep.size_x,
            "size_y": sweep.size_y,
            "spacings": list(sweep.spacings),
            "budget": sweep.budget,
            "objective": settings.objective,
        }
        tables["report_coupling_sweep.csv"] = coupling_sweep(
            net,
            sweep.spacings,
            sweep.size_x,
            sweep.size_y,
            budget=sweep.budget,
            objective=settings.objective,
            bounds=settings.bounds,
            seed=resolved["seed"],
        )

    # tables share the final resolved config
    for name, frame in tables.items():
        _write_table(out, name, frame, resolved, scenario)
        payload["tables"].append(name)
    _write(out, "report.json", resolved, scenario, payload)


def parse_args(argv: list[str] | None = None) -> argparse.Namespace:
    ap = argparse.ArgumentParser(
        prog="python -m emcomm.run",
        description="Electromagnetically consistent communication models: batch front end.",
        epilog=_EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--scenario", required=True, help="scenario JSON file")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--epsilon", type=float, help="NeDoF threshold ε in (0, 1] (default 0.5)")
    ap.add_argument("--eta", type=float, help="evanescent amplitude threshold η in (0, 1) (default 1e-3)")
    ap.add_argument("--neumann-order", type=int, help="Neumann series order for optimizer inner solves")
    ap.add_argument(
        "--grid-per-lambda", type=float, help="surface quadrature nodes per wavelength, >= 4 (default 4)"
    )
    ap.add_argument("--seed", type=int, help="optimizer seed (default: scenario seed or 0)")
    return ap.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    args = parse_args(argv)
    setup_logging(os.getenv("LOG_LEVEL", "INFO"), command=args.command)
    cfg = RunConfig(
        command=args.command,
        scenario=args.scenario,
        out=args.out,
        epsilon=args.epsilon,
        eta=args.eta,
        neumann_order=args.neumann_order,
        grid_per_lambda=args.grid_per_lambda,
        seed=args.seed,
    )
    out = Path(cfg.out)
    try:
        cfg.validate()
        scenario = load_scenario(cfg.scenario)
        if cfg.command == "pws":
            cmd_pws(cfg, scenario, out)
        elif cfg.command == "channel":
            cmd_channel(cfg, scenario, out)
        elif cfg.command == "optimize":
            cmd_optimize(cfg, scenario, out)
        elif cfg.command == "modes":
            cmd_modes(cfg, scenario, out)
        elif cfg.command == "report":
            cmd_report(cfg, scenario, out)
    except ScenarioError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        logger.error("numerical failure subsystem=%s cond=%.3e: %s", exc.subsystem, exc.condition, exc)
        return EXIT_NUMERICAL
    except PreconditionError as exc:
        logger.error("precondition violated: %s", exc)
        return EXIT_PRECONDITION
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
