"""Tables behind the `report` command: eigenvalue step and coupling sweep."""

from __future__ import annotations

import logging
from dataclasses import replace
from typing import Sequence

import pandas as pd
from joblib import Parallel, delayed

from .guardrails import PreconditionError, worker_count
from .holo_modes import ModeSet
from .metasurface import MetasurfaceSpec, NetworkScenario, linear_array
from .ris_optim import OptimizationProblem, coupling_gain_comparison

logger = logging.getLogger("emcomm")

EIGEN_COLUMNS = ["m", "mu", "mu_normalized", "n2_marker"]
SWEEP_COLUMNS = [
    "spacing",
    "spacing_over_lambda",
    "elements",
    "aware_gain",
    "unaware_gain",
    "gain_ratio",
]


def eigenvalue_table(modes: ModeSet, n2: float) -> pd.DataFrame:
    """(m, μ_m, μ_m/μ_1) with n2_marker = 1 on the row m = round(N2)."""
    m = list(range(1, len(modes) + 1))
    marker_row = max(1, round(n2))
    return pd.DataFrame(
        {
            "m": m,
            "mu": modes.mu,
            "mu_normalized": modes.normalized,
            "n2_marker": [1 if i == marker_row else 0 for i in m],
        },
        columns=EIGEN_COLUMNS,
    )


def _resized(network: NetworkScenario, size_x: float, size_y: float | None, spacing: float) -> NetworkScenario:
    if network.ris is None:
        raise PreconditionError("coupling sweep needs a scenario with a RIS template")
    base = network.ris
    if size_y is None:
        ris = linear_array(max(1, round(size_x / spacing)), spacing, base.template, base.center)
    else:
        ris = MetasurfaceSpec.from_aperture(size_x, size_y, spacing, base.template, base.center)
    return replace(network, ris=replace(ris, orientation=base.orientation))


def _sweep_point(
    network: NetworkScenario,
    spacing: float,
    size_x: float,
    size_y: float | None,
    budget: int,
    objective: str,
    bounds: tuple[float, float] | None,
    seed: int,
) -> dict[str, float]:
    scenario = _resized(network, size_x, size_y, spacing)
    problem = OptimizationProblem.from_scenario(scenario, objective=objective, bounds=bounds, seed=seed)
    cmp = coupling_gain_comparison(problem, budget, n_jobs=1)
    logger.info(
        "sweep spacing=%.4g elements=%d ratio=%.4f", spacing, problem.size, cmp.ratio
    )
    return {
        "spacing": spacing,
        "spacing_over_lambda": spacing / network.wavelength,
        "elements": problem.size,
        "aware_gain": cmp.aware.objective,
        "unaware_gain": cmp.unaware_objective,
        "gain_ratio": cmp.ratio,
    }


def coupling_sweep(
    network: NetworkScenario,
    spacings: Sequence[float],
    size_x: float,
    size_y: float | None = None,
    budget: int = 2000,
    objective: str = "siso",
    bounds: tuple[float, float] | None = None,
    seed: int = 0,
    n_jobs: int | None = None,
) -> pd.DataFrame:
    """Aware vs unaware optimized gain at a fixed RIS aperture for each interdistance.

    Element count per axis is round(size/spacing); size_y=None keeps a single row.
    """
    if not spacings:
        raise PreconditionError("coupling sweep needs at least one spacing")
    n_jobs = worker_count() if n_jobs is None else n_jobs
    rows = Parallel(n_jobs=n_jobs)(
        delayed(_sweep_point)(network, s, size_x, size_y, budget, objective, bounds, seed)
        for s in spacings
    )
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)
