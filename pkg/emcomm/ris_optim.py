"""Coupling-aware optimization of reactive RIS loads.

Projected cyclic coordinate ascent over the reactances X_n. Each coordinate is
searched in u = arctan(X/Z0), which maps the reactance box onto a bounded
interval and spreads resolution around resonance: a coarse scan followed by a
bounded scalar refinement. Trial steps are only accepted when the exact
objective does not decrease.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import optimize

from .guardrails import (
    NumericalFailure,
    PreconditionError,
    checked_inverse,
    worker_count,
)
from .metasurface import ImpedanceBlocks, NetworkScenario, build_blocks
from .multiport import fold_environment
from .types import DEFAULT_Z0, ComplexMat

logger = logging.getLogger("emcomm")

OBJECTIVE_SUM_GAIN = "sum-gain"
OBJECTIVE_SISO = "siso"
MODEL_COUPLED = "coupled"
MODEL_UNCOUPLED = "uncoupled"

DEFAULT_BOX = 20.0
COARSE_POINTS = 64
REFINE_ITERATIONS = 40
MAX_SWEEPS = 50
_IMPROVEMENT_RTOL = 1e-12


class NeumannDivergenceWarning(RuntimeWarning):
    """Spectral radius of A^{-1}Δ is >= 1; the truncated series does not converge."""


def gain(h: ComplexMat) -> float:
    """Squared Frobenius norm."""
    return float(np.sum(np.abs(np.asarray(h)) ** 2))


def spectral_radius(m: ComplexMat) -> float:
    m = np.atleast_2d(m)
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def _neumann_from_inverse(a_inv: ComplexMat, delta: ComplexMat, order: int) -> ComplexMat:
    step = -a_inv @ delta
    term = a_inv
    total = a_inv.copy()
    for _ in range(order):
        term = step @ term
        total = total + term
    return total


def neumann_inverse(a: ComplexMat, delta: ComplexMat, k: int) -> ComplexMat:
    """(A + Δ)^{-1} ≈ Σ_{i=0..k} (-A^{-1}Δ)^i A^{-1}."""
    if k < 0:
        raise PreconditionError(f"Neumann order must be >= 0, got {k}")
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    delta = np.atleast_2d(np.asarray(delta, dtype=complex))
    a_inv = checked_inverse(a, "Neumann base A")
    rho = spectral_radius(a_inv @ delta)
    if rho >= 1.0:
        logger.warning("neumann_inverse diverges: spectral radius=%.4f order=%d", rho, k)
        warnings.warn(
            f"spectral radius {rho:.4f} >= 1: Neumann series diverges",
            NeumannDivergenceWarning,
            stacklevel=2,
        )
    return _neumann_from_inverse(a_inv, delta, k)


@dataclass
class OptimizationProblem:
    blocks: ImpedanceBlocks
    z0: float = DEFAULT_Z0
    x_min: float = -DEFAULT_BOX * DEFAULT_Z0
    x_max: float = DEFAULT_BOX * DEFAULT_Z0
    objective: str = OBJECTIVE_SISO
    model: str = MODEL_COUPLED
    # None: exact inner evaluations
    neumann_order: int | None = None
    seed: int = 0
    scenario: NetworkScenario | None = None

    def __post_init__(self) -> None:
        if not (np.isfinite(self.x_min) and np.isfinite(self.x_max)) or self.x_min >= self.x_max:
            raise PreconditionError(f"need finite X_min < X_max, got [{self.x_min}, {self.x_max}]")
        if self.objective not in (OBJECTIVE_SISO, OBJECTIVE_SUM_GAIN):
            raise PreconditionError(f"unknown objective {self.objective!r}")
        if self.model not in (MODEL_COUPLED, MODEL_UNCOUPLED):
            raise PreconditionError(f"unknown model fidelity {self.model!r}")
        if self.objective == OBJECTIVE_SISO and (self.blocks.n_t, self.blocks.n_r) != (1, 1):
            raise PreconditionError(
                f"SISO objective needs 1 Tx and 1 Rx port, got {self.blocks.n_t}×{self.blocks.n_r}"
            )
        if self.blocks.n_s == 0:
            raise PreconditionError("nothing to optimize: scenario has no RIS elements")
        if self.neumann_order is not None and self.neumann_order < 0:
            raise PreconditionError("neumann_order must be >= 0")

    @classmethod
    def from_scenario(
        cls,
        scenario: NetworkScenario,
        objective: str = OBJECTIVE_SISO,
        bounds: tuple[float, float] | None = None,
        model: str = MODEL_COUPLED,
        neumann_order: int | None = None,
        seed: int = 0,
        blocks: ImpedanceBlocks | None = None,
    ) -> "OptimizationProblem":
        """Problem on the scenario's blocks with any environment folded into Z_SS."""
        raw = blocks if blocks is not None else build_blocks(scenario)
        folded = fold_environment(raw).blocks
        lo, hi = bounds if bounds is not None else (-DEFAULT_BOX * scenario.z0, DEFAULT_BOX * scenario.z0)
        return cls(
            blocks=folded,
            z0=scenario.z0,
            x_min=lo,
            x_max=hi,
            objective=objective,
            model=model,
            neumann_order=neumann_order,
            seed=seed,
            scenario=scenario,
        )

    @property
    def size(self) -> int:
        return self.blocks.n_s

    def model_z_ss(self, model: str | None = None) -> ComplexMat:
        model = model or self.model
        if model == MODEL_UNCOUPLED:
            return np.diag(np.diag(self.blocks.z_ss))
        return self.blocks.z_ss

    def with_model(self, model: str) -> "OptimizationProblem":
        return replace(self, model=model)

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(x, dtype=float), self.x_min, self.x_max)


@dataclass
class OptimizationResult:
    x: np.ndarray
    objective: float
    trace: list[float]
    evaluations: int
    start: str = ""
    sweeps: int = 0
    model: str = MODEL_COUPLED
    starts: dict[str, float] = field(default_factory=dict)
    # included in `evaluations`; spent optimizing the uncoupled model for the "unaware" start
    warm_start_evaluations: int = 0

    @property
    def loads(self) -> ComplexMat:
        return np.diag(1j * self.x)

    def to_dict(self) -> dict[str, Any]:
        return {
            "reactances_ohm": [float(v) for v in self.x],
            "objective": self.objective,
            "evaluations": self.evaluations,
            "warm_start_evaluations": self.warm_start_evaluations,
            "start": self.start,
            "sweeps": self.sweeps,
            "model": self.model,
            "starts": dict(self.starts),
            "trace": list(self.trace),
        }


def _channel_from_inverse(problem: OptimizationProblem, inv: ComplexMat) -> ComplexMat:
    b = problem.blocks
    return (b.z_rt - b.z_rs @ inv @ b.z_st) / (2.0 * problem.z0)


def objective(problem: OptimizationProblem, x: Sequence[float], model: str | None = None) -> float:
    """Exact objective of reactances x under the problem's (or the given) model fidelity."""
    z = problem.model_z_ss(model) + np.diag(1j * np.asarray(x, dtype=float))
    inv = checked_inverse(z, "Z_emc + Z_S")
    return gain(_channel_from_inverse(problem, inv))


def _safe_objective(problem: OptimizationProblem, x: np.ndarray) -> float:
    try:
        return objective(problem, x)
    except NumericalFailure:
        return -math.inf


class _Counter:
    def __init__(self, budget: int):
        self.budget = budget
        self.used = 0

    @property
    def left(self) -> int:
        return self.budget - self.used

    def take(self, n: int = 1) -> None:
        self.used += n


def _coordinate_values(
    problem: OptimizationProblem, x: np.ndarray, n: int, candidates: np.ndarray
) -> np.ndarray:
    """Objective along coordinate n at the given reactances; Neumann-accelerated if enabled."""
    base = problem.model_z_ss() + np.diag(1j * x)
    out = np.full(candidates.size, -math.inf)
    a_inv = None
    if problem.neumann_order is not None:
        try:
            a_inv = checked_inverse(base, "Z_emc + Z_S")
        except NumericalFailure:
            a_inv = None
    for i, xn in enumerate(candidates):
        d = 1j * (xn - x[n])
        if a_inv is not None and abs(d) * abs(a_inv[n, n]) < 1.0:
            delta = np.zeros_like(base)
            delta[n, n] = d
            inv = _neumann_from_inverse(a_inv, delta, problem.neumann_order or 0)
            out[i] = gain(_channel_from_inverse(problem, inv))
            continue
        trial = x.copy()
        trial[n] = xn
        out[i] = _safe_objective(problem, trial)
    return out


def _line_search(
    problem: OptimizationProblem, x: np.ndarray, n: int, counter: _Counter
) -> float | None:
    u_lo = math.atan(problem.x_min / problem.z0)
    u_hi = math.atan(problem.x_max / problem.z0)
    # one evaluation stays reserved for the trial step
    points = min(COARSE_POINTS, counter.left - 1)
    if points < 2:
        return None
    grid_u = np.linspace(u_lo, u_hi, points)
    grid_x = problem.z0 * np.tan(grid_u)
    values = _coordinate_values(problem, x, n, grid_x)
    counter.take(points)
    best = float(np.max(values))
    if not math.isfinite(best):
        return None
    # ties toward smaller |X|
    tied = np.flatnonzero(values >= best - 1e-15 * abs(best))
    idx = int(tied[np.argmin(np.abs(grid_x[tied]))])
    x_best = float(grid_x[idx])

    refine = min(REFINE_ITERATIONS, counter.left - 1)
    if refine >= 3:
        lo = grid_u[max(idx - 1, 0)]
        hi = grid_u[min(idx + 1, points - 1)]
        calls = 0

        def negative(u: float) -> float:
            nonlocal calls
            calls += 1
            v = _coordinate_values(problem, x, n, np.array([problem.z0 * math.tan(u)]))[0]
            return -v if math.isfinite(v) else math.inf

        res = optimize.minimize_scalar(
            negative,
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-10, "maxiter": refine},
        )
        counter.take(calls)
        if math.isfinite(res.fun) and -res.fun > best:
            x_best = float(problem.z0 * math.tan(res.x))
    return float(np.clip(x_best, problem.x_min, problem.x_max))


def _ascend(
    problem: OptimizationProblem, x0: np.ndarray, budget: int, label: str
) -> OptimizationResult:
    counter = _Counter(budget)
    x = problem.clip(x0)
    current = _safe_objective(problem, x)
    counter.take()
    trace = [current]
    order = np.random.default_rng(problem.seed).permutation(problem.size)
    sweeps = 0
    while sweeps < MAX_SWEEPS and counter.left > 1:
        sweeps += 1
        improved = False
        for n in order:
            if counter.left <= 1:
                break
            cand = _line_search(problem, x, int(n), counter)
            if cand is None or cand == x[n]:
                continue
            trial = x.copy()
            trial[n] = cand
            value = _safe_objective(problem, trial)
            counter.take()
            if value > current * (1.0 + _IMPROVEMENT_RTOL) or (current == -math.inf and value > current):
                x, current = trial, value
                trace.append(current)
                improved = True
        if not improved:
            break
    logger.info(
        "optimize start=%s model=%s sweeps=%d evaluations=%d objective=%.6e",
        label,
        problem.model,
        sweeps,
        counter.used,
        current,
    )
    return OptimizationResult(
        x=x,
        objective=current,
        trace=trace,
        evaluations=counter.used,
        start=label,
        sweeps=sweeps,
        model=problem.model,
    )


def resonant_start(problem: OptimizationProblem) -> np.ndarray:
    """Per-element reactance cancelling the self reactance, X_n = -Im z_nn."""
    return problem.clip(-np.diag(problem.blocks.z_ss).imag)


def open_start(problem: OptimizationProblem) -> np.ndarray:
    return np.full(problem.size, problem.x_max)


def optimize_loads(
    problem: OptimizationProblem,
    budget: int,
    starts: Sequence[str] | None = None,
    n_jobs: int | None = None,
    unaware_x: np.ndarray | None = None,
) -> OptimizationResult:
    """Multi-start coordinate ascent; `budget` counts objective evaluations per start.

    Starts: "resonant", "open" and, on the coupled model, "unaware" (the
    solution optimized on the uncoupled model). When that solution has to be
    computed here, its evaluations are added to the reported total.
    """
    if budget < 1:
        raise PreconditionError(f"budget must be >= 1, got {budget}")
    if starts is None:
        starts = ("resonant", "open", "unaware") if problem.model == MODEL_COUPLED else ("resonant", "open")

    initial: list[tuple[str, np.ndarray]] = []
    warm_evaluations = 0
    for name in starts:
        if name == "resonant":
            initial.append((name, resonant_start(problem)))
        elif name == "open":
            initial.append((name, open_start(problem)))
        elif name == "unaware":
            if unaware_x is None:
                warm = optimize_loads(problem.with_model(MODEL_UNCOUPLED), budget, n_jobs=n_jobs)
                unaware_x = warm.x
                warm_evaluations = warm.evaluations
            initial.append((name, problem.clip(unaware_x)))
        else:
            raise PreconditionError(f"unknown start {name!r}")

    n_jobs = worker_count() if n_jobs is None else n_jobs
    results = Parallel(n_jobs=n_jobs)(
        delayed(_ascend)(problem, x0, budget, name) for name, x0 in initial
    )
    best_idx = 0
    for i, r in enumerate(results):
        if r.objective > results[best_idx].objective:
            best_idx = i
    best = results[best_idx]
    best.starts = {r.start: r.objective for r in results}
    best.warm_start_evaluations = warm_evaluations
    best.evaluations = sum(r.evaluations for r in results) + warm_evaluations
    return best


@dataclass
class CouplingComparison:
    aware: OptimizationResult
    unaware_x: np.ndarray
    unaware_objective: float
    unaware_evaluations: int = 0

    @property
    def ratio(self) -> float:
        if self.unaware_objective <= 0.0:
            return math.inf
        return self.aware.objective / self.unaware_objective

    def to_dict(self) -> dict[str, Any]:
        return {
            "aware_objective": self.aware.objective,
            "unaware_objective": self.unaware_objective,
            "gain_ratio": self.ratio,
            "evaluations": self.aware.evaluations + self.unaware_evaluations,
            "aware_reactances_ohm": [float(v) for v in self.aware.x],
            "unaware_reactances_ohm": [float(v) for v in self.unaware_x],
        }


def coupling_gain_comparison(
    problem: OptimizationProblem, budget: int, n_jobs: int | None = None
) -> CouplingComparison:
    """Optimize with and without coupling; score both solutions on the coupled model."""
    coupled = problem.with_model(MODEL_COUPLED)
    unaware = optimize_loads(problem.with_model(MODEL_UNCOUPLED), budget, n_jobs=n_jobs)
    unaware_value = objective(coupled, unaware.x)
    aware = optimize_loads(coupled, budget, n_jobs=n_jobs, unaware_x=unaware.x)
    logger.info(
        "coupling comparison aware=%.6e unaware=%.6e ratio=%.4f",
        aware.objective,
        unaware_value,
        aware.objective / unaware_value if unaware_value > 0 else math.inf,
    )
    return CouplingComparison(
        aware=aware,
        unaware_x=unaware.x,
        unaware_objective=unaware_value,
        # uncoupled run plus its score on the coupled model
        unaware_evaluations=unaware.evaluations + 1,
    )
