"""Numerical guardrails: error taxonomy, precondition gates, conditioned solves."""

from __future__ import annotations

import logging
import os

import numpy as np
import scipy.linalg

from .types import ComplexMat

logger = logging.getLogger("emcomm")


class PreconditionError(ValueError):
    """Raised when an operation is called outside its documented domain."""


class NumericalFailure(RuntimeError):
    """Raised when a linear subsystem is singular or too ill-conditioned to trust."""

    def __init__(self, subsystem: str, condition: float, detail: str = ""):
        self.subsystem = subsystem
        self.condition = condition
        msg = f"{subsystem} is singular or ill-conditioned (cond={condition:.3e})"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class LoadResonanceError(NumericalFailure):
    """Z_S + Z0·I is singular: the load set is resonance-degenerate."""


def condition_limit(limit: float | None = None) -> float:
    """Condition number at which a solve is declared singular."""
    if limit is None:
        limit = float(os.getenv("EMCOMM_COND_MAX", "1e12"))
    return limit


def condition_number(a: ComplexMat) -> float:
    a = np.atleast_2d(a)
    if a.size == 0:
        return 1.0
    if not np.all(np.isfinite(a)):
        return float("inf")
    return float(np.linalg.cond(a))


def checked_solve(
    a: ComplexMat,
    b: ComplexMat,
    subsystem: str,
    limit: float | None = None,
    error_cls: type[NumericalFailure] = NumericalFailure,
) -> ComplexMat:
    """Solve a·x = b by LU with partial pivoting after a conditioning check."""
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    b = np.asarray(b, dtype=complex)
    if a.shape[0] == 0:
        return np.zeros((0,) + b.shape[1:], dtype=complex)
    cond = condition_number(a)
    if not np.isfinite(cond) or cond >= condition_limit(limit):
        logger.warning("solve rejected subsystem=%s cond=%.3e", subsystem, cond)
        raise error_cls(subsystem, cond)
    lu, piv = scipy.linalg.lu_factor(a, check_finite=False)
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


def checked_inverse(
    a: ComplexMat,
    subsystem: str,
    limit: float | None = None,
    error_cls: type[NumericalFailure] = NumericalFailure,
) -> ComplexMat:
    a = np.atleast_2d(np.asarray(a, dtype=complex))
    return checked_solve(
        a, np.eye(a.shape[0], dtype=complex), subsystem, limit, error_cls
    )


def require_positive(name: str, value: float) -> float:
    if not np.isfinite(value) or value <= 0:
        raise PreconditionError(f"{name} must be positive and finite, got {value!r}")
    return float(value)


def require_open_unit(name: str, value: float) -> float:
    if not (0.0 < value < 1.0):
        raise PreconditionError(f"{name} must lie in (0, 1), got {value!r}")
    return float(value)


def require_finite(name: str, values: np.ndarray) -> None:
    if not np.all(np.isfinite(values)):
        raise PreconditionError(f"{name} contains non-finite samples")


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """max |a-b| / max(|b|, tiny)."""
    a = np.asarray(a)
    b = np.asarray(b)
    scale = float(np.max(np.abs(b))) if b.size else 0.0
    if scale == 0.0:
        return float(np.max(np.abs(a))) if a.size else 0.0
    return float(np.max(np.abs(a - b))) / scale


def worker_count(default: int = 1) -> int:
    """Bounded worker-pool size from EMCOMM_WORKERS."""
    raw = os.getenv("EMCOMM_WORKERS", str(default)).strip()
    try:
        n = int(raw)
    except ValueError:
        raise PreconditionError(f"EMCOMM_WORKERS must be an integer, got {raw!r}") from None
    return max(1, n)
