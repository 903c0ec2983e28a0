import numpy as np
import pytest

from emcomm.guardrails import (
    LoadResonanceError,
    NumericalFailure,
    PreconditionError,
    checked_inverse,
    checked_solve,
    condition_limit,
    relative_error,
    require_open_unit,
    require_positive,
    worker_count,
)


def test_checked_solve_matches_numpy():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5)) + 5 * np.eye(5)
    b = rng.normal(size=(5, 2)) + 0j
    x = checked_solve(a, b, "test")
    assert np.allclose(a @ x, b, atol=1e-12)


def test_checked_solve_names_singular_subsystem():
    a = np.array([[1.0, 2.0], [2.0, 4.0]], dtype=complex)
    with pytest.raises(NumericalFailure) as err:
        checked_solve(a, np.eye(2), "Z_SS + Z0·I")
    assert err.value.subsystem == "Z_SS + Z0·I"
    assert "Z_SS + Z0·I" in str(err.value)


def test_checked_inverse_custom_error_class():
    with pytest.raises(LoadResonanceError):
        checked_inverse(np.zeros((2, 2)), "Z_S + Z0·I", error_cls=LoadResonanceError)


def test_condition_limit_from_env(monkeypatch):
    monkeypatch.setenv("EMCOMM_COND_MAX", "1e3")
    assert condition_limit() == 1e3
    a = np.diag([1.0, 1e-4]).astype(complex)
    with pytest.raises(NumericalFailure):
        checked_solve(a, np.ones(2), "diag")


def test_empty_system_is_trivial():
    x = checked_solve(np.zeros((0, 0)), np.zeros((0, 3)), "empty")
    assert x.shape == (0, 3)


def test_require_helpers():
    assert require_positive("x", 2.0) == 2.0
    with pytest.raises(PreconditionError):
        require_positive("x", 0.0)
    with pytest.raises(PreconditionError):
        require_positive("x", float("nan"))
    with pytest.raises(PreconditionError):
        require_open_unit("eta", 1.0)


def test_relative_error_scale():
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert relative_error(np.array([1.0, 2.1]), np.array([1.0, 2.0])) == pytest.approx(0.05)


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("EMCOMM_WORKERS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("EMCOMM_WORKERS", "0")
    assert worker_count() == 1
    monkeypatch.setenv("EMCOMM_WORKERS", "many")
    with pytest.raises(PreconditionError):
        worker_count()
