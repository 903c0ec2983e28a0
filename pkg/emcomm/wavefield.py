"""Plane-wave spectrum of monochromatic fields on planes.

Time dependence e^{jωt} is implicit. Fourier pair used throughout:

    analysis   Ê(kx, ky) = ∬ E(x, y) e^{+j(kx x + ky y)} dx dy
    synthesis  E(x, y)   = (1/4π²) ∬ Ê(kx, ky) e^{-j(kx x + ky y)} dkx dky

A plane wave e^{-j(kx0 x + ky0 y + kz z)} therefore maps to a spectral peak at
(kx0, ky0), and propagation to z + dz multiplies by e^{-j kz dz}. Evanescent
samples use kz = -j·sqrt(kx² + ky² - κ²) so they decay for dz > 0.

Discretization: samples sit at x_m = x0 + m·dx, wavenumber axes are the DFT
conjugates 2π·fftfreq(n, dx) (numpy ordering, unshifted).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .guardrails import (
    PreconditionError,
    require_finite,
    require_open_unit,
    require_positive,
)
from .types import ComplexMat, RealVec, wavenumber

logger = logging.getLogger("emcomm")

DEFAULT_ETA = 1e-3
GUARD_BAND = 0.10
KZ_TOLERANCE = 1e-9
FIELD_CSV_COLUMNS = ["x", "y", "Re(Ex)", "Im(Ex)", "Re(Ey)", "Im(Ey)"]


class NoSupercellNeeded(PreconditionError):
    """Specular reflection: sin θr = sin θi needs no periodic phase gradient."""


@dataclass
class FieldGrid:
    """Tangential field samples on the plane z = plane_z.

    ex/ey are indexed [ix, iy]. ez is only populated by propagate().
    """

    plane_z: float
    dx: float
    dy: float
    ex: ComplexMat
    ey: ComplexMat
    wavelength: float
    x0: float = 0.0
    y0: float = 0.0
    ez: ComplexMat | None = None

    def __post_init__(self) -> None:
        self.ex = np.asarray(self.ex, dtype=complex)
        self.ey = np.asarray(self.ey, dtype=complex)
        require_positive("dx", self.dx)
        require_positive("dy", self.dy)
        require_positive("wavelength", self.wavelength)
        if self.ex.ndim != 2 or self.ex.shape != self.ey.shape:
            raise PreconditionError(
                f"ex/ey must be 2-D arrays of equal shape, got {self.ex.shape} and {self.ey.shape}"
            )
        if self.nx < 2 or self.ny < 2:
            raise PreconditionError(f"grid needs nx, ny >= 2, got {self.ex.shape}")
        require_finite("ex", self.ex)
        require_finite("ey", self.ey)

    @property
    def nx(self) -> int:
        return int(self.ex.shape[0])

    @property
    def ny(self) -> int:
        return int(self.ex.shape[1])

    @property
    def kappa(self) -> float:
        return wavenumber(self.wavelength)

    @property
    def x(self) -> RealVec:
        return self.x0 + self.dx * np.arange(self.nx)

    @property
    def y(self) -> RealVec:
        return self.y0 + self.dy * np.arange(self.ny)

    @classmethod
    def centered(
        cls,
        nx: int,
        ny: int,
        dx: float,
        dy: float,
        wavelength: float,
        plane_z: float = 0.0,
    ) -> "FieldGrid":
        """Zero field on a grid whose sample (nx//2, ny//2) sits at the origin."""
        return cls(
            plane_z=plane_z,
            dx=dx,
            dy=dy,
            ex=np.zeros((nx, ny), dtype=complex),
            ey=np.zeros((nx, ny), dtype=complex),
            wavelength=wavelength,
            x0=-(nx // 2) * dx,
            y0=-(ny // 2) * dy,
        )

    def with_fields(self, ex: ComplexMat, ey: ComplexMat | None = None) -> "FieldGrid":
        return replace(
            self,
            ex=np.asarray(ex, dtype=complex),
            ey=np.zeros_like(ex, dtype=complex) if ey is None else ey,
            ez=None,
        )

    def metadata(self) -> dict[str, float | int]:
        return {
            "plane_z": self.plane_z,
            "dx": self.dx,
            "dy": self.dy,
            "nx": self.nx,
            "ny": self.ny,
            "x0": self.x0,
            "y0": self.y0,
            "wavelength": self.wavelength,
        }


@dataclass
class SpectrumGrid:
    kx: RealVec
    ky: RealVec
    e_hat_x: ComplexMat
    e_hat_y: ComplexMat
    e_hat_z: ComplexMat
    kappa: float
    # kz ~ 0 samples where e_hat_z was forced to zero
    flagged: np.ndarray
    # geometry of the generating grid, needed for synthesis
    dx: float
    dy: float
    x0: float = 0.0
    y0: float = 0.0
    plane_z: float = 0.0
    wavelength: float = 0.0

    @property
    def kz(self) -> ComplexMat:
        kxx, kyy = np.meshgrid(self.kx, self.ky, indexing="ij")
        return kz(kxx, kyy, self.kappa)

    @property
    def propagating_mask(self) -> np.ndarray:
        kxx, kyy = np.meshgrid(self.kx, self.ky, indexing="ij")
        return kxx**2 + kyy**2 <= self.kappa**2

    def divergence_residual(self) -> float:
        """max |kx Êx + ky Êy + kz Êz| relative to max |k||Ê| over unflagged bins."""
        kxx, kyy = np.meshgrid(self.kx, self.ky, indexing="ij")
        kzz = self.kz
        div = kxx * self.e_hat_x + kyy * self.e_hat_y + kzz * self.e_hat_z
        scale = np.abs(kxx * self.e_hat_x) + np.abs(kyy * self.e_hat_y)
        scale = scale + np.abs(kzz * self.e_hat_z)
        live = ~self.flagged
        top = float(np.max(scale[live])) if np.any(live) else 0.0
        if top == 0.0:
            return 0.0
        return float(np.max(np.abs(div[live]))) / top


def kz(kx, ky, kappa: float):
    """Longitudinal wavenumber; real in the visible range, negative-imaginary outside.

    Accepts scalars or arrays.
    """
    require_positive("kappa", kappa)
    kt2 = np.asarray(kx, dtype=float) ** 2 + np.asarray(ky, dtype=float) ** 2
    k2 = kappa**2
    out = np.where(
        kt2 <= k2,
        np.sqrt(np.clip(k2 - kt2, 0.0, None)) + 0j,
        -1j * np.sqrt(np.clip(kt2 - k2, 0.0, None)),
    )
    if out.ndim == 0:
        return complex(out)
    return out


def _k_axis(n: int, d: float) -> RealVec:
    return 2.0 * np.pi * np.fft.fftfreq(n, d)


def spectrum_of(grid: FieldGrid, tol: float = KZ_TOLERANCE) -> SpectrumGrid:
    """Discrete plane-wave spectrum of the tangential samples.

    Êz follows from the divergence-free condition. Bins with |kz| <= tol·κ are
    flagged and carry Êz = 0.
    """
    require_finite("ex", grid.ex)
    require_finite("ey", grid.ey)
    kx = _k_axis(grid.nx, grid.dx)
    ky = _k_axis(grid.ny, grid.dy)
    kxx, kyy = np.meshgrid(kx, ky, indexing="ij")
    shift = np.exp(1j * (kxx * grid.x0 + kyy * grid.y0))
    scale = grid.dx * grid.dy * grid.nx * grid.ny
    e_hat_x = scale * shift * np.fft.ifft2(grid.ex)
    e_hat_y = scale * shift * np.fft.ifft2(grid.ey)

    kappa = grid.kappa
    kzz = kz(kxx, kyy, kappa)
    flagged = np.abs(kzz) <= tol * kappa
    safe = np.where(flagged, 1.0, kzz)
    e_hat_z = np.where(flagged, 0.0, -(kxx * e_hat_x + kyy * e_hat_y) / safe)
    if np.any(flagged):
        logger.debug("spectrum_of flagged %d kz~0 bins", int(np.count_nonzero(flagged)))
    return SpectrumGrid(
        kx=kx,
        ky=ky,
        e_hat_x=e_hat_x,
        e_hat_y=e_hat_y,
        e_hat_z=e_hat_z,
        kappa=kappa,
        flagged=flagged,
        dx=grid.dx,
        dy=grid.dy,
        x0=grid.x0,
        y0=grid.y0,
        plane_z=grid.plane_z,
        wavelength=grid.wavelength,
    )


def propagate_spectrum(spectrum: SpectrumGrid, dz: float) -> SpectrumGrid:
    """Spectrum at plane_z + dz."""
    if dz < 0:
        raise PreconditionError(f"dz must be >= 0, got {dz}")
    factor = np.exp(-1j * spectrum.kz * dz)
    return replace(
        spectrum,
        e_hat_x=spectrum.e_hat_x * factor,
        e_hat_y=spectrum.e_hat_y * factor,
        e_hat_z=spectrum.e_hat_z * factor,
        plane_z=spectrum.plane_z + dz,
    )


def _synthesize_component(spectrum: SpectrumGrid, e_hat: ComplexMat) -> ComplexMat:
    kxx, kyy = np.meshgrid(spectrum.kx, spectrum.ky, indexing="ij")
    nx, ny = e_hat.shape
    unshift = np.exp(-1j * (kxx * spectrum.x0 + kyy * spectrum.y0))
    return np.fft.fft2(e_hat * unshift) / (nx * spectrum.dx * ny * spectrum.dy)


def synthesize(spectrum: SpectrumGrid) -> FieldGrid:
    """Inverse of spectrum_of: samples on the spectrum's own plane."""
    return FieldGrid(
        plane_z=spectrum.plane_z,
        dx=spectrum.dx,
        dy=spectrum.dy,
        ex=_synthesize_component(spectrum, spectrum.e_hat_x),
        ey=_synthesize_component(spectrum, spectrum.e_hat_y),
        wavelength=spectrum.wavelength,
        x0=spectrum.x0,
        y0=spectrum.y0,
        ez=_synthesize_component(spectrum, spectrum.e_hat_z),
    )


def propagate(spectrum: SpectrumGrid, dz: float) -> FieldGrid:
    """Field samples on the plane dz above the spectrum's plane."""
    return synthesize(propagate_spectrum(spectrum, dz))


def power_split(spectrum: SpectrumGrid) -> tuple[float, float]:
    """Parseval power carried by the propagating and evanescent bins."""
    nx, ny = spectrum.e_hat_x.shape
    dk = (2.0 * np.pi / (nx * spectrum.dx)) * (2.0 * np.pi / (ny * spectrum.dy))
    density = (np.abs(spectrum.e_hat_x) ** 2 + np.abs(spectrum.e_hat_y) ** 2) * dk
    density = density / (4.0 * np.pi**2)
    mask = spectrum.propagating_mask
    return float(np.sum(density[mask])), float(np.sum(density[~mask]))


def evanescent_cutoff(z_obs: float, eta: float, kappa: float) -> float:
    """Largest transverse wavenumber whose amplitude is still >= eta at z_obs.

    eta is relative to the largest spectral amplitude.
    """
    require_positive("z_obs", z_obs)
    require_open_unit("eta", eta)
    require_positive("kappa", kappa)
    alpha = math.log(1.0 / eta) / z_obs
    return math.sqrt(kappa**2 + alpha**2)


def sampling_spacing(z_obs: float, eta: float, kappa: float) -> tuple[float, float]:
    """Grid spacing that captures all non-negligible waves at height z_obs."""
    if z_obs <= 0:
        raise PreconditionError(
            f"z_obs must be > 0 (spacing tends to zero on the source plane), got {z_obs}"
        )
    k_max = evanescent_cutoff(z_obs, eta, kappa)
    step = math.pi / k_max
    return step, step


def plane_wave_field(
    waves: Sequence[tuple[complex, float, float]],
    x: np.ndarray,
    y: np.ndarray,
    z: float,
    kappa: float,
) -> ComplexMat:
    """Closed-form sum of plane waves a·e^{-j(kx x + ky y + kz z)} at points (x, y).

    x and y broadcast against each other. Waves outside the visible range are
    evanescent and decay with z.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast(x, y).shape, dtype=complex)
    for amp, kx0, ky0 in waves:
        kz0 = kz(kx0, ky0, kappa)
        out = out + amp * np.exp(-1j * (kx0 * x + ky0 * y + kz0 * z))
    return out


def sample_plane_waves(
    waves: Sequence[tuple[complex, float, float]],
    nx: int,
    ny: int,
    dx: float,
    dy: float,
    wavelength: float,
    z: float = 0.0,
) -> FieldGrid:
    """FieldGrid of an x-polarized plane-wave superposition on a centered grid."""
    grid = FieldGrid.centered(nx, ny, dx, dy, wavelength, plane_z=z)
    xx, yy = np.meshgrid(grid.x, grid.y, indexing="ij")
    ex = plane_wave_field(waves, xx, yy, z, grid.kappa)
    return grid.with_fields(ex)


def _sinc_weights(t: np.ndarray) -> np.ndarray:
    nearest = np.round(t)
    on_node = np.abs(t - nearest) < 1e-12
    return np.where(on_node, (nearest == 0).astype(float), np.sinc(t))


def reconstruct(
    grid: FieldGrid,
    query_points: Iterable[tuple[float, float]],
    component: str = "ex",
    guard: float = GUARD_BAND,
) -> ComplexMat:
    """Separable sinc-series interpolation of one tangential component.

    Queries must lie inside the footprint shrunk by `guard` of its width on
    every side.
    """
    pts = np.asarray(list(query_points), dtype=float).reshape(-1, 2)
    samples = {"ex": grid.ex, "ey": grid.ey}.get(component)
    if samples is None:
        raise PreconditionError(f"unknown component {component!r}")

    width_x = (grid.nx - 1) * grid.dx
    width_y = (grid.ny - 1) * grid.dy
    lo_x, hi_x = grid.x0 + guard * width_x, grid.x0 + (1.0 - guard) * width_x
    lo_y, hi_y = grid.y0 + guard * width_y, grid.y0 + (1.0 - guard) * width_y
    outside = (
        (pts[:, 0] < lo_x) | (pts[:, 0] > hi_x) | (pts[:, 1] < lo_y) | (pts[:, 1] > hi_y)
    )
    if np.any(outside):
        first = pts[np.argmax(outside)]
        raise PreconditionError(
            f"query ({first[0]:.6g}, {first[1]:.6g}) lies outside the guarded footprint "
            f"x∈[{lo_x:.6g}, {hi_x:.6g}] y∈[{lo_y:.6g}, {hi_y:.6g}]"
        )

    tx = (pts[:, 0:1] - grid.x[None, :]) / grid.dx
    ty = (pts[:, 1:2] - grid.y[None, :]) / grid.dy
    wx = _sinc_weights(tx)
    wy = _sinc_weights(ty)
    return np.einsum("qi,ij,qj->q", wx, samples, wy)


# ── periodic metasurface design ──────────────────────────────────────────


@dataclass(frozen=True)
class PeriodicDesign:
    theta_i: float
    theta_r: float
    period_D: float
    element_spacing: float
    cells_per_period: int
    requested_theta_r: float
    exact: bool

    def to_dict(self) -> dict[str, float | int | bool]:
        return {
            "theta_i_deg": math.degrees(self.theta_i),
            "theta_r_deg": math.degrees(self.theta_r),
            "requested_theta_r_deg": math.degrees(self.requested_theta_r),
            "period_D": self.period_D,
            "element_spacing": self.element_spacing,
            "cells_per_period": self.cells_per_period,
            "exact": self.exact,
        }


def supercell_period(theta_i: float, theta_r: float, wavelength: float) -> float:
    diff = math.sin(theta_r) - math.sin(theta_i)
    if abs(diff) < 1e-12:
        raise NoSupercellNeeded(
            "sin(theta_r) == sin(theta_i): specular reflection, no supercell needed"
        )
    return wavelength / abs(diff)


def periodic_design(
    theta_i: float, theta_r: float, delta: float, wavelength: float
) -> PeriodicDesign:
    """Supercell for anomalous reflection θi → θr with element spacing delta.

    When D/delta is not an integer, the nearest realizable supercell is returned
    together with the angle it actually steers to.
    """
    require_positive("delta", delta)
    require_positive("wavelength", wavelength)
    period = supercell_period(theta_i, theta_r, wavelength)
    ratio = period / delta
    n_cells = round(ratio)
    if n_cells >= 1 and abs(ratio - n_cells) <= 1e-9:
        return PeriodicDesign(
            theta_i=theta_i,
            theta_r=theta_r,
            period_D=n_cells * delta,
            element_spacing=delta,
            cells_per_period=n_cells,
            requested_theta_r=theta_r,
            exact=True,
        )

    sign = 1.0 if math.sin(theta_r) > math.sin(theta_i) else -1.0
    n_cells = max(1, n_cells)
    while True:
        s = math.sin(theta_i) + sign * wavelength / (n_cells * delta)
        if abs(s) <= 1.0:
            break
        n_cells += 1
    achieved = math.asin(s)
    logger.info(
        "periodic_design non-integral D/delta=%.6f; using N_p=%d theta_r=%.4f deg (requested %.4f deg)",
        ratio,
        n_cells,
        math.degrees(achieved),
        math.degrees(theta_r),
    )
    return PeriodicDesign(
        theta_i=theta_i,
        theta_r=achieved,
        period_D=n_cells * delta,
        element_spacing=delta,
        cells_per_period=n_cells,
        requested_theta_r=theta_r,
        exact=False,
    )


def achievable_angles(
    theta_i: float,
    delta: float,
    wavelength: float,
    cells: Iterable[int],
    sign: int = 1,
) -> list[PeriodicDesign]:
    """Discrete reflection directions reachable with integer supercells."""
    require_positive("delta", delta)
    out: list[PeriodicDesign] = []
    for n_cells in cells:
        if n_cells < 1:
            raise PreconditionError(f"cells_per_period must be >= 1, got {n_cells}")
        s = math.sin(theta_i) + sign * wavelength / (n_cells * delta)
        if abs(s) > 1.0 + 1e-12:
            continue
        theta_r = math.asin(max(-1.0, min(1.0, s)))
        out.append(
            PeriodicDesign(
                theta_i=theta_i,
                theta_r=theta_r,
                period_D=n_cells * delta,
                element_spacing=delta,
                cells_per_period=int(n_cells),
                requested_theta_r=theta_r,
                exact=True,
            )
        )
    return out


# ── CSV layout ───────────────────────────────────────────────────────────


def field_to_frame(grid: FieldGrid) -> pd.DataFrame:
    xx, yy = np.meshgrid(grid.x, grid.y, indexing="ij")
    return pd.DataFrame(
        {
            "x": xx.ravel(),
            "y": yy.ravel(),
            "Re(Ex)": grid.ex.real.ravel(),
            "Im(Ex)": grid.ex.imag.ravel(),
            "Re(Ey)": grid.ey.real.ravel(),
            "Im(Ey)": grid.ey.imag.ravel(),
        },
        columns=FIELD_CSV_COLUMNS,
    )


def field_from_frame(frame: pd.DataFrame, plane_z: float, wavelength: float) -> FieldGrid:
    """Rebuild a FieldGrid from the CSV layout; rows may come in any order."""
    missing = [c for c in FIELD_CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise PreconditionError(f"field table is missing columns {missing}")
    xs = np.unique(frame["x"].to_numpy(dtype=float))
    ys = np.unique(frame["y"].to_numpy(dtype=float))
    nx, ny = len(xs), len(ys)
    if nx < 2 or ny < 2 or len(frame) != nx * ny:
        raise PreconditionError(
            f"field table is not a full regular grid ({len(frame)} rows, {nx}×{ny} axes)"
        )
    ordered = frame.sort_values(["x", "y"], kind="mergesort")
    ex = (ordered["Re(Ex)"].to_numpy() + 1j * ordered["Im(Ex)"].to_numpy()).reshape(nx, ny)
    ey = (ordered["Re(Ey)"].to_numpy() + 1j * ordered["Im(Ey)"].to_numpy()).reshape(nx, ny)
    return FieldGrid(
        plane_z=plane_z,
        dx=float(xs[1] - xs[0]),
        dy=float(ys[1] - ys[0]),
        ex=ex,
        ey=ey,
        wavelength=wavelength,
        x0=float(xs[0]),
        y0=float(ys[0]),
    )
