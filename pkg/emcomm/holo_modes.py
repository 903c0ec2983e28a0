"""Line-of-sight eigenmodes between continuous planar apertures.

Nyström discretization with midpoint quadrature of the scalar free-space
kernel G0(r) = e^{-jκr}/(2λr) (g0 = 1). Eigenmodes come from the SVD of the
weight-symmetrized matrix W_rx^{1/2} G W_tx^{1/2}, which solves the Tx and
Rx eigenproblems at once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .guardrails import PreconditionError, require_open_unit, require_positive
from .types import ComplexMat, RealVec, wavenumber
from .wavefield import FieldGrid

logger = logging.getLogger("emcomm")

RESOLUTION_FLOOR = 0.25  # grid spacing in wavelengths
MIN_POINTS = 4
DEFAULT_EPSILON = 0.5
CLUSTER_RTOL = 1e-6
SEPARABILITY_LIMIT = 0.05
OBLIQUITY_NOTE_BELOW = 0.9

_IDENTITY = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


def rotation_about(axis: str, angle: float) -> tuple[tuple[float, ...], ...]:
    """Rotation matrix about a coordinate axis, as nested tuples."""
    c, s = math.cos(angle), math.sin(angle)
    mats = {
        "x": ((1.0, 0.0, 0.0), (0.0, c, -s), (0.0, s, c)),
        "y": ((c, 0.0, s), (0.0, 1.0, 0.0), (-s, 0.0, c)),
        "z": ((c, -s, 0.0), (s, c, 0.0), (0.0, 0.0, 1.0)),
    }
    if axis not in mats:
        raise PreconditionError(f"unknown rotation axis {axis!r}")
    return mats[axis]


@dataclass(frozen=True)
class PlanarSurface:
    """Rectangle of side lengths lx × ly centered at `center`.

    Columns of `orientation` are the local x, y and normal axes. Quadrature
    nodes are cell midpoints, flattened row-major over [ix, iy].
    """

    center: tuple[float, float, float]
    lx: float
    ly: float
    nx: int
    ny: int
    orientation: tuple[tuple[float, ...], ...] = _IDENTITY

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        require_positive("lx", self.lx)
        require_positive("ly", self.ly)
        if self.nx < 1 or self.ny < 1:
            raise PreconditionError(f"nx, ny must be >= 1, got {self.nx}×{self.ny}")
        rot = self.rotation
        if rot.shape != (3, 3) or not np.allclose(rot.T @ rot, np.eye(3), atol=1e-12):
            raise PreconditionError("orientation must be orthonormal")

    @classmethod
    def square(
        cls,
        side: float,
        wavelength: float,
        center: Sequence[float] = (0.0, 0.0, 0.0),
        per_lambda: float = 4.0,
        orientation: tuple[tuple[float, ...], ...] = _IDENTITY,
    ) -> "PlanarSurface":
        """Square aperture with ceil(side·per_lambda/λ) nodes per side."""
        n = max(1, math.ceil(side * per_lambda / wavelength - 1e-9))
        return cls(tuple(center), side, side, n, n, orientation)  # type: ignore[arg-type]

    @property
    def rotation(self) -> np.ndarray:
        return np.asarray(self.orientation, dtype=float)

    @property
    def normal(self) -> np.ndarray:
        return self.rotation[:, 2]

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def size(self) -> int:
        return self.nx * self.ny

    def local_axes(self) -> tuple[RealVec, RealVec]:
        u = -0.5 * self.lx + (np.arange(self.nx) + 0.5) * self.dx
        v = -0.5 * self.ly + (np.arange(self.ny) + 0.5) * self.dy
        return u, v

    def points(self) -> np.ndarray:
        u, v = self.local_axes()
        uu, vv = np.meshgrid(u, v, indexing="ij")
        rot = self.rotation
        return (
            np.asarray(self.center)[None, :]
            + uu.reshape(-1, 1) * rot[:, 0][None, :]
            + vv.reshape(-1, 1) * rot[:, 1][None, :]
        )

    def weights(self) -> RealVec:
        return np.full(self.size, self.dx * self.dy)

    def check_resolution(self, wavelength: float) -> None:
        floor = RESOLUTION_FLOOR * wavelength
        for side, n, name in ((self.lx, self.nx, "x"), (self.ly, self.ny, "y")):
            if side / n > floor * (1.0 + 1e-9):
                raise PreconditionError(
                    f"grid spacing {side / n / wavelength:.4g}λ along {name} exceeds λ/4"
                )
            # a side already below the floor may be a single node
            if n < MIN_POINTS and side > floor * (1.0 + 1e-9):
                raise PreconditionError(f"need at least {MIN_POINTS} nodes along {name}, got {n}")


def green(r_rx: Sequence[float], r_tx: Sequence[float], wavelength: float) -> complex:
    """G0 = e^{-jκ|r|}/(2λ|r|) with g0 = 1."""
    r = float(np.linalg.norm(np.asarray(r_rx, dtype=float) - np.asarray(r_tx, dtype=float)))
    if r == 0.0:
        raise PreconditionError("green() is singular for coincident points")
    kappa = wavenumber(wavelength)
    return complex(np.exp(-1j * kappa * r) / (2.0 * wavelength * r))


def array_channel(rx_points: np.ndarray, tx_points: np.ndarray, wavelength: float) -> ComplexMat:
    """Green matrix between discrete points, rows = Rx."""
    rx_points = np.atleast_2d(np.asarray(rx_points, dtype=float))
    tx_points = np.atleast_2d(np.asarray(tx_points, dtype=float))
    r = np.linalg.norm(rx_points[:, None, :] - tx_points[None, :, :], axis=-1)
    if np.any(r == 0.0):
        raise PreconditionError("coincident Tx/Rx points")
    return np.exp(-1j * wavenumber(wavelength) * r) / (2.0 * wavelength * r)


@dataclass
class WeightedOperator:
    g: ComplexMat
    w_tx: RealVec
    w_rx: RealVec
    wavelength: float
    tx: PlanarSurface | None = None
    rx: PlanarSurface | None = None

    def symmetrized(self) -> ComplexMat:
        return np.sqrt(self.w_rx)[:, None] * self.g * np.sqrt(self.w_tx)[None, :]

    def transposed(self) -> "WeightedOperator":
        return WeightedOperator(self.g.T, self.w_rx, self.w_tx, self.wavelength, self.rx, self.tx)


def coupling_operator(tx: PlanarSurface, rx: PlanarSurface, wavelength: float) -> WeightedOperator:
    """G[i, j] = G0(|r_rx,i - r_tx,j|) with midpoint weights on both surfaces."""
    require_positive("wavelength", wavelength)
    tx.check_resolution(wavelength)
    rx.check_resolution(wavelength)
    p_tx = tx.points()
    p_rx = rx.points()
    r = np.linalg.norm(p_rx[:, None, :] - p_tx[None, :, :], axis=-1)
    gap = 0.5 * min(tx.dx, tx.dy, rx.dx, rx.dy)
    if float(np.min(r)) < gap:
        raise PreconditionError(
            f"surfaces overlap: nodes {float(np.min(r)) / wavelength:.3g}λ apart"
        )
    g = np.exp(-1j * wavenumber(wavelength) * r) / (2.0 * wavelength * r)
    logger.debug("coupling_operator rx=%d tx=%d", rx.size, tx.size)
    return WeightedOperator(g=g, w_tx=tx.weights(), w_rx=rx.weights(), wavelength=wavelength, tx=tx, rx=rx)


def apply_operator(op: WeightedOperator, current: np.ndarray) -> ComplexMat:
    """Field on the Rx nodes radiated by Tx current samples."""
    return op.g @ (op.w_tx * np.asarray(current, dtype=complex))


def tx_kernel(op: WeightedOperator) -> ComplexMat:
    """Samples of G_Tx(r, r') = ∫ G0*(r_rx, r) G0(r_rx, r') dr_rx."""
    return op.g.conj().T @ (op.w_rx[:, None] * op.g)


def rx_kernel(op: WeightedOperator) -> ComplexMat:
    """Samples of G_Rx(r, r') = ∫ G0(r, r_tx) G0*(r', r_tx) dr_tx."""
    return op.g @ (op.w_tx[:, None] * op.g.conj().T)


def kernel_spectrum(kernel: ComplexMat, weights: RealVec) -> RealVec:
    """Eigenvalues of a sampled Hermitian kernel under the quadrature inner product, descending."""
    sw = np.sqrt(weights)
    sym = sw[:, None] * kernel * sw[None, :]
    sym = 0.5 * (sym + sym.conj().T)
    return scipy.linalg.eigvalsh(sym)[::-1]


@dataclass
class ModeSet:
    mu: RealVec
    phi: ComplexMat
    psi: ComplexMat
    w_tx: RealVec
    w_rx: RealVec
    g0: float = 1.0

    @property
    def sigma(self) -> RealVec:
        return np.sqrt(self.mu)

    @property
    def normalized(self) -> RealVec:
        return self.mu / self.mu[0]

    def __len__(self) -> int:
        return int(self.mu.size)


def eigenmodes(op: WeightedOperator) -> ModeSet:
    a = op.symmetrized()
    u, s, vh = scipy.linalg.svd(a, full_matrices=False)
    sq_tx = np.sqrt(op.w_tx)
    sq_rx = np.sqrt(op.w_rx)
    if s.size and s[-1] < 1e-13 * s[0]:
        logger.warning(
            "eigenmodes numerical rank %d of %d", int(np.sum(s >= 1e-13 * s[0])), s.size
        )
    return ModeSet(
        mu=s**2,
        phi=vh.conj().T / sq_tx[:, None],
        psi=u / sq_rx[:, None],
        w_tx=op.w_tx,
        w_rx=op.w_rx,
    )


def nedof_count(modes: ModeSet, epsilon: float = DEFAULT_EPSILON) -> int:
    """#{m : μ_m/μ_1 >= ε}."""
    if len(modes) == 0 or modes.mu[0] <= 0.0:
        raise PreconditionError("empty or zero spectrum")
    if not (0.0 < epsilon <= 1.0):
        raise PreconditionError(f"epsilon must lie in (0, 1], got {epsilon}")
    return int(np.count_nonzero(modes.normalized >= epsilon * (1.0 - 1e-12)))


def transition_indices(mu: np.ndarray, upper: float = 0.9, lower: float = 0.1) -> tuple[int, int]:
    """Counts of normalized eigenvalues above `upper` and above `lower`."""
    norm = np.asarray(mu, dtype=float) / float(mu[0])
    return int(np.count_nonzero(norm >= upper)), int(np.count_nonzero(norm >= lower))


def transition_width(mu: np.ndarray, upper: float = 0.9, lower: float = 0.1) -> float:
    """Fractional index distance between the `upper` and `lower` crossings."""
    norm = np.asarray(mu, dtype=float) / float(mu[0])
    idx = np.arange(norm.size, dtype=float)
    # np.interp needs increasing abscissae
    rev = norm[::-1]
    return float(np.interp(lower, rev, idx[::-1]) - np.interp(upper, rev, idx[::-1]))


# ── closed-form estimates ────────────────────────────────────────────────


@dataclass(frozen=True)
class TimeBandwidth:
    omega: float
    duration: float


@dataclass(frozen=True)
class LineApertures:
    l_tx: float
    l_rx: float
    d0: float
    wavelength: float
    upsilon: float = 1.0


def nedof_estimate_1d(kind: TimeBandwidth | LineApertures) -> float:
    if isinstance(kind, TimeBandwidth):
        require_positive("omega", kind.omega)
        require_positive("duration", kind.duration)
        return kind.omega * kind.duration / math.pi
    if isinstance(kind, LineApertures):
        for name in ("l_tx", "l_rx", "d0", "wavelength", "upsilon"):
            require_positive(name, getattr(kind, name))
        return kind.l_tx * kind.l_rx / (kind.wavelength * kind.d0) * kind.upsilon
    raise PreconditionError(f"unsupported estimate kind {type(kind).__name__}")


def nedof_transition_1d(n1: float, epsilon: float) -> float:
    """N1 + (1/π²) ln((1-ε)/ε) ln(πN1/2); natural logarithms, o(log N1) dropped."""
    if n1 <= 2.0 / math.pi:
        raise PreconditionError(f"N1 must exceed 2/π, got {n1}")
    require_open_unit("epsilon", epsilon)
    return n1 + math.log((1.0 - epsilon) / epsilon) * math.log(math.pi * n1 / 2.0) / math.pi**2


def landau_note(a_tx: float, a_rx: float, d0: float) -> str | None:
    if math.sqrt(max(a_tx, a_rx)) > d0:
        return (
            f"apertures (side {math.sqrt(max(a_tx, a_rx)):.4g} m) exceed the distance "
            f"{d0:.4g} m; the Landau estimate assumes they are not too large"
        )
    return None


def nedof_estimate_2d(
    a_tx: float, a_rx: float, wavelength: float, d0: float, psi: float = 1.0
) -> tuple[float, float]:
    """(N2, W_G) with W_G = 4π² A_Rx Ψ/(λ² d0²) and N2 = A_Tx W_G/(4π²)."""
    for name, value in (("a_tx", a_tx), ("a_rx", a_rx), ("wavelength", wavelength), ("d0", d0), ("psi", psi)):
        require_positive(name, value)
    note = landau_note(a_tx, a_rx, d0)
    if note:
        logger.warning("nedof_estimate_2d: %s", note)
    w_g = 4.0 * math.pi**2 * a_rx * psi / (wavelength**2 * d0**2)
    return a_tx * w_g / (4.0 * math.pi**2), w_g


def center_distance(tx: PlanarSurface, rx: PlanarSurface) -> float:
    return float(np.linalg.norm(np.asarray(rx.center) - np.asarray(tx.center)))


def geometry_factor(tx: PlanarSurface, rx: PlanarSurface) -> float:
    """Obliquity factor d0²/(A_Tx A_Rx) ∫∫ |n_Tx·r̂| |n_Rx·r̂| / r² dA_Tx dA_Rx.

    Midpoint quadrature on the surface grids. Tends to 1 for small parallel
    coaxial apertures; for squares of side L at distance d0 it behaves as
    1 - (2/3)(L/d0)² while L ≪ d0 and is about 0.63 at L = d0.
    """
    p_tx, p_rx = tx.points(), rx.points()
    diff = p_rx[:, None, :] - p_tx[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", diff, diff)
    if np.any(r2 == 0.0):
        raise PreconditionError("surfaces share a point")
    obliquity = np.abs(diff @ tx.normal) * np.abs(diff @ rx.normal) / r2**2
    d0 = center_distance(tx, rx)
    total = float(rx.weights() @ obliquity @ tx.weights())
    return d0**2 * total / (tx.area * rx.area)


@dataclass
class NeDoFReport:
    count: int
    epsilon: float
    n2: float
    w_g: float
    transition: tuple[int, int]
    psi: float = 1.0
    psi_geometric: float = 1.0
    notes: list[str] = field(default_factory=list)

    @property
    def n2_geometric(self) -> float:
        """Area estimate with Ψ replaced by the obliquity factor of the actual pose."""
        return self.n2 * self.psi_geometric / self.psi

    def to_dict(self) -> dict[str, object]:
        return {
            "count": self.count,
            "epsilon": self.epsilon,
            "n2": self.n2,
            "w_g": self.w_g,
            "psi": self.psi,
            "psi_geometric": self.psi_geometric,
            "n2_geometric": self.n2_geometric,
            "transition_upper_0.9": self.transition[0],
            "transition_lower_0.1": self.transition[1],
            "notes": list(self.notes),
        }


def nedof_report(
    modes: ModeSet,
    tx: PlanarSurface,
    rx: PlanarSurface,
    wavelength: float,
    epsilon: float = DEFAULT_EPSILON,
    psi: float = 1.0,
) -> NeDoFReport:
    d0 = center_distance(tx, rx)
    n2, w_g = nedof_estimate_2d(tx.area, rx.area, wavelength, d0, psi)
    psi_geometric = geometry_factor(tx, rx)
    notes = []
    note = landau_note(tx.area, rx.area, d0)
    if note:
        notes.append(note)
    if not _paraxial_pose(tx, rx):
        notes.append("surfaces are not parallel and coaxial; Ψ = %.3g is user-supplied" % psi)
    if psi_geometric < OBLIQUITY_NOTE_BELOW:
        notes.append(
            "obliquity factor Ψ_geom = %.3g; expect the count near N2·Ψ_geom = %.4g rather than N2"
            % (psi_geometric, n2 * psi_geometric / psi)
        )
    return NeDoFReport(
        count=nedof_count(modes, epsilon),
        epsilon=epsilon,
        n2=n2,
        w_g=w_g,
        transition=transition_indices(modes.mu),
        psi=psi,
        psi_geometric=psi_geometric,
        notes=notes,
    )


# ── validations ─────────────────────────────────────────────────────────


@dataclass
class SlepianSpectrum:
    eigenvalues: RealVec
    n1: float

    def count(self, epsilon: float = DEFAULT_EPSILON) -> int:
        return int(np.count_nonzero(self.eigenvalues >= epsilon))


def slepian_validation(omega: float, duration: float, n: int) -> SlepianSpectrum:
    """Midpoint Nyström spectrum of sin(Ω(t-t'))/(π(t-t')) on [-T/2, T/2]."""
    n1 = nedof_estimate_1d(TimeBandwidth(omega, duration))
    if n < 8.0 * n1:
        raise PreconditionError(f"need n >= 8·ΩT/π = {8 * n1:.1f} nodes, got {n}")
    h = duration / n
    lag = np.arange(n) * h
    first = np.empty(n)
    first[0] = omega / math.pi
    first[1:] = np.sin(omega * lag[1:]) / (math.pi * lag[1:])
    kernel = h * scipy.linalg.toeplitz(first)
    eigs = scipy.linalg.eigvalsh(kernel)[::-1]
    return SlepianSpectrum(eigenvalues=eigs, n1=n1)


def _paraxial_pose(tx: PlanarSurface, rx: PlanarSurface, tol: float = 1e-9) -> bool:
    rt, rr = tx.rotation, rx.rotation
    if abs(abs(float(rt[:, 2] @ rr[:, 2])) - 1.0) > tol:
        return False
    if abs(abs(float(rt[:, 0] @ rr[:, 0])) - 1.0) > tol:
        return False
    offset = np.asarray(rx.center) - np.asarray(tx.center)
    lateral = offset - (offset @ rt[:, 2]) * rt[:, 2]
    return float(np.linalg.norm(lateral)) <= tol * max(1.0, float(np.linalg.norm(offset)))


def _clusters(mu: RealVec, count: int) -> list[list[int]]:
    out: list[list[int]] = []
    top = float(mu[0])
    i = 0
    while i < count:
        group = [i]
        while group[-1] + 1 < mu.size and abs(mu[group[-1]] - mu[group[-1] + 1]) / top < CLUSTER_RTOL:
            group.append(group[-1] + 1)
        out.append(group)
        i = group[-1] + 1
    return out


def _separability(mats: list[np.ndarray]) -> float:
    k = len(mats)
    worst = 0.0
    for joined in (np.hstack(mats), np.vstack(mats)):
        s = scipy.linalg.svdvals(joined)
        total = float(np.sum(s**2))
        worst = max(worst, 1.0 - float(np.sum(s[:k] ** 2)) / total if total > 0 else 0.0)
    return worst


def paraxial_factorization_check(
    modes: ModeSet, tx: PlanarSurface, rx: PlanarSurface, count: int = 10
) -> RealVec:
    """Rank-1 residual of each leading mode reshaped onto its grid.

    Modes inside an eigenvalue cluster are scored as a subspace and share one
    residual. The larger of the Tx and Rx residuals is reported.
    """
    if not _paraxial_pose(tx, rx):
        raise PreconditionError(
            "factorization check needs parallel, coaxial, axis-aligned surfaces"
        )
    count = min(count, len(modes))
    residuals = np.zeros(count)
    for group in _clusters(modes.mu, count):
        worst = 0.0
        for samples, surf in ((modes.phi, tx), (modes.psi, rx)):
            mats = [samples[:, m].reshape(surf.nx, surf.ny) for m in group]
            worst = max(worst, _separability(mats))
        for m in group:
            if m < count:
                residuals[m] = worst
    return residuals


def rayleigh_spacing(wavelength: float, distance: float, n: int) -> float:
    """d_opt = sqrt(λD/N)."""
    require_positive("wavelength", wavelength)
    require_positive("distance", distance)
    if n < 1:
        raise PreconditionError(f"N must be >= 1, got {n}")
    return math.sqrt(wavelength * distance / n)


def broadside_arrays(
    n: int, spacing: float, distance: float
) -> tuple[np.ndarray, np.ndarray]:
    """Two n-element linear arrays along x, facing each other across z = distance."""
    x = (np.arange(n) - 0.5 * (n - 1)) * spacing
    tx = np.stack([x, np.zeros(n), np.zeros(n)], axis=1)
    rx = np.stack([x, np.zeros(n), np.full(n, distance)], axis=1)
    return tx, rx


def fraunhofer_distance(size: float, wavelength: float) -> float:
    """2D²/λ."""
    require_positive("size", size)
    require_positive("wavelength", wavelength)
    return 2.0 * size**2 / wavelength


@dataclass
class Projection:
    coefficients: ComplexMat
    residuals: RealVec
    n_terms: int

    @property
    def residual(self) -> float:
        return float(self.residuals[self.n_terms - 1]) if self.n_terms else 1.0


def project(
    modes: ModeSet, samples: np.ndarray, side: str = "tx", n_terms: int | None = None
) -> Projection:
    """Weighted inner-product coefficients and relative L²(w) residuals of every truncation."""
    if side not in ("tx", "rx"):
        raise PreconditionError(f"side must be 'tx' or 'rx', got {side!r}")
    basis, w = (modes.phi, modes.w_tx) if side == "tx" else (modes.psi, modes.w_rx)
    f = np.asarray(samples, dtype=complex).ravel()
    if f.size != basis.shape[0]:
        raise PreconditionError(f"expected {basis.shape[0]} samples, got {f.size}")
    if n_terms is not None and not (0 <= n_terms <= basis.shape[1]):
        raise PreconditionError(f"n_terms must lie in [0, {basis.shape[1]}], got {n_terms}")
    coeff = basis.conj().T @ (w * f)
    norm2 = float(np.real(np.vdot(f, w * f)))
    if norm2 == 0.0:
        return Projection(coeff, np.zeros(coeff.size), coeff.size if n_terms is None else n_terms)
    outside = f - basis @ coeff
    out_of_span = float(np.real(np.vdot(outside, w * outside)))
    # tail[N-1] = Σ_{m>=N} |c_m|², summed from the small end
    power = np.abs(coeff) ** 2
    tail = np.concatenate([np.cumsum(power[::-1])[::-1][1:], [0.0]])
    residuals = np.sqrt((out_of_span + tail) / norm2)
    return Projection(coeff, residuals, coeff.size if n_terms is None else n_terms)


def mode_field(modes: ModeSet, surface: PlanarSurface, m: int, wavelength: float, side: str = "tx") -> FieldGrid:
    """Mode samples laid out as a FieldGrid in the surface's local coordinates."""
    samples = modes.phi if side == "tx" else modes.psi
    return FieldGrid(
        plane_z=0.0,
        dx=surface.dx,
        dy=surface.dy,
        ex=samples[:, m].reshape(surface.nx, surface.ny),
        ey=np.zeros((surface.nx, surface.ny), dtype=complex),
        wavelength=wavelength,
        x0=-0.5 * surface.lx + 0.5 * surface.dx,
        y0=-0.5 * surface.ly + 0.5 * surface.dy,
    )
