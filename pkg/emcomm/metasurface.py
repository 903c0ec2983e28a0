"""Loaded thin-wire dipole arrays and their impedance blocks.

Impedances follow the induced-EMF method with the sinusoidal current
I(s) = sin(κ(L/2 - |s|)), referred to the feed current I(0). All quadrature
runs in wavelength-normalized coordinates (κ = 2π), so blocks are invariant
under rigid translation and under joint scaling of geometry and wavelength.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate, special

from .guardrails import (
    LoadResonanceError,
    PreconditionError,
    checked_solve,
    require_positive,
    worker_count,
)
from .types import C0, DEFAULT_Z0, EPS0, ETA0, PORT_GROUPS, ComplexMat

logger = logging.getLogger("emcomm")

THIN_WIRE_RATIO = 50.0
OPEN_CIRCUIT_OHMS = 1e12
DIRECT_LINK_LOS = "los"
DIRECT_LINK_BLOCKED = "blocked"

_KAPPA_N = 2.0 * math.pi
_GL_ORDERS = (16, 32, 64, 128, 256)
_MUTUAL_RTOL = 1e-8
_SELF_OUTER_ORDER = 64


class OverlapError(PreconditionError):
    """Two wires occupy the same volume."""

    def __init__(self, first: str, second: str, distance: float):
        self.pair = (first, second)
        self.distance = distance
        super().__init__(
            f"elements {first} and {second} overlap (axis distance {distance:.3e} m)"
        )


@dataclass(frozen=True)
class DipoleElement:
    center: tuple[float, float, float]
    axis: tuple[float, float, float]
    length: float
    wire_radius: float
    # None for ports whose termination is set elsewhere (Tx/Rx, RIS under optimization)
    load: complex | None = None
    name: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "axis", tuple(float(c) for c in self.axis))
        require_positive("length", self.length)
        require_positive("wire_radius", self.wire_radius)
        if self.wire_radius > self.length / THIN_WIRE_RATIO:
            raise PreconditionError(
                f"wire_radius {self.wire_radius:.3e} exceeds length/{THIN_WIRE_RATIO:g} "
                f"(thin-wire limit) for element {self.name or '?'}"
            )
        norm = float(np.linalg.norm(self.axis))
        if abs(norm - 1.0) > 1e-12:
            raise PreconditionError(f"axis must have unit norm, got |axis|={norm!r}")

    @classmethod
    def oriented(
        cls,
        center: Sequence[float],
        axis: Sequence[float],
        length: float,
        wire_radius: float,
        load: complex | None = None,
        name: str = "",
    ) -> "DipoleElement":
        """Build an element from any non-zero axis direction."""
        a = np.asarray(axis, dtype=float)
        n = float(np.linalg.norm(a))
        if n == 0.0:
            raise PreconditionError("axis must be non-zero")
        return cls(tuple(center), tuple(a / n), length, wire_radius, load, name)  # type: ignore[arg-type]

    @property
    def position(self) -> np.ndarray:
        return np.asarray(self.center)

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.axis)

    def endpoints(self) -> tuple[np.ndarray, np.ndarray]:
        half = 0.5 * self.length * self.direction
        return self.position - half, self.position + half

    def translated(self, offset: Sequence[float]) -> "DipoleElement":
        return replace(self, center=tuple(self.position + np.asarray(offset, dtype=float)))

    def scaled(self, factor: float) -> "DipoleElement":
        return replace(
            self,
            center=tuple(self.position * factor),
            length=self.length * factor,
            wire_radius=self.wire_radius * factor,
        )


def _rotation_ok(rot: np.ndarray) -> bool:
    return rot.shape == (3, 3) and np.allclose(rot.T @ rot, np.eye(3), atol=1e-12)


@dataclass(frozen=True)
class MetasurfaceSpec:
    """Regular rows × cols grid of identical dipoles in a posed plane.

    The template's center is ignored; its axis is given in the surface's local
    frame (columns of `orientation` are the local x, y and normal axes).
    Element order is row-major: index = row·cols + col.
    """

    rows: int
    cols: int
    spacing: float
    template: DipoleElement
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise PreconditionError(f"rows/cols must be >= 1, got {self.rows}×{self.cols}")
        require_positive("spacing", self.spacing)
        if not _rotation_ok(np.asarray(self.orientation, dtype=float)):
            raise PreconditionError("orientation must be an orthonormal 3×3 matrix")
        if self.rows * self.cols > 1 and self.spacing < 2.0 * self.template.wire_radius:
            raise PreconditionError(
                f"spacing {self.spacing:.3e} is below the wire diameter {2 * self.template.wire_radius:.3e}"
            )

    @classmethod
    def from_aperture(
        cls,
        size_x: float,
        size_y: float,
        spacing: float,
        template: DipoleElement,
        center: Sequence[float] = (0.0, 0.0, 0.0),
    ) -> "MetasurfaceSpec":
        """Fixed aperture: element count per axis = round(size/spacing), at least 1."""
        require_positive("spacing", spacing)
        cols = max(1, round(size_x / spacing))
        rows = max(1, round(size_y / spacing))
        return cls(rows=rows, cols=cols, spacing=spacing, template=template, center=tuple(center))  # type: ignore[arg-type]

    @property
    def count(self) -> int:
        return self.rows * self.cols

    def elements(self) -> list[DipoleElement]:
        rot = np.asarray(self.orientation, dtype=float)
        axis = rot @ self.template.direction
        origin = np.asarray(self.center, dtype=float)
        out = []
        for r in range(self.rows):
            for c in range(self.cols):
                local = np.array(
                    [
                        (c - 0.5 * (self.cols - 1)) * self.spacing,
                        (r - 0.5 * (self.rows - 1)) * self.spacing,
                        0.0,
                    ]
                )
                out.append(
                    replace(
                        self.template,
                        center=tuple(origin + rot @ local),
                        axis=tuple(axis),
                        name=f"S{r * self.cols + c}",
                    )
                )
        return out


def linear_array(
    count: int,
    spacing: float,
    template: DipoleElement,
    center: Sequence[float] = (0.0, 0.0, 0.0),
) -> MetasurfaceSpec:
    """Single row of `count` elements along the local x axis."""
    return MetasurfaceSpec(rows=1, cols=count, spacing=spacing, template=template, center=tuple(center))  # type: ignore[arg-type]


@dataclass(frozen=True)
class NetworkScenario:
    tx: tuple[DipoleElement, ...]
    rx: tuple[DipoleElement, ...]
    wavelength: float
    ris: MetasurfaceSpec | None = None
    environment: tuple[DipoleElement, ...] = ()
    z0: float = DEFAULT_Z0
    direct_link: str = DIRECT_LINK_LOS

    def __post_init__(self) -> None:
        object.__setattr__(self, "tx", tuple(self.tx))
        object.__setattr__(self, "rx", tuple(self.rx))
        object.__setattr__(self, "environment", tuple(self.environment))
        require_positive("wavelength", self.wavelength)
        if isinstance(self.z0, complex) or not np.isfinite(self.z0) or self.z0 <= 0:
            raise PreconditionError(f"Z0 must be real and > 0, got {self.z0!r}")
        if not self.tx or not self.rx:
            raise PreconditionError("scenario needs at least one Tx and one Rx element")
        if self.direct_link not in (DIRECT_LINK_LOS, DIRECT_LINK_BLOCKED):
            raise PreconditionError(f"direct_link must be 'los' or 'blocked', got {self.direct_link!r}")
        for e in self.environment:
            if e.load is None:
                raise PreconditionError(f"environment element {e.name or '?'} has no load")

    def ris_elements(self) -> list[DipoleElement]:
        return self.ris.elements() if self.ris is not None else []

    def groups(self) -> dict[str, list[DipoleElement]]:
        """Elements per port group with stable names (T0.., S0.., R0.., O0..)."""
        def named(prefix: str, items: Sequence[DipoleElement]) -> list[DipoleElement]:
            return [replace(e, name=f"{prefix}{i}") for i, e in enumerate(items)]

        members = (self.tx, self.ris_elements(), self.rx, self.environment)
        return {g: named(g, items) for g, items in zip(PORT_GROUPS, members)}

    def translated(self, offset: Sequence[float]) -> "NetworkScenario":
        ris = self.ris
        if ris is not None:
            ris = replace(ris, center=tuple(np.asarray(ris.center) + np.asarray(offset, dtype=float)))
        return replace(
            self,
            tx=tuple(e.translated(offset) for e in self.tx),
            rx=tuple(e.translated(offset) for e in self.rx),
            environment=tuple(e.translated(offset) for e in self.environment),
            ris=ris,
        )

    def scaled(self, factor: float) -> "NetworkScenario":
        ris = self.ris
        if ris is not None:
            ris = replace(
                ris,
                spacing=ris.spacing * factor,
                template=ris.template.scaled(factor),
                center=tuple(np.asarray(ris.center) * factor),
            )
        return replace(
            self,
            tx=tuple(e.scaled(factor) for e in self.tx),
            rx=tuple(e.scaled(factor) for e in self.rx),
            environment=tuple(e.scaled(factor) for e in self.environment),
            ris=ris,
            wavelength=self.wavelength * factor,
        )


@dataclass
class ImpedanceBlocks:
    """Impedance blocks over the port groups T (Tx), S (RIS), R (Rx), O (environment).

    Blocks not stored are recovered by reciprocity (Z_TS = Z_STᵀ, ...).
    """

    z_rt: ComplexMat
    z_st: ComplexMat
    z_rs: ComplexMat
    z_ss: ComplexMat
    z_tt: ComplexMat | None = None
    z_rr: ComplexMat | None = None
    z_ot: ComplexMat | None = None
    z_os: ComplexMat | None = None
    z_or: ComplexMat | None = None
    z_oo: ComplexMat | None = None
    # lumped loads of the environment dipoles, one per O port
    z_env_loads: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self) -> None:
        self.z_rt = np.atleast_2d(np.asarray(self.z_rt, dtype=complex))
        n_r, n_t = self.z_rt.shape
        self.z_st = np.asarray(self.z_st, dtype=complex).reshape(-1, n_t)
        n_s = self.z_st.shape[0]
        self.z_rs = np.asarray(self.z_rs, dtype=complex).reshape(n_r, n_s)
        self.z_ss = np.asarray(self.z_ss, dtype=complex).reshape(n_s, n_s)
        self.z_env_loads = np.asarray(self.z_env_loads, dtype=complex).ravel()
        n_o = self.z_env_loads.size
        if self.z_oo is None:
            self.z_oo = np.zeros((n_o, n_o), dtype=complex)
        if self.z_ot is None:
            self.z_ot = np.zeros((n_o, n_t), dtype=complex)
        if self.z_os is None:
            self.z_os = np.zeros((n_o, n_s), dtype=complex)
        if self.z_or is None:
            self.z_or = np.zeros((n_o, n_r), dtype=complex)
        self.z_oo = np.asarray(self.z_oo, dtype=complex).reshape(n_o, n_o)
        self.z_ot = np.asarray(self.z_ot, dtype=complex).reshape(n_o, n_t)
        self.z_os = np.asarray(self.z_os, dtype=complex).reshape(n_o, n_s)
        self.z_or = np.asarray(self.z_or, dtype=complex).reshape(n_o, n_r)

    @property
    def z_emc(self) -> ComplexMat:
        return self.z_ss

    @property
    def n_t(self) -> int:
        return int(self.z_rt.shape[1])

    @property
    def n_r(self) -> int:
        return int(self.z_rt.shape[0])

    @property
    def n_s(self) -> int:
        return int(self.z_ss.shape[0])

    @property
    def n_o(self) -> int:
        return int(self.z_env_loads.size)

    def _diag_or_default(self, block: ComplexMat | None, n: int) -> ComplexMat:
        if block is None:
            return np.zeros((n, n), dtype=complex)
        return np.asarray(block, dtype=complex)

    def full_matrix(self) -> ComplexMat:
        """Many-port impedance matrix over (T, S, R, O) in that order."""
        z_tt = self._diag_or_default(self.z_tt, self.n_t)
        z_rr = self._diag_or_default(self.z_rr, self.n_r)
        assert self.z_ot is not None and self.z_os is not None
        assert self.z_or is not None and self.z_oo is not None
        return np.block(
            [
                [z_tt, self.z_st.T, self.z_rt.T, self.z_ot.T],
                [self.z_st, self.z_ss, self.z_rs.T, self.z_os.T],
                [self.z_rt, self.z_rs, z_rr, self.z_or.T],
                [self.z_ot, self.z_os, self.z_or, self.z_oo],
            ]
        )

    def swapped(self) -> "ImpedanceBlocks":
        """Relabel Tx ↔ Rx."""
        return ImpedanceBlocks(
            z_rt=self.z_rt.T,
            z_st=self.z_rs.T,
            z_rs=self.z_st.T,
            z_ss=self.z_ss,
            z_tt=self.z_rr,
            z_rr=self.z_tt,
            z_ot=self.z_or,
            z_os=self.z_os,
            z_or=self.z_ot,
            z_oo=self.z_oo,
            z_env_loads=self.z_env_loads,
        )

    def permuted(self, order: Sequence[int]) -> "ImpedanceBlocks":
        """Reorder the RIS ports."""
        p = np.asarray(order, dtype=int)
        assert self.z_os is not None
        return replace(
            self,
            z_st=self.z_st[p],
            z_rs=self.z_rs[:, p],
            z_ss=self.z_ss[np.ix_(p, p)],
            z_os=self.z_os[:, p],
        )

    def without_environment(self) -> "ImpedanceBlocks":
        return ImpedanceBlocks(
            z_rt=self.z_rt,
            z_st=self.z_st,
            z_rs=self.z_rs,
            z_ss=self.z_ss,
            z_tt=self.z_tt,
            z_rr=self.z_rr,
        )


# ── induced-EMF quadrature ───────────────────────────────────────────────


def _current(s: np.ndarray, half: float) -> np.ndarray:
    return np.sin(_KAPPA_N * (half - np.abs(s)))


def _current_slope(s: np.ndarray, half: float) -> np.ndarray:
    return -_KAPPA_N * np.cos(_KAPPA_N * (half - np.abs(s))) * np.sign(s)


def _feed_current(half: float) -> float:
    i0 = math.sin(_KAPPA_N * half)
    if abs(i0) < 1e-6:
        raise PreconditionError(
            f"feed current vanishes for length {2 * half:.6g}λ (full-wave resonance); "
            "input impedance is undefined under the sinusoidal current model"
        )
    return i0


@functools.lru_cache(maxsize=64)
def _gauss_halves(order: int, half: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on [-half, 0] ∪ [0, half]."""
    x, w = np.polynomial.legendre.leggauss(order)
    left = 0.5 * half * (x - 1.0)
    right = 0.5 * half * (x + 1.0)
    return np.concatenate([left, right]), np.concatenate([w, w]) * 0.5 * half


@functools.lru_cache(maxsize=256)
def _self_impedance_normalized(half: float, radius: float) -> complex:
    """Reduced-kernel self impedance of a wire of half-length `half` (units of λ)."""
    i0 = _feed_current(half)
    s_nodes, s_weights = _gauss_halves(_SELF_OUTER_ORDER, half)
    total = 0j
    for s, ws in zip(s_nodes, s_weights):
        i_s = float(_current(np.array(s), half))
        di_s = float(_current_slope(np.array(s), half))

        def integrand(t: float, s: float = s, i_s: float = i_s, di_s: float = di_s) -> complex:
            r = math.sqrt((s - t) ** 2 + radius**2)
            i_t = math.sin(_KAPPA_N * (half - abs(t)))
            di_t = -_KAPPA_N * math.cos(_KAPPA_N * (half - abs(t))) * math.copysign(1.0, t)
            return (_KAPPA_N**2 * i_s * i_t - di_s * di_t) * complex(
                math.cos(_KAPPA_N * r), -math.sin(_KAPPA_N * r)
            ) / r

        breaks = sorted({s, 0.0} - {-half, half})
        value, _ = integrate.quad(
            integrand,
            -half,
            half,
            points=breaks,
            complex_func=True,
            epsabs=0.0,
            epsrel=1e-10,
            limit=400,
        )
        total += ws * value
    return complex(1j * ETA0 / (4.0 * math.pi * _KAPPA_N) * total / i0**2)


def _mutual_normalized(
    ca: np.ndarray, ua: np.ndarray, half_a: float, cb: np.ndarray, ub: np.ndarray, half_b: float
) -> complex:
    i0 = _feed_current(half_a) * _feed_current(half_b)
    dot = float(ua @ ub)
    previous: complex | None = None
    value = 0j
    for order in _GL_ORDERS:
        sa, wa = _gauss_halves(order, half_a)
        sb, wb = _gauss_halves(order, half_b)
        pa = ca[None, :] + sa[:, None] * ua[None, :]
        pb = cb[None, :] + sb[:, None] * ub[None, :]
        r = np.linalg.norm(pa[:, None, :] - pb[None, :, :], axis=-1)
        g = np.exp(-1j * _KAPPA_N * r) / r
        term = _KAPPA_N**2 * dot * np.outer(_current(sa, half_a), _current(sb, half_b))
        term = term - np.outer(_current_slope(sa, half_a), _current_slope(sb, half_b))
        value = complex(wa @ (term * g) @ wb)
        if previous is not None and abs(value - previous) <= _MUTUAL_RTOL * abs(value):
            break
        previous = value
    else:
        logger.warning(
            "mutual quadrature not converged at order %d (last change %.3e)",
            _GL_ORDERS[-1],
            abs(value - previous) / max(abs(value), 1e-300) if previous is not None else float("nan"),
        )
    return complex(1j * ETA0 / (4.0 * math.pi * _KAPPA_N) * value / i0)


def segment_distance(a: DipoleElement, b: DipoleElement) -> float:
    """Shortest distance between the two wire axes (closed segments)."""
    p0, p1 = a.endpoints()
    q0, q1 = b.endpoints()
    d1 = p1 - p0
    d2 = q1 - q0
    r = p0 - q0
    aa = float(d1 @ d1)
    ee = float(d2 @ d2)
    f = float(d2 @ r)
    c = float(d1 @ r)
    bb = float(d1 @ d2)
    denom = aa * ee - bb * bb
    s = float(np.clip((bb * f - c * ee) / denom, 0.0, 1.0)) if denom > 1e-300 else 0.0
    t = (bb * s + f) / ee
    if t < 0.0:
        t = 0.0
        s = float(np.clip(-c / aa, 0.0, 1.0))
    elif t > 1.0:
        t = 1.0
        s = float(np.clip((bb - c) / aa, 0.0, 1.0))
    return float(np.linalg.norm(p0 + s * d1 - (q0 + t * d2)))


def _check_overlap(a: DipoleElement, b: DipoleElement) -> None:
    dist = segment_distance(a, b)
    if dist < a.wire_radius + b.wire_radius:
        raise OverlapError(a.name or "a", b.name or "b", dist)


def self_impedance(element: DipoleElement, wavelength: float) -> complex:
    """Input impedance of an isolated dipole (no load)."""
    require_positive("wavelength", wavelength)
    return _self_impedance_normalized(
        round(0.5 * element.length / wavelength, 14),
        round(element.wire_radius / wavelength, 14),
    )


def _geometry_key(e: DipoleElement) -> tuple:
    return (e.center, e.axis, e.length, e.wire_radius)


def coupling_impedance(a: DipoleElement, b: DipoleElement, wavelength: float) -> complex:
    """Mutual impedance of two distinct wires; overlap is an error."""
    _check_overlap(a, b)
    if _geometry_key(b) < _geometry_key(a):
        a, b = b, a
    return _mutual_normalized(
        a.position / wavelength,
        a.direction,
        0.5 * a.length / wavelength,
        b.position / wavelength,
        b.direction,
        0.5 * b.length / wavelength,
    )


def mutual_impedance(a: DipoleElement, b: DipoleElement, wavelength: float) -> complex:
    """Induced-EMF impedance Z_ab; a == b gives the self impedance."""
    require_positive("wavelength", wavelength)
    if _geometry_key(a) == _geometry_key(b):
        return self_impedance(a, wavelength)
    return coupling_impedance(a, b, wavelength)


def self_impedance_closed_form(length: float, wavelength: float, wire_radius: float) -> complex:
    """Sine/cosine-integral self impedance of a sinusoidal-current dipole, feed-referred."""
    k = 2.0 * math.pi / wavelength
    kl = k * length
    si1, ci1 = special.sici(kl)
    si2, ci2 = special.sici(2.0 * kl)
    _, ci_a = special.sici(2.0 * k * wire_radius**2 / length)
    gamma = float(np.euler_gamma)
    r_max = (ETA0 / (2.0 * math.pi)) * (
        gamma
        + math.log(kl)
        - ci1
        + 0.5 * math.sin(kl) * (si2 - 2.0 * si1)
        + 0.5 * math.cos(kl) * (gamma + math.log(kl / 2.0) + ci2 - 2.0 * ci1)
    )
    x_max = (ETA0 / (4.0 * math.pi)) * (
        2.0 * si1
        + math.cos(kl) * (2.0 * si1 - si2)
        - math.sin(kl) * (2.0 * ci1 - ci2 - ci_a)
    )
    feed = math.sin(kl / 2.0) ** 2
    if feed < 1e-12:
        raise PreconditionError("feed current vanishes at this length")
    return complex(r_max, x_max) / feed


# ── block assembly ───────────────────────────────────────────────────────


def _pairwise(
    rows: Sequence[DipoleElement],
    cols: Sequence[DipoleElement],
    wavelength: float,
    n_jobs: int,
) -> ComplexMat:
    pairs = [(i, j) for i in range(len(rows)) for j in range(len(cols))]
    if not pairs:
        return np.zeros((len(rows), len(cols)), dtype=complex)
    values = Parallel(n_jobs=n_jobs)(
        delayed(coupling_impedance)(rows[i], cols[j], wavelength) for i, j in pairs
    )
    out = np.zeros((len(rows), len(cols)), dtype=complex)
    for (i, j), v in zip(pairs, values):
        out[i, j] = v
    return out


def _symmetric(group: Sequence[DipoleElement], wavelength: float, n_jobs: int) -> ComplexMat:
    n = len(group)
    out = np.zeros((n, n), dtype=complex)
    upper = [(i, j) for i in range(n) for j in range(i + 1, n)]
    values = Parallel(n_jobs=n_jobs)(
        delayed(coupling_impedance)(group[i], group[j], wavelength) for i, j in upper
    )
    for (i, j), v in zip(upper, values):
        out[i, j] = v
        out[j, i] = v
    for i, e in enumerate(group):
        out[i, i] = self_impedance(e, wavelength)
    return out


def build_blocks(scenario: NetworkScenario, n_jobs: int | None = None) -> ImpedanceBlocks:
    """Every impedance block of the scenario, environment included."""
    n_jobs = worker_count() if n_jobs is None else n_jobs
    g = scenario.groups()
    lam = scenario.wavelength
    z_tt = _symmetric(g["T"], lam, n_jobs)
    z_ss = _symmetric(g["S"], lam, n_jobs)
    z_rr = _symmetric(g["R"], lam, n_jobs)
    z_oo = _symmetric(g["O"], lam, n_jobs)
    z_st = _pairwise(g["S"], g["T"], lam, n_jobs)
    z_rs = _pairwise(g["R"], g["S"], lam, n_jobs)
    z_rt = _pairwise(g["R"], g["T"], lam, n_jobs)
    z_ot = _pairwise(g["O"], g["T"], lam, n_jobs)
    z_os = _pairwise(g["O"], g["S"], lam, n_jobs)
    z_or = _pairwise(g["O"], g["R"], lam, n_jobs)
    if scenario.direct_link == DIRECT_LINK_BLOCKED:
        z_rt = np.zeros_like(z_rt)

    loads = np.array([complex(e.load) for e in g["O"] if e.load is not None], dtype=complex)
    blocks = ImpedanceBlocks(
        z_rt=z_rt,
        z_st=z_st,
        z_rs=z_rs,
        z_ss=z_ss,
        z_tt=z_tt,
        z_rr=z_rr,
        z_ot=z_ot,
        z_os=z_os,
        z_or=z_or,
        z_oo=z_oo,
        z_env_loads=loads,
    )
    logger.info(
        "build_blocks ports T=%d S=%d R=%d O=%d direct_link=%s",
        blocks.n_t,
        blocks.n_s,
        blocks.n_r,
        blocks.n_o,
        scenario.direct_link,
    )
    return blocks


# ── loads ────────────────────────────────────────────────────────────────


def gamma_from_loads(z_s: ComplexMat, z0: float = DEFAULT_Z0) -> ComplexMat:
    """Γ_S = (Z_S + Z0 I)^{-1} (Z_S - Z0 I)."""
    z_s = np.atleast_2d(np.asarray(z_s, dtype=complex))
    eye = np.eye(z_s.shape[0], dtype=complex)
    if np.count_nonzero(z_s - np.diag(np.diag(z_s))) == 0:
        d = np.diag(z_s)
        if np.any(np.abs(d + z0) == 0.0):
            idx = int(np.argmin(np.abs(d + z0)))
            raise LoadResonanceError("Z_S + Z0·I", float("inf"), f"load {idx} equals -Z0")
        return np.diag((d - z0) / (d + z0))
    return checked_solve(z_s + z0 * eye, z_s - z0 * eye, "Z_S + Z0·I", error_cls=LoadResonanceError)


def loads_from_reactances(reactances: Sequence[float]) -> ComplexMat:
    return np.diag(1j * np.asarray(reactances, dtype=float))


def material_load(relative_permittivity: complex, element: DipoleElement, wavelength: float) -> complex:
    """Lumped load that makes a short dipole mimic a small dielectric inclusion.

    Clausius–Mossotti polarizability of a cube of edge L (the dipole length),
    α = 3ε0 L³ (ε-1)/(ε+2), matched to the loaded-dipole polarizability with
    effective length L/2. Only the dipole's own reactance is cancelled, so
    lossless material gives a purely reactive load and lossy material a
    positive resistance. Approximate; valid for L ≤ λ/10.
    """
    eps = complex(relative_permittivity)
    if eps.imag > 0:
        raise PreconditionError(
            f"permittivity {eps} is active (Im > 0 under e^(jωt)); passive material required"
        )
    if abs(eps + 2.0) < 1e-12:
        raise PreconditionError("permittivity -2 sits on the Clausius–Mossotti pole")
    if element.length > wavelength / 10.0:
        logger.warning(
            "material_load outside validity: length=%.4gλ > λ/10", element.length / wavelength
        )
    contrast = (eps - 1.0) / (eps + 2.0)
    if abs(contrast) < 1e-15:
        return complex(OPEN_CIRCUIT_OHMS)
    omega = 2.0 * math.pi * C0 / wavelength
    alpha = 3.0 * EPS0 * element.length**3 * contrast
    effective = 0.5 * element.length
    x_in = self_impedance(element, wavelength).imag
    return complex(-1j * effective**2 / (omega * alpha) - 1j * x_in)
