"""End-to-end channels of RIS-aided links in impedance and scattering form.

Port groups: T (transmitter), S (RIS), R (receiver), O (environment
scatterers). Transmitter and receiver ports are matched to Z0; the impedance
form uses the unilateral approximation (no Rx → Tx back-action).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .guardrails import NumericalFailure, PreconditionError, checked_solve
from .metasurface import ImpedanceBlocks
from .types import (
    DEFAULT_Z0,
    FORMULATION_COMM_THEORY,
    FORMULATION_IMPEDANCE,
    FORMULATION_SCATTERING,
    ComplexMat,
)

logger = logging.getLogger("emcomm")

DIRECT_SCATTERING = "scattering"
DIRECT_PHYSICAL = "physical"


@dataclass
class ChannelModel:
    h: ComplexMat
    formulation: str
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.h = np.atleast_2d(np.asarray(self.h, dtype=complex))
        if not np.all(np.isfinite(self.h)):
            raise NumericalFailure(self.provenance.get("subsystem", "channel"), float("inf"))

    @property
    def shape(self) -> tuple[int, int]:
        return int(self.h.shape[0]), int(self.h.shape[1])

    def gain(self) -> float:
        return float(np.sum(np.abs(self.h) ** 2))

    def summary(self) -> dict[str, Any]:
        return {
            "formulation": self.formulation,
            "rx_ports": self.shape[0],
            "tx_ports": self.shape[1],
            "frobenius_gain": self.gain(),
            **{k: v for k, v in self.provenance.items() if isinstance(v, (str, int, float, bool))},
        }


@dataclass
class ScatteringBlocks:
    s_rt: ComplexMat
    s_rs: ComplexMat
    s_st: ComplexMat
    s_ss: ComplexMat

    @property
    def s_emc(self) -> ComplexMat:
        return self.s_ss


def _eye(n: int) -> ComplexMat:
    return np.eye(n, dtype=complex)


def _block_shapes(rt: ComplexMat, rs: ComplexMat, st: ComplexMat, ss: ComplexMat) -> dict[str, tuple[int, int]]:
    return {name: (int(m.shape[0]), int(m.shape[1])) for name, m in (("RT", rt), ("RS", rs), ("ST", st), ("SS", ss))}


def _as_load_matrix(z_s: ComplexMat | Sequence[complex], n: int) -> ComplexMat:
    z = np.asarray(z_s, dtype=complex)
    if z.ndim <= 1:
        z = np.diag(z.reshape(-1))
    if z.shape != (n, n):
        raise PreconditionError(f"Z_S must be {n}×{n}, got {z.shape}")
    return z


def channel_impedance(
    blocks: ImpedanceBlocks, z_s: ComplexMat, z0: float = DEFAULT_Z0
) -> ChannelModel:
    """H_Z = (Z_RT - Z_RS (Z_emc + Z_S)^{-1} Z_ST) / (2 Z0)."""
    n_s = blocks.n_s
    h = blocks.z_rt.copy()
    if n_s:
        z_s = _as_load_matrix(z_s, n_s)
        h = h - blocks.z_rs @ checked_solve(blocks.z_ss + z_s, blocks.z_st, "Z_emc + Z_S")
    return ChannelModel(
        h=h / (2.0 * z0),
        formulation=FORMULATION_IMPEDANCE,
        provenance={
            "z0": z0,
            "ris_ports": n_s,
            "loads": np.diag(z_s) if n_s else np.zeros(0),
            "block_shapes": _block_shapes(blocks.z_rt, blocks.z_rs, blocks.z_st, blocks.z_ss),
        },
    )


def ris_addend(blocks: ImpedanceBlocks, z_s: ComplexMat, z0: float = DEFAULT_Z0) -> ComplexMat:
    """RIS-dependent part of H_Z, i.e. H_Z - Z_RT/(2 Z0)."""
    return channel_impedance(blocks, z_s, z0).h - blocks.z_rt / (2.0 * z0)


def z_to_s(blocks: ImpedanceBlocks, z0: float = DEFAULT_Z0) -> ScatteringBlocks:
    """Scattering blocks of the T/S/R network with every port referenced to Z0."""
    n_s = blocks.n_s
    eye = _eye(n_s)
    two_z0 = 2.0 * z0
    if n_s == 0:
        return ScatteringBlocks(
            s_rt=blocks.z_rt / two_z0,
            s_rs=np.zeros((blocks.n_r, 0), dtype=complex),
            s_st=np.zeros((0, blocks.n_t), dtype=complex),
            s_ss=np.zeros((0, 0), dtype=complex),
        )
    # one factorization: [(Z+Z0)^{-1}(Z-Z0) | (Z+Z0)^{-1} Z_ST]
    rhs = np.hstack([blocks.z_ss - z0 * eye, blocks.z_st])
    solved = checked_solve(blocks.z_ss + z0 * eye, rhs, "Z_SS + Z0·I")
    s_emc = solved[:, :n_s]
    s_st = solved[:, n_s:]
    s_rs = (blocks.z_rs / two_z0) @ (eye - s_emc)
    s_rs_direct = blocks.z_rs @ checked_solve(
        (blocks.z_ss + z0 * eye).T, eye, "Z_SS + Z0·I"
    ).T
    scale = max(float(np.max(np.abs(s_rs_direct))), 1e-300)
    if np.max(np.abs(s_rs - s_rs_direct)) > 1e-8 * scale:
        raise NumericalFailure("S_RS consistency", float(np.linalg.cond(blocks.z_ss + z0 * eye)))
    s_rt = blocks.z_rt / two_z0 - (blocks.z_rs / two_z0) @ s_st
    return ScatteringBlocks(s_rt=s_rt, s_rs=s_rs_direct, s_st=s_st, s_ss=s_emc)


def channel_scattering(s_blocks: ScatteringBlocks, gamma: ComplexMat) -> ChannelModel:
    """H_S = S_RT + S_RS (I - Γ_S S_emc)^{-1} Γ_S S_ST."""
    n_s = s_blocks.s_ss.shape[0]
    h = s_blocks.s_rt.copy()
    if n_s:
        gamma = _as_load_matrix(gamma, n_s)
        rhs = gamma @ s_blocks.s_st
        h = h + s_blocks.s_rs @ checked_solve(_eye(n_s) - gamma @ s_blocks.s_ss, rhs, "I - Γ_S·S_emc")
    return ChannelModel(
        h=h,
        formulation=FORMULATION_SCATTERING,
        provenance={
            "ris_ports": n_s,
            "reflection": np.diag(gamma) if n_s else np.zeros(0, dtype=complex),
            "block_shapes": _block_shapes(s_blocks.s_rt, s_blocks.s_rs, s_blocks.s_st, s_blocks.s_ss),
        },
    )


def channel_ct(
    h_rt: ComplexMat,
    h_rs: ComplexMat,
    h_st: ComplexMat,
    gamma_h: ComplexMat,
    provenance: dict[str, Any] | None = None,
) -> ChannelModel:
    """H_CT = H_RT + H_RS Γ_H H_ST, the coupling-free cascade."""
    h_rs = np.atleast_2d(np.asarray(h_rs, dtype=complex))
    h_st = np.asarray(h_st, dtype=complex)
    gamma_h = np.asarray(gamma_h, dtype=complex)
    h = np.atleast_2d(np.asarray(h_rt, dtype=complex)).copy()
    n_s = h_rs.shape[1]
    if n_s:
        gamma_h = _as_load_matrix(gamma_h, n_s)
        h = h + h_rs @ gamma_h @ h_st.reshape(n_s, -1)
    return ChannelModel(
        h=h, formulation=FORMULATION_COMM_THEORY, provenance=dict(provenance or {})
    )


def channel_ct_from_scattering(
    s_blocks: ScatteringBlocks,
    gamma: ComplexMat,
    direct: str = DIRECT_SCATTERING,
    blocks: ImpedanceBlocks | None = None,
    z0: float = DEFAULT_Z0,
) -> ChannelModel:
    """H_CT fed with the S-blocks (H_RS = S_RS, H_ST = S_ST).

    direct="scattering" uses H_RT = S_RT. direct="physical" uses Z_RT/(2Z0),
    the free-space link alone, so a blocked direct link contributes nothing.
    """
    if direct == DIRECT_SCATTERING:
        h_rt = s_blocks.s_rt
    elif direct == DIRECT_PHYSICAL:
        if blocks is None:
            raise PreconditionError("direct='physical' needs the impedance blocks")
        h_rt = blocks.z_rt / (2.0 * z0)
    else:
        raise PreconditionError(f"unknown direct-path convention {direct!r}")
    return channel_ct(
        h_rt,
        s_blocks.s_rs,
        s_blocks.s_st,
        gamma,
        provenance={"h_rt": "S_RT" if direct == DIRECT_SCATTERING else "Z_RT/2Z0", "h_rs": "S_RS", "h_st": "S_ST"},
    )


def structural_scattering(blocks: ImpedanceBlocks, z0: float = DEFAULT_Z0) -> ComplexMat:
    """S_StSc = -(Z_RS/(2Z0)) (Z_SS + Z0 I)^{-1} Z_ST: re-radiation at Γ_S = 0."""
    n_s = blocks.n_s
    if n_s == 0:
        return np.zeros_like(blocks.z_rt)
    solved = checked_solve(blocks.z_ss + z0 * _eye(n_s), blocks.z_st, "Z_SS + Z0·I")
    return -(blocks.z_rs / (2.0 * z0)) @ solved


# ── environment scatterers ───────────────────────────────────────────────


@dataclass
class FoldedEnvironment:
    blocks: ImpedanceBlocks
    z_sos: ComplexMat


def fold_environment(blocks: ImpedanceBlocks) -> FoldedEnvironment:
    """Eliminate the loaded O ports by Schur complement onto T, S and R."""
    n_o = blocks.n_o
    if n_o == 0:
        return FoldedEnvironment(
            blocks=blocks.without_environment(),
            z_sos=np.zeros((blocks.n_s, blocks.n_s), dtype=complex),
        )
    assert blocks.z_oo is not None and blocks.z_ot is not None
    assert blocks.z_os is not None and blocks.z_or is not None
    w = blocks.z_oo + np.diag(blocks.z_env_loads)
    rhs = np.hstack([blocks.z_ot, blocks.z_os, blocks.z_or])
    solved = checked_solve(w, rhs, "Z_OO + Z_O")
    n_t, n_s = blocks.n_t, blocks.n_s
    w_ot = solved[:, :n_t]
    w_os = solved[:, n_t : n_t + n_s]
    w_or = solved[:, n_t + n_s :]

    z_sos = -blocks.z_os.T @ w_os
    z_tt = blocks.z_tt - blocks.z_ot.T @ w_ot if blocks.z_tt is not None else None
    z_rr = blocks.z_rr - blocks.z_or.T @ w_or if blocks.z_rr is not None else None
    folded = ImpedanceBlocks(
        z_rt=blocks.z_rt - blocks.z_or.T @ w_ot,
        z_st=blocks.z_st - blocks.z_os.T @ w_ot,
        z_rs=blocks.z_rs - blocks.z_or.T @ w_os,
        z_ss=blocks.z_ss + z_sos,
        z_tt=z_tt,
        z_rr=z_rr,
    )
    return FoldedEnvironment(blocks=folded, z_sos=z_sos)


def assemble_with_environment(
    blocks: ImpedanceBlocks, z_s: ComplexMat, z0: float = DEFAULT_Z0
) -> ChannelModel:
    """H_Z with the environment folded in: (Z_SS + Z_S + Z_SOS)^{-1} replaces the RIS term."""
    folded = fold_environment(blocks)
    model = channel_impedance(folded.blocks, z_s, z0)
    model.provenance.update(
        {
            "environment_ports": blocks.n_o,
            "z_sos_norm": float(np.linalg.norm(folded.z_sos)) if folded.z_sos.size else 0.0,
        }
    )
    logger.debug(
        "assemble_with_environment O=%d |Z_SOS|=%.3e", blocks.n_o, model.provenance["z_sos_norm"]
    )
    return model


def brute_force_environment_channel(
    blocks: ImpedanceBlocks, z_s: ComplexMat, z0: float = DEFAULT_Z0
) -> ChannelModel:
    """Same channel with RIS and environment treated as one loaded scatterer set."""
    n_s, n_o = blocks.n_s, blocks.n_o
    assert blocks.z_ot is not None and blocks.z_os is not None
    assert blocks.z_or is not None and blocks.z_oo is not None
    z_qq = np.block([[blocks.z_ss, blocks.z_os.T], [blocks.z_os, blocks.z_oo]])
    loads = np.zeros((n_s + n_o, n_s + n_o), dtype=complex)
    if n_s:
        loads[:n_s, :n_s] = _as_load_matrix(z_s, n_s)
    loads[n_s:, n_s:] = np.diag(blocks.z_env_loads)
    z_qt = np.vstack([blocks.z_st, blocks.z_ot])
    z_rq = np.hstack([blocks.z_rs, blocks.z_or.T])
    h = blocks.z_rt.copy()
    if n_s + n_o:
        h = h - z_rq @ checked_solve(z_qq + loads, z_qt, "Z_QQ + Z_Q")
    return ChannelModel(h=h / (2.0 * z0), formulation=FORMULATION_IMPEDANCE, provenance={"z0": z0})


def additive_environment_channel(
    blocks: ImpedanceBlocks, z_s: ComplexMat, z0: float = DEFAULT_Z0
) -> ChannelModel:
    """Conventional additive multipath: free-space RIS channel plus the isolated object path."""
    free = channel_impedance(blocks.without_environment(), z_s, z0).h
    if blocks.n_o:
        assert blocks.z_oo is not None and blocks.z_ot is not None and blocks.z_or is not None
        w = blocks.z_oo + np.diag(blocks.z_env_loads)
        obj = -blocks.z_or.T @ checked_solve(w, blocks.z_ot, "Z_OO + Z_O") / (2.0 * z0)
        free = free + obj
    return ChannelModel(h=free, formulation=FORMULATION_IMPEDANCE, provenance={"model": "additive"})


# ── amplitude/phase of a reactively loaded element ──────────────────────


@dataclass
class ReactiveResponse:
    reactances: np.ndarray
    amplitude: np.ndarray
    phase: np.ndarray

    def amplitude_variation(self) -> float:
        """(max - min)/max of the response amplitude."""
        top = float(np.max(self.amplitude))
        return 0.0 if top == 0.0 else (top - float(np.min(self.amplitude))) / top


def reactive_response_curve(
    blocks: ImpedanceBlocks, reactances: Sequence[float], z0: float = DEFAULT_Z0
) -> ReactiveResponse:
    """RIS addend of a single-element RIS as its load jX is swept.

    Γ_S stays on the unit circle for every X, the returned amplitude does not.
    """
    if blocks.n_s != 1:
        raise PreconditionError(f"reactive_response_curve needs a single RIS element, got {blocks.n_s}")
    xs = np.asarray(reactances, dtype=float)
    values = np.array([ris_addend(blocks, np.array([[1j * x]]), z0)[0, 0] for x in xs])
    return ReactiveResponse(reactances=xs, amplitude=np.abs(values), phase=np.angle(values))
