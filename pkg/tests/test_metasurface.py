import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emcomm.guardrails import LoadResonanceError, PreconditionError
from emcomm.metasurface import (
    DIRECT_LINK_BLOCKED,
    OPEN_CIRCUIT_OHMS,
    DipoleElement,
    MetasurfaceSpec,
    NetworkScenario,
    OverlapError,
    build_blocks,
    gamma_from_loads,
    linear_array,
    loads_from_reactances,
    material_load,
    mutual_impedance,
    segment_distance,
    self_impedance,
    self_impedance_closed_form,
)
from emcomm.types import DEFAULT_Z0

LAM = 1.0
ETA0 = 376.730313668


def _dipole(center, axis=(0.0, 0.0, 1.0), length=0.5, radius=0.001, load=None, name=""):
    return DipoleElement.oriented(center, axis, length * LAM, radius * LAM, load, name)


# ── elements ─────────────────────────────────────────────────────────────


def test_thin_wire_limit_rejected():
    with pytest.raises(PreconditionError):
        DipoleElement((0.0, 0.0, 0.0), (0.0, 0.0, 1.0), 0.5, 0.02)


def test_axis_must_be_unit():
    with pytest.raises(PreconditionError):
        DipoleElement((0.0, 0.0, 0.0), (0.0, 0.0, 1.1), 0.5, 0.001)
    e = DipoleElement.oriented((0.0, 0.0, 0.0), (0.0, 3.0, 4.0), 0.5, 0.001)
    assert e.axis == pytest.approx((0.0, 0.6, 0.8), abs=1e-15)


def test_segment_distance_parallel_and_crossing():
    a = _dipole((0.0, 0.0, 0.0))
    assert segment_distance(a, _dipole((0.3, 0.0, 0.0))) == pytest.approx(0.3)
    assert segment_distance(a, _dipole((0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0))) == pytest.approx(0.0)
    # collinear, gap between facing ends
    assert segment_distance(a, _dipole((0.0, 0.0, 1.5))) == pytest.approx(1.0)


# ── impedances ───────────────────────────────────────────────────────────


def test_half_wave_self_impedance_classic_value():
    z = self_impedance(_dipole((0.0, 0.0, 0.0)), LAM)
    assert z.real == pytest.approx(73.1, rel=0.02)
    assert z.imag == pytest.approx(42.5, rel=0.02)
    assert abs(z - self_impedance_closed_form(0.5, LAM, 0.001)) <= 0.02 * abs(z)


def test_full_wave_feed_rejected():
    with pytest.raises(PreconditionError):
        self_impedance(_dipole((0.0, 0.0, 0.0), length=1.0), LAM)


def test_mutual_impedance_self_case():
    a = _dipole((0.1, 0.2, 0.3))
    assert mutual_impedance(a, a, LAM) == self_impedance(a, LAM)


def test_mutual_impedance_is_reciprocal_for_skew_pair():
    rng = np.random.default_rng(11)
    a = _dipole(rng.normal(size=3), axis=rng.normal(size=3), length=0.37)
    b = _dipole(rng.normal(size=3) + np.array([2.0, 0.0, 0.0]), axis=rng.normal(size=3), length=0.61)
    assert mutual_impedance(a, b, LAM) == mutual_impedance(b, a, LAM)


def test_collinear_coupling_at_ten_wavelengths_is_small():
    a = _dipole((0.0, 0.0, 0.0))
    b = _dipole((0.0, 0.0, 10.0))
    assert abs(mutual_impedance(a, b, LAM)) <= 0.01 * abs(self_impedance(a, LAM))


def test_broadside_coupling_matches_far_field_estimate():
    d = 10.0
    z12 = mutual_impedance(_dipole((0.0, 0.0, 0.0)), _dipole((d, 0.0, 0.0)), LAM)
    estimate = ETA0 * LAM / (2.0 * math.pi**2 * d)
    assert abs(z12) == pytest.approx(estimate, rel=0.03)


def test_broadside_coupling_decays_beyond_one_wavelength():
    a = _dipole((0.0, 0.0, 0.0))
    mags = [abs(mutual_impedance(a, _dipole((d, 0.0, 0.0)), LAM)) for d in (1.0, 1.5, 2.0, 3.0, 5.0, 8.0)]
    assert all(later <= earlier for earlier, later in zip(mags, mags[1:]))


def test_crossing_wires_overlap():
    a = _dipole((0.0, 0.0, 0.0), name="a")
    b = _dipole((0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0), name="b")
    with pytest.raises(OverlapError) as err:
        mutual_impedance(a, b, LAM)
    assert err.value.pair == ("a", "b")


# ── arrays ───────────────────────────────────────────────────────────────


def test_grid_is_exact_and_row_major():
    spec = MetasurfaceSpec(rows=2, cols=3, spacing=0.25, template=_dipole((9.0, 9.0, 9.0)), center=(1.0, 2.0, 3.0))
    elements = spec.elements()
    assert [e.name for e in elements] == [f"S{i}" for i in range(6)]
    assert elements[1].position - elements[0].position == pytest.approx([0.25, 0.0, 0.0])
    assert elements[3].position - elements[0].position == pytest.approx([0.0, 0.25, 0.0])
    centroid = np.mean([e.position for e in elements], axis=0)
    assert centroid == pytest.approx([1.0, 2.0, 3.0])


def test_from_aperture_counts():
    spec = MetasurfaceSpec.from_aperture(1.0, 0.5, 0.25, _dipole((0.0, 0.0, 0.0)))
    assert (spec.rows, spec.cols, spec.count) == (2, 4, 8)
    tiny = MetasurfaceSpec.from_aperture(0.05, 0.05, 0.25, _dipole((0.0, 0.0, 0.0)))
    assert tiny.count == 1


def test_linear_array_is_one_row():
    spec = linear_array(5, 0.1, _dipole((0.0, 0.0, 0.0)))
    assert (spec.rows, spec.cols) == (1, 5)


def test_spacing_below_wire_diameter_rejected():
    with pytest.raises(PreconditionError):
        MetasurfaceSpec(rows=1, cols=2, spacing=0.001, template=_dipole((0.0, 0.0, 0.0)))


def test_scenario_rejects_complex_or_negative_z0():
    with pytest.raises(PreconditionError):
        NetworkScenario(tx=(_dipole((0, 0, 0)),), rx=(_dipole((3, 0, 0)),), wavelength=LAM, z0=-50.0)
    with pytest.raises(PreconditionError):
        NetworkScenario(tx=(_dipole((0, 0, 0)),), rx=(_dipole((3, 0, 0)),), wavelength=LAM, z0=50 + 1j)


# ── blocks ───────────────────────────────────────────────────────────────


def test_single_link_block_equals_pair_impedance(isolated_workers):
    tx = _dipole((0.0, 0.0, 0.0))
    rx = _dipole((2.3, 0.4, 0.1))
    blocks = build_blocks(NetworkScenario(tx=(tx,), rx=(rx,), wavelength=LAM))
    assert blocks.z_rt.shape == (1, 1)
    assert blocks.n_s == 0
    assert blocks.z_rt[0, 0] == pytest.approx(mutual_impedance(tx, rx, LAM), rel=1e-14)


def test_full_matrix_reciprocal_and_passive(small_network, isolated_workers):
    full = build_blocks(small_network).full_matrix()
    assert np.max(np.abs(full - full.T)) <= 1e-12 * np.max(np.abs(full))
    assert np.all(np.diag(full).real >= 0.0)


def test_far_ris_pair_barely_couples(isolated_workers):
    spec = linear_array(2, 10.0, _dipole((0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0)))
    scenario = NetworkScenario(
        tx=(_dipole((0.0, 3.0, 0.0)),), rx=(_dipole((0.0, -3.0, 0.0)),), wavelength=LAM, ris=spec
    )
    z_ss = build_blocks(scenario).z_ss
    assert abs(z_ss[0, 1]) <= 0.01 * abs(z_ss[0, 0])


def test_permuting_ris_ports_permutes_z_ss(small_network, isolated_workers):
    blocks = build_blocks(small_network)
    order = [2, 0, 3, 1]
    p = np.eye(4)[order]
    moved = blocks.permuted(order)
    assert np.allclose(moved.z_ss, p @ blocks.z_ss @ p.T, atol=0.0)
    assert np.allclose(moved.z_st, p @ blocks.z_st, atol=0.0)


def test_blocks_translation_invariant(small_network, isolated_workers):
    base = build_blocks(small_network).full_matrix()
    moved = build_blocks(small_network.translated((0.3, -1.7, 2.2))).full_matrix()
    assert np.max(np.abs(moved - base)) <= 1e-10 * np.max(np.abs(base))


def test_blocks_scale_invariant(small_network, isolated_workers):
    base = build_blocks(small_network).full_matrix()
    scaled = build_blocks(small_network.scaled(2.5)).full_matrix()
    assert np.max(np.abs(scaled - base)) <= 1e-10 * np.max(np.abs(base))


def test_blocked_direct_link_zeroes_z_rt(small_network, isolated_workers):
    from dataclasses import replace

    blocks = build_blocks(replace(small_network, direct_link=DIRECT_LINK_BLOCKED))
    assert np.all(blocks.z_rt == 0)
    assert np.any(blocks.z_rs != 0)


def test_overlap_names_offending_pair(isolated_workers):
    spec = linear_array(1, 0.25, _dipole((0.0, 0.0, 0.0)))
    scenario = NetworkScenario(
        tx=(_dipole((0.0, 0.0, 0.0), axis=(1.0, 0.0, 0.0)),),
        rx=(_dipole((3.0, 0.0, 0.0)),),
        wavelength=LAM,
        ris=spec,
    )
    with pytest.raises(OverlapError) as err:
        build_blocks(scenario)
    assert set(err.value.pair) == {"S0", "T0"}


# ── loads ────────────────────────────────────────────────────────────────


def test_gamma_reference_loads():
    eye = np.eye(3)
    assert np.allclose(gamma_from_loads(DEFAULT_Z0 * eye), 0.0)
    assert np.allclose(gamma_from_loads(0.0 * eye), -eye)
    assert np.allclose(gamma_from_loads(OPEN_CIRCUIT_OHMS * eye), eye, atol=1e-9)
    assert np.allclose(gamma_from_loads(1j * DEFAULT_Z0 * eye), 1j * eye)


def test_gamma_resonant_load_rejected():
    with pytest.raises(LoadResonanceError):
        gamma_from_loads(np.diag([10.0, -DEFAULT_Z0]).astype(complex))


def test_gamma_full_matrix_path():
    z_s = np.array([[20.0 + 5j, 3.0], [3.0, 40.0 - 10j]])
    gamma = gamma_from_loads(z_s)
    assert np.allclose((z_s + DEFAULT_Z0 * np.eye(2)) @ gamma, z_s - DEFAULT_Z0 * np.eye(2))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False), min_size=1, max_size=8))
def test_reactive_loads_sit_on_unit_circle(reactances):
    gamma = gamma_from_loads(loads_from_reactances(reactances))
    assert np.allclose(np.abs(np.diag(gamma)), 1.0, atol=1e-12)
    assert np.count_nonzero(gamma - np.diag(np.diag(gamma))) == 0


def test_material_load_signs():
    e = _dipole((0.0, 0.0, 0.0), length=0.05, radius=0.0005)
    assert material_load(4.0, e, LAM).real == 0.0
    assert material_load(4.0 - 1.0j, e, LAM).real > 0.0
    with pytest.raises(PreconditionError):
        material_load(4.0 + 1.0j, e, LAM)
    with pytest.raises(PreconditionError):
        material_load(-2.0, e, LAM)


def test_vacuum_inclusion_is_near_invisible():
    e = _dipole((0.0, 0.0, 0.0), length=0.05, radius=0.0005)
    z_self = self_impedance(e, LAM)
    # resonant reference: reactance tuned out
    resonant = abs(z_self.real)
    vacuum = abs(z_self + material_load(1.0, e, LAM))
    assert resonant / vacuum <= 1e-3
