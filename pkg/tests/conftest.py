import os
import sys

import pytest

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from emcomm.metasurface import DipoleElement, MetasurfaceSpec, NetworkScenario  # noqa: E402

WAVELENGTH = 1.0


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: large SVDs and randomized sweeps (EMCOMM_SLOW=1)")


def pytest_collection_modifyitems(config, items):
    if os.getenv("EMCOMM_SLOW", "0") == "1":
        return
    skip = pytest.mark.skip(reason="set EMCOMM_SLOW=1 to run slow acceptance tests")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


def half_wave(center, axis=(0.0, 0.0, 1.0), load=None, name=""):
    return DipoleElement.oriented(center, axis, 0.5 * WAVELENGTH, 0.001 * WAVELENGTH, load, name)


@pytest.fixture()
def small_network():
    """One Tx, one Rx and a 2×2 RIS of z-directed λ/2 dipoles at λ/4."""
    template = half_wave((0.0, 0.0, 0.0))
    ris = MetasurfaceSpec(rows=2, cols=2, spacing=0.25, template=template, center=(0.0, 0.0, 0.0))
    return NetworkScenario(
        tx=(half_wave((-2.0, 0.0, 3.0)),),
        rx=(half_wave((2.0, 0.5, 3.0)),),
        wavelength=WAVELENGTH,
        ris=ris,
    )


@pytest.fixture()
def isolated_workers(monkeypatch):
    monkeypatch.setenv("EMCOMM_WORKERS", "1")
    monkeypatch.delenv("EMCOMM_COND_MAX", raising=False)
