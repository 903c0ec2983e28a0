"""Scenario files: JSON documents validated against scenario_schema.json."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .holo_modes import DEFAULT_EPSILON, PlanarSurface, rotation_about
from .metasurface import (
    DIRECT_LINK_LOS,
    DipoleElement,
    MetasurfaceSpec,
    NetworkScenario,
    material_load,
)
from .ris_optim import DEFAULT_BOX, MODEL_COUPLED, OBJECTIVE_SISO
from .types import DEFAULT_Z0

logger = logging.getLogger("emcomm")

_SCHEMA_PATH = Path(__file__).parent / "scenario_schema.json"
SCENARIO_DIR = Path(__file__).parent / "static" / "scenarios"

DEFAULT_BUDGET = 2000


class ScenarioError(ValueError):
    """Raised when a scenario file is unreadable, malformed or fails the schema."""


@dataclass(frozen=True)
class OptimizeSettings:
    objective: str = OBJECTIVE_SISO
    bounds: tuple[float, float] | None = None
    budget: int = DEFAULT_BUDGET
    model: str = MODEL_COUPLED
    neumann_order: int | None = None
    compare_unaware: bool = True

    def resolved(self, z0: float) -> dict[str, Any]:
        lo, hi = self.bounds if self.bounds is not None else (-DEFAULT_BOX * z0, DEFAULT_BOX * z0)
        return {
            "objective": self.objective,
            "bounds_ohm": [lo, hi],
            "budget": self.budget,
            "model": self.model,
            "neumann_order": self.neumann_order,
            "compare_unaware": self.compare_unaware,
        }


@dataclass(frozen=True)
class SurfaceSpec:
    center: tuple[float, float, float]
    size: tuple[float, float]
    rotation: tuple[str, float] | None = None

    def build(self, wavelength: float, per_lambda: float) -> PlanarSurface:
        orientation = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))
        if self.rotation is not None:
            axis, angle = self.rotation
            orientation = rotation_about(axis, math.radians(angle))
        lx, ly = self.size
        nx = max(1, math.ceil(lx * per_lambda / wavelength - 1e-9))
        ny = max(1, math.ceil(ly * per_lambda / wavelength - 1e-9))
        return PlanarSurface(self.center, lx, ly, nx, ny, orientation)


@dataclass(frozen=True)
class SurfaceSettings:
    tx: SurfaceSpec
    rx: SurfaceSpec
    epsilon: float = DEFAULT_EPSILON
    psi: float = 1.0
    export_modes: int = 4


@dataclass(frozen=True)
class FieldSettings:
    nx: int
    ny: int
    spacing: float
    # (amplitude, kx, ky) with kx, ky in rad/m
    waves: tuple[tuple[complex, float, float], ...]
    observe_z: float | None = None
    eta: float | None = None
    periodic: tuple[float, float, float] | None = None


@dataclass(frozen=True)
class SweepSettings:
    size_x: float
    size_y: float | None = None
    spacings: tuple[float, ...] = ()
    budget: int = DEFAULT_BUDGET


@dataclass
class Scenario:
    name: str
    wavelength: float
    z0: float
    seed: int
    sha256: str
    raw: dict[str, Any]
    source: str = "<memory>"
    network: NetworkScenario | None = None
    ris_loads: np.ndarray | None = None
    optimize: OptimizeSettings | None = None
    surfaces: SurfaceSettings | None = None
    wavefield: FieldSettings | None = None
    sweep: SweepSettings | None = None

    def require(self, section: str) -> Any:
        value = getattr(self, section)
        if value is None:
            key = "field" if section == "wavefield" else section
            raise ScenarioError(f"{self.source}: scenario has no {key!r} section")
        return value


def _load_schema() -> dict:
    return json.loads(_SCHEMA_PATH.read_text(encoding="utf-8"))


def _path_of(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return "/" + "/".join(parts) if parts else "<root>"


def validate_scenario(payload: Any, source: str = "<memory>") -> None:
    """Validate *payload* against the scenario schema.

    Raises ``ScenarioError`` naming the JSON path of the first violation.
    """
    validator = jsonschema.Draft202012Validator(_load_schema())
    errors = sorted(validator.iter_errors(payload), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        first = errors[0]
        raise ScenarioError(f"{source}: {_path_of(first)}: {first.message}")


def _complex(pair: list[float]) -> complex:
    return complex(pair[0], pair[1])


def _dipole(doc: dict[str, Any], load: complex | None = None) -> DipoleElement:
    return DipoleElement.oriented(
        center=doc["center"],
        axis=doc["axis"],
        length=doc["length"],
        wire_radius=doc["wire_radius"],
        load=load,
        name=doc.get("name", ""),
    )


def _scatterer(doc: dict[str, Any], wavelength: float) -> DipoleElement:
    if "load" in doc:
        return _dipole(doc, _complex(doc["load"]))
    bare = _dipole(doc)
    return _dipole(doc, material_load(_complex(doc["permittivity"]), bare, wavelength))


def _ris(doc: dict[str, Any]) -> MetasurfaceSpec:
    tpl = doc["template"]
    template = DipoleElement.oriented(
        center=(0.0, 0.0, 0.0), axis=tpl["axis"], length=tpl["length"], wire_radius=tpl["wire_radius"]
    )
    center = tuple(doc.get("center", (0.0, 0.0, 0.0)))
    if "size" in doc:
        sx, sy = doc["size"]
        return MetasurfaceSpec.from_aperture(sx, sy, doc["spacing"], template, center)
    return MetasurfaceSpec(
        rows=doc["rows"], cols=doc["cols"], spacing=doc["spacing"], template=template, center=center  # type: ignore[arg-type]
    )


def _network(doc: dict[str, Any], wavelength: float, z0: float) -> tuple[NetworkScenario, np.ndarray | None]:
    network = NetworkScenario(
        tx=tuple(_dipole(d) for d in doc["tx"]),
        rx=tuple(_dipole(d) for d in doc["rx"]),
        wavelength=wavelength,
        ris=_ris(doc["ris"]) if "ris" in doc else None,
        environment=tuple(_scatterer(d, wavelength) for d in doc.get("environment", [])),
        z0=z0,
        direct_link=doc.get("direct_link", DIRECT_LINK_LOS),
    )
    loads = None
    spec = doc.get("ris_loads")
    if spec is not None:
        n_s = network.ris.count if network.ris is not None else 0
        if "reactances" in spec:
            x = np.asarray(spec["reactances"], dtype=float)
            if x.size != n_s:
                raise ScenarioError(f"/network/ris_loads/reactances: expected {n_s} values, got {x.size}")
            loads = 1j * x
        else:
            loads = np.full(n_s, _complex(spec["uniform"]))
    return network, loads


def _field(doc: dict[str, Any], wavelength: float) -> FieldSettings:
    kappa = 2.0 * math.pi / wavelength
    waves = tuple(
        (_complex(w["amplitude"]), w["kt"][0] * kappa, w["kt"][1] * kappa) for w in doc["waves"]
    )
    periodic = None
    if "periodic" in doc:
        p = doc["periodic"]
        periodic = (math.radians(p["theta_i"]), math.radians(p["theta_r"]), p["delta"])
    return FieldSettings(
        nx=doc["nx"],
        ny=doc["ny"],
        spacing=doc["spacing"],
        waves=waves,
        observe_z=doc.get("observe_z"),
        eta=doc.get("eta"),
        periodic=periodic,
    )


def _surface(doc: dict[str, Any]) -> SurfaceSpec:
    rot = doc.get("rotation")
    return SurfaceSpec(
        center=tuple(doc["center"]),  # type: ignore[arg-type]
        size=tuple(doc["size"]),  # type: ignore[arg-type]
        rotation=(rot["axis"], float(rot["angle"])) if rot else None,
    )


def parse_scenario(text: str, source: str = "<memory>") -> Scenario:
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(
            f"{source}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}"
        ) from exc
    validate_scenario(payload, source)

    wavelength = float(payload["wavelength"])
    z0 = float(payload.get("z0", DEFAULT_Z0))
    scenario = Scenario(
        name=payload.get("name", Path(source).stem),
        wavelength=wavelength,
        z0=z0,
        seed=int(payload.get("seed", 0)),
        sha256=hashlib.sha256(text.encode("utf-8")).hexdigest(),
        raw=payload,
        source=source,
    )
    try:
        if "network" in payload:
            scenario.network, scenario.ris_loads = _network(payload["network"], wavelength, z0)
        if "optimize" in payload:
            o = payload["optimize"]
            bounds = tuple(o["bounds"]) if "bounds" in o else None
            if bounds is not None and bounds[0] >= bounds[1]:
                raise ScenarioError(f"/optimize/bounds: need lower < upper, got {list(bounds)}")
            scenario.optimize = OptimizeSettings(
                objective=o.get("objective", OBJECTIVE_SISO),
                bounds=bounds,  # type: ignore[arg-type]
                budget=o.get("budget", DEFAULT_BUDGET),
                model=o.get("model", MODEL_COUPLED),
                neumann_order=o.get("neumann_order"),
                compare_unaware=o.get("compare_unaware", True),
            )
        if "surfaces" in payload:
            s = payload["surfaces"]
            scenario.surfaces = SurfaceSettings(
                tx=_surface(s["tx"]),
                rx=_surface(s["rx"]),
                epsilon=s.get("epsilon", DEFAULT_EPSILON),
                psi=s.get("psi", 1.0),
                export_modes=s.get("export_modes", 4),
            )
        if "field" in payload:
            scenario.wavefield = _field(payload["field"], wavelength)
        if "sweep" in payload:
            sw = payload["sweep"]
            spacings = tuple(sw.get("spacings", (wavelength / 2, wavelength / 4, wavelength / 8)))
            scenario.sweep = SweepSettings(
                size_x=sw["size_x"],
                size_y=sw.get("size_y"),
                spacings=spacings,
                budget=sw.get("budget", DEFAULT_BUDGET),
            )
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from exc
    logger.debug("scenario loaded name=%s sha256=%s", scenario.name, scenario.sha256[:12])
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    p = Path(path)
    if not p.is_file():
        raise ScenarioError(f"scenario file not found: {p}")
    try:
        text = p.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {p}: {exc}") from exc
    return parse_scenario(text, str(p))


def shipped_scenario(name: str) -> Path:
    """Path of a scenario bundled under emcomm/static/scenarios."""
    path = SCENARIO_DIR / (name if name.endswith(".json") else f"{name}.json")
    if not path.is_file():
        raise ScenarioError(f"no shipped scenario named {name!r}")
    return path
