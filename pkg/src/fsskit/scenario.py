"""
Scenario documents (schema 1).

A scenario is a JSON document naming a system (or a pencil), the α values,
a λ/z sampling plan, tolerance overrides and the output location::

    {
      "schema": 1,
      "name": "expdecay-n2",
      "pipeline": "fss",
      "coefficients": {"e1": {"kind": "expdecay", "terms": [[0.3, 1.0]]}},
      "system": {"b": [1, -1], "A": [["e1", "e1"], ["e1", 0]], "C": [], "rho": 1.0},
      "alphas": [0.0],
      "plan": {"rays": [0.7853981633974483], "radii": [10, 30, 100]},
      "tolerances": {"picard.eps_fix": 1e-9}
    }

Angles are in radians; sector and column indices are 1-based.
"""
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from .coeffs import CoefficientFunction, coefficient_from_descriptor, parse_complex, weight_from_descriptor
from .config import DEFAULT_CONFIG, apply_overrides, get_logger, load_config
from .errors import SpecError
from .sturm import PencilSpec, reduce_pencil
from .system import SystemSpec

logger = get_logger("Scenario")

SCHEMA_VERSION = 1
SCENARIO_DIR = Path(__file__).parent / "scenarios"

PIPELINES = ("sectors", "fss", "largesector", "sturm", "sweep-theta", "sweep", "verify")
QUANTITIES = ("theta", "gamma", "residual-sup", "l2-partial")
TOP_LEVEL_KEYS = {
    "schema", "name", "description", "pipeline", "coefficients", "system", "pencil",
    "alphas", "plan", "tolerances", "output",
}
PLAN_KEYS = {
    "rays", "ray_count", "radii", "points", "sector", "m", "quantity", "l2_of", "r_max",
    "quarter_planes", "samples", "overlap", "seed", "export", "threshold",
}


@dataclass
class SamplingPlan:
    """Where λ (or z) is sampled."""

    rays: List[float] = field(default_factory=list)
    radii: List[float] = field(default_factory=list)
    points: List[complex] = field(default_factory=list)
    sector: Optional[int] = None
    m: Optional[int] = None
    quantity: str = "theta"
    l2_of: str = "theta"
    r_max: float = 400.0
    quarter_planes: bool = False
    samples: int = 101
    overlap: int = 0
    seed: int = 0
    export: bool = False
    threshold: bool = False

    def values(self) -> List[complex]:
        """Explicit points, then r·e^{iθ} for every ray θ and radius r, in that order."""
        out = list(self.points)
        for theta in self.rays:
            for r in self.radii:
                out.append(complex(r * np.exp(1j * theta)))
        return out

    def directions(self) -> List[complex]:
        """Unit ray directions."""
        return [complex(np.exp(1j * theta)) for theta in self.rays]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rays": list(self.rays),
            "radii": list(self.radii),
            "points": [[p.real, p.imag] for p in self.points],
            "sector": self.sector,
            "m": self.m,
            "quantity": self.quantity,
            "l2_of": self.l2_of,
            "r_max": self.r_max,
            "quarter_planes": self.quarter_planes,
            "samples": self.samples,
            "overlap": self.overlap,
            "seed": self.seed,
            "export": self.export,
            "threshold": self.threshold,
        }


@dataclass
class Scenario:
    name: str
    pipeline: str
    alphas: List[float]
    plan: SamplingPlan
    spec: Optional[SystemSpec] = None
    pencil: Optional[PencilSpec] = None
    tolerances: Dict[str, Any] = field(default_factory=dict)
    output: Dict[str, Any] = field(default_factory=dict)
    description: str = ""
    source: Optional[Path] = None

    def config(self, base: Optional[Dict[str, Any]] = None, overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Merged configuration: ``base`` (or the user file), scenario tolerances, then ``overrides``."""
        config = copy.deepcopy(base) if base is not None else load_config()
        config = apply_overrides(config, self.tolerances)
        if overrides:
            config = apply_overrides(config, overrides)
        return config

    @property
    def system(self) -> SystemSpec:
        """The system to solve (the reduced system for pencil scenarios)."""
        if self.spec is not None:
            return self.spec
        return reduce_pencil(self.pencil)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise SpecError(message)


def _matrix(raw: Any, n: int, table: Dict[str, CoefficientFunction], label: str):
    _require(isinstance(raw, list) and len(raw) == n, f"{label} must be a list of {n} rows")
    rows = []
    for row in raw:
        _require(isinstance(row, list) and len(row) == n, f"{label} rows must have {n} entries")
        rows.append(tuple(coefficient_from_descriptor(e, table) for e in row))
    return tuple(rows)


def _parse_plan(raw: Dict[str, Any]) -> SamplingPlan:
    _require(isinstance(raw, dict), "plan must be an object")
    unknown = set(raw) - PLAN_KEYS
    _require(not unknown, f"Unknown plan keys: {sorted(unknown)}")
    plan = SamplingPlan(
        rays=[float(v) for v in raw.get("rays", [])],
        radii=[float(v) for v in raw.get("radii", [])],
        points=[parse_complex(v) for v in raw.get("points", [])],
        sector=raw.get("sector"),
        m=raw.get("m"),
        quantity=raw.get("quantity", "theta"),
        l2_of=raw.get("l2_of", "theta"),
        r_max=float(raw.get("r_max", 400.0)),
        quarter_planes=bool(raw.get("quarter_planes", False)),
        samples=int(raw.get("samples", 101)),
        overlap=int(raw.get("overlap", 0)),
        seed=int(raw.get("seed", 0)),
        export=bool(raw.get("export", False)),
        threshold=bool(raw.get("threshold", False)),
    )
    if "ray_count" in raw and not plan.rays:
        count = int(raw["ray_count"])
        _require(count > 0, "ray_count must be positive")
        plan.rays = [float(2 * np.pi * (i + 0.5) / count) for i in range(count)]
    _require(plan.quantity in QUANTITIES, f"quantity must be one of {QUANTITIES}")
    _require(plan.l2_of in ("theta", "residual-sup"), "l2_of must be theta or residual-sup")
    _require(all(r > 0 for r in plan.radii), "radii must be positive")
    _require(plan.samples >= 2, "samples must be at least 2")
    return plan


def parse_scenario(doc: Dict[str, Any], source: Optional[Path] = None) -> Scenario:
    """
    Validate a schema-1 document and build its :class:`Scenario`.

    Raises:
        SpecError: On any schema violation
    """
    _require(isinstance(doc, dict), "scenario must be a JSON object")
    unknown = set(doc) - TOP_LEVEL_KEYS
    _require(not unknown, f"Unknown scenario keys: {sorted(unknown)}")
    _require(doc.get("schema") == SCHEMA_VERSION, f"schema must be {SCHEMA_VERSION}")
    name = doc.get("name")
    _require(isinstance(name, str) and name, "name must be a nonempty string")
    pipeline = doc.get("pipeline", "verify")
    _require(pipeline in PIPELINES, f"pipeline must be one of {PIPELINES}")

    raw_table = doc.get("coefficients", {})
    _require(isinstance(raw_table, dict), "coefficients must be an object")
    table: Dict[str, CoefficientFunction] = {}
    for key, desc in raw_table.items():
        table[key] = coefficient_from_descriptor(desc, table)

    spec = pencil = None
    _require(("system" in doc) != ("pencil" in doc), "exactly one of system or pencil is required")
    if "system" in doc:
        raw = doc["system"]
        _require(isinstance(raw, dict) and "b" in raw, "system needs b")
        b = [parse_complex(v) for v in raw["b"]]
        n = len(b)
        A = _matrix(raw.get("A", [[0] * n for _ in range(n)]), n, table, "A")
        C = tuple(_matrix(c, n, table, f"C_{i + 1}") for i, c in enumerate(raw.get("C", [])))
        spec = SystemSpec(n=n, b=tuple(b), A=A, C=C, rho=weight_from_descriptor(raw.get("rho"), table), name=name)
    else:
        raw = doc["pencil"]
        _require(isinstance(raw, dict), "pencil must be an object")
        pencil = PencilSpec(
            coefficient_from_descriptor(raw.get("sigma", 0), table),
            coefficient_from_descriptor(raw.get("p0", 0), table),
            name=name,
        )
    if pencil is not None:
        _require(pipeline in ("sturm", "verify", "sweep", "sweep-theta"), f"pipeline {pipeline} needs a system")
    else:
        _require(pipeline != "sturm", "pipeline sturm needs a pencil")

    alphas = [float(a) for a in doc.get("alphas", [0.0])]
    _require(bool(alphas) and all(a >= 0 for a in alphas), "alphas must be a nonempty list of nonnegative numbers")
    plan = _parse_plan(doc.get("plan", {}))
    if pipeline != "sectors":
        has_rays = plan.quantity == "l2-partial" and bool(plan.rays)
        _require(bool(plan.values()) or plan.threshold or has_rays, "sampling plan is empty")
    if pipeline == "largesector":
        _require(plan.m is not None, "largesector needs plan.m")

    tolerances = doc.get("tolerances", {})
    _require(isinstance(tolerances, dict), "tolerances must be an object")
    apply_overrides(DEFAULT_CONFIG, tolerances)
    output = doc.get("output", {})
    _require(isinstance(output, dict), "output must be an object")
    return Scenario(
        name=name,
        pipeline=pipeline,
        alphas=alphas,
        plan=plan,
        spec=spec,
        pencil=pencil,
        tolerances=dict(tolerances),
        output=dict(output),
        description=str(doc.get("description", "")),
        source=source,
    )


def bundled_scenarios() -> List[str]:
    return sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))


def load_scenario(ref: Union[str, Path]) -> Scenario:
    """
    Load a scenario from a path or by bundled name (``expdecay-n2``).

    Raises:
        SpecError: If the file is missing, not JSON, or invalid
    """
    path = Path(ref)
    if not path.exists():
        bundled = SCENARIO_DIR / f"{ref}.json"
        if not bundled.exists():
            raise SpecError(f"No scenario file or bundled scenario named {ref!r}")
        path = bundled
    try:
        with open(path, "r") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise SpecError(f"{path} is not valid JSON: {e}") from None
    scenario = parse_scenario(doc, source=path)
    logger.info(f"Loaded scenario {scenario.name} ({scenario.pipeline}) from {path}")
    return scenario


__all__ = [
    "PIPELINES",
    "QUANTITIES",
    "SamplingPlan",
    "Scenario",
    "bundled_scenarios",
    "load_scenario",
    "parse_scenario",
]
