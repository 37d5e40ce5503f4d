"""JSON scenario files: parsing, validation, hashing and the bundled examples.

A scenario is written in dimensionless model units::

    {"dimension": 2,
     "field": {"type": "constant", "value": [1, 0]},
     "region": {"halfspaces": [{"normal": [1, 0], "offset": 0}, ...]},
     "initial": [[-3, 0]], "target": [[1, 0]],
     "params": {"delta": 0.1}}

Affine fields use ``{"type": "affine", "matrix": [[...]], "offset": [...]}``.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .exceptions import ScenarioError
from .flow import ConvexRegion, VectorField, as_configuration
from .params import Params

BUNDLED = ("fig4-left", "fig4-right", "fig5-style", "tangency")
_TOP_KEYS = {"dimension", "field", "region", "initial", "target", "params", "name", "description"}


@dataclass
class Scenario:
    dimension: int
    field: VectorField
    region: ConvexRegion
    initial: np.ndarray
    target: np.ndarray
    params: Params = field(default_factory=Params)
    name: str = ""
    description: str = ""

    @property
    def n_agents(self) -> int:
        return self.initial.shape[0]

    def to_dict(self) -> dict:
        out = {
            "dimension": self.dimension,
            "field": self.field.to_dict(),
            "region": self.region.to_dict(),
            "initial": self.initial.tolist(),
            "target": self.target.tolist(),
            "params": self.params.to_dict(),
        }
        if self.name:
            out["name"] = self.name
        if self.description:
            out["description"] = self.description
        return out

    @property
    def diameter(self) -> float:
        """Largest distance between any two initial or target points."""
        pts = np.vstack([self.initial, self.target])
        return float(np.max(np.linalg.norm(pts[:, None] - pts[None], axis=-1)))


def scenario_hash(scenario: Scenario) -> str:
    """SHA-256 of the canonical JSON form (defaults applied, name excluded)."""
    data = scenario.to_dict()
    data.pop("name", None)
    data.pop("description", None)
    text = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def _need(obj, key, where):
    if not isinstance(obj, dict):
        raise ScenarioError(f"{where}: expected an object")
    if key not in obj:
        raise ScenarioError(f"{where}.{key}: missing required field")
    return obj[key]


def _array(value, where, ndim, d=None):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ScenarioError(f"{where}: expected numbers") from None
    if arr.ndim != ndim:
        raise ScenarioError(f"{where}: expected a {ndim}-D array")
    if d is not None and arr.shape[-1] != d:
        raise ScenarioError(f"{where}: expected entries of length {d}, got {arr.shape[-1]}")
    if not np.all(np.isfinite(arr)):
        raise ScenarioError(f"{where}: non-finite value")
    return arr


def _parse_field(spec, d) -> VectorField:
    kind = _need(spec, "type", "field")
    if kind == "constant":
        return VectorField.constant(_array(_need(spec, "value", "field"), "field.value", 1, d))
    if kind == "affine":
        matrix = _array(_need(spec, "matrix", "field"), "field.matrix", 2, d)
        if matrix.shape[0] != d:
            raise ScenarioError(f"field.matrix: expected {d} rows")
        offset = spec.get("offset")
        offset = None if offset is None else _array(offset, "field.offset", 1, d)
        return VectorField.affine(matrix, offset)
    raise ScenarioError(f"field.type: unknown field type {kind!r}")


def _parse_region(spec, d, params: Params) -> ConvexRegion:
    halfspaces = _need(spec, "halfspaces", "region")
    if not isinstance(halfspaces, list) or not halfspaces:
        raise ScenarioError("region.halfspaces: expected a non-empty list")
    normals, offsets = [], []
    for k, hs in enumerate(halfspaces):
        where = f"region.halfspaces[{k}]"
        normals.append(_array(_need(hs, "normal", where), f"{where}.normal", 1, d))
        offsets.append(float(_array(_need(hs, "offset", where), f"{where}.offset", 0)))
    try:
        return ConvexRegion.from_halfspaces(normals, offsets,
                                            interior_margin=params.interior_margin,
                                            boundary_tol=params.boundary_tol)
    except ValueError as exc:
        raise ScenarioError(f"region: {exc}") from None


def scenario_from_dict(data: dict, name: str = "") -> Scenario:
    """Build and validate a :class:`Scenario` from decoded JSON."""
    if not isinstance(data, dict):
        raise ScenarioError("scenario: top level must be an object")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"scenario: unknown field(s) {', '.join(sorted(unknown))}")
    d = _need(data, "dimension", "scenario")
    if not isinstance(d, int) or isinstance(d, bool) or d < 1:
        raise ScenarioError("dimension: must be an integer >= 1")
    try:
        params = Params.from_dict(data.get("params") or {})
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"params: {exc}") from None
    if params.working_box is not None and len(params.working_box[0]) != d:
        raise ScenarioError(f"params.working_box: expected bounds of length {d}")
    vfield = _parse_field(_need(data, "field", "scenario"), d)
    region = _parse_region(_need(data, "region", "scenario"), d, params)
    configs = []
    for key in ("initial", "target"):
        arr = _array(_need(data, key, "scenario"), key, 2, d)
        try:
            configs.append(as_configuration(arr, key))
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
    if len(configs[0]) != len(configs[1]):
        raise ScenarioError(f"target: size {len(configs[1])} differs from initial size "
                            f"{len(configs[0])}")
    return Scenario(d, vfield, region, configs[0], configs[1], params,
                    name=str(data.get("name", name)), description=str(data.get("description", "")))


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return scenario_from_dict(data, name=Path(source).stem)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read a scenario file; bundled names such as ``fig4-left`` also resolve."""
    path = Path(path)
    if not path.exists() and path.stem in BUNDLED and path.parent == Path("."):
        return bundled_scenario(path.stem)
    try:
        text = path.read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read scenario {path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))


def bundled_scenario(name: str) -> Scenario:
    if name not in BUNDLED:
        raise KeyError(f"no bundled scenario {name!r}; available: {', '.join(BUNDLED)}")
    text = resources.files("crowdctl.data").joinpath(f"{name}.json").read_text()
    return parse_scenario(text, f"{name}.json")


def bundled_path(name: str) -> Optional[Path]:
    """Filesystem path of a bundled scenario (for CLI examples and tests)."""
    ref = resources.files("crowdctl.data").joinpath(f"{name}.json")
    return Path(str(ref)) if ref.is_file() else None
