"""YAML experiment configuration: parsing, validation and a content hash."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .operators import CoefficientFields, DomainLayout, LayoutError, build_layout, smooth_bump
from .params import ParameterError, SimulationParameters


class ConfigError(ValueError):
    """Malformed or inadmissible configuration; the message names the offending key."""


COEFFICIENT_KINDS = ("constant", "bump", "polynomial", "table")
# csv and json are always written; png figures are opt-in
OUTPUT_FORMATS = ("csv", "json", "png")

OPTIONAL_DEFAULTS: dict[str, Any] = {
    "params.n_steps": 256,
    "params.h_list": [1e2, 1e3, 1e4, 1e5],
    "params.tol": 1e-9,
    "datum.amplitude": 1.0,
    "datum.normalize": True,
    "asymptotics.witness_h": 1e4,
    "asymptotics.T_list": [0.5, 1.0, 2.0],
    "recovery.threshold": 1e-3,
    "recovery.probes": 5,
    "verify.s_list": [0.3, 0.5, 0.8],
    "verify.samples": 100,
    "outputs.directory": "results",
    "outputs.formats": ["csv", "json"],
    "seed": 0,
}

REQUIRED = (
    "layout.box",
    "layout.n_grid",
    "layout.omega",
    "layout.w1",
    "layout.w2",
    "coefficients",
    "params.s",
    "params.m",
    "params.alpha",
    "params.T",
    "datum.center",
    "datum.radius",
)


def _get(tree: dict, dotted: str):
    node = tree
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise KeyError(dotted)
        node = node[part]
    return node


def _set_default(tree: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    node = tree
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"section {part!r} must be a mapping")
    node.setdefault(parts[-1], copy.deepcopy(value))


def _number(tree, key, cast=float):
    value = _get(tree, key)
    try:
        out = cast(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be numeric, got {value!r}") from None
    if isinstance(out, float) and not math.isfinite(out):
        raise ConfigError(f"{key} must be finite")
    return out


def _field_values(spec: dict, x: np.ndarray, key: str) -> np.ndarray:
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"{key}.kind is required")
    kind = spec["kind"]
    try:
        if kind == "constant":
            return np.full(x.shape[0], float(spec["value"]))
        if kind == "bump":
            base = float(spec.get("base", 1.0))
            return base + float(spec["amplitude"]) * smooth_bump(x, spec["center"], spec["radius"])
        if kind == "polynomial":
            coeffs = [float(c) for c in spec["coefficients"]]
            return np.polynomial.polynomial.polyval(x[:, 0], coeffs)
        if kind == "table":
            xs = np.asarray(spec["x"], dtype=float)
            vals = np.asarray(spec["values"], dtype=float)
            if xs.shape != vals.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
                raise ConfigError(f"{key}: table needs increasing x and matching values")
            return np.interp(x[:, 0], xs, vals)
    except KeyError as exc:
        raise ConfigError(f"{key}.{exc.args[0]} is required for kind {kind!r}") from None
    raise ConfigError(f"{key}.kind must be one of {COEFFICIENT_KINDS}, got {kind!r}")


@dataclass
class CoefficientPair:
    name: str
    gamma_spec: dict
    lambda_spec: dict | None

    def fields(self, layout: DomainLayout) -> CoefficientFields:
        om = layout.mask_omega
        gamma = np.ones(layout.n_points)
        gamma[om] = _field_values(self.gamma_spec, layout.points[om], f"coefficients.{self.name}.gamma")
        lam = np.zeros(layout.n_points)
        if self.lambda_spec is not None:
            lam[om] = _field_values(self.lambda_spec, layout.points[om], f"coefficients.{self.name}.lambda")
        return CoefficientFields(gamma=gamma, lam=lam)


@dataclass
class ExperimentConfig:
    """Validated experiment description.  ``raw`` keeps the canonical tree used for hashing."""

    raw: dict
    layout: DomainLayout
    pairs: list[CoefficientPair]
    params: SimulationParameters
    n_steps: int
    h_list: list[float]
    tol: float
    seed: int

    @property
    def datum(self) -> dict:
        return self.raw["datum"]

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})

    @property
    def hash(self) -> str:
        return config_hash(self.raw)

    def coefficient_fields(self, index: int = 0) -> CoefficientFields:
        return self.pairs[index].fields(self.layout)

    def with_overrides(self, **changes) -> "ExperimentConfig":
        """Re-parse with dotted-key overrides, e.g. ``{"params.m": 3}``."""
        tree = copy.deepcopy(self.raw)
        for dotted, value in changes.items():
            parts = dotted.split(".")
            node = tree
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value
        return parse_config(tree)


def config_hash(tree: dict) -> str:
    """SHA-256 of the canonical JSON form, ignoring where outputs are written."""
    body = copy.deepcopy(tree)
    body.get("outputs", {}).pop("directory", None)
    text = json.dumps(body, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(text.encode()).hexdigest()


def _canonical(value):
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    raise ConfigError(f"unsupported value {value!r} in config")


def parse_config(tree: dict) -> ExperimentConfig:
    """Validate a config tree and build the layout, coefficients and parameters."""
    if not isinstance(tree, dict):
        raise ConfigError("config must be a mapping")
    tree = _canonical(tree)
    for key in REQUIRED:
        try:
            _get(tree, key)
        except KeyError:
            raise ConfigError(f"missing required key: {key}") from None
    for key, value in OPTIONAL_DEFAULTS.items():
        _set_default(tree, key, value)

    lay = tree["layout"]
    try:
        layout = build_layout(
            lay["box"], _number(tree, "layout.n_grid", int), lay["omega"], lay["w1"], lay["w2"],
            dimension=int(lay.get("dimension", 1)),
        )
    except LayoutError as exc:
        raise ConfigError(f"layout: {exc}") from None

    coeffs = tree["coefficients"]
    if not isinstance(coeffs, list) or not coeffs:
        raise ConfigError("coefficients must be a non-empty list of pairs")
    pairs = []
    for k, entry in enumerate(coeffs):
        if not isinstance(entry, dict) or "gamma" not in entry:
            raise ConfigError(f"missing required key: coefficients[{k}].gamma")
        name = str(entry.get("name", f"pair{k}"))
        pair = CoefficientPair(name, entry["gamma"], entry.get("lambda"))
        fields = pair.fields(layout)
        if np.any(fields.gamma <= 0.0):
            raise ConfigError(f"coefficients[{k}].gamma must be positive (min {fields.gamma.min():.6g})")
        if not np.all(np.isfinite(fields.lam)):
            raise ConfigError(f"coefficients[{k}].lambda must be finite")
        pairs.append(pair)
    if len({p.name for p in pairs}) != len(pairs):
        raise ConfigError("coefficients: pair names must be unique")

    try:
        params = SimulationParameters(
            s=_number(tree, "params.s"),
            m=_number(tree, "params.m"),
            alpha=_number(tree, "params.alpha"),
            T=_number(tree, "params.T"),
        )
    except ParameterError as exc:
        raise ConfigError(f"params: {exc}") from None

    n_steps = _number(tree, "params.n_steps", int)
    if n_steps < 8:
        raise ConfigError("params.n_steps must be at least 8")
    h_list = [float(h) for h in tree["params"]["h_list"]]
    if len(h_list) < 4 or any(h <= 0 for h in h_list):
        raise ConfigError("params.h_list needs at least four positive amplitudes")
    ratios = np.array(h_list[1:]) / np.array(h_list[:-1])
    if np.any(ratios <= 1.0) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ConfigError("params.h_list must be an increasing geometric sequence")
    formats = tree["outputs"]["formats"]
    if not isinstance(formats, list) or not set(formats) <= set(OUTPUT_FORMATS):
        raise ConfigError(f"outputs.formats must be a list drawn from {OUTPUT_FORMATS}")
    if _number(tree, "datum.amplitude") <= 0.0:
        raise ConfigError("datum.amplitude must be positive")
    if _number(tree, "datum.radius") <= 0.0:
        raise ConfigError("datum.radius must be positive")
    return ExperimentConfig(
        raw=tree,
        layout=layout,
        pairs=pairs,
        params=params,
        n_steps=n_steps,
        h_list=h_list,
        tol=_number(tree, "params.tol"),
        seed=_number(tree, "seed", int),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        tree = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    return parse_config(tree)


def default_config_text() -> str:
    return resources.files("fracpme.data").joinpath("default.yaml").read_text()


def default_config() -> ExperimentConfig:
    return parse_config(yaml.safe_load(default_config_text()))
