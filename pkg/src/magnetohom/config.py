"""Run configuration: schema validation, dotted overrides and model construction."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .cell_problem import GRID_SIZES, SolverOpts
from .errors import ConfigError, InvalidParams
from .geometry import InclusionSpec, build_mask
from .materials import EXAMPLES, MaterialModel, ModelParams, isotropic_voigt, make_laminate

DEFAULT_NUMERICS = {"N": 16, "k_max": 1, "grad_tol": 1e-8, "max_iters": 5000, "mode": "auto",
                    "multistart": 0, "seed": 0, "phi_boundary": "periodic"}


def schema() -> dict:
    text = resources.files("magnetohom").joinpath("schema/run_config.schema.json").read_text()
    return json.loads(text)


def load(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config: dict, overrides) -> dict:
    """Apply "a.b.c=value" overrides; values are parsed as JSON when possible."""
    out = copy.deepcopy(config)
    for item in overrides or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        node = out
        parts = key.split(".")
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
            node = nxt
        node[parts[-1]] = _parse_value(value)
    return out


@dataclass
class RunConfig:
    raw: dict
    command: str
    model: Optional[MaterialModel]
    inclusions: Optional[InclusionSpec]
    numerics: dict
    threads: int

    @property
    def solver(self) -> SolverOpts:
        n = self.numerics
        return SolverOpts(mode=n["mode"], max_iters=n["max_iters"], grad_tol=n["grad_tol"],
                          phi_boundary=n["phi_boundary"], multistart=n["multistart"], seed=n["seed"])

    def section(self, name: str) -> dict:
        return self.raw.get(name, {})


def model_params(spec: dict) -> ModelParams:
    kw = {k: spec[k] for k in ("mu0", "mu_soft", "mu_rigid", "alpha", "p", "beta_pre", "growth_C")
          if k in spec}
    el = spec.get("elasticity")
    if isinstance(el, dict):
        kw["elasticity"] = isotropic_voigt(el["lambda"], el["mu"])
    elif el is not None:
        kw["elasticity"] = np.asarray(el, dtype=float)
    return ModelParams(**kw)


def build_model(spec: dict, inclusions: Optional[InclusionSpec], N: int) -> MaterialModel:
    name = spec["name"]
    if name == "laminate":
        lam = spec.get("laminate")
        if lam is None:
            raise InvalidParams("laminate model needs a 'laminate' block with mu1, mu2")
        if inclusions is not None and inclusions.shapes:
            raise InvalidParams("laminate model has no inclusions")
        return make_laminate(lam["mu1"], lam["mu2"], lam.get("axis", 0), spec.get("mu0", 1.0))
    if spec.get("laminate") is not None:
        raise InvalidParams("'laminate' block only applies to the laminate model")
    params = model_params(spec)
    mask = build_mask(inclusions, N) if inclusions is not None and inclusions.shapes else None
    return EXAMPLES[name](params, mask)


def validate(config: dict) -> RunConfig:
    """Schema check followed by the physical invariants; no cell problem is solved."""
    try:
        jsonschema.validate(config, schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema violation at {where}: {exc.message}") from exc
    command = config["command"]
    numerics = {**DEFAULT_NUMERICS, **config.get("numerics", {})}
    if numerics["N"] not in GRID_SIZES:
        raise ConfigError(f"numerics.N must be one of {GRID_SIZES}")
    inclusions = None
    if "geometry" in config:
        inclusions = InclusionSpec.from_dicts(config["geometry"].get("inclusions", []))
        inclusions.check_well_separated()
    model = None
    needs_model = command in ("eval", "table", "gamma", "audit")
    if needs_model and "model" not in config:
        raise ConfigError(f"command {command!r} needs a 'model' section")
    if "model" in config:
        model = build_model(config["model"], inclusions, numerics["N"])
    required = {"eval": "points", "table": "grid", "gamma": "gamma", "fenchel": "fenchel"}
    if command in required and required[command] not in config:
        raise ConfigError(f"command {command!r} needs a '{required[command]}' section")
    if command == "gamma":
        for eps in config["gamma"]["epsilons"]:
            m = round(1 / eps)
            if abs(m * eps - 1) > 1e-12:
                raise ConfigError(f"gamma epsilons must be 1/m for integer m, got {eps}")
    rc = RunConfig(config, command, model, inclusions, numerics, int(config.get("threads", 1)))
    rc.solver  # SolverOpts enforces its own invariants
    return rc
