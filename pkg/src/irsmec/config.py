"""Configuration documents (YAML or JSON) for the command-line tool.

Every key has a default, so an empty document is valid.  Unknown keys are
rejected with the dotted path of the offending key.  Numbers may be given as
strings (YAML 1.1 reads ``1e7`` as text), they are coerced to the key's type.

Precedence, lowest first: built-in defaults, the config file, command-line
flags.
"""

from __future__ import annotations

import copy
import json
import math
import os

import yaml

from .channel import PathLossParams
from .errors import DomainError, ValidationError
from .experiments import SWEPT_PARAMS, SolverOptions, SweepConfig, parse_scheme
from .model import DeviceParams, SystemParams
from .plotting import FAMILIES
from .scenario import Geometry, ScenarioConfig

FLOAT, INT, STR, BOOL = "float", "int", "str", "bool"
OPT_INT = "int?"
INT_LIST, STR_LIST, OPT_STR_LIST = "int[]", "str[]", "str[]?"

#: section -> key -> (type, default)
SCHEMA = {
    "seed": (INT, 0),
    "algorithm": (STR, "greedy_irs"),
    "format": (STR, "json"),
    "parallel": (OPT_INT, None),
    "record_timing": (BOOL, True),
    "system": {
        "N": (INT, 8),
        "M": (INT, 100),
        "B": (FLOAT, 1e7),
        "sigma2": (FLOAT, 1e-10),
        "T": (FLOAT, 1.0),
        "L": (OPT_INT, None),
    },
    "device": {
        "epsilon": (FLOAT, 1e-28),
        "S_bits": (FLOAT, 8e6),
        "C": (FLOAT, 100.0),
        "f_max": (FLOAT, 1e9),
    },
    "geometry": {
        "server_height": (FLOAT, 10.0),
        "irs_height": (FLOAT, 5.0),
        "device_height": (FLOAT, 0.0),
        "d1": (FLOAT, 20.0),
        "d2": (FLOAT, 3.0),
        "ap_irs_horizontal": (FLOAT, 50.0),
        "near_arc": (FLOAT, math.pi),
    },
    "path_loss": {
        "lam": (FLOAT, 1e-3),
        "D0": (FLOAT, 1.0),
        "alpha": (FLOAT, 3.0),
    },
    "scenario": {
        "rician_K": (FLOAT, 100.0),
        "n_far": (OPT_INT, None),
        "n_near": (OPT_INT, None),
    },
    "solver": {
        "rho": (FLOAT, 300.0),
        "max_iter": (INT, 500),
        "tol": (FLOAT, 1e-8),
        "round_tol": (FLOAT, 1e-6),
    },
    "sweep": {
        "param": (STR, "M"),
        "values": (INT_LIST, [10, 30, 50, 70, 90, 110, 130, 150]),
        "trials": (INT, 300),
        "base_seed": (INT, 0),
        "schemes": (
            STR_LIST,
            [
                "greedy_irs",
                "penalty_irs",
                "enumerate_irs",
                "all_offload_irs",
                "greedy_no_irs",
                "penalty_no_irs",
                "enumerate_no_irs",
                "all_local",
            ],
        ),
        "figures": (OPT_STR_LIST, None),
    },
    "bench": {
        "N_values": (INT_LIST, [8, 16, 32]),
        "M_values": (INT_LIST, []),
        "repetitions": (INT, 20),
        "base_seed": (INT, 0),
        "algorithms": (STR_LIST, ["greedy", "penalty"]),
    },
}


def defaults() -> dict:
    def build(node):
        if isinstance(node, dict):
            return {k: build(v) for k, v in node.items()}
        return copy.deepcopy(node[1])

    return build(SCHEMA)


def _coerce(kind: str, value, where: str):
    if value is None:
        if kind.endswith("?"):
            return None
        raise ValidationError(f"{where}: a value is required")
    base = kind.rstrip("?")
    try:
        if base == FLOAT:
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if math.isnan(out):
                raise ValueError
            return out
        if base == INT:
            if isinstance(value, bool):
                raise TypeError
            f = float(value)
            if not f.is_integer():
                raise ValueError
            return int(f)
        if base == BOOL:
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise TypeError
        if base == STR:
            if not isinstance(value, str):
                raise TypeError
            return value
        if base in ("int[]", "str[]"):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            item = INT if base == "int[]" else STR
            return [_coerce(item, v, f"{where}[{i}]") for i, v in enumerate(value)]
    except (TypeError, ValueError, OverflowError):
        raise ValidationError(f"{where}: expected {base}, got {value!r}") from None
    raise AssertionError(kind)


def merge(doc: dict | None, base: dict | None = None) -> dict:
    """Apply a user document on top of ``base`` (defaults if omitted)."""
    out = copy.deepcopy(base) if base is not None else defaults()
    if doc is None:
        return out
    if not isinstance(doc, dict):
        raise ValidationError("config document must be a mapping")

    def walk(user, schema, target, prefix):
        for key, value in user.items():
            where = f"{prefix}{key}"
            if key not in schema:
                raise ValidationError(f"unknown config key {where!r}")
            if isinstance(schema[key], dict):
                if value is None:
                    continue
                if not isinstance(value, dict):
                    raise ValidationError(f"{where}: expected a mapping")
                walk(value, schema[key], target[key], where + ".")
            else:
                target[key] = _coerce(schema[key][0], value, where)

    walk(doc, SCHEMA, out, "")
    return out


def load(path) -> dict:
    """Read a YAML or JSON document (by extension; YAML otherwise) and merge it."""
    if path is None:
        return defaults()
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = json.loads(text) if path.endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError(f"cannot parse {path}: {exc}") from None
    return merge(doc)


def dump(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def _build(kind, where, **kwargs):
    try:
        return kind(**kwargs)
    except (DomainError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


def scenario_from(cfg: dict) -> ScenarioConfig:
    sys = _build(SystemParams, "system", **cfg["system"])
    dev = _build(DeviceParams, "device", **cfg["device"])
    geo = _build(Geometry, "geometry", **cfg["geometry"])
    pl = _build(PathLossParams, "path_loss", **cfg["path_loss"])
    sc = cfg["scenario"]
    return _build(
        ScenarioConfig, "scenario",
        sys=sys, devs=dev, geometry=geo, path_loss=pl,
        rician_K=sc["rician_K"], n_far=sc["n_far"], n_near=sc["n_near"],
    )


def solver_from(cfg: dict) -> SolverOptions:
    s = cfg["solver"]
    if not s["rho"] > 0:
        raise ValidationError("solver.rho: must be > 0")
    if s["max_iter"] < 1:
        raise ValidationError("solver.max_iter: must be >= 1")
    return SolverOptions(**s)


def sweep_from(cfg: dict) -> SweepConfig:
    sw = cfg["sweep"]
    if sw["param"] not in SWEPT_PARAMS:
        raise ValidationError(f"sweep.param: must be one of {SWEPT_PARAMS}, got {sw['param']!r}")
    for i, name in enumerate(sw["schemes"]):
        try:
            parse_scheme(name)
        except ValidationError as exc:
            raise ValidationError(f"sweep.schemes[{i}]: {exc}") from None
    for i, fam in enumerate(sw["figures"] or []):
        if fam not in FAMILIES:
            raise ValidationError(f"sweep.figures[{i}]: unknown family {fam!r}; valid: {', '.join(FAMILIES)}")
    scenario = scenario_from(cfg)
    for v in sw["values"]:
        try:
            scenario.with_sys(**{sw["param"]: v})
        except (DomainError, ValueError) as exc:
            raise ValidationError(f"sweep.values: {exc}") from None
    return _build(
        SweepConfig, "sweep",
        scenario=scenario, swept_param=sw["param"], values=tuple(sw["values"]),
        trials=sw["trials"], base_seed=sw["base_seed"], schemes=tuple(sw["schemes"]),
        solver=solver_from(cfg),
    )
