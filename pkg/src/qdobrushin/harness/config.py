"""Experiment configuration: YAML files validated against a JSON schema.

Example::

    schema: qdobrushin.config/1
    kind: stationarity
    model: {name: chain, params: {n: 4, seed: 0}}
    beta: 0.1
    seed: 0
    tolerances: {residual: 1.0e-9}
    options: {}
    output: {dir: runs, name: stationarity-chain4}
"""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

CONFIG_SCHEMA_ID = "qdobrushin.config/1"

KINDS = ("stationarity", "kms", "mix-continuous", "mix-discrete", "dobrushin", "costdyn-checks",
         "cmi-decay", "w1-bench")

DEFAULT_TOLERANCES = {
    "residual": 1e-9,
    "w1_gap": 1e-7,
    "evolution": 1e-10,
    "contract": 1e-6,
}

SCHEMA = {
    "type": "object",
    "required": ["kind", "model"],
    "additionalProperties": False,
    "properties": {
        "schema": {"const": CONFIG_SCHEMA_ID},
        "kind": {"enum": list(KINDS)},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "name": {"type": "string"},
                "params": {"type": "object"},
                "spec": {"type": "object"},
            },
            "oneOf": [{"required": ["name"]}, {"required": ["spec"]}],
        },
        "beta": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "tolerances": {
            "type": "object",
            "additionalProperties": {"type": "number", "exclusiveMinimum": 0},
        },
        "options": {"type": "object"},
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "name": {"type": "string"}},
        },
    },
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    kind: str
    model: dict
    beta: float = 0.1
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    options: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"schema": CONFIG_SCHEMA_ID, "kind": self.kind, "model": copy.deepcopy(self.model),
                "beta": self.beta, "seed": self.seed, "tolerances": dict(self.tolerances),
                "options": copy.deepcopy(self.options), "output": dict(self.output)}

    def tolerance(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES[key]))

    @property
    def name(self) -> str:
        return self.output.get("name") or f"{self.kind}-{self.model.get('name', 'spec')}"

    @property
    def out_dir(self) -> Path:
        return Path(os.environ.get("QDOBRUSHIN_OUT") or self.output.get("dir") or "runs")

    def content_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()


def validate(obj: dict) -> ExperimentConfig:
    if not isinstance(obj, dict):
        raise ConfigError("configuration must be a mapping")
    try:
        jsonschema.validate(obj, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    return ExperimentConfig(
        kind=obj["kind"], model=obj["model"], beta=float(obj.get("beta", 0.1)), seed=int(obj.get("seed", 0)),
        tolerances=dict(obj.get("tolerances", {})), options=dict(obj.get("options", {})),
        output=dict(obj.get("output", {})))


def load(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    with open(path) as fh:
        obj = yaml.safe_load(fh)
    cfg = validate(obj)
    env_seed = os.environ.get("QDOBRUSHIN_SEED")
    if seed_override is not None:
        cfg.seed = seed_override
    elif env_seed:
        cfg.seed = int(env_seed)
    return cfg
