"""JSON reports and CSV tables.

Report files are append-only: every write picks the next free index
``<name>.<k>.json`` and never replaces an existing file. Tables are written
with ``repr`` floats so identical inputs give byte-identical CSV files.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

REPORT_SCHEMA_ID = "qdobrushin.report/1"


def _plain(x: Any):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, frozenset):
        return sorted(x)
    return x


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


@dataclass
class Table:
    columns: list[str]
    rows: list[Sequence]

    @classmethod
    def from_dicts(cls, dicts: Sequence[dict], columns: Sequence[str] | None = None) -> "Table":
        if not dicts:
            return cls(list(columns or []), [])
        cols = list(columns) if columns else list(dicts[0].keys())
        return cls(cols, [[d.get(c) for c in cols] for d in dicts])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_cell(v) for v in row])
        return buf.getvalue()


@dataclass
class Assertion:
    name: str
    passed: bool
    value: Any = None
    bound: Any = None
    claim: str = ""
    note: str = ""

    def to_dict(self) -> dict:
        return _plain({"name": self.name, "passed": bool(self.passed), "value": self.value, "bound": self.bound,
                       "claim": self.claim, "note": self.note})


@dataclass
class ExperimentReport:
    name: str
    config: dict
    config_hash: str
    model_hash: str | None = None
    assertions: list[Assertion] = field(default_factory=list)
    tables: dict[str, Table] = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    seed: int = 0
    wall_clock: float = 0.0
    status: str = "ok"
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "ok" and all(a.passed for a in self.assertions)

    def check(self, name: str, passed: bool, value=None, bound=None, claim: str = "", note: str = "") -> bool:
        self.assertions.append(Assertion(name, bool(passed), value, bound, claim, note))
        return bool(passed)

    def to_dict(self, claims: bool = False) -> dict:
        out = {"schema": REPORT_SCHEMA_ID, "name": self.name, "status": self.status, "passed": self.passed,
               "error": self.error, "seed": self.seed, "config": self.config, "config_hash": self.config_hash,
               "model_hash": self.model_hash, "metrics": _plain(self.metrics),
               "assertions": [a.to_dict() for a in self.assertions], "tables": {}, "wall_clock": self.wall_clock}
        if not claims:
            for a in out["assertions"]:
                a.pop("claim")
        return out

    def write(self, out_dir: str | Path, claims: bool = False) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        k = 0
        while (out_dir / f"{self.name}.{k}.json").exists():
            k += 1
        stem = f"{self.name}.{k}"
        obj = self.to_dict(claims)
        for tname, table in self.tables.items():
            fname = f"{stem}.{tname}.csv"
            (out_dir / fname).write_text(table.to_csv())
            obj["tables"][tname] = fname
        path = out_dir / f"{stem}.json"
        with open(path, "x") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
        return path


def read_report(path: str | Path) -> dict:
    with open(path) as fh:
        obj = json.load(fh)
    if obj.get("schema") != REPORT_SCHEMA_ID:
        raise ValueError(f"{path}: not a report (schema {obj.get('schema')!r})")
    return obj


def read_table(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]
