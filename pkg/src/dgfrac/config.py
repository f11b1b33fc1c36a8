"""Run configuration: a single JSON document validated before any work."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .evolution import Schedule
from .mesh import MeshParams, PolygonalDomain
from .minimizer import MinimizeOptions

__all__ = ["ConfigError", "SCHEMA", "Config", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Schema or range violation; the message names the offending field."""


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "vertices": {
                    "type": "array",
                    "minItems": 3,
                    "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2},
                },
                "dirichlet": {"type": "array", "items": {"type": "integer", "minimum": 0}},
            },
            "required": ["vertices"],
        },
        "mesh": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"eps": _pos, "c1": _pos, "c2": _pos},
            "required": ["eps"],
        },
        "adaptive": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 0.5},
                "t_grid": {"type": "array", "items": _num, "minItems": 1},
            },
            "required": ["a"],
        },
        "schedule": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "family": {"enum": ["affine", "tearing", "series", "zero"]},
                "delta": _pos,
                "params": {"type": "object"},
            },
            "required": ["family", "delta"],
        },
        "minimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "restarts": {"type": "integer", "minimum": 1},
                "edge_flip": {"type": "boolean"},
                "vertex_move": {"type": "boolean"},
                "collinear_run_break": {"type": "boolean"},
                "truncation_pass": {"type": "boolean"},
                "energy_tol": _pos,
                "max_iters": {"type": "integer", "minimum": 1},
                "random_density": {"type": "number", "minimum": 0, "maximum": 1},
                "run_angle_deg": _pos,
                "violation_granularity": {"enum": ["edge", "sub_edge"]},
                "bounded": {"type": "boolean"},
                "exhaustive_limit": {"type": "integer", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "svg": {"type": "boolean"},
                "csv": {"type": "boolean"},
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "strict": {"type": "boolean"},
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t": {"type": "number", "minimum": 0, "maximum": 1},
                "max_binaries": {"type": "integer", "minimum": 1},
            },
        },
        "adapt": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "a_values": {"type": "array", "items": _num, "minItems": 1},
                "corpus_size": {"type": "integer", "minimum": 1},
                "corpus_seed": {"type": "integer", "minimum": 0},
                "min_length": _pos,
            },
        },
        "converge": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "levels": {
                    "type": "array",
                    "minItems": 1,
                    "items": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                }
            },
            "required": ["levels"],
        },
        "check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "history": {"type": "string"},
                "trials": {"type": "integer", "minimum": 0},
            },
        },
    },
    "required": ["domain", "mesh"],
}

_RANGE_HINTS = {
    ("adaptive", "a"): "a must lie in (0, 0.5)",
    ("mesh", "eps"): "eps must be > 0",
    ("schedule", "delta"): "delta must be > 0",
}


@dataclass(frozen=True)
class Config:
    raw: dict
    domain: PolygonalDomain
    mesh: MeshParams
    a: float
    schedule: Schedule | None
    options: MinimizeOptions
    out_dir: str
    svg: bool
    csv: bool
    seed: int
    strict: bool

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))


def _path(err) -> str:
    return ".".join(str(p) for p in err.absolute_path) or "<root>"


def parse_config(raw: dict, seed: int | None = None, strict: bool | None = None) -> Config:
    """Validate ``raw`` and build typed objects; raises :class:`ConfigError`."""
    v = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(v.iter_errors(raw), key=lambda e: list(e.absolute_path))
    if errors:
        msgs = []
        for e in errors:
            hint = _RANGE_HINTS.get(tuple(e.absolute_path))
            msgs.append(f"{_path(e)}: {hint + '; ' if hint else ''}{e.message}")
        raise ConfigError("invalid config\n  " + "\n  ".join(msgs))
    try:
        dom = raw["domain"]
        domain = PolygonalDomain(dom["vertices"], tuple(dom.get("dirichlet", range(len(dom["vertices"])))))
        m = raw["mesh"]
        mesh = MeshParams(m["eps"], m.get("c1", 0.5), m.get("c2", 2.0))
        a = float(raw.get("adaptive", {}).get("a", 0.25))
        s = raw.get("schedule")
        schedule = Schedule(s["family"], float(s["delta"]), dict(s.get("params", {}))) if s else None
        mopts = dict(raw.get("minimizer", {}))
        t_grid = raw.get("adaptive", {}).get("t_grid")
        sd = int(raw.get("seed", 0) if seed is None else seed)
        options = MinimizeOptions(t_grid=tuple(t_grid) if t_grid else None, rng_seed=sd, **mopts)
        options.grid(a)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    out = raw.get("output", {})
    return Config(
        raw=raw,
        domain=domain,
        mesh=mesh,
        a=a,
        schedule=schedule,
        options=options,
        out_dir=out.get("dir", "out"),
        svg=bool(out.get("svg", True)),
        csv=bool(out.get("csv", True)),
        seed=sd,
        strict=bool(raw.get("strict", False)) if strict is None else strict,
    )


def load_config(path, seed: int | None = None, strict: bool | None = None) -> Config:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(raw, seed, strict)
