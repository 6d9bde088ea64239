"""Config files, run manifests, and rollout exports.

The config format is a flat INI-style text file with one section per
concern ([economy], [curriculum], [training]). Every key has a default, so
an empty file is the reference configuration; unknown keys are errors, not
typos silently ignored. Loading the serialized form of a config reproduces
it exactly.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import os
import sys
import time
from typing import Any

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    CurriculumConfig,
    EconomyConfig,
    RunConfig,
    TrainingConfig,
)

_SECTIONS = {
    "economy": EconomyConfig,
    "curriculum": CurriculumConfig,
    "training": TrainingConfig,
}

ROLLOUT_SCHEMA_VERSION = 1


def _parse_bool(raw: str) -> bool:
    low = raw.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {raw!r}")


def _parse_float_list(raw: str) -> tuple[float, ...]:
    parts = raw.replace(",", " ").split()
    if not parts:
        raise ValueError("expected at least one number")
    return tuple(float(p) for p in parts)


def _parser_for(type_str: str):
    if type_str == "int":
        return int
    if type_str == "float":
        return float
    if type_str == "bool":
        return _parse_bool
    if type_str == "str":
        return lambda raw: raw.strip()
    # List-like fields: scalars allowed where a per-firm broadcast exists.
    if "Sequence" in type_str or "tuple" in type_str:
        if "| None" in type_str or "float |" in type_str:
            def scalar_or_list(raw):
                values = _parse_float_list(raw)
                return values[0] if len(values) == 1 else values
            return scalar_or_list
        return _parse_float_list
    raise AssertionError(f"no parser for config field type {type_str}")


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (tuple, list)):
        return " ".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _find_line(text: str, key: str) -> int | None:
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith(key) and stripped[len(key) :].lstrip().startswith("="):
            return lineno
    return None


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse config text; unspecified keys take the reference defaults."""
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    kwargs: dict[str, dict] = {name: {} for name in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(
                f"{source}: unknown section [{section}] "
                f"(expected one of {sorted(_SECTIONS)})"
            )
        cls = _SECTIONS[section]
        known = {f.name: f for f in dataclasses.fields(cls)}
        for key, raw in parser.items(section):
            if key not in known:
                line = _find_line(text, key)
                where = f"{source}:{line}" if line else source
                raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
            try:
                kwargs[section][key] = _parser_for(str(known[key].type))(raw)
            except (ValueError, TypeError) as exc:
                line = _find_line(text, key)
                where = f"{source}:{line}" if line else source
                raise ConfigError(f"{where}: bad value for {key!r}: {exc}") from exc
    return RunConfig(
        economy=EconomyConfig(**kwargs["economy"]),
        curriculum=CurriculumConfig(**kwargs["curriculum"]),
        training=TrainingConfig(**kwargs["training"]),
    )


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=path)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; parsing it reproduces `cfg` exactly."""
    lines = []
    for section, obj in (
        ("economy", cfg.economy),
        ("curriculum", cfg.curriculum),
        ("training", cfg.training),
    ):
        lines.append(f"[{section}]")
        for f in dataclasses.fields(obj):
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
        lines.append("")
    return "\n".join(lines)


def write_config(path: str, cfg: RunConfig) -> None:
    _atomic_write_text(path, serialize_config(cfg))


def _atomic_write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_manifest(
    out_dir: str, cfg: RunConfig, seed: int, argv: list[str] | None = None
) -> str:
    """Record everything needed to reproduce the run; written atomically at start."""
    manifest = {
        "version": __version__,
        "seed": seed,
        "argv": list(argv if argv is not None else sys.argv),
        "started_unix": time.time(),
        "config": serialize_config(cfg),
        "outputs": ["metrics.csv", "manifest.json", "config.txt", "checkpoints/"],
    }
    path = os.path.join(out_dir, "manifest.json")
    _atomic_write_text(path, json.dumps(manifest, indent=2))
    write_config(os.path.join(out_dir, "config.txt"), cfg)
    return path


def _as_lists(x) -> list:
    return np.asarray(x).tolist()


def rollout_record(
    cfg: EconomyConfig, traces: list[dict], seed: int
) -> dict:
    """Assemble the versioned JSON document for exported episode rollouts."""
    episodes = []
    for trace in traces:
        episodes.append({key: _as_lists(val) for key, val in trace.items()})
    return {
        "schema_version": ROLLOUT_SCHEMA_VERSION,
        "seed": seed,
        "num_consumers": cfg.num_consumers,
        "num_firms": cfg.num_firms,
        "episode_length": cfg.episode_length,
        "episodes": episodes,
    }


def export_rollout(path: str, record: dict) -> None:
    validate_rollout(record)
    _atomic_write_text(path, json.dumps(record))


def load_rollout(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        record = json.load(fh)
    validate_rollout(record)
    return record


_EPISODE_SERIES = {
    # name -> (per-timestep row length key: "F", "C", or None for scalar rows)
    "price": "F",
    "wage": "F",
    "inventory": "F",
    "capital": "F",
    "firm_budget": "F",
    "export_sold": "F",
    "production": "F",
    "labor": "F",
    "profit": "F",
    "consumption": "C",
    "hours": "C",
    "consumer_budget": "C",
    "tax_income": None,
    "tax_corporate": None,
    "tax_revenue": None,
    "social_welfare": None,
}


def validate_rollout(record: dict) -> None:
    """Structural validation against the bundled rollout schema."""
    for key in ("schema_version", "num_consumers", "num_firms", "episode_length", "episodes"):
        if key not in record:
            raise ValueError(f"rollout record missing {key!r}")
    if record["schema_version"] != ROLLOUT_SCHEMA_VERSION:
        raise ValueError(f"unsupported rollout schema version {record['schema_version']}")
    T = record["episode_length"]
    sizes = {"F": record["num_firms"], "C": record["num_consumers"]}
    for ep in record["episodes"]:
        for name, row in _EPISODE_SERIES.items():
            if name not in ep:
                raise ValueError(f"episode missing series {name!r}")
            series = ep[name]
            if len(series) != T:
                raise ValueError(f"series {name!r} has {len(series)} rows, expected {T}")
            if row is not None and any(len(r) != sizes[row] for r in series):
                raise ValueError(f"series {name!r} rows must have length {sizes[row]}")


def schema_path() -> str:
    return os.path.join(os.path.dirname(__file__), "schemas", "rollout.schema.json")
