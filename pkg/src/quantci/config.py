"""Scenario manifests: a flat INI-style format with one section per scenario.

Example::

    [manifest]
    output_dir = results
    formats = csv, text

    [table4_panel1]
    nu = 2.5
    p = 0.5
    q = 0.2
    n = 500
    m_plus = inf
    m_minus = inf

Every key of :class:`~quantci.simulation.ScenarioConfig` may be set; unset
keys take their defaults (n_sim=100, R=999, alpha=0.9, seed=17).
"""

import configparser
from dataclasses import dataclass, fields
import re
from typing import Dict, Tuple

from .simulation import ConfigError, ScenarioConfig

__all__ = ["RunManifest", "ConfigParseError", "parse_config", "parse_config_text", "serialize_manifest"]

MANIFEST_SECTION = "manifest"
FORMATS = ("csv", "text")
REQUIRED = ("nu", "q", "n")
_FIELD_TYPES = {
    "mu": float, "nu": float, "sigma": float, "p": float, "q": float, "alpha": float,
    "n": int, "n_sim": int, "R": int, "seed": int,
    "m_plus": "size", "m_minus": "size",
    "interval_kind": str, "interval_engine": str, "confidence_target": str, "virtual_draw": str,
    "eab_oracle": bool, "methods": "list",
}


class ConfigParseError(ConfigError):
    """A manifest could not be parsed; the message names the key and line."""


@dataclass(frozen=True)
class RunManifest:
    scenarios: Tuple[ScenarioConfig, ...]
    output_dir: str = "results"
    formats: Tuple[str, ...] = FORMATS

    def __post_init__(self):
        names = [s.name for s in self.scenarios]
        if len(set(names)) != len(names):
            raise ConfigParseError("scenario names must be unique")
        bad = [f for f in self.formats if f not in FORMATS]
        if bad:
            raise ConfigParseError(f"formats: unknown format(s) {bad}")


def _line_index(text):
    """(section, key) -> 1-based line number, and section -> header line."""
    index: Dict[Tuple[str, str], int] = {}
    section = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        head = re.match(r"\s*\[([^\]]+)\]", line)
        if head:
            section = head.group(1).strip()
            index[(section, None)] = lineno
            continue
        kv = re.match(r"\s*([^=:#;\s][^=:]*?)\s*[=:]", line)
        if kv and section is not None:
            index[(section, kv.group(1).strip())] = lineno
    return index


def _convert(key, raw):
    kind = _FIELD_TYPES[key]
    value = raw.strip()
    if kind == "size":
        return None if value.lower() in ("inf", "infinite", "infinity") else int(value)
    if kind == "list":
        return tuple(v.strip() for v in value.split(",") if v.strip())
    if kind is bool:
        low = value.lower()
        if low in ("true", "yes", "1", "on"):
            return True
        if low in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return kind(value)


def parse_config_text(text, source="<config>") -> RunManifest:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigParseError(f"{source}: {exc}") from exc
    lines = _line_index(text)

    def where(section, key=None):
        return f"{source}, line {lines.get((section, key), '?')}"

    output_dir, formats = "results", FORMATS
    scenarios = []
    for section in parser.sections():
        body = parser[section]
        if section == MANIFEST_SECTION:
            for key, raw in body.items():
                if key == "output_dir":
                    output_dir = raw.strip()
                elif key == "formats":
                    formats = tuple(v.strip() for v in raw.split(",") if v.strip())
                else:
                    raise ConfigParseError(f"{where(section, key)}: unknown key '{key}'")
            continue
        kwargs = {"name": section}
        for key, raw in body.items():
            if key not in _FIELD_TYPES:
                raise ConfigParseError(f"{where(section, key)}: unknown key '{key}'")
            try:
                kwargs[key] = _convert(key, raw)
            except ValueError as exc:
                raise ConfigParseError(f"{where(section, key)}: bad value for '{key}': {exc}") from exc
        missing = [k for k in REQUIRED if k not in kwargs]
        if kwargs.get("m_plus", None) is None and kwargs.get("m_minus", None) is None and "p" not in kwargs:
            missing.append("p")
        if missing:
            raise ConfigParseError(f"{where(section)}: [{section}] missing required key(s) {missing}")
        try:
            scenarios.append(ScenarioConfig(**kwargs))
        except ConfigError as exc:
            key = str(exc).split(":", 1)[0]
            raise ConfigParseError(f"{where(section, key)}: {exc}") from exc
    try:
        return RunManifest(tuple(scenarios), output_dir, formats)
    except ConfigParseError as exc:
        raise ConfigParseError(f"{source}: {exc}") from exc


def parse_config(path) -> RunManifest:
    """Read and validate a manifest file."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, source=str(path))


def _render(value):
    if value is None:
        return "inf"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_manifest(manifest: RunManifest) -> str:
    """Text form that :func:`parse_config_text` maps back to an equal manifest."""
    out = [f"[{MANIFEST_SECTION}]", f"output_dir = {manifest.output_dir}",
           f"formats = {', '.join(manifest.formats)}", ""]
    for sc in manifest.scenarios:
        out.append(f"[{sc.name}]")
        for f in fields(ScenarioConfig):
            if f.name == "name" or (f.name == "p" and sc.p is None):
                continue
            out.append(f"{f.name} = {_render(getattr(sc, f.name))}")
        out.append("")
    return "\n".join(out)
