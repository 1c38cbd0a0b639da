"""INI experiment configuration with line-numbered diagnostics."""
from __future__ import annotations

import configparser
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..coefficients import CoefficientField, LinearDrift, make_field
from ..errors import ConfigError
from ..geometry import Domain, make_domain

EXPERIMENTS = ("spatial_moments", "temporal_moments", "bound_moments", "riemann_convergence",
               "two_point", "substitution", "full")
SCHEMES = ("project", "penalized")
REQUIRED_SECTIONS = ("experiment", "domain", "coefficients", "paths")

DEFAULTS = {
    "experiment": {"name": "full", "output_dir": "out"},
    "domain": {"kind": "ball", "dimension": "2"},
    "coefficients": {"family": "trigonometric", "drift_coefficient": "0.0"},
    "paths": {"dt_level": "10"},
    "solver": {"scheme": "project", "guard": "true", "eps_boundary_factor": "2.0", "lambda": "1e4"},
    "stratonovich": {"p": "2", "levels": "4..9", "replicas": "2000", "x0_grid": "5", "x0_box": "0.6"},
    "moments": {"p": "2", "replicas": "2000", "bound_replicas": "4000", "separations": "2..6",
                "gaps": "3..8", "anchor": "0.25", "base_point": "", "direction": "",
                "two_point_separations": "2..5", "two_point_level": "6"},
    "anticipating": {"kind": "projected_endpoint", "x_grid_per_axis": "9", "dt_level": "8",
                     "paths": "100", "checkpoints": "0.25, 0.5, 0.75, 1.0"},
}
KNOWN_KEYS = {
    "domain": {"kind", "dimension", "semi_axes", "lo", "hi", "alpha"},
    "coefficients": {"family", "drift_coefficient", "amplitude", "offset", "frequency", "matrix",
                     "intercept", "slope"},
    "solver": {"scheme", "dt_level", "guard", "eps_boundary_factor", "lambda"},
}


def _locate(text: str, section: str, key: str | None = None) -> int | None:
    """1-based line of ``[section]`` or of ``key`` inside it."""
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None and re.match(rf"^{re.escape(key)}\s*[=:]", s):
            return n
    return None


@dataclass(frozen=True)
class ExperimentConfig:
    path: str
    text: str
    sections: dict = field(repr=False)

    # -- typed accessors ---------------------------------------------------
    def raw(self, section: str, key: str) -> str:
        sec = self.sections.get(section, {})
        if key in sec:
            return sec[key]
        if key in DEFAULTS.get(section, {}):
            return DEFAULTS[section][key]
        raise self.error(f"missing key {key!r} in [{section}]", section)

    def has(self, section: str, key: str) -> bool:
        return key in self.sections.get(section, {}) or bool(DEFAULTS.get(section, {}).get(key))

    def error(self, message: str, section: str, key: str | None = None) -> ConfigError:
        line = _locate(self.text, section, key) if key else _locate(self.text, section)
        where = f"{self.path}:{line}: " if line else f"{self.path}: "
        return ConfigError(where + message)

    def _convert(self, section, key, fn, what):
        value = self.raw(section, key)
        try:
            return fn(value)
        except (ValueError, TypeError) as exc:
            raise self.error(f"[{section}] {key} = {value!r} is not {what} ({exc})", section, key) from None

    def get_int(self, section: str, key: str) -> int:
        return self._convert(section, key, int, "an integer")

    def get_float(self, section: str, key: str) -> float:
        return self._convert(section, key, float, "a number")

    def get_bool(self, section: str, key: str) -> bool:
        def conv(v):
            v = v.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off"):
                return False
            raise ValueError("expected true/false")
        return self._convert(section, key, conv, "a boolean")

    def get_floats(self, section: str, key: str) -> tuple[float, ...]:
        return self._convert(section, key, lambda v: tuple(float(p) for p in v.replace(",", " ").split()),
                             "a list of numbers")

    def get_range(self, section: str, key: str) -> tuple[int, ...]:
        """``a..b`` (inclusive) or a comma-separated list of integers."""
        def conv(v):
            v = v.strip()
            if ".." in v:
                a, b = v.split("..")
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ValueError("empty range")
                return tuple(range(lo, hi + 1))
            return tuple(int(p) for p in v.replace(",", " ").split())
        return self._convert(section, key, conv, "an integer range")

    # -- derived objects -----------------------------------------------------
    @property
    def experiment(self) -> str:
        name = self.raw("experiment", "name").strip()
        if name not in EXPERIMENTS:
            raise self.error(f"unknown experiment {name!r}; expected one of {', '.join(EXPERIMENTS)}",
                             "experiment", "name")
        return name

    @property
    def output_dir(self) -> str:
        return self.raw("experiment", "output_dir")

    @property
    def master_seed(self) -> int:
        if "master_seed" not in self.sections.get("paths", {}):
            raise self.error("[paths] master_seed is required (no implicit seeds)", "paths")
        return self.get_int("paths", "master_seed")

    @property
    def dt_level(self) -> int:
        """Solver level; ``[solver] dt_level`` overrides ``[paths] dt_level``."""
        if "dt_level" in self.sections.get("solver", {}):
            return self.get_int("solver", "dt_level")
        return self.get_int("paths", "dt_level")

    @property
    def scheme(self) -> str:
        scheme = self.raw("solver", "scheme").strip()
        if scheme not in SCHEMES:
            raise self.error(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}", "solver", "scheme")
        if scheme != "project":
            raise self.error("the studies run the projection scheme; the penalized scheme is an oracle only",
                             "solver", "scheme")
        return scheme

    def domain(self) -> Domain:
        sec = "domain"
        kind = self.raw(sec, "kind").strip()
        kwargs = {"dimension": self.get_int(sec, "dimension")}
        if "semi_axes" in self.sections[sec]:
            kwargs["semi_axes"] = self.get_floats(sec, "semi_axes")
        for k in ("lo", "hi", "alpha"):
            if k in self.sections[sec]:
                kwargs[k] = self.get_float(sec, k)
        try:
            return make_domain(kind, **kwargs)
        except ValueError as exc:
            raise self.error(str(exc), sec, "kind") from None

    def field(self, dim: int) -> CoefficientField:
        sec = "coefficients"
        family = self.raw(sec, "family").strip()
        drift = LinearDrift.scaled_identity(dim, self.get_float(sec, "drift_coefficient"))
        params = {}
        for k in ("amplitude", "offset", "frequency"):
            if k in self.sections[sec]:
                params[k] = self.get_float(sec, k)
        for k in ("matrix", "intercept", "slope"):
            if k in self.sections[sec]:
                vals = np.asarray(self.get_floats(sec, k))
                want = dim * dim if k == "matrix" else dim
                if vals.size != want:
                    raise self.error(f"[{sec}] {k} needs {want} entries, got {vals.size}", sec, k)
                params[k] = vals.reshape(dim, dim) if k == "matrix" else vals
        try:
            return make_field(family, dim, drift, **params)
        except (ValueError, TypeError) as exc:
            raise self.error(str(exc), sec, "family") from None

    def config_hash(self) -> str:
        return config_hash(self.sections)


def config_hash(sections: dict) -> str:
    """sha256 of the sorted, whitespace-normalized key/value content."""
    norm = {s: {k: " ".join(v.split()) for k, v in sorted(kv.items())} for s, kv in sorted(sections.items())}
    return hashlib.sha256(json.dumps(norm, sort_keys=True).encode()).hexdigest()


def parse_config(text: str, path: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    try:
        parser.read_string(text, source=path)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        msg = str(exc).splitlines()[0]
        raise ConfigError(f"{path}:{line}: {msg}" if line else f"{path}: {msg}") from None
    sections = {s: dict(parser.items(s)) for s in parser.sections()}
    cfg = ExperimentConfig(path, text, sections)
    for s in REQUIRED_SECTIONS:
        if s not in sections:
            raise ConfigError(f"{path}: missing required section [{s}]")
    for s, keys in KNOWN_KEYS.items():
        for k in sections.get(s, {}):
            if k not in keys:
                raise cfg.error(f"unknown key {k!r} in [{s}]", s, k)
    cfg.experiment  # noqa: B018 - validates the name
    cfg.master_seed  # noqa: B018
    cfg.scheme  # noqa: B018
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return parse_config(text, str(path))
