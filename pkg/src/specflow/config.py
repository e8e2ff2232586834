"""Experiment configuration: sectioned key-value files with strict keys."""

from __future__ import annotations

import configparser
import copy
import hashlib
import json
import os
import re

from .errors import ConfigError

KINDS = ("cf-classify", "birkhoff-growth", "entropy-scan", "pd-scan", "match-scan", "occupancy-scan")

DEFAULTS: dict[str, dict[str, str]] = {
    "experiment": {"kind": "entropy-scan", "seed": "20240601", "workers": "1", "assert": "false"},
    "alpha": {"value": "golden", "depth": "48"},
    "roof": {"kind": "power", "a": "1", "b": "1", "gamma": "0.5", "background": "1"},
    "classify": {"c_const": "1.0"},
    "birkhoff": {"samples": "100", "q_min": "100", "q_max": "100000", "order": "1"},
    "entropy": {
        "m": "4", "epsilon": "0.1", "beta": "1.0", "r_grid": "50,100,200,400,800",
        "delta": "auto", "samples": "400", "scale": "power", "sampler": "auto",
    },
    "pd": {
        "pairs": "200", "d_min": "1e-8", "d_max": "1e-3", "horizon": "1e6", "j_horizon": "1000000",
        "c0": "auto", "c1": "1e-4", "window_r": "1000", "window_scale": "0.1", "method": "exact",
        "step": "0.01", "band_k": "", "band_pairs": "100",
    },
    "match": {"pairs": "20", "r": "1000", "m": "4", "d_min": "1e-6", "d_max": "1e-3", "method": "exact"},
    "occupancy": {
        "samples": "50", "t": "10000", "p_gamma": "auto", "step": "0.1",
        "v_n": "100,1000,10000", "v_samples": "1000", "v_exponent": "1+gamma",
    },
    "output": {"dir": "specflow-out", "cache": ".specflow-cache"},
}

# keys that change neither results nor their meaning
NON_SEMANTIC = {("experiment", "workers"), ("output", "dir"), ("output", "cache")}

_KEY_RE = re.compile(r"^\s*([^=:#;\s][^=:]*?)\s*[=:]")
_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")


def _line_index(text: str) -> dict:
    where = {}
    section = None
    for no, line in enumerate(text.splitlines(), 1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip().lower()
            where.setdefault((section, None), no)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where[(section, m.group(1).strip().lower())] = no
    return where


class ExperimentConfig:
    """Resolved configuration: every key has a default, unknown keys are errors."""

    def __init__(self, values: dict, source: str | None = None):
        self.values = values
        self.source = source

    @classmethod
    def defaults(cls) -> ExperimentConfig:
        return cls(copy.deepcopy(DEFAULTS))

    @classmethod
    def from_text(cls, text: str, source: str | None = None) -> ExperimentConfig:
        where = _line_index(text)
        parser = configparser.ConfigParser(interpolation=None, strict=True)
        parser.optionxform = str.lower
        try:
            parser.read_string(text, source=source or "<config>")
        except configparser.Error as exc:
            line = getattr(exc, "lineno", None)
            raise ConfigError(f"cannot parse config: {exc.message if hasattr(exc, 'message') else exc}",
                              line=line) from None
        cfg = cls.defaults()
        cfg.source = source
        for section in parser.sections():
            sec = section.lower()
            if sec not in DEFAULTS:
                raise ConfigError(f"unknown section {section!r}", key=sec, line=where.get((sec, None)))
            for key, val in parser.items(section):
                if key not in DEFAULTS[sec]:
                    raise ConfigError(f"unknown key {sec}.{key}", key=f"{sec}.{key}", line=where.get((sec, key)))
                cfg.values[sec][key] = val.strip()
        cfg.validate(where)
        return cfg

    @classmethod
    def load(cls, path: str) -> ExperimentConfig:
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc.strerror}", key=path) from None
        return cls.from_text(text, source=path)

    def override(self, item: str) -> None:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        lhs, val = item.split("=", 1)
        sec, key = (s.strip().lower() for s in lhs.split(".", 1))
        if sec not in DEFAULTS or key not in DEFAULTS[sec]:
            raise ConfigError(f"unknown key {sec}.{key}", key=f"{sec}.{key}")
        self.values[sec][key] = val.strip()
        self.validate({})

    # -- typed access --------------------------------------------------------

    def get(self, sec: str, key: str) -> str:
        return self.values[sec][key]

    def getint(self, sec: str, key: str) -> int:
        return int(float(self.values[sec][key]))

    def getfloat(self, sec: str, key: str) -> float:
        return float(self.values[sec][key])

    def getbool(self, sec: str, key: str) -> bool:
        return self.values[sec][key].strip().lower() in ("1", "true", "yes", "on")

    def getlist(self, sec: str, key: str, conv=float) -> list:
        raw = self.values[sec][key].strip()
        if not raw:
            return []
        return [conv(v) for v in raw.replace(";", ",").split(",") if v.strip()]

    def optional_float(self, sec: str, key: str) -> float | None:
        raw = self.values[sec][key].strip().lower()
        return None if raw in ("auto", "", "none") else float(raw)

    def validate(self, where: dict) -> None:
        def fail(sec, key, msg):
            raise ConfigError(msg, key=f"{sec}.{key}", line=where.get((sec, key)))

        kind = self.get("experiment", "kind")
        if kind not in KINDS:
            fail("experiment", "kind", f"unknown experiment kind {kind!r}")
        numeric = {
            ("experiment", "seed"): int, ("experiment", "workers"): int, ("alpha", "depth"): int,
            ("entropy", "m"): int, ("entropy", "samples"): int, ("entropy", "epsilon"): float,
            ("entropy", "beta"): float, ("birkhoff", "samples"): int, ("pd", "pairs"): int,
            ("occupancy", "samples"): int, ("occupancy", "t"): float, ("match", "r"): float,
        }
        for (sec, key), conv in numeric.items():
            try:
                conv(float(self.values[sec][key])) if conv is int else conv(self.values[sec][key])
            except ValueError:
                fail(sec, key, f"{sec}.{key} must be numeric, got {self.values[sec][key]!r}")
        try:
            self.getlist("entropy", "r_grid")
        except ValueError:
            fail("entropy", "r_grid", "r_grid must be a comma separated list of numbers")

    # -- identity ------------------------------------------------------------

    def semantic(self) -> dict:
        out = {}
        for sec, kv in sorted(self.values.items()):
            out[sec] = {k: v for k, v in sorted(kv.items()) if (sec, k) not in NON_SEMANTIC}
        return out

    def digest(self) -> str:
        blob = json.dumps(self.semantic(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()

    def cache_dir(self) -> str:
        return os.environ.get("SPECFLOW_CACHE") or self.get("output", "cache")

    def to_text(self) -> str:
        lines = []
        for sec, kv in self.values.items():
            lines.append(f"[{sec}]")
            lines.extend(f"{k} = {v}" for k, v in kv.items())
            lines.append("")
        return "\n".join(lines)
