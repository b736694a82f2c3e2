"""Run manifests: filter parameter files, environment overrides, resolved settings."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .core.state import FilterParams
from .keyvalue import ConfigError, dump, parse

ENV_PREFIX = "DGRID_"
PARAMS_SECTION = "filter"


def _converter(name: str):
    kind = {f.name: str(f.type) for f in fields(FilterParams)}[name]
    return int if kind == "int" else float


def _convert_int(raw: str) -> int:
    # allow 2e5 style counts as long as they are integral
    v = float(raw)
    if v != int(v):
        raise ValueError("expected an integer")
    return int(v)


def _convert(name: str, raw: str):
    return _convert_int(raw) if _converter(name) is int else float(raw)


def params_from_text(text: str, path="<string>", base: FilterParams | None = None) -> FilterParams:
    """Reads a ``[filter]`` section; missing keys keep the values of ``base``."""
    base = FilterParams() if base is None else base
    kw = {}
    for sec in parse(text, path):
        if sec.name != PARAMS_SECTION:
            raise ConfigError(path, sec.line, f"unknown section [{sec.name}] (expected [{PARAMS_SECTION}])")
        for key in FilterParams.keys():
            v = sec.take(key, lambda raw, k=key: _convert(k, raw))
            if v is not None:
                kw[key] = v
        sec.finish()
    try:
        return base.with_(**kw)
    except ValueError as exc:
        raise ConfigError(path, 0, str(exc)) from None


def load_params(path, base: FilterParams | None = None) -> FilterParams:
    p = Path(path)
    return params_from_text(p.read_text(), str(p), base)


def params_to_text(params: FilterParams) -> str:
    return dump([(PARAMS_SECTION, [(k, getattr(params, k)) for k in FilterParams.keys()])])


def apply_env(params: FilterParams, environ=None) -> FilterParams:
    """``DGRID_<KEY>`` (upper case) overrides any parameter, e.g. ``DGRID_P_B=0.1``."""
    environ = os.environ if environ is None else environ
    kw = {}
    for key in FilterParams.keys():
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is None:
            continue
        try:
            kw[key] = _convert(key, raw)
        except ValueError:
            raise ConfigError(ENV_PREFIX + key.upper(), 0, f"bad value {raw!r}") from None
    try:
        return params.with_(**kw)
    except ValueError as exc:
        raise ConfigError("environment", 0, str(exc)) from None


@dataclass
class RunManifest:
    scenario_path: Path
    params: FilterParams
    out_dir: Path
    seed: int = 0
    strict: bool = False
    threads: int = 1
    steps: int | None = None
    radar: bool = True
    snapshots: bool = True
    csv: bool = False
    pgm: bool = False
    extra: dict = field(default_factory=dict)

    def check(self):
        if not Path(self.scenario_path).is_file():
            raise FileNotFoundError(f"scenario file not found: {self.scenario_path}")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.steps is not None and self.steps < 1:
            raise ValueError("steps must be >= 1")

    def to_text(self, scenario_hash: str) -> str:
        run = [("scenario", self.scenario_path), ("scenario_hash", scenario_hash), ("seed", self.seed),
               ("strict", str(self.strict).lower()), ("threads", self.threads),
               ("steps", self.steps if self.steps is not None else "all"),
               ("radar", str(self.radar).lower())]
        return dump([("run", run)]) + "\n" + params_to_text(self.params)
