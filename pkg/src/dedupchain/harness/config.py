"""Run configuration: one INI file, overridable from the command line.

Example::

    [economics]
    profit_P = 2.165
    storage_fee_SF = 0.165
    storage_cost_SC = 0.1
    access_fee_AF = 0.1

    [contract]
    interval = 10
    deposit = 0.05
    integer_mode = false

    [experiment1]
    ef_fractions = 0.1, 0.2, 0.3, 0.4, 0.5
    n_fractions = 0.1, 0.5, 0.9, 1
    users = 10, 20, 30, 40, 50, 60, 70, 80, 90, 100
    ef_quantum = 0.001

    [experiment2]
    csps = 5
    ef_fraction = 0.4
    assignment = round_robin

    [run]
    seed = 0
    workers = 1

    [paths]
    dataset =
    sizes =
    out_dir =
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from ..economics import EconParams
from ..money import money
from .experiments import EF_FRACTIONS, N_FRACTIONS, USER_COUNTS

class ConfigError(ValueError):
    pass

_ECON_FIELDS = {f.name for f in fields(EconParams)}

@dataclass
class RunConfig:
    params: EconParams = field(default_factory=EconParams.reference)
    interval: int = 10
    deposit: Fraction = Fraction(0)
    integer_mode: bool = False
    ef_fractions: tuple = EF_FRACTIONS
    n_fractions: tuple = N_FRACTIONS
    users: tuple = USER_COUNTS
    ef_quantum: Optional[Fraction] = None
    csps: int = 5
    exp2_ef_fraction: Fraction = Fraction(2, 5)
    assignment: str = "round_robin"
    seed: int = 0
    workers: int = 1
    dataset: Optional[str] = None
    sizes: Optional[str] = None
    out_dir: Optional[str] = None

    def override(self, **changes) -> "RunConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

def _fractions(text: str) -> tuple:
    return tuple(money(x) for x in text.replace(",", " ").split())

def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    cfg = RunConfig()
    try:
        if cp.has_section("economics"):
            econ = {}
            for key, value in cp.items("economics"):
                if key not in _ECON_FIELDS:
                    raise ConfigError(f"{source}: unknown economics key {key!r}")
                econ[key] = (cp["economics"].getboolean(key) if key == "waive_first_uploader_ef"
                             else money(value))
            cfg.params = EconParams(**{**_params_dict(cfg.params), **econ})
        if cp.has_section("contract"):
            s = cp["contract"]
            cfg.interval = s.getint("interval", cfg.interval)
            cfg.deposit = money(s.get("deposit", str(cfg.deposit)))
            cfg.integer_mode = s.getboolean("integer_mode", cfg.integer_mode)
        if cp.has_section("experiment1"):
            s = cp["experiment1"]
            if "ef_fractions" in s:
                cfg.ef_fractions = _fractions(s["ef_fractions"])
            if "n_fractions" in s:
                cfg.n_fractions = _fractions(s["n_fractions"])
            if "users" in s:
                cfg.users = tuple(int(x) for x in s["users"].replace(",", " ").split())
            q = s.get("ef_quantum", "").strip()
            cfg.ef_quantum = money(q) if q else None
        if cp.has_section("experiment2"):
            s = cp["experiment2"]
            cfg.csps = s.getint("csps", cfg.csps)
            cfg.exp2_ef_fraction = money(s.get("ef_fraction", str(cfg.exp2_ef_fraction)))
            cfg.assignment = s.get("assignment", cfg.assignment)
        if cp.has_section("run"):
            s = cp["run"]
            cfg.seed = s.getint("seed", cfg.seed)
            cfg.workers = s.getint("workers", cfg.workers)
        if cp.has_section("paths"):
            s = cp["paths"]
            cfg.dataset = s.get("dataset") or None
            cfg.sizes = s.get("sizes") or None
            cfg.out_dir = s.get("out_dir") or None
    except (ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{source}: {exc}") from None
    if cfg.interval < 1 or cfg.csps < 1 or cfg.workers < 1:
        raise ConfigError(f"{source}: interval, csps and workers must be >= 1")
    return cfg

def _params_dict(p: EconParams) -> dict:
    return {f.name: getattr(p, f.name) for f in fields(p)}

def load_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    return parse_config(text, str(path))

def bundled_config_text() -> str:
    return (resources.files("dedupchain.data") / "experiment1.ini").read_text(encoding="utf-8")
