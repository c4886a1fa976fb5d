"""Run configuration: INI-style key = value files with sections.

Unknown sections or keys are rejected by name; every key has a typed default
so a missing file section simply means defaults.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .errors import ConfigError


def _float_list(raw: str):
    return [float(tok) for tok in raw.replace(",", " ").split()]


_SCHEMA = {
    "run": {
        "seed": (int, 0),
        "out_dir": (str, "runs/out"),
    },
    "data": {
        "profile": (str, "exponential"),
        "n_classes": (int, 20),
        "n_max": (int, 500),
        "beta": (float, 100.0),
        "n_min": (int, 5),
        "power": (float, 6.0),
        "dim": (int, 32),
        "noise_sigma": (float, 0.35),
        "test_per_class": (int, 50),
        "dataset_path": (str, ""),
    },
    "train": {
        "loss_kind": (str, "paco"),
        "alpha": (float, 0.05),
        "temperature": (float, 0.2),
        "queue_capacity": (int, 256),
        "momentum_m": (float, 0.99),
        "sgd_momentum": (float, 0.9),
        "base_lr": (float, 0.08),
        "epochs": (int, 150),
        "batch_size": (int, 128),
        "embed_dim": (int, 0),
        "view_sigma": (float, 0.0),
    },
    "eval": {
        "many_min": (int, 100),
        "few_max": (int, 20),
        "probe_epochs": (int, 100),
        "probe_lr": (float, 1.0),
        "probe_batch_size": (int, 128),
    },
    "theory": {
        "alpha_grid": (_float_list, [0.02, 0.05, 0.2, 0.5, 0.9]),
        "k_grid": (_float_list, [1, 2, 4, 8, 64]),
        "curve_alpha": (float, 0.05),
        "curve_k_star": (float, 8.192),
        "curve_points": (int, 999),
        "sign_instances": (int, 1000),
        "tolerance": (float, 1e-6),
        "corrupt_closed_forms": (bool, False),
    },
    "gradcheck": {
        "instances_per_loss": (int, 100),
        "tolerance": (float, 1e-5),
        "fd_step": (float, 1e-6),
    },
}

_BOOL_VALUES = {"true": True, "yes": True, "on": True, "1": True,
                "false": False, "no": False, "off": False, "0": False}


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def __getitem__(self, section_key: tuple[str, str]):
        return self.values[section_key]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    def set(self, section: str, key: str, value) -> None:
        if (section, key) not in self.values:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self.values[(section, key)] = value


def default_config() -> RunConfig:
    return RunConfig({(s, k): v for s, keys in _SCHEMA.items() for k, (_, v) in keys.items()})


def _convert(section: str, key: str, raw: str, typ):
    try:
        if typ is bool:
            lowered = raw.strip().lower()
            if lowered not in _BOOL_VALUES:
                raise ValueError(raw)
            return _BOOL_VALUES[lowered]
        return typ(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from None


def load_config(path: str | None) -> RunConfig:
    """Parse an INI config; None means all defaults."""
    cfg = default_config()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown config key [{section}] {key}")
            typ = _SCHEMA[section][key][0]
            cfg.values[(section, key)] = _convert(section, key, raw, typ)
    return cfg
