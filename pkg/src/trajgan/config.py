"""Run configuration: TOML file + flag overrides, echoed for reproduction.

The file uses flat keys inside sections named after the areas they
configure ([train], [model], [data], [eval]); every key maps to one
RunConfig field and unknown keys are rejected. The fully resolved config
is echoed into the output directory in the same format, so any run can be
reproduced from its echo alone.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


@dataclass
class RunConfig:
    # train
    seed: int = 0
    epochs: int = 200
    batch_size: int = 64
    lr: float = 0.001
    lambda_l2: float = 1.0
    augment: bool = False
    checkpoint_every: int = 0
    # model
    mode: str = "T_A+I_A"
    z_dim: int = 8
    n_max: int = 32
    obs_len: int = 8
    pred_len: int = 12
    representation: str = "relative"
    attention_recompute: str = "per_step"
    dis_per_step: bool = False
    provider: str = "conv"
    grid_channels: int = 64
    conv_hidden: int = 16
    grid_file: str = ""
    # data
    data_dir: str = ""
    data_file: str = ""
    # eval
    k: int = 20
    collision_threshold: float = 0.10
    units: str = "meters"
    unit_scale: float = 1.0
    # output
    out_dir: str = "out"


SECTION_FIELDS = {
    "train": ("seed", "epochs", "batch_size", "lr", "lambda_l2", "augment",
              "checkpoint_every"),
    "model": ("mode", "z_dim", "n_max", "obs_len", "pred_len", "representation",
              "attention_recompute", "dis_per_step", "provider", "grid_channels",
              "conv_hidden", "grid_file"),
    "data": ("data_dir", "data_file"),
    "eval": ("k", "collision_threshold", "units", "unit_scale"),
    "output": ("out_dir",),
}

_FIELD_SECTION = {f: s for s, fs in SECTION_FIELDS.items() for f in fs}


def _coerce(name: str, value, target_type):
    if target_type is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "false"):
            return value.lower() == "true"
        raise ValueError(f"config key {name!r}: expected a boolean, got {value!r}")
    if target_type is int:
        if isinstance(value, bool) or (not isinstance(value, int) and not
                                       (isinstance(value, str) and value.lstrip("-").isdigit())):
            raise ValueError(f"config key {name!r}: expected an integer, got {value!r}")
        return int(value)
    if target_type is float:
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ValueError(f"config key {name!r}: expected a number, got {value!r}") from None
    return str(value)


def load_config(path: str | Path | None = None,
                overrides: dict[str, object] | None = None) -> RunConfig:
    """Build a RunConfig from an optional TOML file plus overrides.

    Overrides use bare field names (flags win over the file). Unknown
    sections or keys raise ValueError.
    """
    cfg = RunConfig()
    types = {f.name: f.type for f in fields(RunConfig)}
    concrete = {"int": int, "float": float, "str": str, "bool": bool}

    def assign(name: str, value):
        if name not in _FIELD_SECTION:
            raise ValueError(f"unknown config key {name!r}")
        t = types[name]
        t = concrete.get(t, t) if isinstance(t, str) else t
        setattr(cfg, name, _coerce(name, value, t))

    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"config file not found: {p}")
        with open(p, "rb") as fh:
            doc = tomllib.load(fh)
        for section, table in doc.items():
            if section not in SECTION_FIELDS:
                raise ValueError(f"unknown config section {section!r}")
            if not isinstance(table, dict):
                raise ValueError(f"config section {section!r} must be a table")
            for key, value in table.items():
                if key not in SECTION_FIELDS[section]:
                    raise ValueError(f"unknown config key {section}.{key!r}")
                assign(key, value)
    for key, value in (overrides or {}).items():
        if value is not None:
            assign(key, value)
    return cfg


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    return '"' + str(v).replace("\\", "\\\\").replace('"', '\\"') + '"'


def echo_config(cfg: RunConfig, path: str | Path) -> None:
    """Write the resolved config in the same TOML schema the loader reads."""
    lines = []
    for section, names in SECTION_FIELDS.items():
        lines.append(f"[{section}]")
        for name in names:
            lines.append(f"{name} = {_toml_value(getattr(cfg, name))}")
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")
