"""Run configuration files.

TOML with explicit units in every dimensioned key. All sections and keys
are optional; missing values take the defaults below (the single-TLS
reference setup)::

    [model]
    n_levels = 4
    anharmonicity_mhz = 40.0
    qudit_t1_ns = 5000.0          # inf for no decay
    # qudit_t2_star_ns = 20000.0
    frequency_convention = "ordinary"   # MHz values are cycle frequencies

    [[model.tls]]                 # one table per defect, first is "tls1"
    detuning_mhz = 550.0          # qudit minus TLS frequency
    coupling_mhz = 60.0
    t1_ns = 1000.0
    # t2_star_ns = 2000.0

    [control]
    gate_time_ns = 40.0
    n_slices = 400
    ramp_time_ns = 2.5            # 0 disables the edge ramps
    ramp_amplitude_mhz = 500.0    # largest edge value reached by a ramp
    delta_max_mhz = 1000.0
    endpoints_zero = true

    [optimizer]
    target = "U1"                 # "U1", "identity", "random" or "phases"
    # target_seed = 7             # for target = "random"
    # target_phases_rad = [0.0, 3.14159, 0.0, 0.0]   # for target = "phases"
    method = "lbfgs"              # or "gradient_descent_backtracking"
    n_starts = 5
    max_iterations = 300
    convergence_tol = 1e-10
    frame = "qudit"               # or "rotating"
    seed = 0

    [[sweep.axes]]                # up to two
    name = "qudit_t1_ns"
    values = [500.0, 2000.0, 5000.0]

    [table1]
    detunings_mhz = [50.0, 450.0]
    couplings_mhz = [40.0, 10.0]
    t1s_ns = [2000.0, 200.0, 40.0]

    [random_targets]
    n = 20

    [nonmarkov]
    n_samples = 400

    [simulate]
    n_samples = 200
    initial_level = 1
    constant_delta_mhz = 0.0

Sweep axis names are the keys above: model keys (``anharmonicity_mhz``,
``qudit_t1_ns``, ...), TLS keys prefixed by their position (``tls1_t1_ns``,
``tls2_detuning_mhz``, ...; ``coupling_mhz``, ``detuning_mhz`` and
``tls_t1_ns`` refer to the first TLS), and control or optimizer keys
(``gate_time_ns``, ``n_slices``, ``max_iterations``, ...).
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import re
import sys
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .controls import ConstraintError, RampSpec, ramp_slices
from .grape import OptimizationConfig, U1, random_diagonal_target
from .model import FREQUENCY_CONVENTIONS, ModelError, ModelSpec, QuditSpec, TlsSpec, mhz_to_angular

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config", "config_hash",
           "with_override", "AXIS_NAMES", "DEFAULTS"]


class ConfigError(ValueError):
    pass


DEFAULTS: dict[str, dict[str, Any]] = {
    "model": {
        "n_levels": 4,
        "anharmonicity_mhz": 40.0,
        "qudit_t1_ns": 5000.0,
        "qudit_t2_star_ns": None,
        "frequency_convention": "ordinary",
        "tls": [{"detuning_mhz": 550.0, "coupling_mhz": 60.0, "t1_ns": 1000.0}],
    },
    "control": {
        "gate_time_ns": 40.0,
        "n_slices": 400,
        "ramp_time_ns": 2.5,
        "ramp_amplitude_mhz": 500.0,
        "delta_max_mhz": 1000.0,
        "endpoints_zero": True,
    },
    "optimizer": {
        "target": "U1",
        "target_seed": 0,
        "target_phases_rad": None,
        "method": "lbfgs",
        "n_starts": 5,
        "max_iterations": 300,
        "convergence_tol": 1e-10,
        "frame": "qudit",
        "seed": 0,
    },
    "sweep": {"axes": []},
    "table1": {
        "detunings_mhz": [50.0, 450.0],
        "couplings_mhz": [40.0, 10.0],
        "t1s_ns": [2000.0, 200.0, 40.0],
    },
    "random_targets": {"n": 20},
    "nonmarkov": {"n_samples": 400},
    "simulate": {"n_samples": 200, "initial_level": 1, "constant_delta_mhz": 0.0},
}

_TLS_KEYS = {"detuning_mhz": 550.0, "coupling_mhz": 60.0, "t1_ns": math.inf, "t2_star_ns": None}

AXIS_NAMES = (
    [k for k in DEFAULTS["model"] if k not in ("tls", "frequency_convention")]
    + ["coupling_mhz", "detuning_mhz", "tls_t1_ns"]
    + [f"tls<i>_{k}" for k in _TLS_KEYS]
    + list(DEFAULTS["control"]) + ["max_iterations", "n_starts", "convergence_tol"]
)


@dataclass(frozen=True, eq=False)
class RunConfig:
    model: ModelSpec
    optimization: OptimizationConfig
    ramp: Optional[RampSpec]
    raw: dict

    @property
    def hash(self) -> str:
        return config_hash(self.raw)


def _merge(defaults, given, path):
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown key '{where}'")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"'{where}' must be a table")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _complete(raw: dict) -> dict:
    raw = _merge(DEFAULTS, raw, "")
    tls = raw["model"]["tls"]
    if not isinstance(tls, list):
        raise ConfigError("'model.tls' must be an array of tables")
    raw["model"]["tls"] = [_merge(_TLS_KEYS, t, f"model.tls[{i}]") for i, t in enumerate(tls)]
    return raw


def config_hash(raw: dict) -> str:
    """Short digest of the fully resolved configuration."""
    blob = json.dumps(raw, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _num(raw, section, key, positive=False, allow_inf=False, integer=False):
    return _check_num(raw[section][key], f"{section}.{key}", positive, allow_inf, integer)


def _check_num(v, where, positive=False, allow_inf=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"'{where}' must be a number, got {v!r}")
    if integer and (not float(v).is_integer()):
        raise ConfigError(f"'{where}' must be an integer, got {v!r}")
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ConfigError(f"'{where}' must be finite, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"'{where}' must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _target(opt, n: int) -> np.ndarray:
    kind = opt["target"]
    if kind == "U1":
        return U1.copy()
    if kind == "identity":
        return np.eye(n, dtype=complex)
    if kind == "random":
        return random_diagonal_target(int(opt["target_seed"]), n)
    if kind == "phases":
        ph = opt["target_phases_rad"]
        if not isinstance(ph, list) or not ph:
            raise ConfigError("'optimizer.target_phases_rad' must be a non-empty list")
        return np.diag(np.exp(1j * np.asarray(ph, dtype=float)))
    raise ConfigError(
        f"'optimizer.target' must be U1, identity, random or phases, got {kind!r}")


def parse_config(given: Optional[dict] = None) -> RunConfig:
    """Validate a configuration mapping and build the model and optimizer
    settings."""
    raw = _complete(given or {})
    m, c, o = raw["model"], raw["control"], raw["optimizer"]
    conv = m["frequency_convention"]
    tls = []
    if conv not in FREQUENCY_CONVENTIONS:
        raise ConfigError(f"'model.frequency_convention' must be one of "
                          f"{FREQUENCY_CONVENTIONS}, got {conv!r}")
    try:
        f = lambda v: mhz_to_angular(v, conv)  # noqa: E731
        t2 = m["qudit_t2_star_ns"]
        qudit = QuditSpec(
            n_levels=_num(raw, "model", "n_levels", positive=True, integer=True),
            anharmonicity=f(_num(raw, "model", "anharmonicity_mhz")),
            t1=_num(raw, "model", "qudit_t1_ns", positive=True, allow_inf=True),
            t2_star=None if t2 is None else _num(raw, "model", "qudit_t2_star_ns",
                                                 positive=True, allow_inf=True),
        )
        for i, t in enumerate(m["tls"]):
            where = f"model.tls[{i}]."
            t2 = t["t2_star_ns"]
            tls.append(TlsSpec(
                detuning=f(_check_num(t["detuning_mhz"], where + "detuning_mhz")),
                coupling=f(_check_num(t["coupling_mhz"], where + "coupling_mhz")),
                t1=_check_num(t["t1_ns"], where + "t1_ns", positive=True, allow_inf=True),
                t2_star=None if t2 is None else
                _check_num(t2, where + "t2_star_ns", positive=True, allow_inf=True),
            ))
        model = ModelSpec(qudit, tuple(tls), conv)
    except ModelError as exc:
        raise ConfigError(f"model: {exc}") from None

    ramp_time = _num(raw, "control", "ramp_time_ns")
    if ramp_time < 0:
        raise ConfigError(f"'control.ramp_time_ns' must be >= 0, got {ramp_time}")
    ramp = None
    if ramp_time > 0:
        amp = _num(raw, "control", "ramp_amplitude_mhz", positive=True)
        ramp = RampSpec(ramp_time, f(amp) / ramp_time, bool(c["endpoints_zero"]))
    target = _target(o, model.n_levels)
    try:
        opt = OptimizationConfig(
            target=target,
            total_time=_num(raw, "control", "gate_time_ns", positive=True),
            n_slices=_num(raw, "control", "n_slices", positive=True, integer=True),
            max_iterations=_num(raw, "optimizer", "max_iterations", integer=True),
            convergence_tol=_num(raw, "optimizer", "convergence_tol"),
            delta_max=f(_num(raw, "control", "delta_max_mhz", positive=True)),
            seed=_num(raw, "optimizer", "seed", integer=True),
            optimizer=o["method"],
            n_starts=_num(raw, "optimizer", "n_starts", positive=True, integer=True),
            frame=o["frame"],
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"optimizer: {exc}") from None
    if ramp is not None:
        try:
            ramp_slices(opt.n_slices, opt.dt, ramp)
        except ConstraintError as exc:
            raise ConfigError(f"control: {exc}") from None
    if target.shape[0] != model.n_levels:
        raise ConfigError(f"target has dimension {target.shape[0]}, model has "
                          f"{model.n_levels} levels")
    return RunConfig(model, opt, ramp, raw)


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Read and validate a TOML configuration file (defaults if ``path`` is None)."""
    given: dict = {}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                given = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    raw = _complete(given)
    for name, value in (overrides or {}).items():
        raw = with_override(raw, name, value)
    try:
        return parse_config(raw)
    except ConfigError as exc:
        if path is None:
            raise
        raise ConfigError(f"{path}: {exc}") from None


_TLS_AXIS = re.compile(r"^tls(\d+)_(.+)$")


def with_override(raw: dict, name: str, value) -> dict:
    """Copy of a resolved configuration with one axis parameter replaced."""
    raw = _complete(raw)
    if name in ("coupling_mhz", "detuning_mhz"):
        name = f"tls1_{name}"
    elif name == "tls_t1_ns":
        name = "tls1_t1_ns"
    m = _TLS_AXIS.match(name)
    if m:
        idx, key = int(m.group(1)) - 1, m.group(2)
        tls = raw["model"]["tls"]
        if key not in _TLS_KEYS or idx < 0:
            raise ConfigError(f"unknown sweep parameter '{name}'")
        while len(tls) <= idx:
            tls.append(dict(_TLS_KEYS))
        tls[idx][key] = value
        return raw
    for section in ("model", "control", "optimizer"):
        if name in raw[section] and name != "tls":
            raw[section][name] = value
            return raw
    raise ConfigError(f"unknown sweep parameter '{name}'")
