"""Network description, configuration ingestion and single-bus reduction.

Units are SI throughout: W, var, peak phase-neutral V, rad/s, H, ohm.
Phasors carry peak amplitudes and complex power is ``S = p * V * conj(I)``
where ``p`` is the phase factor (1.5 for three-phase, 0.5 for single-phase).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DegenerateLoadError

DROOP_POWER_SIDES = ("bus", "inverter")


def _positive(name, value):
    if not (math.isfinite(value) and value > 0):
        raise ConfigError(f"{name} must be > 0, got {value!r}")


def _non_negative(name, value):
    if not (math.isfinite(value) and value >= 0):
        raise ConfigError(f"{name} must be >= 0, got {value!r}")


@dataclass(frozen=True)
class DgParams:
    """Droop controller and coupling line of one inverter.

    Attributes:
        m: frequency-droop gain [rad/s per W]
        n: voltage-droop gain [V per var]
        omega_set: frequency set value [rad/s]
        e_set: voltage amplitude set value [V peak]
        w_f: power-filter cut-off frequency [rad/s]
        L: coupling inductance [H]
        r: coupling resistance [ohm]
    """

    m: float
    n: float
    omega_set: float
    e_set: float
    w_f: float
    L: float
    r: float

    def __post_init__(self):
        _positive("m", self.m)
        _non_negative("n", self.n)
        _positive("omega_set", self.omega_set)
        _positive("e_set", self.e_set)
        _positive("w_f", self.w_f)
        _positive("L", self.L)
        _non_negative("r", self.r)


@dataclass(frozen=True)
class LoadSpec:
    """Load rating at nominal voltage [W, var]."""

    p_rated: float
    q_rated: float

    def __post_init__(self):
        _non_negative("p_rated", self.p_rated)
        if not math.isfinite(self.q_rated):
            raise ConfigError(f"q_rated must be finite, got {self.q_rated!r}")


@dataclass(frozen=True)
class FeederSegment:
    """Distribution feeder section; discarded by the single-bus reduction."""

    r_line: float
    x_line: float

    def __post_init__(self):
        _non_negative("r_line", self.r_line)
        _non_negative("x_line", self.x_line)


@dataclass(frozen=True)
class MicrogridConfig:
    """Full user-facing network description.

    ``droop_power`` selects which power the droop filters measure: the power
    delivered at the load bus (``"bus"``, consistent with the linearized
    model) or the inverter terminal power (``"inverter"``).
    """

    dgs: tuple[DgParams, ...]
    loads: tuple[LoadSpec, ...]
    feeders: tuple[FeederSegment, ...] = ()
    v_nominal: float = 180.0
    omega_nominal: float = 2 * math.pi * 60
    phase_factor: float = 1.5
    droop_power: str = "bus"

    def __post_init__(self):
        object.__setattr__(self, "dgs", tuple(self.dgs))
        object.__setattr__(self, "loads", tuple(self.loads))
        object.__setattr__(self, "feeders", tuple(self.feeders))
        if len(self.dgs) < 1:
            raise ConfigError("dgs must contain at least one DG")
        _positive("v_nominal", self.v_nominal)
        _positive("omega_nominal", self.omega_nominal)
        _positive("phase_factor", self.phase_factor)
        if self.droop_power not in DROOP_POWER_SIDES:
            raise ConfigError(f"droop_power must be one of {DROOP_POWER_SIDES}, got {self.droop_power!r}")

    @property
    def n_dgs(self):
        return len(self.dgs)


@dataclass(frozen=True)
class SimplifiedModel:
    """Single-bus network: N DGs behind coupling impedances feeding one load.

    ``z_load_mag = inf`` denotes an unloaded (open-circuit) bus.
    """

    dgs: tuple[DgParams, ...]
    z_load_mag: float
    theta_z: float
    p: float = 1.5
    v_nominal: float = 180.0
    omega_nominal: float = 2 * math.pi * 60
    droop_power: str = "bus"

    def __post_init__(self):
        object.__setattr__(self, "dgs", tuple(self.dgs))
        if len(self.dgs) < 1:
            raise ConfigError("dgs must contain at least one DG")
        if not self.z_load_mag > 0:
            raise ConfigError(f"z_load_mag must be > 0, got {self.z_load_mag!r}")
        if not abs(self.theta_z) < math.pi / 2:
            raise ConfigError(f"|theta_z| must be < pi/2, got {self.theta_z!r}")
        _positive("p", self.p)
        _positive("v_nominal", self.v_nominal)
        _positive("omega_nominal", self.omega_nominal)
        if self.droop_power not in DROOP_POWER_SIDES:
            raise ConfigError(f"droop_power must be one of {DROOP_POWER_SIDES}, got {self.droop_power!r}")

    @property
    def n_dgs(self):
        return len(self.dgs)

    @property
    def y_load(self):
        """Complex load admittance 1/Z_L (zero when unloaded)."""
        if math.isinf(self.z_load_mag):
            return 0j
        return 1.0 / (self.z_load_mag * complex(math.cos(self.theta_z), math.sin(self.theta_z)))

    def param_arrays(self):
        """Per-DG parameters as numpy arrays, keyed by field name."""
        return {f.name: np.array([getattr(dg, f.name) for dg in self.dgs], dtype=float)
                for f in dataclasses.fields(DgParams)}

    def with_droop(self, m: Sequence[float], n: Sequence[float]) -> "SimplifiedModel":
        return dataclasses.replace(self, dgs=_replace_droop(self.dgs, m, n))


def _replace_droop(dgs, m, n):
    if len(m) != len(dgs) or len(n) != len(dgs):
        raise ConfigError(f"droop vectors must have length {len(dgs)}")
    return tuple(dataclasses.replace(dg, m=float(mi), n=float(ni)) for dg, mi, ni in zip(dgs, m, n))


def ratio_pattern(base: float, n_dgs: int) -> np.ndarray:
    """Droop gains ``base / i`` for i = 1..N, i.e. m_1 = 2 m_2 = 3 m_3."""
    return base / np.arange(1, n_dgs + 1, dtype=float)


def with_droop(cfg: MicrogridConfig, m: Sequence[float], n: Sequence[float]) -> MicrogridConfig:
    return dataclasses.replace(cfg, dgs=_replace_droop(cfg.dgs, m, n))


def with_e_set(cfg: MicrogridConfig, e_set: float) -> MicrogridConfig:
    return dataclasses.replace(cfg, dgs=tuple(dataclasses.replace(dg, e_set=float(e_set)) for dg in cfg.dgs))


def aggregate_loads(loads: Sequence[LoadSpec]) -> tuple[float, float]:
    """Total active and reactive load power [W, var]."""
    if len(loads) == 0:
        raise ConfigError("loads must not be empty")
    return math.fsum(ld.p_rated for ld in loads), math.fsum(ld.q_rated for ld in loads)


def load_impedance_from_rating(p_load, q_load, v_nominal, p):
    """Constant impedance drawing (P_L, Q_L) at ``v_nominal``.

    With ``I = V / (Z_L e^{j theta})`` and ``S = p V conj(I)`` the impedance
    magnitude absorbs the phase factor: ``Z_L = p V^2 / |S|``.

    Returns:
        (Z_L [ohm], theta_Z [rad]); inductive loads have theta_Z > 0.
    """
    if not v_nominal > 0:
        raise ConfigError(f"v_nominal must be > 0, got {v_nominal!r}")
    s_mag = math.hypot(p_load, q_load)
    if s_mag == 0.0:
        raise DegenerateLoadError("load has zero apparent power")
    return p * v_nominal**2 / s_mag, math.atan2(q_load, p_load)


def load_power_at(z_load_mag, theta_z, v, p):
    """Power drawn by the constant-impedance load at bus voltage ``v``."""
    s = p * v**2 / z_load_mag
    return s * math.cos(theta_z), s * math.sin(theta_z)


def build_simplified_model(cfg: MicrogridConfig) -> SimplifiedModel:
    """Reduce an LV network to the single-bus form.

    Feeder impedances are neglected, so every load ends up in parallel at one
    bus. Coupling impedances are kept unchanged. A config without loads maps
    to an unloaded bus.
    """
    if cfg.loads:
        p_load, q_load = aggregate_loads(cfg.loads)
        z_mag, theta = load_impedance_from_rating(p_load, q_load, cfg.v_nominal, cfg.phase_factor)
    else:
        z_mag, theta = math.inf, 0.0
    return SimplifiedModel(
        dgs=cfg.dgs,
        z_load_mag=z_mag,
        theta_z=theta,
        p=cfg.phase_factor,
        v_nominal=cfg.v_nominal,
        omega_nominal=cfg.omega_nominal,
        droop_power=cfg.droop_power,
    )


# Reference test microgrid (fixture "table1"): 3 DGs, 180 V peak, 60 Hz.
TABLE1_COUPLING = ((1.57e-3, 0.19), (2.46e-3, 0.29), (2.0e-3, 0.24))
TABLE1_LOADS = ((6000.0, 4000.0), (2000.0, 1000.0), (4000.0, 3000.0))
TABLE1_FEEDERS = ((40.8e-3, 34e-3), (16.3e-3, 13.6e-3), (24.5e-3, 20.4e-3))
TABLE1_W_F = 31.85
TABLE1_OMEGA_SET = 380.0
TABLE1_V_NOMINAL = 180.0


def table1(m_base=2.5e-3, n_base=5e-3, e_set=None) -> MicrogridConfig:
    """Three-DG test microgrid with droop gains ``base / i``.

    ``e_set`` defaults to the nominal voltage since the table leaves it open.
    """
    e_set = TABLE1_V_NOMINAL if e_set is None else e_set
    m = ratio_pattern(m_base, 3)
    n = ratio_pattern(n_base, 3)
    dgs = tuple(
        DgParams(m=float(m[i]), n=float(n[i]), omega_set=TABLE1_OMEGA_SET, e_set=float(e_set),
                 w_f=TABLE1_W_F, L=L, r=r)
        for i, (L, r) in enumerate(TABLE1_COUPLING)
    )
    return MicrogridConfig(
        dgs=dgs,
        loads=tuple(LoadSpec(p, q) for p, q in TABLE1_LOADS),
        feeders=tuple(FeederSegment(r, x) for r, x in TABLE1_FEEDERS),
        v_nominal=TABLE1_V_NOMINAL,
        omega_nominal=2 * math.pi * 60,
        phase_factor=1.5,
    )


FIXTURES = {"table1": table1}


# JSON config format

_TOP_KEYS = {"dgs", "loads", "feeders", "v_nominal", "omega_nominal", "phase_factor", "droop_power"}
_REQUIRED_TOP = ("dgs", "loads", "v_nominal", "omega_nominal", "phase_factor")


def _build_item(cls, raw, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    names = [f.name for f in dataclasses.fields(cls)]
    unknown = set(raw) - set(names)
    if unknown:
        raise ConfigError(f"{where}: unknown field(s) {sorted(unknown)}")
    missing = [k for k in names if k not in raw]
    if missing:
        raise ConfigError(f"{where}: missing field(s) {missing}")
    try:
        return cls(**{k: float(raw[k]) for k in names})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{exc}") from None


def config_from_dict(raw: dict) -> MicrogridConfig:
    """Validate a decoded JSON document and build the config.

    Errors name the offending field, e.g. ``dgs[0].m must be > 0``.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {sorted(unknown)}")
    for key in _REQUIRED_TOP:
        if key not in raw:
            raise ConfigError(f"missing top-level key {key!r}")
    for key in ("dgs", "loads", "feeders"):
        if key in raw and not isinstance(raw[key], list):
            raise ConfigError(f"{key} must be an array")
    dgs = [_build_item(DgParams, d, f"dgs[{i}]") for i, d in enumerate(raw["dgs"])]
    loads = [_build_item(LoadSpec, d, f"loads[{i}]") for i, d in enumerate(raw["loads"])]
    feeders = [_build_item(FeederSegment, d, f"feeders[{i}]") for i, d in enumerate(raw.get("feeders", []))]
    try:
        return MicrogridConfig(
            dgs=dgs,
            loads=loads,
            feeders=feeders,
            v_nominal=float(raw["v_nominal"]),
            omega_nominal=float(raw["omega_nominal"]),
            phase_factor=float(raw["phase_factor"]),
            droop_power=raw.get("droop_power", "bus"),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def config_to_dict(cfg: MicrogridConfig) -> dict:
    return {
        "dgs": [dataclasses.asdict(dg) for dg in cfg.dgs],
        "loads": [dataclasses.asdict(ld) for ld in cfg.loads],
        "feeders": [dataclasses.asdict(fd) for fd in cfg.feeders],
        "v_nominal": cfg.v_nominal,
        "omega_nominal": cfg.omega_nominal,
        "phase_factor": cfg.phase_factor,
        "droop_power": cfg.droop_power,
    }


def load_config(path) -> MicrogridConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return config_from_dict(raw)


def config_digest(cfg: MicrogridConfig) -> str:
    """SHA-256 of the canonical JSON form of the config."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
