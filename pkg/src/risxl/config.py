"""Scenario configuration, profiles and TOML round-tripping."""

from __future__ import annotations

import dataclasses
import hashlib
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

import tomli_w

SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters.

    Powers are given in dBm and converted to values normalized by the noise
    power, so the receiver noise variance is 1 everywhere downstream.
    """

    # XL-MIMO array and subarrays
    M_x: int = 10
    M_y: int = 10
    S: int = 4
    # RIS
    N_1: int = 4
    N_2: int = 4
    # users
    K_n: int = 2
    K_f: int = 2
    # radio
    carrier_freq: float = 5e9  # Hz
    tx_power_dbm: float = 30.0
    noise_power_dbm: float = -104.0
    near_power_dbm: Optional[float] = None  # P_n, defaults to P
    far_power_dbm: Optional[float] = None  # P_f, defaults to P
    # large-scale channel
    ricean_factor: float = 2.0
    d_MR: float = 100.0  # m
    d_RU: float = 20.0  # m
    pathloss_ref: float = 1e-3
    pathloss_exp_mr: float = 2.5
    pathloss_exp_ru: float = 2.0
    # geometry
    nf_x: tuple[float, float] = (0.0, 20.0)
    nf_y: tuple[float, float] = (0.0, 20.0)
    nf_z: tuple[float, float] = (2.0, 20.0)
    ris_aoa: tuple[float, float] = (math.pi / 6, math.pi / 12)  # (varphi^a, varphi^e)
    xl_aod: tuple[float, float] = (-math.pi / 5, math.pi / 10)  # (phi^a, phi^e)
    ffue_azimuths: Optional[tuple[float, ...]] = None  # uniform on the semicircle if None
    ffue_elevation: float = 0.0
    scatterers_per_user: int = 0
    scatterer_gain: float = 0.1
    # objective and VR selection
    w_n: float = 0.5
    w_f: float = 0.5
    vr_ratio: float = 0.8
    qos_near: Optional[tuple[float, ...]] = None  # bit/s/Hz, None -> RPS-EPC floors
    qos_far: Optional[tuple[float, ...]] = None
    # Monte Carlo
    mc_samples: int = 1000
    seed: int = 0
    # solver tolerances
    eps_rank: float = 1e-4
    eps_sca: float = 1e-3
    penalty0: float = 1e-6
    penalty_scale: float = 10.0
    I1: int = 30
    I2: int = 30
    I3: int = 30

    def __post_init__(self):
        self.validate()

    # -- derived quantities -------------------------------------------------
    @property
    def M(self) -> int:
        return self.M_x * self.M_y

    @property
    def N(self) -> int:
        return self.N_1 * self.N_2

    @property
    def K(self) -> int:
        return self.K_n + self.K_f

    @property
    def M_star(self) -> int:
        return self.M // self.S

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_freq

    @property
    def d(self) -> float:
        return self.wavelength / 2

    @property
    def d_R(self) -> float:
        return self.wavelength / 2

    @property
    def aperture_area(self) -> float:
        return self.wavelength**2 / (4 * math.pi)

    @property
    def P(self) -> float:
        return 10 ** ((self.tx_power_dbm - self.noise_power_dbm) / 10)

    @property
    def P_n(self) -> float:
        dbm = self.tx_power_dbm if self.near_power_dbm is None else self.near_power_dbm
        return 10 ** ((dbm - self.noise_power_dbm) / 10)

    @property
    def P_f(self) -> float:
        dbm = self.tx_power_dbm if self.far_power_dbm is None else self.far_power_dbm
        return 10 ** ((dbm - self.noise_power_dbm) / 10)

    @property
    def zeta(self) -> float:
        return self.pathloss_ref * self.d_MR ** (-self.pathloss_exp_mr)

    @property
    def varsigma(self) -> float:
        return self.pathloss_ref * self.d_RU ** (-self.pathloss_exp_ru)

    @property
    def alpha2(self) -> float:
        iota = self.ricean_factor
        if math.isinf(iota):
            return math.sqrt(self.zeta)
        return math.sqrt(iota * self.zeta / (iota + 1))

    @property
    def beta2(self) -> float:
        iota = self.ricean_factor
        if math.isinf(iota):
            return 0.0
        return math.sqrt(self.zeta / (iota + 1))

    def subarray_slice(self, s: int) -> slice:
        if not 0 <= s < self.S:
            raise ConfigError(f"subarray index {s} outside 0..{self.S - 1}")
        return slice(s * self.M_star, (s + 1) * self.M_star)

    def ffue_angles(self) -> list[tuple[float, float]]:
        if self.ffue_azimuths is not None:
            az = list(self.ffue_azimuths)
        else:
            az = [-math.pi / 2 + (k + 0.5) * math.pi / self.K_f for k in range(self.K_f)]
        return [(a, self.ffue_elevation) for a in az]

    # -- checks --------------------------------------------------------------
    def validate(self) -> None:
        for name in ("M_x", "M_y", "S", "N_1", "N_2"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.K_n < 0 or self.K_f < 0 or self.K_n + self.K_f == 0:
            raise ConfigError("at least one user is required")
        if self.M % self.S:
            raise ConfigError(f"M={self.M} is not divisible into S={self.S} subarrays")
        for name in ("carrier_freq", "d_MR", "d_RU", "pathloss_ref", "ricean_factor"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.vr_ratio <= 1:
            raise ConfigError("vr_ratio must lie in (0, 1]")
        if self.w_n < 0 or self.w_f < 0 or self.w_n + self.w_f <= 0:
            raise ConfigError("weights must be nonnegative with a positive sum")
        if self.nf_z[0] <= 0:
            raise ConfigError("near-field users need u_z > 0")
        if self.ffue_azimuths is not None and len(self.ffue_azimuths) != self.K_f:
            raise ConfigError("ffue_azimuths must list one angle per far-field user")
        for name, count in (("qos_near", self.K_n), ("qos_far", self.K_f)):
            value = getattr(self, name)
            if value is not None and len(value) != count:
                raise ConfigError(f"{name} must list one value per user")
        if self.mc_samples < 1:
            raise ConfigError("mc_samples must be positive")
        for name in ("I1", "I2", "I3"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    def config_hash(self) -> str:
        return hashlib.sha256(dumps_config(self).encode()).hexdigest()[:16]


PROFILES = {
    "desk": {},
    "paper": {
        "M_x": 40,
        "M_y": 10,
        "S": 8,
        "N_1": 10,
        "N_2": 10,
        "K_n": 5,
        "K_f": 5,
        "mc_samples": 10000,
    },
}


def profile(name: str, **overrides) -> SystemConfig:
    """Named parameter set: ``desk`` (fast default) or ``paper`` (full scale)."""
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return SystemConfig(**{**PROFILES[name], **overrides})


_TUPLE_FIELDS = {
    f.name for f in dataclasses.fields(SystemConfig) if "tuple" in str(f.type)
}


def config_from_dict(data: dict, base: Optional[SystemConfig] = None) -> SystemConfig:
    """Build a config from a (possibly sectioned) mapping on top of ``base``."""
    flat: dict = {}
    for key, value in data.items():
        if isinstance(value, dict):
            flat.update(value)
        else:
            flat[key] = value
    known = {f.name for f in dataclasses.fields(SystemConfig)}
    unknown = sorted(set(flat) - known)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {unknown}")
    for key in _TUPLE_FIELDS & set(flat):
        flat[key] = tuple(flat[key])
    base = base or SystemConfig()
    return dataclasses.replace(base, **flat)


def load_config(path, base: Optional[SystemConfig] = None) -> SystemConfig:
    with open(path, "rb") as fh:
        return config_from_dict(tomllib.load(fh), base)


_SECTIONS = {
    "array": ("M_x", "M_y", "S"),
    "ris": ("N_1", "N_2"),
    "users": ("K_n", "K_f", "nf_x", "nf_y", "nf_z", "ffue_azimuths", "ffue_elevation",
              "scatterers_per_user", "scatterer_gain"),
    "radio": ("carrier_freq", "tx_power_dbm", "noise_power_dbm", "near_power_dbm", "far_power_dbm"),
    "channel": ("ricean_factor", "d_MR", "d_RU", "pathloss_ref", "pathloss_exp_mr",
                "pathloss_exp_ru", "ris_aoa", "xl_aod"),
    "objective": ("w_n", "w_f", "vr_ratio", "qos_near", "qos_far"),
    "monte_carlo": ("mc_samples", "seed"),
    "solver": ("eps_rank", "eps_sca", "penalty0", "penalty_scale", "I1", "I2", "I3"),
}


def dumps_config(cfg: SystemConfig) -> str:
    flat = cfg.to_dict()
    doc = {section: {k: flat[k] for k in keys if k in flat} for section, keys in _SECTIONS.items()}
    return tomli_w.dumps(doc)


def save_config(cfg: SystemConfig, path) -> None:
    Path(path).write_text(dumps_config(cfg), encoding="utf-8")
