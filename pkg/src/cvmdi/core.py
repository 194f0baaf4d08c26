"""Units, configuration and deterministic randomness shared by every stage.

Conventions used throughout the package:

* Shot-noise units (SNU): the vacuum quadrature variance is 1.
* A coherent amplitude is ``alpha = q + 1j * p`` with ``Var(q) = Var(p) = V``.
* Complex covariance: ``Cov(u, v) = E[(u - Eu) * conj(v - Ev)]``.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "ConfigError",
    "SystemConfig",
    "SnuScale",
    "PROFILES",
    "db_to_transmittance",
    "validate_config",
    "derive_stream",
    "complex_cov",
    "load_config",
    "dump_config",
    "config_from_mapping",
    "generative_xi",
]

DIRECTIONS = ("bob-infers", "alice-infers")


class ConfigError(ValueError):
    """Raised when a configuration violates one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


@dataclass(frozen=True)
class SystemConfig:
    symbol_rate: float
    sample_rate: float
    if_freq: float
    rrc_rolloff: float
    rrc_span: int
    v_alice: float
    v_bob: float
    loss_alice_db: float
    loss_bob_db: float
    excess_noise_inject_a: float
    excess_noise_inject_b: float
    eta: float
    elec_noise: float
    laser_linewidth: float
    beta_rec: float
    frames: int
    symbols_per_frame: int
    delays: tuple[float, float]
    master_seed: int
    noise_split: float
    # knobs with defaults; not required in config files
    drift_linewidth: float = 0.005
    freq_offset: float = 0.0
    shot_psd: float = 1.0
    calibration_frames: int = 16
    dac_bits: int = 0
    dac_full_scale: float = 0.0
    direction: str = "bob-infers"

    @property
    def sps(self) -> int:
        return int(round(self.sample_rate / self.symbol_rate))

    @property
    def frame_samples(self) -> int:
        return self.sps * self.symbols_per_frame

    @property
    def transmittance_alice(self) -> float:
        return db_to_transmittance(self.loss_alice_db)

    @property
    def transmittance_bob(self) -> float:
        return db_to_transmittance(self.loss_bob_db)

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["delays"] = list(self.delays)
        return d


REQUIRED_KEYS = tuple(f.name for f in dataclasses.fields(SystemConfig)
                      if f.default is dataclasses.MISSING)
OPTIONAL_KEYS = tuple(f.name for f in dataclasses.fields(SystemConfig)
                      if f.default is not dataclasses.MISSING)

# Arm noise chosen so eta*(eps_a + eps_b)/2 + elec_noise = 0.11 SNU at the relay.
_ARM_NOISE = (0.11 - 0.01) / 0.94

_COMMON = dict(
    symbol_rate=5e6,
    if_freq=5e6,
    rrc_rolloff=0.2,
    rrc_span=20,
    v_alice=36.0,
    v_bob=36.0,
    loss_alice_db=0.0,
    loss_bob_db=2.0,
    excess_noise_inject_a=_ARM_NOISE,
    excess_noise_inject_b=_ARM_NOISE,
    eta=0.94,
    elec_noise=0.01,
    laser_linewidth=100.0,
    beta_rec=0.97,
    frames=20,
    master_seed=1,
    noise_split=0.5,
)

PROFILES: dict[str, dict[str, Any]] = {
    "desk": dict(_COMMON, sample_rate=80e6, symbols_per_frame=20_000,
                 delays=(37.0, 1061.0)),
    "paper": dict(_COMMON, sample_rate=1e9, symbols_per_frame=200_000,
                  delays=(150.0, 2750.0)),
}


def db_to_transmittance(loss_db: float) -> float:
    """Power transmittance of a loss given in dB."""
    if loss_db < 0:
        raise ValueError(f"loss must be >= 0 dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def generative_xi(cfg: SystemConfig) -> float:
    """Excess noise per quadrature at the relay measurement implied by the config."""
    return cfg.eta * (cfg.excess_noise_inject_a + cfg.excess_noise_inject_b) / 2 + cfg.elec_noise


def validate_config(cfg: SystemConfig) -> SystemConfig:
    """Return ``cfg`` unchanged if it is consistent, else raise ConfigError listing every violation."""
    bad = []

    def need(ok, name, msg):
        if not ok:
            bad.append(f"{name}: {msg}")

    need(cfg.symbol_rate > 0, "symbol_rate", "must be > 0")
    need(cfg.sample_rate > 0, "sample_rate", "must be > 0")
    if cfg.symbol_rate > 0 and cfg.sample_rate > 0:
        ratio = cfg.sample_rate / cfg.symbol_rate
        need(abs(ratio - round(ratio)) < 1e-9 * ratio and round(ratio) >= 2, "sample_rate",
             f"must be an integer multiple (>= 2) of symbol_rate, got ratio {ratio:g}")
        need(0 <= cfg.if_freq < cfg.sample_rate / 2, "if_freq", "must lie in [0, sample_rate/2)")
    need(0 <= cfg.rrc_rolloff <= 1, "rrc_rolloff", f"must be in [0, 1], got {cfg.rrc_rolloff}")
    need(int(cfg.rrc_span) == cfg.rrc_span and cfg.rrc_span >= 8, "rrc_span", "must be an integer >= 8")
    for name in ("v_alice", "v_bob", "excess_noise_inject_a", "excess_noise_inject_b",
                 "elec_noise", "laser_linewidth", "drift_linewidth"):
        need(getattr(cfg, name) >= 0, name, "must be >= 0")
    for name in ("loss_alice_db", "loss_bob_db"):
        need(getattr(cfg, name) >= 0, name, "must be >= 0 dB")
    need(0 < cfg.eta <= 1, "eta", f"must be in (0, 1], got {cfg.eta}")
    need(0 <= cfg.beta_rec <= 1, "beta_rec", f"must be in [0, 1], got {cfg.beta_rec}")
    need(0 <= cfg.noise_split <= 1, "noise_split", "must be in [0, 1]")
    need(cfg.frames >= 1, "frames", "must be >= 1")
    need(cfg.symbols_per_frame >= 1, "symbols_per_frame", "must be >= 1")
    need(cfg.calibration_frames >= 1, "calibration_frames", "must be >= 1")
    need(cfg.shot_psd > 0, "shot_psd", "must be > 0")
    need(len(cfg.delays) == 2, "delays", "needs one value per party (alice, bob)")
    if len(cfg.delays) == 2 and cfg.symbols_per_frame >= 1 and cfg.sample_rate > 0 and cfg.symbol_rate > 0:
        half = cfg.frame_samples / 2
        need(all(abs(d) < half for d in cfg.delays), "delays", f"|delay| must be < {half:g} samples")
    need(cfg.dac_bits == 0 or 2 <= cfg.dac_bits <= 32, "dac_bits", "must be 0 (off) or in [2, 32]")
    need(cfg.dac_full_scale >= 0, "dac_full_scale", "must be >= 0")
    need(cfg.direction in DIRECTIONS, "direction", f"must be one of {DIRECTIONS}")
    if bad:
        raise ConfigError(bad)
    return cfg


def derive_stream(master_seed: int, label: str) -> np.random.Generator:
    """Independent generator for ``label``; order of derivation does not matter."""
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = np.frombuffer(digest, dtype="<u4").tolist()
    return np.random.default_rng(np.random.SeedSequence([int(master_seed) & 0xFFFFFFFF,
                                                          int(master_seed) >> 32, *words]))


@dataclass(frozen=True)
class SnuScale:
    shot_variance: float
    elec_variance: float = 0.0

    def __post_init__(self):
        if not self.shot_variance > self.elec_variance >= 0:
            raise ValueError("need shot_variance > elec_variance >= 0")

    @property
    def unit(self) -> float:
        """Variance corresponding to 1 SNU (shot noise with electronics removed)."""
        return self.shot_variance - self.elec_variance


def complex_cov(u, v) -> complex:
    u = np.asarray(u)
    v = np.asarray(v)
    return complex(np.mean((u - u.mean()) * np.conj(v - v.mean())))


# --- config files -----------------------------------------------------------

_INT_KEYS = {"rrc_span", "frames", "symbols_per_frame", "master_seed",
             "calibration_frames", "dac_bits"}
_STR_KEYS = {"direction"}


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key == "delays":
        parts = [p for p in raw.replace(",", " ").split() if p]
        return tuple(float(p) for p in parts)
    if key in _STR_KEYS:
        return raw
    if key in _INT_KEYS:
        value = float(raw)
        if value != int(value):
            raise ValueError(f"{key} must be an integer, got {raw!r}")
        return int(value)
    return float(raw)


def config_from_mapping(values: dict[str, Any], base: dict[str, Any] | None = None) -> SystemConfig:
    merged = dict(base or {})
    merged.update(values)
    unknown = sorted(set(merged) - set(REQUIRED_KEYS) - set(OPTIONAL_KEYS))
    if unknown:
        raise ConfigError([f"{k}: unknown key" for k in unknown])
    missing = [k for k in REQUIRED_KEYS if k not in merged]
    if missing:
        raise ConfigError([f"{k}: missing required key" for k in missing])
    merged["delays"] = tuple(float(d) for d in merged["delays"])
    return validate_config(SystemConfig(**merged))


def load_config(path: str | Path | None = None, profile: str | None = None,
                **overrides) -> SystemConfig:
    """Read a ``key = value`` file, optionally layered over a named profile."""
    if profile is not None and profile not in PROFILES:
        raise ConfigError([f"profile: unknown profile {profile!r}"])
    base = dict(PROFILES[profile]) if profile else {}
    values: dict[str, Any] = {}
    if path is not None:
        errors = []
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                errors.append(f"line {lineno}: expected 'key = value'")
                continue
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in REQUIRED_KEYS and key not in OPTIONAL_KEYS:
                errors.append(f"{key}: unknown key (line {lineno})")
                continue
            try:
                values[key] = _parse_value(key, raw)
            except ValueError as exc:
                errors.append(f"{key}: {exc} (line {lineno})")
        if errors:
            raise ConfigError(errors)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(values, base)


def dump_config(cfg: SystemConfig) -> str:
    lines = []
    for key, value in cfg.to_dict().items():
        if key == "delays":
            value = ", ".join(repr(float(d)) for d in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
