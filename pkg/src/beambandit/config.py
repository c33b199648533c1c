"""Run configuration: dataclass sections, strict JSON (de)serialization, validation.

Every section mirrors one subsystem's tunables.  ``RunConfig.from_dict``
rejects unknown keys and reports violations with their dotted field path,
e.g. ``kernel.lambda_k: must be > 0``.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field


class ConfigError(ValueError):
    """Raised for unknown keys, type mismatches, or constraint violations."""


def _is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(f"{path}: {msg}")


@dataclass
class ScenarioConfig:
    area_width_m: float = 600.0
    area_height_m: float = 600.0
    arrival_rate_per_s: float = 0.1
    horizon_periods: int = 1000
    period_duration_s: float = 0.01
    association_interval: int = 100     # periods between association decisions
    candidate_radius_m: float = 400.0
    num_bs: int = 5
    bs_positions: list | None = None    # [[x, y], ...]; overrides seeded placement
    bs_placement_seed: int = 7
    bs_margin_m: float = 60.0
    speed_min_mps: float = 8.0
    speed_max_mps: float = 14.0
    initial_vehicles: int = 4
    max_vehicles: int = 12
    trace_path: str | None = None       # mobility trace file replaces synthetic model

    def validate(self, path: str = "scenario") -> None:
        _check(self.area_width_m > 0, f"{path}.area_width_m", "must be > 0")
        _check(self.area_height_m > 0, f"{path}.area_height_m", "must be > 0")
        _check(self.arrival_rate_per_s >= 0, f"{path}.arrival_rate_per_s", "must be >= 0")
        _check(self.horizon_periods >= 0, f"{path}.horizon_periods", "must be >= 0")
        _check(self.period_duration_s > 0, f"{path}.period_duration_s", "must be > 0")
        _check(self.association_interval >= 1, f"{path}.association_interval", "must be >= 1")
        _check(self.candidate_radius_m > 0, f"{path}.candidate_radius_m", "must be > 0")
        if self.bs_positions is None:
            _check(self.num_bs >= 1, f"{path}.num_bs", "must be >= 1")
        else:
            _check(len(self.bs_positions) >= 1, f"{path}.bs_positions", "must list at least one BS")
            for i, p in enumerate(self.bs_positions):
                _check(
                    isinstance(p, (list, tuple)) and len(p) == 2,
                    f"{path}.bs_positions[{i}]", "must be an [x, y] pair",
                )
        _check(0 < self.speed_min_mps <= self.speed_max_mps,
               f"{path}.speed_min_mps", "need 0 < speed_min_mps <= speed_max_mps")
        _check(self.initial_vehicles >= 0, f"{path}.initial_vehicles", "must be >= 0")
        _check(self.max_vehicles >= 1, f"{path}.max_vehicles", "must be >= 1")


@dataclass
class RadioConfig:
    tx_power_w: float = 1.0
    bandwidth_hz: float = 100e6
    noise_density_w_per_hz: float = 4e-21
    wavelength_m: float = 0.01
    num_tx_antennas: int = 16
    num_rx_antennas: int = 8
    path_loss_exponent: float = 2.5
    path_loss_ref_m: float = 1.0
    rician_k: float = 10.0              # LOS power / total NLOS power, linear
    nlos_path_count: int = 3
    blockage_density_per_km2: float = 60.0
    building_size_min_m: float = 20.0
    building_size_max_m: float = 60.0
    coherence_displacement_m: float = 4.0

    def validate(self, path: str = "radio") -> None:
        for name in ("tx_power_w", "bandwidth_hz", "noise_density_w_per_hz",
                     "wavelength_m", "path_loss_ref_m", "coherence_displacement_m"):
            _check(getattr(self, name) > 0, f"{path}.{name}", "must be > 0")
        _check(_is_power_of_two(self.num_tx_antennas),
               f"{path}.num_tx_antennas", "must be a power of two >= 1")
        _check(_is_power_of_two(self.num_rx_antennas),
               f"{path}.num_rx_antennas", "must be a power of two >= 1")
        _check(self.path_loss_exponent > 0, f"{path}.path_loss_exponent", "must be > 0")
        _check(self.rician_k > 0, f"{path}.rician_k", "must be > 0")
        _check(self.nlos_path_count >= 0, f"{path}.nlos_path_count", "must be >= 0")
        _check(self.blockage_density_per_km2 >= 0,
               f"{path}.blockage_density_per_km2", "must be >= 0")
        _check(0 < self.building_size_min_m <= self.building_size_max_m,
               f"{path}.building_size_min_m",
               "need 0 < building_size_min_m <= building_size_max_m")


@dataclass
class KernelConfig:
    sigma_l: float = 100.0              # distance bandwidth, meters
    sigma_f: float = 200.0              # Doppler bandwidth, Hz
    sigma_n: float = 5.0                # load bandwidth, count
    sigma_psi: float | None = None      # beam-bias bandwidth, rad; None -> 2*pi/N_T
    lambda_k: float = 1.0               # ridge regularizer

    def validate(self, path: str = "kernel") -> None:
        _check(self.sigma_l > 0, f"{path}.sigma_l", "must be > 0")
        _check(self.sigma_f > 0, f"{path}.sigma_f", "must be > 0")
        _check(self.sigma_n > 0, f"{path}.sigma_n", "must be > 0")
        if self.sigma_psi is not None:
            _check(self.sigma_psi > 0, f"{path}.sigma_psi", "must be > 0")
        _check(self.lambda_k > 0, f"{path}.lambda_k", "must be > 0")

    def resolved_sigma_psi(self, num_tx_antennas: int) -> float:
        if self.sigma_psi is not None:
            return self.sigma_psi
        return 2.0 * math.pi / num_tx_antennas


@dataclass
class UcbConfig:
    alpha: float = 1.0
    sync_threshold: float = 30.0        # L in the sync trigger
    alpha_schedule: str = "fixed"       # "fixed" or "logdet"
    norm_bound: float = 1.0             # reward-parameter norm bound for "logdet"
    confidence_delta: float = 0.1

    def validate(self, path: str = "ucb") -> None:
        _check(self.alpha >= 0 and math.isfinite(self.alpha), f"{path}.alpha", "must be finite and >= 0")
        _check(self.sync_threshold >= 0, f"{path}.sync_threshold", "must be >= 0")
        _check(self.alpha_schedule in ("fixed", "logdet"),
               f"{path}.alpha_schedule", "must be 'fixed' or 'logdet'")
        _check(self.norm_bound > 0, f"{path}.norm_bound", "must be > 0")
        _check(0 < self.confidence_delta < 1, f"{path}.confidence_delta", "must be in (0, 1)")


POLICY_NAMES = ("bkc_ucb", "oracle_csi", "wcs", "dk_ucb_lite", "layer1_restart", "random")


@dataclass
class PolicyConfig:
    name: str = "bkc_ucb"
    capacity: int = 512                 # sample-store capacity per (vehicle, BS)
    sinr_cap: float = 1e6               # reward normalization: rate / (W log2(1+cap))
    sync_literal_new_only: bool = False  # sync denominator over new samples instead of old
    probe_overhead: float = 0.10        # period fraction spent on the two beam probes
    include_probe_samples: bool = False

    def validate(self, path: str = "policy") -> None:
        _check(self.name in POLICY_NAMES,
               f"{path}.name", f"must be one of {', '.join(POLICY_NAMES)}")
        _check(self.capacity >= 1, f"{path}.capacity", "must be >= 1")
        _check(self.sinr_cap > 0, f"{path}.sinr_cap", "must be > 0")
        _check(0 <= self.probe_overhead < 1, f"{path}.probe_overhead", "must be in [0, 1)")


@dataclass
class EngineConfig:
    rate_windows: list = field(default_factory=lambda: [[1500, 2000]])
    best_response_max_sweeps: int = 16

    def validate(self, path: str = "engine") -> None:
        for i, w in enumerate(self.rate_windows):
            _check(isinstance(w, (list, tuple)) and len(w) == 2 and w[0] >= 1 and w[0] <= w[1],
                   f"{path}.rate_windows[{i}]", "must be a [start, end] period pair with 1 <= start <= end")
        _check(self.best_response_max_sweeps >= 1,
               f"{path}.best_response_max_sweeps", "must be >= 1")


@dataclass
class OutputConfig:
    out_dir: str = "results"
    write_logs: bool = True
    write_summaries: bool = True

    def validate(self, path: str = "output") -> None:
        _check(bool(self.out_dir), f"{path}.out_dir", "must be non-empty")


_SECTIONS = {
    "scenario": ScenarioConfig,
    "radio": RadioConfig,
    "kernel": KernelConfig,
    "ucb": UcbConfig,
    "policy": PolicyConfig,
    "engine": EngineConfig,
    "output": OutputConfig,
}


@dataclass
class RunConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    radio: RadioConfig = field(default_factory=RadioConfig)
    kernel: KernelConfig = field(default_factory=KernelConfig)
    ucb: UcbConfig = field(default_factory=UcbConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    seeds: list = field(default_factory=lambda: [1])
    preset: str | None = None

    def validate(self) -> "RunConfig":
        for name in _SECTIONS:
            getattr(self, name).validate(name)
        _check(len(self.seeds) >= 1, "seeds", "must list at least one seed")
        for i, s in enumerate(self.seeds):
            _check(isinstance(s, int) and s >= 0, f"seeds[{i}]", "must be a non-negative integer")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config root: must be a JSON object")
        cfg = cls()
        for key, value in data.items():
            if key == "seeds":
                cfg.seeds = _coerce(value, list, "seeds")
            elif key == "preset":
                cfg.preset = None if value is None else _coerce(value, str, "preset")
            elif key in _SECTIONS:
                setattr(cfg, key, _section_from_dict(_SECTIONS[key], value, key))
            else:
                raise ConfigError(f"{key}: unknown config section")
        return cfg

    def apply_override(self, dotted: str, value) -> None:
        """Set a field by dotted path, e.g. ('kernel.lambda_k', 2.0)."""
        parts = dotted.split(".")
        if len(parts) == 1:
            if parts[0] not in ("seeds", "preset"):
                raise ConfigError(f"{dotted}: unknown config field")
            setattr(self, parts[0], value)
            return
        if len(parts) != 2 or parts[0] not in _SECTIONS:
            raise ConfigError(f"{dotted}: unknown config field")
        section = getattr(self, parts[0])
        names = {f.name: f for f in dataclasses.fields(section)}
        if parts[1] not in names:
            raise ConfigError(f"{dotted}: unknown config field")
        setattr(section, parts[1], _coerce_field(value, names[parts[1]], dotted))


def _coerce(value, typ, path):
    if typ is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if typ is int and isinstance(value, int) and not isinstance(value, bool):
        return value
    if not isinstance(value, typ) or (typ is not bool and isinstance(value, bool)):
        raise ConfigError(f"{path}: expected {typ.__name__}, got {type(value).__name__}")
    return value


def _coerce_field(value, fld: dataclasses.Field, path: str):
    ann = fld.type
    if ann in ("float", float):
        return _coerce(value, float, path)
    if ann in ("int", int):
        return _coerce(value, int, path)
    if ann in ("bool", bool):
        return _coerce(value, bool, path)
    if ann in ("str", str):
        return _coerce(value, str, path)
    if ann in ("list", list):
        return _coerce(value, list, path)
    # optional fields: accept None or the inner type
    if value is None:
        return None
    if "float" in str(ann):
        return _coerce(value, float, path)
    if "str" in str(ann):
        return _coerce(value, str, path)
    if "list" in str(ann):
        return _coerce(value, list, path)
    return value


def _section_from_dict(section_cls, data, path):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name: f for f in dataclasses.fields(section_cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown config field")
        kwargs[key] = _coerce_field(value, names[key], f"{path}.{key}")
    return section_cls(**kwargs)


def load_config(path: str) -> RunConfig:
    """Parse a JSON config file into a RunConfig (not yet validated)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return RunConfig.from_dict(data)
