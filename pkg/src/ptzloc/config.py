"""YAML application config with field-path validation.

Every section maps onto one of the package's own parameter types; unknown
keys and bad values are reported as ``section.field: message``.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

import yaml

from .camera import DEFAULT_HFOV_DEG, DEFAULT_LATENCY_S, DEFAULT_STEP_DEG, ZoomTable
from .dataset import AugmentParams, DatasetManifest
from .detect import NoiseModel
from .errors import ConfigError
from .estim import FilterParams
from .geom import MarkerSpec
from .sim import ESTIMATORS, RunConfig, Trajectory, get_scenario

SEED_ENV = "PTZLOC_SEED"


@dataclass
class CameraSection:
    h_px: int = 1920
    v_px: int = 1080
    hfov_deg: tuple = DEFAULT_HFOV_DEG
    latency_s: float = DEFAULT_LATENCY_S
    step_deg: float = DEFAULT_STEP_DEG
    zoom_transition_s: float = 1.0
    roi_window: int = 448
    roi_overlap: int = 50
    control_scale: float = 4.0
    control_threshold_deg: float = 1.0


@dataclass
class MarkerSection:
    diameter_m: float = 0.30


@dataclass
class FilterSection:
    mode: str = "apf"
    n_particles: int = 2000
    sigma_rho: float = 0.3
    sigma_rho_dot: float = 0.1
    lam: float = 15.0
    sigma_rbf_min: float = 0.5
    init_std: float = 1.0
    sigma_rbf_fixed: Optional[float] = None
    bw_f_crit_hz: float = 1.0
    hfov_order: int = 3
    hfov_f_crit_hz: float = 0.6
    angle_order: int = 1
    angle_f_crit_hz: float = 2.0

    def params(self) -> FilterParams:
        return FilterParams(n_particles=self.n_particles, sigma_rho=self.sigma_rho,
                            sigma_rho_dot=self.sigma_rho_dot, lam=self.lam,
                            sigma_rbf_min=self.sigma_rbf_min, init_std=self.init_std,
                            sigma_rbf_fixed=self.sigma_rbf_fixed)


@dataclass
class NoiseSection:
    sigma_center_px: float = NoiseModel.sigma_center_px
    sigma_axis_frac: float = NoiseModel.sigma_axis_frac
    phi_coupling: float = NoiseModel.phi_coupling
    sigma_phi: float = NoiseModel.sigma_phi
    sigma_phi_hard: float = NoiseModel.sigma_phi_hard
    hard_rate: float = NoiseModel.hard_rate
    false_negative_rate: float = NoiseModel.false_negative_rate
    bias_sigma_frac: float = NoiseModel.bias_sigma_frac
    bias_corr_s: float = NoiseModel.bias_corr_s


@dataclass
class SimSection:
    scenario: str = "s-path"
    trajectory_file: Optional[str] = None
    dt: float = 0.125
    duration: Optional[float] = None
    grace_s: float = 2.0
    runs: int = 1
    workers: int = 1


@dataclass
class DatasetSection:
    total: int = 9000
    positives: Optional[int] = None
    backgrounds_dir: Optional[str] = None
    image_dir: str = "images"
    label_file: str = "labels.jsonl"
    workers: int = 1
    stroke_px: int = 3
    stroke_blur_sigma: float = 1.0


@dataclass
class AppConfig:
    seed: Optional[int] = None
    output_dir: str = "out"
    camera: CameraSection = field(default_factory=CameraSection)
    marker: MarkerSection = field(default_factory=MarkerSection)
    filter: FilterSection = field(default_factory=FilterSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    sim: SimSection = field(default_factory=SimSection)
    dataset: DatasetSection = field(default_factory=DatasetSection)


# --- parsing -------------------------------------------------------------------

def _coerce(value: Any, default: Any, path: str) -> Any:
    """Convert a YAML scalar to the type of ``default``."""
    if value is None:
        return None
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(path, f"expected a list of numbers, got {value!r}") from None
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    return value


# fields whose default is None, with the type they take when set
_OPTIONAL_TYPES = {
    "seed": 0, "sigma_rbf_fixed": 0.0, "trajectory_file": "", "duration": 0.0,
    "positives": 0, "backgrounds_dir": "",
}


def _build(cls, data: Any, prefix: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(prefix or "<root>", f"expected a mapping, got {type(data).__name__}")
    known = {f.name: f for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"{prefix}{key}", "unknown field")
    kwargs = {}
    defaults = cls()
    for name, f in known.items():
        path = f"{prefix}{name}"
        default = getattr(defaults, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), data.get(name), f"{path}.")
        elif name in data:
            proto = _OPTIONAL_TYPES.get(name, default) if default is None else default
            kwargs[name] = _coerce(data[name], proto, path)
    return cls(**kwargs)


def config_from_dict(data: Any) -> AppConfig:
    cfg = _build(AppConfig, data, "")
    validate(cfg)
    return cfg


def load_config(path) -> AppConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read config: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(str(p), f"invalid YAML: {exc}") from None
    return config_from_dict(data)


def config_to_dict(cfg: AppConfig) -> dict:
    def plain(v):
        if isinstance(v, tuple):
            return [plain(x) for x in v]
        return v
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        out[f.name] = ({k: plain(x) for k, x in dataclasses.asdict(v).items()}
                       if dataclasses.is_dataclass(v) else plain(v))
    return out


def dump_config(cfg: AppConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def apply_overrides(cfg: AppConfig, overrides: list[str]) -> AppConfig:
    """Apply ``section.field=value`` overrides; values are parsed as YAML scalars."""
    data = config_to_dict(cfg)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like section.field=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(key, "unknown section")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(key, "unknown field")
        try:
            node[parts[-1]] = yaml.safe_load(raw)
        except yaml.YAMLError as exc:
            raise ConfigError(key, f"cannot parse value {raw!r}: {exc}") from None
    return config_from_dict(data)


def _check(path: str, build) -> None:
    try:
        build()
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None


def validate(cfg: AppConfig) -> None:
    """Construct every module-level type once so its own invariants run."""
    c = cfg.camera
    _check("camera.hfov_deg", lambda: ZoomTable(c.hfov_deg))
    for name in ("h_px", "v_px", "roi_window"):
        if getattr(c, name) <= 0:
            raise ConfigError(f"camera.{name}", "must be positive")
    if not 0 <= c.roi_overlap < c.roi_window:
        raise ConfigError("camera.roi_overlap", "must lie in [0, roi_window)")
    if c.roi_window > min(c.h_px, c.v_px):
        raise ConfigError("camera.roi_window", "larger than the frame")
    if c.latency_s < 0:
        raise ConfigError("camera.latency_s", "must be non-negative")
    if c.step_deg <= 0:
        raise ConfigError("camera.step_deg", "must be positive")
    if c.control_scale <= 0:
        raise ConfigError("camera.control_scale", "must be positive")
    _check("marker", lambda: MarkerSpec(cfg.marker.diameter_m))
    _check("filter", cfg.filter.params)
    if cfg.filter.mode not in ESTIMATORS:
        raise ConfigError("filter.mode", f"must be one of {', '.join(ESTIMATORS)}")
    if cfg.filter.mode == "fixed" and cfg.filter.sigma_rbf_fixed is None:
        raise ConfigError("filter.sigma_rbf_fixed", "required when filter.mode is 'fixed'")
    _check("noise", lambda: NoiseModel(**dataclasses.asdict(cfg.noise)))
    s = cfg.sim
    if s.dt <= 0:
        raise ConfigError("sim.dt", "must be positive")
    if s.duration is not None and s.duration <= 0:
        raise ConfigError("sim.duration", "must be positive")
    if s.runs < 1:
        raise ConfigError("sim.runs", "must be >= 1")
    if s.workers < 1:
        raise ConfigError("sim.workers", "must be >= 1")
    if s.trajectory_file is None:
        _check("sim.scenario", lambda: _scenario_or_value_error(s.scenario))
    d = cfg.dataset
    _check("dataset", lambda: DatasetManifest(d.total, d.positives, d.image_dir, d.label_file))
    _check("dataset", lambda: AugmentParams(stroke_px=d.stroke_px, stroke_blur_sigma=d.stroke_blur_sigma))
    if d.workers < 1:
        raise ConfigError("dataset.workers", "must be >= 1")


def _scenario_or_value_error(name: str):
    try:
        return get_scenario(name)
    except KeyError as exc:
        raise ValueError(exc.args[0]) from None


def resolve_seed(cli_seed: Optional[int], cfg: AppConfig) -> int:
    """CLI flag, then config file, then ``PTZLOC_SEED``, then 0."""
    if cli_seed is not None:
        return cli_seed
    if cfg.seed is not None:
        return cfg.seed
    env = os.environ.get(SEED_ENV)
    if env is not None and env.strip():
        try:
            return int(env)
        except ValueError:
            raise ConfigError(SEED_ENV, f"expected an integer, got {env!r}") from None
    return 0


def run_config(cfg: AppConfig, seed: int) -> RunConfig:
    """The simulator configuration described by ``cfg``."""
    s, c, f = cfg.sim, cfg.camera, cfg.filter
    if s.trajectory_file is not None:
        try:
            traj = Trajectory.from_csv(s.trajectory_file)
        except OSError as exc:
            raise ConfigError("sim.trajectory_file", f"cannot read: {exc.strerror}") from None
        except ValueError as exc:
            raise ConfigError("sim.trajectory_file", str(exc)) from None
    else:
        traj = get_scenario(s.scenario).trajectory
    return RunConfig(
        trajectory=traj, marker=MarkerSpec(cfg.marker.diameter_m), zoom_table=ZoomTable(c.hfov_deg),
        h_px=c.h_px, v_px=c.v_px, latency_s=c.latency_s, step_deg=c.step_deg,
        filter=f.params(), estimator=f.mode, bw_range_f_crit_hz=f.bw_f_crit_hz,
        noise=NoiseModel(**dataclasses.asdict(cfg.noise), seed=seed),
        layout_window=c.roi_window, layout_overlap=c.roi_overlap,
        control_scale=c.control_scale, control_threshold_deg=c.control_threshold_deg,
        hfov_filter_order=f.hfov_order, hfov_filter_f_crit_hz=f.hfov_f_crit_hz,
        angle_filter_order=f.angle_order, angle_filter_f_crit_hz=f.angle_f_crit_hz,
        zoom_transition_s=c.zoom_transition_s, dt=s.dt, duration=s.duration, grace_s=s.grace_s,
        seed=seed,
    )
