"""Closed-loop simulation of marker tracking and localisation.

World frame: the camera sits at ``camera_position`` with zero pan/tilt
looking along +z; +x is up and +y is right, the same axes the
spherical-to-Cartesian conversion produces. Trajectories are given in this
frame in metres.

Per step: project the marker circle, run the simulated detector over the
sliding windows, update zoom and pan/tilt commands, convert the detection to
a range, filter it, smooth the pointing angles, and convert to Cartesian.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .camera import (CameraState, ZoomLens, ZoomTable, apply_command, intrinsics_for,
                     make_pan_tilt_command, pixel_offset_to_angles, pixel_to_offsets,
                     zoom_for_range, zoom_step)
from .detect import NoiseModel, RoiWindowLayout, SimulatedDetector
from .errors import EmptyLog, SchemaMismatch
from .estim import (Butterworth, ButterworthSpec, FilterParams, RangeFilter, SphericalCoord,
                    cartesian_to_spherical, spherical_to_cartesian)
from .geom import CirclePose3D, MarkerSpec, estimate_range, project_circle_orthogonal

log = logging.getLogger(__name__)

LOG_COLUMNS = ("t", "truth_x", "truth_y", "truth_z", "est_x", "est_y", "est_z",
               "rho_obs", "rho_est", "phi", "zoom_state", "pan", "tilt", "detected")
PHI_CORR_THRESHOLD = 0.175
ESTIMATORS = ("apf", "fixed", "none", "bw")


# --- trajectories -------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear path with an optional roll/pitch wobble of the marker plane."""

    times: tuple[float, ...]
    points: tuple[tuple[float, float, float], ...]
    attitude_amp_deg: float = 0.0
    attitude_period_s: float = 5.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if len(t) != len(self.points) or len(t) < 1:
            raise ValueError("times and points must be non-empty and of equal length")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @classmethod
    def from_path(cls, points: Sequence, speeds, attitude_amp_deg: float = 0.0,
                  attitude_period_s: float = 5.0) -> "Trajectory":
        """Timestamps from per-segment speeds (cycled when shorter than the path)."""
        pts = [tuple(float(c) for c in p) for p in points]
        speeds = list(np.atleast_1d(speeds))
        times = [0.0]
        for i in range(1, len(pts)):
            dist = math.dist(pts[i - 1], pts[i])
            times.append(times[-1] + dist / float(speeds[(i - 1) % len(speeds)]))
        return cls(tuple(times), tuple(pts), attitude_amp_deg, attitude_period_s)

    @property
    def duration(self) -> float:
        return self.times[-1] - self.times[0]

    def position(self, t: float) -> np.ndarray:
        ts = np.asarray(self.times)
        pts = np.asarray(self.points)
        return np.array([np.interp(t, ts, pts[:, k]) for k in range(3)])

    def segment_speeds(self) -> np.ndarray:
        pts = np.asarray(self.points)
        return np.linalg.norm(np.diff(pts, axis=0), axis=1) / np.diff(self.times)

    def normal(self, t: float) -> np.ndarray:
        """Marker-plane normal: world up tilted by the roll/pitch wobble."""
        if self.attitude_amp_deg == 0.0:
            return np.array([1.0, 0.0, 0.0])
        amp = math.radians(self.attitude_amp_deg)
        w = 2.0 * math.pi / self.attitude_period_s
        roll = amp * math.sin(w * t)
        pitch = amp * math.sin(0.77 * w * t + 1.0)
        n = np.array([math.cos(roll) * math.cos(pitch), math.sin(roll), math.cos(roll) * math.sin(pitch)])
        return n / np.linalg.norm(n)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "z"])
            for t, p in zip(self.times, self.points):
                w.writerow([repr(t), *map(repr, p)])

    @classmethod
    def from_csv(cls, path, attitude_amp_deg: float = 0.0, attitude_period_s: float = 5.0) -> "Trajectory":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows or not {"t", "x", "y", "z"} <= set(rows[0]):
            raise SchemaMismatch(f"{path}: trajectory CSV needs columns t,x,y,z")
        return cls(tuple(float(r["t"]) for r in rows),
                   tuple((float(r["x"]), float(r["y"]), float(r["z"])) for r in rows),
                   attitude_amp_deg, attitude_period_s)


# --- configuration ------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    trajectory: Trajectory
    marker: MarkerSpec = MarkerSpec()
    zoom_table: ZoomTable = ZoomTable()
    h_px: int = 1920
    v_px: int = 1080
    latency_s: float = 0.13
    step_deg: float = 0.02
    camera_position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    filter: FilterParams = FilterParams()
    estimator: str = "apf"
    bw_range_f_crit_hz: float = 1.0
    noise: NoiseModel = NoiseModel()
    layout_window: int = 448
    layout_overlap: int = 50
    control_scale: float = 4.0
    control_threshold_deg: float = 1.0
    hfov_filter_order: int = 3
    hfov_filter_f_crit_hz: float = 0.6
    angle_filter_order: int = 1
    angle_filter_f_crit_hz: float = 2.0
    zoom_transition_s: float = 1.0
    dt: float = 0.125
    duration: Optional[float] = None
    grace_s: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"estimator must be one of {ESTIMATORS}")
        if self.estimator == "fixed" and self.filter.sigma_rbf_fixed is None:
            raise ValueError("estimator 'fixed' needs filter.sigma_rbf_fixed")

    @property
    def layout(self) -> RoiWindowLayout:
        return RoiWindowLayout(self.h_px, self.v_px, self.layout_window, self.layout_overlap)

    @property
    def n_steps(self) -> int:
        dur = self.trajectory.duration if self.duration is None else self.duration
        return int(math.floor(dur / self.dt + 1e-9)) + 1


def run_seed_sequence(seed: int, run_index: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed), int(run_index)])


def _stream_rngs(seed: int, run_index: int):
    detector_ss, filter_ss = run_seed_sequence(seed, run_index).spawn(2)
    return np.random.default_rng(detector_ss), np.random.default_rng(filter_ss)


def filter_seed_sequence(seed: int, run_index: int = 0) -> np.random.SeedSequence:
    return run_seed_sequence(seed, run_index).spawn(2)[1]


# --- estimation stage ---------------------------------------------------------

class RangeEstimator:
    """Range smoothing stage: adaptive PF, fixed-width PF, first-order Butterworth, or pass-through."""

    def __init__(self, mode: str, params: FilterParams, rng: np.random.Generator,
                 f_sample_hz: float, bw_f_crit_hz: float = 1.0):
        if mode not in ESTIMATORS:
            raise ValueError(f"unknown estimator {mode!r}")
        self.mode = mode
        if mode == "apf":
            self.pf = RangeFilter(replace(params, sigma_rbf_fixed=None), rng)
        elif mode == "fixed":
            self.pf = RangeFilter(params, rng)
        elif mode == "bw":
            self.bw = Butterworth(ButterworthSpec(1, bw_f_crit_hz, f_sample_hz))

    def __call__(self, t: float, rho_obs: float, phi_abs: float) -> float:
        if self.mode == "none":
            return rho_obs
        if self.mode == "bw":
            return self.bw.filter_step(rho_obs)
        return self.pf.step(t, rho_obs, phi_abs)


# --- logs ---------------------------------------------------------------------

@dataclass
class RunLog:
    columns: dict

    def __post_init__(self):
        missing = [c for c in LOG_COLUMNS if c not in self.columns]
        if missing:
            raise SchemaMismatch(f"log is missing columns {missing}")
        self.columns = {c: np.asarray(self.columns[c], dtype=float) for c in LOG_COLUMNS}

    def __len__(self):
        return len(self.columns["t"])

    def __getitem__(self, key):
        return self.columns[key]

    def to_csv(self, path) -> None:
        ints = {"zoom_state", "detected"}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for i in range(len(self)):
                w.writerow([str(int(self.columns[c][i])) if c in ints else repr(float(self.columns[c][i]))
                            for c in LOG_COLUMNS])

    @classmethod
    def from_csv(cls, path, required: Sequence[str] = LOG_COLUMNS) -> "RunLog":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise SchemaMismatch(f"{path}: empty file")
            missing = [c for c in required if c not in header]
            if missing:
                raise SchemaMismatch(f"{path}: missing columns {missing}")
            rows = list(reader)
        data = {h: [float(r[i]) for r in rows] for i, h in enumerate(header)}
        for c in LOG_COLUMNS:
            data.setdefault(c, [math.nan] * len(rows))
        return cls(data)


@dataclass
class RunMetrics:
    err_x: list
    err_y: list
    err_z: list
    err_3d: list
    median_3d_m: float
    rmse_3d_m: float
    rho_median_m: float
    rho_rmse_m: float
    rho_obs_median_m: float
    rho_obs_rmse_m: float
    detection_rate: float
    pearson_phi_vs_rho_error: Optional[float]
    spearman_phi_vs_rho_error: Optional[float]
    n_samples: int
    n_corr_samples: int

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass
class RunResult:
    log: RunLog
    metrics: RunMetrics
    # per-step diagnostics not part of the CSV schema
    extras: dict = field(default_factory=dict)
    events: list = field(default_factory=list)


def _rmse(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x))) if x.size else math.nan


def _median(x: np.ndarray) -> float:
    return float(np.median(x)) if x.size else math.nan


def _correlations(phi_abs: np.ndarray, err: np.ndarray):
    if phi_abs.size < 3 or np.ptp(phi_abs) == 0 or np.ptp(err) == 0:
        return None, None
    return float(stats.pearsonr(phi_abs, err)[0]), float(stats.spearmanr(phi_abs, err)[0])


def evaluate_vs_truth(run_log: RunLog) -> RunMetrics:
    """Errors of the logged estimates against the logged ground truth.

    Only steps with a detection are scored. The detection rate counts steps
    from the first detection on. Correlations use steps with
    |phi| > 0.175 and the unfiltered range error.
    """
    if len(run_log) == 0:
        raise EmptyLog("log has no rows")
    det = run_log["detected"] > 0.5
    if det.any():
        first = int(np.argmax(det))
        rate = float(det[first:].mean())
    else:
        rate = 0.0
    truth = np.column_stack([run_log["truth_x"], run_log["truth_y"], run_log["truth_z"]])[det]
    est = np.column_stack([run_log["est_x"], run_log["est_y"], run_log["est_z"]])[det]
    err = est - truth
    err3 = np.linalg.norm(err, axis=1)
    rho_true = np.linalg.norm(truth, axis=1)
    rho_err = np.abs(run_log["rho_est"][det] - rho_true)
    rho_obs_err = np.abs(run_log["rho_obs"][det] - rho_true)
    phi_abs = np.abs(run_log["phi"][det])
    sel = phi_abs > PHI_CORR_THRESHOLD
    pearson, spearman = _correlations(phi_abs[sel], rho_obs_err[sel])
    return RunMetrics(
        err_x=err[:, 0].tolist(), err_y=err[:, 1].tolist(), err_z=err[:, 2].tolist(),
        err_3d=err3.tolist(),
        median_3d_m=_median(err3), rmse_3d_m=_rmse(err3),
        rho_median_m=_median(rho_err), rho_rmse_m=_rmse(rho_err),
        rho_obs_median_m=_median(rho_obs_err), rho_obs_rmse_m=_rmse(rho_obs_err),
        detection_rate=rate,
        pearson_phi_vs_rho_error=pearson, spearman_phi_vs_rho_error=spearman,
        n_samples=int(det.sum()), n_corr_samples=int(sel.sum()),
    )


# --- the loop -----------------------------------------------------------------

def _camera_axes(pan: float, tilt: float):
    cp, sp, ct, st = math.cos(pan), math.sin(pan), math.cos(tilt), math.sin(tilt)
    fwd = np.array([st, ct * sp, ct * cp])
    right = np.array([0.0, cp, -sp])
    up = np.array([ct, -st * sp, -st * cp])
    return up, right, fwd


def _to_camera(vec: np.ndarray, axes) -> tuple[float, float, float]:
    up, right, fwd = axes
    return float(vec @ up), float(vec @ right), float(vec @ fwd)


def run(config: RunConfig, run_index: int = 0) -> RunResult:
    det_rng, filt_rng = _stream_rngs(config.seed, run_index)
    traj = config.trajectory
    table = config.zoom_table
    dt = config.dt
    fs = 1.0 / dt
    origin = np.asarray(config.camera_position, dtype=float)
    radius = 0.5 * config.marker.diameter_m

    start = traj.position(traj.times[0]) - origin
    sph0 = cartesian_to_spherical(start)
    zoom0 = zoom_for_range(table, config.marker.diameter_m, sph0.rho_m, config.h_px, config.layout_window)
    cam = CameraState(pan_rad=sph0.pan_total_rad, tilt_rad=sph0.tilt_total_rad, zoom_state=zoom0,
                      command_latency_s=config.latency_s, pan_tilt_step_rad=math.radians(config.step_deg))
    lens = ZoomLens(table, zoom0, config.zoom_transition_s)
    detector = SimulatedDetector(config.noise, config.layout, det_rng)
    hfov_bw = Butterworth(ButterworthSpec(config.hfov_filter_order, config.hfov_filter_f_crit_hz, fs))
    pan_bw = Butterworth(ButterworthSpec(config.angle_filter_order, config.angle_filter_f_crit_hz, fs))
    tilt_bw = Butterworth(ButterworthSpec(config.angle_filter_order, config.angle_filter_f_crit_hz, fs))
    ranger = RangeEstimator(config.estimator, config.filter, filt_rng, fs, config.bw_range_f_crit_hz)

    n = config.n_steps
    cols = {c: np.full(n, math.nan) for c in LOG_COLUMNS}
    extras = {k: np.full(n, math.nan) for k in ("d_obs_px", "offset_u_px", "offset_v_px", "hfov_deg", "hfov_est_deg")}
    events = []
    cmd = None
    last_check = -math.inf
    last_seen: Optional[float] = None
    lost = False

    for k in range(n):
        t = k * dt
        if k > 0:
            cam = apply_command(cam, cmd, dt)
            lens.advance(cam.zoom_state, dt)
        cmd = None
        truth = traj.position(t) - origin
        axes = _camera_axes(cam.pan_rad, cam.tilt_rad)
        center_c = _to_camera(truth, axes)
        normal_c = _to_camera(traj.normal(t), axes)
        intr = intrinsics_for(config.h_px, config.v_px, lens.hfov_deg)
        true_ellipse = None
        if center_c[2] > 0:
            e = project_circle_orthogonal(CirclePose3D(center_c, normal_c, radius), intr)
            if 0 <= e.u < config.h_px and 0 <= e.v < config.v_px:
                true_ellipse = e
        det = detector.detect(true_ellipse, dt)
        hfov_est_deg = hfov_bw.filter_step(table.hfov_by_state[cam.zoom_state])

        cols["t"][k] = t
        cols["truth_x"][k], cols["truth_y"][k], cols["truth_z"][k] = truth
        cols["zoom_state"][k] = cam.zoom_state
        cols["pan"][k] = cam.pan_rad
        cols["tilt"][k] = cam.tilt_rad
        cols["detected"][k] = 1.0 if det.present else 0.0
        extras["hfov_deg"][k] = lens.hfov_deg
        extras["hfov_est_deg"][k] = hfov_est_deg

        if not det.present:
            if last_seen is not None and not lost and t - last_seen > config.grace_s:
                lost = True
                events.append({"t": t, "event": "TrackingLost"})
                log.warning("tracking lost at t=%.3f s", t)
            continue
        last_seen, lost = t, False

        el = det.ellipse
        d_obs = 2.0 * el.a
        new_zoom, last_check = zoom_step(d_obs, config.layout_window, cam.zoom_state, t, last_check,
                                         table.max_state)
        est_intr = intrinsics_for(config.h_px, config.v_px, hfov_est_deg)
        du, dv = pixel_to_offsets(el.u, el.v, est_intr)
        theta_p, theta_t = pixel_offset_to_angles(max(-0.5, min(0.5, du)), max(-0.5, min(0.5, dv)), est_intr)
        cmd = make_pan_tilt_command(theta_p, theta_t, config.control_scale, config.control_threshold_deg)

        rho_obs = estimate_range(config.marker, d_obs, config.h_px, math.radians(hfov_est_deg))
        rho_est = ranger(t, rho_obs, abs(el.phi))
        pan_tot = pan_bw.filter_step(cam.pan_rad + theta_p)
        tilt_tot = tilt_bw.filter_step(cam.tilt_rad + theta_t)
        est = spherical_to_cartesian(SphericalCoord(max(rho_est, 0.0), pan_tot, tilt_tot))

        cols["est_x"][k], cols["est_y"][k], cols["est_z"][k] = est.x_m, est.y_m, est.z_m
        cols["rho_obs"][k] = rho_obs
        cols["rho_est"][k] = rho_est
        cols["phi"][k] = el.phi
        extras["d_obs_px"][k] = d_obs
        extras["offset_u_px"][k] = el.u - 0.5 * config.h_px
        extras["offset_v_px"][k] = el.v - 0.5 * config.v_px
        cam = replace(cam, zoom_state=new_zoom)

    run_log = RunLog(cols)
    return RunResult(run_log, evaluate_vs_truth(run_log), extras, events)


def _run_indexed(args):
    config, index = args
    return run(config, index)


def run_sweep(config: RunConfig, n_runs: int, workers: int = 1) -> list[RunResult]:
    """``n_runs`` independent runs; run ``i`` draws from SeedSequence([seed, i])."""
    jobs = [(config, i) for i in range(n_runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(j) for j in jobs]


def replay(run_log: RunLog, estimator: str = "apf", params: FilterParams = FilterParams(),
           seed: int = 0, run_index: int = 0, f_sample_hz: Optional[float] = None,
           bw_f_crit_hz: float = 1.0) -> RunLog:
    """Re-run only the range estimation over a recorded observation stream.

    The pointing direction of each logged estimate is kept; its length is
    replaced by the new range estimate.
    """
    det = run_log["detected"] > 0.5
    t = run_log["t"]
    if f_sample_hz is None:
        f_sample_hz = 1.0 / float(np.median(np.diff(t))) if len(t) > 1 else 8.0
    rng = np.random.default_rng(filter_seed_sequence(seed, run_index))
    ranger = RangeEstimator(estimator, params, rng, f_sample_hz, bw_f_crit_hz)
    cols = {c: run_log[c].copy() for c in LOG_COLUMNS}
    for k in np.flatnonzero(det):
        rho_obs, phi = run_log["rho_obs"][k], run_log["phi"][k]
        if not (math.isfinite(rho_obs) and math.isfinite(phi)):
            raise SchemaMismatch(f"row {k}: detected row without rho_obs/phi")
        rho_est = ranger(float(t[k]), float(rho_obs), abs(float(phi)))
        vec = np.array([run_log["est_x"][k], run_log["est_y"][k], run_log["est_z"][k]])
        norm_v = np.linalg.norm(vec)
        direction = vec / norm_v if norm_v > 0 and np.all(np.isfinite(vec)) else np.array([0.0, 0.0, 1.0])
        cols["est_x"][k], cols["est_y"][k], cols["est_z"][k] = max(rho_est, 0.0) * direction
        cols["rho_est"][k] = rho_est
    return RunLog(cols)


# --- presets --------------------------------------------------------------------

def _s_path() -> Trajectory:
    # three vertical legs 2 m apart on a face 6 m in front of the camera,
    # flown there and back four times; ranges stay inside one zoom state's band
    z = 6.0
    legs = [(2.0, -2.0), (9.0, -2.0), (9.0, 0.0), (2.0, 0.0), (2.0, 2.0), (9.0, 2.0)]
    out = [(h, y, z) for h, y in legs]
    lap = out + out[-2::-1]
    pts = lap + lap[1:] * 3
    return Trajectory.from_path(pts, speeds=[0.55, 0.5, 0.6, 0.5, 0.55], attitude_amp_deg=1.0,
                                attitude_period_s=6.0)


def _square_indoor() -> Trajectory:
    # 4 x 4 x 3.5 m room, camera on the floor in one corner
    h = 2.5
    corners = [(h, 1.0, 1.0), (h, 1.0, 3.5), (h, 3.5, 3.5), (h, 3.5, 1.0)]
    pts = corners * 2 + [corners[0]]
    return Trajectory.from_path(pts, speeds=[0.5, 0.55], attitude_amp_deg=1.0, attitude_period_s=5.0)


def _square_outdoor() -> Trajectory:
    # one 20 x 20 m square at 10 m height
    h = 10.0
    corners = [(h, -10.0, 6.0), (h, -10.0, 26.0), (h, 10.0, 26.0), (h, 10.0, 6.0)]
    pts = corners + [corners[0]]
    return Trajectory.from_path(pts, speeds=[0.6, 0.5], attitude_amp_deg=1.0, attitude_period_s=8.0)


_PRESETS = {
    "s-path": _s_path,
    "square-indoor": _square_indoor,
    "square-outdoor": _square_outdoor,
}


def scenario_library() -> dict[str, RunConfig]:
    return {name: RunConfig(trajectory=make()) for name, make in _PRESETS.items()}


def get_scenario(name: str) -> RunConfig:
    if name not in _PRESETS:
        raise KeyError(f"unknown scenario {name!r}; available: {', '.join(sorted(_PRESETS))}")
    return RunConfig(trajectory=_PRESETS[name]())


def write_artifacts(result: RunResult, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / "log.csv", out / "metrics.json"
    result.log.to_csv(csv_path)
    result.metrics.to_json(json_path)
    return csv_path, json_path
