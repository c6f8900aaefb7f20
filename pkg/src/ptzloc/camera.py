"""Simulated PTZ camera: intrinsics, discrete zoom, pan/tilt control laws.

Angles are radians unless a name says otherwise. Pan is positive to the
right, tilt positive upwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .errors import OffsetOutOfRange

DEFAULT_HFOV_DEG = (54.0, 45.01, 37.87, 30.67, 24.21, 18.11, 12.99, 8.59)
DEFAULT_STEP_DEG = 0.02
DEFAULT_LATENCY_S = 0.13
ZOOM_CHECK_INTERVAL_S = 1.0


@dataclass(frozen=True)
class CameraIntrinsics:
    h_px: int
    v_px: int
    hfov_rad: float
    vfov_rad: float

    def __post_init__(self):
        if self.h_px <= 0 or self.v_px <= 0:
            raise ValueError("resolution must be positive")
        if not (0.0 < self.hfov_rad < math.pi and 0.0 < self.vfov_rad < math.pi):
            raise ValueError("field of view must lie in (0, pi)")

    @classmethod
    def from_hfov(cls, h_px: int, v_px: int, hfov_rad: float) -> "CameraIntrinsics":
        """Square pixels: the vertical FOV follows from the aspect ratio."""
        vfov = 2.0 * math.atan(math.tan(0.5 * hfov_rad) * v_px / h_px)
        return cls(h_px, v_px, hfov_rad, vfov)

    @property
    def focal_px(self) -> float:
        return 0.5 * self.h_px / math.tan(0.5 * self.hfov_rad)

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * self.h_px, 0.5 * self.v_px


@dataclass(frozen=True)
class ZoomTable:
    hfov_by_state: tuple[float, ...] = DEFAULT_HFOV_DEG

    def __post_init__(self):
        vals = tuple(float(x) for x in self.hfov_by_state)
        object.__setattr__(self, "hfov_by_state", vals)
        if not vals:
            raise ValueError("zoom table is empty")
        if any(b >= a for a, b in zip(vals, vals[1:])):
            raise ValueError("zoom table HFOVs must be strictly decreasing")
        if not all(0.0 < v < 180.0 for v in vals):
            raise ValueError("zoom table HFOVs must lie in (0, 180) degrees")

    def __len__(self):
        return len(self.hfov_by_state)

    @property
    def max_state(self) -> int:
        return len(self.hfov_by_state) - 1

    def hfov_rad(self, state: int) -> float:
        return math.radians(self.hfov_by_state[state])


@dataclass(frozen=True)
class PanTiltCommand:
    mu_pan: float  # degrees
    mu_tilt: float  # degrees


@dataclass(frozen=True)
class CameraState:
    """Actuator state plus the queue of commands still in flight.

    ``pending`` holds ``(due_time_s, dpan_rad, dtilt_rad)`` with the deltas
    already quantised.
    """

    pan_rad: float = 0.0
    tilt_rad: float = 0.0
    zoom_state: int = 0
    command_latency_s: float = DEFAULT_LATENCY_S
    pan_tilt_step_rad: float = math.radians(DEFAULT_STEP_DEG)
    time_s: float = 0.0
    pending: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.pan_tilt_step_rad <= 0:
            raise ValueError("pan_tilt_step_rad must be positive")
        if self.zoom_state < 0:
            raise ValueError("zoom_state must be non-negative")
        if self.command_latency_s < 0:
            raise ValueError("command_latency_s must be non-negative")


def pixel_offset_to_angles(delta_u_norm: float, delta_v_norm: float,
                           intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Pan/tilt angles to a target offset from the image centre.

    Offsets are fractions of the frame width (horizontal, positive right)
    and height (vertical, positive up), each in [-0.5, 0.5]. Pan uses the
    horizontal FOV and tilt the vertical FOV.
    """
    if abs(delta_u_norm) > 0.5 or abs(delta_v_norm) > 0.5:
        raise OffsetOutOfRange(f"offset ({delta_u_norm}, {delta_v_norm}) outside [-0.5, 0.5]")
    theta_p = math.atan(delta_u_norm * 2.0 * math.tan(0.5 * intrinsics.hfov_rad))
    theta_t = math.atan(delta_v_norm * 2.0 * math.tan(0.5 * intrinsics.vfov_rad))
    return theta_p, theta_t


def pixel_to_offsets(u: float, v: float, intrinsics: CameraIntrinsics) -> tuple[float, float]:
    """Normalised offsets of pixel (u, v); image v grows downwards."""
    cu, cv = intrinsics.center
    return (u - cu) / intrinsics.h_px, (cv - v) / intrinsics.v_px


def make_pan_tilt_command(theta_p: float, theta_t: float, s: float = 4.0,
                          threshold_deg: float = 1.0) -> Optional[PanTiltCommand]:
    """Proportional pan/tilt command, or None when both axes are inside the dead band.

    The threshold compares the magnitude of each angle, so a target left of
    or below the centre is commanded the same way as one to the right or
    above.
    """
    if s <= 0:
        raise ValueError("scale factor s must be positive")
    p_deg = math.degrees(theta_p)
    t_deg = math.degrees(theta_t)
    mu_pan = p_deg / s if abs(p_deg) > threshold_deg else 0.0
    mu_tilt = t_deg / s if abs(t_deg) > threshold_deg else 0.0
    if mu_pan == 0.0 and mu_tilt == 0.0:
        return None
    return PanTiltCommand(mu_pan, mu_tilt)


def zoom_step(d_obs_px: float, roi_width_px: int, state: int, now_s: float,
              last_check_s: float, max_state: int = len(DEFAULT_HFOV_DEG) - 1,
              interval_s: float = ZOOM_CHECK_INTERVAL_S) -> tuple[int, float]:
    """One zoom-controller tick. Returns ``(new_state, last_check_s)``."""
    if roi_width_px <= 0:
        raise ValueError("roi_width_px must be positive")
    if now_s - last_check_s < interval_s:
        return state, last_check_s
    if d_obs_px < roi_width_px / 4.0:
        state = min(state + 1, max_state)
    elif d_obs_px > 7.0 * roi_width_px / 12.0:
        state = max(state - 1, 0)
    return state, now_s


def quantise(angle_rad: float, step_rad: float) -> float:
    # round half to even, via Python's round on the step count
    return round(angle_rad / step_rad) * step_rad


def apply_command(state: CameraState, cmd: Optional[PanTiltCommand], dt: float) -> CameraState:
    """Issue ``cmd`` (may be None) at ``state.time_s`` and advance the clock by ``dt``.

    A command moves the head only once ``command_latency_s`` has passed
    since it was issued; its deltas are rounded to the actuator step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    pending = list(state.pending)
    if cmd is not None:
        step = state.pan_tilt_step_rad
        pending.append((state.time_s + state.command_latency_s,
                        quantise(math.radians(cmd.mu_pan), step),
                        quantise(math.radians(cmd.mu_tilt), step)))
    now = state.time_s + dt
    pan, tilt = state.pan_rad, state.tilt_rad
    keep = []
    for due, dpan, dtilt in pending:
        # small tolerance so a due time that equals ``now`` in exact arithmetic
        # is not deferred by float rounding in the accumulated clock
        if due <= now + 1e-9:
            pan += dpan
            tilt += dtilt
        else:
            keep.append((due, dpan, dtilt))
    return replace(state, pan_rad=pan, tilt_rad=tilt, time_s=now, pending=tuple(keep))


class ZoomLens:
    """Optical zoom moving towards the HFOV of the commanded state.

    Each transition takes ``transition_s`` seconds along a raised-cosine
    profile, so small and large zoom steps settle in the same time. A new
    target mid-transition starts a fresh transition from the current HFOV.
    """

    def __init__(self, table: ZoomTable, state: int = 0, transition_s: float = 1.0):
        if transition_s < 0:
            raise ValueError("transition_s must be non-negative")
        self.table = table
        self.transition_s = transition_s
        self.hfov_deg = table.hfov_by_state[state]
        self._start = self.hfov_deg
        self._target = self.hfov_deg
        self._elapsed = 0.0

    def advance(self, target_state: int, dt: float) -> float:
        target = self.table.hfov_by_state[target_state]
        if target != self._target:
            self._start, self._target, self._elapsed = self.hfov_deg, target, 0.0
        self._elapsed += dt
        if self.transition_s == 0 or self._elapsed >= self.transition_s:
            self.hfov_deg = self._target
        else:
            s = 0.5 * (1.0 - math.cos(math.pi * self._elapsed / self.transition_s))
            self.hfov_deg = self._start + (self._target - self._start) * s
        return self.hfov_deg


def zoom_for_range(table: ZoomTable, diameter_m: float, range_m: float, h_px: int,
                   roi_px: int) -> int:
    """Zoom state whose expected marker diameter sits closest to the band centre."""
    lo, hi = roi_px / 4.0, 7.0 * roi_px / 12.0
    mid = math.sqrt(lo * hi)
    best, best_err = 0, math.inf
    for k in range(len(table)):
        d = diameter_m * h_px / (2.0 * range_m * math.tan(0.5 * table.hfov_rad(k)))
        err = abs(math.log(d / mid))
        if err < best_err:
            best, best_err = k, err
    return best


def intrinsics_for(h_px: int, v_px: int, hfov_deg: float) -> CameraIntrinsics:
    return CameraIntrinsics.from_hfov(h_px, v_px, math.radians(hfov_deg))

