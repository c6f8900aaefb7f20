"""Range and position estimation.

The range filter is a SIR particle filter over (range, range rate) whose
RBF likelihood widens with the magnitude of the detected ellipse angle, so
detections with a tilted ellipse pull the estimate less. Butterworth
low-pass filters smooth the zoom FOV and the pointing angles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _kernels
from .errors import InvalidCutoff


@dataclass(frozen=True)
class FilterParams:
    n_particles: int = 2000
    sigma_rho: float = 0.3
    sigma_rho_dot: float = 0.1
    lam: float = 15.0
    sigma_rbf_min: float = 0.5
    init_mean: Optional[float] = None
    init_std: float = 1.0
    # None: adaptive width from |phi|; a number pins the RBF width
    sigma_rbf_fixed: Optional[float] = None

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        for name in ("sigma_rho", "sigma_rho_dot", "sigma_rbf_min"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.init_std < 0:
            raise ValueError("init_std must be non-negative")
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.sigma_rbf_fixed is not None and not self.sigma_rbf_fixed > 0:
            raise ValueError("sigma_rbf_fixed must be positive")


@dataclass(frozen=True)
class FilterState:
    rho: np.ndarray
    rho_dot: np.ndarray
    weights: np.ndarray
    last_update_time: float = 0.0

    @property
    def n(self) -> int:
        return self.rho.shape[0]

    def mean(self) -> float:
        return float(np.dot(self.weights, self.rho))


def pf_init(params: FilterParams, rng: np.random.Generator, init_mean: Optional[float] = None,
            time_s: float = 0.0) -> FilterState:
    mean = params.init_mean if init_mean is None else init_mean
    if mean is None:
        raise ValueError("an initial range is required")
    n = params.n_particles
    rho = mean + params.init_std * rng.standard_normal(n)
    rho_dot = params.sigma_rho_dot * rng.standard_normal(n)
    return FilterState(rho, rho_dot, np.full(n, 1.0 / n), time_s)


def pf_predict(state: FilterState, dt: float, params: FilterParams,
               rng: np.random.Generator) -> FilterState:
    """Constant-velocity propagation with per-step Gaussian process noise."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = state.n
    noise_rho = params.sigma_rho * rng.standard_normal(n)
    noise_rho_dot = params.sigma_rho_dot * rng.standard_normal(n)
    rho, rho_dot = _kernels.predict(state.rho, state.rho_dot, float(dt), noise_rho, noise_rho_dot)
    return FilterState(rho, rho_dot, state.weights, state.last_update_time + dt)


def sigma_rbf(phi_abs: float, params: FilterParams) -> float:
    if phi_abs < 0:
        raise ValueError("phi_abs must be non-negative")
    return max(params.lam * phi_abs, params.sigma_rbf_min)


def pf_update(state: FilterState, rho_obs: float, phi_abs: float,
              params: FilterParams) -> tuple[FilterState, float]:
    """Reweight particles by the RBF likelihood; returns the new state and the weighted-mean range."""
    if not math.isfinite(rho_obs):
        raise ValueError("rho_obs must be finite")
    width = params.sigma_rbf_fixed if params.sigma_rbf_fixed is not None else sigma_rbf(abs(phi_abs), params)
    w, est, _ = _kernels.rbf_update(state.rho, state.weights, float(rho_obs), float(width))
    return replace(state, weights=w), est


def pf_resample(state: FilterState, rng: np.random.Generator) -> FilterState:
    """Systematic resampling: one uniform offset, N evenly spaced pointers."""
    n = state.n
    idx = _kernels.systematic_indices(state.weights, rng.random(), n)
    return replace(state, rho=state.rho[idx], rho_dot=state.rho_dot[idx],
                   weights=np.full(n, 1.0 / n))


def systematic_counts(weights, n: int, offset: float) -> np.ndarray:
    """Copies of each particle drawn by systematic resampling with a given offset in [0, 1)."""
    idx = _kernels.systematic_indices(np.asarray(weights, dtype=float), float(offset), n)
    return np.bincount(idx, minlength=len(weights))


class RangeFilter:
    """Predict, update, resample on every observation.

    Initialised lazily from the first observation when ``params.init_mean``
    is unset.
    """

    def __init__(self, params: FilterParams, rng: np.random.Generator):
        self.params = params
        self.rng = rng
        self.state: Optional[FilterState] = None

    def step(self, t: float, rho_obs: float, phi_abs: float) -> float:
        if self.state is None:
            self.state = pf_init(self.params, self.rng, init_mean=self.params.init_mean
                                 if self.params.init_mean is not None else rho_obs, time_s=t)
        else:
            dt = t - self.state.last_update_time
            if dt > 0:
                self.state = pf_predict(self.state, dt, self.params, self.rng)
        self.state, est = pf_update(self.state, rho_obs, phi_abs, self.params)
        self.state = pf_resample(self.state, self.rng)
        return est


# --- Butterworth ------------------------------------------------------------

@dataclass(frozen=True)
class ButterworthSpec:
    order: int
    f_crit_hz: float
    f_sample_hz: float

    def __post_init__(self):
        if self.order < 1:
            raise InvalidCutoff("order must be >= 1")
        if not 0.0 < self.f_crit_hz < 0.5 * self.f_sample_hz:
            raise InvalidCutoff(
                f"critical frequency {self.f_crit_hz} Hz must lie in (0, {0.5 * self.f_sample_hz}) Hz")


def butterworth_coefficients(spec: ButterworthSpec) -> tuple[np.ndarray, np.ndarray]:
    """Digital low-pass ``(b, a)`` via the bilinear transform with pre-warping.

    ``a[0] == 1`` and the numerator is scaled so that ``sum(b) == sum(a)``
    (unit gain at DC).
    """
    n = spec.order
    fs = spec.f_sample_hz
    warped = 2.0 * fs * math.tan(math.pi * spec.f_crit_hz / fs)
    k = np.arange(1, n + 1)
    poles_s = warped * np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))
    poles_z = (2.0 * fs + poles_s) / (2.0 * fs - poles_s)
    a = np.real(np.poly(poles_z))
    b = np.poly(-np.ones(n))
    b = b * (a.sum() / b.sum())
    return b, a


class Butterworth:
    """Causal streaming low-pass (transposed direct form II)."""

    def __init__(self, spec: ButterworthSpec):
        self.spec = spec
        self.b, self.a = butterworth_coefficients(spec)
        self._z: Optional[np.ndarray] = None

    def reset(self, value: float) -> None:
        """Set the internal state to the steady state for a constant ``value``."""
        b, a = self.b, self.a
        n = len(a) - 1
        # steady state of z[i] = sum_{j>i} (b[j] - a[j]) * value
        z = np.empty(n)
        for i in range(n):
            z[i] = np.sum(b[i + 1:] - a[i + 1:]) * value
        self._z = z

    def filter_step(self, sample: float) -> float:
        if self._z is None:
            self.reset(sample)
        b, a, z = self.b, self.a, self._z
        y = b[0] * sample + z[0] if len(z) else b[0] * sample
        n = len(z)
        for i in range(n - 1):
            z[i] = b[i + 1] * sample + z[i + 1] - a[i + 1] * y
        if n:
            z[n - 1] = b[n] * sample - a[n] * y
        return float(y)

    def filter(self, samples) -> np.ndarray:
        return np.array([self.filter_step(float(x)) for x in samples])


def butterworth(spec: ButterworthSpec) -> Butterworth:
    return Butterworth(spec)


# --- coordinates ------------------------------------------------------------

@dataclass(frozen=True)
class SphericalCoord:
    rho_m: float
    pan_total_rad: float
    tilt_total_rad: float

    def __post_init__(self):
        if self.rho_m < 0:
            raise ValueError("rho_m must be non-negative")


@dataclass(frozen=True)
class CartesianCoord:
    x_m: float
    y_m: float
    z_m: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.z_m])


def spherical_to_cartesian(coord: SphericalCoord) -> CartesianCoord:
    """x up, y right, z forward at zero pan and tilt."""
    r, p, t = coord.rho_m, coord.pan_total_rad, coord.tilt_total_rad
    return CartesianCoord(r * math.sin(t), r * math.cos(t) * math.sin(p), r * math.cos(t) * math.cos(p))


def cartesian_to_spherical(point) -> SphericalCoord:
    x, y, z = (float(c) for c in point)
    rho = math.sqrt(x * x + y * y + z * z)
    if rho == 0.0:
        return SphericalCoord(0.0, 0.0, 0.0)
    return SphericalCoord(rho, math.atan2(y, z), math.asin(max(-1.0, min(1.0, x / rho))))
