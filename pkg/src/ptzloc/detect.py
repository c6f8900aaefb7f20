"""Detection contract, sliding-window ROIs, the training loss, and a simulated detector.

The simulated detector stands in for the CNN. Its size error grows with the
magnitude of the angle error it injects, so |phi| carries information about
how wrong a detection is.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.stats import norm

from .errors import FrameTooSmall, InvalidNormalisation
from .geom import EllipseParams

BCE_EPS = 1e-7


@dataclass(frozen=True)
class Detection:
    present: bool
    ellipse: Optional[EllipseParams] = None
    roi_origin: tuple[int, int] = (0, 0)
    confidence: float = 1.0

    def __post_init__(self):
        if self.present:
            if self.ellipse is None:
                raise ValueError("a present detection needs an ellipse")
            e = self.ellipse
            if not all(math.isfinite(x) for x in (e.u, e.v, e.a, e.b, e.phi)):
                raise ValueError("ellipse fields must be finite")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must lie in [0, 1]")


@dataclass(frozen=True)
class RoiWindowLayout:
    frame_w: int = 1920
    frame_h: int = 1080
    window: int = 448
    overlap: int = 50

    def __post_init__(self):
        if not self.window > self.overlap >= 0:
            raise ValueError("need window > overlap >= 0")


def _axis_origins(length: int, window: int, stride: int) -> list[int]:
    origins = list(range(0, length - window, stride))
    origins.append(length - window)
    return origins


def windows(layout: RoiWindowLayout) -> list[tuple[int, int]]:
    """ROI top-left corners, row-major; the last window on each axis is flush with the frame edge."""
    if layout.frame_w < layout.window or layout.frame_h < layout.window:
        raise FrameTooSmall(
            f"frame {layout.frame_w}x{layout.frame_h} smaller than window {layout.window}")
    stride = layout.window - layout.overlap
    xs = _axis_origins(layout.frame_w, layout.window, stride)
    ys = _axis_origins(layout.frame_h, layout.window, stride)
    return [(x, y) for y in ys for x in xs]


def scan_order(origins: list[tuple[int, int]], window: int,
               previous: Optional[tuple[float, float]]) -> list[tuple[int, int]]:
    """Windows sorted by distance from their centre to the previous detection.

    Ties and the no-history case keep row-major order.
    """
    if previous is None:
        return list(origins)
    px, py = previous
    half = 0.5 * window
    return sorted(origins, key=lambda o: (o[0] + half - px) ** 2 + (o[1] + half - py) ** 2)


# --- loss ---------------------------------------------------------------

@dataclass(frozen=True)
class LossWeights:
    mu1: float = 0.1
    mu2: float = 10.0
    mu3: float = 10.0
    mu4: float = 5.0
    mu5: float = 1.0

    def __post_init__(self):
        if min(self.mu1, self.mu2, self.mu3, self.mu4, self.mu5) < 0:
            raise ValueError("loss weights must be non-negative")


def angular_loss(phi: float, phi_hat: float) -> float:
    """Absolute angle difference wrapped into [0, pi]; -pi and +pi coincide exactly."""
    return abs(math.remainder(phi - phi_hat, 2.0 * math.pi))


def bce(m: float, p: float) -> float:
    """Binary cross-entropy with each log argument floored at 1e-7."""
    loss = 0.0
    if m > 0:
        loss -= m * math.log(max(p, BCE_EPS))
    if m < 1:
        loss -= (1.0 - m) * math.log(max(1.0 - p, BCE_EPS))
    return loss


def _check_normalised(det: Detection, who: str) -> None:
    if not 0.0 <= det.confidence <= 1.0:
        raise InvalidNormalisation(f"{who}.confidence outside [0, 1]")
    if det.ellipse is None:
        return
    e = det.ellipse
    for name in ("u", "v", "a", "b"):
        if not 0.0 <= getattr(e, name) <= 1.0:
            raise InvalidNormalisation(f"{who}.{name}={getattr(e, name)} outside [0, 1]")
    if not -1.0 <= e.phi <= 1.0:
        raise InvalidNormalisation(f"{who}.phi={e.phi} outside [-1, 1]")


def total_loss(truth: Detection, pred: Detection, weights: LossWeights = LossWeights()) -> float:
    """Classification plus size-scaled regression loss on normalised labels.

    ``pred.confidence`` is the predicted presence probability. Regression
    terms only count when the marker is truly present and are scaled by the
    ground-truth principal-circle diameter ``d = 2a``. ``phi`` is normalised
    by pi, so the angular term is evaluated on ``phi * pi``.
    """
    _check_normalised(truth, "truth")
    _check_normalised(pred, "pred")
    m = 1.0 if truth.present else 0.0
    loss = weights.mu1 * bce(m, pred.confidence)
    if not truth.present:
        return loss
    if pred.ellipse is None:
        raise InvalidNormalisation("pred.ellipse is required when the marker is present")
    t, p = truth.ellipse, pred.ellipse
    d = 2.0 * t.a
    if d <= 0:
        raise InvalidNormalisation("ground-truth semi-major axis must be positive")
    l_c = math.hypot(t.u - p.u, t.v - p.v)
    loss += (weights.mu2 * l_c / d
             + weights.mu3 * abs(t.a - p.a) / d ** 2
             + weights.mu4 * abs(t.b - p.b) / d ** 2
             + weights.mu5 * angular_loss(t.phi * math.pi, p.phi * math.pi))
    return loss


# --- simulated detector -----------------------------------------------------

@dataclass(frozen=True)
class NoiseModel:
    """Error model of the simulated detector.

    Each detection draws an angle error ``eta``: with probability
    ``hard_rate`` from N(0, sigma_phi_hard), otherwise from N(0, sigma_phi).
    The log size error is ``S * (phi_coupling*|eta| + sigma_axis_frac*|xi|)``
    with a random sign S and xi ~ N(0, 1), plus any slow bias supplied by
    the caller; both semi-axes are scaled by its exponential, so growing
    and shrinking errors of equal magnitude are equally likely.
    """

    sigma_center_px: float = 2.0
    sigma_axis_frac: float = 0.002
    phi_coupling: float = 0.8
    sigma_phi: float = 0.005
    sigma_phi_hard: float = 0.45
    hard_rate: float = 0.01
    false_negative_rate: float = 0.0
    bias_sigma_frac: float = 0.047
    bias_corr_s: float = 5.0
    seed: int = 0

    def __post_init__(self):
        for name in ("sigma_center_px", "sigma_axis_frac", "phi_coupling", "sigma_phi",
                     "sigma_phi_hard", "bias_sigma_frac"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("hard_rate", "false_negative_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if not self.bias_corr_s > 0:
            raise ValueError("bias_corr_s must be positive")

    def pearson_target(self, threshold: float = 0.175) -> Optional[float]:
        """Closed-form Pearson correlation of |phi_hat| and |size error| given |phi_hat| > threshold.

        Assumes a zero true angle and no slow bias, so |phi_hat| = |eta|.
        Uses truncated half-normal moments of each mixture component.
        """
        comps = []
        for p, s in ((1.0 - self.hard_rate, self.sigma_phi), (self.hard_rate, self.sigma_phi_hard)):
            if p <= 0 or s <= 0:
                continue
            alpha = threshold / s
            tail = norm.sf(alpha)
            mass = 2.0 * tail
            if mass <= 0:
                continue
            mills = norm.pdf(alpha) / tail
            m1 = s * mills
            m2 = s * s * (1.0 + alpha * mills)
            comps.append((p * mass, m1, m2))
        total = sum(c[0] for c in comps)
        if total <= 0:
            return None
        ex = sum(w * m1 for w, m1, _ in comps) / total
        ex2 = sum(w * m2 for w, _, m2 in comps) / total
        var_x = ex2 - ex * ex
        k = self.phi_coupling
        var_e = k * k * var_x + self.sigma_axis_frac ** 2 * (1.0 - 2.0 / math.pi)
        if var_x <= 0 or var_e <= 0:
            return None
        return k * var_x / math.sqrt(var_x * var_e)


def _wrap(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


def simulate_detection(true_ellipse: EllipseParams, model: NoiseModel, rng: np.random.Generator,
                       size_bias: float = 0.0, roi_origin: tuple[int, int] = (0, 0)) -> Detection:
    """Noisy detection of ``true_ellipse``.

    A fixed number of variates is drawn per call whatever the outcome, so the
    random stream stays aligned across configurations.
    """
    draws = rng.random(3)  # miss, hard, sign
    gauss = rng.standard_normal(4)  # eta, xi, du, dv
    if draws[0] < model.false_negative_rate:
        return Detection(False, None, roi_origin, 1.0)
    sigma_phi = model.sigma_phi_hard if draws[1] < model.hard_rate else model.sigma_phi
    eta = sigma_phi * gauss[0]
    sign = 1.0 if draws[2] < 0.5 else -1.0
    rel = size_bias + sign * (model.phi_coupling * abs(eta) + model.sigma_axis_frac * abs(gauss[1]))
    scale = math.exp(rel)
    a = true_ellipse.a * scale
    b = min(true_ellipse.b * scale, a)
    ellipse = EllipseParams(true_ellipse.u + model.sigma_center_px * gauss[2],
                            true_ellipse.v + model.sigma_center_px * gauss[3],
                            a, b, _wrap(true_ellipse.phi + eta))
    return Detection(True, ellipse, roi_origin, 1.0)


@dataclass
class SimulatedDetector:
    """Stateful wrapper: slow AR(1) size bias plus the sliding-window scan policy."""

    model: NoiseModel
    layout: RoiWindowLayout
    rng: np.random.Generator
    bias: float = 0.0
    previous: Optional[tuple[float, float]] = None
    _origins: list = field(default_factory=list)

    def __post_init__(self):
        self._origins = windows(self.layout)
        self.bias = self.model.bias_sigma_frac * float(self.rng.standard_normal())

    def advance_bias(self, dt: float) -> None:
        rho = math.exp(-dt / self.model.bias_corr_s)
        self.bias = rho * self.bias + self.model.bias_sigma_frac * math.sqrt(1.0 - rho * rho) * float(
            self.rng.standard_normal())

    def detect(self, true_ellipse: Optional[EllipseParams], dt: float) -> Detection:
        """Scan windows for the marker; None for ``true_ellipse`` means it is out of frame."""
        self.advance_bias(dt)
        if true_ellipse is None:
            return Detection(False)
        w = self.layout.window
        for ox, oy in scan_order(self._origins, w, self.previous):
            if ox <= true_ellipse.u < ox + w and oy <= true_ellipse.v < oy + w:
                det = simulate_detection(true_ellipse, self.model, self.rng, self.bias, (ox, oy))
                if det.present:
                    self.previous = (det.ellipse.u, det.ellipse.v)
                    return det
        return Detection(False)
