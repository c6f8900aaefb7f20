"""Circle-to-ellipse projection and range from apparent marker size.

Camera frame: z along the optical axis, x up, y right. A camera-frame point
(x, y, z) lands on pixel ``u = cu + f*y/z``, ``v = cv - f*x/z`` (image v grows
downwards). Ellipse angles ``phi`` are measured in the image from the +u axis
towards +v, the same sense OpenCV uses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .camera import CameraIntrinsics
from .errors import DegenerateConic, NonPositiveDiameter, PoseBehindCamera


@dataclass(frozen=True)
class EllipseParams:
    u: float
    v: float
    a: float
    b: float
    phi: float

    def __post_init__(self):
        if not (self.a >= self.b >= 0):
            raise ValueError(f"need a >= b >= 0, got a={self.a}, b={self.b}")
        if not (-math.pi <= self.phi <= math.pi):
            raise ValueError(f"phi={self.phi} outside [-pi, pi]")

    @property
    def diameter(self) -> float:
        return 2.0 * self.a


@dataclass(frozen=True)
class MarkerSpec:
    diameter_m: float = 0.30

    def __post_init__(self):
        if not self.diameter_m > 0:
            raise ValueError("diameter_m must be positive")


@dataclass(frozen=True)
class CirclePose3D:
    center: tuple[float, float, float]
    normal: tuple[float, float, float]
    radius_m: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-9:
            raise ValueError("normal must have unit length")
        if not self.radius_m > 0:
            raise ValueError("radius_m must be positive")


def _fold_axis_angle(phi: float) -> float:
    """Map an undirected axis angle into (-pi/2, pi/2]."""
    phi = math.fmod(phi, math.pi)
    if phi <= -0.5 * math.pi:
        phi += math.pi
    elif phi > 0.5 * math.pi:
        phi -= math.pi
    return phi


def project_point(p, camera: CameraIntrinsics) -> tuple[float, float]:
    x, y, z = p
    if z <= 0:
        raise PoseBehindCamera(f"point depth {z} is not in front of the camera")
    f = camera.focal_px
    cu, cv = camera.center
    return cu + f * y / z, cv - f * x / z


def project_circle_orthogonal(pose: CirclePose3D, camera: CameraIntrinsics) -> EllipseParams:
    """Scaled-orthographic image of a circle.

    The principal circle keeps the true radius scaled by ``f / depth``; the
    minor axis shrinks by the cosine between the circle normal and the line
    of sight to the centre.
    """
    c = np.asarray(pose.center, dtype=float)
    if c[2] <= 0:
        raise PoseBehindCamera(f"circle centre depth {c[2]} is not in front of the camera")
    u, v = project_point(c, camera)
    a = camera.focal_px * pose.radius_m / c[2]
    n = np.asarray(pose.normal, dtype=float)
    sight = c / np.linalg.norm(c)
    cos_view = float(np.dot(n, sight))
    b = a * min(abs(cos_view), 1.0)
    # the normal's component across the line of sight foreshortens the
    # circle; its image direction is the minor axis
    n_perp = n - cos_view * sight
    if np.linalg.norm(n_perp) < 1e-12:
        phi = 0.0
    else:
        x, y, z = c
        dx, dy, dz = n_perp
        # derivative of (y/z, -x/z) along n_perp
        du = (dy * z - y * dz) / (z * z)
        dv = -(dx * z - x * dz) / (z * z)
        phi = _fold_axis_angle(math.atan2(du, -dv))
    return EllipseParams(float(u), float(v), float(a), float(b), phi)


def circle_points(pose: CirclePose3D, n: int = 128) -> np.ndarray:
    """``n`` points evenly spaced on the 3D circle, shape (n, 3)."""
    normal = np.asarray(pose.normal, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(normal, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(normal, e1)
    t = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    return (np.asarray(pose.center, dtype=float)
            + pose.radius_m * (np.cos(t)[:, None] * e1 + np.sin(t)[:, None] * e2))


def fit_conic(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Algebraic least-squares conic through points.

    Returns ``(A, B, C, D, E, F)`` with ``A u^2 + B uv + C v^2 + D u + E v + F = 0``.
    Points are centred and scaled first; the singular vector of the smallest
    singular value is mapped back to pixel coordinates.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    mu, mv = u.mean(), v.mean()
    s = math.sqrt(2.0) / max(np.sqrt(((u - mu) ** 2 + (v - mv) ** 2).mean()), 1e-300)
    x = (u - mu) * s
    y = (v - mv) * s
    design = np.column_stack([x * x, x * y, y * y, x, y, np.ones_like(x)])
    _, _, vt = np.linalg.svd(design, full_matrices=False)
    a, b, c, d, e, f = vt[-1]
    # undo x = s(u - mu), y = s(v - mv)
    A = a * s * s
    B = b * s * s
    C = c * s * s
    D = -2 * A * mu - B * mv + d * s
    E = -2 * C * mv - B * mu + e * s
    F = (A * mu * mu + B * mu * mv + C * mv * mv
         - d * s * mu - e * s * mv + f)
    return np.array([A, B, C, D, E, F])


def conic_to_ellipse(coeffs) -> EllipseParams:
    A, B, C, D, E, F = coeffs
    if B * B - 4 * A * C >= 0:
        raise DegenerateConic("fitted conic is not an ellipse")
    m = np.array([[A, B / 2], [B / 2, C]])
    center = np.linalg.solve(m, [-D / 2, -E / 2])
    f0 = F + 0.5 * (D * center[0] + E * center[1])
    evals, evecs = np.linalg.eigh(m)
    axes_sq = -f0 / evals
    if np.any(axes_sq <= 0):
        raise DegenerateConic("conic has no real points")
    axes = np.sqrt(axes_sq)
    i_major = int(np.argmax(axes))
    major_dir = evecs[:, i_major]
    phi = _fold_axis_angle(math.atan2(major_dir[1], major_dir[0]))
    return EllipseParams(float(center[0]), float(center[1]),
                         float(axes.max()), float(axes.min()), phi)


def project_circle_perspective(pose: CirclePose3D, camera: CameraIntrinsics,
                               n_samples: int = 128) -> EllipseParams:
    """Exact pinhole image of the circle, recovered by conic fitting."""
    if n_samples < 64:
        raise ValueError("need at least 64 samples")
    if pose.center[2] <= 0:
        raise PoseBehindCamera(f"circle centre depth {pose.center[2]} is not in front of the camera")
    pts = circle_points(pose, n_samples)
    if np.any(pts[:, 2] <= 0):
        raise PoseBehindCamera("part of the circle is behind the camera")
    f = camera.focal_px
    cu, cv = camera.center
    u = cu + f * pts[:, 1] / pts[:, 2]
    v = cv - f * pts[:, 0] / pts[:, 2]
    return conic_to_ellipse(fit_conic(u, v))


def estimate_range(marker: MarkerSpec, d_obs_px: float, h_px: int, hfov_rad: float) -> float:
    """Distance to a marker of known diameter from its observed diameter in pixels."""
    if not d_obs_px > 0:
        raise NonPositiveDiameter(f"observed diameter {d_obs_px} must be positive")
    if not 0.0 < hfov_rad < math.pi:
        raise ValueError("hfov_rad must lie in (0, pi)")
    return marker.diameter_m * h_px / (2.0 * d_obs_px) / math.tan(0.5 * hfov_rad)


def is_small_central(ellipse: EllipseParams, camera: CameraIntrinsics,
                     max_size_frac: float = 0.05, central_frac: float = 0.10) -> bool:
    """True when the ellipse is small and near the frame centre.

    ``a`` must stay under ``max_size_frac`` of the frame width and the
    centroid inside the central box spanning ``central_frac`` of each
    dimension.
    """
    cu, cv = camera.center
    return (ellipse.a < max_size_frac * camera.h_px
            and abs(ellipse.u - cu) <= 0.5 * central_frac * camera.h_px
            and abs(ellipse.v - cv) <= 0.5 * central_frac * camera.v_px)
