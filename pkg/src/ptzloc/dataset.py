"""Domain-randomised synthetic images of the marker for detector training.

Each positive image carries an elliptical arc in a shade of green over a
random background; negatives go through the same augmentation without the
arc. Output layout::

    <out>/images/000000.png
    <out>/labels.jsonl

Label geometry is normalised by the canvas size (``phi`` by pi).

A red or blue physical marker can be fed to a detector trained on this data
by swapping that channel with green before inference.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import cv2
import numpy as np

from .errors import BackgroundUnreadable, NoBackgrounds
from .geom import EllipseParams

CANVAS = 299
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp")
_SHIFT = 4  # cv2 sub-pixel bits


@dataclass(frozen=True)
class AugmentParams:
    stroke_px: int = 3
    stroke_blur_sigma: float = 1.0
    brightness_range: tuple[float, float] = (0.4, 1.3)
    speckle_max: int = 60
    cutout_max: int = 4
    cutout_size: tuple[int, int] = (10, 80)
    blur_prob: float = 0.3
    blur_sigma_range: tuple[float, float] = (0.5, 1.5)

    def __post_init__(self):
        if self.stroke_px < 1:
            raise ValueError("stroke_px must be >= 1")
        lo, hi = self.brightness_range
        if not 0 < lo <= hi:
            raise ValueError("brightness_range must be positive and ordered")
        if not 1 <= self.cutout_size[0] <= self.cutout_size[1]:
            raise ValueError("cutout_size must be ordered and positive")
        if not 0.0 <= self.blur_prob <= 1.0:
            raise ValueError("blur_prob must lie in [0, 1]")


@dataclass(frozen=True)
class SampleSpec:
    has_marker: bool
    background_path: str
    green_rgb: tuple[int, int, int]
    ellipse: EllipseParams
    arc_start_rad: float
    arc_end_rad: float
    brightness_factor: float
    distractor_seed: int


@dataclass(frozen=True)
class DatasetManifest:
    total: int = 9000
    positives: Optional[int] = None
    image_dir: str = "images"
    label_file: str = "labels.jsonl"
    seed: int = 0

    def __post_init__(self):
        if self.total < 0:
            raise ValueError("total must be non-negative")
        if self.positives is None:
            object.__setattr__(self, "positives", self.total // 2)
        if not 0 <= self.positives <= self.total:
            raise ValueError("positives must lie in [0, total]")


def list_backgrounds(directory) -> list[str]:
    d = Path(directory)
    if not d.is_dir():
        raise NoBackgrounds(f"background directory {d} does not exist")
    paths = sorted(str(p) for p in d.iterdir() if p.suffix.lower() in IMAGE_EXTS)
    if not paths:
        raise NoBackgrounds(f"no images found in {d}")
    return paths


def ellipse_extent(a: float, b: float, phi: float) -> tuple[float, float]:
    """Half-width and half-height of the axis-aligned box around an ellipse."""
    c, s = math.cos(phi), math.sin(phi)
    return math.sqrt((a * c) ** 2 + (b * s) ** 2), math.sqrt((a * s) ** 2 + (b * c) ** 2)


def sample_spec(rng: np.random.Generator, backgrounds: Sequence[str],
                has_marker: Optional[bool] = None,
                aug: AugmentParams = AugmentParams()) -> SampleSpec:
    """Draw one sample description. Every field is drawn even for negatives."""
    if not backgrounds:
        raise NoBackgrounds("at least one background image is required")
    bg = backgrounds[int(rng.integers(len(backgrounds)))]
    g = int(rng.integers(150, 256))
    r = int(rng.integers(0, g - 15 + 1))
    b_ch = int(rng.integers(0, g - 15 + 1))
    a = int(rng.integers(20, 141))
    b = int(rng.integers(0, a + 1))
    phi = float(rng.uniform(-math.pi, math.pi))
    ex, ey = ellipse_extent(a, b, phi)
    limit = CANVAS - 1
    u = float(rng.uniform(ex, limit - ex))
    v = float(rng.uniform(ey, limit - ey))
    arc_start = float(rng.uniform(-0.5 * math.pi, 0.0))
    arc_end = float(rng.uniform(math.pi, 1.5 * math.pi))
    brightness = float(rng.uniform(*aug.brightness_range))
    seed = int(rng.integers(0, 2 ** 31 - 1))
    flag = rng.random() < 0.5
    if has_marker is not None:
        flag = bool(has_marker)
    return SampleSpec(flag, bg, (r, g, b_ch), EllipseParams(u, v, float(a), float(b), phi),
                      arc_start, arc_end, brightness, seed)


def arc_mask(ellipse: EllipseParams, arc_start: float, arc_end: float, stroke_px: int = 1,
             antialias: bool = False, size: int = CANVAS) -> np.ndarray:
    """Float mask in [0, 1] of the stroked elliptical arc."""
    mask = np.zeros((size, size), dtype=np.float32)
    k = 1 << _SHIFT
    cv2.ellipse(mask,
                (int(round(ellipse.u * k)), int(round(ellipse.v * k))),
                (int(round(ellipse.a * k)), int(round(ellipse.b * k))),
                math.degrees(ellipse.phi), math.degrees(arc_start), math.degrees(arc_end),
                1.0, stroke_px, cv2.LINE_AA if antialias else cv2.LINE_8, _SHIFT)
    return mask


@lru_cache(maxsize=64)
def _load_background(path: str) -> np.ndarray:
    img = cv2.imread(path, cv2.IMREAD_COLOR)
    if img is None:
        raise BackgroundUnreadable(f"cannot read background image {path}")
    img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    h, w = img.shape[:2]
    scale = CANVAS / min(h, w)
    if scale != 1.0:
        img = cv2.resize(img, (max(CANVAS, round(w * scale)), max(CANVAS, round(h * scale))),
                         interpolation=cv2.INTER_AREA if scale < 1 else cv2.INTER_LINEAR)
    img.setflags(write=False)
    return img


def render(spec: SampleSpec, aug: AugmentParams = AugmentParams()) -> np.ndarray:
    """299x299 RGB uint8 image for ``spec``."""
    rng = np.random.default_rng(spec.distractor_seed)
    bg = _load_background(spec.background_path)
    h, w = bg.shape[:2]
    y0 = int(rng.integers(0, h - CANVAS + 1))
    x0 = int(rng.integers(0, w - CANVAS + 1))
    img = bg[y0:y0 + CANVAS, x0:x0 + CANVAS].astype(np.float32)

    if spec.has_marker:
        mask = arc_mask(spec.ellipse, spec.arc_start_rad, spec.arc_end_rad, aug.stroke_px, antialias=True)
        if aug.stroke_blur_sigma > 0:
            mask = cv2.GaussianBlur(mask, (0, 0), aug.stroke_blur_sigma)
            mask = np.clip(mask / max(mask.max(), 1e-6), 0.0, 1.0)
        green = np.asarray(spec.green_rgb, dtype=np.float32)
        img = img * (1.0 - mask[..., None]) + green * mask[..., None]

    img *= spec.brightness_factor

    n_speckle = int(rng.integers(0, aug.speckle_max + 1))
    ys = rng.integers(0, CANVAS, n_speckle)
    xs = rng.integers(0, CANVAS, n_speckle)
    gs = rng.integers(150, 256, n_speckle)
    rs = rng.integers(0, gs - 14)
    bs = rng.integers(0, gs - 14)
    img[ys, xs] = np.stack([rs, gs, bs], axis=1)

    n_cut = int(rng.integers(0, aug.cutout_max + 1))
    lo, hi = aug.cutout_size
    for _ in range(n_cut):
        ch, cw = int(rng.integers(lo, hi + 1)), int(rng.integers(lo, hi + 1))
        cy, cx = int(rng.integers(0, CANVAS - ch + 1)), int(rng.integers(0, CANVAS - cw + 1))
        if rng.random() < 0.5:
            img[cy:cy + ch, cx:cx + cw] = rng.uniform(0, 255, (ch, cw, 3))
        else:
            img[cy:cy + ch, cx:cx + cw] = 0.0

    if rng.random() < aug.blur_prob:
        img = cv2.GaussianBlur(img, (0, 0), float(rng.uniform(*aug.blur_sigma_range)))

    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def label_record(index: int, spec: SampleSpec, image_dir: str = "images") -> dict:
    rec = {"file": f"{image_dir}/{index:06d}.png", "m": int(spec.has_marker)}
    if spec.has_marker:
        e = spec.ellipse
        rec.update(u=e.u / CANVAS, v=e.v / CANVAS, a=e.a / CANVAS, b=e.b / CANVAS,
                   phi=e.phi / math.pi, arc_start=spec.arc_start_rad, arc_end=spec.arc_end_rad)
    else:
        rec.update(u=0.0, v=0.0, a=0.0, b=0.0, phi=0.0, arc_start=0.0, arc_end=0.0)
    return rec


def denormalise(rec: dict) -> tuple[EllipseParams, float, float]:
    """Pixel-space ellipse and arc angles from a label record."""
    return (EllipseParams(rec["u"] * CANVAS, rec["v"] * CANVAS, rec["a"] * CANVAS,
                          rec["b"] * CANVAS, rec["phi"] * math.pi),
            rec["arc_start"], rec["arc_end"])


def make_specs(manifest: DatasetManifest, backgrounds: Sequence[str],
               aug: AugmentParams = AugmentParams()) -> list[SampleSpec]:
    rng = np.random.default_rng(manifest.seed)
    flags = np.zeros(manifest.total, dtype=bool)
    flags[:manifest.positives] = True
    flags = rng.permutation(flags)
    return [sample_spec(rng, backgrounds, bool(f), aug) for f in flags]


def generate(manifest: DatasetManifest, backgrounds: Sequence[str], out_dir,
             aug: AugmentParams = AugmentParams(), workers: Optional[int] = None) -> Path:
    """Render and write the dataset. Returns the label file path.

    Rendering may run on a thread pool; labels are always written in index
    order.
    """
    if not backgrounds:
        raise NoBackgrounds("at least one background image is required")
    out = Path(out_dir)
    img_dir = out / manifest.image_dir
    img_dir.mkdir(parents=True, exist_ok=True)
    specs = make_specs(manifest, backgrounds, aug)

    def work(i):
        img = render(specs[i], aug)
        path = img_dir / f"{i:06d}.png"
        if not cv2.imwrite(str(path), cv2.cvtColor(img, cv2.COLOR_RGB2BGR)):
            raise OSError(f"failed to write {path}")
        return i

    n_workers = workers or 1
    if n_workers > 1:
        with ThreadPoolExecutor(n_workers) as pool:
            list(pool.map(work, range(len(specs))))
    else:
        for i in range(len(specs)):
            work(i)

    label_path = out / manifest.label_file
    with open(label_path, "w", encoding="utf-8") as fh:
        for i, spec in enumerate(specs):
            fh.write(json.dumps(label_record(i, spec, manifest.image_dir)) + "\n")
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2)
        fh.write("\n")
    return label_path


def read_labels(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def default_workers() -> int:
    return max(1, min(8, os.cpu_count() or 1))
