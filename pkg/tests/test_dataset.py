import math

import cv2
import numpy as np
import pytest
from scipy import stats

from ptzloc.dataset import (CANVAS, AugmentParams, DatasetManifest, SampleSpec, arc_mask,
                            denormalise, ellipse_extent, generate, list_backgrounds, make_specs,
                            read_labels, render, sample_spec)
from ptzloc.errors import BackgroundUnreadable, NoBackgrounds
from ptzloc.geom import EllipseParams


def test_semi_major_marginal_is_uniform(background_paths):
    rng = np.random.default_rng(0)
    a = np.array([sample_spec(rng, background_paths).ellipse.a for _ in range(10_000)], dtype=int)
    counts = np.bincount(a - 20, minlength=121)
    assert len(counts) == 121
    assert stats.chisquare(counts).pvalue > 0.01


def test_sampling_is_deterministic(background_paths):
    a = [sample_spec(np.random.default_rng(5), background_paths) for _ in range(3)]
    b = [sample_spec(np.random.default_rng(5), background_paths) for _ in range(3)]
    assert a == b


def test_sampled_fields_in_range(background_paths):
    rng = np.random.default_rng(1)
    for _ in range(2000):
        s = sample_spec(rng, background_paths)
        r, g, b = s.green_rgb
        assert 150 <= g <= 255 and 0 <= r <= g - 15 and 0 <= b <= g - 15
        e = s.ellipse
        assert 20 <= e.a <= 140 and 0 <= e.b <= e.a
        ex, ey = ellipse_extent(e.a, e.b, e.phi)
        assert ex - 1e-9 <= e.u <= CANVAS - 1 - ex + 1e-9
        assert ey - 1e-9 <= e.v <= CANVAS - 1 - ey + 1e-9
        assert -math.pi / 2 <= s.arc_start_rad <= 0 and math.pi <= s.arc_end_rad <= 1.5 * math.pi


def test_no_backgrounds():
    with pytest.raises(NoBackgrounds):
        sample_spec(np.random.default_rng(0), [])


def test_empty_background_dir(tmp_path):
    with pytest.raises(NoBackgrounds):
        list_backgrounds(tmp_path)


def test_unreadable_background(tmp_path):
    bad = tmp_path / "broken.png"
    bad.write_bytes(b"not an image")
    spec = sample_spec(np.random.default_rng(0), [str(bad)])
    with pytest.raises(BackgroundUnreadable):
        render(spec)


def _spec(path, has_marker=True, ellipse=EllipseParams(150.0, 150.0, 50.0, 50.0, 0.0),
          start=0.0, end=2 * math.pi):
    return SampleSpec(has_marker, path, (20, 200, 20), ellipse, start, end, 1.0, 3)


def test_negative_gets_no_stroke_but_same_augmentation(background_paths):
    neg = render(_spec(background_paths[0], has_marker=False))
    pos = render(_spec(background_paths[0], has_marker=True))
    assert neg.shape == (CANVAS, CANVAS, 3) and neg.dtype == np.uint8
    ring = arc_mask(EllipseParams(150.0, 150.0, 50.0, 50.0, 0.0), 0, 2 * math.pi, 1) > 0
    outside = cv2.dilate(ring.astype(np.uint8), np.ones((15, 15), np.uint8)) == 0
    assert np.array_equal(neg[outside], pos[outside])
    assert not np.array_equal(neg[ring], pos[ring])


def test_full_circle_pixel_count():
    mask = arc_mask(EllipseParams(150.0, 150.0, 50.0, 50.0, 0.0), 0.0, 2 * math.pi, stroke_px=1)
    assert np.count_nonzero(mask) == pytest.approx(2 * math.pi * 50, rel=0.15)


def test_semicircle_covers_one_half():
    e = EllipseParams(150.0, 150.0, 50.0, 50.0, 0.0)
    mask = arc_mask(e, 0.0, math.pi, stroke_px=1) > 0
    ys, _ = np.nonzero(mask)
    # angles run from +u towards +v, so 0..pi is the half with v >= centre
    assert ys.min() >= 149
    full = arc_mask(e, 0.0, 2 * math.pi, stroke_px=1) > 0
    lower = full.copy()
    lower[:150] = False
    assert np.count_nonzero(mask & lower) >= 0.95 * np.count_nonzero(lower)


def test_generate_ratio_and_label_round_trip(tmp_path, background_paths):
    labels_path = generate(DatasetManifest(total=10, positives=5, seed=2), background_paths, tmp_path)
    recs = read_labels(labels_path)
    assert len(recs) == 10
    assert sum(r["m"] for r in recs) == 5
    assert len(list((tmp_path / "images").glob("*.png"))) == 10
    aug = AugmentParams()
    specs = make_specs(DatasetManifest(total=10, positives=5, seed=2), background_paths, aug)
    for spec, rec in zip(specs, recs):
        assert rec["m"] == int(spec.has_marker)
        if not rec["m"]:
            continue
        stroked = arc_mask(spec.ellipse, spec.arc_start_rad, spec.arc_end_rad, aug.stroke_px) > 0
        ellipse, start, end = denormalise(rec)
        redrawn = arc_mask(ellipse, start, end, aug.stroke_px) > 0
        assert np.count_nonzero(stroked & redrawn) >= 0.95 * np.count_nonzero(stroked)
        img = cv2.imread(str(tmp_path / rec["file"]))
        assert img.shape == (CANVAS, CANVAS, 3)


def test_labels_are_normalised(tmp_path, background_paths):
    recs = read_labels(generate(DatasetManifest(total=40, seed=4), background_paths, tmp_path))
    for r in recs:
        assert r["m"] in (0, 1)
        for k in ("u", "v", "a", "b"):
            assert 0.0 <= r[k] <= 1.0
        assert -1.0 <= r["phi"] <= 1.0


def test_default_manifest_size():
    m = DatasetManifest()
    assert (m.total, m.positives) == (9000, 4500)


def test_manifest_rejects_bad_ratio():
    with pytest.raises(ValueError):
        DatasetManifest(total=10, positives=11)


def test_threaded_render_matches_serial(tmp_path, background_paths):
    a = generate(DatasetManifest(total=12, seed=8), background_paths, tmp_path / "a", workers=1)
    b = generate(DatasetManifest(total=12, seed=8), background_paths, tmp_path / "b", workers=4)
    assert a.read_bytes() == b.read_bytes()
    for i in range(12):
        name = f"images/{i:06d}.png"
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
