import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from ptzloc.camera import (CameraState, PanTiltCommand, ZoomLens, ZoomTable, apply_command,
                           intrinsics_for, make_pan_tilt_command, pixel_offset_to_angles,
                           pixel_to_offsets, quantise, zoom_for_range, zoom_step)
from ptzloc.errors import OffsetOutOfRange

STEP = math.radians(0.02)


def test_centred_target_needs_no_rotation():
    assert pixel_offset_to_angles(0.0, 0.0, intrinsics_for(1920, 1080, 54)) == (0.0, 0.0)


def test_frame_edge_maps_to_half_fov():
    tp, _ = pixel_offset_to_angles(0.5, 0.0, intrinsics_for(1920, 1080, 54))
    assert math.degrees(tp) == pytest.approx(27.0, abs=1e-12)
    cam = intrinsics_for(1920, 1080, 54)
    _, tt = pixel_offset_to_angles(0.0, 0.5, cam)
    assert tt == pytest.approx(cam.vfov_rad / 2, abs=1e-12)


def test_quarter_offset_at_wide_fov():
    tp, _ = pixel_offset_to_angles(0.25, 0.0, intrinsics_for(1920, 1080, 90))
    assert math.degrees(tp) == pytest.approx(26.565, abs=1e-3)


def test_offset_out_of_range():
    with pytest.raises(OffsetOutOfRange):
        pixel_offset_to_angles(0.51, 0.0, intrinsics_for(1920, 1080, 54))


def test_pixel_to_offsets_signs():
    cam = intrinsics_for(1920, 1080, 54)
    du, dv = pixel_to_offsets(1920, 0, cam)
    assert (du, dv) == (0.5, 0.5)


def test_command_dead_band():
    assert make_pan_tilt_command(math.radians(0.5), math.radians(0.5)) is None
    assert make_pan_tilt_command(0.0, 0.0) is None


def test_command_scales_and_zeroes_small_axis():
    cmd = make_pan_tilt_command(math.radians(4.0), 0.0, s=4.0)
    assert cmd.mu_pan == pytest.approx(1.0)
    assert cmd.mu_tilt == 0.0


def test_command_symmetric_in_sign():
    cmd = make_pan_tilt_command(math.radians(-4.0), math.radians(-2.0), s=4.0)
    assert cmd.mu_pan == pytest.approx(-1.0)
    assert cmd.mu_tilt == pytest.approx(-0.5)


@given(p=st.floats(-30, 30), t=st.floats(-30, 30), s=st.floats(1, 10), thr=st.floats(0, 5))
def test_command_per_axis_threshold(p, t, s, thr):
    cmd = make_pan_tilt_command(math.radians(p), math.radians(t), s, thr)
    big_p = abs(math.degrees(math.radians(p))) > thr
    big_t = abs(math.degrees(math.radians(t))) > thr
    if not (big_p or big_t):
        assert cmd is None
        return
    assert cmd.mu_pan == (pytest.approx(p / s) if big_p else 0.0)
    assert cmd.mu_tilt == (pytest.approx(t / s) if big_t else 0.0)


def test_zoom_step_examples():
    assert zoom_step(100, 448, 3, 5.0, 0.0) == (4, 5.0)
    assert zoom_step(270, 448, 0, 5.0, 0.0) == (0, 5.0)
    for state in range(8):
        assert zoom_step(150, 448, state, 5.0, 0.0)[0] == state


def test_zoom_step_rate_limited():
    assert zoom_step(10, 448, 3, 4.5, 4.0) == (3, 4.0)
    assert zoom_step(10, 448, 3, 5.0, 4.0) == (4, 5.0)


@given(d=st.floats(1, 1000), state=st.integers(0, 7), now=st.floats(0, 100), last=st.floats(0, 100))
def test_zoom_step_invariants(d, state, now, last):
    new, checked = zoom_step(d, 448, state, now, last)
    assert 0 <= new <= 7
    assert abs(new - state) <= 1
    if now - last < 1.0:
        assert (new, checked) == (state, last)
    else:
        assert checked == now


def test_command_waits_for_latency():
    s0 = CameraState(command_latency_s=0.13)
    s1 = apply_command(s0, PanTiltCommand(1.0, 0.0), 0.1)
    assert s1.pan_rad == 0.0
    s2 = apply_command(s1, None, 0.05)
    assert math.degrees(s2.pan_rad) == pytest.approx(1.0)


def test_quantised_exact_multiple():
    s = apply_command(CameraState(command_latency_s=0.0), PanTiltCommand(1.0, 0.0), 0.1)
    assert s.pan_rad / STEP == pytest.approx(50.0, abs=1e-9)


def test_quantised_rounds_to_nearest_step():
    s = apply_command(CameraState(command_latency_s=0.0), PanTiltCommand(0.03, 0.011), 0.1)
    assert round(s.pan_rad / STEP) in (1, 2)
    assert s.pan_rad / STEP == pytest.approx(round(s.pan_rad / STEP), abs=1e-9)
    assert s.tilt_rad / STEP == pytest.approx(1.0, abs=1e-9)


@given(mu=st.floats(-10, 10))
def test_quantisation_error_within_half_step(mu):
    q = quantise(math.radians(mu), STEP)
    assert abs(q - math.radians(mu)) <= STEP / 2 + 1e-15
    assert q / STEP == pytest.approx(round(q / STEP), abs=1e-6)


def test_apply_command_rejects_non_positive_dt():
    with pytest.raises(ValueError):
        apply_command(CameraState(), None, 0.0)


def test_zoom_table_must_decrease():
    with pytest.raises(ValueError):
        ZoomTable((10.0, 20.0))


def test_zoom_lens_settles_in_transition_time():
    table = ZoomTable()
    lens = ZoomLens(table, 0, transition_s=1.0)
    values = [lens.advance(3, 0.125) for _ in range(8)]
    assert values[-1] == table.hfov_by_state[3]
    assert all(b <= a for a, b in zip(values, values[1:]))
    assert values[3] == pytest.approx(0.5 * (table.hfov_by_state[0] + table.hfov_by_state[3]))


def test_zoom_for_range_lands_in_band():
    table = ZoomTable()
    for rng_m in (3.0, 5.0, 10.0, 20.0, 30.0):
        k = zoom_for_range(table, 0.3, rng_m, 1920, 448)
        d = 0.3 * 1920 / (2 * rng_m * math.tan(0.5 * table.hfov_rad(k)))
        assert 448 / 4 <= d <= 7 * 448 / 12
