import hashlib

import numpy as np
import pytest

from gesturetrace import render as rd
from gesturetrace import skeleton as sk
from gesturetrace.synthetic import make_gesture

from oracles import sinusoid_fixture

TOP = rd.ViewPlane.TOP
RIGHT = rd.ViewPlane.RIGHT


def single_tip_sample(points, sample_id="s"):
    """One moving right-index fingertip; everything else absent."""
    tip = sk.JointId(sk.Hand.RIGHT, "finger", sk.Finger.INDEX, 3)
    frames = tuple(
        sk.frame_from_joints(i, {tip: p}) for i, p in enumerate(points)
    )
    return sk.GestureSample(frames=sk.FrameSequence(frames=frames),
                            sample_id=sample_id)


def tiny_config(**overrides):
    defaults = dict(resolution=(64, 64),
                    windows={TOP: rd.Window(-100, -100, 100, 100),
                             RIGHT: rd.Window(-100, 0, 100, 200)},
                    point_radius=2,
                    draw_final_skeleton=False)
    defaults.update(overrides)
    return rd.RenderConfig(**defaults)


# ---------------------------------------------------------------------------
# projection

def test_project_origin_top():
    assert rd.project((0.0, 0.0, 0.0), TOP) == (0.0, 0.0)


def test_project_right_axis_map():
    assert rd.project((120.0, 250.0, -80.0), RIGHT) == (-80.0, 250.0)


def test_project_top_axis_map():
    assert rd.project((120.0, 250.0, -80.0), TOP) == (120.0, 80.0)


def test_project_linearity():
    rng = np.random.default_rng(7)
    for view in (TOP, RIGHT):
        for _ in range(50):
            a, b = rng.normal(size=3), rng.normal(size=3)
            pa = np.array(rd.project(a, view))
            pb = np.array(rd.project(b, view))
            pab = np.array(rd.project(a + b, view))
            assert np.allclose(pab, pa + pb, atol=1e-12)


def test_project_rejects_non_finite():
    with pytest.raises(ValueError):
        rd.project((0.0, float("nan"), 1.0), TOP)


# ---------------------------------------------------------------------------
# world_to_pixel

def test_world_to_pixel_quarter_width_three_quarter_height():
    win = rd.Window(0.0, 0.0, 400.0, 300.0)
    assert rd.world_to_pixel((100.0, 225.0), win, (400, 300)) == (100, 75)


def test_world_to_pixel_center():
    win = rd.Window(-50.0, -50.0, 50.0, 50.0)
    px, py = rd.world_to_pixel((0.0, 0.0), win, (400, 300))
    assert abs(px - 200) <= 1 and abs(py - 150) <= 1


def test_world_to_pixel_min_corner_is_bottom_left():
    win = rd.Window(-50.0, -50.0, 50.0, 50.0)
    assert rd.world_to_pixel((-50.0, -50.0), win, (400, 300)) == (0, 299)
    assert rd.world_to_pixel((50.0, 50.0), win, (400, 300)) == (399, 0)


def test_world_to_pixel_outside_window_clipped():
    win = rd.Window(-50.0, -50.0, 50.0, 50.0)
    assert rd.world_to_pixel((60.0, 0.0), win, (100, 100)) is None


def test_degenerate_window_rejected():
    with pytest.raises(ValueError):
        rd.Window(0.0, 0.0, 0.0, 10.0)


# ---------------------------------------------------------------------------
# render_gesture

def test_two_frame_alpha_ramp_exact_half():
    # alpha_min = 0, T = 2: tau/T gives 0.5 then 1.0. With an even color on
    # black background the earlier disc lands at exactly half the value.
    palette = list(rd.DEFAULT_PALETTE)
    palette[6] = (200, 100, 50)  # right index, all-even components
    cfg = tiny_config(alpha_min=0.0, palette=tuple(palette))
    sample = single_tip_sample([(-50.0, 0.0, 0.0), (50.0, 0.0, 0.0)])
    img = rd.render_gesture(sample, cfg, TOP)
    early = rd.world_to_pixel((-50.0, 0.0), cfg.windows[TOP], cfg.resolution)
    late = rd.world_to_pixel((50.0, 0.0), cfg.windows[TOP], cfg.resolution)
    early_px = img.array[early[1], early[0]]
    late_px = img.array[late[1], late[0]]
    assert late_px.tolist() == [200, 100, 50]
    assert early_px.tolist() == [100, 50, 25]


def test_single_frame_trace_fully_opaque():
    cfg = tiny_config()
    sample = single_tip_sample([(0.0, 0.0, 0.0)])
    img = rd.render_gesture(sample, cfg, TOP)
    px = rd.world_to_pixel((0.0, 0.0), cfg.windows[TOP], cfg.resolution)
    assert img.array[px[1], px[0]].tolist() == list(cfg.palette[6])


def test_render_deterministic_across_runs():
    sample = make_gesture("zigzag", seed=11, frames=40)
    cfg = rd.scaled_config(192, 108)
    a = rd.render_gesture(sample, cfg, TOP)
    b = rd.render_gesture(sample, cfg, TOP)
    assert a.pixels == b.pixels


def test_temporal_monotonicity():
    # a later visit composites at least as intensely as an earlier one
    cfg = tiny_config(alpha_min=0.02)
    pts = [(-80.0 + 16.0 * i, 0.0, 0.0) for i in range(10)]
    sample = single_tip_sample(pts)
    img = rd.render_gesture(sample, cfg, TOP).array.astype(int)
    intensities = []
    for p in pts:
        px = rd.world_to_pixel(rd.project(p, TOP), cfg.windows[TOP],
                               cfg.resolution)
        intensities.append(img[px[1], px[0]].sum())
    assert all(b >= a for a, b in zip(intensities, intensities[1:]))


def test_frame_duplication_touches_same_pixels():
    sample = make_gesture("circle", seed=5, frames=30)
    doubled_frames = []
    for k, f in enumerate(sample.frames):
        doubled_frames.append(sk.Frame(index=2 * k, positions=f.positions,
                                       valid=f.valid))
        doubled_frames.append(sk.Frame(index=2 * k + 1, positions=f.positions,
                                       valid=f.valid))
    doubled = sk.GestureSample(
        frames=sk.FrameSequence(frames=tuple(doubled_frames)),
        sample_id="doubled")
    cfg = rd.scaled_config(128, 128, windows={
        TOP: rd.Window(-320, -320, 320, 320),
        RIGHT: rd.Window(-320, 0, 320, 640)})
    a = rd.render_gesture(sample, cfg, TOP).array
    b = rd.render_gesture(doubled, cfg, TOP).array
    bg = np.array(cfg.background, dtype=np.uint8)
    assert np.array_equal((a != bg).any(axis=2), (b != bg).any(axis=2))


def test_geometry_invariance_along_view_normal():
    base = make_gesture("line", seed=9, frames=25)
    shifted_frames = tuple(
        sk.Frame(index=f.index, positions=f.positions + [0.0, 57.0, 0.0],
                 valid=f.valid)
        for f in base.frames
    )
    shifted = sk.GestureSample(
        frames=sk.FrameSequence(frames=shifted_frames), sample_id="shifted")
    cfg = rd.scaled_config(96, 96, windows={
        TOP: rd.Window(-320, -320, 320, 320),
        RIGHT: rd.Window(-320, 0, 320, 640)})
    assert (rd.render_gesture(base, cfg, TOP).pixels
            == rd.render_gesture(shifted, cfg, TOP).pixels)


def test_all_invalid_fingertips_warns_but_renders():
    palm = sk.JointId(sk.Hand.RIGHT, "palm")
    wrist = sk.JointId(sk.Hand.RIGHT, "wrist")
    frames = tuple(
        sk.frame_from_joints(i, {palm: (0, 50, 0), wrist: (0, 40, -30)})
        for i in range(3)
    )
    sample = sk.GestureSample(frames=sk.FrameSequence(frames=frames),
                              sample_id="tipless")
    cfg = tiny_config(draw_final_skeleton=True)
    with pytest.warns(UserWarning, match="no valid fingertip"):
        img = rd.render_gesture(sample, cfg, TOP)
    assert (img.array != 0).any()  # skeleton still drawn


# ---------------------------------------------------------------------------
# stitch

def test_stitch_left_half_is_first_image():
    sample = make_gesture("line", seed=2, frames=20)
    cfg = tiny_config(draw_final_skeleton=True)
    top = rd.render_gesture(sample, cfg, TOP)
    blank = rd.RasterImage(array=np.zeros_like(top.array))
    out = rd.stitch(top, blank)
    assert np.array_equal(out.array[:, :top.width], top.array)
    assert not out.array[:, top.width:].any()


def test_stitch_widths_add():
    a = rd.RasterImage(array=np.zeros((108, 960, 3), np.uint8))
    b = rd.RasterImage(array=np.zeros((108, 960, 3), np.uint8))
    out = rd.stitch(a, b)
    assert out.width == 1920 and out.height == 108


def test_stitch_height_mismatch():
    a = rd.RasterImage(array=np.zeros((100, 50, 3), np.uint8))
    b = rd.RasterImage(array=np.zeros((99, 50, 3), np.uint8))
    with pytest.raises(ValueError, match="height"):
        rd.stitch(a, b)


# ---------------------------------------------------------------------------
# config validation / misc

def test_config_rejects_tiny_resolution():
    with pytest.raises(ValueError):
        rd.RenderConfig(resolution=(8, 8))


def test_config_rejects_alpha_min_one():
    with pytest.raises(ValueError):
        rd.RenderConfig(alpha_min=1.0)


def test_config_rejects_duplicate_palette():
    palette = (rd.DEFAULT_PALETTE[0],) * 10
    with pytest.raises(ValueError, match="distinct"):
        rd.RenderConfig(palette=palette)


def test_raster_image_buffer_length():
    img = rd.RasterImage(array=np.zeros((10, 20, 3), np.uint8))
    assert len(img.pixels) == 10 * 20 * 3


def test_png_round_trip(tmp_path):
    sample = make_gesture("circle", seed=1, frames=30)
    img = rd.render_views(sample, rd.scaled_config(96, 96), "double")
    path = tmp_path / "x.png"
    rd.save_png(img, path)
    again = rd.load_png(path)
    assert np.array_equal(img.array, again.array)


def test_manifest_round_trip(tmp_path):
    cfg = rd.scaled_config(192, 108, alpha_min=0.05)
    rd.write_manifest(tmp_path / "manifest.json", cfg, "double", ("a", "b"))
    loaded = rd.read_manifest(tmp_path / "manifest.json")
    assert loaded["view"] == "double"
    assert loaded["classes"] == ["a", "b"]
    assert loaded["config"] == cfg


# ---------------------------------------------------------------------------
# golden renders (hashes frozen from the first verified run; the integer
# compositing path has no platform-dependent arithmetic)

GOLDEN_SHA256 = {
    "sinusoid_192x108_top": "TBD",
    "sinusoid_192x108_double": "TBD",
    "sinusoid_1920x1080_top": "TBD",
    "sinusoid_1920x1080_double": "TBD",
}


def _golden_digest(width, height, view):
    cfg = rd.scaled_config(width, height)
    img = rd.render_views(sinusoid_fixture(), cfg, view)
    return hashlib.sha256(img.pixels).hexdigest()


@pytest.mark.parametrize("width,height,view", [
    (192, 108, "top"), (192, 108, "double"),
    (1920, 1080, "top"), (1920, 1080, "double"),
])
def test_golden_sinusoid(width, height, view):
    key = f"sinusoid_{width}x{height}_{view}"
    assert _golden_digest(width, height, view) == GOLDEN_SHA256[key]
