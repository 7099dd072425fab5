"""Deterministic rasterization of gesture samples into fingertip-trace images.

A gesture's frames are projected orthographically onto a view plane (top or
right); every valid fingertip leaves a filled disc whose opacity grows
linearly with the frame's position in time, so old positions fade toward the
background while the most recent ones are fully opaque. The skeleton of the
final frame is optionally drawn on top. Compositing is done entirely in
integer arithmetic so output images are bit-identical across platforms.
"""

import enum
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .skeleton import (
    FINGERTIP_IDS,
    FINGERTIP_ROWS,
    SKELETON_EDGES,
    GestureSample,
)


class ViewPlane(enum.Enum):
    """Orthographic view planes. TOP maps (x,y,z) -> (x, -z); RIGHT maps
    (x,y,z) -> (z, y)."""

    TOP = "top"
    RIGHT = "right"

    def project_array(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        if self is ViewPlane.TOP:
            return np.stack([pts[..., 0], -pts[..., 2]], axis=-1)
        return np.stack([pts[..., 2], pts[..., 1]], axis=-1)


def project(point, view: ViewPlane) -> tuple[float, float]:
    """Project one 3D point (mm) onto a view plane -> (u, v) in mm."""
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {p.shape}")
    if not np.isfinite(p).all():
        raise ValueError(f"cannot project non-finite point {p}")
    u, v = view.project_array(p)
    return float(u), float(v)


@dataclass(frozen=True)
class Window:
    """Axis-aligned world window in view coordinates (mm)."""

    u_min: float
    v_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        if not (self.u_max > self.u_min and self.v_max > self.v_min):
            raise ValueError(f"degenerate window {self}")

    def contains(self, u: float, v: float) -> bool:
        return self.u_min <= u <= self.u_max and self.v_min <= v <= self.v_max


# Fixed default windows (not fit per sample) so scale is comparable across
# gestures; both are 16:9. Top: u = x in [-300, 300], v = -z in
# [-168.75, 168.75]. Right: u = z in [-300, 300], v = y in [0, 337.5].
DEFAULT_WINDOWS = {
    ViewPlane.TOP: Window(-300.0, -168.75, 300.0, 168.75),
    ViewPlane.RIGHT: Window(-300.0, 0.0, 300.0, 337.5),
}

# Per-finger trace colors: 5 well-separated hues, left hand dimmed, right
# hand at full value. Order matches FINGERTIP_IDS (left thumb..pinky, then
# right thumb..pinky).
DEFAULT_PALETTE = (
    (184, 0, 0), (147, 184, 0), (0, 184, 73), (0, 73, 184), (147, 0, 184),
    (255, 0, 0), (204, 255, 0), (0, 255, 102), (0, 102, 255), (204, 0, 255),
)


@dataclass(frozen=True)
class RenderConfig:
    resolution: tuple[int, int] = (1920, 1080)  # (width, height) px
    windows: dict = field(default_factory=lambda: dict(DEFAULT_WINDOWS))
    alpha_min: float = 0.02
    point_radius: int = 5
    line_width: int = 1
    palette: tuple = DEFAULT_PALETTE
    background: tuple[int, int, int] = (0, 0, 0)
    skeleton_color: tuple[int, int, int] = (200, 200, 200)
    draw_final_skeleton: bool = True

    def __post_init__(self):
        w, h = self.resolution
        if w < 16 or h < 16:
            raise ValueError(f"resolution {w}x{h} below 16x16 minimum")
        if not 0.0 <= self.alpha_min < 1.0:
            raise ValueError(f"alpha_min {self.alpha_min} outside [0, 1)")
        if len(self.palette) != len(FINGERTIP_IDS):
            raise ValueError(f"palette needs {len(FINGERTIP_IDS)} entries")
        if len(set(self.palette)) != len(self.palette):
            raise ValueError("palette entries must be distinct")
        if self.point_radius < 1:
            raise ValueError("point_radius must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "resolution": list(self.resolution),
            "windows": {
                view.value: [w.u_min, w.v_min, w.u_max, w.v_max]
                for view, w in self.windows.items()
            },
            "alpha_min": self.alpha_min,
            "point_radius": self.point_radius,
            "line_width": self.line_width,
            "palette": [list(c) for c in self.palette],
            "background": list(self.background),
            "skeleton_color": list(self.skeleton_color),
            "draw_final_skeleton": self.draw_final_skeleton,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "RenderConfig":
        return cls(
            resolution=tuple(d["resolution"]),
            windows={
                ViewPlane(k): Window(*v) for k, v in d["windows"].items()
            },
            alpha_min=d["alpha_min"],
            point_radius=d["point_radius"],
            line_width=d["line_width"],
            palette=tuple(tuple(c) for c in d["palette"]),
            background=tuple(d["background"]),
            skeleton_color=tuple(d["skeleton_color"]),
            draw_final_skeleton=d["draw_final_skeleton"],
        )


def scaled_config(width: int, height: int, **overrides) -> RenderConfig:
    """RenderConfig with marker sizes scaled to the resolution (radius ~1/64
    of the short side)."""
    radius = max(1, round(min(width, height) / 64))
    defaults = dict(resolution=(width, height), point_radius=radius)
    defaults.update(overrides)
    return RenderConfig(**defaults)


@dataclass(frozen=True)
class RasterImage:
    """8-bit RGB image; array is (height, width, 3) uint8, row-major."""

    array: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.array, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) array, got {arr.shape}")
        arr.setflags(write=False)
        object.__setattr__(self, "array", arr)

    @property
    def width(self) -> int:
        return self.array.shape[1]

    @property
    def height(self) -> int:
        return self.array.shape[0]

    @property
    def pixels(self) -> bytes:
        """Row-major RGB triples; length == width * height * 3."""
        return self.array.tobytes()


def world_to_pixel(point, window: Window, resolution: tuple[int, int]):
    """Map view coordinates (mm) to integer pixel indices.

    The window is mapped affinely onto the full image with the v axis
    inverted (larger v renders higher). Returns (px, py) or None when the
    point lies outside the window.
    """
    width, height = resolution
    u, v = float(point[0]), float(point[1])
    if not window.contains(u, v):
        return None
    u_frac = (u - window.u_min) / (window.u_max - window.u_min)
    v_frac = (v - window.v_min) / (window.v_max - window.v_min)
    px = int(math.floor(u_frac * width))
    py = int(math.floor((1.0 - v_frac) * height))
    if px == width:
        px = width - 1
    if py == height:
        py = height - 1
    return px, py


_DISC_MASKS: dict[int, np.ndarray] = {}


def _disc_mask(radius: int) -> np.ndarray:
    mask = _DISC_MASKS.get(radius)
    if mask is None:
        span = np.arange(-radius, radius + 1)
        mask = (span[:, None] ** 2 + span[None, :] ** 2) <= radius * radius
        mask.setflags(write=False)
        _DISC_MASKS[radius] = mask
    return mask


def _blend_disc(img: np.ndarray, px: int, py: int, radius: int,
                color: tuple[int, int, int], alpha_q: int) -> None:
    """Alpha-composite a hard-edged disc; integer arithmetic only."""
    h, w = img.shape[:2]
    y0, y1 = max(0, py - radius), min(h, py + radius + 1)
    x0, x1 = max(0, px - radius), min(w, px + radius + 1)
    if y0 >= y1 or x0 >= x1:
        return
    mask = _disc_mask(radius)[
        y0 - (py - radius): y1 - (py - radius),
        x0 - (px - radius): x1 - (px - radius),
    ]
    patch = img[y0:y1, x0:x1].astype(np.uint32)
    src = np.array(color, dtype=np.uint32)
    blended = (src * alpha_q + patch * (255 - alpha_q) + 127) // 255
    patch[mask] = blended[mask]
    img[y0:y1, x0:x1] = patch.astype(np.uint8)


def _draw_line(img: np.ndarray, p0: tuple[int, int], p1: tuple[int, int],
               color: tuple[int, int, int], width: int) -> None:
    """Bresenham line at full opacity; width > 1 thickens via small discs."""
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    h, w = img.shape[:2]
    col = np.array(color, dtype=np.uint8)
    radius = width // 2
    while True:
        if radius:
            _blend_disc(img, x0, y0, radius, color, 255)
        elif 0 <= y0 < h and 0 <= x0 < w:
            img[y0, x0] = col
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def trace_alpha(tau: int, total: int, alpha_min: float) -> float:
    """Linear opacity ramp: alpha_min + (1 - alpha_min) * tau / total."""
    return alpha_min + (1.0 - alpha_min) * (tau / total)


def quantize_alpha(alpha: float) -> int:
    return int(round(alpha * 255))


def render_gesture(sample: GestureSample, config: RenderConfig,
                   view: ViewPlane) -> RasterImage:
    """Rasterize one gesture into a single trace image (the image encoding
    of the whole temporal window).

    Frames are composited in increasing time order so later marks overdraw
    earlier ones; each valid fingertip of frame tau (1-based) gets a disc at
    opacity trace_alpha(tau, T, alpha_min) in its palette color. With
    draw_final_skeleton, the last frame's skeleton is drawn fully opaque on
    top. Output depends only on the inputs.
    """
    if sample.T < 1:
        raise ValueError(f"sample {sample.sample_id!r} is empty")
    width, height = config.resolution
    window = config.windows[view]
    img = np.empty((height, width, 3), dtype=np.uint8)
    img[:] = np.array(config.background, dtype=np.uint8)

    total = sample.T
    drew_any_tip = False
    for tau, frame in enumerate(sample.frames, start=1):
        alpha_q = quantize_alpha(trace_alpha(tau, total, config.alpha_min))
        uv = view.project_array(frame.positions[list(FINGERTIP_ROWS)])
        for k, row in enumerate(FINGERTIP_ROWS):
            if not frame.valid[row]:
                continue
            pix = world_to_pixel(uv[k], window, config.resolution)
            if pix is None:
                continue
            _blend_disc(img, pix[0], pix[1], config.point_radius,
                        config.palette[k], alpha_q)
            drew_any_tip = True

    if not drew_any_tip:
        warnings.warn(
            f"sample {sample.sample_id!r}: no valid fingertip in any frame; "
            "rendering background and final skeleton only",
            stacklevel=2,
        )

    if config.draw_final_skeleton:
        _draw_skeleton(img, sample.frames.frames[-1], config, view, window)
    return RasterImage(array=img)


def _draw_skeleton(img, frame, config, view, window):
    uv = view.project_array(frame.positions)
    pix = [None] * len(uv)
    for i in range(len(uv)):
        if frame.valid[i] and np.isfinite(uv[i]).all():
            pix[i] = world_to_pixel(uv[i], window, config.resolution)
    for a, b in SKELETON_EDGES:
        if pix[a] is not None and pix[b] is not None:
            _draw_line(img, pix[a], pix[b], config.skeleton_color,
                       config.line_width)
    joint_radius = max(1, config.line_width)
    for i, p in enumerate(pix):
        if p is None:
            continue
        _blend_disc(img, p[0], p[1], joint_radius, config.skeleton_color, 255)
    for k, row in enumerate(FINGERTIP_ROWS):
        if pix[row] is not None:
            _blend_disc(img, pix[row][0], pix[row][1], joint_radius,
                        config.palette[k], 255)


def stitch(top: RasterImage, right: RasterImage) -> RasterImage:
    """Side-by-side concatenation (top view left, right view right)."""
    if top.height != right.height:
        raise ValueError(
            f"stitch needs equal heights, got {top.height} and {right.height}"
        )
    return RasterImage(array=np.concatenate([top.array, right.array], axis=1))


def render_views(sample: GestureSample, config: RenderConfig,
                 view: str = "top") -> RasterImage:
    """Render 'top', 'right', or the stitched 'double' view."""
    if view == "double":
        return stitch(render_gesture(sample, config, ViewPlane.TOP),
                      render_gesture(sample, config, ViewPlane.RIGHT))
    return render_gesture(sample, config, ViewPlane(view))


# ---------------------------------------------------------------------------
# PNG + manifest IO

def save_png(image: RasterImage, path) -> None:
    from PIL import Image

    Image.fromarray(image.array, mode="RGB").save(str(path), format="PNG")


def load_png(path) -> RasterImage:
    from PIL import Image

    with Image.open(str(path)) as im:
        return RasterImage(array=np.asarray(im.convert("RGB"), dtype=np.uint8))


def write_manifest(path, config: RenderConfig, view: str,
                   class_names: tuple[str, ...] | list[str]) -> None:
    """Record the exact render settings next to an image directory."""
    payload = {
        "format": "gesturetrace-render-manifest",
        "version": 1,
        "view": view,
        "classes": list(class_names),
        "config": config.to_json_dict(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    payload["config"] = RenderConfig.from_json_dict(payload["config"])
    return payload
