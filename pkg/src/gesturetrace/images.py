"""Conversions between rendered images and classifier input arrays.

Classifier inputs are channel-first float32 arrays in [0, 1]. Resizing uses
exact area averaging with rational cell overlaps, which is deterministic
(pure numpy, no SIMD-dependent kernels) and well suited to the downscaling
the progressive-resolution trainer performs.
"""

import numpy as np

from .render import RasterImage


def image_to_array(image: RasterImage) -> np.ndarray:
    """RasterImage -> (3, H, W) float32 in [0, 1]."""
    return np.ascontiguousarray(
        image.array.astype(np.float32).transpose(2, 0, 1) / np.float32(255.0)
    )


def load_image_array(path) -> np.ndarray:
    from .render import load_png

    return image_to_array(load_png(path))


def _overlap_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic matrix of output/input cell overlaps."""
    scale = n_in / n_out
    weights = np.zeros((n_out, n_in), dtype=np.float64)
    for i in range(n_out):
        lo = i * scale
        hi = (i + 1) * scale
        j0 = int(np.floor(lo))
        j1 = min(n_in, int(np.ceil(hi)))
        for j in range(j0, j1):
            overlap = min(hi, j + 1) - max(lo, j)
            if overlap > 0:
                weights[i, j] = overlap / scale
    return weights


_MATRIX_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _overlap_cached(n_in: int, n_out: int) -> np.ndarray:
    key = (n_in, n_out)
    m = _MATRIX_CACHE.get(key)
    if m is None:
        m = _overlap_matrix(n_in, n_out)
        m.setflags(write=False)
        _MATRIX_CACHE[key] = m
    return m


def resize_area(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Area-average resize of a (..., H, W) array to (..., out_h, out_w)."""
    if out_h < 1 or out_w < 1:
        raise ValueError("output size must be positive")
    *lead, h, w = arr.shape
    if (h, w) == (out_h, out_w):
        return arr.astype(np.float32, copy=False)
    wh = _overlap_cached(h, out_h)
    ww = _overlap_cached(w, out_w)
    flat = arr.reshape(-1, h, w).astype(np.float64)
    out = np.einsum("oh,bhw,pw->bop", wh, flat, ww)
    return out.reshape(*lead, out_h, out_w).astype(np.float32)


def stack_batch(arrays: list[np.ndarray]) -> np.ndarray:
    """List of (3, H, W) arrays -> (B, 3, H, W) float32 batch."""
    if not arrays:
        raise ValueError("cannot stack an empty list of images")
    return np.stack(arrays).astype(np.float32, copy=False)
