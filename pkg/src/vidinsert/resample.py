"""Nearest and bilinear resampling with half-pixel sample centers.

Hand-rolled instead of delegating to an image library so the sampling
convention is pinned down once and shared by masks (nearest) and pixels
(bilinear). Output pixel ``j`` samples the source at
``(j + 0.5) * in_size / out_size - 0.5``, the usual align-corners-false
convention; coordinates are clamped to the source grid.
"""

from __future__ import annotations

import numpy as np

__all__ = ["resize_nearest", "resize_bilinear"]


def _check_sizes(in_h: int, in_w: int, out_h: int, out_w: int) -> None:
    if in_h < 1 or in_w < 1:
        raise ValueError(f"source size must be positive, got {in_h}x{in_w}")
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")


def resize_nearest(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize of a 2-D array (extra trailing axes allowed)."""
    a = np.asarray(arr)
    in_h, in_w = a.shape[0], a.shape[1]
    _check_sizes(in_h, in_w, out_h, out_w)
    rows = np.floor((np.arange(out_h) + 0.5) * in_h / out_h).astype(np.intp)
    cols = np.floor((np.arange(out_w) + 0.5) * in_w / out_w).astype(np.intp)
    np.clip(rows, 0, in_h - 1, out=rows)
    np.clip(cols, 0, in_w - 1, out=cols)
    return a[rows][:, cols].copy()


def resize_bilinear(arr: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of an ``(H, W)`` or ``(H, W, C)`` float array."""
    a = np.asarray(arr, dtype=np.float64)
    in_h, in_w = a.shape[0], a.shape[1]
    _check_sizes(in_h, in_w, out_h, out_w)

    ys = (np.arange(out_h) + 0.5) * in_h / out_h - 0.5
    xs = (np.arange(out_w) + 0.5) * in_w / out_w - 0.5
    np.clip(ys, 0.0, in_h - 1.0, out=ys)
    np.clip(xs, 0.0, in_w - 1.0, out=xs)

    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = ys - y0
    wx = xs - x0

    # Broadcast the per-axis weights against any trailing channel axis.
    if a.ndim > 2:
        wy = wy.reshape(-1, 1, *([1] * (a.ndim - 2)))
        wx = wx.reshape(1, -1, *([1] * (a.ndim - 2)))
    else:
        wy = wy[:, None]
        wx = wx[None, :]

    top = a[y0][:, x0] * (1.0 - wx) + a[y0][:, x1] * wx
    bot = a[y1][:, x0] * (1.0 - wx) + a[y1][:, x1] * wx
    return top * (1.0 - wy) + bot * wy
