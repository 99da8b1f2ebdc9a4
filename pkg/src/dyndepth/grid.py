"""Dense real-valued grids: bilinear resampling, Sobel magnitude, SSIM, PGM dumps.

Grids are plain numpy arrays with fixed shape conventions:

* feature grid: ``(h, w, c)`` float64
* scalar map:   ``(h, w)`` float64
* binary map:   ``(h, w)`` with values in {0, 1}

All operations are pure; inputs are never modified in place.
"""

from __future__ import annotations

import numpy as np


def as_feature_grid(data, height=None, width=None, channels=None) -> np.ndarray:
    """Validate and return a (h, w, c) float64 feature grid."""
    g = np.asarray(data, dtype=np.float64)
    if g.ndim != 3:
        raise ValueError(f"feature grid must be 3-d (h, w, c), got shape {g.shape}")
    h, w, c = g.shape
    if h < 1 or w < 1 or c < 1:
        raise ValueError(f"feature grid dimensions must be positive, got {g.shape}")
    for name, want, got in (("height", height, h), ("width", width, w), ("channels", channels, c)):
        if want is not None and want != got:
            raise ValueError(f"expected {name}={want}, got {got}")
    if not np.all(np.isfinite(g)):
        raise ValueError("feature grid contains non-finite values")
    return g


def as_scalar_map(data) -> np.ndarray:
    """Validate and return a (h, w) float64 scalar map."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"scalar map must be 2-d, got shape {m.shape}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"scalar map dimensions must be positive, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("scalar map contains non-finite values")
    return m


def as_binary_map(data) -> np.ndarray:
    """Validate and return a (h, w) map with values in {0, 1}."""
    m = np.asarray(data)
    if m.ndim != 2:
        raise ValueError(f"binary map must be 2-d, got shape {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise ValueError("binary map values must be 0 or 1")
    return m.astype(np.uint8)


def bilinear_resize(grid: np.ndarray, h_out: int, w_out: int) -> np.ndarray:
    """Resample a (h, w) or (h, w, c) grid to (h_out, w_out[, c]).

    Uses the align-corners-false convention: output pixel centers map to
    ``(i + 0.5) * h_in / h_out - 0.5`` in input coordinates, with sample
    coordinates clamped to the valid range. Identity when sizes match.
    """
    if h_out < 1 or w_out < 1:
        raise ValueError(f"target size must be positive, got ({h_out}, {w_out})")
    g = np.asarray(grid, dtype=np.float64)
    squeeze = g.ndim == 2
    if squeeze:
        g = g[:, :, None]
    h_in, w_in, _ = g.shape
    if (h_in, w_in) == (h_out, w_out):
        out = g.copy()
        return out[:, :, 0] if squeeze else out

    ys = (np.arange(h_out) + 0.5) * (h_in / h_out) - 0.5
    xs = (np.arange(w_out) + 0.5) * (w_in / w_out) - 0.5
    ys = np.clip(ys, 0.0, h_in - 1.0)
    xs = np.clip(xs, 0.0, w_in - 1.0)

    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h_in - 1)
    x1 = np.minimum(x0 + 1, w_in - 1)
    wy = (ys - y0)[:, None, None]
    wx = (xs - x0)[None, :, None]

    top = g[y0][:, x0] * (1 - wx) + g[y0][:, x1] * wx
    bot = g[y1][:, x0] * (1 - wx) + g[y1][:, x1] * wx
    out = top * (1 - wy) + bot * wy
    return out[:, :, 0] if squeeze else out


_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def sobel_magnitude(m: np.ndarray) -> np.ndarray:
    """Per-pixel gradient magnitude sqrt(Gx^2 + Gy^2) with replicate padding."""
    m = as_scalar_map(m)
    h, w = m.shape
    if h < 3 or w < 3:
        raise ValueError(f"sobel requires at least 3x3, got {m.shape}")
    p = np.pad(m, 1, mode="edge")
    gx = np.zeros_like(m)
    gy = np.zeros_like(m)
    for dy in range(3):
        for dx in range(3):
            window = p[dy : dy + h, dx : dx + w]
            gx += _SOBEL_X[dy, dx] * window
            gy += _SOBEL_Y[dy, dx] * window
    return np.sqrt(gx * gx + gy * gy)


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over 8x8 sliding windows (stride 1).

    Stabilizers are C1 = (0.01 * range)^2 and C2 = (0.03 * range)^2, with
    the dynamic range taken from the observed min/max over both maps. The
    window shrinks to min(h, w) for small inputs. Returns a value in [-1, 1];
    exactly 1.0 for identical inputs.
    """
    a = as_scalar_map(a)
    b = as_scalar_map(b)
    if a.shape != b.shape:
        raise ValueError(f"ssim shape mismatch: {a.shape} vs {b.shape}")
    h, w = a.shape
    win = min(8, h, w)

    rng = max(a.max(), b.max()) - min(a.min(), b.min())
    if rng == 0.0:
        rng = 1e-12
    c1 = (0.01 * rng) ** 2
    c2 = (0.03 * rng) ** 2

    def win_stats(x, y):
        # all win*win windows at stride 1 via stride tricks
        xs = np.lib.stride_tricks.sliding_window_view(x, (win, win))
        ys = np.lib.stride_tricks.sliding_window_view(y, (win, win))
        mx = xs.mean(axis=(-2, -1))
        my = ys.mean(axis=(-2, -1))
        vx = ((xs - mx[..., None, None]) ** 2).mean(axis=(-2, -1))
        vy = ((ys - my[..., None, None]) ** 2).mean(axis=(-2, -1))
        cxy = ((xs - mx[..., None, None]) * (ys - my[..., None, None])).mean(axis=(-2, -1))
        return mx, my, vx, vy, cxy

    mx, my, vx, vy, cxy = win_stats(a, b)
    num = (2 * mx * my + c1) * (2 * cxy + c2)
    den = (mx * mx + my * my + c1) * (vx + vy + c2)
    return float(np.mean(num / den))


def write_pgm(path, m: np.ndarray) -> None:
    """Dump a scalar/binary map as 8-bit binary PGM (P5) with min-max scaling."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"PGM dump needs a 2-d map, got shape {m.shape}")
    lo, hi = m.min(), m.max()
    if hi > lo:
        scaled = np.round((m - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(m)
    data = scaled.astype(np.uint8)
    h, w = m.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(data.tobytes())
