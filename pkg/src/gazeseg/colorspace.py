"""sRGB color conversions: linearization, CIE Lab (D65) and luminance.

Implemented directly from the sRGB / CIE standards so the conversion is
self-contained; the test suite cross-checks it against an independent
reference implementation.
"""

from __future__ import annotations

import numpy as np

# sRGB -> XYZ (D65) matrix, IEC 61966-2-1.
_SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)

# D65 reference white.
_WHITE = np.array([0.95047, 1.0, 1.08883])

_DELTA = 6.0 / 29.0


def srgb_to_linear(rgb01: np.ndarray) -> np.ndarray:
    """Undo the sRGB transfer curve. Input in [0, 1]."""
    rgb01 = np.asarray(rgb01, dtype=np.float64)
    lo = rgb01 <= 0.04045
    out = np.empty_like(rgb01)
    out[lo] = rgb01[lo] / 12.92
    out[~lo] = ((rgb01[~lo] + 0.055) / 1.055) ** 2.4
    return out


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    """Convert 8-bit (or [0,1] float) sRGB to CIE Lab under D65.

    Accepts (..., 3) arrays; returns float64 of the same shape with the
    L, a, b channels last.
    """
    rgb = np.asarray(rgb)
    if rgb.dtype == np.uint8:
        rgb01 = rgb.astype(np.float64) / 255.0
    else:
        rgb01 = rgb.astype(np.float64)
    lin = srgb_to_linear(rgb01)
    xyz = lin @ _SRGB_TO_XYZ.T
    xyz_n = xyz / _WHITE

    f = np.where(
        xyz_n > _DELTA**3,
        np.cbrt(xyz_n),
        xyz_n / (3.0 * _DELTA**2) + 4.0 / 29.0,
    )
    fx, fy, fz = f[..., 0], f[..., 1], f[..., 2]
    lab = np.empty_like(xyz)
    lab[..., 0] = 116.0 * fy - 16.0
    lab[..., 1] = 500.0 * (fx - fy)
    lab[..., 2] = 200.0 * (fy - fz)
    return lab


def luminance(rgb: np.ndarray) -> np.ndarray:
    """Rec. 709 luma of an RGB raster, scaled to [0, 1]."""
    rgb = np.asarray(rgb)
    if rgb.dtype == np.uint8:
        rgb01 = rgb.astype(np.float64) / 255.0
    else:
        rgb01 = rgb.astype(np.float64)
    return rgb01[..., 0] * 0.2126 + rgb01[..., 1] * 0.7152 + rgb01[..., 2] * 0.0722
