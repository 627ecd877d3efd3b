"""Bottom-up attention: frequency-tuned and minimum-barrier-distance saliency.

The FT map is the Lab-space distance between the image mean and a lightly
blurred image (5x5 binomial kernel, the standard realization of the
pi/2.75 high-frequency cutoff). The MBD map is the raster-scan
minimum-barrier transform seeded at the image border, run on luminance.
Both normalize to [0, 1]; a weighted sum fuses them.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .colorspace import luminance, rgb_to_lab
from .core import Frame, GrayMap, InvalidParameterError, PixelPoint

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

Method = Literal["FT", "MBD", "COMBINED"]

# Normalized binomial weights (1,4,6,4,1)/16.
_BINOMIAL_1D = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0


@dataclass(frozen=True)
class SaliencyMap:
    map: GrayMap
    method: str
    degenerate: bool = False


def _check_min_size(frame: Frame) -> None:
    if frame.width < 8 or frame.height < 8:
        raise InvalidParameterError("saliency needs a frame of at least 8x8")


def _normalize01(values: np.ndarray) -> tuple[np.ndarray, bool]:
    lo = float(values.min())
    hi = float(values.max())
    if hi - lo < 1e-12:
        return np.zeros_like(values), True
    return (values - lo) / (hi - lo), False


def _blur_binomial(channel: np.ndarray) -> np.ndarray:
    """Separable 5x5 binomial blur with edge replication."""
    padded = np.pad(channel, 2, mode="edge")
    tmp = np.zeros_like(padded)
    for k, w in enumerate(_BINOMIAL_1D):
        tmp += w * np.roll(padded, k - 2, axis=1)
    out = np.zeros_like(padded)
    for k, w in enumerate(_BINOMIAL_1D):
        out += w * np.roll(tmp, k - 2, axis=0)
    return out[2:-2, 2:-2]


def ft_saliency_lab(lab: np.ndarray) -> tuple[np.ndarray, bool]:
    """Pre-normalization FT response for a Lab raster: ||mean - blur||_2.

    Returns (response, degenerate). Adding the same constant to every
    channel leaves the response unchanged.
    """
    mu = lab.reshape(-1, 3).mean(axis=0)
    blurred = np.stack([_blur_binomial(lab[:, :, c]) for c in range(3)], axis=-1)
    diff = blurred - mu[None, None, :]
    resp = np.sqrt((diff**2).sum(axis=-1))
    degenerate = float(resp.max() - resp.min()) < 1e-12
    return resp, degenerate


def ft_saliency(frame: Frame) -> SaliencyMap:
    """Frequency-tuned saliency of an RGB frame, min-max normalized.

    A constant image is degenerate and maps to all zeros without
    normalization.
    """
    _check_min_size(frame)
    lab = rgb_to_lab(frame.pixels)
    resp, degenerate = ft_saliency_lab(lab)
    if degenerate:
        return SaliencyMap(GrayMap(np.zeros_like(resp)), "FT", degenerate=True)
    norm, flat = _normalize01(resp)
    return SaliencyMap(GrayMap(norm), "FT", degenerate=flat)


@njit(cache=True)
def _mbd_passes(img, dist, hi, lo, max_passes):  # pragma: no cover - jitted
    h, w = img.shape
    for p in range(max_passes):
        changed = False
        if p % 2 == 0:
            # forward raster: causal neighbors are left and up
            for y in range(h):
                for x in range(w):
                    iv = img[y, x]
                    for k in range(2):
                        ny = y - 1 if k == 0 else y
                        nx = x if k == 0 else x - 1
                        if ny < 0 or nx < 0:
                            continue
                        u = hi[ny, nx]
                        if iv > u:
                            u = iv
                        l = lo[ny, nx]
                        if iv < l:
                            l = iv
                        cand = u - l
                        if cand < dist[y, x]:
                            dist[y, x] = cand
                            hi[y, x] = u
                            lo[y, x] = l
                            changed = True
        else:
            # backward raster: causal neighbors are right and down
            for y in range(h - 1, -1, -1):
                for x in range(w - 1, -1, -1):
                    iv = img[y, x]
                    for k in range(2):
                        ny = y + 1 if k == 0 else y
                        nx = x if k == 0 else x + 1
                        if ny >= h or nx >= w:
                            continue
                        u = hi[ny, nx]
                        if iv > u:
                            u = iv
                        l = lo[ny, nx]
                        if iv < l:
                            l = iv
                        cand = u - l
                        if cand < dist[y, x]:
                            dist[y, x] = cand
                            hi[y, x] = u
                            lo[y, x] = l
                            changed = True
        if not changed:
            break
    return dist


def mbd_transform(gray: np.ndarray, max_passes: int = 10) -> np.ndarray:
    """Raster-scan minimum barrier distance from the image border seed set.

    Alternates forward and backward raster passes, each relaxing the
    per-pixel barrier with the running path max/min bookkeeping; stops on a
    pass with no update. The result never underestimates the exact barrier
    distance (every relaxation corresponds to a realizable path).
    """
    img = np.ascontiguousarray(gray, dtype=np.float64)
    h, w = img.shape
    dist = np.full((h, w), np.inf)
    dist[0, :] = 0.0
    dist[-1, :] = 0.0
    dist[:, 0] = 0.0
    dist[:, -1] = 0.0
    hi = img.copy()
    lo = img.copy()
    return np.asarray(_mbd_passes(img, dist, hi, lo, int(max_passes)))


def mbd_saliency(frame: Frame, max_passes: int = 10) -> SaliencyMap:
    """Minimum-barrier-distance saliency of the frame's luminance."""
    _check_min_size(frame)
    gray = luminance(frame.pixels)
    dist = mbd_transform(gray, max_passes)
    norm, degenerate = _normalize01(dist)
    return SaliencyMap(GrayMap(norm), "MBD", degenerate=degenerate)


def fuse(ft: SaliencyMap, mbd: SaliencyMap, gamma: float, eta: float) -> SaliencyMap:
    """Weighted sum gamma*FT + eta*MBD, renormalized to [0, 1]."""
    if ft.map.values.shape != mbd.map.values.shape:
        raise InvalidParameterError("saliency maps must share dimensions")
    combined = gamma * ft.map.values + eta * mbd.map.values
    norm, degenerate = _normalize01(combined)
    return SaliencyMap(GrayMap(norm), "COMBINED", degenerate=degenerate)


def binarize_saliency(
    sal: SaliencyMap, quantile: float
) -> tuple[GrayMap, list[PixelPoint]]:
    """Threshold at the quantile of nonzero values; also return the salient
    pixel coordinates (row-major order). A degenerate all-zero map yields an
    empty point set."""
    v = sal.map.values
    if sal.degenerate or not (v > 0).any():
        return GrayMap(np.zeros_like(v)), []
    nz = v[v > 0]
    thr = float(np.quantile(nz, quantile))
    binary = (v >= thr).astype(np.float64)
    ys, xs = np.nonzero(binary)
    points = [PixelPoint(int(x), int(y)) for y, x in zip(ys.tolist(), xs.tolist())]
    return GrayMap(binary), points


def save_gray16(values: np.ndarray, path) -> None:
    """Dump a [0,1] float map as a 16-bit grayscale PNG for inspection."""
    from PIL import Image

    v = np.asarray(values, dtype=np.float64)
    hi = v.max()
    scaled = (v / hi * 65535.0) if hi > 0 else np.zeros_like(v)
    Image.fromarray(scaled.astype(np.uint16), mode="I;16").save(path)
