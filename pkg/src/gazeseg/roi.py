"""ROI extraction around high-attention regions and local contrast enhancement."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import Frame, GrayMap, InvalidParameterError, PipelineConfig, PixelPoint

# 4-connectivity structuring element for component labeling.
FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class Roi:
    """Square sub-image with coordinates back into the source frame."""

    origin: PixelPoint
    size_M: int
    crop: Frame
    attention_mass: float

    def to_frame_coords(self, x: int, y: int) -> PixelPoint:
        return PixelPoint(self.origin.x + x, self.origin.y + y)


def roi_side_for_area(area: int, roi_min_M: int) -> int:
    """Square side proportional to sqrt(component area), floored at roi_min_M."""
    return max(int(roi_min_M), 2 * int(math.ceil(math.sqrt(max(area, 1)))))


def extract_rois(
    binary_attention: GrayMap,
    gaze_map: GrayMap,
    frame: Frame,
    config: PipelineConfig,
) -> list[Roi]:
    """One ROI per 4-connected component of the binary attention map.

    Each ROI is centered at the component's gaze-mass centroid, sized by
    the component area (floored at roi_min_M, clamped to the frame), and
    the list is ordered by descending attention mass inside the crop.
    An empty binary map yields an empty list.
    """
    if binary_attention.values.shape != (frame.height, frame.width):
        raise InvalidParameterError("binary attention and frame dimensions must match")
    if gaze_map.values.shape != binary_attention.values.shape:
        raise InvalidParameterError("gaze map and binary attention dimensions must match")

    mask = binary_attention.values > 0
    if not mask.any():
        return []
    labels, n = ndimage.label(mask, structure=FOUR_CONN)
    g = gaze_map.values
    h, w = g.shape
    rois: list[Roi] = []
    for lid in range(1, n + 1):
        comp = labels == lid
        area = int(comp.sum())
        weights = g * comp
        total = float(weights.sum())
        if total > 0:
            ys, xs = np.nonzero(comp)
            cy = float((ys * weights[ys, xs]).sum() / total)
            cx = float((xs * weights[ys, xs]).sum() / total)
        else:
            ys, xs = np.nonzero(comp)
            cy = float(ys.mean())
            cx = float(xs.mean())
        m = roi_side_for_area(area, config.roi_min_M)
        m = min(m, w, h)
        ox = int(round(cx)) - m // 2
        oy = int(round(cy)) - m // 2
        ox = max(0, min(ox, w - m))
        oy = max(0, min(oy, h - m))
        crop = Frame(frame.pixels[oy : oy + m, ox : ox + m].copy())
        mass = float(g[oy : oy + m, ox : ox + m].sum())
        rois.append(Roi(origin=PixelPoint(ox, oy), size_M=m, crop=crop, attention_mass=mass))
    rois.sort(key=lambda r: (-r.attention_mass, r.origin.y, r.origin.x))
    return rois


def enhance(
    crop: Frame,
    alpha: float,
    beta: float,
    lam: float,
    blur_sigma: float,
) -> Frame:
    """Gaussian-unsharp enhancement: clamp(alpha*I + beta*blur(I) + lam, 0, 255).

    The blur kernel is normalized to unit sum and borders are handled by
    edge replication, so a constant image maps to the constant
    alpha*v + beta*v + lam.
    """
    if blur_sigma <= 0:
        raise InvalidParameterError("blur_sigma must be positive")
    img = crop.pixels.astype(np.float64)
    out = np.empty_like(img)
    for c in range(3):
        blurred = ndimage.gaussian_filter(img[:, :, c], sigma=blur_sigma, mode="nearest")
        out[:, :, c] = alpha * img[:, :, c] + beta * blurred + lam
    return Frame(np.clip(np.rint(out), 0, 255).astype(np.uint8))
