"""Domain-knowledge filter: shape (roundness), color (red dominance in Lab)
and texture (smoothness vs. local background) applied in conjunction.

Candidates survive only when all three criteria hold; accepted masks are
mapped back to full-frame coordinates and near-duplicates from overlapping
ROIs are merged.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from .colorspace import luminance, rgb_to_lab
from .core import Frame, InvalidParameterError, PipelineConfig, PixelPoint
from .roi import FOUR_CONN, Roi
from .segmenter import CandidateMask, mask_iou, tight_bbox

BACKGROUND_RING_PX = 5
CROSS_ROI_IOU = 0.5

# Moore neighborhood in clockwise order (image coords, y down) starting at
# east; odd indices are diagonals and weigh sqrt(2) in the perimeter.
_MOORE = [(1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1), (0, -1), (1, -1)]
_STEP_LEN = [1.0 if d % 2 == 0 else math.sqrt(2.0) for d in range(8)]
_DIR_INDEX = {off: d for d, off in enumerate(_MOORE)}


@dataclass(frozen=True)
class DkfReport:
    roundness: float
    mean_a_star: float
    background_mean_a_star: float
    smoothness: float
    background_smoothness: float
    roi_smoothness: float
    shape_pass: bool
    color_pass: bool
    texture_pass: bool
    accepted: bool


def _count_components(mask: np.ndarray) -> int:
    _, n = ndimage.label(mask, structure=FOUR_CONN)
    return int(n)


def contour_perimeter(mask: np.ndarray) -> float:
    """Weighted boundary length along the 8-connected outer contour.

    Moore-neighbor tracing, clockwise; straight steps count 1, diagonal
    steps sqrt(2). A single pixel (no contour steps) measures 0.
    """
    m = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(m)
    if ys.size == 0:
        raise InvalidParameterError("empty mask has no perimeter")
    if ys.size == 1:
        return 0.0
    h, w = m.shape

    def is_set(q: tuple[int, int]) -> bool:
        return 0 <= q[0] < w and 0 <= q[1] < h and bool(m[q[1], q[0]])

    # Left-most then top-most pixel; its west neighbor is background, which
    # seeds the clockwise scan. The walk (pixel, backtrack) is deterministic,
    # so the closed contour is the first repeated-state cycle.
    order = np.lexsort((ys, xs))
    start = (int(xs[order[0]]), int(ys[order[0]]))
    p, back = start, (start[0] - 1, start[1])

    seen: dict[tuple, float] = {}
    acc = 0.0
    max_steps = 8 * ys.size + 16
    for _ in range(max_steps):
        state = (p, back)
        if state in seen:
            return acc - seen[state]
        seen[state] = acc
        db = _DIR_INDEX[(back[0] - p[0], back[1] - p[1])]
        moved = False
        for k in range(1, 9):
            d = (db + k) % 8
            q = (p[0] + _MOORE[d][0], p[1] + _MOORE[d][1])
            if is_set(q):
                back = (p[0] + _MOORE[(d - 1) % 8][0], p[1] + _MOORE[(d - 1) % 8][1])
                acc += _STEP_LEN[d]
                p = q
                moved = True
                break
        if not moved:
            return acc
    return acc


def roundness(mask: np.ndarray) -> float:
    """Compactness 4*pi*S/C^2; 1 for an ideal circle, 1 for a single pixel
    by convention (maximally compact)."""
    m = np.asarray(mask, dtype=bool)
    area = int(m.sum())
    if area == 0:
        raise InvalidParameterError("empty mask")
    if area == 1:
        return 1.0
    c = contour_perimeter(m)
    if c <= 0:
        return 1.0
    return float(4.0 * math.pi * area / (c * c))


def background_ring(mask: np.ndarray, width_px: int = BACKGROUND_RING_PX) -> np.ndarray:
    """Surrounding background: mask dilated by width_px, minus the mask."""
    dilated = ndimage.binary_dilation(mask, structure=FOUR_CONN, iterations=width_px)
    return np.logical_and(dilated, np.logical_not(mask))


def _color_test(
    a_star: np.ndarray, mask: np.ndarray, ring: np.ndarray
) -> tuple[bool, float, float]:
    if not ring.any():
        ring = np.logical_not(mask)
    mean_a = float(a_star[mask].mean())
    if not ring.any():
        return False, mean_a, float("nan")
    bg_a = float(a_star[ring].mean())
    return (mean_a > 0.0 and mean_a > bg_a), mean_a, bg_a


def color_pass(
    frame: Frame, mask: np.ndarray, ring: np.ndarray | None = None
) -> tuple[bool, float, float]:
    """Red-dominance test in Lab: candidate a* must be positive and exceed
    the surrounding background's a*. Falls back to the whole frame as
    background when the ring is empty."""
    m = np.asarray(mask, dtype=bool)
    if m.shape != (frame.height, frame.width):
        raise InvalidParameterError("mask must match frame dimensions")
    if ring is None:
        ring = background_ring(m)
    a_star = rgb_to_lab(frame.pixels)[:, :, 1]
    return _color_test(a_star, m, ring)


def smoothness(gray_region: np.ndarray) -> float:
    """Population standard deviation of the grayscale values in a region."""
    v = np.asarray(gray_region, dtype=np.float64).ravel()
    if v.size == 0:
        raise InvalidParameterError("empty region")
    return float(np.sqrt(np.mean((v - v.mean()) ** 2)))


def evaluate_candidate(
    candidate: CandidateMask,
    crop: Frame,
    config: PipelineConfig,
    a_star: np.ndarray | None = None,
    gray: np.ndarray | None = None,
) -> DkfReport:
    """Score one candidate against all three criteria on the ROI crop.

    a_star and gray are per-crop rasters; pass them in when filtering many
    candidates of the same ROI to avoid reconverting.
    """
    mask = candidate.mask
    single = _count_components(mask) == 1
    rnd = roundness(mask) if single else 0.0
    shape_ok = single and rnd >= config.dkf_roundness_min

    if a_star is None:
        a_star = rgb_to_lab(crop.pixels)[:, :, 1]
    if gray is None:
        gray = luminance(crop.pixels) * 255.0

    ring = background_ring(mask)
    color_ok, mean_a, bg_a = _color_test(a_star, mask, ring)

    smooth = smoothness(gray[mask])
    if ring.any():
        bg_smooth = smoothness(gray[ring])
    else:
        outside = np.logical_not(mask)
        bg_smooth = smoothness(gray[outside]) if outside.any() else float("inf")
    roi_smooth = smoothness(gray)
    texture_ok = smooth < bg_smooth

    return DkfReport(
        roundness=float(rnd),
        mean_a_star=mean_a,
        background_mean_a_star=bg_a,
        smoothness=smooth,
        background_smoothness=float(bg_smooth),
        roi_smoothness=roi_smooth,
        shape_pass=bool(shape_ok),
        color_pass=bool(color_ok),
        texture_pass=bool(texture_ok),
        accepted=bool(shape_ok and color_ok and texture_ok),
    )


def to_frame_mask(candidate: CandidateMask, roi: Roi, frame_dims: tuple[int, int]) -> CandidateMask:
    """Re-express an ROI-space candidate in full-frame coordinates."""
    width, height = frame_dims
    full = np.zeros((height, width), dtype=bool)
    oy, ox = roi.origin.y, roi.origin.x
    full[oy : oy + candidate.mask.shape[0], ox : ox + candidate.mask.shape[1]] = candidate.mask
    return CandidateMask(
        mask=full,
        bbox=tight_bbox(full),
        confidence=candidate.confidence,
        source_prompt=PixelPoint(candidate.source_prompt.x + ox, candidate.source_prompt.y + oy),
    )


def apply_dkf(
    candidates: list[CandidateMask],
    roi: Roi,
    config: PipelineConfig,
) -> tuple[list[CandidateMask], list[DkfReport]]:
    """Filter one ROI's candidates; survivors come back in frame coordinates.

    The report list carries one record per input candidate, accepted or not.
    """
    reports: list[DkfReport] = []
    accepted: list[CandidateMask] = []
    if not candidates:
        return accepted, reports
    a_star = rgb_to_lab(roi.crop.pixels)[:, :, 1]
    gray = luminance(roi.crop.pixels) * 255.0
    for cand in candidates:
        rep = evaluate_candidate(cand, roi.crop, config, a_star=a_star, gray=gray)
        reports.append(rep)
        if rep.accepted:
            accepted.append(cand)
    return accepted, reports


def merge_across_rois(
    per_roi: list[tuple[Roi, list[CandidateMask]]],
    frame_dims: tuple[int, int],
    iou_min: float = CROSS_ROI_IOU,
) -> list[CandidateMask]:
    """Map accepted ROI candidates to frame coordinates and merge duplicates
    produced by overlapping ROIs, keeping the higher confidence."""
    full: list[CandidateMask] = []
    for roi, masks in per_roi:
        for cand in masks:
            full.append(to_frame_mask(cand, roi, frame_dims))
    order = sorted(
        range(len(full)),
        key=lambda i: (-full[i].confidence, full[i].bbox[1], full[i].bbox[0], i),
    )
    kept: list[CandidateMask] = []
    for i in order:
        m = full[i]
        if all(mask_iou(m, k) <= iou_min for k in kept):
            kept.append(m)
    return kept


def report_records(reports: list[DkfReport]) -> str:
    """One JSON record per candidate, newline separated (drives the UI's
    explain-why panel)."""
    lines = [json.dumps(asdict(r), sort_keys=True) for r in reports]
    return "\n".join(lines) + ("\n" if lines else "")
