"""Pluggable promptable-segmentation backends and the prompt-driven driver.

The built-in baseline is a tolerance-bounded region grower so the whole
pipeline runs with no external model; foundation-model backends plug in
through the wire protocol client (see external.py) and get the same driver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from .colorspace import luminance
from .core import Frame, GazeSegError, InvalidParameterError, PixelPoint
from .prompts import PromptSet
from .roi import FOUR_CONN

DEFAULT_TOLERANCE = 12.0 / 255.0
AREA_CAP_FRACTION = 0.05
# Local means are quantized to 1/1024 luminance steps; this makes the
# criterion reproducible across the batched and single-seed paths.
MEAN_QUANT = 1024.0
IOU_DEDUP = 0.9


class BackendError(GazeSegError):
    pass


class BackendTimeout(BackendError):
    pass


@dataclass(frozen=True)
class BackendInfo:
    name: str
    version: str
    max_prompts: int


@dataclass(frozen=True)
class CandidateMask:
    """One binary candidate region in ROI coordinates."""

    mask: np.ndarray  # bool (h, w)
    bbox: tuple[int, int, int, int]  # x, y, width, height (tight)
    confidence: float
    source_prompt: PixelPoint

    def __post_init__(self):
        m = np.ascontiguousarray(self.mask, dtype=bool)
        if not m.any():
            raise InvalidParameterError("candidate mask must be non-empty")
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "confidence", float(self.confidence))

    @property
    def area(self) -> int:
        return int(self.mask.sum())


def tight_bbox(mask: np.ndarray) -> tuple[int, int, int, int]:
    ys, xs = np.nonzero(mask)
    x0, x1 = int(xs.min()), int(xs.max())
    y0, y1 = int(ys.min()), int(ys.max())
    return (x0, y0, x1 - x0 + 1, y1 - y0 + 1)


class SegmenterBackend(Protocol):
    """Uniform backend contract: deterministic per (image, prompts) input."""

    def info(self) -> BackendInfo: ...

    def segment_batch(
        self, frame: Frame, points: Sequence[PixelPoint]
    ) -> list[CandidateMask | None]: ...


def _quantize_mean(v: float) -> float:
    return round(v * MEAN_QUANT) / MEAN_QUANT


def _region_confidence(region_std: float, tolerance: float) -> float:
    if tolerance <= 0:
        return 1.0 if region_std == 0 else 0.0
    return float(np.clip(1.0 - region_std / tolerance, 0.0, 1.0))


def baseline_region_grow(
    frame: Frame, seed: PixelPoint, tolerance: float = DEFAULT_TOLERANCE
) -> CandidateMask | None:
    """Grow a 4-connected region around the seed on luminance.

    A pixel belongs to the region when its luminance is within `tolerance`
    of the (quantized) 3x3 local mean at the seed. A seed that misses its
    own criterion (a noise spike) grows nothing and yields no mask, as do
    regions covering more than 5% of the frame (micro-lesions are small by
    definition). Confidence falls with the luminance spread inside the
    region.
    """
    if not frame.contains(seed):
        raise InvalidParameterError(f"seed {seed} outside frame")
    lum = luminance(frame.pixels)
    means = ndimage.uniform_filter(lum, size=3, mode="nearest")
    c = _quantize_mean(float(means[seed.y, seed.x]))
    inside = np.abs(lum - c) <= tolerance
    if not inside[seed.y, seed.x]:
        return None
    labels, _ = ndimage.label(inside, structure=FOUR_CONN)
    region = labels == labels[seed.y, seed.x]
    area = int(region.sum())
    if area > AREA_CAP_FRACTION * frame.width * frame.height:
        return None
    std = float(np.std(lum[region]))
    return CandidateMask(
        mask=region,
        bbox=tight_bbox(region),
        confidence=_region_confidence(std, tolerance),
        source_prompt=seed,
    )


class BaselineBackend:
    """Zero-dependency region-growing backend.

    The batched path groups seeds that share a quantized local mean so the
    thresholded image is labeled once per group; results are identical to
    calling baseline_region_grow per seed.
    """

    def __init__(self, tolerance: float = DEFAULT_TOLERANCE):
        self.tolerance = float(tolerance)

    def info(self) -> BackendInfo:
        return BackendInfo(name="baseline-region-grow", version="1", max_prompts=100000)

    def segment_batch(
        self, frame: Frame, points: Sequence[PixelPoint]
    ) -> list[CandidateMask | None]:
        if not points:
            return []
        lum = luminance(frame.pixels)
        means = ndimage.uniform_filter(lum, size=3, mode="nearest")
        cap = AREA_CAP_FRACTION * frame.width * frame.height
        tol = self.tolerance

        groups: dict[float, list[int]] = {}
        for i, p in enumerate(points):
            if not frame.contains(p):
                raise InvalidParameterError(f"prompt {p} outside frame")
            c = _quantize_mean(float(means[p.y, p.x]))
            groups.setdefault(c, []).append(i)

        results: list[CandidateMask | None] = [None] * len(points)
        mask_cache: dict[tuple[float, int], CandidateMask | None] = {}
        for c, idxs in groups.items():
            inside = np.abs(lum - c) <= tol
            labels, n = ndimage.label(inside, structure=FOUR_CONN)
            areas = np.bincount(labels.ravel(), minlength=n + 1)
            sums = np.bincount(labels.ravel(), weights=lum.ravel(), minlength=n + 1)
            sqsums = np.bincount(labels.ravel(), weights=(lum**2).ravel(), minlength=n + 1)
            for i in idxs:
                p = points[i]
                lid = int(labels[p.y, p.x])
                if lid == 0:
                    # Seed misses its own criterion: nothing to grow.
                    continue
                key = (c, lid)
                if key in mask_cache:
                    cached = mask_cache[key]
                    if cached is not None:
                        results[i] = CandidateMask(
                            mask=cached.mask,
                            bbox=cached.bbox,
                            confidence=cached.confidence,
                            source_prompt=p,
                        )
                    continue
                area = int(areas[lid])
                if area > cap:
                    mask_cache[key] = None
                    continue
                mean = sums[lid] / area
                var = max(sqsums[lid] / area - mean * mean, 0.0)
                region = labels == lid
                cm = CandidateMask(
                    mask=region,
                    bbox=tight_bbox(region),
                    confidence=_region_confidence(float(np.sqrt(var)), tol),
                    source_prompt=p,
                )
                mask_cache[key] = cm
                results[i] = cm
        return results


def mask_iou(a: CandidateMask, b: CandidateMask) -> float:
    ax, ay, aw, ah = a.bbox
    bx, by, bw, bh = b.bbox
    if ax + aw <= bx or bx + bw <= ax or ay + ah <= by or by + bh <= ay:
        return 0.0
    inter = int(np.logical_and(a.mask, b.mask).sum())
    if inter == 0:
        return 0.0
    union = a.area + b.area - inter
    return inter / union


def dedupe_masks(masks: list[CandidateMask], iou_min: float = IOU_DEDUP) -> list[CandidateMask]:
    """Greedy near-duplicate removal, keeping the higher-confidence mask.

    Order of ties is the stable input order, so results are deterministic.
    """
    order = sorted(
        range(len(masks)),
        key=lambda i: (-masks[i].confidence, masks[i].bbox[1], masks[i].bbox[0], i),
    )
    kept: list[CandidateMask] = []
    for i in order:
        m = masks[i]
        if all(mask_iou(m, k) <= iou_min for k in kept):
            kept.append(m)
    return kept


def segment(backend: SegmenterBackend, frame: Frame, prompts: PromptSet) -> list[CandidateMask]:
    """Run the backend over the prompt set and deduplicate near-identical masks.

    Prompts are batched at the backend's advertised capacity; masks with
    IoU above 0.9 collapse to the higher-confidence one. Deterministic for
    deterministic backends.
    """
    if len(prompts) == 0:
        return []
    info = backend.info()
    batch = max(1, int(info.max_prompts))
    pts = list(prompts.points)
    raw: list[CandidateMask] = []
    for start in range(0, len(pts), batch):
        for cm in backend.segment_batch(frame, pts[start : start + batch]):
            if cm is not None:
                raw.append(cm)
    return dedupe_masks(raw)
