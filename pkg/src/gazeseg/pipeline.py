"""End-to-end orchestration: gaze map -> ROIs -> saliency -> prompts ->
segmentation -> domain filter, with per-stage timing and debug dumps."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dkf as dkf_mod
from .core import Frame, GrayMap, PipelineConfig
from .gaze import GazeMap, GazeTrace, binarize_gaze, build_gaze_map
from .prompts import PromptSet, grid_prompts, salient_prompts
from .roi import Roi, enhance, extract_rois
from .saliency import binarize_saliency, ft_saliency, fuse, mbd_saliency, save_gray16
from .segmenter import CandidateMask, SegmenterBackend, segment


@dataclass
class RoiResult:
    roi: Roi
    prompts: PromptSet
    candidates: list[CandidateMask]
    accepted: list[CandidateMask]
    reports: list[dkf_mod.DkfReport]


@dataclass
class PipelineResult:
    gaze_map: GazeMap
    rois: list[RoiResult]
    masks: list[CandidateMask]  # accepted, frame coordinates, merged
    reports: list[dkf_mod.DkfReport]
    timing_ms: dict = field(default_factory=dict)

    @property
    def prompt_count(self) -> int:
        return sum(len(r.prompts) for r in self.rois)


def run_pipeline(
    frame: Frame,
    trace: GazeTrace | None,
    config: PipelineConfig,
    backend: SegmenterBackend,
    apply_filter: bool = True,
    prompt_mode: str = "saliency",  # saliency | grid
    grid_n: int | None = None,
    debug_dir: str | Path | None = None,
    gaze_map: GazeMap | None = None,
) -> PipelineResult:
    """Run the full pipeline on one frame.

    prompt_mode picks how prompt points are generated per ROI: "saliency"
    gates the grid by the fused saliency map, "grid" uses the dense grid
    untouched (full-coverage sampling for the ablation baseline and the
    N-sweep). Segmentation runs on the raw crop; the enhanced crop drives
    saliency only. Set apply_filter=False for ablation arms. A prebuilt
    gaze_map (e.g. an incremental accumulator snapshot) skips the build.
    """
    timing: dict[str, float] = {}
    t0 = time.perf_counter()
    if gaze_map is None:
        if trace is None:
            raise ValueError("need a trace or a prebuilt gaze map")
        gaze_map = build_gaze_map(trace, (frame.width, frame.height), config.sigma_px)
    binary = binarize_gaze(gaze_map, config.gaze_binarize_quantile)
    timing["gaze_ms"] = (time.perf_counter() - t0) * 1e3

    t0 = time.perf_counter()
    rois = extract_rois(binary, gaze_map.map, frame, config)
    timing["roi_ms"] = (time.perf_counter() - t0) * 1e3

    n = grid_n if grid_n is not None else config.grid_N
    debug = Path(debug_dir) if debug_dir is not None else None
    if debug is not None:
        debug.mkdir(parents=True, exist_ok=True)
        save_gray16(gaze_map.map.values, debug / "gaze_map.png")
        save_gray16(binary.values, debug / "gaze_binary.png")

    sal_ms = seg_ms = dkf_ms = 0.0
    roi_results: list[RoiResult] = []
    per_roi_accepted: list[tuple[Roi, list[CandidateMask]]] = []
    for idx, roi in enumerate(rois):
        t0 = time.perf_counter()
        dims = (roi.crop.width, roi.crop.height)
        if prompt_mode == "grid":
            # Full-coverage sampling: every grid point prompts the backend.
            prompts = grid_prompts(dims, n)
        else:
            enhanced = enhance(
                roi.crop, config.enhance_alpha, config.enhance_beta,
                config.enhance_lambda, config.blur_sigma_for(roi.size_M),
            )
            ft = ft_saliency(enhanced)
            mbd = mbd_saliency(enhanced, config.mbd_max_passes)
            combined = fuse(ft, mbd, config.fusion_gamma, config.fusion_eta)
            sal_binary, salient = binarize_saliency(
                combined, config.saliency_binarize_quantile
            )
            prompts = salient_prompts(dims, n, salient)
            if debug is not None:
                save_gray16(ft.map.values, debug / f"roi{idx}_ft.png")
                save_gray16(mbd.map.values, debug / f"roi{idx}_mbd.png")
                save_gray16(combined.map.values, debug / f"roi{idx}_combined.png")
                save_gray16(sal_binary.values, debug / f"roi{idx}_salient.png")
        sal_ms += (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        candidates = segment(backend, roi.crop, prompts)
        seg_ms += (time.perf_counter() - t0) * 1e3

        t0 = time.perf_counter()
        if apply_filter:
            accepted, reports = dkf_mod.apply_dkf(candidates, roi, config)
        else:
            accepted, reports = candidates, []
        dkf_ms += (time.perf_counter() - t0) * 1e3
        roi_results.append(RoiResult(roi, prompts, candidates, accepted, reports))
        per_roi_accepted.append((roi, accepted))

    t0 = time.perf_counter()
    merged = dkf_mod.merge_across_rois(per_roi_accepted, (frame.width, frame.height))
    dkf_ms += (time.perf_counter() - t0) * 1e3

    timing["saliency_ms"] = sal_ms
    timing["segment_ms"] = seg_ms
    timing["filter_ms"] = dkf_ms
    all_reports = [r for rr in roi_results for r in rr.reports]
    return PipelineResult(
        gaze_map=gaze_map,
        rois=roi_results,
        masks=merged,
        reports=all_reports,
        timing_ms=timing,
    )


def render_overlay(frame: Frame, masks: list[CandidateMask]) -> Frame:
    """Tint accepted regions green and outline their bounding boxes."""
    img = frame.pixels.astype(np.float64).copy()
    for m in masks:
        sel = m.mask
        img[sel] = 0.45 * img[sel] + 0.55 * np.array([40.0, 230.0, 70.0])
        x, y, w, h = m.bbox
        x1, y1 = min(x + w, frame.width - 1), min(y + h, frame.height - 1)
        img[y : y1 + 1, [x, x1]] = [255.0, 210.0, 40.0]
        img[[y, y1], x : x1 + 1] = [255.0, 210.0, 40.0]
    return Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8))


def union_mask(masks: list[CandidateMask], dims: tuple[int, int]) -> GrayMap:
    h, w = dims
    out = np.zeros((h, w), dtype=bool)
    for m in masks:
        out |= m.mask
    return GrayMap(out.astype(np.float64))
