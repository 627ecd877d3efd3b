"""Quantitative evaluation: pixel AUPR/Dice, lesion-level matching, the
three-arm ablation runner and the grid-resolution sweep, plus the gaze
simulator that stands in for a recorded tracker at desk scale."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import Frame, GazeSegError, GrayMap, InvalidParameterError, PipelineConfig
from .gaze import GazeSample, GazeTrace
from .roi import FOUR_CONN
from .segmenter import CandidateMask

SAMPLE_DT_MS = 1000.0 / 60.0
BURST_LEN = 10


class EmptyGroundTruthError(GazeSegError):
    pass


@dataclass
class EvalReport:
    aupr: float
    dice: float
    pr_curve: list[tuple[float, float, float]]  # (precision, recall, threshold)
    lesion_recall: float
    lesion_precision: float
    timing_ms: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def canonical_json(self) -> str:
        """Deterministic serialization; wall-clock timing is excluded so a
        fixed seed and config reproduce the bytes exactly."""
        payload = {
            "aupr": self.aupr,
            "dice": self.dice,
            "pr_curve": [[p, r, t] for p, r, t in self.pr_curve],
            "lesion_recall": self.lesion_recall,
            "lesion_precision": self.lesion_precision,
            "extras": self.extras,
        }
        return json.dumps(payload, sort_keys=True)

    def to_json(self) -> str:
        payload = json.loads(self.canonical_json())
        payload["timing_ms"] = self.timing_ms
        return json.dumps(payload, sort_keys=True, indent=2)


def confidence_map(masks: list[CandidateMask], dims: tuple[int, int]) -> np.ndarray:
    """Per-pixel confidence: max over covering masks, 0 elsewhere."""
    h, w = dims
    conf = np.zeros((h, w), dtype=np.float64)
    for m in masks:
        np.maximum(conf, np.where(m.mask, m.confidence, 0.0), out=conf)
    return conf


def pr_curve_from_confidence(
    conf: np.ndarray, gt: np.ndarray
) -> tuple[list[tuple[float, float, float]], float]:
    """Sweep every distinct positive confidence as a threshold.

    Returns the (precision, recall, threshold) triples ordered by rising
    threshold and the AUPR under the step-wise precision envelope over
    decreasing recall.
    """
    gt = np.asarray(gt) > 0
    if not gt.any():
        raise EmptyGroundTruthError("ground truth has no positive pixels")
    conf = np.asarray(conf, dtype=np.float64)
    thresholds = np.unique(conf[conf > 0])
    n_gt = int(gt.sum())
    curve: list[tuple[float, float, float]] = []
    for t in thresholds.tolist():
        pred = conf >= t
        tp = int(np.logical_and(pred, gt).sum())
        fp = int(pred.sum()) - tp
        precision = tp / (tp + fp) if tp + fp > 0 else 1.0
        recall = tp / n_gt
        curve.append((precision, recall, float(t)))
    aupr = aupr_from_curve(curve)
    return curve, aupr


def pr_curve(
    masks: list[CandidateMask], gt: GrayMap
) -> tuple[list[tuple[float, float, float]], float]:
    """PR sweep for a set of confidence-carrying masks against a GT map."""
    conf = confidence_map(masks, gt.values.shape)
    return pr_curve_from_confidence(conf, gt.values)


def aupr_from_curve(curve: list[tuple[float, float, float]]) -> float:
    """Step-wise interpolation: integrate the precision envelope over recall."""
    if not curve:
        return 0.0
    pts = sorted(((r, p) for p, r, _ in curve), key=lambda x: x[0])
    recalls = [0.0] + [r for r, _ in pts]
    # Envelope: best precision at any recall >= r.
    envs = []
    best = 0.0
    for r, p in reversed(pts):
        best = max(best, p)
        envs.append(best)
    envs.reverse()
    envs = [envs[0]] + envs
    area = 0.0
    for i in range(1, len(recalls)):
        area += (recalls[i] - recalls[i - 1]) * envs[i]
    return float(area)


def dice(pred: np.ndarray, gt: np.ndarray) -> float:
    """Overlap 2|P∩G| / (|P|+|G|); 1.0 when both masks are empty."""
    p = np.asarray(pred) > 0
    g = np.asarray(gt) > 0
    if p.shape != g.shape:
        raise InvalidParameterError("dice operands must share dimensions")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(p, g).sum() / denom)


def _binary_iou(a: np.ndarray, b: np.ndarray) -> float:
    inter = int(np.logical_and(a, b).sum())
    if inter == 0:
        return 0.0
    return inter / (int(a.sum()) + int(b.sum()) - inter)


def lesion_match(
    pred_masks: list[np.ndarray], gt: np.ndarray, iou_min: float = 0.2
) -> tuple[int, int, int]:
    """Greedy one-to-one matching of predictions to GT components by
    descending IoU; returns (matches, n_gt, n_pred)."""
    labels, n_gt = ndimage.label(np.asarray(gt) > 0, structure=FOUR_CONN)
    comps = [labels == k for k in range(1, n_gt + 1)]
    pairs = []
    for i, pm in enumerate(pred_masks):
        for j, gm in enumerate(comps):
            iou = _binary_iou(pm, gm)
            if iou >= iou_min:
                pairs.append((iou, i, j))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p: set[int] = set()
    used_g: set[int] = set()
    matches = 0
    for _, i, j in pairs:
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        matches += 1
    return matches, n_gt, len(pred_masks)


def simulate_gaze(
    gt_mask: GrayMap,
    jitter_sigma_px: float = 25.0,
    n_fixations: int = 1,
    distractor_rate: float = 0.0,
    frame: Frame | None = None,
    seed: int = 0,
) -> GazeTrace:
    """Synthesize a review trace: one fixation burst per GT component.

    Each burst is 10 samples at 60 Hz spacing sharing one center drawn at
    the component centroid plus Gaussian jitter, so with zero jitter the
    fixation centroid lands exactly on the lesion centroid. Distractor
    bursts (round(rate * components)) land on dark, vessel-like pixels of
    the frame when one is supplied, else uniformly at random.
    """
    rng = np.random.default_rng(seed)
    gt = gt_mask.values > 0
    h, w = gt.shape
    labels, n = ndimage.label(gt, structure=FOUR_CONN)
    if n == 0 and distractor_rate <= 0:
        raise InvalidParameterError("need at least one GT component or distractors")

    centers: list[tuple[float, float]] = []
    for k in range(1, n + 1):
        ys, xs = np.nonzero(labels == k)
        centers.append((float(xs.mean()), float(ys.mean())))

    n_distract = int(round(distractor_rate * max(1, n)))
    distract: list[tuple[float, float]] = []
    if n_distract > 0:
        if frame is not None:
            from .colorspace import luminance

            lum = luminance(frame.pixels)
            lo, hi = np.quantile(lum, [0.02, 0.25])
            cand = np.nonzero((lum >= lo) & (lum <= hi))
            idx = rng.integers(0, cand[0].size, size=n_distract)
            distract = [(float(cand[1][i]), float(cand[0][i])) for i in idx]
        else:
            distract = [
                (float(rng.uniform(0, w - 1)), float(rng.uniform(0, h - 1)))
                for _ in range(n_distract)
            ]

    samples: list[GazeSample] = []
    t = 0.0
    for cx, cy in centers:
        for _ in range(max(1, n_fixations)):
            jx = rng.normal(0.0, jitter_sigma_px) if jitter_sigma_px > 0 else 0.0
            jy = rng.normal(0.0, jitter_sigma_px) if jitter_sigma_px > 0 else 0.0
            fx = float(np.clip(cx + jx, 0, w - 1))
            fy = float(np.clip(cy + jy, 0, h - 1))
            for _ in range(BURST_LEN):
                samples.append(GazeSample(t_ms=t, x=fx, y=fy, valid=True))
                t += SAMPLE_DT_MS
    for dx, dy in distract:
        for _ in range(BURST_LEN):
            samples.append(GazeSample(t_ms=t, x=dx, y=dy, valid=True))
            t += SAMPLE_DT_MS
    return GazeTrace(samples=tuple(samples))


@dataclass
class ImageCase:
    """One evaluation unit: frame, gaze trace, ground truth."""

    image_id: str
    frame: Frame
    trace: GazeTrace
    gt: GrayMap


def evaluate_masks(
    masks: list[CandidateMask], gt: GrayMap
) -> tuple[np.ndarray, float, float]:
    """Binary prediction, pixel precision and recall for a mask set."""
    dims = gt.values.shape
    pred = np.zeros(dims, dtype=bool)
    for m in masks:
        pred |= m.mask
    g = gt.values > 0
    tp = int(np.logical_and(pred, g).sum())
    fp = int(pred.sum()) - tp
    fn = int(g.sum()) - tp
    precision = tp / (tp + fp) if tp + fp > 0 else 1.0
    recall = tp / (tp + fn) if tp + fn > 0 else 1.0
    return pred, precision, recall


def pooled_report(
    per_image: list[tuple[list[CandidateMask], GrayMap]],
    timing_ms: dict | None = None,
    iou_min: float = 0.2,
) -> EvalReport:
    """Corpus-level report: pixels pooled across images for the PR sweep,
    lesion counts summed."""
    confs = []
    gts = []
    preds = []
    matches = n_gt_total = n_pred_total = 0
    for masks, gt in per_image:
        dims = gt.values.shape
        confs.append(confidence_map(masks, dims).ravel())
        gts.append((gt.values > 0).ravel())
        pred, _, _ = evaluate_masks(masks, gt)
        preds.append(pred.ravel())
        m, ng, np_ = lesion_match([mm.mask for mm in masks], gt.values, iou_min)
        matches += m
        n_gt_total += ng
        n_pred_total += np_
    conf_all = np.concatenate(confs)
    gt_all = np.concatenate(gts)
    pred_all = np.concatenate(preds)
    curve, aupr = pr_curve_from_confidence(conf_all, gt_all)
    return EvalReport(
        aupr=aupr,
        dice=dice(pred_all, gt_all),
        pr_curve=curve,
        lesion_recall=matches / n_gt_total if n_gt_total else 1.0,
        lesion_precision=matches / n_pred_total if n_pred_total else 1.0,
        timing_ms=timing_ms or {},
        extras={"n_images": len(per_image), "n_gt_lesions": n_gt_total,
                "n_pred_masks": n_pred_total, "n_matches": matches},
    )


def write_pr_table(curve: list[tuple[float, float, float]], path) -> None:
    """Two float columns (recall, precision), one threshold step per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for p, r, _ in curve:
            fh.write(f"{r:.6f} {p:.6f}\n")
