"""Top-down attention: gaze traces, gaze maps and the attention dispersion score.

Each valid gaze sample is splatted as an isotropic 2-D Gaussian with peak
amplitude 1/(sqrt(2*pi)*sigma) and support truncated at 3 sigma. The
attention dispersion score is the weighted geometric-median objective of the
deposited points, normalized by total weight and map diagonal scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import EmptyMapError, EmptyTraceError, GrayMap, InvalidParameterError


@dataclass(frozen=True)
class GazeSample:
    t_ms: float
    x: float
    y: float
    valid: bool = True


@dataclass(frozen=True)
class GazeTrace:
    samples: tuple[GazeSample, ...]
    image_id: str = ""

    def __post_init__(self):
        samples = tuple(self.samples)
        for a, b in zip(samples, samples[1:]):
            if b.t_ms < a.t_ms:
                raise InvalidParameterError("sample timestamps must be non-decreasing")
        object.__setattr__(self, "samples", samples)

    def valid_samples(self) -> list[GazeSample]:
        return [s for s in self.samples if s.valid]


@dataclass(frozen=True)
class GazeMap:
    """Accumulated attention raster plus the points that produced it.

    total_weight counts one unit of mass per deposited kernel (boundary
    clipping does not reduce it); skipped is the number of valid samples
    that fell outside the frame and were not deposited.
    """

    map: GrayMap
    total_weight: float
    points: np.ndarray  # (k, 2) float64, deposited (x, y)
    skipped: int = 0

    def point_weights(self) -> np.ndarray:
        """Attention value of the final map at each deposited point."""
        v = self.map.values
        xs = np.clip(np.rint(self.points[:, 0]).astype(int), 0, v.shape[1] - 1)
        ys = np.clip(np.rint(self.points[:, 1]).astype(int), 0, v.shape[0] - 1)
        return v[ys, xs]


def _gaussian_kernel(sigma_px: float) -> tuple[np.ndarray, int]:
    """Truncated kernel of Gaussian amplitudes; returns (kernel, radius)."""
    radius = int(math.ceil(3.0 * sigma_px))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    d2 = ax[None, :] ** 2 + ax[:, None] ** 2
    amp = 1.0 / (math.sqrt(2.0 * math.pi) * sigma_px)
    return amp * np.exp(-d2 / (2.0 * sigma_px**2)), radius


class GazeMapAccumulator:
    """Incremental gaze-map builder: one writer appends samples, snapshots
    are safe to hand to readers.

    Appending the same samples in the same order as a one-shot build yields
    a bit-identical map (same per-sample addition order).
    """

    def __init__(self, width: int, height: int, sigma_px: float):
        if sigma_px <= 0:
            raise InvalidParameterError("sigma_px must be positive")
        if width < 1 or height < 1:
            raise InvalidParameterError("map dimensions must be positive")
        self._values = np.zeros((height, width), dtype=np.float64)
        self._kernel, self._radius = _gaussian_kernel(sigma_px)
        self._points: list[tuple[float, float]] = []
        self._skipped = 0

    @property
    def deposited(self) -> int:
        return len(self._points)

    @property
    def skipped(self) -> int:
        return self._skipped

    def add(self, samples) -> int:
        """Deposit the valid, in-bounds samples; returns how many landed."""
        h, w = self._values.shape
        r = self._radius
        k = self._kernel
        added = 0
        for s in samples:
            if not s.valid:
                continue
            cx = int(round(s.x))
            cy = int(round(s.y))
            if not (0 <= cx < w and 0 <= cy < h):
                self._skipped += 1
                continue
            x0, x1 = max(0, cx - r), min(w, cx + r + 1)
            y0, y1 = max(0, cy - r), min(h, cy + r + 1)
            self._values[y0:y1, x0:x1] += k[
                y0 - cy + r : y1 - cy + r, x0 - cx + r : x1 - cx + r
            ]
            self._points.append((float(s.x), float(s.y)))
            added += 1
        return added

    def snapshot(self) -> GazeMap:
        if not self._points:
            raise EmptyTraceError("no valid samples deposited")
        pts = np.array(self._points, dtype=np.float64).reshape(-1, 2)
        return GazeMap(
            map=GrayMap(self._values.copy()),
            total_weight=float(len(self._points)),
            points=pts,
            skipped=self._skipped,
        )


def build_gaze_map(trace: GazeTrace, frame_dims: tuple[int, int], sigma_px: float) -> GazeMap:
    """Splat every valid sample of the trace onto a (width, height) raster.

    Out-of-frame samples are skipped and counted in the result. Raises
    EmptyTraceError when nothing could be deposited.
    """
    width, height = frame_dims
    acc = GazeMapAccumulator(width, height, sigma_px)
    acc.add(trace.samples)
    if acc.deposited == 0:
        raise EmptyTraceError("gaze trace has no valid in-frame samples")
    return acc.snapshot()


@dataclass(frozen=True)
class AttentionDispersion:
    """Focusing-degree summary: normalized objective value and the optimal
    cluster center in continuous map coordinates."""

    score: float
    center: tuple[float, float]


def weighted_geometric_median(
    points: np.ndarray,
    weights: np.ndarray,
    tol: float = 1e-6,
    max_iter: int = 2000,
) -> np.ndarray:
    """Weiszfeld iteration with half-step dampening at coincident points."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    w = np.asarray(weights, dtype=np.float64)
    if pts.shape[0] == 0:
        raise EmptyMapError("no points")
    if pts.shape[0] == 1:
        return pts[0].copy()
    x = (pts * w[:, None]).sum(axis=0) / w.sum()
    for _ in range(max_iter):
        d = np.hypot(pts[:, 0] - x[0], pts[:, 1] - x[1])
        coincident = d < 1e-12
        if coincident.any():
            # Half-step toward the update computed from the other points.
            rest = ~coincident
            if not rest.any():
                return x
            inv = w[rest] / d[rest]
            t = (pts[rest] * inv[:, None]).sum(axis=0) / inv.sum()
            x_new = 0.5 * (x + t)
        else:
            inv = w / d
            x_new = (pts * inv[:, None]).sum(axis=0) / inv.sum()
        if np.hypot(*(x_new - x)) < tol:
            return x_new
        x = x_new
    return x


def dispersion_objective(
    points: np.ndarray,
    weights: np.ndarray,
    center: np.ndarray,
    map_dims: tuple[int, int],
) -> float:
    """Weighted distance sum normalized by sum(w) * sqrt(H*W) / 100."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    w = np.asarray(weights, dtype=np.float64)
    h, wd = map_dims[1], map_dims[0]
    d = np.hypot(pts[:, 0] - center[0], pts[:, 1] - center[1])
    z = w.sum() * math.sqrt(h * wd) / 100.0
    return float((w * d).sum() / z)


def attention_dispersion_score(gaze_map: GazeMap) -> AttentionDispersion:
    """Solve the weighted geometric-median objective over the deposited points.

    Point weights are the gaze-map values at the point locations. Raises
    EmptyMapError when the map carries no weight.
    """
    if gaze_map.total_weight <= 0 or gaze_map.points.shape[0] == 0:
        raise EmptyMapError("gaze map has zero total weight")
    pts = gaze_map.points
    w = gaze_map.point_weights()
    if not np.any(w > 0):
        raise EmptyMapError("all point weights are zero")
    center = weighted_geometric_median(pts, w)
    dims = (gaze_map.map.width, gaze_map.map.height)
    score = dispersion_objective(pts, w, center, dims)
    cx = float(np.clip(center[0], 0, gaze_map.map.width - 1))
    cy = float(np.clip(center[1], 0, gaze_map.map.height - 1))
    return AttentionDispersion(score=score, center=(cx, cy))


def binarize_map(values: np.ndarray, quantile: float) -> np.ndarray:
    """Threshold at the given quantile of the nonzero values; >= becomes 1."""
    v = np.asarray(values, dtype=np.float64)
    nz = v[v > 0]
    if nz.size == 0:
        raise EmptyMapError("cannot binarize an all-zero map")
    thr = float(np.quantile(nz, quantile))
    return (v >= thr).astype(np.float64)


def binarize_gaze(gaze_map: GazeMap, quantile: float) -> GrayMap:
    """Binary mask of the high-attention region of a gaze map."""
    return GrayMap(binarize_map(gaze_map.map.values, quantile))


# Plain-text trace files: header line then comma-separated records.
TRACE_HEADER = "t_ms,x,y,valid"


def write_trace(trace: GazeTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(TRACE_HEADER + "\n")
        for s in trace.samples:
            fh.write(f"{_num(s.t_ms)},{_num(s.x)},{_num(s.y)},{1 if s.valid else 0}\n")


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def read_trace(path, image_id: str = "") -> GazeTrace:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise EmptyTraceError(f"{path}: empty gaze file")
    start = 1 if lines[0].replace(" ", "") == TRACE_HEADER else 0
    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise InvalidParameterError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            t_ms = float(parts[0])
            x = float(parts[1])
            y = float(parts[2])
            valid = parts[3] in ("1", "true", "True")
        except ValueError as exc:
            raise InvalidParameterError(f"{path}:{lineno}: {exc}") from None
        samples.append(GazeSample(t_ms=t_ms, x=x, y=y, valid=valid))
    if not samples:
        raise EmptyTraceError(f"{path}: no samples")
    return GazeTrace(samples=tuple(samples), image_id=image_id)
