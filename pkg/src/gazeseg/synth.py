"""Deterministic synthetic fundus generator with exact lesion ground truth.

Renders an orange field disk on black with speckle texture, dark curved
vessel strokes, and small round reddish lesions laid down as anti-aliased
disks. Lesions are flat-filled (smoother than the textured surround),
redder than the field, and kept clear of vessels and borders so each one
individually satisfies the shape/color/texture filter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Frame, GazeSegError, GrayMap, InvalidParameterError

# Palette, sRGB. Field noise keeps background texture above lesion texture.
BACKGROUND_RGB = (6, 6, 8)
FIELD_RGB = (198, 122, 52)
FIELD_NOISE_STD = 7.0
# GT marks confidently-lesion pixels; the 0..0.9 coverage blend band stays
# background so each lesion's interior texture is flatter than its
# surround (the filter contract).
GT_COVERAGE = 0.9
VESSEL_RGB_DARK = (96, 30, 30)
VESSEL_RGB_LIGHT = (148, 64, 48)
LESION_RGB = (152, 34, 38)

AA_SUPERSAMPLE = 4


class GenerationError(GazeSegError):
    pass


@dataclass(frozen=True)
class Lesion:
    center: tuple[float, float]
    radius: float


@dataclass
class SynthSpec:
    seed: int = 0
    image_dims: tuple[int, int] = (256, 256)
    n_lesions: int = 5
    lesion_radius_px: tuple[float, float] = (3.0, 8.0)
    vessel_count: int = 6
    background_tint: tuple[int, int, int] = FIELD_RGB
    contrast: float = 1.0
    max_retries: int = 200

    def validate(self) -> None:
        w, h = self.image_dims
        if w < 64 or h < 64:
            raise InvalidParameterError("image_dims must be at least 64x64")
        lo, hi = self.lesion_radius_px
        if not (0 < lo <= hi):
            raise InvalidParameterError("lesion_radius_px must be a positive range")
        if self.n_lesions < 0 or self.vessel_count < 0:
            raise InvalidParameterError("counts must be non-negative")


def _disk_coverage(w: int, h: int, cx: float, cy: float, r: float) -> np.ndarray:
    """Anti-aliased disk coverage in [0,1] via supersampling."""
    s = AA_SUPERSAMPLE
    pad = int(np.ceil(r)) + 2
    x0, x1 = max(0, int(cx) - pad), min(w, int(cx) + pad + 1)
    y0, y1 = max(0, int(cy) - pad), min(h, int(cy) + pad + 1)
    cov = np.zeros((h, w))
    if x0 >= x1 or y0 >= y1:
        return cov
    sub = (np.arange(s) + 0.5) / s
    xs = x0 + np.add.outer(np.arange(x1 - x0), sub).ravel()
    ys = y0 + np.add.outer(np.arange(y1 - y0), sub).ravel()
    dx2 = (xs - cx) ** 2
    dy2 = (ys - cy) ** 2
    hit = (dy2[:, None] + dx2[None, :]) <= r * r
    block = hit.reshape(y1 - y0, s, x1 - x0, s).mean(axis=(1, 3))
    cov[y0:y1, x0:x1] = block
    return cov


def _stroke_coverage(
    w: int, h: int, p0, p1, p2, width: float, n_steps: int = 160
) -> tuple[np.ndarray, np.ndarray]:
    """Quadratic-curve stroke coverage by stamping disks along the curve;
    also returns per-pixel curve parameter t for color interpolation."""
    cov = np.zeros((h, w))
    tpar = np.zeros((h, w))
    for i in range(n_steps + 1):
        t = i / n_steps
        x = (1 - t) ** 2 * p0[0] + 2 * (1 - t) * t * p1[0] + t**2 * p2[0]
        y = (1 - t) ** 2 * p0[1] + 2 * (1 - t) * t * p1[1] + t**2 * p2[1]
        d = _disk_coverage(w, h, x, y, width / 2.0)
        newly = d > cov
        tpar[newly] = t
        cov = np.maximum(cov, d)
    return cov, tpar


def _composite(img: np.ndarray, cov: np.ndarray, rgb: np.ndarray) -> None:
    a = cov[:, :, None]
    img *= 1.0 - a
    img += a * rgb


def generate(spec: SynthSpec) -> tuple[Frame, GrayMap, list[Lesion]]:
    """Render one synthetic fundus; returns (frame, gt mask, lesions).

    Output is a pure function of the spec (seeded RNG); placement retries
    are bounded and failure raises GenerationError naming the constraint.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    w, h = spec.image_dims
    img = np.zeros((h, w, 3), dtype=np.float64)
    img[:, :] = BACKGROUND_RGB

    # Fundus field disk with speckle texture.
    cx, cy = w / 2.0, h / 2.0
    field_r = 0.47 * min(w, h)
    field_cov = _disk_coverage(w, h, cx, cy, field_r)
    tint = np.array(spec.background_tint, dtype=np.float64)
    _composite(img, field_cov, tint)
    noise = rng.normal(0.0, FIELD_NOISE_STD, size=(h, w, 3))
    img += noise * (field_cov > 0.5)[:, :, None]

    # Vessels: quadratic strokes from near the field center outward, with a
    # luminance gradient along the curve so region growing stops mid-vessel.
    vessel_mask = np.zeros((h, w), dtype=bool)
    dark = np.array(VESSEL_RGB_DARK, dtype=np.float64)
    light = np.array(VESSEL_RGB_LIGHT, dtype=np.float64)
    for _ in range(spec.vessel_count):
        ang = rng.uniform(0, 2 * np.pi)
        r0 = rng.uniform(0.05, 0.15) * field_r
        r2 = rng.uniform(0.75, 0.95) * field_r
        p0 = (cx + r0 * np.cos(ang), cy + r0 * np.sin(ang))
        p2 = (cx + r2 * np.cos(ang + rng.uniform(-0.6, 0.6)), cy + r2 * np.sin(ang + rng.uniform(-0.6, 0.6)))
        mid_ang = ang + rng.uniform(-0.5, 0.5)
        rm = 0.5 * (r0 + r2) * rng.uniform(0.8, 1.2)
        p1 = (cx + rm * np.cos(mid_ang), cy + rm * np.sin(mid_ang))
        width = rng.uniform(2.0, 3.2)
        cov, tpar = _stroke_coverage(w, h, p0, p1, p2, width)
        cov = cov * (field_cov > 0.5)
        color = dark[None, None, :] + tpar[:, :, None] * (light - dark)[None, None, :]
        a = cov[:, :, None]
        img = img * (1.0 - a) + a * color
        vessel_mask |= cov > 0.5

    # Lesions: flat anti-aliased disks, clear of borders, vessels and each
    # other; contrast scales how far the lesion color sits from the field.
    lesion_color = tint + (np.array(LESION_RGB, dtype=np.float64) - tint) * spec.contrast
    gt = np.zeros((h, w), dtype=bool)
    lesions: list[Lesion] = []
    occupied = vessel_mask.copy()
    for k in range(spec.n_lesions):
        placed = False
        for _ in range(spec.max_retries):
            r = rng.uniform(*spec.lesion_radius_px)
            margin = 2.0 * r
            ang = rng.uniform(0, 2 * np.pi)
            rad = rng.uniform(0.15, 0.8) * (field_r - margin)
            lx, ly = cx + rad * np.cos(ang), cy + rad * np.sin(ang)
            if not (margin <= lx < w - margin and margin <= ly < h - margin):
                continue
            cov = _disk_coverage(w, h, lx, ly, r)
            core = cov >= GT_COVERAGE
            if not core.any():
                continue
            # Full halo disjointness from vessels and other lesions; this is
            # stricter than the 30% vessel-overlap bound and keeps each
            # lesion's texture/color clean for the filter contract.
            if np.logical_and(cov > 0, occupied).any():
                continue
            _composite(img, cov, lesion_color)
            gt |= core
            occupied |= cov > 0
            lesions.append(Lesion(center=(float(lx), float(ly)), radius=float(r)))
            placed = True
            break
        if not placed:
            raise GenerationError(
                f"could not place lesion {k + 1}/{spec.n_lesions}: "
                "vessel-overlap/border constraints unsatisfiable"
            )

    frame = Frame(np.clip(np.rint(img), 0, 255).astype(np.uint8))
    return frame, GrayMap(gt.astype(np.float64)), lesions
