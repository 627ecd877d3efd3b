"""Dataset layout, the three-arm ablation runner and the grid-size sweep."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import Frame, GrayMap, InvalidParameterError, PipelineConfig
from .evaluate import (
    EvalReport,
    ImageCase,
    evaluate_masks,
    pooled_report,
    simulate_gaze,
    write_pr_table,
)
from .gaze import read_trace, write_trace
from .imgio import load_frame, load_mask, save_frame, save_mask
from .pipeline import run_pipeline
from .segmenter import SegmenterBackend
from .synth import SynthSpec, generate

ABLATION_GRID_N = 200


def dataset_paths(root: Path, image_id: str) -> tuple[Path, Path, Path]:
    return (
        root / "images" / f"{image_id}.png",
        root / "gaze" / f"{image_id}.csv",
        root / "masks" / f"{image_id}.png",
    )


def write_case(root: Path, case: ImageCase) -> None:
    for sub in ("images", "gaze", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    img_p, gaze_p, mask_p = dataset_paths(root, case.image_id)
    save_frame(case.frame, img_p)
    write_trace(case.trace, gaze_p)
    save_mask(case.gt, mask_p)


def load_dataset(root) -> list[ImageCase]:
    root = Path(root)
    img_dir = root / "images"
    if not img_dir.is_dir():
        raise InvalidParameterError(f"{root}: missing images/ directory")
    cases = []
    for img_p in sorted(img_dir.glob("*.png")):
        image_id = img_p.stem
        _, gaze_p, mask_p = dataset_paths(root, image_id)
        if not gaze_p.exists() or not mask_p.exists():
            continue
        cases.append(
            ImageCase(
                image_id=image_id,
                frame=load_frame(img_p),
                trace=read_trace(gaze_p, image_id=image_id),
                gt=load_mask(mask_p),
            )
        )
    return cases


def synth_corpus(
    n_images: int = 50,
    base_seed: int = 1000,
    n_lesions: int = 5,
    image_dims: tuple[int, int] = (256, 256),
    jitter_sigma_px: float = 25.0,
    distractor_rate: float = 0.0,
) -> list[ImageCase]:
    """Seeded synthetic corpus with simulated review traces."""
    cases = []
    for k in range(n_images):
        spec = SynthSpec(seed=base_seed + k, image_dims=image_dims, n_lesions=n_lesions)
        frame, gt, _ = generate(spec)
        trace = simulate_gaze(
            gt,
            jitter_sigma_px=jitter_sigma_px,
            distractor_rate=distractor_rate,
            frame=frame,
            seed=base_seed + k,
        )
        cases.append(ImageCase(image_id=f"synth_{spec.seed:05d}", frame=frame, trace=trace, gt=gt))
    return cases


def write_synth_dataset(root, **kwargs) -> list[ImageCase]:
    root = Path(root)
    cases = synth_corpus(**kwargs)
    for c in cases:
        write_case(root, c)
    return cases


ARMS = ("dense_grid", "saliency_prompts", "saliency_dkf")


def run_arm(
    cases: list[ImageCase],
    config: PipelineConfig,
    backend: SegmenterBackend,
    arm: str,
) -> tuple[EvalReport, list[tuple[list, GrayMap]]]:
    """Run one ablation arm over the corpus and build its pooled report."""
    if arm == "dense_grid":
        mode, grid_n, use_dkf = "grid", ABLATION_GRID_N, False
    elif arm == "saliency_prompts":
        mode, grid_n, use_dkf = "saliency", None, False
    elif arm == "saliency_dkf":
        mode, grid_n, use_dkf = "saliency", None, True
    else:
        raise InvalidParameterError(f"unknown ablation arm {arm!r}")
    per_image = []
    t0 = time.perf_counter()
    prompt_total = 0
    for case in cases:
        res = run_pipeline(
            case.frame, case.trace, config, backend,
            apply_filter=use_dkf, prompt_mode=mode, grid_n=grid_n,
        )
        masks = res.masks
        prompt_total += res.prompt_count
        per_image.append((masks, case.gt))
    elapsed = (time.perf_counter() - t0) * 1e3
    report = pooled_report(per_image, timing_ms={"total_ms": elapsed})
    report.extras["arm"] = arm
    report.extras["prompt_total"] = prompt_total
    return report, per_image


def ablation_run(
    cases: list[ImageCase],
    config: PipelineConfig,
    backend: SegmenterBackend,
    out_dir=None,
) -> dict[str, EvalReport]:
    """Three arms: dense grid, saliency prompts, saliency + filter.

    Optionally writes one PR table per arm plus a combined curve file.
    """
    reports: dict[str, EvalReport] = {}
    for arm in ARMS:
        report, _ = run_arm(cases, config, backend, arm)
        reports[arm] = report
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        combined_lines = []
        for arm, rep in reports.items():
            write_pr_table(rep.pr_curve, out / f"pr_{arm}.txt")
            (out / f"report_{arm}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
            for p, r, t in rep.pr_curve:
                combined_lines.append(f"{arm} {r:.6f} {p:.6f} {t:.6f}")
        (out / "pr_combined.txt").write_text("\n".join(combined_lines) + "\n", encoding="utf-8")
    return reports


@dataclass
class SweepRow:
    grid_n: int
    prompt_total: int
    mean_prompts_per_image: float
    total_ms: float
    mean_ms_per_image: float
    aupr: float


def n_sweep(
    cases: list[ImageCase],
    config: PipelineConfig,
    backend: SegmenterBackend,
    n_values=(50, 100, 200),
    full_coverage: bool = True,
) -> list[SweepRow]:
    """Prompt count and wall time per grid resolution N.

    With full_coverage=True the salient set is the whole ROI (dense grid),
    so the prompt count grows strictly with N regardless of image content.
    """
    rows = []
    mode = "grid" if full_coverage else "saliency"
    for n in n_values:
        t0 = time.perf_counter()
        prompt_total = 0
        per_image = []
        for case in cases:
            res = run_pipeline(
                case.frame, case.trace, config, backend,
                apply_filter=True, prompt_mode=mode, grid_n=int(n),
            )
            prompt_total += res.prompt_count
            per_image.append((res.masks, case.gt))
        elapsed = (time.perf_counter() - t0) * 1e3
        report = pooled_report(per_image)
        rows.append(
            SweepRow(
                grid_n=int(n),
                prompt_total=prompt_total,
                mean_prompts_per_image=prompt_total / max(1, len(cases)),
                total_ms=elapsed,
                mean_ms_per_image=elapsed / max(1, len(cases)),
                aupr=report.aupr,
            )
        )
    return rows


def sweep_table(rows: list[SweepRow]) -> str:
    header = "N prompts_total prompts_mean time_total_ms time_mean_ms aupr"
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.grid_n} {r.prompt_total} {r.mean_prompts_per_image:.2f} "
            f"{r.total_ms:.1f} {r.mean_ms_per_image:.2f} {r.aupr:.4f}"
        )
    return "\n".join(lines) + "\n"
