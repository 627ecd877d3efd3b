"""Command-line entry points: run, eval, synth, serve, adapter."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .core import ConfigError, GazeSegError, InvalidParameterError, PipelineConfig
from .dkf import report_records
from .evaluate import evaluate_masks, lesion_match
from .gaze import read_trace
from .harness import ablation_run, load_dataset, n_sweep, sweep_table, write_synth_dataset
from .imgio import load_frame, save_frame, save_mask
from .pipeline import render_overlay, run_pipeline, union_mask
from .rle import encode_mask
from .segmenter import BaselineBackend


def _load_config(path: str | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_file(path)


def _make_backend(spec: str):
    if spec == "baseline":
        return BaselineBackend()
    if spec.startswith("external:"):
        from .external import ExternalBackend

        return ExternalBackend(spec[len("external:") :])
    raise InvalidParameterError(
        f"unknown backend {spec!r}; use 'baseline' or 'external:<endpoint>'"
    )


def cmd_run(args) -> int:
    config = _load_config(args.config)
    backend = _make_backend(args.backend)
    frame = load_frame(args.image)
    trace = read_trace(args.gaze)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result = run_pipeline(
        frame, trace, config, backend,
        debug_dir=(out / "debug") if args.debug_maps else None,
    )
    save_frame(render_overlay(frame, result.masks), out / "overlay.png")
    save_mask(union_mask(result.masks, (frame.height, frame.width)), out / "mask.png")
    (out / "dkf_report.jsonl").write_text(report_records(result.reports), encoding="utf-8")
    masks_payload = [
        {
            "rle": encode_mask(m.mask),
            "bbox": list(m.bbox),
            "confidence": m.confidence,
            "point": [m.source_prompt.x, m.source_prompt.y],
        }
        for m in result.masks
    ]
    (out / "masks.json").write_text(
        json.dumps(masks_payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    (out / "timing.json").write_text(
        json.dumps(result.timing_ms, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    print(
        f"{len(result.masks)} accepted mask(s), {result.prompt_count} prompts, "
        f"{len(result.rois)} ROI(s); outputs in {out}"
    )
    return 0


def cmd_eval(args) -> int:
    config = _load_config(args.config)
    backend = _make_backend(args.backend)
    cases = load_dataset(args.dataset)
    if not cases:
        print(f"error: no usable cases under {args.dataset}", file=sys.stderr)
        return 1
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ran = False
    if args.ablation:
        reports = ablation_run(cases, config, backend, out_dir=out)
        for arm, rep in reports.items():
            print(f"{arm}: AUPR={rep.aupr:.4f} Dice={rep.dice:.4f} "
                  f"lesion_recall={rep.lesion_recall:.3f}")
        ran = True
    if args.n_sweep:
        ns = [int(v) for v in args.n_sweep.split(",")]
        rows = n_sweep(cases, config, backend, n_values=ns)
        table = sweep_table(rows)
        (out / "n_sweep.txt").write_text(table, encoding="utf-8")
        print(table, end="")
        ran = True
    if not ran:
        per_image = []
        matches = n_gt = n_pred = 0
        for case in cases:
            res = run_pipeline(case.frame, case.trace, config, backend)
            per_image.append((res.masks, case.gt))
            m, g, p = lesion_match([mm.mask for mm in res.masks], case.gt.values)
            matches += m
            n_gt += g
            n_pred += p
        from .evaluate import pooled_report, write_pr_table

        rep = pooled_report(per_image)
        (out / "report.json").write_text(rep.to_json() + "\n", encoding="utf-8")
        write_pr_table(rep.pr_curve, out / "pr.txt")
        print(f"AUPR={rep.aupr:.4f} Dice={rep.dice:.4f} "
              f"lesion_recall={rep.lesion_recall:.3f} ({len(cases)} images)")
    return 0


def cmd_synth(args) -> int:
    cases = write_synth_dataset(
        args.out,
        n_images=args.n_images,
        base_seed=args.seed,
        n_lesions=args.n_lesions,
        image_dims=(args.size, args.size),
        jitter_sigma_px=args.jitter,
        distractor_rate=args.distractors,
    )
    print(f"wrote {len(cases)} synthetic cases to {args.out}")
    return 0


def cmd_serve(args) -> int:
    from .service import serve

    config = _load_config(args.config)
    backend = _make_backend(args.backend)
    server, _ = serve(
        args.bind, config, backend,
        debounce_ms=args.debounce_ms, state_dir=args.state_dir,
    )
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def cmd_adapter(args) -> int:
    from .wire import serve_http, serve_stdio

    backend = BaselineBackend()
    if args.transport == "stdio":
        serve_stdio(backend)
        return 0
    server = serve_http(backend, port=args.port)
    host, port = server.server_address[:2]
    print(f"adapter listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gazeseg",
        description="Gaze-guided micro-lesion segmentation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the pipeline once on an image + gaze trace")
    p.add_argument("image")
    p.add_argument("gaze")
    p.add_argument("--config", default=None)
    p.add_argument("--backend", default="baseline")
    p.add_argument("--out", default="gazeseg_out")
    p.add_argument("--debug-maps", action="store_true",
                   help="dump intermediate maps as 16-bit PNGs")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="evaluate on a dataset directory")
    p.add_argument("dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--backend", default="baseline")
    p.add_argument("--out", default="gazeseg_eval")
    p.add_argument("--ablation", action="store_true")
    p.add_argument("--n-sweep", default=None, metavar="50,100,200")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="write a synthetic dataset in the eval layout")
    p.add_argument("--out", default="synth_data")
    p.add_argument("--n-images", type=int, default=10)
    p.add_argument("--n-lesions", type=int, default=5)
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--seed", type=int, default=1000)
    p.add_argument("--jitter", type=float, default=25.0)
    p.add_argument("--distractors", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the annotation session service")
    p.add_argument("--bind", default="127.0.0.1:8765")
    p.add_argument("--config", default=None)
    p.add_argument("--backend", default="baseline")
    p.add_argument("--debounce-ms", type=float, default=300.0)
    p.add_argument("--state-dir", default=None)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("adapter", help="host the baseline backend over the wire protocol")
    p.add_argument("--transport", choices=("stdio", "http"), default="stdio")
    p.add_argument("--port", type=int, default=0)
    p.set_defaults(func=cmd_adapter)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, InvalidParameterError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GazeSegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
