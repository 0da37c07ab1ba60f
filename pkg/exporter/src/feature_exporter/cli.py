"""Exporter command line: media manifest in, feature archive out."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .backbones import BackboneUnavailable
from .export import export
from .manifest import ExportJob, ManifestError, collect_labels, read_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="promptfuse-export",
        description="Extract text/video/audio features into a promptfuse archive.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="run a feature extraction job")
    p.add_argument("--manifest", required=True, help="JSONL sample manifest")
    p.add_argument("--out", required=True, help="archive output directory")
    p.add_argument("--frames", type=int, default=10,
                   help="video frames sampled per clip (l_v)")
    p.add_argument("--max-text", type=int, default=12, help="token budget (l_t)")
    p.add_argument("--max-audio", type=int, default=14, help="audio windows (l_a)")
    p.add_argument("--text-backbone", default="bert-base-uncased")
    p.add_argument("--video-backbone", default="swin_b")
    p.add_argument("--audio-backbone", default="wav2vec2-base-960h")
    p.add_argument("--backend", choices=("auto", "real", "offline"), default="auto",
                   help="real pretrained weights, offline stand-ins, or auto")
    p.add_argument("--labels", default=None,
                   help="comma-separated label vocabulary (default: from manifest)")
    p.add_argument("--skip-threshold", type=float, default=0.01,
                   help="fail when more than this fraction of samples skip")
    return parser


def cmd_export(args) -> int:
    manifest_path = Path(args.manifest)
    if not manifest_path.is_file():
        print(f"error: manifest not found: {manifest_path}", file=sys.stderr)
        return 1
    samples = read_manifest(manifest_path)
    labels = (args.labels.split(",") if args.labels else collect_labels(samples))
    job = ExportJob(
        samples=samples, label_names=labels, out_dir=Path(args.out),
        text_backbone=args.text_backbone, video_backbone=args.video_backbone,
        audio_backbone=args.audio_backbone, backend=args.backend,
        frames=args.frames, max_text=args.max_text, max_audio=args.max_audio,
        skip_threshold=args.skip_threshold)
    report = export(job)
    for rec in report.skipped:
        print(f"skipped {rec['id']}: {rec['error']}", file=sys.stderr)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    used = {k: f"{v['name']} ({v['kind']}, width {v['width']})"
            for k, v in report.backbones.items()}
    print(json.dumps({"archive": str(report.archive), "exported": report.exported,
                      "skipped": len(report.skipped), "backbones": used}, indent=2))
    if report.skip_fraction > job.skip_threshold:
        print(f"error: {report.skip_fraction:.1%} of samples skipped "
              f"(threshold {job.skip_threshold:.1%})", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return cmd_export(args)
    except (ManifestError, BackboneUnavailable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
