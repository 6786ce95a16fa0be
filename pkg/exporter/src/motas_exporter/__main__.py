"""Minimal runner: `python -m motas_exporter export --job job.json` or
`python -m motas_exporter transcribe --manifest M --model ID --out-dir D`."""

from __future__ import annotations

import argparse
import sys

from .formats import FormatError
from .jobs import ExportError, export_embeddings, load_job, transcribe
from .models import ModelIdError, ModelLoadError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="motas-exporter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="run an embedding export job")
    p.add_argument("--job", required=True, help="JSON job file")

    p = sub.add_parser("transcribe", help="transcribe a manifest's audio")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, help="pinned model id family:name@revision")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--workers", type=int, default=1)

    args = parser.parse_args(argv)
    try:
        if args.command == "export":
            report = export_embeddings(load_job(args.job))
            print(f"wrote {report.written} rows (dim {report.dim}), "
                  f"skipped {len(report.skipped)}")
            for skip in report.skipped:
                print(f"  skipped {skip.record_id}: {skip.reason}", file=sys.stderr)
        else:
            report = transcribe(args.manifest, args.model, args.out_dir, args.workers)
            print(f"wrote {report.written} transcripts, skipped {len(report.skipped)}")
            for skip in report.skipped:
                print(f"  skipped {skip.record_id}: {skip.reason}", file=sys.stderr)
        return 0
    except (ExportError, FormatError, ModelIdError, ModelLoadError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
