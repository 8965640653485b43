"""CLI: export neural document embeddings into the engine's store format."""

from __future__ import annotations

import argparse
import sys

from .exporter import ExportError, ExportJob, export_embeddings


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="styledetect-export",
        description="Embed a document corpus with a pretrained encoder and write a styledetect store",
    )
    parser.add_argument("--input", required=True, help="line-delimited JSON corpus")
    parser.add_argument("--encoder", required=True, help="model id or local checkpoint directory")
    parser.add_argument("--output", required=True, help="output embedding store path")
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--max-tokens", type=int, default=128)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            input_path=args.input,
            encoder=args.encoder,
            output_path=args.output,
            batch_size=args.batch_size,
            max_tokens=args.max_tokens,
        )
        count = export_embeddings(job)
    except ExportError as exc:
        print(f"error[{exc.code}]: {exc.message}", file=sys.stderr)
        return 1
    print(f"wrote {count} embeddings to {args.output}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
