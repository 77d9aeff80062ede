"""`embed` command: fill events.jsonl embedding fields from text."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .adapter import (
    DEFAULT_BATCH,
    DEFAULT_MAX_TOKENS,
    DEFAULT_MODEL,
    EmbedRequest,
    EncoderError,
    embed_file,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed",
        description="Populate events.jsonl embedding fields from event text",
    )
    parser.add_argument("--in", dest="input_path", required=True,
                        help="input events.jsonl with text fields")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="output events.jsonl with embeddings")
    parser.add_argument("--batch", type=int, default=DEFAULT_BATCH)
    parser.add_argument("--model", default=DEFAULT_MODEL,
                        help="encoder identifier or local checkpoint path")
    parser.add_argument("--max-tokens", type=int, default=DEFAULT_MAX_TOKENS)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    args = build_parser().parse_args(argv)
    try:
        request = EmbedRequest(
            input_path=Path(args.input_path),
            output_path=Path(args.output_path),
            batch_size=args.batch,
            model=args.model,
            max_tokens=args.max_tokens,
        )
        report = embed_file(request)
    except (EncoderError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
