"""Populate events.jsonl embedding fields from raw event text.

Each input line is one JSON event object carrying a `text` field (search
query or video title).  The adapter writes the same line back with an
`embedding` array holding the encoder's classification-token vector for
the text.  Key order and compact JSON formatting are preserved, so for
conforming inputs every non-embedding byte passes through unchanged.

Identical texts are encoded once and share one cached vector, which makes
the output independent of batch boundaries and bitwise-stable across runs.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "bert-base-uncased"
DEFAULT_BATCH = 64
DEFAULT_MAX_TOKENS = 64


class EncoderError(RuntimeError):
    """The encoder or tokenizer could not be loaded."""


@dataclass(frozen=True)
class EmbedRequest:
    input_path: Path
    output_path: Path
    batch_size: int = DEFAULT_BATCH
    model: str = DEFAULT_MODEL
    max_tokens: int = DEFAULT_MAX_TOKENS

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_tokens < 2:
            raise ValueError(f"max_tokens must be >= 2, got {self.max_tokens}")


@dataclass
class SkipReport:
    """Counts plus the encoder identity, emitted on stdout by the CLI."""

    lines: int = 0
    embedded: int = 0
    skipped: int = 0
    model: str = ""
    dim: int | None = None

    def to_dict(self) -> dict:
        return {
            "lines": self.lines,
            "embedded": self.embedded,
            "skipped": self.skipped,
            "model": self.model,
            "dim": self.dim,
        }


def load_encoder(model_id: str):
    """Tokenizer and encoder in deterministic inference mode."""
    try:
        import torch
        from transformers import AutoModel, AutoTokenizer

        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:  # hub lookup, missing files, bad checkpoint
        raise EncoderError(f"cannot load encoder {model_id!r}: {exc}") from exc
    model.eval()
    torch.set_grad_enabled(False)
    return tokenizer, model


def encode_texts(
    texts: list[str],
    tokenizer,
    model,
    *,
    batch_size: int = DEFAULT_BATCH,
    max_tokens: int = DEFAULT_MAX_TOKENS,
) -> np.ndarray:
    """Classification-token vectors for a list of texts, batched."""
    import torch

    chunks = []
    with torch.no_grad():
        for start in range(0, len(texts), batch_size):
            batch = texts[start : start + batch_size]
            encoded = tokenizer(
                batch,
                padding=True,
                truncation=True,
                max_length=max_tokens,
                return_tensors="pt",
            )
            output = model(**encoded)
            chunks.append(output.last_hidden_state[:, 0, :].cpu().numpy())
    if not chunks:
        hidden = int(model.config.hidden_size)
        return np.empty((0, hidden), dtype=np.float32)
    return np.concatenate(chunks, axis=0)


def embed_file(request: EmbedRequest) -> SkipReport:
    """Rewrite the events file with embeddings filled in from text.

    Events with empty or missing text are emitted with `embedding: null`
    and counted as skipped (unless they already carry an embedding, which
    passes through untouched).  Line order is preserved; identical texts
    receive identical vectors.
    """
    input_path = Path(request.input_path)
    if not input_path.exists():
        raise FileNotFoundError(f"input file not found: {input_path}")

    rows: list[dict] = []
    with input_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(
                    f"input line {lineno}: invalid JSON ({exc.msg})"
                ) from exc
            if not isinstance(obj, dict):
                raise ValueError(f"input line {lineno}: expected an object")
            rows.append(obj)

    unique_texts: list[str] = []
    seen: set[str] = set()
    for obj in rows:
        text = obj.get("text")
        if isinstance(text, str) and text.strip() and text not in seen:
            seen.add(text)
            unique_texts.append(text)

    report = SkipReport(lines=len(rows), model=request.model)
    cache: dict[str, list[float]] = {}
    if unique_texts:
        tokenizer, model = load_encoder(request.model)
        vectors = encode_texts(
            unique_texts,
            tokenizer,
            model,
            batch_size=request.batch_size,
            max_tokens=request.max_tokens,
        )
        report.dim = int(vectors.shape[1])
        cache = {
            text: [float(v) for v in vec]
            for text, vec in zip(unique_texts, vectors)
        }

    output_path = Path(request.output_path)
    with output_path.open("w") as fh:
        for obj in rows:
            text = obj.get("text")
            if isinstance(text, str) and text.strip():
                obj["embedding"] = cache[text]
                report.embedded += 1
            elif obj.get("embedding") is not None:
                pass  # already embedded upstream; leave untouched
            else:
                obj["embedding"] = None
                report.skipped += 1
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")

    logger.info(
        "embedded %d/%d lines (%d skipped) with %s",
        report.embedded, report.lines, report.skipped, report.model,
    )
    return report
