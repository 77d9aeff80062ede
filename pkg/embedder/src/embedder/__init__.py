"""Offline text-to-vector adapter for the activity-log pipeline."""

from .adapter import (
    DEFAULT_MODEL,
    EmbedRequest,
    EncoderError,
    SkipReport,
    embed_file,
    encode_texts,
    load_encoder,
)

__version__ = "0.1.0"
