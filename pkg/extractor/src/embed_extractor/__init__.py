"""Batch inference pipelines that turn raw text or image corpora into
embedding CSV files consumable by ``mmdml import-embeddings``.

Encoders are inference-only.  Pretrained transformer backbones are used
when their weights are available locally; deterministic offline encoders
(token hashing for text, patch statistics for images) cover air-gapped
runs and tests.  Pooling is always the mean over non-padding positions.
"""

from .extract import ExtractJob, run_extract, verify_format
from .encoders import EncoderLoadError, build_encoder

__version__ = "0.1.0"

__all__ = ["EncoderLoadError", "ExtractJob", "build_encoder", "run_extract", "verify_format"]
