"""Encoder implementations behind a common encode_batch() protocol.

Names accepted by build_encoder:
    text:  "hash"            deterministic token feature hashing (offline)
           "hf:<model>"      pretrained transformer, mean-pooled hidden state
    image: "patch-stats"     per-patch channel statistics (offline)
           "hf:<model>"      pretrained vision transformer, mean-pooled
"""

from __future__ import annotations

import hashlib
import re

import numpy as np


class EncoderLoadError(RuntimeError):
    """The requested encoder (or its weights) is not available."""


_TOKEN_RE = re.compile(r"[a-z0-9]+")


class HashedTextEncoder:
    """Feature hashing over lowercase alphanumeric tokens.

    Each token deterministically maps to one bucket with a +/-1 sign; a
    text's embedding is the mean of its token vectors, i.e. mean pooling
    over the (never padded) token positions.
    """

    version = "hash-1"

    def __init__(self, dim: int):
        if dim < 1:
            raise EncoderLoadError("hash encoder needs embedding_dim >= 1")
        self.dim = dim

    def _token_vector(self, token: str) -> tuple[int, float]:
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "little") % self.dim
        sign = 1.0 if digest[8] % 2 == 0 else -1.0
        return bucket, sign

    def encode_batch(self, texts: list[str]) -> np.ndarray:
        out = np.zeros((len(texts), self.dim))
        for i, text in enumerate(texts):
            tokens = _TOKEN_RE.findall(text.lower())
            if not tokens:
                continue
            for token in tokens:
                bucket, sign = self._token_vector(token)
                out[i, bucket] += sign
            out[i] /= len(tokens)
        return out


class PatchStatsImageEncoder:
    """Per-patch channel means over a fixed grid of the resized image.

    The image is resized to 32x32 RGB and cut into a 4x4 grid; each patch
    contributes its three channel means, giving a 48-dimensional embedding
    (the mean pool over the pixels of each patch position).
    """

    version = "patch-stats-1"
    grid = 4
    size = 32

    def __init__(self):
        try:
            from PIL import Image  # noqa: F401
        except ImportError as exc:
            raise EncoderLoadError("patch-stats encoder needs Pillow") from exc
        self.dim = self.grid * self.grid * 3

    def encode_batch(self, paths: list[str]) -> np.ndarray:
        from PIL import Image

        out = np.zeros((len(paths), self.dim))
        step = self.size // self.grid
        for i, path in enumerate(paths):
            try:
                with Image.open(path) as img:
                    arr = np.asarray(img.convert("RGB").resize((self.size, self.size)), dtype=float) / 255.0
            except OSError as exc:
                raise EncoderLoadError(f"cannot read image {path}: {exc}") from exc
            feats = []
            for r in range(self.grid):
                for c in range(self.grid):
                    patch = arr[r * step : (r + 1) * step, c * step : (c + 1) * step]
                    feats.extend(patch.mean(axis=(0, 1)))
            out[i] = feats
        return out


class HfTextEncoder:
    """Pretrained transformer text encoder; attention-mask mean pooling."""

    def __init__(self, model_name: str, device: str = "cpu", max_length: int = 256):
        try:
            import torch  # noqa: F401
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise EncoderLoadError("hf text encoder needs transformers and torch") from exc
        try:
            self.tokenizer = AutoTokenizer.from_pretrained(model_name)
            self.model = AutoModel.from_pretrained(model_name)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load encoder {model_name!r}: {exc}") from exc
        import transformers

        self.model.eval().to(device)
        self.device = device
        self.max_length = max_length
        self.dim = int(self.model.config.hidden_size)
        self.version = f"{model_name}@transformers-{transformers.__version__}"

    def encode_batch(self, texts: list[str]) -> np.ndarray:
        import torch

        enc = self.tokenizer(
            texts, padding=True, truncation=True, max_length=self.max_length, return_tensors="pt"
        ).to(self.device)
        with torch.no_grad():
            hidden = self.model(**enc).last_hidden_state
        mask = enc["attention_mask"].unsqueeze(-1).to(hidden.dtype)
        pooled = (hidden * mask).sum(dim=1) / mask.sum(dim=1).clamp(min=1)
        return pooled.cpu().double().numpy()


class HfImageEncoder:
    """Pretrained vision transformer; mean pooling over patch positions."""

    def __init__(self, model_name: str, device: str = "cpu"):
        try:
            import torch  # noqa: F401
            from transformers import AutoImageProcessor, AutoModel
        except ImportError as exc:
            raise EncoderLoadError("hf image encoder needs transformers and torch") from exc
        try:
            self.processor = AutoImageProcessor.from_pretrained(model_name)
            self.model = AutoModel.from_pretrained(model_name)
        except Exception as exc:
            raise EncoderLoadError(f"cannot load encoder {model_name!r}: {exc}") from exc
        import transformers

        self.model.eval().to(device)
        self.device = device
        self.dim = int(self.model.config.hidden_size)
        self.version = f"{model_name}@transformers-{transformers.__version__}"

    def encode_batch(self, paths: list[str]) -> np.ndarray:
        import torch
        from PIL import Image

        images = []
        for path in paths:
            with Image.open(path) as img:
                images.append(img.convert("RGB").copy())
        inputs = self.processor(images=images, return_tensors="pt").to(self.device)
        with torch.no_grad():
            hidden = self.model(**inputs).last_hidden_state
        return hidden.mean(dim=1).cpu().double().numpy()


def build_encoder(modality: str, name: str, embedding_dim: int | None = None, device: str = "cpu"):
    if modality == "text":
        if name == "hash":
            if embedding_dim is None:
                raise EncoderLoadError("the hash encoder needs an explicit embedding_dim")
            return HashedTextEncoder(embedding_dim)
        if name.startswith("hf:"):
            return HfTextEncoder(name[3:], device=device)
        raise EncoderLoadError(f"unknown text encoder {name!r} (try 'hash' or 'hf:<model>')")
    if modality == "image":
        if name == "patch-stats":
            return PatchStatsImageEncoder()
        if name.startswith("hf:"):
            return HfImageEncoder(name[3:], device=device)
        raise EncoderLoadError(f"unknown image encoder {name!r} (try 'patch-stats' or 'hf:<model>')")
    raise EncoderLoadError(f"unknown modality {modality!r} (expected 'text' or 'image')")
