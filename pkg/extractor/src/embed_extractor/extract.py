"""Extraction jobs: manifest in, embedding CSV (plus provenance sidecar) out."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import EncoderLoadError, build_encoder

FLOAT_FMT = "%.17g"


@dataclass(frozen=True)
class ExtractJob:
    modality: str  # "text" or "image"
    input_manifest: str  # CSV with columns id,text (or id,path)
    encoder: str
    out_path: str
    embedding_dim: int | None = None
    batch_size: int = 32
    device: str = "cpu"

    def __post_init__(self):
        if self.modality not in ("text", "image"):
            raise ValueError(f"modality must be 'text' or 'image', got {self.modality!r}")
        if self.embedding_dim is not None and self.embedding_dim < 1:
            raise ValueError("embedding_dim must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


def _read_manifest(path: str) -> tuple[list[str], list[str]]:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2 or header[0] != "id":
            raise ValueError(f"{path}: expected header id,<text-or-path>")
        ids, payloads = [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            payloads.append(row[1])
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"{path}: duplicate ids {dupes[:3]}")
    if not ids:
        raise ValueError(f"{path}: manifest has no rows")
    return ids, payloads


def run_extract(job: ExtractJob) -> Path:
    """Encode every manifest row (in manifest order) and write the CSV."""
    ids, payloads = _read_manifest(job.input_manifest)
    encoder = build_encoder(job.modality, job.encoder, embedding_dim=job.embedding_dim, device=job.device)
    if job.embedding_dim is not None and encoder.dim != job.embedding_dim:
        raise EncoderLoadError(
            f"encoder {job.encoder!r} produces {encoder.dim}-dimensional embeddings, "
            f"job asked for {job.embedding_dim}"
        )

    chunks = []
    for start in range(0, len(payloads), job.batch_size):
        chunks.append(encoder.encode_batch(payloads[start : start + job.batch_size]))
    emb = np.vstack(chunks)
    if not np.isfinite(emb).all():
        raise ValueError("encoder produced non-finite values")

    out = Path(job.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    header = "id," + ",".join(f"e{j}" for j in range(encoder.dim))
    with open(out, "w") as fh:
        fh.write(header + "\n")
        for rid, row in zip(ids, emb):
            fh.write(rid + "," + ",".join(FLOAT_FMT % v for v in row) + "\n")

    sidecar = {
        "encoder": job.encoder,
        "encoder_version": getattr(encoder, "version", "unknown"),
        "modality": job.modality,
        "dim": encoder.dim,
        "pooling": "mean over non-padding positions",
        "rows": len(ids),
    }
    Path(str(out) + ".meta.json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return out


def verify_format(csv_path) -> list[str]:
    """Mirror of the import-side checks; returns violations (empty = ok)."""
    violations: list[str] = []
    path = Path(csv_path)
    if not path.exists():
        return [f"{path}: file not found"]
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return [f"{path}: empty file"]
        if header[0] != "id" or len(header) < 2:
            violations.append(f"{path}: header must be id,e0,... (got {header[:3]})")
        expected = [f"e{j}" for j in range(len(header) - 1)]
        if header[1:] != expected:
            violations.append(f"{path}: embedding columns must be named e0..e{len(header) - 2}")
        seen = set()
        width = len(header)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                violations.append(f"{path}:{lineno}: expected {width} cells, got {len(row)}")
                continue
            if row[0] in seen:
                violations.append(f"{path}:{lineno}: duplicate id {row[0]!r}")
            seen.add(row[0])
            for cell in row[1:]:
                try:
                    value = float(cell)
                except ValueError:
                    violations.append(f"{path}:{lineno}: non-numeric cell {cell!r}")
                    break
                if not np.isfinite(value):
                    violations.append(f"{path}:{lineno}: non-finite cell {cell!r}")
                    break
        if not seen:
            violations.append(f"{path}: no data rows")
    return violations
