"""CLI: extract embeddings from a corpus manifest, or verify a CSV's format."""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderLoadError
from .extract import ExtractJob, run_extract, verify_format


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-extract", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="encode a manifest of texts or image paths")
    p.add_argument("--modality", required=True, choices=["text", "image"])
    p.add_argument("--input", required=True, help="CSV with columns id,text (or id,path)")
    p.add_argument("--encoder", required=True, help="'hash', 'patch-stats', or 'hf:<model-name>'")
    p.add_argument("--out", required=True)
    p.add_argument("--embedding-dim", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")

    p = sub.add_parser("verify", help="check an embedding CSV against the import contract")
    p.add_argument("csv_path")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "extract":
        try:
            job = ExtractJob(
                modality=args.modality,
                input_manifest=args.input,
                encoder=args.encoder,
                out_path=args.out,
                embedding_dim=args.embedding_dim,
                batch_size=args.batch_size,
                device=args.device,
            )
            out = run_extract(job)
        except (EncoderLoadError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        print(f"wrote {out} (+ sidecar {out}.meta.json)")
        return 0
    if args.command == "verify":
        violations = verify_format(args.csv_path)
        if violations:
            for v in violations:
                print(v, file=sys.stderr)
            return 1
        print("ok")
        return 0
    return 1


if __name__ == "__main__":
    sys.exit(main())
