"""Command-line interface: reproducible generation, estimation, benchmarking,
tracing, and embedding import, all driven by JSON configs.

Exit codes: 0 success, 2 validation/config error, 3 numerical or
identification error, 4 I/O error.  Every command writes a ``run.json``
into its output directory; ``mmdml replay run.json`` re-executes it.
Environment variables are never consulted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dgp as dgp_mod
from . import presets
from .core import ModalitySpec, Violation, load_dataset, save_dataset
from .engine import SplitScheme, repeat_splits, run_crossfit, run_split
from .errors import (
    ConfigError,
    DataValidationError,
    DegenerateTargetError,
    IdentificationError,
    MmdmlError,
    TrainingDivergedError,
)
from .evaluation import ModelEntry, epoch_trace, run_benchmark, write_report, write_trace
from .learners import EmbeddingSpec, FusionArch, FusionSpec, GbtSpec, OracleSpec, RidgeSpec

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def dgp_config_from_dict(d: dict) -> dgp_mod.DgpConfig:
    specs = tuple(ModalitySpec.from_dict(s) for s in d["modalities"])
    return dgp_mod.DgpConfig(
        n=int(d["n"]),
        theta0=float(d["theta0"]),
        snr=float(d["snr"]),
        seed=int(d["seed"]),
        modality_specs=specs,
        mode=d.get("mode", "surrogate"),
        target_files=d.get("target_files"),
    )


def learner_spec_from_dict(d: dict, seed: int = 0):
    kind = d.get("kind")
    d = {k: v for k, v in d.items() if k != "kind"}
    d.setdefault("seed", seed)
    if kind == "ridge":
        return RidgeSpec(**d)
    if kind == "gbt":
        return GbtSpec(**d)
    if kind == "fusion":
        arch_keys = ("encoder_widths", "fusion_width", "embedding_dim", "activation")
        arch_kwargs = {k: d.pop(k) for k in arch_keys if k in d}
        if "encoder_widths" in arch_kwargs:
            arch_kwargs["encoder_widths"] = tuple(arch_kwargs["encoder_widths"])
        return FusionSpec(arch=FusionArch(**arch_kwargs), **d)
    if kind == "embedding":
        fusion = learner_spec_from_dict({"kind": "fusion", **d.pop("fusion", {})}, seed)
        gbt = learner_spec_from_dict({"kind": "gbt", **d.pop("gbt", {})}, seed)
        return EmbeddingSpec(fusion=fusion, gbt=gbt, **d)
    if kind == "oracle":
        return OracleSpec(**d)
    raise ConfigError(f"unknown learner kind {kind!r}")


def scheme_from_dict(d: dict) -> SplitScheme:
    return SplitScheme(
        kind=d.get("kind", "single"),
        train_fraction=float(d.get("train_fraction", 0.5)),
        k=int(d.get("k", 5)),
        repeats=int(d.get("repeats", 1)),
        seed=int(d.get("seed", 0)),
    )


def _resolve_learners(args_config: str | None, seed: int) -> dict:
    registry = presets.default_learners(seed)
    if args_config:
        payload = _load_json(args_config)
        for name, spec_dict in payload.items():
            registry[name] = learner_spec_from_dict(dict(spec_dict), seed)
    return registry


def _write_run_json(out_dir: Path, command: str, config: dict):
    out_dir.mkdir(parents=True, exist_ok=True)
    payload = {"command": command, "config": config}
    (out_dir / "run.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(config_path: str, out_dir: str) -> int:
    config_dict = _load_json(config_path)
    config = dgp_config_from_dict(config_dict)
    ds = dgp_mod.generate(config)
    save_dataset(ds, out_dir)
    _write_run_json(Path(out_dir), "generate", config_dict)

    desc = dgp_mod.descriptives(ds)
    print(f"wrote dataset to {out_dir} (n={ds.n})")
    for name in ("y", "d"):
        row = desc[name]
        print(
            f"  {name}: mean={row['mean']:+.4f} std={row['std']:.4f} var={row['std']**2:.4f} "
            f"min={row['min']:+.3f} max={row['max']:+.3f}"
        )
    bounds = dgp_mod.oracle_bounds(ds)
    print(
        f"  oracle bounds: R2(d)={bounds.r2_d:.4f} R2(y)={bounds.r2_y:.4f} "
        f"rmse(d)={bounds.rmse_d:.4f} rmse(y)={bounds.rmse_y:.4f} ols_theta={bounds.ols_theta:+.4f}"
    )
    if bounds.feasible_r2_d is not None:
        print(f"  feasible ceilings: R2(d)={bounds.feasible_r2_d:.4f} R2(y)={bounds.feasible_r2_y:.4f}")
    return EXIT_OK


def cmd_estimate(
    data_dir: str,
    learner: str,
    out_dir: str,
    split: float = 0.5,
    kfold: int | None = None,
    repeats: int = 1,
    modalities: str | None = None,
    split_seed: int = 0,
    learner_seed: int = 0,
    alpha: float = 0.05,
    learners_config: str | None = None,
) -> int:
    registry = _resolve_learners(learners_config, learner_seed)
    if learner not in registry:
        raise ConfigError(f"unknown learner {learner!r}; available: {', '.join(sorted(registry))}")
    spec = registry[learner]
    ds = load_dataset(data_dir)
    subset = tuple(modalities.split(",")) if modalities else None
    if kfold is not None:
        scheme = SplitScheme(kind="kfold", k=kfold, repeats=repeats, seed=split_seed)
    else:
        scheme = SplitScheme(kind="single", train_fraction=split, repeats=repeats, seed=split_seed)

    if repeats >= 2:
        summary = repeat_splits(ds, spec, scheme, modality_subset=subset, alpha=alpha)
        report = {
            "learner_tag": summary.results[0].preds.learner_tag,
            "split_descriptor": scheme.describe(),
            **summary.to_dict(),
        }
        est = summary.results[0].estimate
        print(
            f"theta_hat = {summary.theta_mean:+.4f} ± {summary.theta_sd:.4f} over {repeats} repeats "
            f"(first repeat CI [{est.ci_low:+.4f}, {est.ci_high:+.4f}], alpha={alpha:g})"
        )
    else:
        runner = run_crossfit if kfold is not None else run_split
        result = runner(ds, spec, scheme, modality_subset=subset, alpha=alpha)
        est = result.estimate
        report = {
            "learner_tag": result.preds.learner_tag,
            "split_descriptor": scheme.describe(),
            **est.to_dict(),
            "diagnostics": result.diagnostics.to_dict(),
            "r2_y_rel": result.r2_y_rel,
            "r2_d_rel": result.r2_d_rel,
        }
        print(f"theta_hat = {est.theta_hat:+.4f}  se = {est.se:.4f}  CI [{est.ci_low:+.4f}, {est.ci_high:+.4f}] (alpha={alpha:g})")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "estimate.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    _write_run_json(
        out,
        "estimate",
        {
            "data": str(data_dir),
            "learner": learner,
            "split": split,
            "kfold": kfold,
            "repeats": repeats,
            "modalities": modalities,
            "split_seed": split_seed,
            "learner_seed": learner_seed,
            "alpha": alpha,
            "learners_config": learners_config,
        },
    )
    print(f"wrote {out / 'estimate.json'}")
    return EXIT_OK


def cmd_benchmark(config_path: str) -> int:
    config = _load_json(config_path)
    seed = int(config.get("seed", 0))
    out_dir = Path(config.get("outputs", "benchmark-out"))

    if "data" in config:
        ds = load_dataset(config["data"])
    elif "dgp" in config:
        ds = dgp_mod.generate(dgp_config_from_dict(config["dgp"]))
    else:
        raise ConfigError("benchmark config needs either 'data' (a dataset dir) or 'dgp'")

    named = presets.default_learners(seed)
    for name, spec_dict in config.get("learners", {}).items():
        named[name] = learner_spec_from_dict(dict(spec_dict), seed)

    if "roster" in config:
        roster = []
        for entry in config["roster"]:
            lname = entry["learner"]
            if lname not in named:
                raise ConfigError(f"unknown learner {lname!r} in roster; available: {', '.join(sorted(named))}")
            mods = tuple(entry["modalities"]) if entry.get("modalities") else None
            roster.append(ModelEntry(name=entry["name"], spec=named[lname], modalities=mods))
    else:
        roster = presets.default_roster(seed)

    scheme = scheme_from_dict(config.get("scheme", {"kind": "single", "train_fraction": 0.5, "repeats": 5, "seed": seed}))
    report = run_benchmark(ds, roster, scheme)
    paths = write_report(report, out_dir)
    _write_run_json(out_dir, "benchmark", config)
    for row in report.rows:
        s = row.summary
        print(
            f"  {row.name}: theta = {s.theta_mean:+.3f} ± {s.theta_sd:.3f}, "
            f"r2(Y) = {s.r2_y_rel_mean:.3f}, r2(D) = {s.r2_d_rel_mean:.3f}"
            if s.r2_y_rel_mean is not None
            else f"  {row.name}: theta = {s.theta_mean:+.3f} ± {s.theta_sd:.3f}"
        )
    print("  bounds: " + ", ".join(f"{k} = {v:+.4f}" for k, v in sorted(report.bounds.items())))
    print(f"wrote {paths['csv']}, {paths['md']}, {paths['json']}")
    return EXIT_OK


def cmd_trace(
    data_dir: str,
    out_dir: str,
    learner: str = "fusion",
    split: float = 0.5,
    split_seed: int = 0,
    learner_seed: int = 0,
    alpha: float = 0.05,
    learners_config: str | None = None,
) -> int:
    registry = _resolve_learners(learners_config, learner_seed)
    if learner not in registry:
        raise ConfigError(f"unknown learner {learner!r}; available: {', '.join(sorted(registry))}")
    spec = registry[learner]
    if not isinstance(spec, FusionSpec):
        raise ConfigError("trace needs a fusion learner (per-epoch holdout snapshots)")
    ds = load_dataset(data_dir)
    scheme = SplitScheme(kind="single", train_fraction=split, seed=split_seed)
    result = run_split(ds, spec, scheme)
    net = result.learner.net
    trace = epoch_trace(net, ds.take(result.test_idx), alpha=alpha)
    reference = None
    if ds.manifest.mode == "surrogate":
        reference = dgp_mod.attenuated_theta_plim_from_manifest(ds.manifest)
    paths = write_trace(trace, out_dir, theta0=ds.manifest.theta0, reference=reference)
    _write_run_json(
        Path(out_dir),
        "trace",
        {
            "data": str(data_dir),
            "learner": learner,
            "split": split,
            "split_seed": split_seed,
            "learner_seed": learner_seed,
            "alpha": alpha,
            "learners_config": learners_config,
        },
    )
    last = trace.points[-1]
    print(f"traced {len(trace.points)} epochs; final theta_hat = {last.theta_hat:+.4f}")
    print(f"wrote {paths['csv']}, {paths['svg']}")
    return EXIT_OK


def cmd_import_embeddings(data_dir: str, embeddings_path: str, modality: str, replace: bool = False) -> int:
    ds = load_dataset(data_dir)
    path = Path(embeddings_path)
    if not path.exists():
        raise FileNotFoundError(f"embeddings file not found: {path}")
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if header[0] != "id" or len(header) < 2:
        raise ConfigError(f"{path}: expected header id,e0,...; got {header[:3]}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    ids = data[:, 0]
    emb = data[:, 1:]
    if emb.shape[1] == 0:
        raise ConfigError(f"{path}: embedding dimension is 0")
    if len(ids) != ds.n:
        raise ConfigError(f"{path}: {len(ids)} rows but the dataset has {ds.n}")
    expected = np.arange(ds.n)
    mismatch = np.flatnonzero(ids != expected)
    if mismatch.size:
        i = int(mismatch[0])
        raise ConfigError(f"{path}: id mismatch at row {i} (got {ids[i]:g}, expected {expected[i]})")
    if not np.isfinite(emb).all():
        row = int(np.argwhere(~np.isfinite(emb))[0][0])
        raise DataValidationError([Violation(modality, row, "non-finite", "embedding file contains NaN/inf")])
    if modality in ds.blocks and not replace:
        raise ConfigError(f"modality {modality!r} already has a feature block; pass --replace to overwrite")

    old_spec = next((s for s in ds.manifest.modality_specs if s.name == modality), None)
    spec = ModalitySpec(
        name=modality,
        feature_dim=emb.shape[1],
        target_kind=old_spec.target_kind if old_spec else "continuous",
        n_categories=old_spec.n_categories if old_spec else None,
        rho=old_spec.rho if old_spec else 1.0,
        link=old_spec.link if old_spec else "linear",
    )
    updated = ds.with_block(modality, emb, spec)
    save_dataset(updated, data_dir)
    _write_run_json(
        Path(data_dir),
        "import-embeddings",
        {"data": str(data_dir), "embeddings": str(embeddings_path), "modality": modality, "replace": True},
    )
    print(f"imported {emb.shape[1]}-dimensional block {modality!r} ({ds.n} rows) into {data_dir}")
    return EXIT_OK


def cmd_replay(run_json_path: str) -> int:
    payload = _load_json(run_json_path)
    command = payload.get("command")
    config = payload.get("config", {})
    run_dir = Path(run_json_path).parent
    if command == "generate":
        tmp = run_dir / "_replay_config.json"
        tmp.write_text(json.dumps(config, indent=2, sort_keys=True))
        try:
            return cmd_generate(str(tmp), str(run_dir))
        finally:
            tmp.unlink(missing_ok=True)
    if command == "estimate":
        return cmd_estimate(
            data_dir=config["data"],
            learner=config["learner"],
            out_dir=str(run_dir),
            split=config.get("split", 0.5),
            kfold=config.get("kfold"),
            repeats=config.get("repeats", 1),
            modalities=config.get("modalities"),
            split_seed=config.get("split_seed", 0),
            learner_seed=config.get("learner_seed", 0),
            alpha=config.get("alpha", 0.05),
            learners_config=config.get("learners_config"),
        )
    if command == "benchmark":
        tmp = run_dir / "_replay_config.json"
        tmp.write_text(json.dumps(config, indent=2, sort_keys=True))
        try:
            return cmd_benchmark(str(tmp))
        finally:
            tmp.unlink(missing_ok=True)
    if command == "trace":
        return cmd_trace(
            data_dir=config["data"],
            out_dir=str(run_dir),
            learner=config.get("learner", "fusion"),
            split=config.get("split", 0.5),
            split_seed=config.get("split_seed", 0),
            learner_seed=config.get("learner_seed", 0),
            alpha=config.get("alpha", 0.05),
            learners_config=config.get("learners_config"),
        )
    if command == "import-embeddings":
        return cmd_import_embeddings(
            data_dir=config["data"],
            embeddings_path=config["embeddings"],
            modality=config["modality"],
            replace=bool(config.get("replace", True)),
        )
    raise ConfigError(f"run.json has unknown command {command!r}")


# ---------------------------------------------------------------------------
# Argument parsing and exit-code mapping
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmdml", description=__doc__)
    parser.add_argument("--threads", type=int, default=1, help="reserved; all built-in paths are single-threaded")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a semi-synthetic dataset directory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("estimate", help="estimate the treatment coefficient on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--learner", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--kfold", type=int, default=None)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--modalities", default=None, help="comma-separated block names; default: all")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--learner-seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--learners-config", default=None)

    p = sub.add_parser("benchmark", help="run the model-comparison benchmark from a config file")
    p.add_argument("--config", required=True)

    p = sub.add_parser("trace", help="per-epoch estimation trace of the fusion learner")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--learner", default="fusion")
    p.add_argument("--split", type=float, default=0.5)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--learner-seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--learners-config", default=None)

    p = sub.add_parser("import-embeddings", help="add or replace a modality block from an embedding CSV")
    p.add_argument("--data", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--modality", required=True)
    p.add_argument("--replace", action="store_true")

    p = sub.add_parser("replay", help="re-execute a recorded run.json")
    p.add_argument("run_json")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return cmd_generate(args.config, args.out)
        if args.command == "estimate":
            return cmd_estimate(
                data_dir=args.data,
                learner=args.learner,
                out_dir=args.out,
                split=args.split,
                kfold=args.kfold,
                repeats=args.repeats,
                modalities=args.modalities,
                split_seed=args.split_seed,
                learner_seed=args.learner_seed,
                alpha=args.alpha,
                learners_config=args.learners_config,
            )
        if args.command == "benchmark":
            return cmd_benchmark(args.config)
        if args.command == "trace":
            return cmd_trace(
                data_dir=args.data,
                out_dir=args.out,
                learner=args.learner,
                split=args.split,
                split_seed=args.split_seed,
                learner_seed=args.learner_seed,
                alpha=args.alpha,
                learners_config=args.learners_config,
            )
        if args.command == "import-embeddings":
            return cmd_import_embeddings(args.data, args.embeddings, args.modality, replace=args.replace)
        if args.command == "replay":
            return cmd_replay(args.run_json)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, DataValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (IdentificationError, DegenerateTargetError, TrainingDivergedError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except MmdmlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
