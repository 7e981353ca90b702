"""Dataset model: modality specs, generated datasets, oracle columns, and
the on-disk directory format (manifest.json / data.csv / oracle.csv).

All numeric payloads are float64.  Instances are treated as immutable after
construction; every mutating-style operation returns a new object.  Row order
is the identity key: the ``id`` column exists only in the CSV files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataValidationError

GENERATOR_VERSION = "mmdml-dgp-1"

# 17 significant digits round-trips any float64 exactly through decimal text.
FLOAT_FMT = "%.17g"

TARGET_KINDS = ("continuous", "binary", "categorical")
LINKS = ("linear", "tanh")

ORACLE_IDENTITY_RTOL = 1e-12


@dataclass(frozen=True)
class ModalitySpec:
    """One confounding channel: its feature block and (surrogate-mode) knobs.

    ``rho`` is the share of the latent target's variance that is explainable
    from the observed feature block; ``link`` shapes the feature-to-target
    map.  Both are meaningful in surrogate mode only.
    """

    name: str
    feature_dim: int
    target_kind: str = "continuous"
    n_categories: int | None = None
    rho: float = 1.0
    link: str = "linear"

    def __post_init__(self):
        if not self.name or not self.name.replace("_", "").isalnum():
            raise ConfigError(f"modality name must be a simple identifier, got {self.name!r}")
        if self.feature_dim < 1:
            raise ConfigError(f"modality {self.name}: feature_dim must be >= 1")
        if self.target_kind not in TARGET_KINDS:
            raise ConfigError(f"modality {self.name}: unknown target_kind {self.target_kind!r}")
        if self.target_kind == "categorical" and (self.n_categories is None or self.n_categories < 2):
            raise ConfigError(f"modality {self.name}: categorical targets need n_categories >= 2")
        if not 0.0 <= self.rho <= 1.0:
            raise ConfigError(f"modality {self.name}: rho must lie in [0, 1]")
        if self.link not in LINKS:
            raise ConfigError(f"modality {self.name}: unknown link {self.link!r}")

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "feature_dim": self.feature_dim,
            "target_kind": self.target_kind,
            "rho": self.rho,
            "link": self.link,
        }
        if self.n_categories is not None:
            d["n_categories"] = self.n_categories
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModalitySpec":
        return cls(
            name=d["name"],
            feature_dim=int(d["feature_dim"]),
            target_kind=d.get("target_kind", "continuous"),
            n_categories=d.get("n_categories"),
            rho=float(d.get("rho", 1.0)),
            link=d.get("link", "linear"),
        )


@dataclass(frozen=True)
class Manifest:
    """Provenance needed to reproduce and interpret a generated dataset."""

    theta0: float
    snr: float
    seed: int
    scale_m: float
    scale_g: float
    modality_specs: tuple[ModalitySpec, ...]
    generator_version: str = GENERATOR_VERSION
    mode: str = "surrogate"
    code_maps: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.snr <= 0:
            raise ConfigError("manifest: snr must be > 0")
        if self.scale_m <= 0 or self.scale_g <= 0:
            raise ConfigError("manifest: scale factors must be > 0")
        names = [s.name for s in self.modality_specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"manifest: duplicate modality names in {names}")

    def spec_for(self, name: str) -> ModalitySpec:
        for s in self.modality_specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_json(self) -> str:
        payload = {
            "theta0": self.theta0,
            "snr": self.snr,
            "seed": self.seed,
            "scale_m": self.scale_m,
            "scale_g": self.scale_g,
            "modality_specs": [s.to_dict() for s in self.modality_specs],
            "generator_version": self.generator_version,
            "mode": self.mode,
            "code_maps": self.code_maps,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Manifest":
        d = json.loads(text)
        return cls(
            theta0=float(d["theta0"]),
            snr=float(d["snr"]),
            seed=int(d["seed"]),
            scale_m=float(d["scale_m"]),
            scale_g=float(d["scale_g"]),
            modality_specs=tuple(ModalitySpec.from_dict(s) for s in d["modality_specs"]),
            generator_version=d.get("generator_version", GENERATOR_VERSION),
            mode=d.get("mode", "surrogate"),
            code_maps=d.get("code_maps", {}),
        )


@dataclass(frozen=True)
class OracleColumns:
    """Ground-truth confounding columns, available for generated data only.

    ``targets`` holds the latent per-modality targets; ``feasible`` (surrogate
    mode) holds their conditional expectations given the observed features,
    i.e. the best any learner could do from the feature blocks.
    """

    g0: np.ndarray
    m0: np.ndarray
    l0: np.ndarray
    targets: dict[str, np.ndarray]
    eps: np.ndarray
    nu: np.ndarray
    feasible: dict[str, np.ndarray] | None = None

    def take(self, idx: np.ndarray) -> "OracleColumns":
        return OracleColumns(
            g0=self.g0[idx],
            m0=self.m0[idx],
            l0=self.l0[idx],
            targets={k: v[idx] for k, v in self.targets.items()},
            eps=self.eps[idx],
            nu=self.nu[idx],
            feasible=None if self.feasible is None else {k: v[idx] for k, v in self.feasible.items()},
        )


@dataclass(frozen=True)
class SemiSynthDataset:
    """Outcome/treatment vectors plus per-modality feature blocks."""

    n: int
    y: np.ndarray
    d: np.ndarray
    blocks: dict[str, np.ndarray]
    manifest: Manifest
    oracle: OracleColumns | None = None

    def take(self, idx) -> "SemiSynthDataset":
        """Row subset in the given index order (used by split schemes)."""
        idx = np.asarray(idx)
        idx = np.flatnonzero(idx) if idx.dtype == bool else idx.astype(int)
        return SemiSynthDataset(
            n=len(idx),
            y=self.y[idx],
            d=self.d[idx],
            blocks={k: v[idx] for k, v in self.blocks.items()},
            manifest=self.manifest,
            oracle=None if self.oracle is None else self.oracle.take(idx),
        )

    def with_block(self, name: str, block: np.ndarray, spec: ModalitySpec) -> "SemiSynthDataset":
        blocks = dict(self.blocks)
        blocks[name] = np.asarray(block, dtype=float)
        specs = tuple(s for s in self.manifest.modality_specs if s.name != name) + (spec,)
        # keep original ordering where the modality already existed
        if any(s.name == name for s in self.manifest.modality_specs):
            specs = tuple(spec if s.name == name else s for s in self.manifest.modality_specs)
        manifest = replace(self.manifest, modality_specs=specs)
        return SemiSynthDataset(n=self.n, y=self.y, d=self.d, blocks=blocks, manifest=manifest, oracle=self.oracle)


@dataclass(frozen=True)
class NuisancePredictions:
    """Out-of-sample nuisance predictions with fold provenance.

    fold_id is -1 for in-sample predictions (not usable for estimation);
    the audit map records, per fold, which rows were trained on and which
    were predicted, so out-of-sample-ness can be re-verified after the fact.
    """

    l_hat: np.ndarray
    m_hat: np.ndarray
    fold_id: np.ndarray
    learner_tag: str
    audit: dict[int, tuple[np.ndarray, np.ndarray]] | None = None

    def __post_init__(self):
        if not (len(self.l_hat) == len(self.m_hat) == len(self.fold_id)):
            raise ConfigError("nuisance predictions must have equal lengths")

    def verify_out_of_sample(self) -> bool:
        """True iff no predicted row appears in its own training fold."""
        if (self.fold_id < 0).any():
            return False
        if self.audit is None:
            return True
        for fid, (train_idx, pred_idx) in self.audit.items():
            if np.intersect1d(train_idx, pred_idx).size:
                return False
        return True


@dataclass(frozen=True)
class EffectEstimate:
    """Solution of the empirical moment equation with its sandwich CI."""

    theta_hat: float
    se: float
    ci_low: float
    ci_high: float
    alpha: float
    n_used: int
    score_mean: float
    denom: float

    def __post_init__(self):
        if not self.ci_low < self.theta_hat < self.ci_high:
            raise ConfigError("confidence interval must bracket the point estimate")
        if self.se <= 0:
            raise ConfigError("standard error must be positive")

    def to_dict(self) -> dict:
        return {
            "theta_hat": self.theta_hat,
            "se": self.se,
            "ci": [self.ci_low, self.ci_high],
            "alpha": self.alpha,
            "n_used": self.n_used,
            "score_mean": self.score_mean,
            "denom": self.denom,
        }


@dataclass(frozen=True)
class Violation:
    """One invariant failure; row is None for whole-column/spec defects."""

    fieldname: str
    row: int | None
    kind: str
    message: str

    def __str__(self):
        where = "" if self.row is None else f"[{self.row}]"
        return f"{self.fieldname}{where}: {self.kind} ({self.message})"


def _first_nonfinite(name: str, arr: np.ndarray, out: list[Violation]):
    bad = ~np.isfinite(arr)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        out.append(Violation(name, row, "non-finite", "NaN or infinity"))


def _identity_violation(name: str, lhs: np.ndarray, rhs: np.ndarray, out: list[Violation]):
    scale = np.maximum(np.abs(lhs), np.abs(rhs))
    scale = np.maximum(scale, 1.0)
    bad = np.abs(lhs - rhs) > ORACLE_IDENTITY_RTOL * scale
    if bad.any():
        row = int(np.argmax(bad))
        out.append(Violation(name, row, "identity", f"|lhs-rhs| exceeds rtol {ORACLE_IDENTITY_RTOL:g}"))


def validate(ds: SemiSynthDataset) -> list[Violation]:
    """Check every structural invariant; violations are data, not faults."""
    out: list[Violation] = []
    if ds.n < 2:
        out.append(Violation("n", None, "size", f"need n >= 2, got {ds.n}"))
    for name, vec in (("y", ds.y), ("d", ds.d)):
        if vec.shape != (ds.n,):
            out.append(Violation(name, None, "shape", f"expected ({ds.n},), got {vec.shape}"))
        else:
            _first_nonfinite(name, vec, out)
    known = {s.name: s for s in ds.manifest.modality_specs}
    for name, block in ds.blocks.items():
        if block.ndim != 2 or block.shape[0] != ds.n:
            out.append(Violation(name, None, "shape", f"expected ({ds.n}, k), got {block.shape}"))
            continue
        _first_nonfinite(name, block, out)
        spec = known.get(name)
        if spec is not None and block.shape[1] != spec.feature_dim:
            out.append(
                Violation(name, None, "schema", f"block has {block.shape[1]} columns, spec says {spec.feature_dim}")
            )
        if spec is None:
            out.append(Violation(name, None, "schema", "block has no modality spec in the manifest"))
    oc = ds.oracle
    if oc is not None:
        shapes_ok = True
        for name, vec in (("g0", oc.g0), ("m0", oc.m0), ("l0", oc.l0), ("eps", oc.eps), ("nu", oc.nu)):
            if vec.shape != (ds.n,):
                out.append(Violation(name, None, "shape", f"expected ({ds.n},), got {vec.shape}"))
                shapes_ok = False
            else:
                _first_nonfinite(name, vec, out)
        if not shapes_ok:
            return out  # identity checks would be meaningless
        for name, vec in oc.targets.items():
            if vec.shape != (ds.n,):
                out.append(Violation(f"{name}:target", None, "shape", f"expected ({ds.n},), got {vec.shape}"))
            else:
                _first_nonfinite(f"{name}:target", vec, out)
        th = ds.manifest.theta0
        _identity_violation("l0", oc.l0, th * oc.m0 + oc.g0, out)
        _identity_violation("y", ds.y, th * ds.d + oc.g0 + oc.eps, out)
        _identity_violation("d", ds.d, oc.m0 + oc.nu, out)
    return out


def require_valid(ds: SemiSynthDataset) -> SemiSynthDataset:
    violations = validate(ds)
    if violations:
        raise DataValidationError(violations)
    return ds


# ---------------------------------------------------------------------------
# Directory format
# ---------------------------------------------------------------------------


def _write_table(path: Path, header: list[str], columns: list[np.ndarray]):
    n = len(columns[0])
    ids = np.arange(n)
    mat = np.column_stack([ids] + [np.asarray(c, dtype=float) for c in columns])
    fmt = ["%d"] + [FLOAT_FMT] * len(columns)
    np.savetxt(path, mat, fmt=fmt, delimiter=",", header=",".join(["id"] + header), comments="")


def _read_table(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != len(header):
        raise DataValidationError([Violation(path.name, None, "schema", "column count does not match header")])
    return header, data


def save_dataset(ds: SemiSynthDataset, directory) -> Path:
    """Write manifest.json, data.csv and (if oracle present) oracle.csv."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "manifest.json").write_text(ds.manifest.to_json() + "\n")

    header = ["y", "d"]
    columns = [ds.y, ds.d]
    for spec in ds.manifest.modality_specs:
        if spec.name not in ds.blocks:
            continue
        block = ds.blocks[spec.name]
        for j in range(block.shape[1]):
            header.append(f"{spec.name}:f{j}")
            columns.append(block[:, j])
    _write_table(directory / "data.csv", header, columns)

    if ds.oracle is not None:
        oc = ds.oracle
        oheader = ["g0", "m0", "l0", "eps", "nu"]
        ocols = [oc.g0, oc.m0, oc.l0, oc.eps, oc.nu]
        for spec in ds.manifest.modality_specs:
            if spec.name in oc.targets:
                oheader.append(f"{spec.name}:target")
                ocols.append(oc.targets[spec.name])
        if oc.feasible is not None:
            for spec in ds.manifest.modality_specs:
                if spec.name in oc.feasible:
                    oheader.append(f"{spec.name}:feasible")
                    ocols.append(oc.feasible[spec.name])
        _write_table(directory / "oracle.csv", oheader, ocols)
    return directory


def load_dataset(directory) -> SemiSynthDataset:
    directory = Path(directory)
    manifest = Manifest.from_json((directory / "manifest.json").read_text())

    header, data = _read_table(directory / "data.csv")
    cols = {name: data[:, i] for i, name in enumerate(header)}
    n = data.shape[0]
    blocks: dict[str, np.ndarray] = {}
    for spec in manifest.modality_specs:
        names = [h for h in header if h.startswith(f"{spec.name}:f")]
        if not names:
            continue
        names.sort(key=lambda h: int(h.split(":f")[1]))
        blocks[spec.name] = np.column_stack([cols[h] for h in names])

    oracle = None
    opath = directory / "oracle.csv"
    if opath.exists():
        oheader, odata = _read_table(opath)
        ocols = {name: odata[:, i] for i, name in enumerate(oheader)}
        targets = {
            h.split(":target")[0]: ocols[h] for h in oheader if h.endswith(":target")
        }
        feas = {h.split(":feasible")[0]: ocols[h] for h in oheader if h.endswith(":feasible")}
        oracle = OracleColumns(
            g0=ocols["g0"],
            m0=ocols["m0"],
            l0=ocols["l0"],
            targets=targets,
            eps=ocols["eps"],
            nu=ocols["nu"],
            feasible=feas or None,
        )

    return SemiSynthDataset(n=n, y=cols["y"], d=cols["d"], blocks=blocks, manifest=manifest, oracle=oracle)
