"""Confounded semi-synthetic data generator.

Model:  y = theta0 * d + g0 + eps,   d = m0 + nu,   eps, nu ~ N(0, 1).

Each modality contributes a standardized latent target z_mod; with
z = sum(z_mod) the confounders are m0 = -lambda * z and g0 = mu * z, the
shared sign flip creating negative confounding (high outcomes come with low
treatments).  The scale factors calibrate empirical signal-to-noise ratios:

    Var(m0)            = snr        (treatment signal vs unit noise)
    Var(theta0*d + g0) = snr        (outcome signal vs unit noise)

which fixes lambda = sqrt(snr / Var(z)) and, because the outcome signal
theta0*d + g0 = (mu - theta0*lambda) * z + theta0 * nu already carries the
treatment noise, mu = theta0*lambda + sqrt((snr - theta0^2) / Var(z)).
With snr = 2 and theta0 = 0.5 this puts Var(y) and Var(d) at 3 and the
oracle R2 values at 7/12 and 2/3.

Two modes: ``surrogate`` draws feature blocks and latent targets itself,
holding the explainable share of each target at rho; ``ingest`` reads real
targets (and optional features) from per-modality CSV files.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    GENERATOR_VERSION,
    Manifest,
    ModalitySpec,
    OracleColumns,
    SemiSynthDataset,
    require_valid,
)
from .errors import ConfigError, DegenerateTargetError, MissingOracleError
from .evaluation import ols_baseline, r_squared
from .rng import substream

NOISE_SD = 1.0  # both structural disturbances are standard normal


@dataclass(frozen=True)
class DgpConfig:
    n: int
    theta0: float
    snr: float
    modality_specs: tuple[ModalitySpec, ...]
    seed: int
    mode: str = "surrogate"
    target_files: dict | None = None  # modality name -> csv path (ingest mode)

    def __post_init__(self):
        if self.n < 10:
            raise ConfigError("need n >= 10")
        if self.snr <= 0:
            raise ConfigError("snr must be > 0")
        if self.snr <= self.theta0**2 * NOISE_SD**2:
            raise ConfigError("need snr > theta0^2 for a positive outcome-signal scale")
        if self.mode not in ("surrogate", "ingest"):
            raise ConfigError("mode must be 'surrogate' or 'ingest'")
        if not self.modality_specs:
            raise ConfigError("need at least one modality")
        names = [s.name for s in self.modality_specs]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate modality names: {names}")
        if self.mode == "ingest":
            missing = [s.name for s in self.modality_specs if not (self.target_files or {}).get(s.name)]
            if missing:
                raise ConfigError(f"ingest mode needs a target file per modality; missing {missing}")


@dataclass(frozen=True)
class OracleBounds:
    r2_d: float
    r2_y: float
    rmse_d: float
    rmse_y: float
    ols_theta: float
    feasible_r2_d: float | None = None
    feasible_r2_y: float | None = None

    def to_dict(self) -> dict:
        return {
            "r2_d": self.r2_d,
            "r2_y": self.r2_y,
            "rmse_d": self.rmse_d,
            "rmse_y": self.rmse_y,
            "ols_theta": self.ols_theta,
            "feasible_r2_d": self.feasible_r2_d,
            "feasible_r2_y": self.feasible_r2_y,
        }


def standardize_target(values) -> np.ndarray:
    """Center and scale to empirical mean 0, variance 1 (population ddof)."""
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or len(values) < 2:
        raise ConfigError("standardize_target needs a vector of length >= 2")
    sd = float(values.std())
    if sd <= 0 or not np.isfinite(sd):
        raise DegenerateTargetError("cannot standardize a zero-variance target")
    return (values - values.mean()) / sd


def build_confounders(z_blocks, theta0: float, snr: float):
    """Scale the summed standardized targets into (g0, m0, lambda, mu).

    Calibration is empirical: Var(m0) = snr holds exactly on the generated
    sample, and Var(theta0*m0 + g0) = snr - theta0^2 (the outcome-signal
    budget left once the treatment noise passed through theta0 is counted).
    """
    z_list = list(z_blocks.values()) if isinstance(z_blocks, dict) else list(z_blocks)
    if not z_list:
        raise ConfigError("need at least one standardized target")
    z = np.sum(z_list, axis=0)
    var_z = float(z.var())
    if var_z <= 0:
        raise DegenerateTargetError("summed targets have zero variance")
    if snr <= theta0**2 * NOISE_SD**2:
        raise ConfigError("need snr > theta0^2 for a positive outcome-signal scale")
    lam = float(np.sqrt(snr / var_z)) * NOISE_SD
    mu = theta0 * lam + float(np.sqrt((snr - theta0**2 * NOISE_SD**2) / var_z)) * NOISE_SD
    return mu * z, -lam * z, lam, mu


def _surrogate_modality(spec: ModalitySpec, n: int, seed: int):
    """Draw one surrogate block: features, latent target, and its feasible part.

    The latent target mixes a standardized link of a random feature
    projection with independent standardized noise,
        target = sqrt(rho) * h + sqrt(1 - rho) * u,
    so exactly a rho share of its variance is explainable from the block and
    the conditional expectation given the features is sqrt(rho) * h.
    """
    if spec.target_kind != "continuous":
        raise ConfigError(f"surrogate mode generates continuous targets only (modality {spec.name})")
    x = substream(seed, "dgp", "features", spec.name).standard_normal((n, spec.feature_dim))
    u = substream(seed, "dgp", "unexplained", spec.name).standard_normal(n)
    u = standardize_target(u)
    if spec.rho > 0:
        raw_w = substream(seed, "dgp", "projection", spec.name).standard_normal(spec.feature_dim)
        w = raw_w / np.linalg.norm(raw_w)
        h = x @ w
        if spec.link == "tanh":
            h = np.tanh(h)
        h = standardize_target(h)
        feasible = np.sqrt(spec.rho) * h
    else:
        feasible = np.zeros(n)
    target = feasible + np.sqrt(1.0 - spec.rho) * u
    return x, target, feasible


def _read_target_file(path, spec: ModalitySpec, n: int):
    """Read an ingest CSV: columns id,target[,f0,f1,...] with >= n rows."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader]
    if len(rows) < n:
        raise ConfigError(f"{path}: has {len(rows)} rows, need at least {n}")
    if len(header) < 2 or header[0] != "id" or header[1] != "target":
        raise ConfigError(f"{path}: expected header id,target[,features...]")
    rows = rows[:n]
    raw = [row[1] for row in rows]
    code_map = None
    if spec.target_kind == "continuous":
        target = np.array([float(v) for v in raw])
    else:
        codes, code_map = [], {}
        for v in raw:
            if v not in code_map:
                code_map[v] = float(len(code_map))  # file-order coding
            codes.append(code_map[v])
        target = np.array(codes)
        if spec.target_kind == "binary" and len(code_map) != 2:
            raise ConfigError(f"{path}: binary target has {len(code_map)} distinct values")
        if spec.target_kind == "categorical" and len(code_map) > (spec.n_categories or 0):
            raise ConfigError(f"{path}: more categories than declared ({len(code_map)})")
    features = None
    if len(header) > 2:
        features = np.array([[float(v) for v in row[2:]] for row in rows])
    return target, features, code_map


def generate(config: DgpConfig) -> SemiSynthDataset:
    """Generate a dataset with fully populated oracle columns."""
    n = config.n
    blocks: dict[str, np.ndarray] = {}
    targets: dict[str, np.ndarray] = {}
    feasible: dict[str, np.ndarray] = {}
    code_maps: dict[str, dict] = {}
    specs = []
    for spec in config.modality_specs:
        if config.mode == "surrogate":
            x, target, feas = _surrogate_modality(spec, n, config.seed)
            blocks[spec.name] = x
            feasible[spec.name] = feas
        else:
            target, features, code_map = _read_target_file(config.target_files[spec.name], spec, n)
            if features is not None:
                blocks[spec.name] = features
                spec = ModalitySpec(
                    name=spec.name,
                    feature_dim=features.shape[1],
                    target_kind=spec.target_kind,
                    n_categories=spec.n_categories,
                    rho=spec.rho,
                    link=spec.link,
                )
            if code_map is not None:
                code_maps[spec.name] = code_map
        targets[spec.name] = target
        specs.append(spec)

    z_blocks = {name: standardize_target(t) for name, t in targets.items()}
    g0, m0, lam, mu = build_confounders(z_blocks, config.theta0, config.snr)
    nu = substream(config.seed, "dgp", "nu").standard_normal(n) * NOISE_SD
    eps = substream(config.seed, "dgp", "eps").standard_normal(n) * NOISE_SD
    d = m0 + nu
    y = config.theta0 * d + g0 + eps
    l0 = config.theta0 * m0 + g0

    manifest = Manifest(
        theta0=config.theta0,
        snr=config.snr,
        seed=config.seed,
        scale_m=lam,
        scale_g=mu,
        modality_specs=tuple(specs),
        generator_version=GENERATOR_VERSION,
        mode=config.mode,
        code_maps=code_maps,
    )
    oracle = OracleColumns(
        g0=g0,
        m0=m0,
        l0=l0,
        targets=targets,
        eps=eps,
        nu=nu,
        feasible=feasible if config.mode == "surrogate" else None,
    )
    return require_valid(SemiSynthDataset(n=n, y=y, d=d, blocks=blocks, manifest=manifest, oracle=oracle))


def oracle_bounds(ds: SemiSynthDataset) -> OracleBounds:
    """Oracle R2/RMSE ceilings, the OLS floor, and the feasible ceilings."""
    if ds.oracle is None:
        raise MissingOracleError("oracle_bounds needs oracle columns")
    oc = ds.oracle
    feas_r2_d = feas_r2_y = None
    if oc.feasible is not None:
        lam, mu, th = ds.manifest.scale_m, ds.manifest.scale_g, ds.manifest.theta0
        z_feas = []
        for name, target in oc.targets.items():
            mean, sd = target.mean(), target.std()
            if sd <= 0:
                raise DegenerateTargetError(f"target {name!r} has zero variance")
            z_feas.append((oc.feasible[name] - mean) / sd)
        z_e = np.sum(z_feas, axis=0)
        m_feas = -lam * z_e
        l_feas = th * m_feas + mu * z_e
        feas_r2_d = r_squared(ds.d, m_feas)
        feas_r2_y = r_squared(ds.y, l_feas)
    return OracleBounds(
        r2_d=r_squared(ds.d, oc.m0),
        r2_y=r_squared(ds.y, oc.l0),
        rmse_d=float(np.sqrt(np.mean((ds.d - oc.m0) ** 2))),
        rmse_y=float(np.sqrt(np.mean((ds.y - oc.l0) ** 2))),
        ols_theta=ols_baseline(ds.y, ds.d),
        feasible_r2_d=feas_r2_d,
        feasible_r2_y=feas_r2_y,
    )


def _attenuated_plim(theta0: float, snr: float, rhos) -> float:
    """Best-achievable estimate when nuisances equal the feasible
    conditional expectations: theta0 - lam*mu*V / (lam^2*V + 1) with
    V = sum(1 - rho) the unexplained standardized-target variance."""
    m = len(rhos)
    var_z = float(m)  # independent standardized targets
    lam = np.sqrt(snr / var_z)
    mu = theta0 * lam + np.sqrt((snr - theta0**2) / var_z)
    v_u = float(np.sum([1.0 - r for r in rhos]))
    return float(theta0 - lam * mu * v_u / (lam**2 * v_u + 1.0))


def attenuated_theta_plim(config: DgpConfig) -> float:
    if config.mode != "surrogate":
        raise ConfigError("attenuated plim is defined for surrogate mode only")
    return _attenuated_plim(config.theta0, config.snr, [s.rho for s in config.modality_specs])


def attenuated_theta_plim_from_manifest(manifest: Manifest) -> float:
    return _attenuated_plim(manifest.theta0, manifest.snr, [s.rho for s in manifest.modality_specs])


def descriptives(ds: SemiSynthDataset) -> dict:
    """count / mean / std / min / quartiles / max for the outcome and treatment."""
    out = {}
    for name, vec in (("y", ds.y), ("d", ds.d)):
        q25, q50, q75 = np.percentile(vec, [25, 50, 75])
        out[name] = {
            "count": int(len(vec)),
            "mean": float(vec.mean()),
            "std": float(vec.std()),
            "min": float(vec.min()),
            "25%": float(q25),
            "50%": float(q50),
            "75%": float(q75),
            "max": float(vec.max()),
        }
    return out
