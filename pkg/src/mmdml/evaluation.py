"""Metrics, benchmark reports, and the per-epoch estimation trace.

The coefficient of determination follows the empirical definition
R2(v, v_hat) = 1 - sum((v_i - v_hat_i)^2) / sum((v_i - mean(v))^2); the
relative r2-score divides by the oracle bound computed on the same rows.
Relative scores are reported unclamped: finite-sample values slightly
above 1 carry information about estimator variance and are flagged, not
hidden.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .core import SemiSynthDataset
from .errors import ConfigError, DegenerateTargetError
from .engine import RepeatSummary, SplitScheme, repeat_splits, solve_theta
from .learners.fusion import FusionNet


def r_squared(v, v_hat) -> float:
    """Share of variance of v explained by v_hat; <= 1, can be negative."""
    v = np.asarray(v, dtype=float)
    v_hat = np.asarray(v_hat, dtype=float)
    if len(v) < 2 or len(v) != len(v_hat):
        raise ConfigError("r_squared needs two equal-length vectors of length >= 2")
    ss_tot = float(np.sum((v - v.mean()) ** 2))
    if ss_tot <= 0:
        raise DegenerateTargetError("r_squared undefined for a zero-variance target")
    return 1.0 - float(np.sum((v - v_hat) ** 2)) / ss_tot


def relative_r2(v, v_hat, oracle_r2: float) -> float:
    """R2 of the prediction divided by the oracle upper bound."""
    if oracle_r2 <= 0:
        raise ConfigError(f"oracle_r2 must be positive, got {oracle_r2:g}")
    return r_squared(v, v_hat) / oracle_r2


def ols_baseline(y, d) -> float:
    """Slope of the with-intercept least-squares fit of y on d alone."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    var_d = float(np.var(d))
    if var_d <= 0:
        raise DegenerateTargetError("ols_baseline undefined for a zero-variance treatment")
    return float(np.cov(d, y, ddof=0)[0, 1] / var_d)


# ---------------------------------------------------------------------------
# Benchmark report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelEntry:
    """One roster line: a display name, a learner spec, and its controls."""

    name: str
    spec: object
    modalities: tuple[str, ...] | None = None


@dataclass(frozen=True)
class BenchmarkRow:
    name: str
    summary: RepeatSummary
    flagged: bool  # any relative r2 above 1 among the repeats

    def to_dict(self) -> dict:
        return {"name": self.name, "flagged": self.flagged, **self.summary.to_dict()}


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple[BenchmarkRow, ...]
    bounds: dict
    config_digest: str

    def to_dict(self) -> dict:
        return {
            "rows": [r.to_dict() for r in self.rows],
            "bounds": self.bounds,
            "config_digest": self.config_digest,
        }


def _digest(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def run_benchmark(ds: SemiSynthDataset, roster, scheme: SplitScheme, alpha: float = 0.05) -> BenchmarkReport:
    """Repeat-split every roster model and assemble the comparison table."""
    from . import dgp

    roster = list(roster)
    if not roster:
        raise ConfigError("benchmark roster must be nonempty")
    counts = [scheme.repeats] * len(roster)
    if len(set(counts)) != 1:
        raise ConfigError("every model row must use the same repeat count")
    rows = []
    for entry in roster:
        summary = repeat_splits(ds, entry.spec, scheme, modality_subset=entry.modalities, alpha=alpha)
        rel_values = [v for r in summary.results for v in (r.r2_y_rel, r.r2_d_rel) if v is not None]
        rows.append(BenchmarkRow(name=entry.name, summary=summary, flagged=any(v > 1.0 for v in rel_values)))

    bounds = {"theta0": ds.manifest.theta0, "ols_theta": ols_baseline(ds.y, ds.d)}
    if ds.oracle is not None:
        ob = dgp.oracle_bounds(ds)
        bounds.update({"oracle_r2_y": ob.r2_y, "oracle_r2_d": ob.r2_d})
        if ob.feasible_r2_y is not None:
            bounds.update({"feasible_r2_y": ob.feasible_r2_y, "feasible_r2_d": ob.feasible_r2_d})
    if ds.manifest.mode == "surrogate":
        bounds["attenuated_theta_plim"] = dgp.attenuated_theta_plim_from_manifest(ds.manifest)

    digest = _digest(
        {
            "models": [{"name": e.name, "tag": type(e.spec).__name__, "modalities": e.modalities} for e in roster],
            "scheme": scheme.describe(),
            "n": ds.n,
            "seed": ds.manifest.seed,
        }
    )
    return BenchmarkReport(rows=tuple(rows), bounds=bounds, config_digest=digest)


# ---------------------------------------------------------------------------
# Per-epoch estimation trace
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EpochTracePoint:
    epoch: int
    theta_hat: float
    ci_low: float
    ci_high: float
    r2_y_rel: float | None
    r2_d_rel: float | None


@dataclass(frozen=True)
class EpochTrace:
    points: tuple[EpochTracePoint, ...]
    learner_tag: str

    def __post_init__(self):
        epochs = [p.epoch for p in self.points]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError("trace epochs must be strictly increasing")


def epoch_trace(net: FusionNet, holdout: SemiSynthDataset, alpha: float = 0.05) -> EpochTrace:
    """Re-solve the moment equation from each epoch's holdout snapshot."""
    from .core import NuisancePredictions

    log = net.log
    if log.n_epochs == 0:
        raise ConfigError("training log is empty; the net was not trained with monitoring")
    if len(log.holdout_l_hat[0]) != holdout.n:
        raise ConfigError("holdout dataset does not match the training log snapshots")
    r2_y_o = r2_d_o = None
    if holdout.oracle is not None:
        r2_y_o = r_squared(holdout.y, holdout.oracle.l0)
        r2_d_o = r_squared(holdout.d, holdout.oracle.m0)
    points = []
    for epoch in range(log.n_epochs):
        preds = NuisancePredictions(
            l_hat=log.holdout_l_hat[epoch],
            m_hat=log.holdout_m_hat[epoch],
            fold_id=np.zeros(holdout.n, dtype=int),
            learner_tag="fusion-epoch",
        )
        est = solve_theta(preds, holdout.y, holdout.d, alpha=alpha)
        points.append(
            EpochTracePoint(
                epoch=epoch + 1,
                theta_hat=est.theta_hat,
                ci_low=est.ci_low,
                ci_high=est.ci_high,
                r2_y_rel=None if r2_y_o is None else relative_r2(holdout.y, preds.l_hat, r2_y_o),
                r2_d_rel=None if r2_d_o is None else relative_r2(holdout.d, preds.m_hat, r2_d_o),
            )
        )
    return EpochTrace(points=tuple(points), learner_tag=f"fusion(E={net.arch.embedding_dim})")


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def _fmt(x, nd=2):
    return "" if x is None else f"{x:.{nd}f}"


def render_report_csv(report: BenchmarkReport) -> str:
    lines = ["model,r2_y_rel_mean,r2_y_rel_sd,r2_d_rel_mean,r2_d_rel_sd,theta_mean,theta_sd,flagged"]
    for row in report.rows:
        s = row.summary
        lines.append(
            ",".join(
                [
                    row.name,
                    _fmt(s.r2_y_rel_mean, 6),
                    _fmt(s.r2_y_rel_sd, 6),
                    _fmt(s.r2_d_rel_mean, 6),
                    _fmt(s.r2_d_rel_sd, 6),
                    _fmt(s.theta_mean, 6),
                    _fmt(s.theta_sd, 6),
                    str(int(row.flagged)),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_report_markdown(report: BenchmarkReport) -> str:
    names = [row.name for row in report.rows]
    header = "| | " + " | ".join(f"**{n}**" for n in names) + " |"
    rule = "|---" * (len(names) + 1) + "|"

    def msd(mean, sd):
        if mean is None:
            return "n/a"
        return f"{mean:.2f} ± {sd:.2f}"

    lines = [header, rule]
    lines.append("| r2(Y, l_hat) | " + " | ".join(msd(r.summary.r2_y_rel_mean, r.summary.r2_y_rel_sd) for r in report.rows) + " |")
    lines.append("| r2(D, m_hat) | " + " | ".join(msd(r.summary.r2_d_rel_mean, r.summary.r2_d_rel_sd) for r in report.rows) + " |")
    lines.append("| theta_hat | " + " | ".join(msd(r.summary.theta_mean, r.summary.theta_sd) for r in report.rows) + " |")
    lines.append("")
    lines.append("Bounds: " + ", ".join(f"{k} = {v:.4f}" for k, v in sorted(report.bounds.items())))
    lines.append(f"Config digest: {report.config_digest}")
    return "\n".join(lines) + "\n"


def render_trace_csv(trace: EpochTrace) -> str:
    lines = ["epoch,theta_hat,ci_low,ci_high,r2_y_rel,r2_d_rel"]
    for p in trace.points:
        lines.append(
            ",".join(
                [
                    str(p.epoch),
                    _fmt(p.theta_hat, 6),
                    _fmt(p.ci_low, 6),
                    _fmt(p.ci_high, 6),
                    _fmt(p.r2_y_rel, 6),
                    _fmt(p.r2_d_rel, 6),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def render_trace_svg(trace: EpochTrace, theta0: float | None = None, reference: float | None = None) -> str:
    """Single-file SVG line chart: theta_hat per epoch with its CI band."""
    if not trace.points:
        raise ConfigError("cannot render an empty trace")
    width, height, pad = 720, 420, 50
    xs = np.array([p.epoch for p in trace.points], dtype=float)
    lows = np.array([p.ci_low for p in trace.points])
    highs = np.array([p.ci_high for p in trace.points])
    mids = np.array([p.theta_hat for p in trace.points])
    y_values = [lows.min(), highs.max()]
    if theta0 is not None:
        y_values.append(theta0)
    if reference is not None:
        y_values.append(reference)
    y_min, y_max = min(y_values), max(y_values)
    span = max(y_max - y_min, 1e-9)
    y_min -= 0.05 * span
    y_max += 0.05 * span

    def sx(x):
        if len(xs) == 1:
            return width / 2
        return pad + (x - xs[0]) / (xs[-1] - xs[0]) * (width - 2 * pad)

    def sy(y):
        return height - pad - (y - y_min) / (y_max - y_min) * (height - 2 * pad)

    band = [f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, highs)]
    band += [f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs[::-1], lows[::-1])]
    line = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in zip(xs, mids))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<polygon points="{" ".join(band)}" fill="#9ecae1" fill-opacity="0.5" stroke="none"/>',
        f'<polyline points="{line}" fill="none" stroke="#08519c" stroke-width="2"/>',
    ]
    for value, color, label in ((theta0, "#31a354", "theta0"), (reference, "#de2d26", "attenuated plim")):
        if value is None:
            continue
        parts.append(
            f'<line x1="{pad}" y1="{sy(value):.2f}" x2="{width - pad}" y2="{sy(value):.2f}" '
            f'stroke="{color}" stroke-dasharray="6,4" stroke-width="1.5"/>'
        )
        parts.append(f'<text x="{width - pad + 4}" y="{sy(value):.2f}" font-size="11" fill="{color}">{label}</text>')
    # axes
    parts.append(
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black" stroke-width="1"/>'
    )
    parts.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black" stroke-width="1"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yv = y_min + frac * (y_max - y_min)
        parts.append(f'<text x="4" y="{sy(yv) + 4:.2f}" font-size="11">{yv:.2f}</text>')
        xv = xs[0] + frac * (xs[-1] - xs[0])
        parts.append(f'<text x="{sx(xv) - 6:.2f}" y="{height - pad + 16}" font-size="11">{xv:.0f}</text>')
    parts.append(f'<text x="{width / 2 - 20}" y="{height - 8}" font-size="12">epoch</text>')
    parts.append(f'<text x="10" y="{pad - 12}" font-size="12">theta_hat with {100 * 0.95:.0f}% CI</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(report: BenchmarkReport, out_dir) -> dict:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "report.csv", "md": out / "report.md", "json": out / "report.json"}
    paths["csv"].write_text(render_report_csv(report))
    paths["md"].write_text(render_report_markdown(report))
    paths["json"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return paths


def write_trace(trace: EpochTrace, out_dir, theta0=None, reference=None) -> dict:
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"csv": out / "trace.csv", "svg": out / "trace.svg"}
    paths["csv"].write_text(render_trace_csv(trace))
    paths["svg"].write_text(render_trace_svg(trace, theta0=theta0, reference=reference))
    return paths
