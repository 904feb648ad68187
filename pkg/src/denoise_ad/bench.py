"""Dropout x architecture sweeps and the anomaly-ratio vs optimal-p report."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from statistics import median

import numpy as np
from scipy.stats import spearmanr

from .data_pipeline import TimeSeries, make_windows, normalize
from .detection import point_scores, sweep_threshold
from .errors import ConfigError, DenoiseADError, ReportError
from .lstm_autoencoder import ModelConfig
from .training import TrainConfig, fit

log = logging.getLogger(__name__)

DEFAULT_ARCHITECTURES = ((16,), (16, 8))
DEFAULT_DROPOUTS = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_SEEDS = (0, 1, 2)

SWEEP_FIELDS = [
    "dataset", "arch", "dropout_p", "seed", "epochs", "epochs_run", "threshold",
    "recall", "precision", "f1", "tp", "fp", "fn", "baseline", "best", "error",
]
SUMMARY_FIELDS = [
    "dataset", "arch", "dropout_p", "n_runs", "epochs", "recall", "precision", "f1",
    "delta_f1_pct", "delta_epochs_pct", "best",
]
STATS_FIELDS = ["dataset", "total_samples", "anomaly_samples"]


def format_arch(units) -> str:
    return ",".join(str(int(u)) for u in units)


def parse_arch(text: str) -> tuple:
    try:
        units = tuple(int(u) for u in str(text).split(",") if u.strip())
    except ValueError:
        raise ConfigError(f"architecture must be comma-separated unit counts, got {text!r}") from None
    if not units or any(u < 1 for u in units):
        raise ConfigError(f"architecture must be comma-separated positive unit counts, got {text!r}")
    return units


@dataclass
class SweepGrid:
    datasets: list  # of TimeSeries, labeled, raw scale
    architectures: tuple = DEFAULT_ARCHITECTURES
    dropout_ps: tuple = DEFAULT_DROPOUTS
    seeds: tuple = DEFAULT_SEEDS
    window_len: int = 24
    step: int = 1
    dropout_mode: str = "inverted"
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if not self.datasets or not self.architectures or not self.dropout_ps or not self.seeds:
            raise ConfigError("sweep grid lists must be non-empty")
        if any(not 0.0 <= p < 1.0 for p in self.dropout_ps):
            raise ConfigError("dropout probabilities must lie in [0, 1)")
        names = [d.name for d in self.datasets]
        if len(set(names)) != len(names):
            raise ConfigError(f"dataset names must be unique, got {names}")

    def cells(self):
        for ds in self.datasets:
            for arch in self.architectures:
                for p in self.dropout_ps:
                    for seed in self.seeds:
                        yield ds.name, tuple(arch), float(p), int(seed)


@dataclass
class SweepReport:
    rows: list
    summary: list

    def group(self, dataset, arch):
        return [r for r in self.summary if r["dataset"] == dataset and r["arch"] == arch]


def run_cell(series: TimeSeries, arch, p: float, seed: int, window_len: int, step: int,
             dropout_mode: str, tcfg: TrainConfig) -> dict:
    """Train and evaluate one (dataset, architecture, p, seed) cell.

    ``series`` must already be normalized. Failures land in ``error``.
    """
    row = {
        "dataset": series.name, "arch": format_arch(arch), "dropout_p": p, "seed": seed,
        "epochs": None, "epochs_run": None, "threshold": None, "recall": None,
        "precision": None, "f1": None, "tp": None, "fp": None, "fn": None, "error": "",
    }
    try:
        config = ModelConfig(series.dim, window_len, tuple(arch), p, dropout_mode, seed)
        ws = make_windows(series, window_len, step)
        params, hist = fit(None, config, ws, replace(tcfg, seed=seed))
        scores = point_scores(params, config, series, window_len, step)
        _, rep = sweep_threshold(scores, series.labels[scores.index])
        row.update(
            epochs=hist.best_epoch, epochs_run=hist.epochs_run, threshold=rep.threshold,
            recall=rep.recall, precision=rep.precision, f1=rep.f1, tp=rep.tp, fp=rep.fp, fn=rep.fn,
        )
    except DenoiseADError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
        log.warning("cell %s/%s/p=%s/seed=%s failed: %s", series.name, row["arch"], p, seed, exc)
    return row


def _cell_key(row):
    return (row["dataset"], tuple(int(u) for u in row["arch"].split(",")), row["dropout_p"], row["seed"])


def _pct(num, den):
    return None if not den else 100.0 * num / den


def summarize(rows) -> list:
    """Per (dataset, arch, p) medians over seeds with deltas against p = 0."""
    groups = {}
    for r in rows:
        if r["error"]:
            continue
        groups.setdefault((r["dataset"], r["arch"], r["dropout_p"]), []).append(r)
    summary = []
    for (ds, arch, p), rs in groups.items():
        summary.append({
            "dataset": ds, "arch": arch, "dropout_p": p, "n_runs": len(rs),
            "epochs": median(r["epochs"] for r in rs),
            "recall": median(r["recall"] for r in rs),
            "precision": median(r["precision"] for r in rs),
            "f1": median(r["f1"] for r in rs),
            "delta_f1_pct": None, "delta_epochs_pct": None, "best": False,
        })
    summary.sort(key=lambda s: (s["dataset"], [int(u) for u in s["arch"].split(",")], s["dropout_p"]))
    by_group = {}
    for s in summary:
        by_group.setdefault((s["dataset"], s["arch"]), []).append(s)
    for rs in by_group.values():
        base = next((s for s in rs if s["dropout_p"] == 0.0), None)
        if base is not None:
            for s in rs:
                s["delta_f1_pct"] = _pct(s["f1"] - base["f1"], base["f1"])
                s["delta_epochs_pct"] = _pct(base["epochs"] - s["epochs"], base["epochs"])
        best_row(rs)["best"] = True
    return summary


def best_row(rows):
    """Highest F1; ties go to fewer epochs, then the smaller p."""
    return min(rows, key=lambda r: (-r["f1"], r["epochs"], r["dropout_p"]))


def mark_rows(rows) -> list:
    rows = sorted(rows, key=_cell_key)
    groups = {}
    for r in rows:
        r["baseline"] = r["dropout_p"] == 0.0
        r["best"] = False
        if not r["error"]:
            groups.setdefault((r["dataset"], r["arch"], r["seed"]), []).append(r)
    for rs in groups.values():
        best_row(rs)["best"] = True
    return rows


def _run_packed(args):
    return run_cell(*args)


def run_sweep(grid: SweepGrid, jobs: int = 1, progress=None) -> SweepReport:
    normalized = {ds.name: normalize(ds)[0] for ds in grid.datasets}
    tasks = [
        (normalized[name], arch, p, seed, grid.window_len, grid.step, grid.dropout_mode, grid.train)
        for name, arch, p, seed in grid.cells()
    ]
    rows = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for row in pool.map(_run_packed, tasks):
                rows.append(row)
                if progress:
                    progress(row)
    else:
        for t in tasks:
            row = run_cell(*t)
            rows.append(row)
            if progress:
                progress(row)
    rows = mark_rows(rows)
    return SweepReport(rows, summarize(rows))


def dataset_stats(series: TimeSeries) -> dict:
    if series.labels is None:
        raise ReportError(f"dataset {series.name!r} has no labels")
    return {
        "dataset": series.name,
        "total_samples": len(series),
        "anomaly_samples": int(series.labels.sum()),
    }


# ------------------------------------------------------------------ I/O


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, rows, fields) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([_fmt(r.get(f)) for f in fields])


def _parse_value(field_name, text):
    if text == "":
        return None if field_name != "error" else ""
    if field_name in ("dataset", "arch", "error"):
        return text
    if field_name in ("baseline", "best"):
        return text == "1"
    if field_name in ("seed", "epochs_run", "tp", "fp", "fn", "n_runs", "total_samples", "anomaly_samples"):
        return int(float(text))
    return float(text)


def read_rows(path) -> list:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{k: _parse_value(k, v) for k, v in row.items()} for row in reader]


def write_sweep(report: SweepReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"rows": out / "sweep.csv", "summary": out / "sweep_summary.csv"}
    write_rows(paths["rows"], report.rows, SWEEP_FIELDS)
    write_rows(paths["summary"], report.summary, SUMMARY_FIELDS)
    return paths


def load_sweep(paths) -> list:
    rows = []
    for p in paths:
        rows.extend(read_rows(p))
    for r in rows:
        missing = [f for f in ("dataset", "arch", "dropout_p", "f1", "epochs") if f not in r]
        if missing:
            raise ReportError(f"sweep file lacks column(s) {missing}")
        r.setdefault("error", "")
        if r["error"] is None:
            r["error"] = ""
    return rows


def load_stats(paths) -> dict:
    stats = {}
    for p in paths:
        for r in read_rows(p):
            if r.get("total_samples") is None or r.get("anomaly_samples") is None:
                raise ReportError(f"{p}: stats rows need total_samples and anomaly_samples")
            stats[r["dataset"]] = r
    return stats


# --------------------------------------------------------------- report


def truncate_pct(ratio: float, decimals: int = 3) -> str:
    """Percentage string cut (not rounded) to ``decimals`` places: 0.0028080 -> '0.280'."""
    scale = 10 ** decimals
    # the small nudge keeps exact decimal ratios from flooring one step low
    value = math.floor(ratio * 100 * scale + 1e-9) / scale
    return f"{value:.{decimals}f}"


@dataclass
class CorrelationReport:
    rows: list
    spearman: float | None

    @property
    def sign(self) -> str:
        if self.spearman is None:
            return "undefined"
        if self.spearman < 0:
            return "negative"
        if self.spearman > 0:
            return "positive"
        return "zero"

    @property
    def negative_correlation(self) -> bool:
        return self.spearman is not None and self.spearman < 0


def correlation_report(sweep_rows, stats: dict) -> CorrelationReport:
    """Anomaly percentage vs optimal dropout p, one row per dataset."""
    summary = summarize(sweep_rows)
    datasets = sorted({s["dataset"] for s in summary})
    if len(datasets) < 2:
        raise ReportError(f"need at least two datasets with sweep results, got {len(datasets)}")
    rows = []
    for ds in datasets:
        if ds not in stats:
            raise ReportError(f"no sample statistics for dataset {ds!r}")
        st = stats[ds]
        total, anomalies = st["total_samples"], st["anomaly_samples"]
        if not total:
            raise ReportError(f"dataset {ds!r} has zero samples")
        best = sorted({s["dropout_p"] for s in summary if s["dataset"] == ds and s["best"]})
        ratio = anomalies / total
        rows.append({
            "dataset": ds,
            "total_samples": total,
            "anomaly_samples": anomalies,
            "anomaly_ratio": ratio,
            "anomaly_pct": truncate_pct(ratio),
            "optimal_p": best,
            "optimal_p_mean": float(np.mean(best)),
        })
    ratios = [r["anomaly_ratio"] for r in rows]
    ps = [r["optimal_p_mean"] for r in rows]
    rho = None
    if len(set(ratios)) > 1 and len(set(ps)) > 1:
        rho = float(spearmanr(ratios, ps).statistic)
    return CorrelationReport(rows, rho)


def write_correlation(report: CorrelationReport, path) -> None:
    fields = ["dataset", "total_samples", "anomaly_samples", "anomaly_pct", "anomaly_ratio", "optimal_p"]
    rows = [dict(r, optimal_p=" ".join(f"{p:g}" for p in r["optimal_p"])) for r in report.rows]
    write_rows(path, rows, fields)


def render_correlation(report: CorrelationReport) -> str:
    lines = [f"{'dataset':<20} {'samples':>12} {'anomalies':>10} {'pct':>8}  optimal p"]
    for r in report.rows:
        ps = ", ".join(f"{p:g}" for p in r["optimal_p"])
        lines.append(f"{r['dataset']:<20} {r['total_samples']:>12,} {r['anomaly_samples']:>10,} "
                     f"{r['anomaly_pct'] + '%':>8}  {ps}")
    rho = "undefined" if report.spearman is None else f"{report.spearman:+.3f}"
    lines.append(f"spearman(anomaly ratio, optimal p) = {rho} ({report.sign})")
    return "\n".join(lines)


def render_summary(summary) -> str:
    lines = [f"{'dataset':<16} {'arch':<8} {'p':>4} {'epochs':>7} {'recall':>9} {'precision':>9} "
             f"{'f1':>9} {'dF1%':>8} {'dEp%':>8}"]
    for s in summary:
        df1 = "" if s["delta_f1_pct"] is None else f"{s['delta_f1_pct']:+.2f}"
        dep = "" if s["delta_epochs_pct"] is None else f"{s['delta_epochs_pct']:+.1f}"
        mark = " *" if s["best"] else ""
        lines.append(f"{s['dataset']:<16} {s['arch']:<8} {s['dropout_p']:>4.1f} {s['epochs']:>7g} "
                     f"{s['recall']:>9.6f} {s['precision']:>9.6f} {s['f1']:>9.6f} {df1:>8} {dep:>8}{mark}")
    return "\n".join(lines)
