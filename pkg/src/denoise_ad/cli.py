"""``denoise-ad`` command line: gen, train, score, eval, sweep, report."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench
from .data_pipeline import SyntheticSpec, generate_synthetic, load_csv, make_windows, normalize, write_csv
from .detection import (
    DEFAULT_CANDIDATES,
    ScoreSeries,
    evaluate_at,
    extract_segments,
    point_scores,
    sweep_threshold,
    window_label_counts,
)
from .errors import DenoiseADError, EvaluationError, IngestionError, UsageError
from .lstm_autoencoder import ModelConfig
from .persistence import load_model, save_model
from .training import TrainConfig, fit

log = logging.getLogger("denoise_ad")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_synthetic_args(p):
    p.add_argument("--length", type=int, default=10_000)
    p.add_argument("--period", type=float, action="append", dest="periods",
                   help="sinusoid period in steps (repeatable; default 24)")
    p.add_argument("--amplitude", type=float, action="append", dest="amplitudes",
                   help="sinusoid amplitude, paired with --period (default 1)")
    p.add_argument("--trend", type=float, default=0.0)
    p.add_argument("--noise", type=float, default=0.1, help="Gaussian noise sigma")
    p.add_argument("--magnitude", type=float, default=5.0, help="spike offset in noise sigmas")


def _synthetic_spec(args, rate, seed, name):
    periods = args.periods or [24.0]
    amplitudes = args.amplitudes or [1.0] * len(periods)
    return SyntheticSpec(
        length=args.length, periods=tuple(periods), amplitudes=tuple(amplitudes), trend=args.trend,
        noise=args.noise, anomaly_rate=rate, anomaly_magnitude=args.magnitude, seed=seed, name=name,
    )


def _add_train_args(p):
    p.add_argument("--window", type=int, default=24)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--dropout-mode", choices=["inverted", "plain"], default="inverted")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--max-epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=3)
    p.add_argument("--min-delta", type=float, default=1e-5)
    p.add_argument("--val-fraction", type=float, default=0.1)


def _train_config(args, seed):
    return TrainConfig(
        learning_rate=args.lr, batch_size=args.batch_size, max_epochs=args.max_epochs,
        patience=args.patience, min_delta=args.min_delta, validation_fraction=args.val_fraction,
        seed=seed,
    )


# ------------------------------------------------------------- commands


def cmd_gen(args):
    spec = _synthetic_spec(args, args.anomaly_rate, args.seed, Path(args.out).stem)
    series = generate_synthetic(spec)
    write_csv(series, args.out)
    print(f"wrote {args.out}: T={len(series)} anomalies={int(series.labels.sum())}")


def cmd_train(args):
    series = load_csv(args.data)
    norm_series, norm = normalize(series)
    arch = bench.parse_arch(args.arch)
    config = ModelConfig(norm_series.dim, args.window, arch, args.dropout, args.dropout_mode, args.seed)
    tcfg = _train_config(args, args.seed)
    ws = make_windows(norm_series, args.window, args.step)

    def progress(epoch, train_loss, val_loss):
        log.info("epoch %d: train %.6f  val %.6f", epoch, train_loss, val_loss)

    params, hist = fit(None, config, ws, tcfg, progress)
    save_model(args.out, params, config, norm, tcfg, hist)
    history_path = Path(args.history) if args.history else Path(args.out).with_suffix(".history.csv")
    with history_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss"])
        for k, (tl, vl) in enumerate(zip(hist.train_loss, hist.val_loss), start=1):
            w.writerow([k, repr(tl), repr(vl)])
    print(f"epochs_run={hist.epochs_run} best_epoch={hist.best_epoch} "
          f"val_loss={hist.val_loss[hist.best_epoch - 1]:.6f}")
    print(f"model -> {args.out}\nhistory -> {history_path}")


def write_scores(scores: ScoreSeries, path):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "score", "coverage"])
        for i, s, c in zip(scores.index, scores.scores, scores.coverage):
            w.writerow([int(i), repr(float(s)), int(c)])


def read_scores(path) -> ScoreSeries:
    idx, sc, cov = [], [], []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"index", "score", "coverage"} <= set(reader.fieldnames):
            raise IngestionError(f"{path}: expected header index,score,coverage", 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                idx.append(int(row["index"]))
                sc.append(float(row["score"]))
                cov.append(int(row["coverage"]))
            except (TypeError, ValueError):
                raise IngestionError(f"{path}: cannot parse {row}", lineno) from None
    return ScoreSeries(np.asarray(idx, dtype=np.int64), np.asarray(sc), np.asarray(cov, dtype=np.int64))


def cmd_score(args):
    params, config, norm = load_model(args.model)
    series = load_csv(args.data)
    norm_series, _ = normalize(series, norm)
    scores = point_scores(params, config, norm_series, config.window_len, args.step)
    write_scores(scores, args.out)
    print(f"scored {len(scores)} points -> {args.out}")


def evaluate_scores(scores: ScoreSeries, labels, threshold=None, n_candidates=DEFAULT_CANDIDATES,
                    window_len=24, step=1) -> dict:
    if labels is None:
        raise EvaluationError("data has no is_anomaly column; cannot evaluate")
    labels = np.asarray(labels)
    if scores.index.size and scores.index.max() >= labels.shape[0]:
        raise EvaluationError("scores refer to points beyond the end of the data")
    y = labels[scores.index]
    if not y.any():
        raise EvaluationError("labels contain no anomalies; precision/recall are undefined")
    if threshold is None:
        _, rep = sweep_threshold(scores, y, n_candidates)
        mode = "sweep"
    else:
        rep = evaluate_at(scores, y, threshold)
        mode = "fixed"
    flags = np.zeros(labels.shape[0], dtype=np.int64)
    flags[scores.index] = scores.scores > rep.threshold
    doc = {"mode": mode, **rep.to_dict(), "points": int(y.shape[0]),
           "labeled_anomalies": int(y.sum()),
           "flagged_segments": len(extract_segments(flags))}
    if labels.shape[0] >= window_len:
        doc.update(window_label_counts(labels, window_len, step))
    return doc


def cmd_eval(args):
    scores = read_scores(args.scores)
    series = load_csv(args.data)
    doc = evaluate_scores(scores, series.labels, None if args.sweep else args.threshold,
                          args.candidates, args.window, args.step)
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    if args.plot:
        from .plotting import plot_scores

        plot_scores(series.values, scores, series.labels, doc["threshold"], args.plot, series.name)


def _sweep_datasets(args):
    datasets = [load_csv(p) for p in args.data or []]
    for k, rate in enumerate(args.synthetic or []):
        name = f"synthetic_{rate:g}"
        datasets.append(generate_synthetic(_synthetic_spec(args, rate, args.data_seed + k, name)))
    if not datasets:
        raise UsageError("sweep needs at least one --data file or --synthetic rate")
    for ds in datasets:
        if ds.labels is None:
            raise EvaluationError(f"dataset {ds.name!r} has no labels")
    return datasets


def cmd_sweep(args):
    datasets = _sweep_datasets(args)
    archs = tuple(bench.parse_arch(a) for a in args.arch) if args.arch else bench.DEFAULT_ARCHITECTURES
    grid = bench.SweepGrid(
        datasets=datasets, architectures=archs, dropout_ps=tuple(args.dropouts),
        seeds=tuple(args.seeds), window_len=args.window, step=args.step,
        dropout_mode=args.dropout_mode, train=_train_config(args, 0),
    )

    def progress(row):
        status = row["error"] or f"epochs={row['epochs']} f1={row['f1']:.4f}"
        log.info("%s (%s) p=%.2f seed=%d: %s", row["dataset"], row["arch"], row["dropout_p"], row["seed"], status)

    report = bench.run_sweep(grid, jobs=args.jobs, progress=progress)
    out = Path(args.out)
    paths = bench.write_sweep(report, out)
    bench.write_rows(out / "dataset_stats.csv", [bench.dataset_stats(d) for d in datasets], bench.STATS_FIELDS)
    print(bench.render_summary(report.summary))
    print(f"rows -> {paths['rows']}\nsummary -> {paths['summary']}\nstats -> {out / 'dataset_stats.csv'}")
    if not args.no_plot:
        from .plotting import plot_sweep

        print(f"figure -> {plot_sweep(report.rows, report.summary, out / 'sweep.png')}")
    failed = [r for r in report.rows if r["error"]]
    if failed:
        print(f"{len(failed)} cell(s) failed; see the error column", file=sys.stderr)


def cmd_report(args):
    rows = bench.load_sweep(args.sweep)
    stats = bench.load_stats(args.stats) if args.stats else {}
    report = bench.correlation_report(rows, stats)
    print(bench.render_correlation(report))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        bench.write_correlation(report, out / "correlation.csv")
        print(f"table -> {out / 'correlation.csv'}")
        if not args.no_plot:
            from .plotting import plot_correlation

            print(f"figure -> {plot_correlation(report, out / 'correlation.png')}")


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="denoise-ad", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write a synthetic labeled series")
    _add_synthetic_args(p)
    p.add_argument("--anomaly-rate", type=float, default=0.005)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="fit a model to one CSV series")
    p.add_argument("data")
    p.add_argument("--arch", default="16", help="encoder units, e.g. 16 or 16,8")
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="model JSON path")
    p.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="per-point reconstruction-error scores")
    p.add_argument("data")
    p.add_argument("--model", required=True)
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="precision/recall/F1 of a scores CSV")
    p.add_argument("data")
    p.add_argument("--scores", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--threshold", type=float)
    g.add_argument("--sweep", action="store_true", help="pick the best-F1 threshold")
    p.add_argument("--candidates", type=int, default=DEFAULT_CANDIDATES)
    p.add_argument("--window", type=int, default=24, help="window length for window-level counts")
    p.add_argument("--step", type=int, default=1)
    p.add_argument("--out")
    p.add_argument("--plot", help="optional PNG with series and scores")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="dropout x architecture grid")
    p.add_argument("--data", action="append", help="labeled CSV (repeatable)")
    p.add_argument("--synthetic", type=float, action="append",
                   help="add a synthetic dataset with this anomaly rate (repeatable)")
    p.add_argument("--data-seed", type=int, default=0, help="seed of the first synthetic dataset")
    _add_synthetic_args(p)
    p.add_argument("--arch", action="append", help="encoder units (repeatable; default 16 and 16,8)")
    p.add_argument("--dropouts", type=_float_list, default=list(bench.DEFAULT_DROPOUTS))
    p.add_argument("--seeds", type=_int_list, default=list(bench.DEFAULT_SEEDS))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-plot", action="store_true")
    _add_train_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="anomaly ratio vs optimal p across datasets")
    p.add_argument("--sweep", action="append", required=True, help="sweep.csv (repeatable)")
    p.add_argument("--stats", action="append", help="dataset_stats.csv (repeatable)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except DenoiseADError as exc:
        print(f"denoise-ad {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"denoise-ad {args.command}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
