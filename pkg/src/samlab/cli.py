"""``samlab`` command line: train, compare, probe, sweep, oracle, dataset.

Every command writes CSV tables (optionally SVG charts) plus a
``manifest.json`` into ``--out``. Exit codes: 0 success, 1 configuration
error, 2 numerical abort, 3 I/O error.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

import numpy as np

from . import svg
from .artifacts import (
    load_checkpoint,
    save_checkpoint,
    sha256_file,
    write_csv,
    write_manifest,
    write_metrics,
    write_report,
)
from .config import PROBES, RunConfig, config_hash, load_config, parse_config
from .data import export_csv, generate_dataset, sequential_batches
from .errors import ConfigError, DegenerateDirectionError, NumericalAbort
from .inner_max import TOY_LOSSES, bruteforce_inner_max, toy_model
from .landscape import (
    ascent_direction,
    cosine_matrix,
    default_scale_grid,
    fmt,
    grid_probe,
    perturbed_loss_table,
    ray_probe,
    standard_decrease_matrix,
)
from .optim import AscentConfig, ascent_multi, parse_ratio
from .rng import Xoshiro256
from .spectrum import hessian_spectrum
from .training import TrainedModel, train

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3
DEFAULT_PROBE_RHO = 0.05


class Outputs:
    """Collects files written by one command so the manifest can list them."""

    def __init__(self, root: Path, fmt_: str):
        self.root = root
        self.svg = fmt_ == "csv+svg"
        self.files: list[Path] = []
        root.mkdir(parents=True, exist_ok=True)

    def add(self, path: Path) -> Path:
        self.files.append(path)
        return path

    def csv(self, rel: str, header, rows) -> Path:
        return self.add(write_csv(self.root / rel, header, rows))

    def report(self, rel: str, report) -> Path:
        return self.add(write_report(self.root / rel, report))

    def chart(self, rel: str, markup: str) -> None:
        if self.svg:
            path = self.root / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(markup, encoding="utf-8")
            self.add(path)


# -- helpers -------------------------------------------------------------------

def _seeds(args, run: RunConfig) -> list[int]:
    return list(args.seed) if args.seed else list(run.seeds)


def _out_dir(args, run: RunConfig | None, fallback: str) -> Path:
    if args.out:
        return Path(args.out)
    if run is not None and run.out_dir:
        return Path(run.out_dir)
    return Path(fallback)


def _train_job(payload):
    run_json, seed = payload
    run = RunConfig.model_validate(run_json)
    return train(run, seed=seed)


def _train_seeds(run: RunConfig, seeds: Sequence[int], jobs: int) -> list[TrainedModel]:
    """Train each seed, in worker processes when ``jobs > 1``; order follows ``seeds``."""
    if jobs <= 1 or len(seeds) == 1:
        dataset = generate_dataset(run.dataset.to_spec())
        return [train(run, seed=s, dataset=dataset) for s in seeds]
    payload = [(run.model_dump(mode="json"), s) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_train_job, payload))


def _summary(tm: TrainedModel) -> dict:
    out = {"method": tm.method}
    for split in ("train", "test"):
        row = tm.final(split)
        if row is not None:
            out[f"final_{split}_loss"] = fmt(row.loss)
            out[f"final_{split}_accuracy"] = fmt(row.accuracy)
    return out


def _mean_std(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def _probe_rho(run_rho: float | None, opt_rho: float) -> float:
    if run_rho is not None:
        return run_rho
    return opt_rho if opt_rho > 0 else DEFAULT_PROBE_RHO


def _write_seed(out: Outputs, tm: TrainedModel, prefix: str) -> None:
    out.add(save_checkpoint(out.root / prefix / "model.ckpt", tm))
    out.add(write_metrics(out.root / prefix / "metrics.csv", tm.metrics))
    epochs = [r.epoch for r in tm.metrics if r.split == "train"]
    out.chart(f"{prefix}/metrics.svg", svg.line_chart(
        {s: (epochs, [r.loss for r in tm.metrics if r.split == s]) for s in ("train", "test")},
        title=f"{tm.method} seed {tm.seed}", xlabel="epoch", ylabel="loss"))


# -- probes --------------------------------------------------------------------

def run_probe(out: Outputs, prefix: str, name: str, tm: TrainedModel, rho: float, steps: int,
              lr: float = 0.1, k: int = 3) -> None:
    """Compute one named probe on ``tm`` over its first training batch and write it under ``prefix``."""
    if name not in PROBES:
        raise ConfigError(f"unknown probe {name!r}; valid: {', '.join(PROBES)}")
    model, w = tm.model, tm.params
    dataset = generate_dataset(tm.dataset_spec)
    batch = dataset.first_batch(tm.batch_size)
    if name == "ray":
        for n in sorted({1, steps}):
            rep = ray_probe(model, w, batch, AscentConfig(rho=rho, steps=n), default_scale_grid(rho))
            out.report(f"{prefix}/ray_n{n}.csv", rep)
            out.chart(f"{prefix}/ray_n{n}.svg", svg.line_chart(
                {f"N={n}": (rep.scales, rep.losses)}, title="loss along ascent direction", xlabel="k", ylabel="loss"))
    elif name == "grid":
        a = ascent_direction(model, w, batch, AscentConfig(rho=rho, steps=1))
        v = ascent_direction(model, w, batch, AscentConfig(rho=rho, steps=steps))
        b = v - (v @ a) * a
        if np.linalg.norm(b) < 1e-8:
            b = Xoshiro256(tm.seed, stream="grid-direction").normal(w.size)
            b -= (b @ a) * a
        axis = np.linspace(-2.0 * rho, 2.0 * rho, 21)
        rep = grid_probe(model, w, batch, a, b, axis, axis)
        out.report(f"{prefix}/grid.csv", rep)
        out.chart(f"{prefix}/grid.svg", svg.heatmap(rep.losses.tolist(), [f"{x:.3g}" for x in axis],
                                                      [f"{y:.3g}" for y in axis], title="loss surface", annotate=False))
    elif name == "cosine":
        rep = cosine_matrix(model, w, batch, steps, rho)
        out.report(f"{prefix}/cosine.csv", rep)
        out.chart(f"{prefix}/cosine.svg", svg.heatmap(rep.matrix, rep.labels, rep.labels, title="gradient cosine"))
    elif name == "decrease":
        rep = standard_decrease_matrix(model, w, batch, max(steps, 2), rho, lr=lr, interpolation=(0.25, 0.5, 0.75))
        out.report(f"{prefix}/decrease.csv", rep)
        out.chart(f"{prefix}/decrease.svg", svg.heatmap(rep.values.tolist(), rep.point_labels,
                                                          rep.gradient_labels, title="loss decrease"))
    elif name == "spectrum":
        rep = hessian_spectrum(model, w, batch, k=min(k, w.size))
        out.report(f"{prefix}/spectrum.csv", rep)
        out.chart(f"{prefix}/spectrum.svg", svg.bar_chart([str(i + 1) for i in range(len(rep.eigenvalues))],
                                                          rep.eigenvalues, title="top Hessian eigenvalues"))
    elif name == "perturbed":
        batches = sequential_batches(dataset, tm.batch_size)
        rep = perturbed_loss_table({tm.method: [tm]}, batches, rho, sorted({1, 3, 5, steps}))
        out.report(f"{prefix}/perturbed_loss.csv", rep)


# -- commands ------------------------------------------------------------------

def cmd_train(args) -> int:
    run = load_config(args.config)
    seeds = _seeds(args, run)
    out = Outputs(_out_dir(args, run, f"runs/{run.name}"), args.format)
    try:
        models = _train_seeds(run, seeds, args.jobs)
    except NumericalAbort as exc:
        return _abort(exc, run, out)
    summaries = {}
    rho = _probe_rho(run.analysis.rho, run.optimizer.rho)
    for tm in models:
        prefix = f"seed_{tm.seed}"
        _write_seed(out, tm, prefix)
        for probe in run.analysis.probes:
            try:
                run_probe(out, f"{prefix}/probes", probe, tm, rho, run.analysis.steps)
            except DegenerateDirectionError as exc:
                print(f"seed {tm.seed}: probe {probe} skipped: {exc}", file=sys.stderr)
        summaries[str(tm.seed)] = _summary(tm)
    out.csv("summary.csv", ["seed", "method", "final_train_loss", "final_train_accuracy",
                            "final_test_loss", "final_test_accuracy"],
            ([str(tm.seed), tm.method, *(fmt(getattr(tm.final(s), f)) for s in ("train", "test") for f in ("loss", "accuracy"))]
             for tm in models))
    write_manifest(out.root, "train", run.config_hash(), summaries, out.files)
    print(f"trained {len(models)} seed(s) -> {out.root}")
    return EXIT_OK


def _abort(exc: NumericalAbort, run: RunConfig, out: Outputs) -> int:
    snapshot = None
    if exc.params is not None:
        spec = run.model.to_spec()
        tm = TrainedModel(spec, np.asarray(exc.params), run.dataset.to_spec(), run.batch_size,
                          -1, run.optimizer.to_config().label)
        snapshot = save_checkpoint(out.root / "abort_snapshot.ckpt", tm)
    print(f"numerical abort: {exc}", file=sys.stderr)
    if snapshot is not None:
        print(f"snapshot written to {snapshot}", file=sys.stderr)
    return EXIT_NUMERICAL


def cmd_compare(args) -> int:
    runs = [load_config(p) for p in args.config]
    datasets = {config_hash(r.dataset.model_dump(mode="json")) for r in runs}
    if len(datasets) != 1:
        raise ConfigError("compare needs runs that share one dataset configuration")
    out = Outputs(_out_dir(args, None, "runs/compare"), args.format)
    groups: dict[str, list[TrainedModel]] = {}
    summaries = {}
    for run in runs:
        label = run.name
        if label in groups:
            raise ConfigError(f"duplicate run name {label!r} in compare")
        try:
            groups[label] = _train_seeds(run, _seeds(args, run), args.jobs)
        except NumericalAbort as exc:
            return _abort(exc, run, out)
        summaries[label] = {str(tm.seed): _summary(tm) for tm in groups[label]}
    stats = {}
    for label, models in groups.items():
        acc = [tm.final("test").accuracy for tm in models]
        loss = [tm.final("test").loss for tm in models]
        stats[label] = (len(models), *_mean_std(acc), *_mean_std(loss))
    best_acc = max(s[1] for s in stats.values())
    best_loss = min(s[3] for s in stats.values())
    rows = []
    for label, (n, am, asd, lm, lsd) in stats.items():
        rows.append([label, groups[label][0].method, str(n), fmt(am), fmt(asd), fmt(lm), fmt(lsd),
                     "true" if am == best_acc else "false", "true" if lm == best_loss else "false"])
    out.csv("comparison.csv", ["run", "method", "n_seeds", "test_accuracy_mean", "test_accuracy_std",
                               "test_loss_mean", "test_loss_std", "best_accuracy", "best_loss"], rows)
    out.chart("comparison.svg", svg.bar_chart(list(stats), [s[1] for s in stats.values()],
                                              title="mean test accuracy", ylabel="accuracy"))
    if args.perturbed_table:
        dataset = generate_dataset(runs[0].dataset.to_spec())
        batches = sequential_batches(dataset, runs[0].batch_size)
        rho = args.rho if args.rho is not None else _probe_rho(runs[0].analysis.rho, runs[0].optimizer.rho)
        steps = [int(s) for s in args.table_steps.split(",")]
        out.report("perturbed_loss.csv", perturbed_loss_table(groups, batches, rho, steps))
    canonical = {"runs": [r.canonical() for r in runs], "seeds": list(args.seed or [])}
    write_manifest(out.root, "compare", config_hash(canonical), summaries, out.files)
    for row in rows:
        print(f"{row[0]:<20} acc {float(row[3]):.4f} +- {float(row[4]):.4f}")
    return EXIT_OK


def cmd_probe(args) -> int:
    names = [p.strip() for p in args.probe.split(",") if p.strip()]
    bad = [p for p in names if p not in PROBES]
    if not names or bad:
        raise ConfigError(f"unknown probe {', '.join(bad) or '(none)'}; valid: {', '.join(PROBES)}")
    tm = load_checkpoint(args.checkpoint)
    out = Outputs(_out_dir(args, None, str(Path(args.checkpoint).parent / "probes")), args.format)
    rho = args.rho if args.rho is not None else DEFAULT_PROBE_RHO
    for name in names:
        run_probe(out, ".", name, tm, rho, args.steps, lr=args.lr, k=args.k)
    canonical = {"checkpoint": sha256_file(args.checkpoint), "probes": names, "rho": rho,
                 "steps": args.steps, "lr": args.lr, "k": args.k}
    write_manifest(out.root, "probe", config_hash(canonical), {"probe_batch_loss": fmt(tm.probe_batch_loss)},
                   out.files)
    print(f"probes {', '.join(names)} -> {out.root}")
    return EXIT_OK


def _apply_axis(base: dict, axis: str, value: str, kind: str) -> dict:
    data = {**base, "optimizer": {**base["optimizer"], "kind": kind}}
    opt = data["optimizer"]
    if axis == "rho":
        opt["rho"] = float(value)
    elif axis == "steps":
        opt["steps"] = int(value)
        opt["step_ratio"] = None
        opt["msam_weights"] = None
    else:
        ratio = parse_ratio(value)
        opt["step_ratio"] = value
        opt["steps"] = len(ratio)
        opt["msam_weights"] = None
    return data


def cmd_sweep(args) -> int:
    run = load_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    bad = [m for m in methods if m not in ("sgd", "sam", "msam")]
    if bad:
        raise ConfigError(f"unknown method(s) {bad}; valid: sgd, sam, msam")
    seeds = _seeds(args, run)
    base = run.model_dump(mode="json")
    out = Outputs(_out_dir(args, run, f"runs/{run.name}-sweep-{args.axis}"), args.format)
    cells = []
    if "sgd" in methods:
        cells.append(("sgd", "", {**base, "optimizer": {**base["optimizer"], "kind": "sgd"}}))
    for m in methods:
        if m == "sgd":
            continue
        for v in values:
            try:
                data = _apply_axis(base, args.axis, v, m)
            except ValueError as exc:
                raise ConfigError(f"bad {args.axis} value {v!r}: {exc}") from None
            cells.append((m, v, data))
    rows, summaries, series = [], {}, {}
    for method, value, data in cells:
        cell_run = parse_config(data, f"sweep[{args.axis}={value or '-'}]")
        try:
            models = _train_seeds(cell_run, seeds, args.jobs)
        except NumericalAbort as exc:
            return _abort(exc, cell_run, out)
        acc = [tm.final("test").accuracy for tm in models]
        am, asd = _mean_std(acc)
        label = models[0].method
        rows.append([method, label, args.axis, value, str(len(models)), fmt(am), fmt(asd)])
        summaries[f"{method}:{value}"] = {str(tm.seed): _summary(tm) for tm in models}
        if value and args.axis != "ratio":
            xs, ys = series.setdefault(method, ([], []))
            xs.append(float(value))
            ys.append(am)
    out.csv("sweep.csv", ["method", "label", "axis", "value", "n_seeds", "test_accuracy_mean",
                          "test_accuracy_std"], rows)
    if series:
        out.chart("sweep.svg", svg.line_chart(series, title=f"test accuracy vs {args.axis}",
                                              xlabel=args.axis, ylabel="accuracy"))
    canonical = {"run": run.canonical(), "axis": args.axis, "values": values, "methods": methods, "seeds": seeds}
    write_manifest(out.root, "sweep", config_hash(canonical), summaries, out.files)
    print(f"sweep over {args.axis} ({len(cells)} cells) -> {out.root}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    names = list(TOY_LOSSES) if args.loss == "all" else [args.loss]
    steps = [int(s) for s in args.steps.split(",")]
    out = Outputs(_out_dir(args, None, "runs/oracle"), args.format)
    rows = []
    for name in names:
        toy = toy_model(name)
        model = toy.model()
        w = np.array(toy.point)
        rho = args.rho if args.rho is not None else toy.rho
        res = bruteforce_inner_max(model, w, None, rho, resolution=args.resolution)
        ascent_losses = []
        for n in steps:
            traj = ascent_multi(model, w, None, AscentConfig(rho=rho, steps=n))
            ascent_losses.append(None if traj.degenerate else model.loss(traj.final_perturbed))
        rows.append([name, fmt(rho), fmt(res.max_loss), fmt(res.tolerance), str(res.n_points),
                     *(fmt(x) for x in ascent_losses)])
    out.csv("oracle.csv", ["loss", "rho", "bruteforce_max", "tolerance", "grid_points",
                           *(f"loss_v{n}" for n in steps)], rows)
    canonical = {"losses": names, "steps": steps, "rho": args.rho, "resolution": args.resolution}
    write_manifest(out.root, "oracle", config_hash(canonical), {}, out.files)
    for r in rows:
        print(" ".join(r))
    return EXIT_OK


def cmd_dataset(args) -> int:
    run = load_config(args.config)
    spec = run.dataset.to_spec()
    out = Outputs(_out_dir(args, None, f"runs/{run.name}-data"), "csv")
    for p in export_csv(generate_dataset(spec), out.root):
        out.add(p)
    write_manifest(out.root, "dataset", config_hash(run.dataset.model_dump(mode="json")), {}, out.files)
    print(f"dataset {spec.kind} -> {out.root}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="samlab", description="Train and probe SAM, SAM-N and MSAM-N on small synthetic problems.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True, repeat_config=False):
        if repeat_config:
            p.add_argument("--config", action="append", required=True, metavar="PATH")
        elif config:
            p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--seed", type=int, action="append", metavar="S", help="override config seeds (repeatable)")
        p.add_argument("--out", metavar="DIR")
        p.add_argument("--format", choices=("csv", "csv+svg"), default="csv")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes for seeds")

    common(sub.add_parser("train", help="train every seed of a config"))
    p = sub.add_parser("compare", help="train several configs and tabulate test accuracy")
    common(p, repeat_config=True)
    p.add_argument("--perturbed-table", action="store_true", help="also emit the perturbed-loss table")
    p.add_argument("--rho", type=float)
    p.add_argument("--table-steps", default="1,3,5")

    p = sub.add_parser("probe", help="landscape probes on a checkpoint")
    common(p, config=False)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--probe", required=True, help=f"comma list of: {', '.join(PROBES)}")
    p.add_argument("--rho", type=float)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--k", type=int, default=3, help="eigenvalues for the spectrum probe")

    p = sub.add_parser("sweep", help="accuracy over rho, steps or step ratio")
    common(p)
    p.add_argument("--axis", choices=("rho", "steps", "ratio"), required=True)
    p.add_argument("--values", required=True, help='comma list, e.g. "0,0.05,0.1" or "1:1,1:2"')
    p.add_argument("--methods", default="sgd,sam,msam")

    p = sub.add_parser("oracle", help="exhaustive inner maximum on 2-parameter toy losses")
    common(p, config=False)
    p.add_argument("--loss", default="all", help=f"all or one of: {', '.join(TOY_LOSSES)}")
    p.add_argument("--steps", default="1,10")
    p.add_argument("--rho", type=float)
    p.add_argument("--resolution", type=int, default=3600)

    common(sub.add_parser("dataset", help="export the configured dataset as CSV"))
    return parser


COMMANDS = {
    "train": cmd_train,
    "compare": cmd_compare,
    "probe": cmd_probe,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
    "dataset": cmd_dataset,
}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalAbort, DegenerateDirectionError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
