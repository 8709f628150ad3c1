"""``kapointnet`` command line: generate | train | eval | predict | inspect | compare."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import evaluation as E
from . import pipeline
from .config import RunConfig, load_run_config, resolve
from .data.io import export_csv
from .errors import KaPointNetError, UsageError
from .model import ModelConfig, build_model

# (mode, n_s, degree, norm) rows printed by ``inspect --table``
COUNT_GRID = (
    [("KAN", "1", d, "batch") for d in (2, 3, 4, 5, 6)]
    + [("KAN", s, 3, "batch") for s in ("1/2", "3/4", "5/4", "3/2", "2")]
    + [("MLP", s, 3, "batch") for s in ("1", "2", "4")]
    + [("KAN", "1", 3, "layer")]
)


def _percent_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("empty percentage list")
    return values


def _with_seed(cfg: RunConfig, seed: int | None) -> RunConfig:
    """--seed overrides every seed of the run (data, split, model, training)."""
    if seed is None:
        return cfg
    cfg.dataset.seed = cfg.dataset.split_seed = cfg.dataset.noise_seed = seed
    cfg.model = cfg.model.with_(seed=seed)
    cfg.train.seed = seed
    return cfg


def cmd_generate(args) -> int:
    cfg = _with_seed(load_run_config(args.config), args.seed)
    out = resolve(args.out) if args.out else cfg.dataset_dir
    if out.exists() and any(out.iterdir()) and not args.force:
        raise UsageError(f"{out} exists and is not empty; pass --force to overwrite")
    if out.exists() and args.force:
        for f in out.iterdir():
            if f.is_file() and (f.suffix == ".kapc" or f.name == "manifest.json"):
                f.unlink()
    directory, counts = pipeline.generate(cfg, out)
    for kind, n in counts.items():
        print(f"{kind}: {n}")
    print(f"wrote {sum(counts.values())} samples to {directory}")
    return 0


def cmd_train(args) -> int:
    cfg = _with_seed(load_run_config(args.config), args.seed)
    dataset = resolve(args.dataset) if args.dataset else None
    out = resolve(args.out) if args.out else None
    run = pipeline.train_run(cfg, dataset, out)
    h = run.result.history
    print(f"epochs: {len(h.epochs)} ({h.stop_reason}); best epoch {h.best_epoch}, val loss {h.best_val_loss}")
    print(f"checkpoint: {run.checkpoint_path}")
    return 0


def _out_dir(args, checkpoint: Path) -> Path:
    out = resolve(args.out) if args.out else checkpoint.parent
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_eval(args) -> int:
    path = Path(args.checkpoint)
    ckpt = pipeline.load(path)
    samples = pipeline.checkpoint_samples(ckpt, args.split, args.dataset)
    out = _out_dir(args, path)
    summary = E.summarize_errors(ckpt.model, samples, ckpt.scaling)
    prefix = f"eval_{args.split}"
    E.write_summary_json(out / f"{prefix}.json", summary, {"split": args.split,
                                                             "n_parameters": ckpt.model.count_trainable_parameters()})
    E.write_per_sample_csv(out / f"{prefix}_per_sample.csv", summary)
    E.write_histogram_csv(out / f"{prefix}_histogram.csv", summary)
    preds = E.predict_fields(ckpt.model, samples, ckpt.scaling)
    forces = [(i, E.surface_pressure_force(s), E.surface_pressure_force(s, p[:, 2]))
              for i, (s, p) in enumerate(zip(samples, preds)) if s.surface_mask.sum() >= 3]
    E.write_force_csv(out / f"{prefix}_forces.csv", forces)
    for v in ("u", "v", "p"):
        print(f"{v}: avg {summary.avg[v]:.4e}  max {summary.max[v]:.4e}  min {summary.min[v]:.4e}")
    if args.dropout:
        sweep = E.dropout_sweep(ckpt.model, samples, ckpt.scaling, args.dropout, seed=args.seed)
        E.write_sweep_csv(out / f"{prefix}_dropout.csv", sweep)
        for pct, s in sweep.items():
            print(f"dropout {pct:g}%: " + "  ".join(f"{v} {s.avg[v]:.4e}" for v in ("u", "v", "p")))
    print(f"reports written to {out}")
    return 0


def cmd_predict(args) -> int:
    path = Path(args.checkpoint)
    ckpt = pipeline.load(path)
    cloud = pipeline.read_cloud(args.cloud)
    pred = E.predict_fields(ckpt.model, [cloud], ckpt.scaling)[0]
    out = resolve(args.out) if args.out else Path(args.cloud).with_suffix(".pred.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    export_csv(out, cloud, pred)
    print(f"wrote {cloud.n_points} predicted points to {out}")
    return 0


def _count(mode, n_s, degree, norm, n_points=1024) -> int:
    cfg = ModelConfig(mode=mode, n_s=n_s, degree=degree, norm=norm, n_points=n_points)
    return build_model(cfg).count_trainable_parameters()


def cmd_inspect(args) -> int:
    if args.config is None and not args.table:
        raise UsageError("inspect needs a config file, --table, or both")
    if args.config is not None:
        m = load_run_config(args.config).model
        model = build_model(m)
        print(f"{m.mode} n_s={m.n_s} degree={m.degree} norm={m.norm} N={m.n_points}: "
              f"{model.count_trainable_parameters()} trainable parameters")
        if args.layers:
            for s in model.slots:
                n = s.layer.n_trainable() + (sum(p.size for p in s.norm.parameters().values()) if s.norm else 0)
                print(f"  {s.name:10s} {s.layer.d_in:6d} -> {s.layer.d_out:6d}  {n}")
    if args.table:
        print(f"{'mode':5s} {'n_s':>5s} {'degree':>6s} {'norm':>6s} {'parameters':>12s}")
        for mode, n_s, degree, norm in COUNT_GRID:
            deg = str(degree) if mode == "KAN" else "-"
            print(f"{mode:5s} {n_s:>5s} {deg:>6s} {norm:>6s} {_count(mode, n_s, degree, norm):12d}")
    return 0


def cmd_compare(args) -> int:
    entries, samples = [], None
    for path in args.checkpoints:
        ckpt = pipeline.load(path)
        if samples is None:
            samples = pipeline.checkpoint_samples(ckpt, args.split, args.dataset)
        c = ckpt.model.config
        name = f"{c.mode} n_s={c.n_s}" + (f" deg={c.degree}" if c.mode == "KAN" else "")
        entries.append((name, ckpt.model, ckpt.scaling, pipeline.seconds_per_epoch(path)))
    report = E.compare_models(entries, samples)
    out = resolve(args.out) if args.out else Path(args.checkpoints[0]).parent
    out.mkdir(parents=True, exist_ok=True)
    report.write(out / "compare.json", out / "compare.csv")
    for row in report.rows():
        print(" | ".join(str(v) for v in row))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kapointnet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic potential-flow dataset")
    g.add_argument("config", help="run config YAML")
    g.add_argument("--out", help="dataset directory (default: dataset.path from the config)")
    g.add_argument("--seed", type=int, help="override every seed in the config")
    g.add_argument("--force", action="store_true", help="overwrite a non-empty dataset directory")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a model; writes checkpoint and metrics CSV")
    t.add_argument("config", help="run config YAML")
    t.add_argument("--dataset", help="dataset directory (default: dataset.path from the config)")
    t.add_argument("--out", help="run directory (default: output_dir from the config)")
    t.add_argument("--seed", type=int, help="override every seed in the config")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="error summary, histograms, forces and sweeps for a split")
    e.add_argument("checkpoint")
    e.add_argument("--split", choices=pipeline.SPLITS, default="test")
    e.add_argument("--dataset", help="dataset directory (default: the one recorded in the checkpoint)")
    e.add_argument("--out", help="report directory (default: next to the checkpoint)")
    e.add_argument("--dropout", type=_percent_list, metavar="PCTS", help="comma-separated dropout percentages")
    e.add_argument("--seed", type=int, default=0, help="seed for the dropout sweep")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("predict", help="predict u, v, p for one cloud (.kapc or .csv) and write a CSV")
    r.add_argument("checkpoint")
    r.add_argument("cloud")
    r.add_argument("--out", help="output CSV (default: <cloud>.pred.csv)")
    r.set_defaults(func=cmd_predict)

    i = sub.add_parser("inspect", help="trainable-parameter counts")
    i.add_argument("config", nargs="?", help="run config YAML")
    i.add_argument("--table", action="store_true", help="print the reference grid of configurations")
    i.add_argument("--layers", action="store_true", help="per-layer breakdown for the configured model")
    i.set_defaults(func=cmd_inspect)

    c = sub.add_parser("compare", help="side-by-side error report of two or more checkpoints")
    c.add_argument("checkpoints", nargs="+")
    c.add_argument("--split", choices=pipeline.SPLITS, default="test")
    c.add_argument("--dataset", help="dataset directory (default: the one recorded in the first checkpoint)")
    c.add_argument("--out", help="report directory (default: next to the first checkpoint)")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KaPointNetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
