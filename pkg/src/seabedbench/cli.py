"""Command-line entry points.

Exit codes: 0 success, 2 configuration error, 3 data-generation error,
4 training error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import bench, classifiers as clf, datasets as ds, modes as modal, nmla, scattering
from .environments import (
    CatalogError,
    ConfigError,
    HighFreqTemplate,
    RoughnessSpec,
    SedimentClass,
    dump_catalog_csv,
    environment_set,
    load_config,
    with_seed,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_TRAINING = 4


def _open_out(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w"), True


def cmd_catalog_dump(args) -> int:
    stream, close = _open_out(args.out)
    try:
        dump_catalog_csv(stream)
    finally:
        if close:
            stream.close()
    return EXIT_OK


def cmd_modes_solve(args) -> int:
    from dataclasses import replace

    cls = SedimentClass.from_name(args.sediment)
    env = dict(environment_set("lowfreq", args.env))[cls]
    if args.freq != env.source.frequency:
        env = replace(env, source=replace(env.source, frequency=args.freq))
    model = modal.build_depth_model(env, points_per_wavelength=args.ppw)
    modeset = modal.solve_modes(model, args.freq)
    stream, close = _open_out(args.out)
    try:
        modal.wavenumber_table_csv(modeset, stream)
    finally:
        if close:
            stream.close()
    if args.save:
        modeset.save(args.save)
    return EXIT_OK


def _template_from_file(path) -> HighFreqTemplate:
    text = Path(path).read_text()
    values = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            continue
        if "=" not in line or current != "template":
            if current == "template":
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            continue
        key, _, val = line.partition("=")
        values[key.strip()] = float(val.strip())
    required = ("top_speed", "top_density", "top_thickness", "bottom_speed",
                "bottom_density", "rms_height", "corr_length")
    missing = [k for k in required if k not in values]
    if missing:
        raise ConfigError(f"{path}: missing template keys: {', '.join(missing)}")
    rough = RoughnessSpec(values.pop("rms_height"), values.pop("corr_length"),
                          int(values.pop("seed", 0)))
    return HighFreqTemplate(roughness=rough, **values)


def cmd_scatter_solve(args) -> int:
    template = _template_from_file(args.template)
    solution = scattering.solve_template(template, nodes_per_wavelength=args.npw)
    solution.save(args.out)
    if args.backscatter_csv:
        signal = nmla.backscatter_signal(solution, template, n_points=args.n_points)
        with open(args.backscatter_csv, "w") as fh:
            signal.to_csv(fh)
    print(f"solved {solution.n_unknowns} unknowns, residual {solution.residual:.2e}, "
          f"wrote {args.out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = with_seed(config, args.seed)
    if config.pipeline != args.pipeline:
        raise ConfigError(f"config pipeline {config.pipeline!r} does not match "
                          f"'gen {args.pipeline}'")
    out = Path(args.out or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    train = bench.training_dataset(config)
    ds.save(train, out / "training.sbds")
    print(f"training.sbds: {len(train)} samples")
    for set_id in config.test_sets:
        clean = bench.clean_test_dataset(config, set_id)
        noisy = bench.noisy_copy(config, clean, set_id, config.test_snr_db, 0)
        ds.save(noisy, out / f"test_{set_id}.sbds")
        print(f"test_{set_id}.sbds: {len(noisy)} samples")
    if args.csv:
        with open(out / "training.csv", "w") as fh:
            ds.to_csv(train, fh)
    return EXIT_OK


def cmd_train(args) -> int:
    data_dir = Path(args.data)
    train = ds.load(data_dir / "training.sbds")
    hyper = {}
    options = clf.TrainOptions(seed=args.seed or 0)
    if args.config:
        config = load_config(args.config)
        grid = config.hyper_grids.get(args.variant, {})
        if grid and config.search_budget > 1:
            fit_ds, val_ds = ds.split(train, config.holdout_fraction, seed=options.seed)
            hyper = clf.hyper_search(args.variant, fit_ds, val_ds, grid,
                                     config.search_budget, seed=options.seed, options=options)
        elif grid:
            hyper = {k: v[0] for k, v in grid.items()}
    fit_ds, val_ds = ds.split(train, 0.2, seed=options.seed)
    model, history = clf.fit(args.variant, fit_ds, val_ds, hyper, options)
    clf.save_model(model, args.out)
    final = history.get("train_loss", [None])[-1] if history else None
    print(f"trained {args.variant} on {len(fit_ds)} samples"
          + (f", final loss {final:.4f}" if final is not None else "")
          + f", wrote {args.out}")
    return EXIT_OK


def cmd_predict(args) -> int:
    model = clf.load_model(args.model)
    dataset = ds.load(args.data)
    pred = clf.predict_dataset(model, dataset)
    stream, close = _open_out(args.out)
    try:
        stream.write("index,true_label,predicted\n")
        for i, (t, p) in enumerate(zip(dataset.labels, pred)):
            stream.write(f"{i},{int(t)},{int(p)}\n")
    finally:
        if close:
            stream.close()
    acc = float(np.mean(pred == dataset.labels))
    print(f"accuracy {acc:.4f} on {len(dataset)} samples", file=sys.stderr)
    return EXIT_OK


def cmd_bench_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = with_seed(config, args.seed)
    report = bench.run_experiment(config)
    written = bench.emit_report(report, args.out or config.output_dir)
    for name, entry in sorted(report.classifiers.items()):
        print(f"{name:12s} mean accuracy {entry['accuracy_mean']:.4f}")
    print(f"wrote {len(written)} files to {args.out or config.output_dir}")
    return EXIT_OK


def cmd_bench_sweep(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        config = with_seed(config, args.seed)
    snrs = [float(s) for s in args.snr.split(",")] if args.snr else None
    report = bench.snr_sweep(config, snrs)
    written = bench.emit_report(report, args.out or config.output_dir)
    for row in report.snr_table:
        print(f"{row['classifier']:12s} snr {row['snr_db']:6.1f}  "
              f"accuracy {row['mean_accuracy']:.4f}")
    print(f"wrote {len(written)} files to {args.out or config.output_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="seabedbench",
                                     description="Synthetic sonar data factory and "
                                                 "sediment-classification benchmark")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("catalog", help="catalog operations")
    catalog_sub = p.add_subparsers(dest="subcommand", required=True)
    pd = catalog_sub.add_parser("dump", help="dump the environment catalog as CSV")
    pd.add_argument("--out", default=None, help="output file (default: stdout)")
    pd.set_defaults(func=cmd_catalog_dump)

    p = sub.add_parser("modes", help="normal-mode operations")
    modes_sub = p.add_subparsers(dest="subcommand", required=True)
    pm = modes_sub.add_parser("solve", help="solve modes and print the wavenumber table")
    pm.add_argument("--env", default="training", help="'training' or a test id 1..10")
    pm.add_argument("--class", dest="sediment", required=True,
                    help="clay | silt | sand | gravel")
    pm.add_argument("--freq", type=float, default=400.0)
    pm.add_argument("--ppw", type=float, default=20.0, help="grid points per wavelength")
    pm.add_argument("--out", default=None)
    pm.add_argument("--save", default=None, help="also write the binary mode set")
    pm.set_defaults(func=cmd_modes_solve)

    p = sub.add_parser("scatter", help="scattering solves")
    scatter_sub = p.add_subparsers(dest="subcommand", required=True)
    ps = scatter_sub.add_parser("solve", help="solve one template")
    ps.add_argument("--template", required=True, help="template description file")
    ps.add_argument("--out", required=True, help="binary field output")
    ps.add_argument("--npw", type=float, default=12.0)
    ps.add_argument("--backscatter-csv", default=None)
    ps.add_argument("--n-points", type=int, default=128)
    ps.set_defaults(func=cmd_scatter_solve)

    p = sub.add_parser("gen", help="generate labeled datasets")
    gen_sub = p.add_subparsers(dest="pipeline_cmd", required=True)
    for pipeline in ("lowfreq", "backscatter"):
        pg = gen_sub.add_parser(pipeline)
        pg.add_argument("--config", required=True)
        pg.add_argument("--out", default=None)
        pg.add_argument("--seed", type=int, default=None)
        pg.add_argument("--csv", action="store_true", help="also export training CSV")
        pg.set_defaults(func=cmd_gen, pipeline=pipeline)

    p = sub.add_parser("train", help="train one classifier")
    p.add_argument("--variant", required=True, choices=clf.VARIANTS)
    p.add_argument("--data", required=True, help="directory containing training.sbds")
    p.add_argument("--out", required=True, help="model output file")
    p.add_argument("--config", default=None, help="optional config with hyper grids")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict labels with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="dataset file")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("bench", help="benchmark orchestration")
    bench_sub = p.add_subparsers(dest="subcommand", required=True)
    pr = bench_sub.add_parser("run", help="run the full protocol from a config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", default=None)
    pr.add_argument("--seed", type=int, default=None)
    pr.set_defaults(func=cmd_bench_run)
    pw = bench_sub.add_parser("sweep", help="accuracy versus test SNR")
    pw.add_argument("--config", required=True)
    pw.add_argument("--snr", default=None, help="comma-separated dB list")
    pw.add_argument("--out", default=None)
    pw.add_argument("--seed", type=int, default=None)
    pw.set_defaults(func=cmd_bench_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CatalogError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ds.GenerationError, ds.DatasetError, ds.NoiseError, scattering.GeometryError,
            scattering.SolverError, scattering.SamplingError, nmla.CircleError,
            modal.ModeError) as exc:
        print(f"generation error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except clf.TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING


if __name__ == "__main__":
    sys.exit(main())
