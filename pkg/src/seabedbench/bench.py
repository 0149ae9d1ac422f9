"""End-to-end experiment protocol: generate (or reuse cached) data, train the
configured classifiers, evaluate on the perturbed test environments with
repeated noise draws, and emit deterministic reports.

Reports are reproducible byte-for-byte from (config, master seed): anything
wall-clock dependent goes to a separate timings file.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import classifiers as clf
from . import datasets as ds
from .environments import ExperimentConfig

CACHE_ENV_VAR = "SEABEDBENCH_CACHE"


class BenchError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with true classes on rows and predicted classes on columns."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.shape != (4, 4) or np.any(c < 0):
            raise ValueError("confusion matrix must be 4x4 with non-negative counts")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts) / max(1, self.total))

    def row_rates(self) -> np.ndarray:
        sums = self.counts.sum(axis=1, keepdims=True)
        return self.counts / np.maximum(sums, 1)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


def confusion(true_labels, predicted) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted, dtype=np.int64)
    if t.shape != p.shape:
        raise ValueError("label arrays must have equal length")
    counts = np.zeros((4, 4), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts)


@dataclass
class Report:
    """Everything one run produced, minus wall-clock timings."""

    config_echo: dict
    master_seed: int
    classifiers: dict            # name -> {"hyper", "per_set": {set: counts}, "accuracy_mean"}
    snr_table: list              # rows of {"classifier", "snr_db", "mean_accuracy"}
    loss_history_files: dict     # name -> relative path
    timings: dict = field(default_factory=dict)   # excluded from the payload

    def payload(self) -> str:
        body = {
            "config": self.config_echo,
            "master_seed": self.master_seed,
            "classifiers": self.classifiers,
            "snr_table": self.snr_table,
            "loss_history_files": self.loss_history_files,
        }
        return json.dumps(body, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Report":
        body = json.loads(text)
        report = cls(config_echo=body["config"], master_seed=body["master_seed"],
                     classifiers=body["classifiers"], snr_table=body["snr_table"],
                     loss_history_files=body.get("loss_history_files", {}))
        for name, entry in report.classifiers.items():
            accs = []
            for set_id, counts in entry["per_set"].items():
                cm = ConfusionMatrix(np.asarray(counts))
                accs.append(cm.accuracy)
            entry["accuracy_mean"] = float(np.mean(accs)) if accs else 0.0
        return report


# ---------------------------------------------------------------------------
# caching
# ---------------------------------------------------------------------------

def cache_dir(config: ExperimentConfig) -> Path:
    base = os.environ.get(CACHE_ENV_VAR)
    d = Path(base) if base else Path(config.output_dir) / "cache"
    d.mkdir(parents=True, exist_ok=True)
    return d


def _cache_key(**kwargs) -> str:
    canon = json.dumps(kwargs, sort_keys=True, default=str)
    return hashlib.sha256(canon.encode()).hexdigest()[:24]


def _cached_dataset(config: ExperimentConfig, build, **key_fields) -> ds.LabeledDataset:
    key = _cache_key(**key_fields)
    path = cache_dir(config) / f"{key_fields.get('stage', 'data')}_{key}.sbds"
    if path.exists():
        return ds.load(path)
    dataset = build()
    ds.save(dataset, path)
    return dataset


# ---------------------------------------------------------------------------
# generation plumbing shared by run/sweep
# ---------------------------------------------------------------------------

def _seed_for(master_seed: int, *parts) -> int:
    text = json.dumps([master_seed, *parts], default=str)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") % (2**63)


def _gen_kwargs(config: ExperimentConfig) -> dict:
    if config.pipeline == "lowfreq":
        return {"points_per_wavelength": config.points_per_wavelength}
    return {
        "n_points": config.n_signal_points,
        "observation_height": config.observation_height,
        "radius": config.observation_radius,
        "nodes_per_wavelength": config.nodes_per_wavelength,
    }


def training_dataset(config: ExperimentConfig) -> ds.LabeledDataset:
    seed = _seed_for(config.master_seed, "train")
    if config.pipeline == "lowfreq":
        build = lambda: ds.generate_lowfreq_dataset(
            "training", config.train_count_per_class, config.train_snr_db, seed,
            points_per_wavelength=config.points_per_wavelength)
    else:
        build = lambda: ds.generate_backscatter_dataset(
            "training", config.train_count_per_class, config.train_snr_db, seed,
            workers=config.workers, **_gen_kwargs(config))
    return _cached_dataset(config, build, stage="train", pipeline=config.pipeline,
                           set="training", count=config.train_count_per_class,
                           snr=config.train_snr_db, seed=seed, gen=_gen_kwargs(config))


def clean_test_dataset(config: ExperimentConfig, set_id: int) -> ds.LabeledDataset:
    """Noise-free test features for one catalog set (fresh geometry per set)."""
    seed = _seed_for(config.master_seed, "test", set_id)
    if config.pipeline == "lowfreq":
        build = lambda: ds.generate_lowfreq_dataset(
            set_id, config.test_count_per_class, None, seed,
            points_per_wavelength=config.points_per_wavelength)
    else:
        build = lambda: ds.generate_backscatter_dataset(
            set_id, config.test_count_per_class, None, seed,
            workers=config.workers, **_gen_kwargs(config))
    return _cached_dataset(config, build, stage="test", pipeline=config.pipeline,
                           set=set_id, count=config.test_count_per_class,
                           snr=None, seed=seed, gen=_gen_kwargs(config))


def noisy_copy(config: ExperimentConfig, clean: ds.LabeledDataset, set_id, snr_db,
               realization: int) -> ds.LabeledDataset:
    if snr_db is None:
        return clean
    seed = _seed_for(config.master_seed, "noise", set_id, realization, snr_db)
    if config.pipeline == "lowfreq":
        noisy = np.empty_like(clean.features)
        for i in range(len(clean)):
            s = ds.sample_seed(seed, set_id, int(clean.labels[i]), i, stream=7)
            noisy[i] = ds.add_noise(clean.features[i], ds.NoiseSpec(snr_db, "complex-circular", s))
        return replace(clean, features=noisy, snr_db=snr_db)
    return ds.generate_backscatter_dataset(set_id, config.test_count_per_class, snr_db,
                                           seed, clean_signals=clean)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------

def train_all(config: ExperimentConfig, train_set: ds.LabeledDataset):
    """Hyper-search (when a grid is configured) and fit of every classifier."""
    fit_ds, val_ds = ds.split(train_set, config.holdout_fraction,
                              seed=_seed_for(config.master_seed, "split"))
    models, histories, timings, chosen = {}, {}, {}, {}
    for variant in config.classifiers:
        options = clf.TrainOptions(seed=_seed_for(config.master_seed, "fit", variant) % 2**32)
        grid = config.hyper_grids.get(variant, {})
        if grid and config.search_budget > 1:
            hyper = clf.hyper_search(variant, fit_ds, val_ds, grid, config.search_budget,
                                     seed=_seed_for(config.master_seed, "search", variant) % 2**32,
                                     options=options)
        elif grid:
            hyper = {k: v[0] for k, v in grid.items()}
        else:
            hyper = {}
        start = time.perf_counter()
        model, history = clf.fit(variant, fit_ds, val_ds, hyper, options)
        timings[variant] = time.perf_counter() - start
        models[variant] = model
        histories[variant] = history
        chosen[variant] = model.hyper
    return models, histories, timings, chosen, (fit_ds, val_ds)


def evaluate(config: ExperimentConfig, models: dict, snr_db, test_sets=None):
    """Per-classifier, per-set confusion over the configured noise realizations."""
    test_sets = list(test_sets if test_sets is not None else config.test_sets)
    results = {name: {} for name in models}
    for set_id in test_sets:
        clean = clean_test_dataset(config, set_id)
        if str(clean.set_id) == "training":
            raise BenchError("test evaluation must never touch the training environments")
        for r in range(config.noise_realizations):
            noisy = noisy_copy(config, clean, set_id, snr_db, r)
            for name, model in models.items():
                pred = clf.predict_dataset(model, noisy)
                cm = confusion(noisy.labels, pred)
                key = str(set_id)
                results[name][key] = results[name].get(key, ConfusionMatrix(np.zeros((4, 4), dtype=np.int64))) + cm
            if snr_db is None:
                break   # no noise: one realization is exact
    return results


def run_experiment(config: ExperimentConfig) -> Report:
    """The full protocol: train on nominal data, test on perturbed catalogs."""
    config.validate()
    overlap = {"training"} & {str(t) for t in config.test_sets}
    if overlap:
        raise BenchError("training and test environment sets must be disjoint")

    t0 = time.perf_counter()
    train_set = training_dataset(config)
    gen_time = time.perf_counter() - t0
    models, histories, fit_timings, chosen, _ = train_all(config, train_set)
    results = evaluate(config, models, config.test_snr_db)

    classifiers_payload = {}
    for name in sorted(models):
        per_set = {k: results[name][k].counts.tolist() for k in sorted(results[name])}
        accs = [ConfusionMatrix(np.asarray(c)).accuracy for c in per_set.values()]
        classifiers_payload[name] = {
            "hyper": chosen[name],
            "per_set": per_set,
            "accuracy_mean": float(np.mean(accs)) if accs else 0.0,
        }
    report = Report(
        config_echo=_config_echo(config),
        master_seed=config.master_seed,
        classifiers=classifiers_payload,
        snr_table=[],
        loss_history_files={name: f"loss_{name}.json" for name in sorted(histories) if histories[name]},
        timings={"generation_s": gen_time, "fit_s": fit_timings},
    )
    report._histories = histories  # carried for emit_report, not serialized
    return report


def snr_sweep(config: ExperimentConfig, snr_list=None) -> Report:
    """Train once at the configured training SNR, sweep the test noise level."""
    config.validate()
    snrs = list(snr_list if snr_list is not None else config.sweep_snr_db)
    train_set = training_dataset(config)
    models, histories, fit_timings, chosen, _ = train_all(config, train_set)
    table = []
    for snr in snrs:
        results = evaluate(config, models, snr)
        for name in sorted(models):
            accs = [cm.accuracy for cm in results[name].values()]
            table.append({"classifier": name,
                          "snr_db": None if snr is None else float(snr),
                          "mean_accuracy": float(np.mean(accs))})
    report = Report(
        config_echo=_config_echo(config),
        master_seed=config.master_seed,
        classifiers={name: {"hyper": chosen[name], "per_set": {}, "accuracy_mean": 0.0}
                     for name in sorted(models)},
        snr_table=table,
        loss_history_files={},
        timings={"fit_s": fit_timings},
    )
    report._histories = histories
    return report


def _config_echo(config: ExperimentConfig) -> dict:
    echo = asdict(config)
    # execution-only knobs do not influence the results and stay out of the
    # deterministic payload (worker counts must not change report bytes)
    echo.pop("workers", None)
    echo.pop("output_dir", None)
    echo["test_sets"] = list(config.test_sets)
    echo["classifiers"] = list(config.classifiers)
    echo["sweep_snr_db"] = list(config.sweep_snr_db)
    echo["hyper_grids"] = {k: {kk: list(vv) for kk, vv in v.items()}
                           for k, v in config.hyper_grids.items()}
    return echo


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------

def emit_report(report: Report, out_dir, formats=("json", "csv", "svg")) -> list[Path]:
    """Write the report as structured text, CSV tables, and static SVG plots."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    if "json" in formats:
        p = out / "report.json"
        p.write_text(report.payload())
        written.append(p)
        t = out / "timings.json"
        t.write_text(json.dumps(report.timings, sort_keys=True, indent=1, default=float))
        written.append(t)
        for name, fname in report.loss_history_files.items():
            hist = getattr(report, "_histories", {}).get(name)
            if hist:
                hp = out / fname
                hp.write_text(json.dumps(hist, sort_keys=True))
                written.append(hp)

    if "csv" in formats:
        for name, entry in report.classifiers.items():
            for set_id, counts in entry["per_set"].items():
                p = out / f"confusion_{name}_set{set_id}.csv"
                with open(p, "w") as fh:
                    fh.write("true\\pred,clay,silt,sand,gravel\n")
                    for row_label, row in zip(("clay", "silt", "sand", "gravel"), counts):
                        fh.write(row_label + "," + ",".join(str(int(v)) for v in row) + "\n")
                written.append(p)
        if report.snr_table:
            p = out / "snr_sweep.csv"
            with open(p, "w") as fh:
                fh.write("classifier,snr_db,mean_accuracy\n")
                for row in report.snr_table:
                    fh.write(f"{row['classifier']},{row['snr_db']!r},{row['mean_accuracy']!r}\n")
            written.append(p)

    if "svg" in formats:
        if report.snr_table:
            p = out / "accuracy_vs_snr.svg"
            p.write_text(_sweep_svg(report.snr_table))
            written.append(p)
        for name, entry in report.classifiers.items():
            if entry["per_set"]:
                total = ConfusionMatrix(sum(np.asarray(c) for c in entry["per_set"].values()))
                p = out / f"confusion_{name}.svg"
                p.write_text(_confusion_svg(name, total))
                written.append(p)
    return written


_SVG_COLORS = ("#1965b0", "#dc050c", "#4eb265", "#f7ee55", "#882e72",
               "#ba8db4", "#f1932d", "#72190e")


def _sweep_svg(table) -> str:
    table = [row for row in table if row["snr_db"] is not None]
    names = sorted({row["classifier"] for row in table})
    snrs = sorted({row["snr_db"] for row in table})
    w, h, m = 520, 360, 50
    if not snrs:
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}">'
                f'<rect width="{w}" height="{h}" fill="white"/></svg>')
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
             f'viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>']

    def sx(s):
        if len(snrs) == 1:
            return m + (w - 2 * m) / 2
        return m + (w - 2 * m) * (s - snrs[0]) / (snrs[-1] - snrs[0])

    def sy(a):
        return h - m - (h - 2 * m) * a

    parts.append(f'<line x1="{m}" y1="{h - m}" x2="{w - m}" y2="{h - m}" stroke="black"/>')
    parts.append(f'<line x1="{m}" y1="{m}" x2="{m}" y2="{h - m}" stroke="black"/>')
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        parts.append(f'<text x="{m - 8}" y="{sy(frac) + 4}" font-size="10" '
                     f'text-anchor="end">{frac:.2f}</text>')
    for s in snrs:
        parts.append(f'<text x="{sx(s)}" y="{h - m + 14}" font-size="10" '
                     f'text-anchor="middle">{s:g}</text>')
    parts.append(f'<text x="{w / 2}" y="{h - 8}" font-size="11" text-anchor="middle">'
                 'test SNR (dB)</text>')
    for i, name in enumerate(names):
        pts = [(sx(row["snr_db"]), sy(row["mean_accuracy"]))
               for row in sorted(table, key=lambda r: r["snr_db"]) if row["classifier"] == name]
        path = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        parts.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{w - m + 4}" y="{m + 14 * i}" font-size="10" '
                     f'fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def _confusion_svg(name: str, cm: ConfusionMatrix) -> str:
    labels = ("clay", "silt", "sand", "gravel")
    cell, m = 70, 60
    w = h = m + 4 * cell + 20
    rates = cm.row_rates()
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
             f'viewBox="0 0 {w} {h}">',
             f'<rect width="{w}" height="{h}" fill="white"/>',
             f'<text x="{m + 2 * cell}" y="16" font-size="12" text-anchor="middle">{name}</text>']
    for i in range(4):
        for j in range(4):
            r = rates[i, j]
            shade = int(255 * (1 - 0.85 * r))
            color = f"rgb({shade},{shade},255)" if i == j else f"rgb(255,{shade},{shade})"
            x, y = m + j * cell, m + i * cell
            parts.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="{color}" stroke="gray"/>')
            parts.append(f'<text x="{x + cell / 2}" y="{y + cell / 2 + 4}" font-size="11" '
                         f'text-anchor="middle">{int(cm.counts[i, j])}</text>')
    for i, lab in enumerate(labels):
        parts.append(f'<text x="{m - 6}" y="{m + i * cell + cell / 2 + 4}" font-size="10" '
                     f'text-anchor="end">{lab}</text>')
        parts.append(f'<text x="{m + i * cell + cell / 2}" y="{m - 6}" font-size="10" '
                     f'text-anchor="middle">{lab}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
