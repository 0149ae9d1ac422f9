"""Backscatter classification on a miniature dataset.

Each sample is a full scattering solve: fresh rough interface, a layer
thickness drawn from the catalog, then plane-wave decomposition into the
128-point signal (shortened here).  Eight samples per class at coarse
resolution keep the demo around a minute; the acceptance protocol runs 25
per class at production resolution, where the numbers are meaningful.
"""

import numpy as np

from seabedbench import TrainOptions, fit, generate_backscatter_dataset, predict_dataset, split

print("generating 4 x 8 training signals (32 scattering solves)...")
train = generate_backscatter_dataset("training", 8, None, master_seed=7,
                                     n_points=64, nodes_per_wavelength=8)
print(f"done: features {train.features.shape}, thickness draws "
      f"{sorted(set(np.round(train.thicknesses, 3)))}")

per_class_mean = [train.features[train.labels == c].mean() for c in range(4)]
print("\nmean signal level per class (the reflection ladder):")
for c, m in enumerate(per_class_mean):
    print(f"  class {c}: {m:.4f}")

fit_ds, val_ds = split(train, 0.25, seed=0)
options = TrainOptions(max_epochs=200, drop_period=50, minibatch=16, seed=0)
for variant in ("nc", "lr", "cnn3"):
    model, _ = fit(variant, fit_ds, val_ds, options=options)
    acc_train = np.mean(predict_dataset(model, fit_ds) == fit_ds.labels)
    acc_val = np.mean(predict_dataset(model, val_ds) == val_ds.labels)
    print(f"{variant:6s} train {acc_train:.2f}  holdout {acc_val:.2f} (8 samples)")
print("\nHoldout numbers over eight samples are coarse by nature; the"
      "\nacceptance suite runs the full desk-scale protocol.")
