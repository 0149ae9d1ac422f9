"""The matched-field classifier and the learning models.

Every learner operates in double precision and trains deterministically from
its seed.  Fits canonicalize the training-row order and standardize the
encoded features first, so shuffling the input rows cannot change a trained
model even at the last bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import modes as modal
from .datasets import KIND_COMPLEX20, LabeledDataset, encode_for_learners
from .environments import SedimentClass, nominal_environments
from .neuralnet import Network, build_cnn3, build_mlp, softmax
from .optim import AdamHyper, AdamState, adam_step, sgd_step, stepped_learning_rate

VARIANTS = ("mfp", "nc", "knn", "lr", "svm-linear", "svm-rbf", "mlp", "cnn3")


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainOptions:
    """Shared knobs of the gradient-trained variants."""

    optimizer: str = "adam"
    minibatch: int = 64
    learning_rate: float = 1e-3
    drop_factor: float = 0.5
    drop_period: int = 20
    clip_norm: float = 1.0
    weight_decay: float = 1e-4
    max_epochs: int = 200
    patience: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError("optimizer must be 'adam' or 'sgd'")
        if min(self.minibatch, self.learning_rate, self.drop_period,
               self.max_epochs, self.patience) <= 0 or self.clip_norm <= 0:
            raise ValueError("train options must be positive")
        if not 0.0 < self.drop_factor < 1.0:
            raise ValueError("drop_factor must lie in (0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be non-negative")


# ---------------------------------------------------------------------------
# matched-field processing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReplicaBank:
    """Unit-norm replica fields for the four nominal environments."""

    replicas: np.ndarray          # (4, n_phones) complex, unit norm
    parameters: tuple             # (sound speed, attenuation) per class

    def __post_init__(self):
        norms = np.linalg.norm(self.replicas, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("replica fields must have unit norm")


def build_replica_bank(points_per_wavelength: float = 20.0) -> ReplicaBank:
    """Replica fields from the modal forward model at the nominal parameters."""
    rows, params = [], []
    for cls, env in nominal_environments("lowfreq"):
        model = modal.build_depth_model(env, points_per_wavelength=points_per_wavelength)
        ms = modal.solve_modes(model, env.source.frequency)
        p = modal.pressure_field(ms, env).values
        rows.append(p / np.linalg.norm(p))
        params.append((env.sediment.speed, env.sediment.attenuation))
    return ReplicaBank(replicas=np.asarray(rows), parameters=tuple(params))


def mfp_correlations(fields: np.ndarray, bank: ReplicaBank) -> np.ndarray:
    """P(m) = |w(m)^* d| for every field row and class."""
    fields = np.atleast_2d(fields)
    return np.abs(fields @ bank.replicas.conj().T)


def mfp_classify(field: np.ndarray, bank: ReplicaBank) -> SedimentClass:
    """Highest replica correlation wins; ties break toward the lower code."""
    field = np.asarray(field)
    if field.ndim != 1:
        raise ValueError("mfp_classify expects a single field vector")
    if np.linalg.norm(field) == 0:
        raise ValueError("cannot classify an all-zero field")
    return SedimentClass(int(np.argmax(mfp_correlations(field, bank)[0])))


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

@dataclass
class ClassifierModel:
    """A trained classifier: variant tag, parameters, and feature contract."""

    variant: str
    feature_kind: str
    input_dim: int
    hyper: dict
    arrays: dict                      # variant-specific parameter arrays
    network: Network | None = field(default=None, repr=False)

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features))
        if features.shape[1] != self.input_dim:
            raise ValueError(
                f"feature dimension {features.shape[1]} does not match model ({self.input_dim})")
        if "feature_mean" in self.arrays:
            features = (features - self.arrays["feature_mean"]) / self.arrays["feature_std"]
        return _PREDICT[self.variant](self, features)


def predict(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    """One label per row; rows are independent and the model is read-only."""
    return model.predict(features)


def predict_dataset(model: ClassifierModel, dataset: LabeledDataset) -> np.ndarray:
    if model.variant == "mfp":
        if dataset.kind != KIND_COMPLEX20:
            raise ValueError("the MFP classifier consumes complex pressure fields")
        return model.predict(dataset.features)
    return model.predict(encode_for_learners(dataset))


def _canonical_order(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row order fixed by (features, label), not by input order."""
    keys = [y.astype(np.int64)] + [x[:, j] for j in range(x.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _predict_mfp(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    bank = ReplicaBank(replicas=model.arrays["replicas"],
                       parameters=tuple(map(tuple, model.arrays["parameters"])))
    norms = np.linalg.norm(features, axis=1)
    if np.any(norms == 0):
        raise ValueError("cannot classify an all-zero field")
    return np.argmax(mfp_correlations(features, bank), axis=1).astype(np.uint8)


def _predict_nc(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    d = np.linalg.norm(features[:, None, :] - model.arrays["centroids"][None, :, :], axis=2)
    return np.argmin(d, axis=1).astype(np.uint8)


def _predict_knn(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    x, y = model.arrays["train_x"], model.arrays["train_y"]
    k = int(model.hyper.get("k", 1))
    d = np.linalg.norm(features[:, None, :] - x[None, :, :], axis=2)
    nearest = np.argsort(d, axis=1, kind="stable")[:, :k]
    votes = y[nearest]
    counts = np.stack([np.bincount(row, minlength=4) for row in votes])
    return np.argmax(counts, axis=1).astype(np.uint8)


def _predict_linear(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    scores = features @ model.arrays["weights"] + model.arrays["bias"]
    return np.argmax(scores, axis=1).astype(np.uint8)


def _predict_svm_rbf(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    x = model.arrays["train_x"]
    coef = model.arrays["coef"]          # (4, n) already scaled by 1/(lambda T)
    gamma = float(model.hyper["gamma"])
    d2 = ((features[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    kernel = np.exp(-gamma * d2)
    return np.argmax(kernel @ coef.T, axis=1).astype(np.uint8)


def _predict_network(model: ClassifierModel, features: np.ndarray) -> np.ndarray:
    x = features
    if model.variant == "cnn3":
        x = features[:, None, :]
    return np.argmax(model.network.predict_proba(x), axis=1).astype(np.uint8)


_PREDICT = {
    "mfp": _predict_mfp,
    "nc": _predict_nc,
    "knn": _predict_knn,
    "lr": _predict_linear,
    "svm-linear": _predict_linear,
    "svm-rbf": _predict_svm_rbf,
    "mlp": _predict_network,
    "cnn3": _predict_network,
}


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _gradient_fit(loss_and_grads, params, x, y, x_val, y_val, options: TrainOptions,
                  decay_mask):
    """Seeded minibatch loop: stepped learning rate, weight decay, clipping,
    Adam or SGD, early stopping on validation loss."""
    rng = np.random.default_rng(options.seed)
    n = x.shape[0]
    state = AdamState.for_params(params)
    history = {"train_loss": [], "val_loss": [], "learning_rate": []}
    best_loss, best_params, stale = math.inf, [p.copy() for p in params], 0
    full_batch = options.minibatch >= n

    for epoch in range(options.max_epochs):
        lr = stepped_learning_rate(options.learning_rate, epoch,
                                   options.drop_factor, options.drop_period)
        order = np.arange(n) if full_batch else rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, options.minibatch):
            idx = order[start:start + options.minibatch]
            loss, grads = loss_and_grads(params, x[idx], y[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch}: loss={loss}; "
                                    f"history={history['train_loss']}")
            grads = [g + options.weight_decay * p if dec else g
                     for g, p, dec in zip(grads, params, decay_mask)]
            hyper = AdamHyper(learning_rate=lr, clip_norm=options.clip_norm)
            if options.optimizer == "adam":
                params, state = adam_step(params, grads, state, hyper)
            else:
                params = sgd_step(params, grads, hyper)
            epoch_losses.append(loss)
        history["train_loss"].append(float(np.mean(epoch_losses)))
        history["learning_rate"].append(lr)

        if x_val is not None and x_val.shape[0]:
            val_loss, _ = loss_and_grads(params, x_val, y_val, evaluate=True)
            history["val_loss"].append(float(val_loss))
            monitor = val_loss
        else:
            monitor = history["train_loss"][-1]
        if monitor < best_loss - 1e-12:
            best_loss, best_params, stale = monitor, [p.copy() for p in params], 0
        else:
            stale += 1
            if stale >= options.patience:
                break
    return best_params, history


def _fit_linear(variant, x, y, x_val, y_val, hyper, options):
    n, d = x.shape
    w = np.zeros((d, 4))
    b = np.zeros(4)
    onehot = np.eye(4)

    if variant == "lr":
        def loss_and_grads(params, xb, yb, evaluate=False):
            wj, bj = params
            logits = xb @ wj + bj
            p = softmax(logits)
            m = xb.shape[0]
            loss = -float(np.mean(np.log(p[np.arange(m), yb] + 1e-300)))
            if evaluate:
                return loss, None
            dl = (p - onehot[yb]) / m
            return loss, [xb.T @ dl, dl.sum(axis=0)]
    else:  # one-vs-rest hinge
        def loss_and_grads(params, xb, yb, evaluate=False):
            wj, bj = params
            scores = xb @ wj + bj
            m = xb.shape[0]
            target = 2.0 * onehot[yb] - 1.0          # +1 own class, -1 others
            margins = 1.0 - target * scores
            loss = float(np.mean(np.maximum(margins, 0.0)))
            if evaluate:
                return loss, None
            active = (margins > 0).astype(float)
            dscores = -(target * active) / (m * 4.0)
            return loss, [xb.T @ dscores, dscores.sum(axis=0)]

    params, history = _gradient_fit(loss_and_grads, [w, b], x, y, x_val, y_val,
                                    options, decay_mask=[True, False])
    return {"weights": params[0], "bias": params[1]}, history


def _fit_network(variant, x, y, x_val, y_val, hyper, options):
    if variant == "cnn3":
        net = build_cnn3(x.shape[1], seed=options.seed)
        reshape = lambda a: a[:, None, :]
    else:
        hidden = tuple(int(h) for h in hyper.get("hidden", (64,)))
        net = build_mlp(x.shape[1], hidden, seed=options.seed)
        reshape = lambda a: a

    def loss_and_grads(params, xb, yb, evaluate=False):
        net.set_parameters(params)
        if evaluate:
            logits = net.forward(reshape(xb), training=False)
            p = softmax(logits)
            m = xb.shape[0]
            return -float(np.mean(np.log(p[np.arange(m), yb] + 1e-300))), None
        loss, grads = net.loss_and_gradients(reshape(xb), yb, training=True)
        return loss, [g.copy() for g in grads]

    params0 = [p.copy() for p in net.parameters()]
    params, history = _gradient_fit(loss_and_grads, params0, x, y, x_val, y_val,
                                    options, decay_mask=net.decay_mask())
    net.set_parameters(params)
    return net, history


def _fit_svm_rbf(x, y, hyper, options):
    """Kernelized one-vs-rest Pegasos: stochastic subgradient in the dual expansion."""
    gamma = float(hyper.get("gamma", 1.0 / x.shape[1]))
    lam = float(hyper.get("lam", 1e-3))
    epochs = int(hyper.get("epochs", min(options.max_epochs, 50)))
    n = x.shape[0]
    d2 = ((x[:, None, :] - x[None, :, :]) ** 2).sum(axis=2)
    kernel = np.exp(-gamma * d2)
    rng = np.random.default_rng(options.seed)
    alpha = np.zeros((4, n))
    target = np.where(np.arange(4)[:, None] == y[None, :], 1.0, -1.0)
    t = 0
    history = {"train_loss": [], "val_loss": [], "learning_rate": []}
    for _epoch in range(epochs):
        for i in rng.permutation(n):
            t += 1
            margins = target[:, i] * (alpha * target * kernel[i][None, :]).sum(axis=1) / (lam * t)
            alpha[margins < 1.0, i] += 1.0
        decision = (alpha * target) @ kernel / (lam * t)
        hinge = np.maximum(0.0, 1.0 - target * decision)
        history["train_loss"].append(float(hinge.mean()))
    coef = (alpha * target) / (lam * t)
    return {"train_x": x, "coef": coef}, {"gamma": gamma, "lam": lam, "epochs": epochs}, history


OPTION_HYPER_KEYS = ("learning_rate", "drop_period", "max_epochs", "minibatch",
                     "weight_decay", "patience")


def _options_from_hyper(options: TrainOptions, hyper: dict) -> TrainOptions:
    overrides = {}
    for key in OPTION_HYPER_KEYS:
        if key in hyper:
            value = hyper[key]
            overrides[key] = float(value) if key in ("learning_rate", "weight_decay") else int(value)
    return replace(options, **overrides) if overrides else options


def fit(variant: str, train: LabeledDataset, val: LabeledDataset | None = None,
        hyper: dict | None = None, options: TrainOptions | None = None):
    """Train one classifier variant; returns (ClassifierModel, loss history).

    Gradient-trained variants accept training-loop knobs (learning_rate,
    drop_period, max_epochs, minibatch, weight_decay, patience) through
    ``hyper`` as well, so they can take part in hyperparameter search.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown classifier variant {variant!r}")
    hyper = dict(hyper or {})
    options = options or TrainOptions()
    if len(train) == 0:
        raise TrainingError("training set is empty")
    if val is not None and val.kind != train.kind:
        raise TrainingError("train and validation sets must share a feature kind")

    if variant == "mfp":
        bank = build_replica_bank()
        return ClassifierModel(
            variant="mfp", feature_kind=KIND_COMPLEX20, input_dim=bank.replicas.shape[1],
            hyper={}, arrays={"replicas": bank.replicas,
                              "parameters": np.asarray(bank.parameters)}), {}

    x = encode_for_learners(train)
    y = train.labels.astype(np.int64)
    # canonical row order: shuffled inputs give bit-identical fits, and the
    # standardization statistics below become order-free as well
    order = _canonical_order(x, y)
    x, y = x[order], y[order]
    # per-feature standardization from the training set; raw backscatter
    # amplitudes are ~1e-2, far below the scale gradient training reaches
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std[std < 1e-12] = 1.0
    x = (x - mean) / std
    norm = {"feature_mean": mean, "feature_std": std}

    def encode_val(ds):
        return (encode_for_learners(ds) - mean) / std

    x_val = encode_val(val) if val is not None else None
    y_val = val.labels.astype(np.int64) if val is not None else None
    history: dict = {}

    if variant == "nc":
        centroids = np.zeros((4, x.shape[1]))
        for cls in range(4):
            members = x[y == cls]
            if members.size == 0:
                raise TrainingError(f"class {cls} missing from the training set")
            centroids[cls] = members.mean(axis=0)
        arrays = {"centroids": centroids}
    elif variant == "knn":
        arrays = {"train_x": x.copy(), "train_y": y.astype(np.uint8)}
        hyper.setdefault("k", 1)
    elif variant in ("lr", "svm-linear"):
        arrays, history = _fit_linear(variant, x, y, x_val, y_val, hyper,
                                      _options_from_hyper(options, hyper))
    elif variant == "svm-rbf":
        arrays, hyper, history = _fit_svm_rbf(x, y, hyper, options)
    else:  # mlp, cnn3
        net, history = _fit_network(variant, x, y, x_val, y_val, hyper,
                                    _options_from_hyper(options, hyper))
        model = ClassifierModel(variant=variant, feature_kind=train.kind,
                                input_dim=x.shape[1], hyper=hyper, arrays=dict(norm),
                                network=net)
        return model, history

    arrays.update(norm)
    model = ClassifierModel(variant=variant, feature_kind=train.kind,
                            input_dim=x.shape[1], hyper=hyper, arrays=arrays)
    return model, history


# ---------------------------------------------------------------------------
# hyperparameter search
# ---------------------------------------------------------------------------

def _stratified_folds(labels: np.ndarray, n_folds: int, seed: int):
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(n_folds)]
    for cls in np.unique(labels):
        members = rng.permutation(np.nonzero(labels == cls)[0])
        for pos, idx in enumerate(members):
            folds[pos % n_folds].append(idx)
    return [np.sort(np.asarray(f)) for f in folds]


def _subset(dataset: LabeledDataset, idx: np.ndarray) -> LabeledDataset:
    return replace(dataset, features=dataset.features[idx], labels=dataset.labels[idx],
                   sample_seeds=dataset.sample_seeds[idx], c_tops=dataset.c_tops[idx],
                   thicknesses=dataset.thicknesses[idx])


def cross_validated_accuracy(variant: str, dataset: LabeledDataset, hyper: dict,
                             options: TrainOptions, n_folds: int = 5, seed: int = 0) -> float:
    """Mean stratified k-fold accuracy for one hyperparameter combination."""
    folds = _stratified_folds(dataset.labels, n_folds, seed)
    scores = []
    for f in range(n_folds):
        test_idx = folds[f]
        if test_idx.size == 0:
            continue
        train_idx = np.sort(np.concatenate([folds[g] for g in range(n_folds) if g != f]))
        model, _ = fit(variant, _subset(dataset, train_idx), _subset(dataset, test_idx),
                       hyper, options)
        pred = predict_dataset(model, _subset(dataset, test_idx))
        scores.append(float(np.mean(pred == dataset.labels[test_idx])))
    return float(np.mean(scores))


def hyper_search(variant: str, train: LabeledDataset, val: LabeledDataset | None,
                 grid: dict, budget: int, seed: int,
                 options: TrainOptions | None = None) -> dict:
    """Randomized grid search scored by 5-fold stratified cross-validation.

    Samples ``budget`` combinations uniformly from the grid; ties keep the
    first sampled combination.  With a single candidate the CV score is
    skipped since the argmax is determined.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    options = options or TrainOptions()
    rng = np.random.default_rng(seed)
    keys = sorted(grid)
    candidates = []
    for _ in range(budget):
        candidates.append({k: grid[k][rng.integers(len(grid[k]))] for k in keys})
    if len(candidates) == 1 or not keys:
        return candidates[0]
    best_score, best = -1.0, candidates[0]
    for cand in candidates:
        score = cross_validated_accuracy(variant, train, cand, options, seed=seed)
        if score > best_score:
            best_score, best = score, cand
    return best


# ---------------------------------------------------------------------------
# model serialization
# ---------------------------------------------------------------------------

MODEL_FORMAT_VERSION = 1


def save_model(model: ClassifierModel, path) -> None:
    """Versioned, variant-tagged binary model file (npz container)."""
    payload = {
        "format_version": np.array([MODEL_FORMAT_VERSION]),
        "variant": np.array(model.variant),
        "feature_kind": np.array(model.feature_kind),
        "input_dim": np.array([model.input_dim]),
        "hyper_json": np.array(json.dumps(model.hyper, sort_keys=True)),
    }
    for name, arr in model.arrays.items():
        payload[f"array_{name}"] = arr
    if model.network is not None:
        for i, p in enumerate(model.network.parameters()):
            payload[f"net_{i}"] = p
        bn_state = []
        from .neuralnet import BatchNorm1d
        for layer in model.network.layers:
            if isinstance(layer, BatchNorm1d):
                bn_state += [layer.running_mean, layer.running_var]
        for i, s in enumerate(bn_state):
            payload[f"bn_{i}"] = s
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_model(path) -> ClassifierModel:
    with np.load(path, allow_pickle=False) as data:
        version = int(data["format_version"][0])
        if version != MODEL_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format version {version}")
        variant = str(data["variant"])
        feature_kind = str(data["feature_kind"])
        input_dim = int(data["input_dim"][0])
        hyper = json.loads(str(data["hyper_json"]))
        arrays = {k[len("array_"):]: data[k] for k in data.files if k.startswith("array_")}
        network = None
        if variant in ("mlp", "cnn3"):
            if variant == "cnn3":
                network = build_cnn3(input_dim)
            else:
                network = build_mlp(input_dim, tuple(int(h) for h in hyper.get("hidden", (64,))))
            params = [data[f"net_{i}"] for i in range(len(network.parameters()))]
            network.set_parameters(params)
            from .neuralnet import BatchNorm1d
            bn_arrays = [data[f"bn_{i}"] for i in range(sum(1 for k in data.files if k.startswith("bn_")))]
            pos = 0
            for layer in network.layers:
                if isinstance(layer, BatchNorm1d):
                    layer.running_mean[...] = bn_arrays[pos]
                    layer.running_var[...] = bn_arrays[pos + 1]
                    pos += 2
    return ClassifierModel(variant=variant, feature_kind=feature_kind, input_dim=input_dim,
                           hyper=hyper, arrays=arrays, network=network)
