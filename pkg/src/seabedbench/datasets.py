"""Labeled, noise-injected, serialized datasets from the two forward models.

Every sample's randomness is fixed by a per-sample seed derived from
(master seed, set id, class code, sample index), so datasets are bit-exact
reproducible regardless of generation order or worker count.
"""

from __future__ import annotations

import math
import struct
import warnings
import zlib
from dataclasses import dataclass, replace

import numpy as np

from . import modes as modal
from . import nmla, scattering
from .environments import (
    CLASS_SOUND_SPEEDS,
    HighFreqEnvironment,
    SedimentClass,
    environment_set,
)

KIND_COMPLEX20 = "complex20"
KIND_REAL = "real"


class NoiseError(ValueError):
    pass


class DatasetError(ValueError):
    pass


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    """Additive Gaussian noise at a target per-sample SNR.

    ``kind`` is 'complex-circular' for pressure fields or 'real' for
    backscatter magnitudes.  ``snr_db`` of None means no noise.
    """

    snr_db: float | None
    kind: str
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("complex-circular", "real"):
            raise NoiseError(f"unknown noise kind {self.kind!r}")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise NoiseError("snr_db must be finite (or None for no noise)")


def add_noise(signal: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """signal + noise with expected total noise power ||signal||^2 / 10^(snr/10)."""
    signal = np.asarray(signal)
    if spec.snr_db is None:
        return signal.copy()
    power = float(np.sum(np.abs(signal) ** 2))
    if power == 0.0:
        raise NoiseError("SNR undefined for an all-zero signal")
    rng = np.random.default_rng(spec.seed)
    noise_power = power / 10.0 ** (spec.snr_db / 10.0)
    sigma = math.sqrt(noise_power / signal.size)
    if spec.kind == "complex-circular":
        noise = (rng.standard_normal(signal.shape) + 1j * rng.standard_normal(signal.shape))
        noise *= sigma / math.sqrt(2.0)
    else:
        noise = sigma * rng.standard_normal(signal.shape)
    return signal + noise


def label_by_soundspeed(c_top: float) -> SedimentClass:
    """Closest of the four class sound speeds by absolute distance.

    Ties break toward the lower sound speed (the lower class code).
    """
    if c_top <= 0:
        raise ValueError("sound speed must be positive")
    dists = [abs(c_top - c) for c in CLASS_SOUND_SPEEDS]
    return SedimentClass(int(np.argmin(dists)))


def sample_seed(master_seed: int, set_id, class_code: int, index: int, stream: int = 0) -> int:
    """Stable per-sample seed; independent of generation order."""
    set_code = 0 if set_id == "training" else int(set_id)
    ss = np.random.SeedSequence([int(master_seed), set_code, int(class_code), int(index), int(stream)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix with class labels and generation provenance."""

    kind: str                    # KIND_COMPLEX20 | KIND_REAL
    features: np.ndarray         # (n, dims), complex128 or float64
    labels: np.ndarray           # (n,) uint8 class codes
    pipeline: str
    set_id: str
    snr_db: float | None
    master_seed: int
    sample_seeds: np.ndarray     # (n,) uint64
    c_tops: np.ndarray           # (n,) float64, top-layer sound speed per sample
    thicknesses: np.ndarray      # (n,) float64, NaN for the low-frequency pipeline

    def __post_init__(self):
        n = self.features.shape[0]
        if not (self.labels.size == self.sample_seeds.size == self.c_tops.size
                == self.thicknesses.size == n):
            raise DatasetError("per-sample arrays must align with the feature matrix")
        if self.kind == KIND_COMPLEX20 and self.features.shape[1] != 20:
            raise DatasetError("complex20 datasets must have exactly 20 columns")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features must be finite")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() > 3):
            raise DatasetError("labels must be class codes 0..3")

    def __len__(self) -> int:
        return self.features.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=4)


def encode_for_learners(dataset: LabeledDataset) -> np.ndarray:
    """Real feature matrix for the shallow learners and networks.

    Complex fields are normalized to unit norm (the overall level only carries
    the source constant) and to a canonical global phase before the real and
    imaginary parts are concatenated.  Perturbing the sediment parameters
    rotates the whole received field by a large common phase (nearly pi for
    the clay test columns), which the matched-field statistic |w^H d| ignores;
    the canonicalization gives the learners the same invariance.  The phase
    reference arg(sum_i |d_i| d_i) varies smoothly with the field, so noise
    cannot flip it discontinuously.  Real signals pass through unchanged.
    """
    if dataset.kind == KIND_COMPLEX20:
        f = dataset.features
        norms = np.linalg.norm(f, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        f = f / norms
        ref = np.sum(np.abs(f) * f, axis=1)
        ref[ref == 0] = 1.0
        f = f * np.exp(-1j * np.angle(ref))[:, None]
        return np.concatenate([f.real, f.imag], axis=1)
    return dataset.features.astype(float, copy=True)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def clean_lowfreq_fields(set_id, points_per_wavelength: float = 20.0) -> dict[SedimentClass, np.ndarray]:
    """Noise-free array fields for the four environments of one catalog set."""
    fields = {}
    for cls, env in environment_set("lowfreq", set_id):
        try:
            model = modal.build_depth_model(env, points_per_wavelength=points_per_wavelength)
            ms = modal.solve_modes(model, env.source.frequency)
            fields[cls] = modal.pressure_field(ms, env).values
        except Exception as exc:
            raise GenerationError(f"low-frequency solve failed for {cls.name} in set {set_id}: {exc}") from exc
    return fields


def generate_lowfreq_dataset(set_id, count_per_class: int, snr_db: float | None,
                             master_seed: int,
                             points_per_wavelength: float = 20.0,
                             clean_fields: dict | None = None) -> LabeledDataset:
    """Noisy copies of the per-class clean fields, one clean solve per class."""
    if count_per_class <= 0:
        raise DatasetError("count_per_class must be positive")
    if clean_fields is None:
        clean_fields = clean_lowfreq_fields(set_id, points_per_wavelength)
    rows, labels, seeds, ctops = [], [], [], []
    for cls in SedimentClass:
        clean = clean_fields[cls]
        env = dict(environment_set("lowfreq", set_id))[cls]
        for index in range(count_per_class):
            seed = sample_seed(master_seed, set_id, cls.value, index)
            noisy = add_noise(clean, NoiseSpec(snr_db, "complex-circular", seed))
            rows.append(noisy)
            labels.append(cls.value)
            seeds.append(seed)
            ctops.append(env.sediment.speed)
    n = len(rows)
    return LabeledDataset(
        kind=KIND_COMPLEX20,
        features=np.asarray(rows, dtype=np.complex128),
        labels=np.asarray(labels, dtype=np.uint8),
        pipeline="lowfreq",
        set_id=str(set_id),
        snr_db=snr_db,
        master_seed=master_seed,
        sample_seeds=np.asarray(seeds, dtype=np.uint64),
        c_tops=np.asarray(ctops),
        thicknesses=np.full(n, np.nan),
    )


def backscatter_sample(env: HighFreqEnvironment, seed: int, n_points: int,
                       observation_height: float, radius: float | None,
                       nodes_per_wavelength: float) -> tuple[np.ndarray, float]:
    """One clean backscatter signal: fresh surface + thickness draw + solve + NMLA."""
    rng = np.random.default_rng(seed)
    thickness = float(rng.choice(np.asarray(env.thickness_choices)))
    template = env.template(thickness, seed=int(rng.integers(2**63)))
    solution = scattering.solve_template(template, nodes_per_wavelength=nodes_per_wavelength)
    signal = nmla.backscatter_signal(solution, template, n_points=n_points,
                                     observation_height=observation_height, radius=radius)
    return signal.y, thickness


def generate_backscatter_dataset(set_id, count_per_class: int, snr_db: float | None,
                                 master_seed: int, n_points: int = 128,
                                 observation_height: float = 1.0,
                                 radius: float | None = None,
                                 nodes_per_wavelength: float = 12.0,
                                 max_redraws: int = 3,
                                 workers: int = 1,
                                 clean_signals: "LabeledDataset | None" = None) -> LabeledDataset:
    """Backscatter dataset: every sample is an independent scattering scene.

    Failed solves are logged and redrawn (with a shifted seed stream) up to
    ``max_redraws`` times.  When ``clean_signals`` is given, only the noise
    stage is rerun on the stored clean features, which keeps test-time noise
    realizations cheap.
    """
    if clean_signals is not None:
        noisy = np.empty_like(clean_signals.features)
        for i in range(len(clean_signals)):
            seed = sample_seed(master_seed, set_id, int(clean_signals.labels[i]), i, stream=7)
            noisy[i] = add_noise(clean_signals.features[i], NoiseSpec(snr_db, "real", seed))
        return replace(clean_signals, features=noisy, snr_db=snr_db, master_seed=master_seed)

    envs = dict(environment_set("backscatter", set_id))
    jobs = [(cls, index) for cls in SedimentClass for index in range(count_per_class)]

    def run_job(job):
        cls, index = job
        last_error = None
        for attempt in range(max_redraws + 1):
            seed = sample_seed(master_seed, set_id, cls.value, index, stream=attempt)
            try:
                y, thickness = backscatter_sample(envs[cls], seed, n_points,
                                                  observation_height, radius,
                                                  nodes_per_wavelength)
                return cls, index, seed, y, thickness
            except Exception as exc:
                warnings.warn(f"backscatter solve failed (set {set_id}, {cls.name} "
                              f"#{index}, attempt {attempt + 1}): {exc}; redrawing",
                              stacklevel=2)
                last_error = exc
        raise GenerationError(
            f"backscatter sample failed after {max_redraws + 1} draws "
            f"(set {set_id}, class {cls.name}, index {index}): {last_error}")

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(job) for job in jobs]

    rows = np.empty((len(jobs), n_points))
    labels = np.empty(len(jobs), dtype=np.uint8)
    seeds = np.empty(len(jobs), dtype=np.uint64)
    ctops = np.empty(len(jobs))
    taus = np.empty(len(jobs))
    for pos, (cls, index, seed, y, thickness) in enumerate(results):
        noise_seed = sample_seed(master_seed, set_id, cls.value, index, stream=7)
        rows[pos] = add_noise(y, NoiseSpec(snr_db, "real", noise_seed))
        labels[pos] = label_by_soundspeed(envs[cls].top_speed).value
        seeds[pos] = seed
        ctops[pos] = envs[cls].top_speed
        taus[pos] = thickness
    return LabeledDataset(
        kind=KIND_REAL,
        features=rows,
        labels=labels,
        pipeline="backscatter",
        set_id=str(set_id),
        snr_db=snr_db,
        master_seed=master_seed,
        sample_seeds=seeds,
        c_tops=ctops,
        thicknesses=taus,
    )


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------

def split(dataset: LabeledDataset, fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Stratified (per-class) split into (train, holdout); holdout gets ``fraction``."""
    if not 0.0 < fraction < 1.0:
        raise DatasetError("fraction must lie strictly between 0 and 1")
    rng = np.random.default_rng(seed)
    train_idx, hold_idx = [], []
    for cls in range(4):
        members = np.nonzero(dataset.labels == cls)[0]
        if members.size == 0:
            continue
        if members.size < 2:
            raise DatasetError(f"class {cls} has fewer than 2 samples; cannot split")
        perm = rng.permutation(members)
        n_hold = int(round(members.size * fraction))
        n_hold = min(max(n_hold, 1), members.size - 1)
        hold_idx.append(perm[:n_hold])
        train_idx.append(perm[n_hold:])
    train_idx = np.sort(np.concatenate(train_idx))
    hold_idx = np.sort(np.concatenate(hold_idx))

    def take(idx):
        return replace(dataset,
                       features=dataset.features[idx],
                       labels=dataset.labels[idx],
                       sample_seeds=dataset.sample_seeds[idx],
                       c_tops=dataset.c_tops[idx],
                       thicknesses=dataset.thicknesses[idx])

    return take(train_idx), take(hold_idx)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

_MAGIC = b"SBDSET01"
_FORMAT_VERSION = 1


def _tag(text: str, width: int = 16) -> bytes:
    raw = text.encode()
    if len(raw) > width:
        raise DatasetError(f"tag too long: {text!r}")
    return raw.ljust(width, b"\0")


def save(dataset: LabeledDataset, path) -> None:
    """Binary dataset file: header, per-sample records, trailing CRC32."""
    n, dims = dataset.features.shape
    body = bytearray()
    body += _MAGIC
    body += struct.pack("<H", _FORMAT_VERSION)
    body += _tag(dataset.kind)
    body += _tag(dataset.pipeline)
    body += _tag(dataset.set_id)
    snr = math.nan if dataset.snr_db is None else float(dataset.snr_db)
    body += struct.pack("<IIdq", dims, n, snr, int(dataset.master_seed))
    for i in range(n):
        body += struct.pack("<BQdd", int(dataset.labels[i]), int(dataset.sample_seeds[i]),
                            float(dataset.c_tops[i]), float(dataset.thicknesses[i]))
        if dataset.kind == KIND_COMPLEX20:
            body += dataset.features[i].astype(np.complex128).tobytes()
        else:
            body += dataset.features[i].astype(np.float64).tobytes()
    checksum = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(bytes(body))
        fh.write(struct.pack("<I", checksum))


def load(path, expect_kind: str | None = None) -> LabeledDataset:
    """Inverse of :func:`save`; verifies checksum, version, and optional kind."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(_MAGIC) + 4:
        raise DatasetError(f"{path}: truncated dataset file")
    body, (checksum,) = blob[:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != checksum:
        raise DatasetError(f"{path}: checksum mismatch (corrupt file)")
    if body[:8] != _MAGIC:
        raise DatasetError(f"{path}: not a dataset file")
    off = 8
    (version,) = struct.unpack_from("<H", body, off); off += 2
    if version != _FORMAT_VERSION:
        raise DatasetError(f"{path}: unsupported format version {version}")
    kind = body[off:off + 16].rstrip(b"\0").decode(); off += 16
    pipeline = body[off:off + 16].rstrip(b"\0").decode(); off += 16
    set_id = body[off:off + 16].rstrip(b"\0").decode(); off += 16
    dims, n, snr, master_seed = struct.unpack_from("<IIdq", body, off); off += 24
    if expect_kind is not None and kind != expect_kind:
        raise DatasetError(f"{path}: dataset kind {kind!r} does not match expected {expect_kind!r}")

    complex_kind = kind == KIND_COMPLEX20
    itemsize = 16 if complex_kind else 8
    rec = 1 + 8 + 8 + 8 + dims * itemsize
    if len(body) != off + n * rec:
        raise DatasetError(f"{path}: truncated dataset file")
    labels = np.empty(n, dtype=np.uint8)
    seeds = np.empty(n, dtype=np.uint64)
    ctops = np.empty(n)
    taus = np.empty(n)
    features = np.empty((n, dims), dtype=np.complex128 if complex_kind else np.float64)
    for i in range(n):
        labels[i], seeds[i], ctops[i], taus[i] = struct.unpack_from("<BQdd", body, off)
        off += 25
        features[i] = np.frombuffer(body, dtype=features.dtype, count=dims, offset=off)
        off += dims * itemsize
    return LabeledDataset(kind=kind, features=features, labels=labels, pipeline=pipeline,
                          set_id=set_id, snr_db=None if math.isnan(snr) else snr,
                          master_seed=master_seed, sample_seeds=seeds, c_tops=ctops,
                          thicknesses=taus)


def to_csv(dataset: LabeledDataset, stream) -> None:
    """Plain-text export for inspection: label, seed, c_top, tau, features..."""
    dims = dataset.features.shape[1]
    if dataset.kind == KIND_COMPLEX20:
        cols = [f"re_{j}" for j in range(dims)] + [f"im_{j}" for j in range(dims)]
    else:
        cols = [f"y_{j}" for j in range(dims)]
    stream.write("label,seed,c_top,thickness," + ",".join(cols) + "\n")
    for i in range(len(dataset)):
        f = dataset.features[i]
        vals = list(f.real) + list(f.imag) if dataset.kind == KIND_COMPLEX20 else list(f)
        stream.write(f"{dataset.labels[i]},{dataset.sample_seeds[i]},{float(dataset.c_tops[i])!r},"
                     f"{float(dataset.thicknesses[i])!r},"
                     + ",".join(repr(float(v)) for v in vals) + "\n")
