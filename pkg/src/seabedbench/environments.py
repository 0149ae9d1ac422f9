"""Sediment classes, environment catalogs, unit conversions, and experiment config.

Two catalogs are kept: the low-frequency waveguide environments (one training
column plus ten perturbed test columns of sediment sound speed / attenuation)
and the high-frequency backscatter template families (one training column plus
four perturbed test columns of roughness, sound speeds, densities and layer
thickness).  All catalog numbers are stored verbatim; derived quantities are
computed on demand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path

import numpy as np

# dB <-> neper conversion: 1 neper = 20/ln(10) dB
DB_PER_NEPER = 20.0 / math.log(10.0)

LOWFREQ_TEST_IDS = tuple(range(1, 11))
BACKSCATTER_TEST_IDS = tuple(range(1, 5))


class SedimentClass(IntEnum):
    """The four seabed sediment hypotheses, coded 0..3."""

    CLAY = 0
    SILT = 1
    SAND = 2
    GRAVEL = 3

    @classmethod
    def from_name(cls, name: str) -> "SedimentClass":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise CatalogError(f"unknown sediment class {name!r}") from None


class CatalogError(ValueError):
    """Raised for references to environments that are not in the catalog."""


class ConfigError(ValueError):
    """Raised for unparseable or semantically invalid experiment configs."""


# ---------------------------------------------------------------------------
# Low-frequency catalog (vertical line array waveguide)
# ---------------------------------------------------------------------------

# Sediment sound speed in m/s: training column followed by tests 1..10.
_LF_SPEED = {
    SedimentClass.CLAY: (1500, 1517, 1521, 1517, 1546, 1517, 1529, 1526, 1518, 1527, 1518),
    SedimentClass.SILT: (1575, 1577, 1592, 1582, 1574, 1591, 1586, 1596, 1581, 1584, 1580),
    SedimentClass.SAND: (1650, 1658, 1632, 1663, 1647, 1652, 1644, 1642, 1672, 1648, 1655),
    SedimentClass.GRAVEL: (1800, 1794, 1795, 1799, 1796, 1792, 1802, 1809, 1791, 1801, 1784),
}

# Sediment attenuation in dB per wavelength: training column followed by tests 1..10.
_LF_ATTEN = {
    SedimentClass.CLAY: (0.2, 0.271, 0.077, 0.296, 0.175, 0.224, 0.160, 0.066, 0.256, 0.215, 0.166),
    SedimentClass.SILT: (1.0, 1.050, 1.064, 0.954, 0.892, 0.982, 1.039, 1.188, 1.046, 0.922, 1.189),
    SedimentClass.SAND: (0.8, 1.042, 0.843, 0.914, 0.708, 0.839, 0.681, 0.970, 0.881, 0.595, 0.797),
    SedimentClass.GRAVEL: (0.6, 0.495, 0.683, 0.547, 0.458, 0.666, 0.616, 0.740, 0.651, 0.680, 0.775),
}

# Sediment layer thickness in m is 5 for the training set and every test set.
_LF_THICKNESS = 5.0

# Sediment densities are not part of the low-frequency catalog; the
# backscatter-top-layer values are reused so the two pipelines agree.
_SEDIMENT_DENSITY = {
    SedimentClass.CLAY: 1500.0,
    SedimentClass.SILT: 1700.0,
    SedimentClass.SAND: 1900.0,
    SedimentClass.GRAVEL: 2000.0,
}

# Downward refracting water sound speed profile, (depth m, speed m/s).
DEFAULT_SSP = ((0.0, 1520.0), (111.0, 1480.0))

# Chalk basement under the 5 m sediment layer.  The field is classified on the
# top layer, so these are representative values, overridable per environment.
DEFAULT_HALFSPACE = dict(speed=2400.0, attenuation=0.2, density=2000.0)


@dataclass(frozen=True)
class SedimentLayer:
    """Fluid sediment layer: speed m/s, attenuation dB/wavelength, density kg/m3."""

    speed: float
    attenuation: float
    density: float
    thickness: float | None = None  # None for a halfspace


@dataclass(frozen=True)
class SourceSpec:
    depth: float = 50.0
    range: float = 10_000.0
    frequency: float = 400.0


@dataclass(frozen=True)
class ArraySpec:
    n_phones: int = 20
    first_depth: float = 5.0
    spacing: float = 5.0

    def depths(self) -> np.ndarray:
        return self.first_depth + self.spacing * np.arange(self.n_phones)


@dataclass(frozen=True)
class LowFreqEnvironment:
    """Range-independent waveguide: water column over sediment over halfspace."""

    sediment: SedimentLayer
    halfspace: SedimentLayer
    water_depth: float = 111.0
    ssp: tuple[tuple[float, float], ...] = DEFAULT_SSP
    water_density: float = 1000.0
    source: SourceSpec = field(default_factory=SourceSpec)
    array: ArraySpec = field(default_factory=ArraySpec)

    def __post_init__(self):
        depths = [d for d, _ in self.ssp]
        speeds = [c for _, c in self.ssp]
        if len(self.ssp) < 2 or any(b <= a for a, b in zip(depths, depths[1:])):
            raise ValueError("ssp depths must be strictly increasing")
        if depths[0] != 0.0 or depths[-1] != self.water_depth:
            raise ValueError("ssp must span [0, water_depth]")
        if min(speeds) <= 0 or self.sediment.speed <= 0 or self.halfspace.speed <= 0:
            raise ValueError("sound speeds must be positive")
        if self.sediment.attenuation < 0 or self.halfspace.attenuation < 0:
            raise ValueError("attenuation must be non-negative")
        if self.sediment.thickness is None or self.sediment.thickness <= 0:
            raise ValueError("sediment thickness must be positive")
        if np.any(self.array.depths() >= self.water_depth):
            raise ValueError("array depths must be inside the water column")

    def water_speed_at(self, z) -> np.ndarray:
        """Sound speed in the water column, linear interpolation of the profile."""
        depths = np.array([d for d, _ in self.ssp])
        speeds = np.array([c for _, c in self.ssp])
        return np.interp(z, depths, speeds)


# ---------------------------------------------------------------------------
# High-frequency catalog (rough two-layer backscatter templates)
# ---------------------------------------------------------------------------

# Roughness statistics in m: (rms height, correlation length) per set.
_HF_ROUGHNESS = {
    "training": (0.005, 0.02),
    1: (0.0046, 0.015),
    2: (0.0046, 0.015),
    3: (0.0046, 0.015),
    4: (0.0046, 0.015),
}

# (c_top, c_bottom) m/s per class for training and tests 1..4 ('*' entries resolved).
_HF_SPEED = {
    SedimentClass.CLAY: ((1500.0, 5250.0), (1500.0, 5250.0), (1501.57, 5250.0), (1500.0, 5250.0), (1501.57, 5254.58)),
    SedimentClass.SILT: ((1575.0, 5250.0), (1575.0, 5250.0), (1577.03, 5250.0), (1575.0, 5250.0), (1577.03, 5254.65)),
    SedimentClass.SAND: ((1650.0, 5250.0), (1650.0, 5250.0), (1648.13, 5250.0), (1650.0, 5250.0), (1648.13, 5246.58)),
    SedimentClass.GRAVEL: ((1800.0, 5250.0), (1800.0, 5250.0), (1802.07, 5250.0), (1800.0, 5250.0), (1802.07, 5254.71)),
}

# (rho_top, rho_bottom) kg/m3 per class.  The gravel test-2/test-4 top value of
# 1802.07 is stored verbatim from the published table even though it repeats
# the gravel sound-speed perturbation; a corrected variant is available via
# nominal/test accessors with corrected_gravel_density=True.
_HF_DENSITY = {
    SedimentClass.CLAY: ((1500.0, 2700.0), (1500.0, 2700.0), (1500.66, 2700.0), (1500.0, 2700.0), (1500.66, 2704.57)),
    SedimentClass.SILT: ((1700.0, 2700.0), (1700.0, 2700.0), (1697.99, 2700.0), (1700.0, 2700.0), (1697.99, 2699.85)),
    SedimentClass.SAND: ((1900.0, 2700.0), (1900.0, 2700.0), (1898.89, 2700.0), (1900.0, 2700.0), (1898.89, 2703.00)),
    SedimentClass.GRAVEL: ((2000.0, 2700.0), (2000.0, 2700.0), (1802.07, 2700.0), (2000.0, 2700.0), (1802.07, 2696.42)),
}

# Gravel top density with the same relative perturbation as the gravel
# sound speed, used when the suspected table typo is corrected.
GRAVEL_DENSITY_CORRECTED = 2000.0 * 1802.07 / 1800.0

# Top layer thickness choices in m per set.
_HF_THICKNESS = {
    "training": (0.25, 0.5, 0.75, 1.0),
    1: (0.25, 0.5, 0.75, 1.0),
    2: (0.25, 0.5, 0.75, 1.0),
    3: (0.253, 0.504, 0.725, 1.004),
    4: (0.25, 0.5, 0.75, 1.0),
}


@dataclass(frozen=True)
class RoughnessSpec:
    rms_height: float
    corr_length: float
    seed: int = 0


@dataclass(frozen=True)
class HighFreqTemplate:
    """One concrete 2 m x 2 m two-layer rough scattering scene."""

    top_speed: float
    top_density: float
    top_thickness: float
    bottom_speed: float
    bottom_density: float
    roughness: RoughnessSpec
    width: float = 2.0
    height: float = 2.0
    frequency: float = 15_000.0
    incident_angle: float = math.pi / 12
    water_speed: float = 1500.0
    water_density: float = 1000.0
    attenuation: float = 0.5  # dB per m per kHz, applied in both sediment layers

    def __post_init__(self):
        if not 0.0 < self.incident_angle < math.pi / 2:
            raise ValueError("incident angle must lie in (0, pi/2)")
        if self.top_thickness <= 0:
            raise ValueError("top layer thickness must be positive")
        if self.roughness.rms_height < 0 or self.roughness.corr_length <= 0:
            raise ValueError("invalid roughness statistics")

    @property
    def water_wavelength(self) -> float:
        return self.water_speed / self.frequency

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi * self.frequency / self.water_speed


@dataclass(frozen=True)
class HighFreqEnvironment:
    """A catalog row: geoacoustics plus the thickness choices of one data set."""

    top_speed: float
    top_density: float
    bottom_speed: float
    bottom_density: float
    thickness_choices: tuple[float, ...]
    rms_height: float
    corr_length: float
    frequency: float = 15_000.0
    incident_angle: float = math.pi / 12
    attenuation: float = 0.5

    def template(self, thickness: float, seed: int) -> HighFreqTemplate:
        """Instantiate a concrete scene with one thickness and roughness seed."""
        if thickness not in self.thickness_choices:
            raise CatalogError(f"thickness {thickness} not among {self.thickness_choices}")
        return HighFreqTemplate(
            top_speed=self.top_speed,
            top_density=self.top_density,
            top_thickness=thickness,
            bottom_speed=self.bottom_speed,
            bottom_density=self.bottom_density,
            roughness=RoughnessSpec(self.rms_height, self.corr_length, seed),
            frequency=self.frequency,
            incident_angle=self.incident_angle,
            attenuation=self.attenuation,
        )


# ---------------------------------------------------------------------------
# Catalog accessors
# ---------------------------------------------------------------------------

def _lowfreq_environment(column: int, cls: SedimentClass) -> LowFreqEnvironment:
    return LowFreqEnvironment(
        sediment=SedimentLayer(
            speed=float(_LF_SPEED[cls][column]),
            attenuation=float(_LF_ATTEN[cls][column]),
            density=_SEDIMENT_DENSITY[cls],
            thickness=_LF_THICKNESS,
        ),
        halfspace=SedimentLayer(
            speed=DEFAULT_HALFSPACE["speed"],
            attenuation=DEFAULT_HALFSPACE["attenuation"],
            density=DEFAULT_HALFSPACE["density"],
        ),
    )


def _backscatter_environment(set_key, cls: SedimentClass, corrected_gravel_density: bool) -> HighFreqEnvironment:
    column = 0 if set_key == "training" else int(set_key)
    c_top, c_bottom = _HF_SPEED[cls][column]
    rho_top, rho_bottom = _HF_DENSITY[cls][column]
    if corrected_gravel_density and cls is SedimentClass.GRAVEL and rho_top == 1802.07:
        rho_top = GRAVEL_DENSITY_CORRECTED
    rms, corr = _HF_ROUGHNESS["training" if set_key == "training" else int(set_key)]
    return HighFreqEnvironment(
        top_speed=c_top,
        top_density=rho_top,
        bottom_speed=c_bottom,
        bottom_density=rho_bottom,
        thickness_choices=_HF_THICKNESS["training" if set_key == "training" else int(set_key)],
        rms_height=rms,
        corr_length=corr,
    )


def nominal_environments(pipeline: str, corrected_gravel_density: bool = False):
    """Training-column environments for every sediment class.

    Returns a list of (SedimentClass, environment) in class-code order.
    ``pipeline`` is 'lowfreq' or 'backscatter'.
    """
    if pipeline == "lowfreq":
        return [(cls, _lowfreq_environment(0, cls)) for cls in SedimentClass]
    if pipeline == "backscatter":
        return [
            (cls, _backscatter_environment("training", cls, corrected_gravel_density))
            for cls in SedimentClass
        ]
    raise CatalogError(f"unknown pipeline {pipeline!r}")


def test_environment(pipeline: str, test_id: int, cls: SedimentClass,
                     corrected_gravel_density: bool = False):
    """Perturbed test environment for one class; starred table cells copy training."""
    if pipeline == "lowfreq":
        if test_id not in LOWFREQ_TEST_IDS:
            raise CatalogError(f"lowfreq test id {test_id} not in 1..10")
        return _lowfreq_environment(test_id, cls)
    if pipeline == "backscatter":
        if test_id not in BACKSCATTER_TEST_IDS:
            raise CatalogError(f"backscatter test id {test_id} not in 1..4")
        return _backscatter_environment(test_id, cls, corrected_gravel_density)
    raise CatalogError(f"unknown pipeline {pipeline!r}")


def environment_set(pipeline: str, set_id, corrected_gravel_density: bool = False):
    """All four class environments of one set ('training' or a test id)."""
    if set_id == "training":
        return nominal_environments(pipeline, corrected_gravel_density)
    return [
        (cls, test_environment(pipeline, int(set_id), cls, corrected_gravel_density))
        for cls in SedimentClass
    ]


CLASS_SOUND_SPEEDS = tuple(float(_LF_SPEED[cls][0]) for cls in SedimentClass)


# ---------------------------------------------------------------------------
# Unit conversion
# ---------------------------------------------------------------------------

def attenuation_to_nepers(value: float, unit: str, frequency: float,
                          sound_speed: float | None = None) -> float:
    """Convert a catalog attenuation into an absorption coefficient in np/m.

    ``unit`` is 'dB_per_wavelength' (requires ``sound_speed``) or
    'dB_per_m_per_kHz'.
    """
    if value < 0:
        raise ValueError("attenuation must be non-negative")
    if frequency <= 0:
        raise ValueError("frequency must be positive")
    if unit == "dB_per_wavelength":
        if sound_speed is None or sound_speed <= 0:
            raise ValueError("dB/wavelength conversion needs a positive sound speed")
        wavelength = sound_speed / frequency
        return value / (DB_PER_NEPER * wavelength)
    if unit == "dB_per_m_per_kHz":
        return value * (frequency / 1000.0) / DB_PER_NEPER
    raise ValueError(f"unknown attenuation unit {unit!r}")


# ---------------------------------------------------------------------------
# Catalog CSV dump
# ---------------------------------------------------------------------------

def catalog_rows():
    """Yield (pipeline, set, class, parameter, value) rows for the full catalog."""
    for set_id in ("training", *LOWFREQ_TEST_IDS):
        for cls, env in environment_set("lowfreq", set_id):
            yield ("lowfreq", str(set_id), cls.name.lower(), "sediment_speed_m_s", env.sediment.speed)
            yield ("lowfreq", str(set_id), cls.name.lower(), "sediment_attenuation_db_lambda", env.sediment.attenuation)
            yield ("lowfreq", str(set_id), cls.name.lower(), "sediment_density_kg_m3", env.sediment.density)
            yield ("lowfreq", str(set_id), cls.name.lower(), "sediment_thickness_m", env.sediment.thickness)
    for set_id in ("training", *BACKSCATTER_TEST_IDS):
        for cls, env in environment_set("backscatter", set_id):
            yield ("backscatter", str(set_id), cls.name.lower(), "top_speed_m_s", env.top_speed)
            yield ("backscatter", str(set_id), cls.name.lower(), "bottom_speed_m_s", env.bottom_speed)
            yield ("backscatter", str(set_id), cls.name.lower(), "top_density_kg_m3", env.top_density)
            yield ("backscatter", str(set_id), cls.name.lower(), "bottom_density_kg_m3", env.bottom_density)
            yield ("backscatter", str(set_id), cls.name.lower(), "rms_height_m", env.rms_height)
            yield ("backscatter", str(set_id), cls.name.lower(), "corr_length_m", env.corr_length)
            for i, t in enumerate(env.thickness_choices):
                yield ("backscatter", str(set_id), cls.name.lower(), f"thickness_{i}_m", t)


def dump_catalog_csv(stream) -> None:
    stream.write("pipeline,set,class,parameter,value\n")
    for row in catalog_rows():
        stream.write(",".join(str(v) for v in row) + "\n")


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

DEFAULT_SNR_SWEEP = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated description of one benchmark run."""

    pipeline: str  # 'lowfreq' | 'backscatter'
    train_count_per_class: int
    test_count_per_class: int
    test_sets: tuple[int, ...]
    train_snr_db: float | None
    test_snr_db: float | None
    master_seed: int
    classifiers: tuple[str, ...]
    hyper_grids: dict
    output_dir: str
    noise_realizations: int = 4
    holdout_fraction: float = 0.2
    sweep_snr_db: tuple[float, ...] = DEFAULT_SNR_SWEEP
    workers: int = 1
    search_budget: int = 1
    # backscatter-only knobs
    n_signal_points: int = 128
    observation_height: float = 1.0
    observation_radius: float | None = None  # None -> 2.5 water wavelengths
    nodes_per_wavelength: float = 12.0
    # lowfreq-only knobs
    points_per_wavelength: float = 20.0

    def validate(self) -> None:
        if self.pipeline not in ("lowfreq", "backscatter"):
            raise ConfigError(f"[experiment] pipeline: unknown pipeline {self.pipeline!r}")
        valid_ids = LOWFREQ_TEST_IDS if self.pipeline == "lowfreq" else BACKSCATTER_TEST_IDS
        for t in self.test_sets:
            if t not in valid_ids:
                raise ConfigError(f"[data] test_sets: test id {t} not in catalog for {self.pipeline}")
        if self.train_count_per_class <= 0 or self.test_count_per_class <= 0:
            raise ConfigError("[data] sample counts must be positive")
        for s in (self.train_snr_db, self.test_snr_db):
            if s is not None and not math.isfinite(s):
                raise ConfigError("[data] SNR values must be finite")
        for s in self.sweep_snr_db:
            if not math.isfinite(s):
                raise ConfigError("[sweep] SNR values must be finite")
        if self.noise_realizations <= 0:
            raise ConfigError("[data] noise_realizations must be positive")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("[data] holdout_fraction must lie in (0, 1)")
        known = {"mfp", "nc", "knn", "lr", "svm-linear", "svm-rbf", "mlp", "cnn3"}
        for c in self.classifiers:
            if c not in known:
                raise ConfigError(f"[classifiers] unknown variant {c!r}")
        if self.workers < 1 or self.search_budget < 1:
            raise ConfigError("workers and search_budget must be >= 1")


_MISSING = object()


def _parse_scalar(text: str):
    text = text.strip()
    if text.lower() in ("none", ""):
        return None
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_list(text: str):
    return tuple(_parse_scalar(tok) for tok in text.split(",") if tok.strip())


def parse_config_text(text: str, path: str = "<config>") -> ExperimentConfig:
    """Parse the line-oriented ``[section]`` / ``key = value`` config format."""
    sections: dict[str, dict[str, str]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        if current is None:
            raise ConfigError(f"{path}:{lineno}: key outside of any [section]")
        key, _, value = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r} in [{current}]")
        sections[current][key] = value.strip()

    def take(section: str, key: str, default=_MISSING):
        sec = sections.get(section, {})
        if key in sec:
            return sec.pop(key)
        if default is _MISSING:
            raise ConfigError(f"{path}: missing required key {key!r} in [{section}]")
        return default

    pipeline = take("experiment", "pipeline")
    master_seed = _parse_scalar(take("experiment", "master_seed", "0"))
    output_dir = take("experiment", "output_dir", "out")
    workers = _parse_scalar(take("experiment", "workers", "1"))

    default_sets = "1,2,3,4,5,6,7,8,9,10" if pipeline == "lowfreq" else "1,2,3,4"
    cfg = dict(
        pipeline=pipeline,
        master_seed=int(master_seed),
        output_dir=output_dir,
        workers=int(workers),
        train_count_per_class=int(_parse_scalar(take("data", "train_count_per_class", "50"))),
        test_count_per_class=int(_parse_scalar(take("data", "test_count_per_class", "25"))),
        test_sets=tuple(int(t) for t in _parse_list(take("data", "test_sets", default_sets))),
        train_snr_db=_parse_scalar(take("data", "train_snr_db", "none")),
        test_snr_db=_parse_scalar(take("data", "test_snr_db", "none")),
        noise_realizations=int(_parse_scalar(take("data", "noise_realizations", "4"))),
        holdout_fraction=float(_parse_scalar(take("data", "holdout_fraction", "0.2"))),
        n_signal_points=int(_parse_scalar(take("data", "n_signal_points", "128"))),
        observation_height=float(_parse_scalar(take("data", "observation_height", "1.0"))),
        observation_radius=_parse_scalar(take("data", "observation_radius", "none")),
        nodes_per_wavelength=float(_parse_scalar(take("data", "nodes_per_wavelength", "12"))),
        points_per_wavelength=float(_parse_scalar(take("data", "points_per_wavelength", "20"))),
        classifiers=tuple(str(c) for c in _parse_list(take("classifiers", "use", "mfp,nc,lr"))),
        search_budget=int(_parse_scalar(take("classifiers", "search_budget", "1"))),
        sweep_snr_db=tuple(
            float(s) for s in _parse_list(take("sweep", "snr_db", ",".join(str(s) for s in DEFAULT_SNR_SWEEP)))
        ),
    )

    hyper_grids: dict[str, dict[str, tuple]] = {}
    for name in list(sections):
        if name.startswith("classifier."):
            variant = name.split(".", 1)[1]
            hyper_grids[variant] = {k: _parse_list(v) for k, v in sections[name].items()}
            sections[name] = {}
    cfg["hyper_grids"] = hyper_grids

    for name, sec in sections.items():
        for key in sec:
            raise ConfigError(f"{path}: unknown key {key!r} in [{name}]")

    config = ExperimentConfig(**cfg)
    config.validate()
    return config


def load_config(path) -> ExperimentConfig:
    """Load and validate an experiment config file."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, path=str(p))


def with_seed(config: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(config, master_seed=seed)
