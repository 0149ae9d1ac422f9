"""Physics-based synthetic sonar data factory and sediment-classification
benchmark.

Two pipelines are provided.  The low-frequency pipeline propagates normal
modes through a layered waveguide to a 20-phone vertical line array and
classifies sediments by matched-field correlation and shallow learners.  The
high-frequency pipeline solves rough-interface Helmholtz scattering on
2 m x 2 m templates, extracts directional backscatter amplitudes by
plane-wave decomposition on observation circles, and classifies the signals
with shallow learners and a small 1D convolutional network.
"""

from .environments import (
    CLASS_SOUND_SPEEDS,
    ExperimentConfig,
    HighFreqEnvironment,
    HighFreqTemplate,
    LowFreqEnvironment,
    RoughnessSpec,
    SedimentClass,
    attenuation_to_nepers,
    environment_set,
    load_config,
    nominal_environments,
    test_environment,
)
from .roughness import SurfaceProfile, flat_surface, generate_surface
from .modes import (
    ComplexField,
    DepthModel,
    ModeSet,
    build_depth_model,
    pressure_field,
    solve_modes,
)
from .scattering import (
    FieldSolution,
    IncidentSpec,
    LayeredDomain,
    assemble,
    domain_for_template,
    incident_field,
    sample_field,
    solve_scattered,
    solve_template,
)
from .nmla import (
    AngularSpectrum,
    BackscatterSignal,
    CircleData,
    angular_spectrum,
    backscatter_signal,
    directional_amplitude,
)
from .datasets import (
    LabeledDataset,
    NoiseSpec,
    add_noise,
    encode_for_learners,
    generate_backscatter_dataset,
    generate_lowfreq_dataset,
    label_by_soundspeed,
    load,
    save,
    split,
)
from .classifiers import (
    ClassifierModel,
    ReplicaBank,
    TrainOptions,
    build_replica_bank,
    fit,
    hyper_search,
    mfp_classify,
    predict,
    predict_dataset,
)
from .optim import AdamHyper, AdamState, adam_step
from .bench import ConfusionMatrix, Report, confusion, emit_report, run_experiment, snr_sweep

__version__ = "0.1.0"
