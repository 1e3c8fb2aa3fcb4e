"""RTF-vector-based binaural DOA estimation assisted by a calibrated
external microphone array: scene simulation, covariance-whitening RTF
estimation, spatial spectra (1D, 2D joint, geometry-matched) and an
evaluation harness."""

from .core import (
    ArrayGeometry,
    ConfigError,
    DecompositionError,
    DegenerateEstimateError,
    DoakitError,
    GridMismatchError,
    NumericalError,
    ScenePose,
    SelectionOperator,
    StftTensor,
    cholesky_sqrt,
    extract_block,
    principal_eigenvector,
    wrap_deg,
)
from .evaluate import (
    AlgorithmVariant,
    ExperimentConfig,
    PipelineConfig,
    localization_accuracy,
    run_experiment,
    run_variant,
)
from .rtf import concat_estimated, cw_estimate, estimate_g_cwe, estimate_gh_cw
from .sim import (
    PrototypeDb,
    ReverbTail,
    SceneConfig,
    build_prototype_db,
    freefield_atf,
    render_scene,
    true_theta_e,
)
from .spectrum import (
    DoaEstimate,
    MatchedPairSet,
    SpatialSpectrum1D,
    SpatialSpectrum2D,
    build_matched_pairs,
    phase_distance,
    pick_doa,
    spectrum_1d,
    spectrum_2d,
    spectrum_matched,
)
from .stft import analyze
from .track import CovTracker, SppGate, alpha_from_time_constant

__version__ = "0.1.0"
