"""Analytical diffusion sampling and reproducibility measurement.

Everything runs off two ingredients: a finite dataset (the support of a
delta-mixture data distribution) and a perturbation-kernel schedule. The
noise predictor optimal for that pair is available in closed form, so
deterministic probability-flow sampling, noise-space encoding,
reproducibility scoring, noise-hyperplane maps, and posterior-sampling
inpainting all run exactly, with no trained network anywhere.
"""

from .data import (
    Dataset,
    DataError,
    Image,
    from_uint8,
    load_dataset,
    load_image,
    sample_standard_normal,
    save_dataset,
    save_image,
    to_uint8,
)
from .denoiser import DenoiserError, OptimalDenoiser, PosteriorStats
from .experiments import (
    ExperimentError,
    GridConfig,
    HyperplaneMap,
    SweepResult,
    SweepRow,
    adjacent_coherence,
    hyperplane_map,
    lipschitz_probe,
    memorization_sweep,
)
from .inverse import (
    DpsConfig,
    InpaintMask,
    InverseError,
    Observation,
    apply_mask,
    dps_inpaint,
    grad_data_consistency,
)
from .metrics import (
    ExternalEmbedding,
    MetricError,
    PatchDescriptor,
    PixelCosine,
    SampleSet,
    ScoreMatrix,
    gl_score,
    mae_score,
    nearest_train_mae,
    pixel_mae,
    rp_between,
    rp_cond,
    rp_score,
    score_matrix,
    similarity,
)
from .rng import SeededRng
from .sampler import (
    NonFiniteStateError,
    SamplerConfig,
    SamplerError,
    Trajectory,
    convergence_order,
    convergence_probe,
    encode,
    generate,
    integrate_raw,
    pf_ode_rhs,
)
from .schedule import Schedule, ScheduleError, ScheduleSample, check_consistency
from .tensorio import TensorFormatError, read_tensor, write_tensor

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DataError",
    "Image",
    "from_uint8",
    "load_dataset",
    "load_image",
    "sample_standard_normal",
    "save_dataset",
    "save_image",
    "to_uint8",
    "DenoiserError",
    "OptimalDenoiser",
    "PosteriorStats",
    "ExperimentError",
    "GridConfig",
    "HyperplaneMap",
    "SweepResult",
    "SweepRow",
    "adjacent_coherence",
    "hyperplane_map",
    "lipschitz_probe",
    "memorization_sweep",
    "DpsConfig",
    "InpaintMask",
    "InverseError",
    "Observation",
    "apply_mask",
    "dps_inpaint",
    "grad_data_consistency",
    "ExternalEmbedding",
    "MetricError",
    "PatchDescriptor",
    "PixelCosine",
    "SampleSet",
    "ScoreMatrix",
    "gl_score",
    "mae_score",
    "nearest_train_mae",
    "pixel_mae",
    "rp_between",
    "rp_cond",
    "rp_score",
    "score_matrix",
    "similarity",
    "SeededRng",
    "NonFiniteStateError",
    "SamplerConfig",
    "SamplerError",
    "Trajectory",
    "convergence_order",
    "convergence_probe",
    "encode",
    "generate",
    "integrate_raw",
    "pf_ode_rhs",
    "Schedule",
    "ScheduleError",
    "ScheduleSample",
    "check_consistency",
    "TensorFormatError",
    "read_tensor",
    "write_tensor",
]
