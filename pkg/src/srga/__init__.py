"""Generalization assessment toolkit for super-resolution models.

The pipeline: synthesize fine-grained degraded LR/HR patch subsets,
extract deep features (a deterministic probe network is bundled; real
models plug in through the feature-file format), compress the features
with PCA, fit a zero-mean generalized Gaussian to the pooled projected
coefficients of each dataset, and score each test dataset by the
log-shifted closed-form KL divergence against a named reference dataset.
"""

__version__ = "0.1.0"

from .core import (SrgaEntry, SrgaReport, SrgaScorer, compute_fdd, msrga,
                   psnr, run_content_split, run_jitter, run_sweep, srga_index)
from .degrade import (DegradationSpec, add_noise, bicubic_downsample,
                      degrade_patches, extract_patches, gaussian_blur,
                      luminance_shift, synth_pies)
from .errors import (DataError, FormatError, NumericError, SrgaError,
                     ValidationError)
from .featstore import (FeatureSet, flatten, read_feature_file,
                        write_feature_file)
from .probe import ProbeNet
from .stats import (GgdParams, PcaCompressor, fit_ggd, ggd_kld, ggd_pdf,
                    moment_ratio, sample_ggd)

__all__ = [
    "__version__",
    "DegradationSpec", "extract_patches", "bicubic_downsample",
    "gaussian_blur", "add_noise", "luminance_shift", "synth_pies",
    "degrade_patches",
    "FeatureSet", "flatten", "read_feature_file", "write_feature_file",
    "ProbeNet",
    "GgdParams", "PcaCompressor", "fit_ggd", "ggd_kld", "ggd_pdf",
    "moment_ratio", "sample_ggd",
    "SrgaEntry", "SrgaReport", "SrgaScorer", "compute_fdd", "msrga", "psnr",
    "srga_index", "run_sweep", "run_jitter", "run_content_split",
    "SrgaError", "ValidationError", "FormatError", "DataError",
    "NumericError",
]
