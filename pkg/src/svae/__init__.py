"""Spatial variational auto-encoders via matrix-variate normal latents.

Four model variants share one encoder trunk and matched decoders:

* ``original``     - flat latent vector, diagonal Gaussian posterior
* ``naive``        - the same flat sample reshaped into N feature maps
* ``mvn``          - d x d maps drawn from matrix-variate normals with
                     Kronecker-structured per-location variances
* ``lowrank-mvn``  - matrix-variate maps whose mean is the rank-1 outer
                     product of two encoder-computed vectors

The package ships a minimal f64 autodiff core (``svae.autodiff``), the
latent-distribution math (``svae.latent``), the models (``svae.models``),
dataset ingestion (``svae.data``), an Adam training loop and timing harness
(``svae.training``), Parzen-window evaluation (``svae.evaluation``), and a
CLI (``svae`` / ``python -m svae.cli``).
"""

from .autodiff import Layer, Tensor, conv2d, conv2d_transpose, finite_difference_check
from .errors import ContractError, DimensionError, FormatError, NumericError, SvaeError
from .latent import (
    DiagonalGaussianParams,
    LatentSample,
    LowRankMvnParams,
    MvnFeatureMapParams,
    VariantKind,
    kl_to_standard_normal,
    kron_diag,
    mean_matrix,
    param_count,
    sample_diag_gaussian,
    sample_lowrank_mvn,
    sample_mvn,
)
from .models import (
    ElboBreakdown,
    Model,
    ModelConfig,
    build_model,
    default_config,
    load_checkpoint,
    save_checkpoint,
    tiny_config,
)

__version__ = "0.1.0"

__all__ = [
    "Tensor",
    "Layer",
    "conv2d",
    "conv2d_transpose",
    "finite_difference_check",
    "VariantKind",
    "DiagonalGaussianParams",
    "MvnFeatureMapParams",
    "LowRankMvnParams",
    "LatentSample",
    "kron_diag",
    "mean_matrix",
    "sample_diag_gaussian",
    "sample_mvn",
    "sample_lowrank_mvn",
    "kl_to_standard_normal",
    "param_count",
    "Model",
    "ModelConfig",
    "ElboBreakdown",
    "build_model",
    "default_config",
    "tiny_config",
    "save_checkpoint",
    "load_checkpoint",
    "SvaeError",
    "DimensionError",
    "ContractError",
    "NumericError",
    "FormatError",
]
