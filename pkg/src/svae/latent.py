"""Latent-distribution math for all four model variants.

Holds the diagonal-Gaussian and matrix-variate parameterizations, the
Kronecker-diagonal identity, reparameterized samplers, the closed-form KL
divergence to the standard-normal prior, and the per-variant encoder
output-count accounting.

All parameter fields may carry leading batch/map axes; the documented
vector/matrix shapes apply to the trailing axes, and every operation
broadcasts over whatever leads them. Samplers return both the latent draw
and the standard-normal noise that produced it, so any draw can be
replayed or cross-checked exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .autodiff import Tensor, _coerce
from .errors import ContractError, DimensionError, NumericError

__all__ = [
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
]


class VariantKind(Enum):
    """The four model variants, ordered as introduced."""

    ORIGINAL = "original"
    NAIVE_SPATIAL = "naive"
    MVN_SPATIAL = "mvn"
    LOWRANK_MVN_SPATIAL = "lowrank-mvn"

    @classmethod
    def from_string(cls, name: str) -> "VariantKind":
        for member in cls:
            if member.value == name:
                return member
        valid = ", ".join(m.value for m in cls)
        raise ContractError(f"unknown variant {name!r}; expected one of: {valid}")


@dataclass
class DiagonalGaussianParams:
    """Mean and per-component log-variance of a diagonal Gaussian posterior.

    Trailing axis is the latent dimension C; used by the Original and
    NaiveSpatial variants.
    """

    mean: Tensor
    log_var: Tensor

    def __post_init__(self):
        self.mean = _coerce(self.mean)
        self.log_var = _coerce(self.log_var)
        if self.mean.shape != self.log_var.shape:
            raise DimensionError(
                f"mean shape {self.mean.shape} != log_var shape {self.log_var.shape}"
            )


@dataclass
class MvnFeatureMapParams:
    """Per-feature-map matrix-normal parameters.

    `mean_matrix` trailing axes are d x d; `log_diag_omega` (row factor) and
    `log_diag_psi` (column factor) have trailing axis d. The implied
    per-location variance is the Kronecker diagonal omega_i * psi_j.
    """

    mean_matrix: Tensor
    log_diag_omega: Tensor
    log_diag_psi: Tensor

    def __post_init__(self):
        self.mean_matrix = _coerce(self.mean_matrix)
        self.log_diag_omega = _coerce(self.log_diag_omega)
        self.log_diag_psi = _coerce(self.log_diag_psi)
        d = self.mean_matrix.shape[-1]
        if self.mean_matrix.shape[-2] != d:
            raise DimensionError(
                f"mean_matrix trailing axes must be square, got {self.mean_matrix.shape[-2:]}"
            )
        if self.log_diag_omega.shape[-1] != d or self.log_diag_psi.shape[-1] != d:
            raise DimensionError(
                "row/column variance factors must have trailing length "
                f"{d}, got {self.log_diag_omega.shape[-1]} and {self.log_diag_psi.shape[-1]}"
            )

    @property
    def d(self):
        return self.mean_matrix.shape[-1]


@dataclass
class LowRankMvnParams:
    """Matrix-normal parameters with the rank-1 mean mu * nu^T.

    All four fields share trailing axis length d.
    """

    mu: Tensor
    nu: Tensor
    log_diag_omega: Tensor
    log_diag_psi: Tensor

    def __post_init__(self):
        self.mu = _coerce(self.mu)
        self.nu = _coerce(self.nu)
        self.log_diag_omega = _coerce(self.log_diag_omega)
        self.log_diag_psi = _coerce(self.log_diag_psi)
        d = self.mu.shape[-1]
        for name in ("nu", "log_diag_omega", "log_diag_psi"):
            if getattr(self, name).shape[-1] != d:
                raise DimensionError(
                    f"{name} trailing length {getattr(self, name).shape[-1]} != mu length {d}"
                )

    @property
    def d(self):
        return self.mu.shape[-1]


@dataclass
class LatentSample:
    """A reparameterized latent draw plus the noise that produced it.

    Invariant: z = mean + sqrt(var) * epsilon elementwise, so z is exactly
    reconstructable from the stored epsilon.
    """

    z: Tensor
    epsilon: np.ndarray


def _draw_epsilon(shape, rng, epsilon):
    shape = tuple(shape)
    if epsilon is not None:
        epsilon = np.asarray(epsilon, dtype=np.float64)
        # extra leading axes are allowed: they broadcast into batched draws
        if epsilon.shape[max(epsilon.ndim - len(shape), 0) :] != shape:
            raise DimensionError(
                f"injected epsilon shape {epsilon.shape} does not end in {shape}"
            )
        return epsilon
    if rng is None:
        raise ContractError("either rng or an explicit epsilon is required")
    return rng.standard_normal(shape)


def kron_diag(d1, d2):
    """Diagonal of the Kronecker product of two diagonal matrices.

    For diag factors this collapses to the outer product: the result is the
    row-major flattening of d1 * d2^T, i.e. out[..., i*d+j] = d1[..., i] *
    d2[..., j], which equals diag(D1 (x) D2). Broadcasts over leading axes.
    """
    d1 = _coerce(d1)
    d2 = _coerce(d2)
    if d1.shape[-1] != d2.shape[-1]:
        raise DimensionError(
            f"kron_diag factors disagree on trailing axis: {d1.shape[-1]} vs {d2.shape[-1]}"
        )
    n = d1.shape[-1]
    outer = d1.reshape(d1.shape + (1,)) * d2.reshape(d2.shape[:-1] + (1, n))
    return outer.reshape(outer.shape[:-2] + (n * n,))


def mean_matrix(mu, nu):
    """Rank-1 mean matrix: out[..., i, j] = mu[..., i] * nu[..., j]."""
    mu = _coerce(mu)
    nu = _coerce(nu)
    if mu.shape[-1] != nu.shape[-1]:
        raise DimensionError(
            f"mean_matrix factors disagree on trailing axis: {mu.shape[-1]} vs {nu.shape[-1]}"
        )
    n = mu.shape[-1]
    return mu.reshape(mu.shape + (1,)) * nu.reshape(nu.shape[:-1] + (1, n))


def sample_diag_gaussian(p: DiagonalGaussianParams, rng=None, epsilon=None):
    """Two-step reparameterized draw: z = mean + exp(log_var / 2) * eps.

    eps ~ N(0, I) is treated as a constant on the tape, so z stays
    differentiable with respect to mean and log_var.
    """
    eps = _draw_epsilon(p.mean.shape, rng, epsilon)
    z = p.mean + (p.log_var * 0.5).exp() * Tensor(eps)
    return LatentSample(z=z, epsilon=eps)


def sample_mvn(p: MvnFeatureMapParams, rng=None, epsilon=None):
    """Reparameterized draw from a matrix-normal feature map.

    z[..., i, j] = M[..., i, j] + sqrt(omega_i * psi_j) * eps[..., i, j],
    with the per-location variances assembled via `kron_diag`.
    """
    eps = _draw_epsilon(p.mean_matrix.shape, rng, epsilon)
    d = p.d
    var = kron_diag(p.log_diag_omega.exp(), p.log_diag_psi.exp())
    std = var.sqrt().reshape(var.shape[:-1] + (d, d))
    z = p.mean_matrix + std * Tensor(eps)
    return LatentSample(z=z, epsilon=eps)


def sample_lowrank_mvn(p: LowRankMvnParams, rng=None, epsilon=None):
    """Reparameterized matrix-normal draw with the rank-1 mean mu * nu^T."""
    full = MvnFeatureMapParams(
        mean_matrix=mean_matrix(p.mu, p.nu),
        log_diag_omega=p.log_diag_omega,
        log_diag_psi=p.log_diag_psi,
    )
    return sample_mvn(full, rng=rng, epsilon=epsilon)


def kl_to_standard_normal(means, log_vars, axis=None):
    """Closed-form KL from a product of independent Gaussians to N(0, I).

    0.5 * sum(var + mean^2 - 1 - log var); exact because every variant in
    scope has a diagonal covariance. The var - 1 - log var piece is
    evaluated as expm1(log var) - log var so tiny log-variances cannot
    produce a negative result through cancellation. Reduces over all axes
    by default, or over `axis` to keep leading batch dims. Differentiable
    and >= 0.
    """
    means = _coerce(means)
    log_vars = _coerce(log_vars)
    if means.shape != log_vars.shape:
        raise DimensionError(
            f"means shape {means.shape} != log_vars shape {log_vars.shape}"
        )
    if not (np.isfinite(means.data).all() and np.isfinite(log_vars.data).all()):
        raise NumericError("KL inputs must be finite")
    term = log_vars.expm1() - log_vars + means * means
    return term.sum(axis=axis) * 0.5


def param_count(variant, d=None, N=None, C=None) -> int:
    """Number of values the encoder head must emit for a variant.

    Original: 2C. NaiveSpatial: 2*d^2*N. MvnSpatial: (d^2 + 2d)*N.
    LowRankMvnSpatial: 4*d*N.
    """
    if isinstance(variant, str):
        variant = VariantKind.from_string(variant)
    if variant is VariantKind.ORIGINAL:
        if C is None or C < 1:
            raise ContractError(f"Original variant requires C >= 1, got {C}")
        return 2 * C
    if d is None or d < 1 or N is None or N < 1:
        raise ContractError(f"spatial variants require d >= 1 and N >= 1, got d={d}, N={N}")
    if variant is VariantKind.NAIVE_SPATIAL:
        return 2 * d * d * N
    if variant is VariantKind.MVN_SPATIAL:
        return (d * d + 2 * d) * N
    if variant is VariantKind.LOWRANK_MVN_SPATIAL:
        return 4 * d * N
    raise ContractError(f"unknown variant {variant!r}")
