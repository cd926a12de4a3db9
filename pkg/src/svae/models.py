"""The four VAE variants: encoder trunk, variant-specific parameter head,
reparameterized sampling, deconvolutional decoder, and the ELBO objective.

A model's latent layout depends on its variant: the Original variant keeps
a flat C-vector, the three spatial variants hold N feature maps of size
d x d. Checkpoints are a flat binary container of named f64 arrays behind
a plain-text header (magic "SVAE1").
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from . import latent
from .autodiff import (
    Layer,
    Tensor,
    _coerce,
    conv_output_size,
    init_uniform_fan_in,
    no_grad,
)
from .errors import ContractError, DimensionError, FormatError, NumericError
from .latent import (
    DiagonalGaussianParams,
    LatentSample,
    LowRankMvnParams,
    MvnFeatureMapParams,
    VariantKind,
    param_count,
)

__all__ = [
    "VariantKind",
    "ModelConfig",
    "ElboBreakdown",
    "Model",
    "build_model",
    "default_config",
    "tiny_config",
    "split_head",
    "concat_head",
    "save_checkpoint",
    "save_checkpoint_bytes",
    "load_checkpoint",
    "load_checkpoint_bytes",
    "CHECKPOINT_MAGIC",
]

CHECKPOINT_MAGIC = b"SVAE1"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ModelConfig:
    """Static description of one model.

    `d` and `n_maps` shape the spatial latent ([n_maps, d, d]); `latent_dim`
    is the flat dimension C used by the Original variant (NaiveSpatial
    derives C = d^2 * n_maps). `encoder_layers` is the conv trunk only; the
    flatten and the variant-sized dense head are appended automatically.
    `decoder_layers` maps the latent all the way to `image_shape`.
    """

    variant: VariantKind
    image_shape: tuple
    d: int = 1
    n_maps: int = 1
    latent_dim: int | None = None
    likelihood_sigma: float = 1.0
    encoder_layers: tuple = ()
    decoder_layers: tuple = ()

    def __post_init__(self):
        if isinstance(self.variant, str):
            self.variant = VariantKind.from_string(self.variant)
        self.image_shape = tuple(int(v) for v in self.image_shape)
        if len(self.image_shape) != 3:
            raise ContractError(
                f"image_shape must be (channels, H, W), got {self.image_shape}"
            )
        if self.likelihood_sigma <= 0:
            raise ContractError(
                f"likelihood_sigma must be positive, got {self.likelihood_sigma}"
            )
        if self.variant is VariantKind.ORIGINAL:
            if self.latent_dim is None or self.latent_dim < 1:
                raise ContractError("Original variant requires latent_dim >= 1")
        else:
            if self.d < 1 or self.n_maps < 1:
                raise ContractError(
                    f"spatial variants require d >= 1 and n_maps >= 1, got "
                    f"d={self.d}, n_maps={self.n_maps}"
                )
            total = self.d * self.d * self.n_maps
            if self.latent_dim is None:
                self.latent_dim = total
            elif self.latent_dim != total:
                raise ContractError(
                    f"spatial variants require latent_dim == d^2 * n_maps "
                    f"({total}), got {self.latent_dim}"
                )
        self.encoder_layers = _normalize_specs(self.encoder_layers)
        self.decoder_layers = _normalize_specs(self.decoder_layers)

    @property
    def head_width(self) -> int:
        return param_count(
            self.variant, d=self.d, N=self.n_maps, C=self.latent_dim
        )

    @property
    def total_latent_dim(self) -> int:
        if self.variant is VariantKind.ORIGINAL:
            return self.latent_dim
        return self.d * self.d * self.n_maps

    @property
    def is_spatial(self) -> bool:
        return self.variant is not VariantKind.ORIGINAL


def _normalize_specs(specs):
    out = []
    for spec in specs:
        spec = tuple(spec)
        out.append((str(spec[0]),) + tuple(int(v) for v in spec[1:]))
    return tuple(out)


# Shipped architectures. All decoders share the same up-sampling pipeline from
# 3x3 maps onward; the Original decoder starts from 1x1 maps and reaches that
# pipeline through a deliberately thin dense+deconv stem, which keeps both its
# parameter total and its per-image compute within ~10% of the spatial
# decoders at the reference sizes (d=3 with n_maps=64 for 28x28, n_maps=128
# for 32x32).
_MNIST_TRUNK = (
    ("conv", 32, 3, 2, 1),
    ("relu",),
    ("conv", 64, 3, 2, 1),
    ("relu",),
    ("conv", 128, 3, 2, 1),
    ("relu",),
)
_MNIST_DECODER_SPATIAL = (
    ("deconv", 96, 4, 3, 0),
    ("relu",),
    ("deconv", 1, 4, 3, 0),
    ("crop", 28, 28),
    ("sigmoid",),
)
_MNIST_DECODER_ORIGINAL = (
    ("dense", 12),
    ("reshape", 12, 1, 1),
    ("deconv", 64, 3, 1, 0),
    ("relu",),
    ("deconv", 96, 4, 3, 0),
    ("relu",),
    ("deconv", 1, 4, 3, 0),
    ("crop", 28, 28),
    ("sigmoid",),
)
_CIFAR_DECODER_SPATIAL = (
    ("deconv", 80, 4, 3, 0),
    ("relu",),
    ("deconv", 3, 5, 3, 0),
    ("sigmoid",),
)
_CIFAR_DECODER_ORIGINAL = (
    ("dense", 12),
    ("reshape", 12, 1, 1),
    ("deconv", 128, 3, 1, 0),
    ("relu",),
    ("deconv", 80, 4, 3, 0),
    ("relu",),
    ("deconv", 3, 5, 3, 0),
    ("sigmoid",),
)


def default_config(
    variant,
    image_shape=(1, 28, 28),
    d=3,
    n_maps=64,
    latent_dim=None,
    likelihood_sigma=1.0,
):
    """Shipped architecture for 28x28 grayscale or 32x32 RGB images."""
    if isinstance(variant, str):
        variant = VariantKind.from_string(variant)
    spatial = variant is not VariantKind.ORIGINAL
    if image_shape[1:] == (28, 28):
        trunk = _MNIST_TRUNK
        decoder = _MNIST_DECODER_SPATIAL if spatial else _MNIST_DECODER_ORIGINAL
    elif image_shape[1:] == (32, 32):
        trunk = _MNIST_TRUNK
        decoder = _CIFAR_DECODER_SPATIAL if spatial else _CIFAR_DECODER_ORIGINAL
    else:
        raise ContractError(
            f"no shipped architecture for image shape {image_shape}; "
            "pass encoder_layers/decoder_layers explicitly"
        )
    if spatial and d != 3:
        raise ContractError(
            f"the shipped decoders up-sample from 3x3 maps; got d={d}. "
            "Provide explicit decoder_layers for other map sizes."
        )
    if variant is VariantKind.ORIGINAL and latent_dim is None:
        latent_dim = 81 if image_shape[1:] == (28, 28) else 150
    return ModelConfig(
        variant=variant,
        image_shape=image_shape,
        d=d if spatial else 1,
        n_maps=n_maps if spatial else 1,
        latent_dim=latent_dim,
        likelihood_sigma=likelihood_sigma,
        encoder_layers=trunk,
        decoder_layers=decoder,
    )


def tiny_config(variant, d=2, n_maps=2, latent_dim=None, likelihood_sigma=1.0):
    """A 4x4 single-channel model small enough for finite-difference checks."""
    if isinstance(variant, str):
        variant = VariantKind.from_string(variant)
    spatial = variant is not VariantKind.ORIGINAL
    if spatial:
        if d != 2:
            raise ContractError("tiny_config supports d=2 only")
        decoder = (
            ("deconv", 4, 2, 1, 0),
            ("relu",),
            ("deconv", 1, 2, 1, 0),
            ("sigmoid",),
        )
    else:
        if latent_dim is None:
            latent_dim = 8
        decoder = (
            ("dense", 4),
            ("reshape", 4, 1, 1),
            ("deconv", 4, 2, 1, 0),
            ("relu",),
            ("deconv", 4, 2, 1, 0),
            ("relu",),
            ("deconv", 1, 2, 1, 0),
            ("sigmoid",),
        )
    return ModelConfig(
        variant=variant,
        image_shape=(1, 4, 4),
        d=d if spatial else 1,
        n_maps=n_maps if spatial else 1,
        latent_dim=latent_dim,
        likelihood_sigma=likelihood_sigma,
        encoder_layers=(("conv", 4, 3, 2, 1), ("relu",)),
        decoder_layers=decoder,
    )


# ---------------------------------------------------------------------------
# network assembly


def _build_stack(specs, in_shape, rng):
    """Instantiate layers for a spec tuple, tracking the running shape."""
    layers = []
    shape = tuple(in_shape)
    for spec in specs:
        kind = spec[0]
        if kind == "conv":
            out_c, k, s, p = spec[1:]
            in_c = shape[0]
            w = init_uniform_fan_in((out_c, in_c, k, k), in_c * k * k, rng)
            b = init_uniform_fan_in((out_c,), in_c * k * k, rng)
            layers.append(Layer("conv2d", w, b, stride=s, padding=p))
            shape = (
                out_c,
                conv_output_size(shape[1], k, s, p),
                conv_output_size(shape[2], k, s, p),
            )
        elif kind == "deconv":
            out_c, k, s, p = spec[1:]
            in_c = shape[0]
            w = init_uniform_fan_in((in_c, out_c, k, k), in_c * k * k, rng)
            b = init_uniform_fan_in((out_c,), in_c * k * k, rng)
            layers.append(Layer("conv2d_transpose", w, b, stride=s, padding=p))
            shape = (
                out_c,
                (shape[1] - 1) * s - 2 * p + k,
                (shape[2] - 1) * s - 2 * p + k,
            )
        elif kind == "dense":
            (out_dim,) = spec[1:]
            if len(shape) != 1:
                raise ContractError(
                    f"dense layer needs a flat input; insert ('flatten',) before it (shape {shape})"
                )
            w = init_uniform_fan_in((shape[0], out_dim), shape[0], rng)
            b = init_uniform_fan_in((out_dim,), shape[0], rng)
            layers.append(Layer("dense", w, b))
            shape = (out_dim,)
        elif kind == "flatten":
            layers.append(Layer("flatten"))
            shape = (int(np.prod(shape)),)
        elif kind == "reshape":
            target = spec[1:]
            if int(np.prod(shape)) != int(np.prod(target)):
                raise ContractError(
                    f"reshape target {target} incompatible with shape {shape}"
                )
            layers.append(Layer("reshape", target=target))
            shape = tuple(target)
        elif kind == "crop":
            h, w_ = spec[1:]
            if shape[1] < h or shape[2] < w_:
                raise ContractError(
                    f"crop to {h}x{w_} impossible from spatial size {shape[1]}x{shape[2]}"
                )
            layers.append(Layer("crop", target=(h, w_)))
            shape = (shape[0], h, w_)
        elif kind in ("relu", "sigmoid"):
            layers.append(Layer(kind))
        else:
            raise ContractError(f"unknown layer spec kind {kind!r}")
    return layers, shape


def build_model(config: ModelConfig, seed: int = 0) -> "Model":
    """Construct a model with seed-deterministic fan-in-uniform weights."""
    rng = np.random.default_rng(seed)
    enc_layers, trunk_shape = _build_stack(config.encoder_layers, config.image_shape, rng)
    feat = int(np.prod(trunk_shape))
    enc_layers.append(Layer("flatten"))
    head_w = init_uniform_fan_in((feat, config.head_width), feat, rng)
    head_b = init_uniform_fan_in((config.head_width,), feat, rng)
    enc_layers.append(Layer("dense", head_w, head_b))

    if config.is_spatial:
        dec_in = (config.n_maps, config.d, config.d)
    else:
        dec_in = (config.latent_dim,)
    dec_layers, out_shape = _build_stack(config.decoder_layers, dec_in, rng)
    if tuple(out_shape) != config.image_shape:
        raise ContractError(
            f"decoder produces shape {out_shape}, expected image shape {config.image_shape}"
        )
    return Model(config, enc_layers, dec_layers)


# ---------------------------------------------------------------------------
# head splitting


def split_head(config: ModelConfig, raw):
    """Split the raw head output [B, head_width] into variant parameters.

    The layout is a bijection: `concat_head` recovers the raw output.
    """
    raw = _coerce(raw)
    if raw.ndim != 2 or raw.shape[1] != config.head_width:
        raise DimensionError(
            f"head output must be [B, {config.head_width}], got {raw.shape}"
        )
    B = raw.shape[0]
    v, d, N = config.variant, config.d, config.n_maps
    if v in (VariantKind.ORIGINAL, VariantKind.NAIVE_SPATIAL):
        C = config.total_latent_dim
        return DiagonalGaussianParams(mean=raw[:, :C], log_var=raw[:, C:])
    if v is VariantKind.MVN_SPATIAL:
        dd, dn = d * d * N, d * N
        return MvnFeatureMapParams(
            mean_matrix=raw[:, :dd].reshape(B, N, d, d),
            log_diag_omega=raw[:, dd : dd + dn].reshape(B, N, d),
            log_diag_psi=raw[:, dd + dn :].reshape(B, N, d),
        )
    dn = d * N
    return LowRankMvnParams(
        mu=raw[:, :dn].reshape(B, N, d),
        nu=raw[:, dn : 2 * dn].reshape(B, N, d),
        log_diag_omega=raw[:, 2 * dn : 3 * dn].reshape(B, N, d),
        log_diag_psi=raw[:, 3 * dn :].reshape(B, N, d),
    )


def concat_head(params) -> np.ndarray:
    """Inverse of `split_head` on the underlying arrays."""
    if isinstance(params, DiagonalGaussianParams):
        parts = (params.mean, params.log_var)
    elif isinstance(params, MvnFeatureMapParams):
        parts = (params.mean_matrix, params.log_diag_omega, params.log_diag_psi)
    else:
        parts = (params.mu, params.nu, params.log_diag_omega, params.log_diag_psi)
    B = parts[0].shape[0]
    return np.concatenate([p.data.reshape(B, -1) for p in parts], axis=1)


# ---------------------------------------------------------------------------
# the model


@dataclass
class ElboBreakdown:
    """The two terms of the variational objective, batch-averaged.

    `elbo = reconstruction - kl`; kl >= 0, so elbo <= reconstruction.
    """

    reconstruction: Tensor
    kl: Tensor
    elbo: Tensor


class Model:
    """One trained or trainable VAE instance.

    Single-writer: forward/backward must not run concurrently on the same
    instance; frozen copies may fan out for read-only generation.
    """

    def __init__(self, config: ModelConfig, encoder, decoder):
        self.config = config
        self.encoder = list(encoder)
        self.decoder = list(decoder)

    # -- parameter plumbing ---------------------------------------------------

    def parameters(self) -> dict:
        """Named parameter tensors in a stable order."""
        out = {}
        for prefix, stack in (("enc", self.encoder), ("dec", self.decoder)):
            for i, layer in enumerate(stack):
                if layer.weights is not None:
                    out[f"{prefix}.{i}.weight"] = layer.weights
                if layer.bias is not None:
                    out[f"{prefix}.{i}.bias"] = layer.bias
        return out

    def zero_grad(self):
        for p in self.parameters().values():
            p.grad = None

    def n_parameters(self) -> int:
        return sum(p.size for p in self.parameters().values())

    def decoder_parameter_count(self) -> int:
        return sum(
            p.size
            for layer in self.decoder
            for p in layer.parameters()
        )

    def copy(self) -> "Model":
        clone = load_checkpoint_bytes(save_checkpoint_bytes(self))[0]
        return clone

    # -- forward paths ----------------------------------------------------------

    def encode(self, x):
        """Run the encoder and split the head into variant parameters."""
        h = _coerce(x)
        if h.ndim != 4 or h.shape[1:] != self.config.image_shape:
            raise DimensionError(
                f"input must be [B, {', '.join(map(str, self.config.image_shape))}], got {h.shape}"
            )
        for layer in self.encoder:
            h = layer(h)
        return split_head(self.config, h)

    def reparameterize(self, params, rng=None, epsilon=None) -> LatentSample:
        """Draw the latent for `params`; NaiveSpatial reshapes to [B, N, d, d]."""
        cfg = self.config
        v = cfg.variant
        if v is VariantKind.ORIGINAL:
            return latent.sample_diag_gaussian(params, rng=rng, epsilon=epsilon)
        if v is VariantKind.NAIVE_SPATIAL:
            B = params.mean.shape[0]
            map_shape = (B, cfg.n_maps, cfg.d, cfg.d)
            if epsilon is not None:
                epsilon = np.asarray(epsilon, dtype=np.float64).reshape(B, -1)
            flat = latent.sample_diag_gaussian(params, rng=rng, epsilon=epsilon)
            return LatentSample(
                z=flat.z.reshape(map_shape), epsilon=flat.epsilon.reshape(map_shape)
            )
        if v is VariantKind.MVN_SPATIAL:
            return latent.sample_mvn(params, rng=rng, epsilon=epsilon)
        return latent.sample_lowrank_mvn(params, rng=rng, epsilon=epsilon)

    def decode(self, z):
        """Map a latent back to image space (in [0, 1] via the final sigmoid)."""
        h = _coerce(z)
        cfg = self.config
        if cfg.is_spatial:
            want = (cfg.n_maps, cfg.d, cfg.d)
            if h.ndim != 4 or h.shape[1:] != want:
                raise DimensionError(
                    f"latent must be [B, {want[0]}, {want[1]}, {want[2]}], got {h.shape}"
                )
        else:
            if h.ndim != 2 or h.shape[1] != cfg.latent_dim:
                raise DimensionError(
                    f"latent must be [B, {cfg.latent_dim}], got {h.shape}"
                )
        for layer in self.decoder:
            h = layer(h)
        return h

    def flat_posterior(self, params):
        """Flatten variant parameters to per-location (mean, log_var), [B, D_z].

        For the matrix-normal variants the per-location log-variance is
        log(omega_i) + log(psi_j), the log of the Kronecker diagonal.
        """
        cfg = self.config
        B_shape = None
        if isinstance(params, DiagonalGaussianParams):
            B = params.mean.shape[0]
            return params.mean.reshape(B, -1), params.log_var.reshape(B, -1)
        if isinstance(params, MvnFeatureMapParams):
            mean = params.mean_matrix
            lo, lp = params.log_diag_omega, params.log_diag_psi
        else:
            mean = latent.mean_matrix(params.mu, params.nu)
            lo, lp = params.log_diag_omega, params.log_diag_psi
        B, N, d = lo.shape
        log_var = lo.reshape(B, N, d, 1) + lp.reshape(B, N, 1, d)
        return mean.reshape(B, -1), log_var.reshape(B, -1)

    def elbo_terms(self, x, params, sample: LatentSample) -> ElboBreakdown:
        """ELBO pieces for an already-drawn latent sample."""
        x = _coerce(x)
        x_hat = self.decode(sample.z)
        sigma = self.config.likelihood_sigma
        D = int(np.prod(self.config.image_shape))
        sq = ((x - x_hat) ** 2).sum(axis=(1, 2, 3))
        recon = (sq * (-1.0 / (2.0 * sigma * sigma))).mean() - 0.5 * D * np.log(
            2.0 * np.pi * sigma * sigma
        )
        mean, log_var = self.flat_posterior(params)
        kl = latent.kl_to_standard_normal(mean, log_var, axis=1).mean()
        elbo = recon - kl
        if not np.isfinite(elbo.data):
            raise NumericError(
                f"non-finite ELBO: reconstruction={float(recon.data)}, kl={float(kl.data)}"
            )
        return ElboBreakdown(reconstruction=recon, kl=kl, elbo=elbo)

    def elbo(self, x, rng=None, epsilon=None) -> ElboBreakdown:
        """Single-draw variational lower bound, averaged over the batch."""
        params = self.encode(x)
        sample = self.reparameterize(params, rng=rng, epsilon=epsilon)
        return self.elbo_terms(x, params, sample)

    # -- generation ----------------------------------------------------------------

    def prior_latent_shape(self, n):
        cfg = self.config
        if cfg.is_spatial:
            return (n, cfg.n_maps, cfg.d, cfg.d)
        return (n, cfg.latent_dim)

    def generate(self, n, rng, batch_size=256) -> np.ndarray:
        """Sample n images from prior -> decoder. Never touches the encoder."""
        out = np.empty((n,) + self.config.image_shape)
        done = 0
        with no_grad():
            while done < n:
                m = min(batch_size, n - done)
                z = rng.standard_normal(self.prior_latent_shape(m))
                out[done : done + m] = self.decode(Tensor(z)).data
                done += m
        return out


# ---------------------------------------------------------------------------
# checkpoints


def _specs_to_text(specs):
    return "|".join(":".join(str(v) for v in spec) for spec in specs)


def _specs_from_text(text):
    if not text:
        return ()
    out = []
    for part in text.split("|"):
        fields = part.split(":")
        out.append((fields[0],) + tuple(int(v) for v in fields[1:]))
    return tuple(out)


def save_checkpoint_bytes(model: Model, extra_arrays=None, extra_header=None) -> bytes:
    cfg = model.config
    buf = io.BytesIO()
    lines = [
        "version=1",
        f"variant={cfg.variant.value}",
        f"d={cfg.d}",
        f"n_maps={cfg.n_maps}",
        f"latent_dim={cfg.latent_dim}",
        "image_shape=" + ",".join(str(v) for v in cfg.image_shape),
        f"likelihood_sigma={cfg.likelihood_sigma!r}",
        "encoder_layers=" + _specs_to_text(cfg.encoder_layers),
        "decoder_layers=" + _specs_to_text(cfg.decoder_layers),
    ]
    for key, value in (extra_header or {}).items():
        lines.append(f"{key}={value}")
    arrays = [(name, p.data) for name, p in model.parameters().items()]
    for name, arr in (extra_arrays or {}).items():
        arrays.append((name, np.asarray(arr, dtype=np.float64)))
    for name, arr in arrays:
        dims = ",".join(str(s) for s in arr.shape)
        lines.append(f"array={name}:{dims}")
    buf.write(CHECKPOINT_MAGIC + b"\n")
    buf.write(("\n".join(lines) + "\nend_header\n").encode("utf-8"))
    for _, arr in arrays:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_checkpoint(model: Model, path, extra_arrays=None, extra_header=None):
    data = save_checkpoint_bytes(model, extra_arrays, extra_header)
    with open(path, "wb") as fh:
        fh.write(data)


def load_checkpoint_bytes(data: bytes):
    """Returns (model, header_dict, extra_arrays_dict)."""
    if not data.startswith(CHECKPOINT_MAGIC + b"\n"):
        raise FormatError(
            f"bad checkpoint magic {data[:5]!r} at byte 0, expected {CHECKPOINT_MAGIC!r}"
        )
    head_end = data.find(b"\nend_header\n")
    if head_end < 0:
        raise FormatError("checkpoint header is not terminated by end_header")
    header_text = data[len(CHECKPOINT_MAGIC) + 1 : head_end].decode("utf-8")
    blob = data[head_end + len(b"\nend_header\n") :]
    header = {}
    array_specs = []
    for line in header_text.splitlines():
        key, _, value = line.partition("=")
        if key == "array":
            name, _, dims = value.partition(":")
            shape = tuple(int(v) for v in dims.split(",") if v)
            array_specs.append((name, shape))
        else:
            header[key] = value
    cfg = ModelConfig(
        variant=header["variant"],
        image_shape=tuple(int(v) for v in header["image_shape"].split(",")),
        d=int(header["d"]),
        n_maps=int(header["n_maps"]),
        latent_dim=int(header["latent_dim"]),
        likelihood_sigma=float(header["likelihood_sigma"]),
        encoder_layers=_specs_from_text(header["encoder_layers"]),
        decoder_layers=_specs_from_text(header["decoder_layers"]),
    )
    model = build_model(cfg, seed=0)
    params = model.parameters()
    offset = 0
    extras = {}
    for name, shape in array_specs:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise FormatError(
                f"checkpoint truncated: array {name} needs {nbytes} bytes at "
                f"offset {head_end + len(b'_end_header_') + offset}, "
                f"only {len(blob) - offset} available"
            )
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        offset += nbytes
        if name in params:
            params[name].data = arr.copy()
        else:
            extras[name] = arr.copy()
    missing = [n for n, _ in array_specs if n in params]
    if set(params) - set(n for n, _ in array_specs):
        absent = sorted(set(params) - set(n for n, _ in array_specs))
        raise FormatError(f"checkpoint is missing parameter arrays: {absent}")
    if offset != len(blob):
        raise FormatError(
            f"checkpoint has {len(blob) - offset} trailing bytes after the last array"
        )
    return model, header, extras


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return load_checkpoint_bytes(data)
