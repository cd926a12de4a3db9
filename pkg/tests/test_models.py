import numpy as np
import pytest

from svae.autodiff import Tensor, finite_difference_check
from svae.errors import ContractError, DimensionError, FormatError
from svae.latent import (
    DiagonalGaussianParams,
    LowRankMvnParams,
    MvnFeatureMapParams,
    VariantKind,
    kl_to_standard_normal,
    mean_matrix,
)
from svae.models import (
    ModelConfig,
    build_model,
    concat_head,
    default_config,
    load_checkpoint,
    load_checkpoint_bytes,
    save_checkpoint,
    save_checkpoint_bytes,
    split_head,
    tiny_config,
)

ALL_VARIANTS = ("original", "naive", "mvn", "lowrank-mvn")


def toy_config(latent_dim=2, sigma=0.6):
    """A 2-pixel, dense-only Original model; log-likelihood is quadrature-tractable."""
    return ModelConfig(
        variant="original",
        image_shape=(1, 1, 2),
        latent_dim=latent_dim,
        likelihood_sigma=sigma,
        encoder_layers=(),
        decoder_layers=(("dense", 2), ("reshape", 1, 1, 2), ("sigmoid",)),
    )


def quadrature_log_likelihood(model, x, n_nodes=80):
    """Exact log p(x) for a 2-latent model via Gauss-Hermite quadrature."""
    nodes, weights = np.polynomial.hermite.hermgauss(n_nodes)
    z1, z2 = np.meshgrid(nodes, nodes, indexing="ij")
    z = np.sqrt(2.0) * np.stack([z1.reshape(-1), z2.reshape(-1)], axis=1)
    log_w = np.log(weights)
    log_wij = (log_w[:, None] + log_w[None, :]).reshape(-1)
    x_hat = model.decode(Tensor(z)).data.reshape(len(z), -1)
    sigma = model.config.likelihood_sigma
    D = x_hat.shape[1]
    log_lik = (
        -((x.reshape(1, -1) - x_hat) ** 2).sum(axis=1) / (2 * sigma**2)
        - 0.5 * D * np.log(2 * np.pi * sigma**2)
    )
    from scipy.special import logsumexp

    return float(logsumexp(log_wij + log_lik) - np.log(np.pi))


class TestConfig:
    def test_naive_requires_matching_latent_dim(self):
        with pytest.raises(ContractError):
            ModelConfig(
                variant="naive",
                image_shape=(1, 4, 4),
                d=2,
                n_maps=2,
                latent_dim=9,
                decoder_layers=(("deconv", 1, 2, 1, 0), ("sigmoid",)),
            )

    def test_naive_derives_latent_dim(self):
        cfg = tiny_config("naive")
        assert cfg.latent_dim == cfg.d * cfg.d * cfg.n_maps

    def test_head_width_matches_param_count(self):
        cfg = default_config("mvn")
        assert cfg.head_width == (3 * 3 + 2 * 3) * 64

    def test_original_requires_latent_dim(self):
        with pytest.raises(ContractError):
            ModelConfig(variant="original", image_shape=(1, 4, 4))

    def test_unknown_image_shape_needs_explicit_layers(self):
        with pytest.raises(ContractError):
            default_config("mvn", image_shape=(1, 17, 17))


class TestEncode:
    def test_head_width_lowrank_d3_n64(self):
        model = build_model(default_config("lowrank-mvn"), seed=0)
        raw_width = model.encoder[-1].weights.shape[1]
        assert raw_width == 768

    def test_zero_weight_head_gives_prior_matching_params(self):
        model = build_model(tiny_config("lowrank-mvn"), seed=0)
        head = model.encoder[-1]
        head.weights.data[:] = 0.0
        head.bias.data[:] = 0.0
        x = np.random.default_rng(0).uniform(0, 1, (3, 1, 4, 4))
        params = model.encode(x)
        mean, log_var = model.flat_posterior(params)
        assert np.all(mean.data == 0.0) and np.all(log_var.data == 0.0)
        kl = kl_to_standard_normal(mean, log_var)
        assert float(kl.data) == 0.0

    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_split_concat_round_trip(self, variant):
        cfg = tiny_config(variant)
        rng = np.random.default_rng(3)
        raw = rng.standard_normal((4, cfg.head_width))
        params = split_head(cfg, Tensor(raw))
        np.testing.assert_array_equal(concat_head(params), raw)

    def test_split_rejects_wrong_width(self):
        cfg = tiny_config("mvn")
        with pytest.raises(DimensionError):
            split_head(cfg, np.zeros((2, cfg.head_width + 1)))

    def test_encode_rejects_wrong_image_shape(self):
        model = build_model(tiny_config("original"), seed=0)
        with pytest.raises(DimensionError):
            model.encode(np.zeros((2, 1, 5, 5)))


class TestReparameterize:
    def test_naive_reshape_is_row_major_round_trip(self):
        cfg = tiny_config("naive")
        model = build_model(cfg, seed=0)
        d, N = cfg.d, cfg.n_maps
        C = d * d * N
        mean = np.arange(C, dtype=float).reshape(1, C)
        params = DiagonalGaussianParams(mean, np.full((1, C), -60.0))
        sample = model.reparameterize(params, np.random.default_rng(0))
        # flat index k lands at (k // d^2, (k % d^2) // d, k % d)
        for k in range(C):
            m, rest = divmod(k, d * d)
            i, j = divmod(rest, d)
            assert sample.z.data[0, m, i, j] == pytest.approx(float(k), abs=1e-12)
        assert sample.z.data.reshape(1, C) == pytest.approx(mean, abs=1e-12)

    def test_mvn_d1_equals_original_given_same_inputs(self):
        C = 5
        rng = np.random.default_rng(4)
        mean = rng.standard_normal((1, C))
        log_var = rng.standard_normal((1, C))
        eps = rng.standard_normal((1, C))
        orig = build_model(
            ModelConfig(
                variant="original",
                image_shape=(1, 4, 4),
                latent_dim=C,
                encoder_layers=(("conv", 4, 3, 2, 1), ("relu",)),
                decoder_layers=(
                    ("dense", 16),
                    ("reshape", 1, 4, 4),
                    ("sigmoid",),
                ),
            ),
            seed=0,
        )
        z_orig = orig.reparameterize(
            DiagonalGaussianParams(mean, log_var), epsilon=eps
        ).z.data
        mvn = build_model(
            ModelConfig(
                variant="mvn",
                image_shape=(1, 4, 4),
                d=1,
                n_maps=C,
                encoder_layers=(("conv", 4, 3, 2, 1), ("relu",)),
                decoder_layers=(
                    ("flatten",),
                    ("dense", 16),
                    ("reshape", 1, 4, 4),
                    ("sigmoid",),
                ),
            ),
            seed=0,
        )
        params = MvnFeatureMapParams(
            mean_matrix=mean.reshape(1, C, 1, 1),
            log_diag_omega=log_var.reshape(1, C, 1),
            log_diag_psi=np.zeros((1, C, 1)),
        )
        z_mvn = mvn.reparameterize(params, epsilon=eps.reshape(1, C, 1, 1)).z.data
        np.testing.assert_allclose(z_mvn.reshape(1, C), z_orig, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_matches_latent_sampler_directly(self, variant):
        from svae import latent as L

        cfg = tiny_config(variant)
        model = build_model(cfg, seed=1)
        x = np.random.default_rng(2).uniform(0, 1, (3, 1, 4, 4))
        params = model.encode(x)
        eps = np.random.default_rng(5).standard_normal(model.prior_latent_shape(3))
        got = model.reparameterize(params, epsilon=eps).z.data
        if variant == "original":
            want = L.sample_diag_gaussian(params, epsilon=eps).z.data
        elif variant == "naive":
            want = L.sample_diag_gaussian(
                params, epsilon=eps.reshape(3, -1)
            ).z.data.reshape(got.shape)
        elif variant == "mvn":
            want = L.sample_mvn(params, epsilon=eps).z.data
        else:
            want = L.sample_lowrank_mvn(params, epsilon=eps).z.data
        np.testing.assert_array_equal(got, want)


class TestDecode:
    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_output_shape_and_range_mnist_configs(self, variant):
        model = build_model(default_config(variant, n_maps=8), seed=2)
        z = np.random.default_rng(0).standard_normal(model.prior_latent_shape(2))
        out = model.decode(Tensor(z)).data
        assert out.shape == (2, 1, 28, 28)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_decoder_parameter_parity_shipped_mnist(self):
        counts = {
            v: build_model(default_config(v), seed=0).decoder_parameter_count()
            for v in ALL_VARIANTS
        }
        lo, hi = min(counts.values()), max(counts.values())
        assert hi / lo <= 1.10, counts

    def test_decoder_parameter_parity_shipped_cifar(self):
        counts = {
            v: build_model(
                default_config(v, image_shape=(3, 32, 32), n_maps=128), seed=0
            ).decoder_parameter_count()
            for v in ALL_VARIANTS
        }
        lo, hi = min(counts.values()), max(counts.values())
        assert hi / lo <= 1.10, counts

    def test_decode_rejects_wrong_latent_shape(self):
        model = build_model(tiny_config("mvn"), seed=0)
        with pytest.raises(DimensionError):
            model.decode(np.zeros((2, 3, 2, 2)))

    def test_generate_never_calls_encoder(self):
        model = build_model(tiny_config("lowrank-mvn"), seed=0)

        def boom(x):
            raise AssertionError("encoder invoked during generation")

        model.encoder = [boom]
        images = model.generate(5, np.random.default_rng(0))
        assert images.shape == (5, 1, 4, 4)


class TestElbo:
    def test_perfect_reconstruction_zero_kl(self):
        model = build_model(tiny_config("naive"), seed=0)
        head = model.encoder[-1]
        head.weights.data[:] = 0.0
        head.bias.data[:] = 0.0
        # zero decoder weights: sigmoid(0) = 0.5 everywhere
        for layer in model.decoder:
            for p in layer.parameters():
                p.data[:] = 0.0
        x = np.full((2, 1, 4, 4), 0.5)
        bd = model.elbo(x, np.random.default_rng(0))
        D = 16
        sigma = model.config.likelihood_sigma
        want = -0.5 * D * np.log(2 * np.pi * sigma**2)
        assert float(bd.kl.data) == 0.0
        assert float(bd.reconstruction.data) == pytest.approx(want, abs=1e-12)
        assert float(bd.elbo.data) == pytest.approx(want, abs=1e-12)

    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_kl_term_matches_latent_module(self, variant):
        model = build_model(tiny_config(variant), seed=3)
        x = np.random.default_rng(1).uniform(0, 1, (4, 1, 4, 4))
        params = model.encode(x)
        sample = model.reparameterize(params, np.random.default_rng(2))
        bd = model.elbo_terms(x, params, sample)
        mean, log_var = model.flat_posterior(params)
        want = float(
            kl_to_standard_normal(
                mean.data.reshape(-1), log_var.data.reshape(-1)
            ).data
        ) / x.shape[0]
        assert float(bd.kl.data) == pytest.approx(want, rel=1e-12)

    def test_breakdown_invariants(self):
        model = build_model(tiny_config("mvn"), seed=4)
        x = np.random.default_rng(3).uniform(0, 1, (3, 1, 4, 4))
        bd = model.elbo(x, np.random.default_rng(0))
        assert float(bd.kl.data) >= 0.0
        assert float(bd.elbo.data) <= float(bd.reconstruction.data)
        assert float(bd.elbo.data) == pytest.approx(
            float(bd.reconstruction.data) - float(bd.kl.data), rel=1e-12
        )

    def test_monte_carlo_elbo_is_lower_bound_on_quadrature_loglik(self):
        model = build_model(toy_config(), seed=7)
        x = np.array([0.35, 0.65]).reshape(1, 1, 1, 2)
        log_p = quadrature_log_likelihood(model, x)
        params = model.encode(x)
        mean, log_var = model.flat_posterior(params)
        mean, log_var = mean.data[0], log_var.data[0]
        n = 2000
        rng = np.random.default_rng(11)
        eps = rng.standard_normal((n, 2))
        z = mean + np.exp(log_var / 2) * eps
        x_hat = model.decode(Tensor(z)).data.reshape(n, -1)
        sigma = model.config.likelihood_sigma
        recon = -((x.reshape(1, -1) - x_hat) ** 2).sum(axis=1) / (
            2 * sigma**2
        ) - 0.5 * 2 * np.log(2 * np.pi * sigma**2)
        kl = float(kl_to_standard_normal(mean, log_var).data)
        estimates = recon - kl
        se = estimates.std(ddof=1) / np.sqrt(n)
        assert estimates.mean() <= log_p + 3 * se

    def test_gradcheck_tiny_model_one_variant(self):
        model = build_model(tiny_config("mvn"), seed=6)
        x = np.random.default_rng(4).uniform(0.1, 0.9, (2, 1, 4, 4))
        eps = np.random.default_rng(5).standard_normal(model.prior_latent_shape(2))

        def loss():
            return -model.elbo(x, epsilon=eps).elbo

        err = finite_difference_check(
            loss,
            list(model.parameters().values()),
            eps=1e-5,
            max_coords=4,
            rng=np.random.default_rng(0),
        )
        assert err < 1e-4


class TestKlInvarianceAcrossParameterizations:
    def test_mvn_with_outer_mean_equals_lowrank(self):
        cfg_lr = tiny_config("lowrank-mvn")
        cfg_mvn = tiny_config("mvn")
        model_lr = build_model(cfg_lr, seed=8)
        model_mvn = build_model(cfg_mvn, seed=8)
        # share the decoder so reconstruction paths are identical
        model_mvn.decoder = model_lr.decoder
        rng = np.random.default_rng(9)
        B, N, d = 3, cfg_lr.n_maps, cfg_lr.d
        mu, nu = rng.standard_normal((B, N, d)), rng.standard_normal((B, N, d))
        lo, lp = rng.standard_normal((B, N, d)), rng.standard_normal((B, N, d))
        eps = rng.standard_normal((B, N, d, d))
        x = rng.uniform(0, 1, (B, 1, 4, 4))
        p_lr = LowRankMvnParams(mu, nu, lo, lp)
        p_mvn = MvnFeatureMapParams(mean_matrix(mu, nu).data, lo, lp)
        s_lr = model_lr.reparameterize(p_lr, epsilon=eps)
        s_mvn = model_mvn.reparameterize(p_mvn, epsilon=eps)
        np.testing.assert_array_equal(s_lr.z.data, s_mvn.z.data)
        bd_lr = model_lr.elbo_terms(x, p_lr, s_lr)
        bd_mvn = model_mvn.elbo_terms(x, p_mvn, s_mvn)
        assert float(bd_lr.elbo.data) == pytest.approx(
            float(bd_mvn.elbo.data), rel=1e-14
        )
        assert float(bd_lr.kl.data) == pytest.approx(float(bd_mvn.kl.data), rel=1e-14)


class TestCheckpoints:
    def test_round_trip_preserves_params_and_config(self, tmp_path):
        model = build_model(tiny_config("lowrank-mvn"), seed=10)
        path = tmp_path / "model.ckpt"
        save_checkpoint(model, path, extra_header={"epoch": 5})
        clone, header, extras = load_checkpoint(path)
        assert header["epoch"] == "5"
        assert clone.config == model.config
        for (na, pa), (nb, pb) in zip(
            model.parameters().items(), clone.parameters().items()
        ):
            assert na == nb
            np.testing.assert_array_equal(pa.data, pb.data)

    def test_magic_is_versioned(self):
        model = build_model(tiny_config("original"), seed=0)
        blob = save_checkpoint_bytes(model)
        assert blob.startswith(b"SVAE1\n")

    def test_corrupt_magic_rejected(self):
        model = build_model(tiny_config("original"), seed=0)
        blob = save_checkpoint_bytes(model)
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint_bytes(b"BOGUS" + blob[5:])

    def test_truncated_blob_rejected(self):
        model = build_model(tiny_config("original"), seed=0)
        blob = save_checkpoint_bytes(model)
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint_bytes(blob[:-16])

    def test_adam_state_round_trips(self):
        model = build_model(tiny_config("mvn"), seed=1)
        extras_in = {"adam.m.enc.0.weight": np.ones((4, 1, 3, 3))}
        blob = save_checkpoint_bytes(model, extra_arrays=extras_in)
        _, _, extras = load_checkpoint_bytes(blob)
        np.testing.assert_array_equal(
            extras["adam.m.enc.0.weight"], extras_in["adam.m.enc.0.weight"]
        )
