"""Built-in oracle suites behind the `check` CLI subcommand.

Each suite re-derives an expected result through an independent route
(dense Kronecker products, Monte-Carlo estimates, finite differences,
inner-product adjointness, direct kernel summation) and compares the
production path against it.
"""

from __future__ import annotations

import numpy as np

from . import latent
from .autodiff import Tensor, conv2d, conv2d_transpose, finite_difference_check
from .evaluation import parzen_log_densities
from .models import build_model, tiny_config

__all__ = ["run_all", "SUITES"]


def _check_kron_diag():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        d = int(rng.integers(1, 17))
        a = rng.uniform(0.1, 3.0, d)
        b = rng.uniform(0.1, 3.0, d)
        dense = np.kron(np.diag(a), np.diag(b)).diagonal()
        got = latent.kron_diag(a, b).data
        worst = max(worst, float(np.abs(dense - got).max()))
    return worst < 1e-12, f"max abs error {worst:.2e} over 200 random pairs"


def _check_param_counts():
    expected = {
        ("original",): 162,
        ("naive",): 1152,
        ("mvn",): 960,
        ("lowrank-mvn",): 768,
    }
    got = (
        latent.param_count("original", C=81),
        latent.param_count("naive", d=3, N=64),
        latent.param_count("mvn", d=3, N=64),
        latent.param_count("lowrank-mvn", d=3, N=64),
    )
    ok = got == (162, 1152, 960, 768)
    return ok, f"head widths {got}"


def _check_kl_monte_carlo():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(3):
        means = rng.uniform(-1.5, 1.5, 16)
        log_vars = rng.uniform(-1.0, 1.0, 16)
        closed = float(latent.kl_to_standard_normal(means, log_vars).data)
        z = means + np.exp(log_vars / 2.0) * rng.standard_normal((200_000, 16))
        log_q = (
            -0.5 * ((z - means) ** 2 / np.exp(log_vars) + log_vars + np.log(2 * np.pi))
        ).sum(axis=1)
        log_p = (-0.5 * (z**2 + np.log(2 * np.pi))).sum(axis=1)
        mc = float((log_q - log_p).mean())
        worst = max(worst, abs(mc - closed) / max(closed, 1e-9))
    return worst < 0.02, f"max relative gap closed-form vs MC {worst:.3%}"


def _check_sampler_moments():
    rng = np.random.default_rng(11)
    d, n = 3, 50_000
    p = latent.MvnFeatureMapParams(
        mean_matrix=rng.uniform(-1, 1, (d, d)),
        log_diag_omega=rng.uniform(-0.5, 0.5, d),
        log_diag_psi=rng.uniform(-0.5, 0.5, d),
    )
    eps = rng.standard_normal((n, d, d))
    batched = latent.MvnFeatureMapParams(
        mean_matrix=np.broadcast_to(p.mean_matrix.data, (n, d, d)),
        log_diag_omega=np.broadcast_to(p.log_diag_omega.data, (n, d)),
        log_diag_psi=np.broadcast_to(p.log_diag_psi.data, (n, d)),
    )
    z = latent.sample_mvn(batched, epsilon=eps).z.data
    want_var = latent.kron_diag(
        p.log_diag_omega.exp(), p.log_diag_psi.exp()
    ).data.reshape(d, d)
    mean_err = np.abs(z.mean(axis=0) - p.mean_matrix.data).max()
    var_err = np.abs(z.var(axis=0) / want_var - 1.0).max()
    ok = mean_err < 5 * np.sqrt(want_var.max() / n) * 1.5 and var_err < 0.05
    return ok, f"mean err {mean_err:.4f}, relative variance err {var_err:.3%}"


def _check_reduction_d1():
    rng = np.random.default_rng(13)
    C = 6
    mean = rng.uniform(-1, 1, C)
    log_var = rng.uniform(-1, 1, C)
    eps = rng.standard_normal(C)
    z_orig = latent.sample_diag_gaussian(
        latent.DiagonalGaussianParams(mean, log_var), epsilon=eps
    ).z.data
    z_mvn = latent.sample_mvn(
        latent.MvnFeatureMapParams(
            mean_matrix=mean.reshape(C, 1, 1),
            log_diag_omega=log_var.reshape(C, 1),
            log_diag_psi=np.zeros((C, 1)),
        ),
        epsilon=eps.reshape(C, 1, 1),
    ).z.data.reshape(C)
    z_lr = latent.sample_lowrank_mvn(
        latent.LowRankMvnParams(
            mu=mean.reshape(C, 1),
            nu=np.ones((C, 1)),
            log_diag_omega=log_var.reshape(C, 1),
            log_diag_psi=np.zeros((C, 1)),
        ),
        epsilon=eps.reshape(C, 1, 1),
    ).z.data.reshape(C)
    gap = max(np.abs(z_orig - z_mvn).max(), np.abs(z_orig - z_lr).max())
    return gap < 1e-12, f"max |z difference| {gap:.2e} at d=1"


def _check_conv_adjointness():
    rng = np.random.default_rng(17)
    worst = 0.0
    # exact-fit sizes: (H + 2*pad - k) divisible by stride, as in the decoders
    for stride, pad, k, size in ((1, 0, 3, 9), (2, 1, 3, 9), (3, 0, 4, 10), (2, 0, 2, 10)):
        u = Tensor(rng.standard_normal((2, 3, size, size)))
        kernel = Tensor(rng.standard_normal((4, 3, k, k)))
        cu = conv2d(u, kernel, stride=stride, padding=pad)
        v = Tensor(rng.standard_normal(cu.shape))
        tv = conv2d_transpose(v, kernel, stride=stride, padding=pad)
        lhs = float((cu.data * v.data).sum())
        rhs = float((u.data * tv.data).sum())
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), 1.0))
    return worst < 1e-10, f"max adjointness defect {worst:.2e}"


_FAULT = {"inject": False}


def _check_gradients():
    rng = np.random.default_rng(19)
    x = rng.uniform(0.05, 0.95, (2, 1, 4, 4))
    worst = 0.0
    for name in ("original", "naive", "mvn", "lowrank-mvn"):
        model = build_model(tiny_config(name), seed=23)
        eps = rng.standard_normal(model.prior_latent_shape(2))
        params = list(model.parameters().values())

        def loss():
            return -model.elbo(x, epsilon=eps).elbo

        err = finite_difference_check(
            loss, params, eps=1e-5, max_coords=4, rng=np.random.default_rng(3)
        )
        if _FAULT["inject"]:
            err += 1.0  # negative-control hook: pretend the tape was wrong
        worst = max(worst, err)
    return worst < 1e-4, f"max relative gradient error {worst:.2e}"


def _check_parzen_logsumexp():
    rng = np.random.default_rng(29)
    samples = rng.standard_normal((80, 5))
    points = rng.standard_normal((15, 5))
    sigma = 0.7
    direct = np.empty(points.shape[0])
    for i, x in enumerate(points):
        kernels = np.exp(-((x - samples) ** 2).sum(axis=1) / (2 * sigma**2))
        direct[i] = np.log(kernels.mean()) - 0.5 * 5 * np.log(2 * np.pi * sigma**2)
    got = parzen_log_densities(points, samples, sigma)
    gap = float(np.abs(direct - got).max())
    return gap < 1e-10, f"max |logsumexp - direct| {gap:.2e}"


SUITES = (
    ("kronecker-diagonal", _check_kron_diag),
    ("encoder-output-counts", _check_param_counts),
    ("kl-closed-form-vs-monte-carlo", _check_kl_monte_carlo),
    ("sampler-moments", _check_sampler_moments),
    ("d1-reduction-to-original", _check_reduction_d1),
    ("conv-adjointness", _check_conv_adjointness),
    ("elbo-gradient-finite-difference", _check_gradients),
    ("parzen-logsumexp-vs-direct", _check_parzen_logsumexp),
)


def run_all(inject_gradient_fault=False):
    """Run every suite; returns (all_ok, rows of (name, ok, detail))."""
    _FAULT["inject"] = bool(inject_gradient_fault)
    rows = []
    try:
        for name, fn in SUITES:
            try:
                ok, detail = fn()
            except Exception as exc:  # a crashed suite is a failed suite
                ok, detail = False, f"raised {type(exc).__name__}: {exc}"
            rows.append((name, bool(ok), detail))
    finally:
        _FAULT["inject"] = False
    return all(ok for _, ok, _ in rows), rows
