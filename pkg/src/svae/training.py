"""Seeded training loop (Adam), checkpointing, and the timing harness.

Training maximizes the variational lower bound by gradient ascent
(descent on its negation). Full runs are bit-reproducible from
(seed, config, data): every noise draw and every shuffle is a pure
function of those inputs, so resuming from a checkpoint at an epoch
boundary continues the identical trajectory.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, iterate_batches
from .errors import ContractError, NumericError
from .models import Model, save_checkpoint
from .latent import VariantKind

__all__ = [
    "TrainConfig",
    "EpochReport",
    "AdamState",
    "adam_step",
    "train",
    "bench",
    "BenchRow",
    "epoch_rng",
    "format_generation_line",
    "report_log_line",
]


@dataclass
class TrainConfig:
    epochs: int = 3
    batch_size: int = 64
    learning_rate: float = 1e-3
    adam_betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 = final checkpoint only

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ContractError(f"learning_rate must be positive, got {self.learning_rate}")
        b1, b2 = self.adam_betas
        if not (0.0 <= b1 < 1.0 and 0.0 <= b2 < 1.0):
            raise ContractError(f"adam betas must lie in [0, 1), got {self.adam_betas}")


@dataclass
class EpochReport:
    """Per-epoch training statistics; mean_elbo == mean_recon - mean_kl."""

    epoch: int
    mean_elbo: float
    mean_recon: float
    mean_kl: float
    wall_seconds: float


def report_log_line(report: EpochReport) -> str:
    """Deterministic log record: timing is reported elsewhere on purpose so
    that fixed-seed runs produce bit-identical logs."""
    return json.dumps(
        {
            "epoch": report.epoch,
            "mean_elbo": report.mean_elbo,
            "mean_recon": report.mean_recon,
            "mean_kl": report.mean_kl,
        },
        sort_keys=True,
    )


# ---------------------------------------------------------------------------
# Adam


@dataclass
class AdamState:
    """Bias-corrected first/second moment accumulators, keyed like params."""

    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, cfg: TrainConfig):
    """One Adam update, in place on `params` data buffers."""
    b1, b2 = cfg.adam_betas
    state.t += 1
    t = state.t
    for name, p in params.items():
        g = grads[name]
        if g is None:
            g = np.zeros_like(p.data)
        if not np.isfinite(g).all():
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.m[name] = m
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.data -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


# ---------------------------------------------------------------------------
# training loop


def epoch_rng(seed, epoch):
    """Noise stream for one epoch; a pure function of (seed, epoch)."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, 0x5EED, int(epoch)])


def train(
    model: Model,
    dataset: Dataset,
    cfg: TrainConfig,
    out_dir=None,
    log_path=None,
    start_epoch=0,
    adam_state=None,
    on_epoch_end=None,
):
    """Run `cfg.epochs` epochs of ELBO ascent; returns the EpochReports.

    Writes checkpoints under `out_dir` when given (svae_final.ckpt plus
    svae_epoch_%03d.ckpt every `checkpoint_every` epochs) and appends one
    deterministic record per epoch to `log_path`. On a non-finite loss the
    run aborts with NumericError after writing svae_last_good.ckpt from the
    last completed epoch.
    """
    params = model.parameters()
    state = adam_state if adam_state is not None else AdamState()
    reports = []
    log_fh = open(log_path, "a") if log_path else None

    def snapshot():
        return {name: p.data.copy() for name, p in params.items()}

    def save(path_name, epoch):
        if out_dir is None:
            return
        save_checkpoint(
            model,
            f"{out_dir}/{path_name}",
            extra_arrays=_adam_arrays(state),
            extra_header={"epoch": epoch, "adam_t": state.t},
        )

    last_good = snapshot()
    last_good_epoch = start_epoch
    try:
        for epoch in range(start_epoch, start_epoch + cfg.epochs):
            t0 = time.perf_counter()
            rng = epoch_rng(cfg.seed, epoch)
            recon_sum = kl_sum = 0.0
            n_batches = 0
            try:
                for xb in iterate_batches(
                    dataset, cfg.batch_size, cfg.seed, epoch, drop_last=True
                ):
                    model.zero_grad()
                    breakdown = model.elbo(xb, rng=rng)
                    (-breakdown.elbo).backward()
                    grads = {name: p.grad for name, p in params.items()}
                    adam_step(params, grads, state, cfg)
                    recon_sum += breakdown.reconstruction.item()
                    kl_sum += breakdown.kl.item()
                    n_batches += 1
            except NumericError:
                for name, p in params.items():
                    p.data = last_good[name]
                save("svae_last_good.ckpt", last_good_epoch)
                raise
            if n_batches == 0:
                raise ContractError(
                    f"batch_size {cfg.batch_size} exceeds dataset size {len(dataset)}"
                )
            wall = time.perf_counter() - t0
            mean_recon = recon_sum / n_batches
            mean_kl = kl_sum / n_batches
            report = EpochReport(
                epoch=epoch,
                mean_elbo=mean_recon - mean_kl,
                mean_recon=mean_recon,
                mean_kl=mean_kl,
                wall_seconds=wall,
            )
            reports.append(report)
            if log_fh:
                log_fh.write(report_log_line(report) + "\n")
                log_fh.flush()
            last_good = snapshot()
            last_good_epoch = epoch + 1
            if cfg.checkpoint_every and (epoch + 1 - start_epoch) % cfg.checkpoint_every == 0:
                save(f"svae_epoch_{epoch + 1:03d}.ckpt", epoch + 1)
            if on_epoch_end is not None:
                on_epoch_end(epoch, report)
        save("svae_final.ckpt", start_epoch + cfg.epochs)
    finally:
        if log_fh:
            log_fh.close()
    return reports


def _adam_arrays(state: AdamState):
    out = {}
    for name, arr in state.m.items():
        out[f"adam.m.{name}"] = arr
    for name, arr in state.v.items():
        out[f"adam.v.{name}"] = arr
    return out


def adam_state_from_arrays(arrays: dict, t: int) -> AdamState:
    state = AdamState(t=int(t))
    for name, arr in arrays.items():
        if name.startswith("adam.m."):
            state.m[name[len("adam.m.") :]] = np.array(arr)
        elif name.startswith("adam.v."):
            state.v[name[len("adam.v.") :]] = np.array(arr)
    return state


# ---------------------------------------------------------------------------
# timing harness


@dataclass
class BenchRow:
    name: str
    head_width: int
    train_epoch_seconds: float
    generate_seconds: float
    n_generated: int


def format_generation_line(name, n, seconds) -> str:
    return f"generation {name}: {seconds:.4f}s for {n} images"


def bench(models: dict, dataset: Dataset, n_generate, cfg: TrainConfig, repeats=2):
    """Time one training epoch and `n_generate` decoder-only generations.

    `models` maps display name -> Model; decoders are expected to be of
    matched scale so the comparison isolates the encoder head and sampler.
    Measurements are interleaved round-robin across models and the minimum
    over `repeats` passes is reported (generation gets at least five
    passes since each is cheap), which damps scheduler and clock drift.
    Generation draws from the prior and never touches the encoder.
    """
    reps = max(1, repeats)
    train_best = {name: np.inf for name in models}
    for rep in range(reps):
        for name, model in models.items():
            rep_cfg = TrainConfig(
                epochs=1,
                batch_size=cfg.batch_size,
                learning_rate=cfg.learning_rate,
                adam_betas=cfg.adam_betas,
                adam_eps=cfg.adam_eps,
                seed=cfg.seed,
                checkpoint_every=0,
            )
            reports = train(model, dataset, rep_cfg, start_epoch=rep)
            train_best[name] = min(train_best[name], reports[0].wall_seconds)
    gen_best = {name: np.inf for name in models}
    for model in models.values():
        model.generate(min(256, n_generate), np.random.default_rng(0))  # warm-up
    for rep in range(max(reps, 5)):
        for name, model in models.items():
            gen_rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, 0xBE7C, rep])
            t0 = time.perf_counter()
            model.generate(n_generate, gen_rng)
            gen_best[name] = min(gen_best[name], time.perf_counter() - t0)
    return [
        BenchRow(
            name=name,
            head_width=model.config.head_width,
            train_epoch_seconds=train_best[name],
            generate_seconds=gen_best[name],
            n_generated=n_generate,
        )
        for name, model in models.items()
    ]


def format_bench_table(rows) -> str:
    lines = [
        f"{'model':<14} {'head':>6} {'train s/epoch':>14} {'generate s':>12}",
    ]
    for r in rows:
        lines.append(
            f"{r.name:<14} {r.head_width:>6} {r.train_epoch_seconds:>14.4f} {r.generate_seconds:>12.4f}"
        )
    for r in rows:
        lines.append(format_generation_line(r.name, r.n_generated, r.generate_seconds))
    return "\n".join(lines)
