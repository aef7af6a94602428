"""Training the inverse generator against a frozen generator, plus the
three baseline inversion routes used for comparison.

The main route treats the pre-trained generator as the decoder of an
autoencoder: sample latents, render them, encode with the inverse
generator, re-render, and minimize the cross-entropy between the two
renders, updating only the encoder.  The generator always runs in
inference mode here (running batch-norm statistics), so a single image
inverts the same way regardless of what else is in the batch.

Baselines: per-sample gradient descent on the latent itself, direct latent
regression (minimize ||z - E(G(z))||^2), and a jointly trained adversarial
encoder/generator/discriminator triple over (image, latent) pairs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericalError, ShapeError, ValidationError
from .hashing import dhash, hash_similarity
from .models import (ArchitectureConfig, BiganDiscriminatorNet, GeneratorNet,
                     InverseGeneratorNet, sample_prior)
from .optim import make_optimizer
from .rng import Rng

log = logging.getLogger(__name__)


def _require_matching(gen: GeneratorNet, cfg: ArchitectureConfig) -> None:
    if gen.cfg != cfg:
        raise ValidationError(f"generator config {gen.cfg.to_dict()} does not match "
                              f"requested config {cfg.to_dict()}")


def _require_frozen(gen: GeneratorNet) -> None:
    if any(p.requires_grad for _, p in gen.named_params()):
        raise ValidationError("generator must be frozen (call .freeze()) before encoder training")


@dataclass
class InversionTrainState:
    encoder: InverseGeneratorNet
    optimizer: object
    iteration: int = 0
    history: list = field(default_factory=list)  # (iteration, loss)


def train_inverse_generator(gen: GeneratorNet, cfg: ArchitectureConfig, iterations: int,
                            seed: int, batch_size: int = 64, learning_rate: float = 2e-4,
                            beta1: float = 0.5, beta2: float = 0.999, optimizer: str = "adam",
                            log_every: int = 100, diagnostic=None) -> InversionTrainState:
    """Autoencoder route: minimize BCE(G(z), G(IG(G(z)))), updating only the encoder."""
    _require_matching(gen, cfg)
    _require_frozen(gen)
    if iterations < 1:
        raise ValidationError(f"iterations must be >= 1, got {iterations}")
    root = Rng(seed)
    enc = InverseGeneratorNet(cfg, root.derive(1))
    z_stream = root.derive(2)
    opt = make_optimizer(optimizer, enc.trainable_params(), learning_rate, beta1, beta2)
    state = InversionTrainState(enc, opt)

    for it in range(iterations):
        z = sample_prior(z_stream, batch_size, cfg.latent_dim)
        x = gen(z, train=False)             # constant: generator is frozen
        z_rec = enc(x, train=True)
        x_rec = gen(z_rec, train=False)     # gradient flows through the frozen decoder
        loss = ad.bce_loss(x, x_rec)
        loss.backward()
        opt.step()
        opt.zero_grad()

        lv = loss.item()
        if not np.isfinite(lv):
            if diagnostic is not None:
                diagnostic(state, it)
            raise NumericalError(f"reconstruction loss became non-finite at iteration {it}")
        state.history.append((it, lv))
        state.iteration = it + 1
        if log_every and (it + 1) % log_every == 0:
            log.info("ig iter %d/%d  recon_loss=%.4f", it + 1, iterations, lv)
    return state


def reconstruct(gen: GeneratorNet, enc: InverseGeneratorNet,
                x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Encode an image (or batch) and decode it back: returns (z', x')."""
    single = x.ndim == 3
    xb = x[None] if single else x
    expect = (gen.cfg.image_size, gen.cfg.image_size, gen.cfg.channels)
    if xb.ndim != 4 or xb.shape[1:] != expect:
        raise ShapeError(f"reconstruct: image {x.shape} vs model resolution {expect}")
    z = enc(Tensor(np.asarray(xb, np.float32)), train=False)
    x_rec = gen(z, train=False)
    if single:
        return z.data[0], x_rec.data[0]
    return z.data, x_rec.data


def encode_images(enc: InverseGeneratorNet, images: np.ndarray, batch: int = 64) -> np.ndarray:
    """Inference-mode latents for an (N,H,W,C) stack, in chunks."""
    out = []
    for i in range(0, len(images), batch):
        out.append(enc(Tensor(np.asarray(images[i : i + batch], np.float32)), train=False).data)
    return np.concatenate(out)


@dataclass
class GradientInversionResult:
    z: np.ndarray             # (B, latent_dim), clipped to [-1, 1]
    losses: np.ndarray        # (iterations + 1, B) per-sample traces
    iterations: int
    diverged: bool = False


def _per_sample_bce(target: np.ndarray, pred: np.ndarray) -> np.ndarray:
    eps = np.float32(ad.BCE_EPS)
    pc = np.clip(pred, eps, 1 - eps)
    axes = tuple(range(1, target.ndim))
    return np.mean(-target * np.log(pc) - (1 - target) * np.log1p(-pc), axis=axes)


def gradient_descent_invert(gen: GeneratorNet, x: np.ndarray, steps: int = 500,
                            alpha: float = 0.1, seed: int = 0) -> GradientInversionResult:
    """Recover latents by descending the reconstruction cross-entropy in z.

    The update is per-sample (independent of batch size); z is clipped to
    the prior's support after every step.
    """
    single = x.ndim == 3
    xb = np.asarray(x[None] if single else x, np.float32)
    expect = (gen.cfg.image_size, gen.cfg.image_size, gen.cfg.channels)
    if xb.shape[1:] != expect:
        raise ShapeError(f"gradient_descent_invert: image {x.shape} vs model resolution {expect}")
    if steps < 0:
        raise ValidationError(f"steps must be >= 0, got {steps}")
    b = len(xb)
    target = Tensor(xb)
    z = sample_prior(Rng(seed), b, gen.cfg.latent_dim)
    z.requires_grad = True
    traces = [_per_sample_bce(xb, gen(z, train=False).data)]
    used, diverged = 0, False
    for _ in range(steps):
        pred = gen(z, train=False)
        loss = ad.bce_loss(target, pred)
        loss.backward()
        grad = z.grad * np.float32(b)  # batch-mean gradient -> per-sample-mean gradient
        z.grad = None
        if not np.all(np.isfinite(grad)):
            diverged = True
            log.warning("gradient_descent_invert: non-finite gradient at step %d, stopping", used)
            break
        z.data = np.clip(z.data - np.float32(alpha) * grad, -1.0, 1.0)
        used += 1
        traces.append(_per_sample_bce(xb, gen(z, train=False).data))
    return GradientInversionResult(z=z.data, losses=np.stack(traces), iterations=used,
                                   diverged=diverged)


def train_direct_regressor(gen: GeneratorNet, cfg: ArchitectureConfig, iterations: int,
                           seed: int, batch_size: int = 64, learning_rate: float = 2e-4,
                           beta1: float = 0.5, beta2: float = 0.999, optimizer: str = "adam",
                           log_every: int = 100, diagnostic=None) -> InversionTrainState:
    """Label-free latent regression: minimize ||z - E(G(z))||^2 with G frozen."""
    _require_matching(gen, cfg)
    _require_frozen(gen)
    if iterations < 1:
        raise ValidationError(f"iterations must be >= 1, got {iterations}")
    root = Rng(seed)
    enc = InverseGeneratorNet(cfg, root.derive(1))
    z_stream = root.derive(2)
    opt = make_optimizer(optimizer, enc.trainable_params(), learning_rate, beta1, beta2)
    state = InversionTrainState(enc, opt)

    for it in range(iterations):
        z = sample_prior(z_stream, batch_size, cfg.latent_dim)
        x = gen(z, train=False)
        z_hat = enc(x, train=True)
        loss = ad.mse_loss(z, z_hat)
        loss.backward()
        opt.step()
        opt.zero_grad()

        lv = loss.item()
        if not np.isfinite(lv):
            if diagnostic is not None:
                diagnostic(state, it)
            raise NumericalError(f"regression loss became non-finite at iteration {it}")
        state.history.append((it, lv))
        state.iteration = it + 1
        if log_every and (it + 1) % log_every == 0:
            log.info("direct iter %d/%d  mse=%.4f", it + 1, iterations, lv)
    return state


@dataclass
class BiganTrainState:
    encoder: InverseGeneratorNet
    generator: GeneratorNet
    discriminator: BiganDiscriminatorNet
    iteration: int = 0
    history: list = field(default_factory=list)  # (iteration, d_loss, ge_loss)


def train_bigan(dataset: np.ndarray, cfg: ArchitectureConfig, iterations: int, seed: int,
                batch_size: int = 64, learning_rate: float = 2e-4, beta1: float = 0.5,
                beta2: float = 0.999, optimizer: str = "adam", log_every: int = 100,
                diagnostic=None) -> BiganTrainState:
    """Jointly train encoder, generator, and pair discriminator.

    The discriminator pulls (x, E(x)) toward "real" and (G(z), z) toward
    "fake"; the encoder/generator pair takes the non-saturating counter-step.
    This route cannot reuse a pre-trained generator, so it trains its own.
    """
    if dataset.ndim != 4 or len(dataset) == 0:
        raise ValidationError("dataset must be a nonempty (N,H,W,C) array")
    if dataset.shape[1:] != (cfg.image_size, cfg.image_size, cfg.channels):
        raise ShapeError(f"dataset images {dataset.shape[1:]} do not match config "
                         f"({cfg.image_size}, {cfg.image_size}, {cfg.channels})")
    if iterations < 1:
        raise ValidationError(f"iterations must be >= 1, got {iterations}")

    from .gan import _BatchStream  # same deterministic batch plumbing

    root = Rng(seed)
    gen = GeneratorNet(cfg, root.derive(1))
    enc = InverseGeneratorNet(cfg, root.derive(2))
    disc = BiganDiscriminatorNet(cfg, root.derive(3))
    batches = _BatchStream(np.asarray(dataset, np.float32), batch_size, root.derive(4))
    z_stream = root.derive(5)
    d_opt = make_optimizer(optimizer, disc.trainable_params(), learning_rate, beta1, beta2)
    ge_opt = make_optimizer(optimizer, gen.trainable_params() + enc.trainable_params(),
                            learning_rate, beta1, beta2)
    state = BiganTrainState(enc, gen, disc)

    for it in range(iterations):
        x = Tensor(batches.next())
        z = sample_prior(z_stream, batch_size, cfg.latent_dim)

        # discriminator step against detached encoder/generator outputs
        ex = enc(x, train=True).detach()
        gz = gen(z, train=True).detach()
        p_real = disc(x, ex, train=True)
        p_fake = disc(gz, z, train=True)
        d_loss = (ad.bce_loss(Tensor(np.ones_like(p_real.data)), p_real)
                  + ad.bce_loss(Tensor(np.zeros_like(p_fake.data)), p_fake))
        d_loss.backward()
        d_opt.step()
        d_opt.zero_grad()

        # encoder + generator step (non-saturating)
        ex2 = enc(x, train=True)
        z_ge = sample_prior(z_stream, batch_size, cfg.latent_dim)
        gz2 = gen(z_ge, train=True)
        p_real2 = disc(x, ex2, train=True)
        p_fake2 = disc(gz2, z_ge, train=True)
        ge_loss = (ad.bce_loss(Tensor(np.zeros_like(p_real2.data)), p_real2)
                   + ad.bce_loss(Tensor(np.ones_like(p_fake2.data)), p_fake2))
        ge_loss.backward()
        ge_opt.step()
        ge_opt.zero_grad()
        d_opt.zero_grad()

        dl, gl = d_loss.item(), ge_loss.item()
        if not (np.isfinite(dl) and np.isfinite(gl)):
            if diagnostic is not None:
                diagnostic(state, it)
            raise NumericalError(f"bigan loss became non-finite at iteration {it}")
        state.history.append((it, dl, gl))
        state.iteration = it + 1
        if log_every and (it + 1) % log_every == 0:
            log.info("bigan iter %d/%d  d_loss=%.4f  ge_loss=%.4f", it + 1, iterations, dl, gl)
    return state


def evaluate_reconstruction(gen: GeneratorNet, enc: InverseGeneratorNet, n_samples: int,
                            seed: int, batch: int = 64) -> float:
    """Mean perceptual-hash similarity between generated samples and their
    round trips through the encoder and the matching generator."""
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")
    rng = Rng(seed)
    sims = []
    done = 0
    while done < n_samples:
        m = min(batch, n_samples - done)
        z = sample_prior(rng, m, gen.cfg.latent_dim)
        x = gen(z, train=False).data
        z_rec = enc(Tensor(x), train=False)
        x_rec = gen(z_rec, train=False).data
        sims.extend(hash_similarity(dhash(a), dhash(b)) for a, b in zip(x, x_rec))
        done += m
    return float(np.mean(sims))
