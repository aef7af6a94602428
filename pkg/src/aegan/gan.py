"""Adversarial training of the generator / discriminator pair.

Alternating single steps: the discriminator sees a real batch against a
detached fake batch, then the generator takes a non-saturating step
(-log D(G(z))).  Real images live in [0, 1], matching the generator's
sigmoid output.  Everything is driven by derived seed streams, so a run is
a pure function of (dataset, config, iterations, seed).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import NumericalError, ShapeError, ValidationError
from .models import ArchitectureConfig, DiscriminatorNet, GeneratorNet, sample_prior
from .optim import make_optimizer
from .rng import Rng

log = logging.getLogger(__name__)


def discriminator_loss(disc: DiscriminatorNet, real_batch: Tensor, fake_batch: Tensor,
                       train: bool = True) -> Tensor:
    """-mean[log D(real)] - mean[log(1 - D(fake))], logs clamped."""
    if real_batch.shape[0] != fake_batch.shape[0]:
        raise ShapeError(f"discriminator_loss: batch sizes differ: "
                         f"{real_batch.shape} vs {fake_batch.shape}")
    p_real = disc(real_batch, train)
    p_fake = disc(fake_batch, train)
    ones = Tensor(np.ones_like(p_real.data))
    zeros = Tensor(np.zeros_like(p_fake.data))
    return ad.bce_loss(ones, p_real) + ad.bce_loss(zeros, p_fake)


def generator_loss(disc: DiscriminatorNet, fake_batch: Tensor, train: bool = True) -> Tensor:
    """Non-saturating form: -mean[log D(G(z))]."""
    p_fake = disc(fake_batch, train)
    return ad.bce_loss(Tensor(np.ones_like(p_fake.data)), p_fake)


@dataclass
class GanTrainState:
    generator: GeneratorNet
    discriminator: DiscriminatorNet
    g_opt: object
    d_opt: object
    iteration: int = 0
    history: list = field(default_factory=list)  # (iteration, d_loss, g_loss)


class _BatchStream:
    """Seed-deterministic epoch shuffling over a fixed array of images."""

    def __init__(self, images: np.ndarray, batch_size: int, rng: Rng):
        self.images = images
        self.batch_size = batch_size
        self.rng = rng
        self._order = rng.permutation(len(images))
        self._pos = 0

    def next(self) -> np.ndarray:
        take = []
        need = self.batch_size
        while need:
            if self._pos == len(self._order):
                self._order = self.rng.permutation(len(self.images))
                self._pos = 0
            n = min(need, len(self._order) - self._pos)
            take.append(self._order[self._pos : self._pos + n])
            self._pos += n
            need -= n
        return self.images[np.concatenate(take)]


def _check_finite(state, values: dict, iteration: int, diagnostic=None):
    for name, v in values.items():
        if not np.isfinite(v):
            if diagnostic is not None:
                diagnostic(state, iteration)
            raise NumericalError(f"{name} became non-finite ({v}) at iteration {iteration}")


def train_dcgan(dataset: np.ndarray, cfg: ArchitectureConfig, iterations: int, seed: int,
                batch_size: int = 64, learning_rate: float = 2e-4, beta1: float = 0.5,
                beta2: float = 0.999, optimizer: str = "adam", log_every: int = 100,
                diagnostic=None) -> GanTrainState:
    """Train G and D from scratch on images in [0, 1] at cfg resolution."""
    if dataset.ndim != 4 or len(dataset) == 0:
        raise ValidationError(f"dataset must be a nonempty (N,H,W,C) array, got shape "
                              f"{getattr(dataset, 'shape', None)}")
    if dataset.shape[1:] != (cfg.image_size, cfg.image_size, cfg.channels):
        raise ShapeError(f"dataset images {dataset.shape[1:]} do not match config "
                         f"({cfg.image_size}, {cfg.image_size}, {cfg.channels})")
    if iterations < 1:
        raise ValidationError(f"iterations must be >= 1, got {iterations}")

    root = Rng(seed)
    gen = GeneratorNet(cfg, root.derive(1))
    disc = DiscriminatorNet(cfg, root.derive(2))
    batches = _BatchStream(np.asarray(dataset, np.float32), batch_size, root.derive(3))
    z_stream = root.derive(4)
    g_opt = make_optimizer(optimizer, gen.trainable_params(), learning_rate, beta1, beta2)
    d_opt = make_optimizer(optimizer, disc.trainable_params(), learning_rate, beta1, beta2)
    state = GanTrainState(gen, disc, g_opt, d_opt)

    for it in range(iterations):
        # discriminator step: fake batch detached so no gradient reaches G
        real = Tensor(batches.next())
        fake = gen(sample_prior(z_stream, batch_size, cfg.latent_dim), train=True).detach()
        d_loss = discriminator_loss(disc, real, fake, train=True)
        d_loss.backward()
        d_opt.step()
        d_opt.zero_grad()

        # generator step: gradient flows through D into G, only G is updated
        fake2 = gen(sample_prior(z_stream, batch_size, cfg.latent_dim), train=True)
        g_loss = generator_loss(disc, fake2, train=True)
        g_loss.backward()
        g_opt.step()
        g_opt.zero_grad()
        d_opt.zero_grad()

        dl, gl = d_loss.item(), g_loss.item()
        _check_finite(state, {"d_loss": dl, "g_loss": gl}, it, diagnostic)
        state.history.append((it, dl, gl))
        state.iteration = it + 1
        if log_every and (it + 1) % log_every == 0:
            log.info("gan iter %d/%d  d_loss=%.4f  g_loss=%.4f", it + 1, iterations, dl, gl)
    return state
