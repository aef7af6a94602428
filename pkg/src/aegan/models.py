"""The four networks, built from a scalable configuration.

All four share the same ladder: stride-2 5x5 (de)convolutions that double
or halve the spatial extent, with batch normalization on every block except
the output heads.  ``image_size`` 64 gives the reference ladder
4 -> 8 -> 16 -> 32 -> 64 with widths 8f/4f/2f/f; smaller sizes keep the four
stride-2 stages and shrink the dense reshape target (image_size/16)^2 x 8f.
Sizes below 16 (floor 8) drop stages instead so tiny gradient-check
networks stay constructible.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ShapeError, ValidationError
from .rng import Rng

log = logging.getLogger(__name__)

WEIGHT_STD = 0.02  # zero-mean normal init for all dense/conv weights
BN_MOMENTUM = 0.9


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class ArchitectureConfig:
    latent_dim: int = 100
    image_size: int = 64
    channels: int = 3
    base_width: int = 64

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ValidationError(f"latent_dim must be >= 1, got {self.latent_dim}")
        if self.channels < 1:
            raise ValidationError(f"channels must be >= 1, got {self.channels}")
        if self.base_width < 1:
            raise ValidationError(f"base_width must be >= 1, got {self.base_width}")
        if not _is_pow2(self.image_size) or self.image_size < 8:
            raise ValidationError(
                f"image_size must be a power of two >= 8 (>= 16 for full ladders), got {self.image_size}")

    @property
    def stages(self) -> int:
        """Stride-2 stages: 4 for image_size >= 16, fewer only at micro sizes."""
        if self.image_size >= 16:
            return 4
        return (self.image_size // 4).bit_length() - 1

    @property
    def dense_side(self) -> int:
        """Spatial extent of the generator's dense reshape target."""
        return self.image_size >> self.stages

    @property
    def top_width(self) -> int:
        return 8 * self.base_width

    def to_dict(self) -> dict:
        return {"latent_dim": self.latent_dim, "image_size": self.image_size,
                "channels": self.channels, "base_width": self.base_width}

    @staticmethod
    def from_dict(d: dict) -> "ArchitectureConfig":
        return ArchitectureConfig(int(d["latent_dim"]), int(d["image_size"]),
                                  int(d["channels"]), int(d["base_width"]))


# ---------------------------------------------------------------------------
# layers


class Dense:
    def __init__(self, name: str, n_in: int, n_out: int, rng: Rng):
        self.name = name
        self.w = Tensor(rng.normal((n_in, n_out), std=WEIGHT_STD), requires_grad=True)
        self.b = Tensor(np.zeros(n_out, np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.dense(x, self.w, self.b)

    def named_params(self):
        return [(f"{self.name}/w", self.w), (f"{self.name}/b", self.b)]


class Conv:
    def __init__(self, name: str, c_in: int, c_out: int, rng: Rng, ksize: int = 5, stride: int = 2):
        self.name = name
        self.stride = stride
        self.k = Tensor(rng.normal((ksize, ksize, c_in, c_out), std=WEIGHT_STD), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d(x, self.k, self.stride)

    def named_params(self):
        return [(f"{self.name}/k", self.k)]


class Deconv:
    def __init__(self, name: str, c_in: int, c_out: int, rng: Rng, ksize: int = 5, stride: int = 2):
        self.name = name
        self.stride = stride
        self.k = Tensor(rng.normal((ksize, ksize, c_out, c_in), std=WEIGHT_STD), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ad.conv2d_transposed(x, self.k, self.stride)

    def named_params(self):
        return [(f"{self.name}/k", self.k)]


class BatchNorm:
    def __init__(self, name: str, channels: int):
        self.name = name
        self.gamma = Tensor(np.ones(channels, np.float32), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, np.float32), requires_grad=True)
        self.running_mean = np.zeros(channels, np.float32)
        self.running_var = np.ones(channels, np.float32)
        self.updates = 0
        self._warned = False

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if train:
            out, mu, var = ad.batchnorm_train(x, self.gamma, self.beta)
            self.running_mean = (BN_MOMENTUM * self.running_mean
                                 + (1 - BN_MOMENTUM) * mu).astype(np.float32)
            self.running_var = (BN_MOMENTUM * self.running_var
                                + (1 - BN_MOMENTUM) * var).astype(np.float32)
            self.updates += 1
            return out
        if self.updates == 0 and not self._warned:
            log.warning("%s: inference before any training step, using init stats (mean 0, var 1)",
                        self.name)
            self._warned = True
        return ad.batchnorm_infer(x, self.gamma, self.beta, self.running_mean, self.running_var)

    def named_params(self):
        return [(f"{self.name}/gamma", self.gamma), (f"{self.name}/beta", self.beta)]

    def named_state(self):
        return [(f"{self.name}/running_mean", self.running_mean),
                (f"{self.name}/running_var", self.running_var),
                (f"{self.name}/updates", np.asarray(self.updates, np.int64))]

    def load_state(self, arrays: dict, prefix: str = ""):
        self.running_mean = np.asarray(arrays[f"{prefix}{self.name}/running_mean"], np.float32)
        self.running_var = np.asarray(arrays[f"{prefix}{self.name}/running_var"], np.float32)
        self.updates = int(arrays[f"{prefix}{self.name}/updates"])


# ---------------------------------------------------------------------------
# networks


class Network:
    """Common parameter bookkeeping for the concrete networks."""

    kind = "network"

    def __init__(self, cfg: ArchitectureConfig):
        self.cfg = cfg
        self._param_layers: list = []
        self._bn_layers: list[BatchNorm] = []

    def named_params(self) -> list[tuple[str, Tensor]]:
        out = []
        for layer in self._param_layers:
            out.extend(layer.named_params())
        return out

    def named_state(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for bn in self._bn_layers:
            out.extend(bn.named_state())
        return out

    def trainable_params(self) -> list[Tensor]:
        return [p for _, p in self.named_params() if p.requires_grad]

    def param_count(self) -> int:
        return sum(p.data.size for _, p in self.named_params())

    def freeze(self) -> "Network":
        for _, p in self.named_params():
            p.requires_grad = False
        return self

    def unfreeze(self) -> "Network":
        for _, p in self.named_params():
            p.requires_grad = True
        return self

    def named_arrays(self) -> list[tuple[str, np.ndarray]]:
        return [(n, p.data) for n, p in self.named_params()] + self.named_state()

    def fingerprint(self) -> str:
        """sha256 over all parameter and state bytes, in declaration order."""
        h = hashlib.sha256()
        for name, arr in self.named_arrays():
            h.update(name.encode())
            h.update(b"\0")
            canonical = np.ascontiguousarray(arr)
            h.update(canonical.astype(canonical.dtype.newbyteorder("<"), copy=False).tobytes())
        return h.hexdigest()

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, p in self.named_params():
            src = arrays[name]
            if src.shape != p.data.shape:
                raise ShapeError(f"{name}: checkpoint shape {src.shape} vs model {p.data.shape}")
            p.data = np.asarray(src, np.float32)
        for bn in self._bn_layers:
            bn.load_state(arrays)


class GeneratorNet(Network):
    """latent (B,L) -> image (B,S,S,C) in (0,1); dense head then deconv ladder."""

    kind = "generator"

    def __init__(self, cfg: ArchitectureConfig, rng: Rng):
        super().__init__(cfg)
        side, top = cfg.dense_side, cfg.top_width
        self.dense = Dense("dense", cfg.latent_dim, side * side * top, rng)
        self.bn_in = BatchNorm("bn_in", top)
        widths = [top >> (i + 1) for i in range(cfg.stages - 1)] + [cfg.channels]
        self.deconvs, self.bns = [], []
        c_in = top
        for i, c_out in enumerate(widths):
            self.deconvs.append(Deconv(f"deconv{i}", c_in, c_out, rng))
            self.bns.append(BatchNorm(f"bn{i}", c_out) if i < len(widths) - 1 else None)
            c_in = c_out
        self._param_layers = [self.dense, self.bn_in] + [
            l for pair in zip(self.deconvs, self.bns) for l in pair if l is not None]
        self._bn_layers = [self.bn_in] + [b for b in self.bns if b is not None]

    def __call__(self, z: Tensor, train: bool = False) -> Tensor:
        if z.data.ndim != 2 or z.data.shape[1] != self.cfg.latent_dim:
            raise ShapeError(f"generator: latent {z.data.shape} vs expected (B, {self.cfg.latent_dim})")
        side = self.cfg.dense_side
        x = self.dense(z)
        x = ad.reshape(x, (-1, side, side, self.cfg.top_width))
        x = ad.relu(self.bn_in(x, train))
        for i, deconv in enumerate(self.deconvs):
            x = deconv(x)
            if self.bns[i] is not None:
                x = ad.relu(self.bns[i](x, train))
            else:
                x = ad.sigmoid(x)
        return x


class _ConvLadder(Network):
    """Shared conv trunk of the discriminator and the inverse generator."""

    def __init__(self, cfg: ArchitectureConfig, rng: Rng, head_units: int):
        super().__init__(cfg)
        widths = [cfg.top_width >> (cfg.stages - 1 - i) for i in range(cfg.stages)]
        self.convs, self.bns = [], []
        c_in = cfg.channels
        for i, c_out in enumerate(widths):
            self.convs.append(Conv(f"conv{i}", c_in, c_out, rng))
            self.bns.append(BatchNorm(f"bn{i}", c_out))
            c_in = c_out
        side = cfg.dense_side
        self.dense = Dense("dense", side * side * cfg.top_width, head_units, rng)
        self._param_layers = [l for pair in zip(self.convs, self.bns) for l in pair] + [self.dense]
        self._bn_layers = list(self.bns)

    def _trunk(self, x: Tensor, train: bool, activation) -> Tensor:
        if x.data.ndim != 4 or x.data.shape[1:] != (self.cfg.image_size, self.cfg.image_size,
                                                    self.cfg.channels):
            raise ShapeError(f"{self.kind}: image {x.data.shape} vs expected "
                             f"(B, {self.cfg.image_size}, {self.cfg.image_size}, {self.cfg.channels})")
        for conv, bn in zip(self.convs, self.bns):
            x = activation(bn(conv(x), train))
        side = self.cfg.dense_side
        return self.dense(ad.reshape(x, (-1, side * side * self.cfg.top_width)))


class DiscriminatorNet(_ConvLadder):
    """image -> realness score in (0,1); lrelu ladder, sigmoid head."""

    kind = "discriminator"

    def __init__(self, cfg: ArchitectureConfig, rng: Rng):
        super().__init__(cfg, rng, head_units=1)

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        return ad.sigmoid(self._trunk(x, train, ad.lrelu))


class InverseGeneratorNet(_ConvLadder):
    """image -> latent (B,L) in (-1,1); relu ladder, tanh head (mirror of the generator)."""

    kind = "inverse_generator"

    def __init__(self, cfg: ArchitectureConfig, rng: Rng):
        super().__init__(cfg, rng, head_units=cfg.latent_dim)

    def __call__(self, x: Tensor, train: bool = False) -> Tensor:
        return ad.tanh(self._trunk(x, train, ad.relu))


class BiganDiscriminatorNet(Network):
    """(image, latent) pair -> realness score in (0,1).

    Three f/2f/4f conv blocks, then the latent is tiled across the spatial
    grid and channel-concatenated (4f + latent_dim channels), then 8f conv
    blocks down to 1x1.  Needs image_size >= 16 so at least one post-concat
    block exists.
    """

    kind = "bigan_discriminator"

    def __init__(self, cfg: ArchitectureConfig, rng: Rng):
        super().__init__(cfg)
        if cfg.image_size < 16:
            raise ValidationError(f"bigan discriminator needs image_size >= 16, got {cfg.image_size}")
        f = cfg.base_width
        self.pre, self.pre_bns = [], []
        c_in = cfg.channels
        for i, c_out in enumerate([f, 2 * f, 4 * f]):
            self.pre.append(Conv(f"pre{i}", c_in, c_out, rng))
            self.pre_bns.append(BatchNorm(f"pre_bn{i}", c_out))
            c_in = c_out
        n_post = (cfg.image_size.bit_length() - 1) - 3  # down to 1x1
        self.post, self.post_bns = [], []
        c_in = 4 * f + cfg.latent_dim
        for i in range(n_post):
            self.post.append(Conv(f"post{i}", c_in, 8 * f, rng))
            self.post_bns.append(BatchNorm(f"post_bn{i}", 8 * f))
            c_in = 8 * f
        self.dense = Dense("dense", 8 * f, 1, rng)
        self._param_layers = ([l for pair in zip(self.pre, self.pre_bns) for l in pair]
                              + [l for pair in zip(self.post, self.post_bns) for l in pair]
                              + [self.dense])
        self._bn_layers = self.pre_bns + self.post_bns

    @property
    def concat_channels(self) -> int:
        return 4 * self.cfg.base_width + self.cfg.latent_dim

    def __call__(self, x: Tensor, z: Tensor, train: bool = False) -> Tensor:
        if z.data.ndim != 2 or z.data.shape[1] != self.cfg.latent_dim:
            raise ShapeError(f"bigan discriminator: latent {z.data.shape} vs expected "
                             f"(B, {self.cfg.latent_dim})")
        for conv, bn in zip(self.pre, self.pre_bns):
            x = ad.lrelu(bn(conv(x), train))
        side = x.data.shape[1]
        x = ad.concat_channels(x, ad.tile_spatial(z, side, side))
        for conv, bn in zip(self.post, self.post_bns):
            x = ad.lrelu(bn(conv(x), train))
        f8 = 8 * self.cfg.base_width
        return ad.sigmoid(self.dense(ad.reshape(x, (-1, f8))))


NETWORK_KINDS = {
    GeneratorNet.kind: GeneratorNet,
    DiscriminatorNet.kind: DiscriminatorNet,
    InverseGeneratorNet.kind: InverseGeneratorNet,
    BiganDiscriminatorNet.kind: BiganDiscriminatorNet,
}


def build_generator(cfg: ArchitectureConfig, rng: Rng) -> GeneratorNet:
    return GeneratorNet(cfg, rng)


def build_discriminator(cfg: ArchitectureConfig, rng: Rng) -> DiscriminatorNet:
    return DiscriminatorNet(cfg, rng)


def build_inverse_generator(cfg: ArchitectureConfig, rng: Rng) -> InverseGeneratorNet:
    return InverseGeneratorNet(cfg, rng)


def build_bigan_discriminator(cfg: ArchitectureConfig, rng: Rng) -> BiganDiscriminatorNet:
    return BiganDiscriminatorNet(cfg, rng)


def build_network(kind: str, cfg: ArchitectureConfig, rng: Rng | None = None) -> Network:
    if kind not in NETWORK_KINDS:
        raise ValidationError(f"unknown network kind {kind!r}")
    return NETWORK_KINDS[kind](cfg, rng if rng is not None else Rng(0))


def sample_prior(rng: Rng, batch: int, latent_dim: int) -> Tensor:
    """i.i.d. uniform latent draws strictly inside (-1, 1)."""
    return Tensor(rng.uniform((batch, latent_dim)), requires_grad=False)
