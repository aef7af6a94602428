"""Perceptual image fingerprints: difference hash, DCT hash, color histograms.

Conventions are fixed so hashes are bit-reproducible across runs and
platforms:

* grayscale is Rec. 601 luma (0.299 R + 0.587 G + 0.114 B);
* thumbnails come from exact box-filter (pixel-area) resampling in float64;
* dhash compares horizontally adjacent pixels of a 9-wide x 8-tall
  thumbnail, bit (row, col) set iff pixel(row, col) > pixel(row, col + 1),
  packed row-major from the most significant bit;
* phash takes the orthonormal 2-D DCT-II of a 32x32 thumbnail, keeps the
  top-left 8x8 coefficient block (DC included), and thresholds at the
  block's median;
* similarity is 1 - Hamming/64, in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .data import resize_area
from .errors import ValidationError


@dataclass(frozen=True)
class HashCode:
    """A 64-bit perceptual hash; equality is bitwise."""

    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << 64):
            raise ValidationError(f"hash code out of 64-bit range: {self.bits}")

    def hex(self) -> str:
        return f"{self.bits:016x}"

    def hamming(self, other: "HashCode") -> int:
        return (self.bits ^ other.bits).bit_count()

    def __str__(self) -> str:
        return self.hex()


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """(H,W,3) or (H,W) floats -> (H,W) float64 luma."""
    img = np.asarray(image, np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 3:
        return img @ np.array([0.299, 0.587, 0.114])
    raise ValidationError(f"expected (H,W) or (H,W,3) image, got shape {img.shape}")


def _check_nonempty(image: np.ndarray) -> None:
    if image.size == 0:
        raise ValidationError("empty image")


def dhash(image: np.ndarray) -> HashCode:
    """Difference hash of the 8x9 luma thumbnail."""
    _check_nonempty(np.asarray(image))
    g = resize_area(to_grayscale(image), 8, 9)
    diff = g[:, :-1] > g[:, 1:]
    bits = 0
    for v in diff.reshape(64):
        bits = (bits << 1) | int(v)
    return HashCode(bits)


@lru_cache(maxsize=4)
def _dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix: D[k, i] = s_k cos(pi (2i+1) k / 2n)."""
    i = np.arange(n)
    d = np.cos(np.pi * (2 * i[None, :] + 1) * i[:, None] / (2 * n))
    d[0] *= np.sqrt(1.0 / n)
    d[1:] *= np.sqrt(2.0 / n)
    return d


def phash(image: np.ndarray) -> HashCode:
    """DCT hash: low-frequency 8x8 block thresholded at its median."""
    _check_nonempty(np.asarray(image))
    g = resize_area(to_grayscale(image), 32, 32)
    d = _dct_matrix(32)
    coeffs = (d @ g @ d.T)[:8, :8].reshape(64)
    bits = 0
    for v in coeffs > np.median(coeffs):
        bits = (bits << 1) | int(v)
    return HashCode(bits)


def hash_similarity(a: HashCode, b: HashCode) -> float:
    """1 - Hamming(a, b) / 64."""
    return 1.0 - a.hamming(b) / 64.0


def color_histogram(image: np.ndarray, bins_per_channel: int = 8) -> np.ndarray:
    """Joint RGB histogram, normalized to sum 1."""
    img = np.asarray(image, np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"color_histogram expects (H,W,3), got shape {img.shape}")
    if img.shape[0] * img.shape[1] == 0:
        raise ValidationError("color_histogram: image has no pixels")
    b = int(bins_per_channel)
    if b < 1:
        raise ValidationError(f"bins_per_channel must be >= 1, got {bins_per_channel}")
    idx = np.minimum((np.clip(img, 0.0, 1.0) * b).astype(np.int64), b - 1)
    joint = (idx[..., 0] * b + idx[..., 1]) * b + idx[..., 2]
    hist = np.bincount(joint.reshape(-1), minlength=b ** 3).astype(np.float64)
    return hist / hist.sum()


def histogram_intersection(h1: np.ndarray, h2: np.ndarray) -> float:
    """Sum of elementwise minima; 1.0 iff the histograms are equal."""
    h1, h2 = np.asarray(h1, np.float64), np.asarray(h2, np.float64)
    if h1.shape != h2.shape:
        raise ValidationError(f"histogram shapes differ: {h1.shape} vs {h2.shape}")
    return float(np.minimum(h1, h2).sum())
