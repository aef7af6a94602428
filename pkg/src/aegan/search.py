"""Latent-space image search and blur-removal reconstruction.

An index maps image ids to their encoded latents; queries are exact
k-nearest-neighbor scans by Euclidean distance, with ties broken by
ascending id so rankings are reproducible.  Baseline searches rank by
perceptual-hash similarity or color-histogram intersection over the same
corpus.  Blur removal projects a degraded image onto the generator
manifold: decode its encoding.

Index file layout (version AEGIDX1): magic ``AEGIDX1``, u32le record
count, u32le latent_dim, 32-byte model fingerprint, then per record a
u32le id length, the UTF-8 id bytes, and latent_dim little-endian float32
components.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data as dataio
from . import hashing
from .autodiff import Tensor
from .errors import ParseError, ShapeError, ValidationError
from .inversion import encode_images
from .models import GeneratorNet, InverseGeneratorNet

log = logging.getLogger(__name__)

INDEX_MAGIC = b"AEGIDX1"

SEARCH_METHODS = ("aegan", "dhash", "phash", "hist")


@dataclass
class LatentIndex:
    ids: list[str]
    vectors: np.ndarray        # (N, latent_dim) float32
    fingerprint: str           # hex sha256 of the embedding model

    def __post_init__(self):
        if len(self.ids) != len(self.vectors):
            raise ValidationError(f"index ids ({len(self.ids)}) vs vectors ({len(self.vectors)})")

    def __len__(self) -> int:
        return len(self.ids)

    def save(self, path) -> None:
        with open(path, "wb") as f:
            f.write(INDEX_MAGIC)
            f.write(struct.pack("<II", len(self.ids), self.vectors.shape[1]))
            f.write(bytes.fromhex(self.fingerprint))
            for image_id, vec in zip(self.ids, self.vectors):
                raw = image_id.encode()
                f.write(struct.pack("<I", len(raw)))
                f.write(raw)
                f.write(np.ascontiguousarray(vec, "<f4").tobytes())

    @staticmethod
    def load(path) -> "LatentIndex":
        path = Path(path)
        if not path.exists():
            raise ValidationError(f"index file does not exist: {path}")
        raw = path.read_bytes()
        if len(raw) < len(INDEX_MAGIC) + 8 + 32 or raw[: len(INDEX_MAGIC)] != INDEX_MAGIC:
            raise ParseError(f"{path}: not a latent index (bad magic at byte offset 0)")
        count, latent_dim = struct.unpack_from("<II", raw, len(INDEX_MAGIC))
        pos = len(INDEX_MAGIC) + 8
        fingerprint = raw[pos : pos + 32].hex()
        pos += 32
        ids, vectors = [], np.empty((count, latent_dim), np.float32)
        for i in range(count):
            if len(raw) < pos + 4:
                raise ParseError(f"{path}: record {i} truncated at byte offset {len(raw)}")
            (id_len,) = struct.unpack_from("<I", raw, pos)
            pos += 4
            need = id_len + latent_dim * 4
            if len(raw) < pos + need:
                raise ParseError(f"{path}: record {i} truncated at byte offset {len(raw)}")
            ids.append(raw[pos : pos + id_len].decode())
            pos += id_len
            vectors[i] = np.frombuffer(raw, "<f4", latent_dim, pos)
            pos += latent_dim * 4
        return LatentIndex(ids=ids, vectors=vectors, fingerprint=fingerprint)


@dataclass
class QueryResult:
    query_id: str | None
    method: str
    k: int
    entries: list[tuple[str, float]]   # ranked (image_id, distance or similarity)
    ascending: bool                    # True: smaller is better (distances)

    @property
    def value_name(self) -> str:
        return "distance" if self.ascending else "similarity"


def _rank(pairs: list[tuple[str, float]], k: int, ascending: bool) -> list[tuple[str, float]]:
    key = (lambda p: (p[1], p[0])) if ascending else (lambda p: (-p[1], p[0]))
    return sorted(pairs, key=key)[:k]


def build_index(enc: InverseGeneratorNet, corpus_dir, batch: int = 1) -> LatentIndex:
    """Encode every image in a directory (resized on ingest); deterministic order.

    Encoding runs one image at a time by default: the dense head's BLAS path
    is not bit-stable across batch shapes, and a member query must land at
    distance exactly zero.
    """
    ids, images = dataio.load_image_dir(corpus_dir, enc.cfg.image_size)
    vectors = encode_images(enc, images, batch)
    return LatentIndex(ids=ids, vectors=vectors.astype(np.float32),
                       fingerprint=enc.fingerprint())


def _prep_query(image: np.ndarray, image_size: int) -> np.ndarray:
    img = np.asarray(image, np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"query image must be (H,W,3), got {img.shape}")
    if img.shape[:2] != (image_size, image_size):
        img = np.asarray(dataio.resize_area(img, image_size, image_size), np.float32)
    lo, hi = float(img.min()), float(img.max())
    if lo < 0.0 or hi > 1.0:
        img = (img - lo) / max(hi - lo, 1e-12)
    return img


def search(index: LatentIndex, enc: InverseGeneratorNet, query_image: np.ndarray, k: int,
           query_id: str | None = None) -> QueryResult:
    """Exact k-nearest neighbors by Euclidean distance between latents."""
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    if enc.fingerprint() != index.fingerprint:
        raise ValidationError(
            f"index was built with a different model (index fingerprint "
            f"{index.fingerprint[:12]}..., encoder {enc.fingerprint()[:12]}...)")
    if k > len(index):
        log.warning("k=%d exceeds index size %d; returning the full ranking", k, len(index))
        k = len(index)
    img = _prep_query(query_image, enc.cfg.image_size)
    zq = enc(Tensor(img[None]), train=False).data[0].astype(np.float64)
    d = np.sqrt(np.sum((index.vectors.astype(np.float64) - zq) ** 2, axis=1))
    pairs = list(zip(index.ids, d.tolist()))
    return QueryResult(query_id=query_id, method="aegan", k=k,
                       entries=_rank(pairs, k, ascending=True), ascending=True)


def search_baselines(corpus_dir, query_image: np.ndarray, k: int, method: str,
                     query_id: str | None = None) -> QueryResult:
    """Rank a corpus against the query by dhash/phash similarity or
    histogram intersection (descending)."""
    if method not in ("dhash", "phash", "hist"):
        raise ValidationError(f"unknown baseline method {method!r} (dhash|phash|hist)")
    if k < 1:
        raise ValidationError(f"k must be >= 1, got {k}")
    paths = dataio.list_images(corpus_dir)
    if not paths:
        raise ValidationError(f"no images under {corpus_dir}")
    if k > len(paths):
        log.warning("k=%d exceeds corpus size %d; returning the full ranking", k, len(paths))
        k = len(paths)
    query = np.asarray(query_image, np.float64)
    pairs = []
    if method == "hist":
        hq = hashing.color_histogram(query)
        for p in paths:
            pairs.append((p.stem, hashing.histogram_intersection(
                hq, hashing.color_histogram(dataio.load_image(p)))))
    else:
        fn = hashing.dhash if method == "dhash" else hashing.phash
        hq = fn(query)
        for p in paths:
            pairs.append((p.stem, hashing.hash_similarity(hq, fn(dataio.load_image(p)))))
    return QueryResult(query_id=query_id, method=method, k=k,
                       entries=_rank(pairs, k, ascending=False), ascending=False)


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur, kernel truncated at radius ceil(3 sigma) and
    renormalized; edges clamp."""
    if sigma <= 0:
        raise ValidationError(f"sigma must be > 0, got {sigma}")
    img = np.asarray(image)
    radius = int(np.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1)
    kernel = np.exp(-0.5 * (offsets / sigma) ** 2)
    kernel /= kernel.sum()
    out = img.astype(np.float64)
    for axis in (0, 1):
        padding = [(0, 0)] * out.ndim
        padding[axis] = (radius, radius)
        padded = np.pad(out, padding, mode="edge")
        acc = np.zeros_like(out)
        for i, w in enumerate(kernel):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(i, i + out.shape[axis])
            acc += w * padded[tuple(sl)]
        out = acc
    return out.astype(img.dtype) if img.dtype == np.float32 else out


def super_resolve(gen: GeneratorNet, enc: InverseGeneratorNet,
                  degraded_image: np.ndarray) -> np.ndarray:
    """Project a degraded image onto the generator manifold: G(IG(x))."""
    img = np.asarray(degraded_image, np.float32)
    expect = (gen.cfg.image_size, gen.cfg.image_size, gen.cfg.channels)
    if img.shape != expect:
        raise ShapeError(f"super_resolve: image {img.shape} vs model resolution {expect}")
    z = enc(Tensor(img[None]), train=False)
    return gen(z, train=False).data[0]


def label_similarity(result: QueryResult, attributes: dict[str, np.ndarray]) -> float:
    """Mean fraction of attribute bits the retrieved images share with the query."""
    if result.query_id is None:
        raise ValidationError("label_similarity needs a query with a known id")
    if result.query_id not in attributes:
        raise ValidationError(f"no attributes for query {result.query_id!r}")
    if not result.entries:
        raise ValidationError("label_similarity: empty result set")
    q = np.asarray(attributes[result.query_id])
    scores = []
    for image_id, _ in result.entries:
        if image_id not in attributes:
            raise ValidationError(f"no attributes for retrieved image {image_id!r}")
        a = np.asarray(attributes[image_id])
        if a.shape != q.shape:
            raise ValidationError(f"attribute length mismatch for {image_id!r}")
        scores.append(float(np.mean(a == q)))
    return float(np.mean(scores))


def write_query_csv(path, result: QueryResult) -> None:
    rows = [(rank + 1, image_id, value)
            for rank, (image_id, value) in enumerate(result.entries)]
    dataio.write_csv(path, ["rank", "id", result.value_name], rows)
