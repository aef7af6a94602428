"""Dataset synthesis, image files, checkpoints, and report plumbing.

Every artifact written here is a pure function of (config, seed, inputs):
image codecs are lossless 8-bit (PNG via Pillow, binary PPM native),
checkpoints store raw little-endian tensors behind a JSON manifest, and the
synthetic shapes dataset is rendered deterministically from per-sample
derived streams.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from . import models
from .errors import ParseError, ShapeError, ValidationError
from .rng import Rng

CHECKPOINT_MAGIC = b"AEGCKPT1"
CHECKPOINT_VERSION = 1

IMAGE_SUFFIXES = (".png", ".ppm")


# ---------------------------------------------------------------------------
# image files


def save_image(path, img: np.ndarray) -> None:
    """Write an (H,W,3) float image in [0,1] as PNG or binary PPM (by suffix)."""
    path = Path(path)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"save_image: expected (H,W,3), got {img.shape}")
    u8 = np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)
    if path.suffix.lower() == ".ppm":
        with open(path, "wb") as f:
            f.write(b"P6\n%d %d\n255\n" % (u8.shape[1], u8.shape[0]))
            f.write(u8.tobytes())
    elif path.suffix.lower() == ".png":
        Image.fromarray(u8, "RGB").save(path, format="PNG")
    else:
        raise ValidationError(f"save_image: unsupported suffix {path.suffix!r} (use .png or .ppm)")


def load_image(path) -> np.ndarray:
    """Read a PNG or binary PPM into an (H,W,3) float32 array in [0,1]."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"image file does not exist: {path}")
    if path.suffix.lower() == ".ppm":
        return _load_ppm(path)
    try:
        with Image.open(path) as im:
            u8 = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as e:
        raise ParseError(f"cannot decode image {path}: {e}") from e
    return u8.astype(np.float32) / 255.0


def _load_ppm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    pos = 0

    def token():
        nonlocal pos
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            return token()
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ParseError(f"{path}: truncated header at byte offset {start}")
        return raw[start:pos]

    if token() != b"P6":
        raise ParseError(f"{path}: not a binary PPM (bad magic at byte offset 0)")
    try:
        w, h, maxval = int(token()), int(token()), int(token())
    except ValueError as e:
        raise ParseError(f"{path}: bad header token at byte offset {pos}: {e}") from e
    if maxval != 255:
        raise ParseError(f"{path}: only maxval 255 supported, got {maxval} at byte offset {pos}")
    pos += 1  # single whitespace after maxval
    need = w * h * 3
    if len(raw) - pos < need:
        raise ParseError(f"{path}: pixel data truncated at byte offset {len(raw)} "
                         f"(need {need} bytes from offset {pos})")
    u8 = np.frombuffer(raw, dtype=np.uint8, count=need, offset=pos).reshape(h, w, 3)
    return u8.astype(np.float32) / 255.0


# ---------------------------------------------------------------------------
# resampling and grids


def _area_weights(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) row-stochastic box-overlap weights."""
    w = np.zeros((n_out, n_in), np.float64)
    scale = n_in / n_out
    for o in range(n_out):
        a, b = o * scale, (o + 1) * scale
        for i in range(int(np.floor(a)), min(int(np.ceil(b)), n_in)):
            w[o, i] = min(b, i + 1) - max(a, i)
    return w / scale


def resize_area(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Box-filter (pixel-area) resample of (H,W) or (H,W,C); deterministic."""
    h, w = img.shape[:2]
    if (h, w) == (out_h, out_w):
        return img.astype(np.float64, copy=True)
    wh = _area_weights(h, out_h)
    ww = _area_weights(w, out_w)
    out = np.tensordot(wh, img.astype(np.float64), axes=(1, 0))
    out = np.tensordot(ww, out, axes=(1, 1))
    return np.swapaxes(out, 0, 1)


def make_grid(rows: list[list[np.ndarray]], pad: int = 2, pad_value: float = 1.0) -> np.ndarray:
    """Montage: one row per list of (H,W,3) images, all the same size."""
    if not rows or not rows[0]:
        raise ValidationError("make_grid: no images")
    h, w = rows[0][0].shape[:2]
    ncol = max(len(r) for r in rows)
    out = np.full(((h + pad) * len(rows) + pad, (w + pad) * ncol + pad, 3),
                  pad_value, np.float32)
    for i, row in enumerate(rows):
        for j, img in enumerate(row):
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            out[y : y + h, x : x + w] = img
    return out


# ---------------------------------------------------------------------------
# synthetic shapes dataset

ATTRIBUTE_NAMES = [
    "shape_circle", "shape_square", "shape_triangle",
    "color_red", "color_green", "color_blue", "color_yellow",
    "size_small", "size_large",
    "quad_tl", "quad_tr", "quad_bl", "quad_br",
]

_PALETTE = np.array([
    [0.88, 0.21, 0.18],  # red
    [0.22, 0.80, 0.26],  # green
    [0.20, 0.38, 0.92],  # blue
    [0.95, 0.87, 0.20],  # yellow
])
_QUAD_CENTERS = np.array([[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]])  # (x, y)


def _shape_distance(shape_idx: int, xx, yy, cx, cy, r):
    """Signed distance, positive inside, in pixel units."""
    if shape_idx == 0:  # circle
        return r - np.hypot(xx - cx, yy - cy)
    if shape_idx == 1:  # axis-aligned square, half-side r
        return r - np.maximum(np.abs(xx - cx), np.abs(yy - cy))
    # equilateral triangle, point up, circumradius r: min over inward
    # half-plane distances (exact inside, conservative past the corners)
    angles = -np.pi / 2 + 2 * np.pi * np.arange(3) / 3
    vx, vy = cx + r * np.cos(angles), cy + r * np.sin(angles)
    d = np.full_like(xx, np.inf, dtype=np.float64)
    for i in range(3):
        ex, ey = vx[(i + 1) % 3] - vx[i], vy[(i + 1) % 3] - vy[i]
        nx, ny = -ey, ex
        norm = np.hypot(nx, ny)
        nx, ny = nx / norm, ny / norm
        if (cx - vx[i]) * nx + (cy - vy[i]) * ny < 0:
            nx, ny = -nx, -ny
        d = np.minimum(d, (xx - vx[i]) * nx + (yy - vy[i]) * ny)
    return d


def render_sample(rng: Rng, image_size: int) -> tuple[np.ndarray, np.ndarray]:
    """One anti-aliased shape image plus its 13-bit attribute vector."""
    s = image_size
    shape_idx = int(rng.integers(1, 3)[0])
    color_idx = int(rng.integers(1, 4)[0])
    size_idx = int(rng.integers(1, 2)[0])
    quad_idx = int(rng.integers(1, 4)[0])

    fill = np.clip(_PALETTE[color_idx] + rng.uniform(3, -0.05, 0.05).astype(np.float64), 0.02, 0.98)
    bg = np.clip(rng.uniform(1, 0.06, 0.30).astype(np.float64)[0]
                 + rng.uniform(3, 0.0, 0.06).astype(np.float64), 0.0, 1.0)
    if size_idx == 0:
        r = float(rng.uniform(1, 0.10, 0.15)[0]) * s
    else:
        r = float(rng.uniform(1, 0.18, 0.24)[0]) * s
    center = _QUAD_CENTERS[quad_idx] * s + rng.uniform(2, -0.06, 0.06).astype(np.float64) * s

    yy, xx = np.mgrid[0:s, 0:s].astype(np.float64) + 0.5
    d = _shape_distance(shape_idx, xx, yy, center[0], center[1], r)
    alpha = np.clip(d + 0.5, 0.0, 1.0)[..., None]
    img = (bg[None, None, :] * (1 - alpha) + fill[None, None, :] * alpha).astype(np.float32)

    attrs = np.zeros(13, np.int64)
    attrs[shape_idx] = 1
    attrs[3 + color_idx] = 1
    attrs[7 + size_idx] = 1
    attrs[9 + quad_idx] = 1
    return img, attrs


def generate_dataset(n: int, image_size: int, seed: int, out_dir,
                     fmt: str = "png") -> list[tuple[str, np.ndarray]]:
    """Render n shape images plus attributes.csv under out_dir; returns (id, attrs)."""
    if n < 1:
        raise ValidationError(f"dataset size must be >= 1, got {n}")
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    root = Rng(seed)
    records = []
    for i in range(n):
        img, attrs = render_sample(root.derive(i), image_size)
        image_id = f"{i:06d}"
        save_image(out_dir / "images" / f"{image_id}.{fmt}", img)
        records.append((image_id, attrs))
    write_csv(out_dir / "attributes.csv", ["id"] + ATTRIBUTE_NAMES,
              [[rid] + [int(v) for v in attrs] for rid, attrs in records])
    return records


def load_attributes(path) -> dict[str, np.ndarray]:
    """attributes.csv -> {image_id: 13-bit vector}."""
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"attribute table does not exist: {path}")
    out = {}
    with open(path, newline="") as f:
        import csv as _csv

        reader = _csv.reader(f)
        header = next(reader)
        if header[1:] != ATTRIBUTE_NAMES:
            raise ValidationError(f"{path}: unexpected attribute columns {header[1:]}")
        for row in reader:
            out[row[0]] = np.array([int(v) for v in row[1:]], np.int64)
    return out


def list_images(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ValidationError(f"image directory does not exist: {directory}")
    sub = directory / "images"
    if sub.is_dir():
        directory = sub
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def load_image_dir(directory, image_size: int) -> tuple[list[str], np.ndarray]:
    """Load every readable image, resized to (image_size, image_size); sorted ids."""
    paths = list_images(directory)
    if not paths:
        raise ValidationError(f"no images under {directory}")
    ids, imgs, skipped = [], [], 0
    for p in paths:
        try:
            img = load_image(p)
        except ParseError as e:
            import logging

            logging.getLogger(__name__).warning("skipping unreadable image: %s", e)
            skipped += 1
            continue
        if img.shape[:2] != (image_size, image_size):
            img = resize_area(img, image_size, image_size)
        ids.append(p.stem)
        imgs.append(np.asarray(img, np.float32))
    if skipped:
        import logging

        logging.getLogger(__name__).warning("skipped %d unreadable image(s)", skipped)
    if not imgs:
        raise ValidationError(f"no readable images under {directory}")
    return ids, np.stack(imgs)


# ---------------------------------------------------------------------------
# CSV reports


def format_value(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(format_value(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class CheckpointBundle:
    net: models.Network
    kind: str
    config: models.ArchitectureConfig
    fingerprint: str
    optimizer_meta: dict | None
    optimizer_arrays: dict[str, np.ndarray]
    extra: dict


def _encode_array(arr: np.ndarray) -> tuple[bytes, str]:
    if arr.dtype.kind == "f":
        canonical = np.ascontiguousarray(arr, dtype="<f4")
        return canonical.tobytes(), "<f4"
    if arr.dtype.kind in "iu":
        canonical = np.ascontiguousarray(arr, dtype="<i8")
        return canonical.tobytes(), "<i8"
    raise ValidationError(f"unsupported checkpoint dtype {arr.dtype}")


def save_checkpoint(path, net: models.Network, optimizer=None, extra: dict | None = None) -> str:
    """Persist params + BN running stats (+ optimizer state); returns the model fingerprint."""
    entries = []
    blobs = []
    offset = 0

    def put(name, arr, section):
        nonlocal offset
        raw, dtype = _encode_array(arr)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype,
                        "offset": offset, "nbytes": len(raw), "section": section})
        blobs.append(raw)
        offset += len(raw)

    for name, arr in net.named_arrays():
        put(name, arr, "model")
    optimizer_meta = None
    if optimizer is not None:
        for name, arr in optimizer.state_arrays().items():
            put(name, arr, "optimizer")
        optimizer_meta = {"type": type(optimizer).__name__.lower(), "t": optimizer.t,
                          "lr": optimizer.lr}
        if hasattr(optimizer, "beta1"):
            optimizer_meta.update(beta1=optimizer.beta1, beta2=optimizer.beta2, eps=optimizer.eps)

    data = b"".join(blobs)
    fingerprint = net.fingerprint()
    header = {
        "version": CHECKPOINT_VERSION,
        "kind": net.kind,
        "config": net.cfg.to_dict(),
        "tensors": entries,
        "optimizer": optimizer_meta,
        "fingerprint": fingerprint,
        "data_sha256": hashlib.sha256(data).hexdigest(),
        "extra": extra or {},
    }
    hjson = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", len(hjson)))
        f.write(hjson)
        f.write(data)
    return fingerprint


def _read_checkpoint_header(path) -> tuple[dict, int]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"checkpoint does not exist: {path}")
    raw = path.read_bytes()
    if len(raw) < len(CHECKPOINT_MAGIC) + 4 or raw[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise ParseError(f"{path}: not a checkpoint (bad magic at byte offset 0)")
    (hlen,) = struct.unpack_from("<I", raw, len(CHECKPOINT_MAGIC))
    start = len(CHECKPOINT_MAGIC) + 4
    if len(raw) < start + hlen:
        raise ParseError(f"{path}: header truncated at byte offset {len(raw)}")
    try:
        header = json.loads(raw[start : start + hlen])
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: corrupt header JSON at byte offset {start + e.pos}") from e
    return header, start + hlen


def checkpoint_fingerprint(path) -> str:
    header, _ = _read_checkpoint_header(path)
    return header["fingerprint"]


def checkpoint_kind(path) -> str:
    header, _ = _read_checkpoint_header(path)
    return header["kind"]


def load_checkpoint(path, expect_kind: str | None = None) -> CheckpointBundle:
    """Rebuild the stored network; verifies integrity before touching the model."""
    header, data_start = _read_checkpoint_header(path)
    raw = Path(path).read_bytes()
    if header["version"] != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: checkpoint version {header['version']} "
                              f"!= supported {CHECKPOINT_VERSION}")
    if expect_kind is not None and header["kind"] != expect_kind:
        raise ValidationError(f"{path}: checkpoint holds a {header['kind']!r} model, "
                              f"expected {expect_kind!r}")
    data = raw[data_start:]
    total = sum(e["nbytes"] for e in header["tensors"])
    if len(data) < total:
        raise ParseError(f"{path}: tensor data truncated at byte offset {len(raw)} "
                         f"(need {total} bytes)")
    if hashlib.sha256(data[:total]).hexdigest() != header["data_sha256"]:
        raise ParseError(f"{path}: tensor data checksum mismatch (file corrupt)")

    arrays: dict[str, np.ndarray] = {}
    opt_arrays: dict[str, np.ndarray] = {}
    for e in header["tensors"]:
        count = int(np.prod(e["shape"], dtype=np.int64)) if e["shape"] else 1
        arr = np.frombuffer(data, dtype=e["dtype"], count=count,
                            offset=e["offset"]).reshape(e["shape"]).copy()
        (opt_arrays if e["section"] == "optimizer" else arrays)[e["name"]] = arr

    cfg = models.ArchitectureConfig.from_dict(header["config"])
    net = models.build_network(header["kind"], cfg)
    net.load_arrays(arrays)
    if net.fingerprint() != header["fingerprint"]:
        raise ParseError(f"{path}: model fingerprint mismatch after load")
    return CheckpointBundle(net=net, kind=header["kind"], config=cfg,
                            fingerprint=header["fingerprint"],
                            optimizer_meta=header["optimizer"], optimizer_arrays=opt_arrays,
                            extra=header.get("extra", {}))


# ---------------------------------------------------------------------------
# fingerprints for run manifests


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_path(path) -> str:
    """File -> content hash; directory -> hash over sorted (relpath, content hash)."""
    path = Path(path)
    if path.is_file():
        return sha256_file(path)
    if path.is_dir():
        h = hashlib.sha256()
        for p in sorted(path.rglob("*")):
            if p.is_file():
                h.update(str(p.relative_to(path)).encode())
                h.update(b"\0")
                h.update(sha256_file(p).encode())
        return h.hexdigest()
    raise ValidationError(f"input path does not exist: {path}")
